import { ApiClient, ApiError, buildRequestBody } from "./api.js";
import { renderHighlights } from "./highlight.js";
import { renderEntityPicker } from "./picker.js";
import { UiState } from "./state.js";

/** The whole demo wired onto a root element. Kept framework-free so tests
 * can drive it directly against a mocked fetch. */
export class App {
  readonly state = new UiState();
  private pending = false;

  private picker: HTMLElement;
  private textarea: HTMLTextAreaElement;
  private submit: HTMLButtonElement;
  private result: HTMLElement;
  private historyEl: HTMLElement;
  private banner: HTMLElement;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
  ) {
    root.innerHTML = `
      <div class="banner" hidden></div>
      <div class="picker"></div>
      <textarea class="text-input" rows="3"
        placeholder="Type a sentence, pick entity types, submit."></textarea>
      <button type="button" class="submit" disabled>extract</button>
      <div class="result"></div>
      <aside class="history"><h3>history</h3><ol></ol></aside>
    `;
    this.banner = root.querySelector(".banner") as HTMLElement;
    this.picker = root.querySelector(".picker") as HTMLElement;
    this.textarea = root.querySelector(".text-input") as HTMLTextAreaElement;
    this.submit = root.querySelector(".submit") as HTMLButtonElement;
    this.result = root.querySelector(".result") as HTMLElement;
    this.historyEl = root.querySelector(".history ol") as HTMLElement;

    this.textarea.addEventListener("input", () => {
      this.state.text = this.textarea.value;
      this.refreshControls();
    });
    this.submit.addEventListener("click", () => {
      void this.submitQuery();
    });
  }

  async start(): Promise<void> {
    try {
      this.state.setKnown(await this.api.entityTypes());
      this.renderPicker();
    } catch (err) {
      this.showBanner(`entity types unavailable: ${describe(err)}`);
      this.picker.innerHTML = "";
      this.submit.disabled = true;
    }
  }

  private showBanner(message: string): void {
    this.banner.textContent = message;
    this.banner.hidden = false;
  }

  private clearBanner(): void {
    this.banner.hidden = true;
    this.banner.textContent = "";
  }

  renderPicker(): void {
    renderEntityPicker(this.picker, this.state.known, {
      isSelected: (id) => this.state.isSelected(id),
      onToggle: (id) => {
        this.state.toggle(id);
        this.renderPicker();
        this.refreshControls();
      },
      onSelectDataset: (ds) => {
        this.state.selectDataset(ds);
        this.renderPicker();
        this.refreshControls();
      },
    });
  }

  refreshControls(): void {
    this.textarea.value = this.state.text;
    this.submit.disabled = this.pending || !this.state.canSubmit();
  }

  /** Submit the current state; no request leaves when validation fails. */
  async submitQuery(): Promise<void> {
    if (this.pending || !this.state.canSubmit()) {
      return;
    }
    const body = buildRequestBody(this.state.text, [...this.state.selected]);
    await this.send(body, this.state.text, [...this.state.selected]);
  }

  /** Re-issue a history entry's stored request bytes verbatim. */
  async replay(index: number): Promise<void> {
    if (this.pending) {
      return;
    }
    const entry = this.state.restore(index);
    this.renderPicker();
    this.refreshControls();
    await this.send(entry.body, entry.text, [...entry.entityTypes]);
  }

  private async send(body: string, text: string, types: string[]): Promise<void> {
    this.pending = true; // one in-flight request at a time
    this.refreshControls();
    this.clearBanner();
    try {
      const response = await this.api.nerRaw(body);
      this.state.lastResponse = response;
      renderHighlights(this.result, text, response);
      this.state.pushHistory({ text, entityTypes: types, body, response });
      this.renderHistory();
    } catch (err) {
      this.showBanner(describe(err)); // failures keep current state intact
    } finally {
      this.pending = false;
      this.refreshControls();
    }
  }

  renderHistory(): void {
    this.historyEl.innerHTML = "";
    this.state.history.forEach((entry, index) => {
      const li = document.createElement("li");
      const btn = document.createElement("button");
      btn.type = "button";
      btn.className = "history-row";
      btn.dataset.index = String(index);
      btn.textContent = `[${entry.entityTypes.join(", ")}] ${entry.text}`;
      btn.addEventListener("click", () => {
        void this.replay(index);
      });
      li.appendChild(btn);
      this.historyEl.appendChild(li);
    });
  }
}

function describe(err: unknown): string {
  if (err instanceof ApiError) {
    return `request failed (${err.status}): ${JSON.stringify(err.detail)}`;
  }
  return err instanceof Error ? err.message : String(err);
}
