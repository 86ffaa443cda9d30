import { EntityTypeInfo, HistoryEntry, NerResponse } from "./types.js";

export const HISTORY_LIMIT = 20;

/** Client-side state: current text, selected entity ids (in toggle order),
 * the last response, and a bounded request history. */
export class UiState {
  text = "";
  selected: string[] = [];
  lastResponse: NerResponse | null = null;
  history: HistoryEntry[] = [];
  known: EntityTypeInfo[] = [];

  setKnown(types: EntityTypeInfo[]): void {
    this.known = types;
    const ids = new Set(types.map((t) => t.id));
    this.selected = this.selected.filter((id) => ids.has(id));
  }

  isSelected(id: string): boolean {
    return this.selected.includes(id);
  }

  toggle(id: string): void {
    if (!this.known.some((t) => t.id === id)) {
      return; // selection must stay within the served entity list
    }
    const at = this.selected.indexOf(id);
    if (at >= 0) {
      this.selected.splice(at, 1);
    } else {
      this.selected.push(id);
    }
  }

  selectDataset(dataset: string): void {
    for (const t of this.known) {
      if (t.datasets.includes(dataset) && !this.isSelected(t.id)) {
        this.selected.push(t.id);
      }
    }
  }

  clearSelection(): void {
    this.selected = [];
  }

  canSubmit(): boolean {
    return this.text.length > 0 && this.selected.length > 0;
  }

  pushHistory(entry: HistoryEntry): void {
    this.history.push(entry);
    if (this.history.length > HISTORY_LIMIT) {
      this.history.splice(0, this.history.length - HISTORY_LIMIT);
    }
  }

  /** Restore text and selection from a history row for the next query. */
  restore(index: number): HistoryEntry {
    const entry = this.history[index];
    this.text = entry.text;
    this.selected = [...entry.entityTypes];
    this.lastResponse = entry.response;
    return entry;
  }
}
