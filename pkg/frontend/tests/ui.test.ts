import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient, buildRequestBody } from "../src/api.js";
import { App } from "../src/app.js";
import { EntityTypeInfo, NerResponse } from "../src/types.js";

const TEXT = "Tom will go to the zoo tomorrow.";

const TYPES: EntityTypeInfo[] = [
  { id: "name", dataset_tag: "name", prompt_name: "name", alias: "name",
    group: "name", granularity: "coarse", datasets: ["demo"] },
  { id: "location", dataset_tag: "location", prompt_name: "location",
    alias: "location", group: "location", granularity: "coarse", datasets: ["demo"] },
  { id: "time", dataset_tag: "time", prompt_name: "time", alias: "time",
    group: "other", granularity: "coarse", datasets: ["demo"] },
  { id: "company", dataset_tag: "company", prompt_name: "company",
    alias: "company", group: "organisation", granularity: "fine", datasets: ["demo"] },
];

// canned responses in the style of the three-panel on-demand example:
// same text, different prompts, different results (incl. the NULL case)
const CANNED: Record<string, NerResponse> = {
  name: {
    mentions: [{ type: "name", text: "Tom", start: 0, end: 3 }],
    null_types: [],
    raw_target: "((name):(Tom))",
    parse_valid: true,
  },
  "time,location": {
    mentions: [
      { type: "time", text: "tomorrow", start: 23, end: 31 },
      { type: "location", text: "zoo", start: 19, end: 22 },
    ],
    null_types: [],
    raw_target: "((time):(tomorrow),(location):(zoo))",
    parse_valid: true,
  },
  company: {
    mentions: [],
    null_types: ["company"],
    raw_target: "((company):(NULL))",
    parse_valid: true,
  },
};

let requests: { url: string; body?: string }[] = [];

function mockFetch(
  nerResponse?: (body: string) => NerResponse | { status: number; detail: unknown },
) {
  requests = [];
  vi.stubGlobal(
    "fetch",
    vi.fn(async (url: string, init?: RequestInit) => {
      const body = init?.body as string | undefined;
      requests.push({ url: String(url), body });
      if (String(url).endsWith("/api/entity-types")) {
        return new Response(JSON.stringify(TYPES), { status: 200 });
      }
      const parsed = JSON.parse(body ?? "{}");
      const key = (parsed.entity_types as string[]).join(",");
      const custom = nerResponse?.(body ?? "");
      if (custom && "status" in custom) {
        return new Response(JSON.stringify({ detail: custom.detail }), {
          status: custom.status,
        });
      }
      const canned = custom ?? CANNED[key];
      if (!canned) {
        return new Response(JSON.stringify({ detail: "no canned response" }), {
          status: 400,
        });
      }
      return new Response(JSON.stringify(canned), { status: 200 });
    }),
  );
}

async function makeApp(): Promise<App> {
  document.body.innerHTML = '<div id="app"></div>';
  const app = new App(
    document.getElementById("app") as HTMLElement,
    new ApiClient(""),
  );
  await app.start();
  return app;
}

function chip(id: string): HTMLButtonElement {
  return document.querySelector(
    `button.chip[data-entity-id="${id}"]`,
  ) as HTMLButtonElement;
}

beforeEach(() => mockFetch());
afterEach(() => vi.unstubAllGlobals());

describe("entity picker", () => {
  it("renders chips grouped into the four groups", async () => {
    await makeApp();
    const groups = Array.from(
      document.querySelectorAll(".picker-group"),
    ).map((el) => (el as HTMLElement).dataset.group);
    expect(groups).toEqual(["name", "location", "organisation", "other"]);
    expect(chip("name")).toBeTruthy();
    expect(chip("company").className).toContain("granularity-fine");
  });

  it("shows an error banner and disables the picker when the API is down", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => new Response("boom", { status: 500 })));
    await makeApp();
    const banner = document.querySelector(".banner") as HTMLElement;
    expect(banner.hidden).toBe(false);
    expect(document.querySelectorAll(".chip").length).toBe(0);
  });

  it("select-all-per-dataset selects every chip of that dataset", async () => {
    const app = await makeApp();
    (document.querySelector('button.dataset-all[data-dataset="demo"]') as
      HTMLButtonElement).click();
    expect(app.state.selected).toEqual(["name", "location", "time", "company"]);
  });
});

describe("request construction", () => {
  it("toggling chips changes the request body's entity_types exactly", async () => {
    const app = await makeApp();
    app.state.text = TEXT;
    chip("name").click();
    await app.submitQuery();
    expect(JSON.parse(requests.at(-1)!.body!).entity_types).toEqual(["name"]);

    chip("name").click(); // deselect
    chip("time").click();
    chip("location").click();
    await app.submitQuery();
    expect(JSON.parse(requests.at(-1)!.body!).entity_types).toEqual([
      "time",
      "location",
    ]);
  });

  it("submits nothing when no type is selected or text is empty", async () => {
    const app = await makeApp();
    const before = requests.length;
    app.state.text = TEXT; // no selection
    await app.submitQuery();
    app.state.text = ""; // selection but no text
    chip("name").click();
    await app.submitQuery();
    expect(requests.length).toBe(before);
  });
});

describe("highlights", () => {
  it("renders marks exactly at API-provided offsets", async () => {
    const app = await makeApp();
    app.state.text = TEXT;
    chip("time").click();
    chip("location").click();
    await app.submitQuery();
    const marks = Array.from(document.querySelectorAll("mark.mention"));
    expect(
      marks.map((m) => [
        (m as HTMLElement).dataset.type,
        (m as HTMLElement).dataset.start,
        (m as HTMLElement).dataset.end,
      ]),
    ).toEqual([
      ["location", "19", "22"],
      ["time", "23", "31"],
    ]);
    // the highlighted text is the API's slice, never recomputed
    expect(marks.map((m) => m.childNodes[0].textContent)).toEqual([
      "zoo",
      "tomorrow",
    ]);
  });

  it("lists NULL types beside the text (absent-entity case)", async () => {
    const app = await makeApp();
    app.state.text = TEXT;
    chip("company").click();
    await app.submitQuery();
    expect(document.querySelector(".null-types")?.textContent).toContain("company");
    expect(document.querySelectorAll("mark.mention").length).toBe(0);
  });

  it("renders the warning path when parse_valid is false", async () => {
    mockFetch(() => ({
      mentions: [],
      null_types: [],
      raw_target: "((name):(Tom",
      parse_valid: false,
    }));
    const app = await makeApp();
    app.state.text = TEXT;
    chip("name").click();
    await app.submitQuery();
    expect(document.querySelector(".parse-warning")).toBeTruthy();
    expect(document.querySelector(".raw-target code")?.textContent).toBe(
      "((name):(Tom",
    );
  });

  it("renders API errors inline without losing state", async () => {
    mockFetch(() => ({ status: 422, detail: { raw_target: "garbage" } }));
    const app = await makeApp();
    app.state.text = TEXT;
    chip("name").click();
    await app.submitQuery();
    expect((document.querySelector(".banner") as HTMLElement).hidden).toBe(false);
    expect(app.state.text).toBe(TEXT);
    expect(app.state.selected).toEqual(["name"]);
  });
});

describe("history", () => {
  it("same text with different prompt sets yields two history entries", async () => {
    const app = await makeApp();
    app.state.text = TEXT;
    chip("name").click();
    await app.submitQuery();
    chip("name").click();
    chip("time").click();
    chip("location").click();
    await app.submitQuery();
    expect(app.state.history.length).toBe(2);
    expect(app.state.history[0].response.raw_target).not.toBe(
      app.state.history[1].response.raw_target,
    );
    expect(document.querySelectorAll(".history-row").length).toBe(2);
  });

  it("replaying a history row issues a byte-identical request body", async () => {
    const app = await makeApp();
    app.state.text = TEXT;
    chip("time").click();
    chip("location").click();
    await app.submitQuery();
    const stored = app.state.history[0].body;
    // mutate state, then replay entry 0
    app.state.text = "something else";
    app.state.clearSelection();
    await app.replay(0);
    expect(requests.at(-1)!.body).toBe(stored);
    // restore also brings back text and selection for the next query
    expect(app.state.text).toBe(TEXT);
    expect(app.state.selected).toEqual(["time", "location"]);
  });

  it("bounds the history length", async () => {
    const app = await makeApp();
    app.state.text = TEXT;
    chip("name").click();
    for (let i = 0; i < 25; i++) {
      await app.submitQuery();
    }
    expect(app.state.history.length).toBeLessThanOrEqual(20);
  });
});

describe("request body serializer", () => {
  it("is stable for identical inputs", () => {
    const a = buildRequestBody(TEXT, ["time", "location"]);
    const b = buildRequestBody(TEXT, ["time", "location"]);
    expect(a).toBe(b);
    expect(JSON.parse(a)).toEqual({
      text: TEXT,
      entity_types: ["time", "location"],
      decode_mode: "beam",
    });
  });
});
