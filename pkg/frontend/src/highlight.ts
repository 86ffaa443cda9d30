import { MentionOut, NerResponse } from "./types.js";

/** Render the text with grounded mentions wrapped in type-coloured marks.
 * Only offsets returned by the API are used; ungrounded payloads and NULL
 * types are listed beside the text instead. */
export function renderHighlights(
  root: HTMLElement,
  text: string,
  response: NerResponse,
): void {
  root.innerHTML = "";

  const grounded = response.mentions
    .filter((m): m is MentionOut & { start: number; end: number } =>
      m.start !== null && m.end !== null,
    )
    .sort((a, b) => a.start - b.start);

  const para = document.createElement("p");
  para.className = "annotated-text";
  let cursor = 0;
  for (const m of grounded) {
    if (m.start < cursor) {
      continue; // overlap would mean a server bug; never re-derive offsets
    }
    if (m.start > cursor) {
      para.appendChild(document.createTextNode(text.slice(cursor, m.start)));
    }
    const mark = document.createElement("mark");
    mark.className = `mention mention-${m.type}`;
    mark.dataset.type = m.type;
    mark.dataset.start = String(m.start);
    mark.dataset.end = String(m.end);
    mark.textContent = text.slice(m.start, m.end);
    const tag = document.createElement("sup");
    tag.className = "mention-tag";
    tag.textContent = m.type;
    mark.appendChild(tag);
    para.appendChild(mark);
    cursor = m.end;
  }
  if (cursor < text.length) {
    para.appendChild(document.createTextNode(text.slice(cursor)));
  }
  root.appendChild(para);

  const aside = document.createElement("div");
  aside.className = "result-aside";

  const ungrounded = response.mentions.filter(
    (m) => m.start === null || m.end === null,
  );
  if (ungrounded.length > 0) {
    const ul = document.createElement("div");
    ul.className = "ungrounded";
    ul.textContent =
      "not found in text: " +
      ungrounded.map((m) => `${m.type}: "${m.text}"`).join(", ");
    aside.appendChild(ul);
  }
  if (response.null_types.length > 0) {
    const nulls = document.createElement("div");
    nulls.className = "null-types";
    nulls.textContent = "absent (NULL): " + response.null_types.join(", ");
    aside.appendChild(nulls);
  }

  if (!response.parse_valid) {
    const warn = document.createElement("div");
    warn.className = "parse-warning";
    warn.setAttribute("role", "alert");
    warn.textContent = "warning: generation did not fully parse";
    aside.appendChild(warn);
  }

  const details = document.createElement("details");
  details.className = "raw-target";
  const summary = document.createElement("summary");
  summary.textContent = "raw model output";
  const code = document.createElement("code");
  code.textContent = response.raw_target;
  details.appendChild(summary);
  details.appendChild(code);
  aside.appendChild(details);

  root.appendChild(aside);
}
