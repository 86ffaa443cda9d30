import { EntityTypeInfo } from "./types.js";

const GROUP_ORDER: EntityTypeInfo["group"][] = [
  "name",
  "location",
  "organisation",
  "other",
];

export interface PickerHooks {
  isSelected(id: string): boolean;
  onToggle(id: string): void;
  onSelectDataset(dataset: string): void;
}

/** Grouped chip panel: one quadrant per group, chips colour-coded by
 * granularity, plus select-all-per-dataset shortcuts. */
export function renderEntityPicker(
  root: HTMLElement,
  types: EntityTypeInfo[],
  hooks: PickerHooks,
): void {
  root.innerHTML = "";
  if (types.length === 0) {
    return;
  }

  const datasets = Array.from(new Set(types.flatMap((t) => t.datasets))).sort();
  const shortcuts = document.createElement("div");
  shortcuts.className = "dataset-shortcuts";
  for (const ds of datasets) {
    const btn = document.createElement("button");
    btn.type = "button";
    btn.className = "dataset-all";
    btn.dataset.dataset = ds;
    btn.textContent = `all of ${ds}`;
    btn.addEventListener("click", () => hooks.onSelectDataset(ds));
    shortcuts.appendChild(btn);
  }
  root.appendChild(shortcuts);

  const quadrants = document.createElement("div");
  quadrants.className = "picker-quadrants";
  for (const group of GROUP_ORDER) {
    const members = types.filter((t) => t.group === group);
    if (members.length === 0) {
      continue;
    }
    const panel = document.createElement("section");
    panel.className = "picker-group";
    panel.dataset.group = group;
    const title = document.createElement("h3");
    title.textContent = group;
    panel.appendChild(title);
    for (const t of members) {
      const chip = document.createElement("button");
      chip.type = "button";
      chip.className = `chip granularity-${t.granularity}`;
      chip.dataset.entityId = t.id;
      chip.setAttribute("aria-pressed", String(hooks.isSelected(t.id)));
      if (hooks.isSelected(t.id)) {
        chip.classList.add("selected");
      }
      chip.textContent = t.alias ?? t.id;
      chip.title = t.prompt_name; // native-language prompt name as tooltip
      chip.addEventListener("click", () => hooks.onToggle(t.id));
      panel.appendChild(chip);
    }
    quadrants.appendChild(panel);
  }
  root.appendChild(quadrants);
}
