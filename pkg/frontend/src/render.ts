import { PendingItem } from "./types.js";
import { AnnotationView } from "./view.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const PLOT_SIZE = 420;
const POINT_COLORS = [
  "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1",
  "#76b7b2", "#edc948", "#ff9da7", "#9c755f", "#bab0ac",
];

export interface RenderHandlers {
  onSelect(sampleId: number): void;
  onAssign(sampleId: number, label: string): void;
  onDeclareClass(name: string): void;
  onSubmit(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

function colorFor(view: AnnotationView, label: string | undefined): string {
  if (label === undefined) return "#d0d0d0";
  const index = view.palette.indexOf(label);
  return POINT_COLORS[index % POINT_COLORS.length] ?? "#d0d0d0";
}

function plotScale(items: readonly PendingItem[]): (p: [number, number]) => [number, number] {
  const xs = items.map((item) => item.projection[0]);
  const ys = items.map((item) => item.projection[1]);
  const [minX, maxX] = [Math.min(...xs), Math.max(...xs)];
  const [minY, maxY] = [Math.min(...ys), Math.max(...ys)];
  const pad = 18;
  const span = Math.max(maxX - minX, maxY - minY) || 1;
  const scale = (PLOT_SIZE - 2 * pad) / span;
  return ([x, y]) => [pad + (x - minX) * scale, PLOT_SIZE - pad - (y - minY) * scale];
}

/** Scatter of the batch's 2-D projections. Representative samples draw as
 * circles, informative ones as diamonds; fill shows the draft label. */
function renderScatter(doc: Document, view: AnnotationView, handlers: RenderHandlers): SVGSVGElement {
  const svg = doc.createElementNS(SVG_NS, "svg");
  svg.setAttribute("id", "scatter");
  svg.setAttribute("viewBox", `0 0 ${PLOT_SIZE} ${PLOT_SIZE}`);
  svg.setAttribute("width", String(PLOT_SIZE));
  svg.setAttribute("height", String(PLOT_SIZE));
  const items = view.pending?.items ?? [];
  if (!items.length) return svg;
  const project = plotScale(items);
  for (const item of items) {
    const [cx, cy] = project(item.projection);
    const selected = view.selection === item.sample_id;
    const rejected = view.rejectedIds.includes(item.sample_id);
    const fill = colorFor(view, view.drafts.get(item.sample_id));
    let shape: SVGElement;
    if (item.kind === "representative") {
      shape = doc.createElementNS(SVG_NS, "circle");
      shape.setAttribute("cx", String(cx));
      shape.setAttribute("cy", String(cy));
      shape.setAttribute("r", selected ? "9" : "6");
    } else {
      shape = doc.createElementNS(SVG_NS, "rect");
      const side = selected ? 13 : 9;
      shape.setAttribute("x", String(cx - side / 2));
      shape.setAttribute("y", String(cy - side / 2));
      shape.setAttribute("width", String(side));
      shape.setAttribute("height", String(side));
      shape.setAttribute("transform", `rotate(45 ${cx} ${cy})`);
    }
    shape.setAttribute("class", `point kind-${item.kind}${selected ? " selected" : ""}`);
    shape.setAttribute("data-sample-id", String(item.sample_id));
    shape.setAttribute("fill", fill);
    shape.setAttribute("stroke", rejected ? "#d62728" : selected ? "#111" : "#555");
    shape.setAttribute("stroke-width", rejected || selected ? "2.5" : "1");
    shape.addEventListener("click", () => handlers.onSelect(item.sample_id));
    svg.appendChild(shape);
  }
  return svg;
}

function renderLegend(doc: Document): HTMLElement {
  const legend = el(doc, "div", { id: "legend" });
  legend.appendChild(el(doc, "span", { class: "legend-entry", "data-kind": "representative" }, "● representative"));
  legend.appendChild(el(doc, "span", { class: "legend-entry", "data-kind": "informative" }, "◆ informative"));
  return legend;
}

function renderTable(doc: Document, view: AnnotationView, handlers: RenderHandlers): HTMLElement {
  const table = el(doc, "table", { id: "batch-table" });
  const head = el(doc, "tr");
  for (const title of ["id", "kind", "cluster", "features", "label"]) {
    head.appendChild(el(doc, "th", {}, title));
  }
  table.appendChild(head);
  for (const item of view.pending?.items ?? []) {
    const row = el(doc, "tr", { class: "batch-row", "data-sample-id": String(item.sample_id) });
    if (view.selection === item.sample_id) row.classList.add("selected");
    if (view.rejectedIds.includes(item.sample_id)) row.classList.add("rejected");
    row.appendChild(el(doc, "td", {}, String(item.sample_id)));
    row.appendChild(el(doc, "td", {}, item.kind));
    row.appendChild(el(doc, "td", {}, String(item.cluster)));
    row.appendChild(el(doc, "td", {}, item.features.map((v) => v.toFixed(3)).join(", ")));
    row.appendChild(el(doc, "td", { class: "draft" }, view.drafts.get(item.sample_id) ?? ""));
    row.addEventListener("click", () => handlers.onSelect(item.sample_id));
    table.appendChild(row);
  }
  return table;
}

function renderPalette(doc: Document, view: AnnotationView, handlers: RenderHandlers): HTMLElement {
  const palette = el(doc, "div", { id: "palette" });
  view.palette.forEach((name, index) => {
    const button = el(doc, "button", { class: "class-button", "data-label": name });
    button.textContent = index < 9 ? `[${index + 1}] ${name}` : name;
    button.addEventListener("click", () => {
      if (view.selection !== null) handlers.onAssign(view.selection, name);
    });
    palette.appendChild(button);
  });
  const input = el(doc, "input", {
    id: "new-class-input",
    placeholder: "new class…",
    type: "text",
  });
  const add = el(doc, "button", { id: "new-class-button" }, "declare");
  add.addEventListener("click", () => {
    handlers.onDeclareClass((input as HTMLInputElement).value);
  });
  palette.appendChild(input);
  palette.appendChild(add);
  return palette;
}

/** Re-render the whole console into `root`. Cheap at batch sizes (~100),
 * and keeps rendering a pure function of view state. */
export function render(view: AnnotationView, root: HTMLElement, handlers: RenderHandlers, status = ""): void {
  const doc = root.ownerDocument;
  root.textContent = "";

  root.appendChild(el(doc, "div", { id: "status-bar" }, status));
  if (view.pending === null) {
    root.appendChild(el(doc, "div", { id: "waiting-banner" }, "waiting for next chunk"));
    return;
  }

  const header = el(
    doc,
    "div",
    { id: "batch-header" },
    `chunk ${view.pending.t}: ${view.drafts.size}/${view.pending.items.length} labeled`,
  );
  root.appendChild(header);
  root.appendChild(renderLegend(doc));
  root.appendChild(renderScatter(doc, view, handlers));
  root.appendChild(renderTable(doc, view, handlers));
  root.appendChild(renderPalette(doc, view, handlers));

  const submit = el(doc, "button", { id: "submit-button" }, "submit labels");
  if (!view.complete) submit.setAttribute("disabled", "disabled");
  submit.addEventListener("click", () => {
    if (view.complete) handlers.onSubmit();
  });
  root.appendChild(submit);
}

/** Keyboard-first labeling: digits pick palette entries for the current
 * selection, Enter submits when the draft is complete. */
export function handleKey(
  view: AnnotationView,
  key: string,
  handlers: RenderHandlers,
): boolean {
  if (/^[1-9]$/.test(key)) {
    const label = view.palette[Number(key) - 1];
    if (label !== undefined && view.selection !== null) {
      handlers.onAssign(view.selection, label);
      return true;
    }
    return false;
  }
  if (key === "Enter" && view.complete) {
    handlers.onSubmit();
    return true;
  }
  return false;
}
