import type { OverrideFormState } from "./form";
import type { ColumnDelta, ColumnSummary, Provenance, WhatIfResponse } from "./types";

/** Frequencies and deltas are printed verbatim (String(x)); the client never
 * rounds, renormalizes, or otherwise recomputes what the server sent. */
export function formatFrequency(value: number): string {
  return String(value);
}

export function formatDelta(value: number): string {
  return value >= 0 ? `+${String(value)}` : String(value);
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderPanel(
  doc: Document,
  title: string,
  summary: ColumnSummary,
): HTMLElement {
  const panel = el(doc, "div", "panel");
  panel.appendChild(el(doc, "h4", "panel-title", title));
  const list = el(doc, "ul", "bars");
  summary.labels.forEach((label, i) => {
    const item = el(doc, "li", "bar-row");
    item.dataset.label = label;
    const frequency = summary.frequencies[i] ?? 0;
    const bar = el(doc, "span", "bar");
    bar.style.width = `${Math.round(frequency * 200)}px`;
    item.appendChild(el(doc, "span", "bar-label", label));
    item.appendChild(bar);
    item.appendChild(el(doc, "span", "bar-value", formatFrequency(frequency)));
    list.appendChild(item);
  });
  panel.appendChild(list);
  return panel;
}

function renderDeltas(doc: Document, delta: ColumnDelta): HTMLElement {
  const list = el(doc, "ul", "deltas");
  delta.labels.forEach((label, i) => {
    const item = el(doc, "li", "delta-row");
    item.dataset.label = label;
    item.appendChild(el(doc, "span", "delta-label", label));
    item.appendChild(el(doc, "span", "delta-value", formatDelta(delta.deltas[i] ?? 0)));
    list.appendChild(item);
  });
  return list;
}

export function renderProvenance(doc: Document, provenance: Provenance): HTMLElement {
  return el(
    doc,
    "p",
    "provenance",
    `seed ${provenance.seed} · n ${provenance.n} · model ${provenance.model_id}`,
  );
}

/** Side-by-side baseline/variant panels with signed per-bucket deltas. */
export function renderComparison(
  container: HTMLElement,
  response: WhatIfResponse,
  columns?: string[],
): void {
  const doc = container.ownerDocument;
  container.textContent = "";
  const names = columns ?? Object.keys(response.baseline);
  for (const name of names) {
    const baseline = response.baseline[name];
    const variant = response.variant[name];
    const delta = response.deltas[name];
    if (!baseline || !variant || !delta) continue;
    const section = el(doc, "section", "comparison");
    section.dataset.column = name;
    section.appendChild(el(doc, "h3", "column-name", name));
    const pair = el(doc, "div", "panel-pair");
    pair.appendChild(renderPanel(doc, "baseline", baseline));
    pair.appendChild(renderPanel(doc, "variant", variant));
    section.appendChild(pair);
    section.appendChild(renderDeltas(doc, delta));
    container.appendChild(section);
  }
  container.appendChild(renderProvenance(doc, response.provenance));
}

/** Discrete columns become selectors, continuous ones numeric inputs with
 * the training range as a hint. */
export function renderForm(
  container: HTMLElement,
  state: OverrideFormState,
  onEdit: (column: string, value: string) => void,
): void {
  const doc = container.ownerDocument;
  container.textContent = "";
  for (const field of state.fields) {
    const row = el(doc, "label", "form-row");
    row.dataset.column = field.column.name;
    const caption = field.dirty ? `${field.column.name} (overridden)` : field.column.name;
    row.appendChild(el(doc, "span", "form-label", caption));
    if (field.column.kind === "discrete") {
      const select = doc.createElement("select");
      for (const option of field.column.vocabulary ?? []) {
        const node = doc.createElement("option");
        node.value = option;
        node.textContent = option;
        node.selected = option === field.value;
        select.appendChild(node);
      }
      select.addEventListener("change", () => onEdit(field.column.name, select.value));
      row.appendChild(select);
    } else {
      const input = doc.createElement("input");
      input.type = "number";
      input.value = String(field.value);
      if (field.column.min !== undefined && field.column.max !== undefined) {
        input.placeholder = `${field.column.min} … ${field.column.max}`;
        input.title = `training range ${field.column.min} to ${field.column.max}`;
      }
      input.addEventListener("change", () => onEdit(field.column.name, input.value));
      row.appendChild(input);
    }
    container.appendChild(row);
  }
}

export function renderError(container: HTMLElement, message: string, field?: string): void {
  const doc = container.ownerDocument;
  container.textContent = "";
  const box = el(doc, "div", "error");
  box.appendChild(el(doc, "strong", undefined, field ? `${field}: ` : "error: "));
  box.appendChild(doc.createTextNode(message));
  container.appendChild(box);
}
