import { ApiClient, ApiError } from "./api";
import {
  applyBaseProduct,
  baseOf,
  buildFormState,
  overridesOf,
  setFieldValue,
  type OverrideFormState,
} from "./form";
import { PinStore } from "./pins";
import { renderComparison, renderError, renderForm, renderProvenance } from "./render";
import type { ProductEntry, WhatIfRequest } from "./types";

const DEFAULT_N = 5000;

/** Single-page wiring: one in-flight request; stale responses are dropped
 * by sequence number and aborted when a newer submission starts. */
export class WhatIfApp {
  private state: OverrideFormState | null = null;
  private products: ProductEntry[] = [];
  private sequence = 0;
  private inFlight: AbortController | null = null;
  private modelId = "";
  private readonly pins: PinStore;

  constructor(
    private readonly api: ApiClient,
    private readonly root: HTMLElement,
    storage: Storage = window.localStorage,
  ) {
    this.pins = new PinStore(storage);
  }

  private section(name: string): HTMLElement {
    let node = this.root.querySelector<HTMLElement>(`[data-section="${name}"]`);
    if (!node) {
      node = this.root.ownerDocument.createElement("div");
      node.dataset.section = name;
      this.root.appendChild(node);
    }
    return node;
  }

  async start(): Promise<void> {
    try {
      const [health, schema, products] = await Promise.all([
        this.api.health(),
        this.api.schema(),
        this.api.products(),
      ]);
      this.modelId = health.model_id;
      this.products = products.products;
      this.state = buildFormState(schema);
      if (this.products.length > 0) {
        this.state = applyBaseProduct(this.state, this.products[0] as ProductEntry);
      }
      this.redrawForm();
      this.redrawPins();
    } catch (err) {
      renderError(
        this.section("error"),
        err instanceof Error ? `service unreachable: ${err.message}` : "service unreachable",
      );
    }
  }

  selectProduct(id: string): void {
    const product = this.products.find((p) => p.id === id);
    if (!product || !this.state) return;
    this.state = applyBaseProduct(this.state, product);
    this.redrawForm();
  }

  edit(column: string, value: string): void {
    if (!this.state) return;
    try {
      this.state = setFieldValue(this.state, column, value);
      this.section("error").textContent = "";
    } catch (err) {
      renderError(this.section("error"), err instanceof Error ? err.message : String(err));
      return;
    }
    this.redrawForm();
  }

  async submit(n: number = DEFAULT_N, seed?: number): Promise<void> {
    if (!this.state) return;
    const request: WhatIfRequest = {
      overrides: overridesOf(this.state),
      n,
      ...(seed !== undefined ? { seed } : {}),
    };
    if (this.state.baseProductId !== null) {
      request.base_product = this.state.baseProductId;
    } else {
      request.base = baseOf(this.state);
    }
    const mySequence = ++this.sequence;
    this.inFlight?.abort();
    this.inFlight = new AbortController();
    try {
      const response = await this.api.whatIf(request, this.inFlight.signal);
      if (mySequence !== this.sequence) return; // a newer submission superseded this one
      renderComparison(this.section("comparison"), response);
      const pinButton = this.root.ownerDocument.createElement("button");
      pinButton.textContent = "pin scenario";
      pinButton.addEventListener("click", () => {
        this.pins.pin(request, response);
        this.redrawPins();
      });
      this.section("comparison").appendChild(pinButton);
    } catch (err) {
      if (mySequence !== this.sequence) return;
      if (err instanceof ApiError) {
        renderError(this.section("error"), err.message, err.field);
      } else if ((err as Error)?.name !== "AbortError") {
        renderError(this.section("error"), (err as Error)?.message ?? String(err));
      }
    }
  }

  /** Re-issue a pinned scenario with its stored seed; warn if the served
   * model is no longer the one the pin was made against. */
  async recallPin(id: number): Promise<void> {
    const entry = this.pins.list().find((e) => e.id === id);
    if (!entry) return;
    if (this.pins.isStale(entry, this.modelId)) {
      renderError(
        this.section("error"),
        `pinned against model ${entry.model_id.slice(0, 12)}…, server now runs ` +
          `${this.modelId.slice(0, 12)}…; frequencies may differ`,
        "model_id",
      );
    }
    const mySequence = ++this.sequence;
    const response = await this.api.whatIf(entry.request);
    if (mySequence !== this.sequence) return;
    renderComparison(this.section("comparison"), response);
  }

  private redrawForm(): void {
    if (!this.state) return;
    renderForm(this.section("form"), this.state, (column, value) => this.edit(column, value));
  }

  private redrawPins(): void {
    const doc = this.root.ownerDocument;
    const box = this.section("pins");
    box.textContent = "";
    for (const entry of this.pins.list()) {
      const row = doc.createElement("div");
      row.className = "pin-row";
      const overrides = Object.entries(entry.request.overrides)
        .map(([k, v]) => `${k}=${v}`)
        .join(", ");
      row.textContent = `#${entry.id} ${overrides || "(no overrides)"} · seed ${entry.seed}`;
      const recall = doc.createElement("button");
      recall.textContent = "recall";
      recall.addEventListener("click", () => void this.recallPin(entry.id));
      row.appendChild(recall);
      box.appendChild(row);
    }
  }
}

export function mount(root: HTMLElement, baseUrl = ""): WhatIfApp {
  const app = new WhatIfApp(new ApiClient(baseUrl), root);
  void app.start();
  return app;
}
