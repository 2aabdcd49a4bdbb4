/** Wire types for the what-if service; field names mirror the JSON exactly. */

export interface SchemaColumn {
  name: string;
  kind: "continuous" | "discrete";
  role: "target" | "condition";
  vocabulary?: string[];
  min?: number;
  max?: number;
}

export interface SchemaResponse {
  group_key: string;
  columns: SchemaColumn[];
}

export interface ProductEntry {
  id: string;
  attributes: Record<string, string | number>;
}

export interface ProductsResponse {
  products: ProductEntry[];
}

export interface HealthResponse {
  status: string;
  model_id: string;
}

export interface WhatIfRequest {
  base_product?: string;
  base?: Record<string, string | number>;
  overrides: Record<string, string | number>;
  n: number;
  seed?: number;
  summary_columns?: string[];
}

export interface ColumnSummary {
  kind: string;
  labels: string[];
  frequencies: number[];
}

export interface ColumnDelta {
  labels: string[];
  deltas: number[];
}

export interface Provenance {
  model_id: string;
  seed: number;
  n: number;
}

export interface WhatIfResponse {
  baseline: Record<string, ColumnSummary>;
  variant: Record<string, ColumnSummary>;
  deltas: Record<string, ColumnDelta>;
  provenance: Provenance;
}
