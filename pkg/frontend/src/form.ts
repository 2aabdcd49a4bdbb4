import type { ProductEntry, SchemaColumn, SchemaResponse } from "./types";

/** Rejected edits: the form never holds a schema-invalid value. */
export class FormValidationError extends Error {
  constructor(
    readonly column: string,
    message: string,
  ) {
    super(message);
    this.name = "FormValidationError";
  }
}

export interface FormField {
  column: SchemaColumn;
  /** Current value, always valid per the column's vocabulary or numeric kind. */
  value: string | number;
  /** Value of the selected base product; dirty compares against this. */
  baseValue: string | number;
  dirty: boolean;
}

export interface OverrideFormState {
  baseProductId: string | null;
  fields: FormField[];
}

function defaultValue(column: SchemaColumn): string | number {
  if (column.kind === "discrete") {
    const first = column.vocabulary?.[0];
    if (first === undefined) {
      throw new FormValidationError(column.name, "discrete column has no vocabulary");
    }
    return first;
  }
  return column.min ?? 0;
}

function validate(column: SchemaColumn, value: string | number): string | number {
  if (column.kind === "discrete") {
    const text = String(value);
    if (!column.vocabulary?.includes(text)) {
      throw new FormValidationError(
        column.name,
        `${JSON.stringify(text)} is not in the vocabulary of ${column.name}`,
      );
    }
    return text;
  }
  const num = typeof value === "number" ? value : Number(value);
  if (!Number.isFinite(num)) {
    throw new FormValidationError(column.name, `${column.name} needs a finite number`);
  }
  return num;
}

/** One form field per condition column, initialized to defaults. */
export function buildFormState(schema: SchemaResponse): OverrideFormState {
  const fields = schema.columns
    .filter((c) => c.role === "condition")
    .map((column) => {
      const value = defaultValue(column);
      return { column, value, baseValue: value, dirty: false };
    });
  return { baseProductId: null, fields };
}

/** Pin every field to the product's attributes and clear all overrides. */
export function applyBaseProduct(
  state: OverrideFormState,
  product: ProductEntry,
): OverrideFormState {
  const fields = state.fields.map((field) => {
    const raw = product.attributes[field.column.name];
    if (raw === undefined) {
      throw new FormValidationError(
        field.column.name,
        `product ${product.id} is missing attribute ${field.column.name}`,
      );
    }
    const value = validate(field.column, raw);
    return { ...field, value, baseValue: value, dirty: false };
  });
  return { baseProductId: product.id, fields };
}

/** Set one field; invalid values are rejected, reverting to base clears dirty. */
export function setFieldValue(
  state: OverrideFormState,
  columnName: string,
  value: string | number,
): OverrideFormState {
  let found = false;
  const fields = state.fields.map((field) => {
    if (field.column.name !== columnName) return field;
    found = true;
    const valid = validate(field.column, value);
    return { ...field, value: valid, dirty: valid !== field.baseValue };
  });
  if (!found) throw new FormValidationError(columnName, `unknown condition column ${columnName}`);
  return { ...state, fields };
}

/** Only the dirty columns: the request's override mapping. */
export function overridesOf(state: OverrideFormState): Record<string, string | number> {
  const overrides: Record<string, string | number> = {};
  for (const field of state.fields) {
    if (field.dirty) overrides[field.column.name] = field.value;
  }
  return overrides;
}

export function baseOf(state: OverrideFormState): Record<string, string | number> {
  const base: Record<string, string | number> = {};
  for (const field of state.fields) {
    base[field.column.name] = field.baseValue;
  }
  return base;
}

/**
 * Rebuild the form against a reloaded schema, re-applying prior overrides
 * where the column still exists and the value is still valid.
 */
export function reconcile(
  state: OverrideFormState,
  schema: SchemaResponse,
): OverrideFormState {
  const previous = new Map(state.fields.map((f) => [f.column.name, f]));
  const fields = schema.columns
    .filter((c) => c.role === "condition")
    .map((column) => {
      const old = previous.get(column.name);
      let baseValue: string | number;
      try {
        baseValue = old ? validate(column, old.baseValue) : defaultValue(column);
      } catch {
        baseValue = defaultValue(column);
      }
      let field: FormField = { column, value: baseValue, baseValue, dirty: false };
      if (old?.dirty) {
        try {
          const value = validate(column, old.value);
          field = { ...field, value, dirty: value !== baseValue };
        } catch {
          // stale override no longer valid under the new schema; drop it
        }
      }
      return field;
    });
  return { ...state, fields };
}
