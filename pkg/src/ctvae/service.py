"""JSON-over-HTTP facade for schema inspection, generation, and what-if runs.

The loaded model is immutable shared state; every response is a pure function
of (model, request, seed). A what-if request runs generation twice with the
same seed stream, once under the base condition and once with the overrides
applied, so the reported deltas isolate the override effect from sampling
noise.
"""

from __future__ import annotations

import csv
import io
import secrets
from pathlib import Path
from typing import Any

from fastapi import FastAPI, HTTPException
from fastapi.responses import PlainTextResponse, Response
from pydantic import BaseModel, Field

from .errors import EncodingError
from .model import ModelParams, load_model, model_fingerprint
from .sampler import build_condition, compare, generate, summarize
from .schema import Schema
from .transform import ContinuousTransform, DiscreteTransform

DEFAULT_MAX_N = 50_000


class WhatIfRequest(BaseModel):
    base_product: str | None = None
    base: dict[str, Any] | None = None
    overrides: dict[str, Any] = Field(default_factory=dict)
    n: int = 5000
    seed: int | None = None
    summary_columns: list[str] = Field(default_factory=list)


class GenerateRequest(BaseModel):
    base_product: str | None = None
    base: dict[str, Any] | None = None
    overrides: dict[str, Any] = Field(default_factory=dict)
    n: int = 1000
    seed: int | None = None


def _error(status: int, message: str, field: str | None = None) -> HTTPException:
    detail: dict[str, Any] = {"message": message}
    if field is not None:
        detail["field"] = field
    return HTTPException(status_code=status, detail=detail)


def load_catalog(path: str | Path, schema: Schema) -> dict[str, dict[str, Any]]:
    """Load a product catalog CSV: one row per product, condition columns as cells."""
    condition = {c.name: c for c in schema.condition_columns}
    catalog: dict[str, dict[str, Any]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or schema.group_key not in reader.fieldnames:
            raise ValueError(f"catalog must carry the group key column {schema.group_key!r}")
        for record in reader:
            attrs: dict[str, Any] = {}
            for name, col in condition.items():
                if name not in record:
                    raise ValueError(f"catalog is missing condition column {name!r}")
                attrs[name] = float(record[name]) if col.kind == "continuous" else record[name]
            catalog[record[schema.group_key]] = attrs
    return catalog


def create_app(
    m: ModelParams,
    catalog: dict[str, dict[str, Any]] | None = None,
    max_n: int = DEFAULT_MAX_N,
) -> FastAPI:
    app = FastAPI(title="ctvae what-if service")
    model_id = model_fingerprint(m)
    bundle = m.bundle
    schema = bundle.schema
    catalog = catalog or {}
    target_names = {c.name for c in schema.target_columns}

    def resolve_base(req: WhatIfRequest | GenerateRequest) -> dict[str, Any]:
        if req.base_product is not None:
            if req.base_product not in catalog:
                raise _error(404, f"unknown product {req.base_product!r}", field="base_product")
            return dict(catalog[req.base_product])
        if req.base is None:
            raise _error(400, "either base_product or base is required", field="base")
        return dict(req.base)

    def compile_conditions(req: WhatIfRequest | GenerateRequest):
        base = resolve_base(req)
        try:
            baseline, _ = build_condition(base, {}, bundle)
        except (ValueError, EncodingError) as exc:
            raise _error(400, str(exc), field="base")
        for key, value in req.overrides.items():
            try:
                build_condition(base, {key: value}, bundle)
            except ValueError as exc:
                raise _error(400, str(exc), field=f"overrides.{key}")
            except EncodingError as exc:
                raise _error(400, str(exc), field=f"overrides.{key}")
        variant, _ = build_condition(base, req.overrides, bundle)
        return baseline, variant

    def check_n(n: int) -> None:
        if n < 1:
            raise _error(400, "n must be >= 1", field="n")
        if n > max_n:
            raise _error(400, f"n exceeds the server cap of {max_n}", field="n")

    @app.get("/health")
    def health() -> dict[str, Any]:
        return {"status": "ready", "model_id": model_id}

    @app.get("/schema")
    def schema_endpoint() -> dict[str, Any]:
        columns = []
        for col in schema.columns:
            entry: dict[str, Any] = {"name": col.name, "kind": col.kind, "role": col.role}
            t = bundle.transforms[col.name]
            if isinstance(t, DiscreteTransform):
                entry["vocabulary"] = list(t.vocabulary)
            else:
                assert isinstance(t, ContinuousTransform)
                entry["min"] = t.value_min
                entry["max"] = t.value_max
            columns.append(entry)
        return {"group_key": schema.group_key, "columns": columns}

    @app.get("/products")
    def products_endpoint() -> dict[str, Any]:
        return {
            "products": [{"id": pid, "attributes": attrs} for pid, attrs in catalog.items()]
        }

    @app.post("/whatif")
    def whatif(req: WhatIfRequest) -> dict[str, Any]:
        check_n(req.n)
        baseline_cond, variant_cond = compile_conditions(req)
        columns = req.summary_columns or sorted(target_names)
        for name in columns:
            if name not in target_names:
                raise _error(400, f"{name!r} is not a target column", field="summary_columns")
        seed = req.seed if req.seed is not None else secrets.randbits(48)

        baseline_batch = generate(m, baseline_cond, req.n, seed)
        variant_batch = generate(m, variant_cond, req.n, seed)

        baseline_summaries: dict[str, Any] = {}
        variant_summaries: dict[str, Any] = {}
        deltas: dict[str, Any] = {}
        for name in columns:
            sb = summarize(baseline_batch, name)
            sv = summarize(variant_batch, name)
            delta = compare(sb, sv)
            baseline_summaries[name] = {
                "kind": sb.kind,
                "labels": list(sb.labels),
                "frequencies": [float(f) for f in sb.frequencies],
            }
            variant_summaries[name] = {
                "kind": sv.kind,
                "labels": list(sv.labels),
                "frequencies": [float(f) for f in sv.frequencies],
            }
            deltas[name] = {
                "labels": list(delta.labels),
                "deltas": [float(d) for d in delta.deltas],
            }
        return {
            "baseline": baseline_summaries,
            "variant": variant_summaries,
            "deltas": deltas,
            "provenance": {"model_id": model_id, "seed": seed, "n": req.n},
        }

    @app.post("/generate")
    def generate_endpoint(req: GenerateRequest) -> Response:
        check_n(req.n)
        _, variant_cond = compile_conditions(req)
        seed = req.seed if req.seed is not None else secrets.randbits(48)
        batch = generate(m, variant_cond, req.n, seed)
        buf = io.StringIO()
        names = [c.name for c in batch.columns]
        writer = csv.writer(buf)
        writer.writerow(names)
        for row in batch.rows:
            writer.writerow(
                [repr(row[n]) if isinstance(row[n], float) else str(row[n]) for n in names]
            )
        return PlainTextResponse(
            buf.getvalue(),
            media_type="text/csv",
            headers={
                "Content-Disposition": "attachment; filename=synthetic.csv",
                "X-Model-Id": model_id,
                "X-Seed": str(seed),
            },
        )

    return app


def serve(
    model_path: str | Path,
    bind: str = "127.0.0.1:8000",
    catalog_path: str | Path | None = None,
    max_n: int = DEFAULT_MAX_N,
) -> None:
    """Load the model, build the app, and serve it; load failures precede binding."""
    import uvicorn

    m = load_model(model_path)
    catalog = load_catalog(catalog_path, m.bundle.schema) if catalog_path else None
    app = create_app(m, catalog=catalog, max_n=max_n)
    host, _, port = bind.rpartition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
