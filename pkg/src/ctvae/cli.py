"""Command-line entry points for the full pipeline."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .corpus import make_synthetic_corpus
from .errors import CtvaeError
from .experiment import dimension_sweep, emit_report, load_experiment_config, run_holdout
from .metrics import mean_complement
from .model import PRESETS, TrainConfig, load_model, save_model, train
from .sampler import build_condition, generate, read_target_rows, write_batch_csv
from .schema import ingest_table, load_schema, split_by_group, write_csv
from .service import load_catalog, serve


def _cmd_split(args: argparse.Namespace) -> None:
    schema = load_schema(args.schema)
    data = ingest_table(args.data, schema)
    result = split_by_group(data, args.test_groups, args.seed)
    write_csv(result.train, args.out_train)
    write_csv(result.test, args.out_test)
    print(
        f"split {data.n} rows into {result.train.n} train / {result.test.n} test "
        f"({len(result.test.groups())} test groups)"
    )


def _cmd_fit(args: argparse.Namespace) -> None:
    schema = load_schema(args.schema)
    data = ingest_table(args.train, schema)
    cfg = TrainConfig(
        batch_size=args.batch_size,
        max_epochs=args.max_epochs,
        patience=args.patience,
        learning_rate=args.learning_rate,
        seed=args.seed,
        arch=args.arch,
        validation_fraction=args.validation_fraction,
    )
    m, history = train(data, cfg, conditioning=not args.unconditional)
    save_model(m, args.out)
    print(
        f"trained {len(history.epochs)} epochs; best epoch {history.best_epoch} "
        f"(validation loss {history.best_val_loss:.6f}); model written to {args.out}"
    )


def _parse_overrides(pairs: list[str]) -> dict[str, str]:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise SystemExit(f"--override expects key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key] = value
    return overrides


def _resolve_base(args: argparse.Namespace, m) -> dict:
    text = args.base_product
    if text.strip().startswith("{"):
        return json.loads(text)
    if not args.catalog:
        raise SystemExit("--base-product is an id; pass --catalog to resolve it")
    catalog = load_catalog(args.catalog, m.bundle.schema)
    if text not in catalog:
        raise SystemExit(f"unknown product {text!r} in catalog")
    return catalog[text]


def _cmd_generate(args: argparse.Namespace) -> None:
    m = load_model(args.model)
    base = _resolve_base(args, m)
    overrides = _parse_overrides(args.override)
    condition, _ = build_condition(base, overrides, m.bundle)
    batch = generate(m, condition, args.n, args.seed)
    write_batch_csv(batch, args.out)
    print(f"wrote {batch.n} synthetic rows to {args.out}")


def _cmd_summarize(args: argparse.Namespace) -> None:
    with open(args.infile, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or args.column not in reader.fieldnames:
            raise SystemExit(f"column {args.column!r} not present in {args.infile}")
        values = [record[args.column] for record in reader]
    if not values:
        raise SystemExit("input has no data rows")
    try:
        arr = np.array([float(v) for v in values])
        is_continuous = True
    except ValueError:
        is_continuous = False
    if is_continuous:
        lo, hi = float(arr.min()), float(arr.max())
        if hi <= lo:
            hi = lo + 1.0
        edges = np.linspace(lo, hi, args.bins + 1)
        counts, _ = np.histogram(np.clip(arr, lo, hi), bins=edges)
        doc = {
            "column": args.column,
            "kind": "continuous",
            "labels": [f"[{edges[i]:.6g}, {edges[i + 1]:.6g})" for i in range(args.bins)],
            "bin_edges": [float(e) for e in edges],
            "frequencies": [float(c) / len(arr) for c in counts],
        }
    else:
        cats = sorted(set(values))
        doc = {
            "column": args.column,
            "kind": "discrete",
            "labels": cats,
            "frequencies": [values.count(c) / len(values) for c in cats],
        }
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"wrote summary of {args.column!r} to {args.out}")


def _cmd_evaluate(args: argparse.Namespace) -> None:
    schema = load_schema(args.schema)
    real = ingest_table(args.real, schema)
    synth_rows = read_target_rows(args.synth, schema)
    score = mean_complement(real.rows, synth_rows, schema, product_id=args.product or "")
    doc = {
        "product": score.product_id,
        "purchase_count": score.purchase_count,
        "mc": score.mc,
        "columns": {c.column: {"kind": c.kind, "score": c.score} for c in score.columns},
    }
    Path(args.out).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"MC = {score.mc:.4f} over {len(score.columns)} target columns; wrote {args.out}")


def _cmd_sweep(args: argparse.Namespace) -> None:
    cfg = load_experiment_config(args.config)
    if len(cfg.presets) > 1:
        table = dimension_sweep(cfg, cfg.presets)
        out = Path(cfg.output_dir)
        for report in table.reports:
            emit_report(report, out / f"preset_{report.presets[0].preset}")
        summary = out / "sweep.csv"
        with open(summary, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["preset", "average_mc", "weighted_average_mc"])
            for row in table.rows:
                writer.writerow([row.preset, repr(row.average_mc), repr(row.weighted_average_mc)])
        print(f"swept presets {[r.preset for r in table.rows]}; wrote {summary}")
    else:
        report = run_holdout(cfg)
        files = emit_report(report, cfg.output_dir)
        print(f"wrote {len(files)} report files to {cfg.output_dir}")


def _cmd_make_corpus(args: argparse.Namespace) -> None:
    files = make_synthetic_corpus(args.spec, args.seed, args.out)
    print(f"wrote corpus to {files.data.parent}: data, schema, truth, catalog")


def _cmd_serve(args: argparse.Namespace) -> None:
    serve(args.model, bind=args.bind, catalog_path=args.catalog, max_n=args.max_n)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctvae",
        description="Conditional tabular VAE: fit, generate, evaluate, and serve what-if simulations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="group-level train/test split")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--test-groups", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-test", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("fit", help="train a model")
    p.add_argument("--train", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--arch", type=int, default=256, choices=sorted(PRESETS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--batch-size", type=int, default=500)
    p.add_argument("--max-epochs", type=int, default=300)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--validation-fraction", type=float, default=0.1)
    p.add_argument("--unconditional", action="store_true", help="ignore condition columns")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("generate", help="draw synthetic rows under a condition")
    p.add_argument("--model", required=True)
    p.add_argument("--base-product", required=True, help="product id or inline JSON mapping")
    p.add_argument("--override", action="append", default=[], metavar="K=V")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--catalog", default=None)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("summarize", help="relative frequencies of one column of a batch CSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--column", required=True)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_summarize)

    p = sub.add_parser("evaluate", help="score synthetic rows against real rows")
    p.add_argument("--real", required=True)
    p.add_argument("--synth", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--product", default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sweep", help="run the holdout protocol from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("make-corpus", help="emit a synthetic ground-truth corpus")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_make_corpus)

    p = sub.add_parser("serve", help="serve the what-if HTTP API")
    p.add_argument("--model", required=True)
    p.add_argument("--catalog", default=None)
    p.add_argument("--bind", default="127.0.0.1:8000")
    p.add_argument("--max-n", type=int, default=50_000)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (CtvaeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
