"""Command-line interface: build knowledge bases, evaluate query sets,
sweep k, probe profile attributes, and generate synthetic datasets.

Exit codes are a stable contract: 0 success, 2 input or configuration error,
3 data error (e.g. unlabeled queries), 4 internal error. Every command
writes a run manifest (a JSON echo of its flags plus input checksums) next
to its outputs, so a results table can always be traced back to the exact
inputs that produced it.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ablation import AttributeMask, ablation_run
from .ensemble import EnsembleStrategy, format_prediction_tsv
from .errors import (
    EmptySamplesError,
    MissingClassError,
    RaddError,
    UnlabeledQueryError,
)
from .metrics import EvalReport, evaluate, report_from_predictions, score_queries
from .retrieval import RetrievalStrategy
from .store import (
    build,
    entry_to_json,
    ingest_jsonl,
    load,
    profile_zscore,
    query_to_json,
    save,
    write_jsonl,
)
from .synthetic import RNG_ALGORITHM, SynthConfig, generate
from .types import DEFAULT_PROFILE_LAYOUT, ProfileLayout

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

DEFAULT_K_GRID = (5, 10, 20, 50, 100, 200)
DEFAULT_MASKS = ("none", "age,gender", "emotion", "voice_quality")

_TABLE_HEADER = f"{'strategy':>8} {'ens':>6} {'k':>4} {'EER%':>7} {'Acc%':>7}"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path: Path, command: str, args: argparse.Namespace, inputs: dict, outputs: list[str], extra: dict | None = None):
    flags = {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in vars(args).items()
        if k != "func"
    }
    manifest = {
        "command": command,
        "flags": flags,
        "inputs": {name: {"path": str(p), "sha256": _sha256(p)} for name, p in inputs.items()},
        "outputs": outputs,
        "environment": {"radd_version": __version__, "numpy_version": np.__version__},
    }
    if extra:
        manifest.update(extra)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _parse_strategy(value: str) -> RetrievalStrategy | None:
    return None if value == "none" else RetrievalStrategy(value)


def _parse_ensemble(value: str | None) -> EnsembleStrategy | None:
    return None if value is None else EnsembleStrategy(value)


def _parse_mask(value: str) -> AttributeMask:
    if value.strip() in ("", "none"):
        return AttributeMask(())
    return AttributeMask(tuple(p.strip() for p in value.split(",") if p.strip()))


def _require_ensemble(strategy, ensemble) -> None:
    if strategy is not None and ensemble is None:
        raise RaddError("--ensemble is required unless --strategy none")


# --- commands -----------------------------------------------------------------

def cmd_build(args) -> int:
    layout = (
        ProfileLayout.from_descriptor(args.layout) if args.layout else DEFAULT_PROFILE_LAYOUT
    )
    entries = ingest_jsonl(args.jsonl, layout)
    base = build(entries, layout)
    save(base, args.out)
    out = Path(args.out)
    _write_manifest(
        out.with_name(out.name + ".manifest.json"),
        "build",
        args,
        inputs={"jsonl": args.jsonl},
        outputs=[str(out)],
    )
    n_fake = int(base.labels.sum())
    n_real = base.n - n_fake
    print(f"n={base.n} d_cm={base.d_cm} d_prof={base.d_prof}")
    print(f"label balance: real {100.0 * n_real / base.n:.1f}% / fake {100.0 * n_fake / base.n:.1f}%")
    print(f"wrote {out}")
    return EXIT_OK


def _prepare_eval(args, extra_query_paths=()):
    """Load the base plus one or more query files and apply the optional
    normalization and mask transforms identically to all of them."""
    from .ablation import mask_base, mask_queries
    from .store import read_queries_jsonl

    base = load(args.base)
    layout = base.layout
    query_sets = [read_queries_jsonl(p, layout) for p in (args.queries, *extra_query_paths)]
    if getattr(args, "normalize_profile", False):
        transformed = []
        for qs in query_sets:
            view, new_qs = profile_zscore(base, qs)  # stats always from the raw base
            transformed.append(new_qs)
        base, query_sets = view, transformed
    mask = _parse_mask(args.mask) if getattr(args, "mask", None) else None
    if mask is not None and mask.excluded:
        query_sets = [mask_queries(qs, layout, mask) for qs in query_sets]
        base = mask_base(base, mask)
    return base, query_sets


def cmd_evaluate(args) -> int:
    strategy = _parse_strategy(args.strategy)
    ensemble = _parse_ensemble(args.ensemble)
    _require_ensemble(strategy, ensemble)
    base, (queries,) = _prepare_eval(args)
    for q in queries:
        if q.label is None:
            raise UnlabeledQueryError(f"query {q.id} has no ground-truth label", query_id=q.id)
    predictions = score_queries(base, queries, strategy, ensemble, args.k, args.parallelism)
    report = report_from_predictions(predictions, queries, strategy, ensemble, args.k)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(
        json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out / "predictions.tsv").write_text(format_prediction_tsv(predictions), encoding="utf-8")
    _write_manifest(
        out / "manifest.json",
        "evaluate",
        args,
        inputs={"base": args.base, "queries": args.queries},
        outputs=[str(out / "report.json"), str(out / "predictions.tsv")],
    )
    print(_TABLE_HEADER)
    print(report.table_row())
    return EXIT_OK


def cmd_sweep(args) -> int:
    strategy = _parse_strategy(args.strategy)
    ensemble = _parse_ensemble(args.ensemble)
    _require_ensemble(strategy, ensemble)
    grid = tuple(int(x) for x in args.k_grid.split(",")) if args.k_grid else DEFAULT_K_GRID
    if not grid or any(k < 1 for k in grid):
        raise RaddError(f"bad k grid: {grid}")
    if args.dev_queries:
        base, (queries, dev_queries) = _prepare_eval(args, (args.dev_queries,))
    else:
        base, (queries,) = _prepare_eval(args)
        dev_queries = None

    reports: list[EvalReport] = []
    dev_eers: list[float | None] = []
    for k in grid:
        reports.append(evaluate(base, queries, strategy, ensemble, k, args.parallelism))
        if dev_queries is not None:
            dev_eers.append(evaluate(base, dev_queries, strategy, ensemble, k, args.parallelism).eer)

    def eer_key(value: float | None) -> float:
        return value if value is not None else float("inf")

    if dev_queries is not None:
        best_i = min(range(len(grid)), key=lambda i: (eer_key(dev_eers[i]), grid[i]))
        chosen_on = "dev"
    else:
        best_i = min(range(len(grid)), key=lambda i: (eer_key(reports[i].eer), grid[i]))
        chosen_on = "eval"
    best_k = grid[best_i]

    lines = [_TABLE_HEADER]
    lines.extend(r.table_row() for r in reports)
    lines.append(f"best k = {best_k} (selected by {chosen_on}-set EER)")
    table = "\n".join(lines) + "\n"

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "grid": list(grid),
        "reports": [r.to_json_dict() for r in reports],
        "best_k": best_k,
        "selected_by": chosen_on,
    }
    if dev_queries is not None:
        payload["dev_eers"] = dev_eers
    (out / "sweep.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "sweep.txt").write_text(table, encoding="utf-8")
    inputs = {"base": args.base, "queries": args.queries}
    if args.dev_queries:
        inputs["dev_queries"] = args.dev_queries
    _write_manifest(
        out / "manifest.json", "sweep", args, inputs=inputs,
        outputs=[str(out / "sweep.json"), str(out / "sweep.txt")],
    )
    print(table, end="")
    return EXIT_OK


def cmd_ablate(args) -> int:
    strategy = _parse_strategy(args.strategy)
    ensemble = _parse_ensemble(args.ensemble)
    _require_ensemble(strategy, ensemble)
    if strategy is None:
        raise RaddError("ablation requires a retrieval strategy (not 'none')")
    mask_values = args.mask if args.mask else list(DEFAULT_MASKS)
    masks = [_parse_mask(value) for value in mask_values]

    from .store import read_queries_jsonl

    base = load(args.base)
    queries = read_queries_jsonl(args.queries, base.layout)
    if getattr(args, "normalize_profile", False):
        base, queries = profile_zscore(base, queries)

    rows = []
    print(f"{'config':>24} {'EER%':>7} {'Acc%':>7}")
    for mask in masks:
        report = ablation_run(base, queries, mask, strategy, ensemble, args.k, args.parallelism)
        eer_txt = f"{100.0 * report.eer:.2f}" if report.eer is not None else "n/a"
        print(f"{mask.label():>24} {eer_txt:>7} {100.0 * report.accuracy:>7.2f}")
        rows.append({"mask": sorted(mask.excluded), "label": mask.label(), "report": report.to_json_dict()})

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_manifest(
        out / "manifest.json", "ablate", args,
        inputs={"base": args.base, "queries": args.queries},
        outputs=[str(out / "ablation.json")],
    )
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        obj = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except OSError as exc:
        raise RaddError(f"cannot read config {args.config}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise RaddError(f"config {args.config} is not valid JSON: {exc}") from exc
    if args.seed is not None:
        obj["seed"] = args.seed
    config = SynthConfig.from_dict(obj)
    entries, queries = generate(config)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    knowledge_path = out / "knowledge.jsonl"
    queries_path = out / "queries.jsonl"
    write_jsonl(knowledge_path, (entry_to_json(e) for e in entries))
    write_jsonl(queries_path, (query_to_json(q) for q in queries))
    _write_manifest(
        out / "manifest.json", "synth", args,
        inputs={"config": args.config},
        outputs=[str(knowledge_path), str(queries_path)],
        extra={
            "generator": {
                "rng_algorithm": RNG_ALGORITHM,
                "numpy_version": np.__version__,
                "config": dataclasses.asdict(config),
            }
        },
    )
    print(f"wrote {knowledge_path} ({len(entries)} entries)")
    print(f"wrote {queries_path} ({len(queries)} queries)")
    return EXIT_OK


# --- parser -------------------------------------------------------------------

def _add_eval_flags(p: argparse.ArgumentParser, with_k: bool = True):
    p.add_argument("--base", required=True, help="knowledge base file (RAKB)")
    p.add_argument("--queries", required=True, help="query JSONL with labels")
    p.add_argument("--strategy", required=True, choices=["cm", "prof", "hybrid", "none"],
                   help="retrieval strategy; 'none' thresholds the raw CM score (baseline)")
    p.add_argument("--ensemble", choices=["mv", "ratio", "avg"],
                   help="ensemble rule (required unless --strategy none)")
    if with_k:
        p.add_argument("--k", type=int, default=10, help="neighbors to retrieve (default 10)")
    p.add_argument("--parallelism", type=int, default=1, help="retrieval worker threads")
    p.add_argument("--normalize-profile", action="store_true",
                   help="z-score profile dimensions using knowledge-base statistics")
    p.add_argument("--out", required=True, help="output directory")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="radd",
        description="Training-free retrieval-augmented audio deepfake detection harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="ingest a knowledge JSONL file and write a base")
    p.add_argument("jsonl", help="knowledge JSONL produced by the feature extraction pipeline")
    p.add_argument("--layout", help="profile layout descriptor 'name:width,...' (default: age/gender/emotion/voice_quality, 285 dims)")
    p.add_argument("--out", required=True, help="output base file")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("evaluate", help="evaluate one (strategy, ensemble, k) configuration")
    _add_eval_flags(p)
    p.add_argument("--mask", help="profile attributes to exclude, comma-separated (or 'none')")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="evaluate a grid of k values")
    _add_eval_flags(p, with_k=False)
    p.add_argument("--k-grid", help="comma-separated k values (default 5,10,20,50,100,200)")
    p.add_argument("--dev-queries", help="development query JSONL; selects best k by dev EER")
    p.add_argument("--mask", help="profile attributes to exclude, comma-separated (or 'none')")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="re-run evaluation under profile attribute masks")
    _add_eval_flags(p)
    p.add_argument("--mask", action="append",
                   help="mask to test (repeatable); default: none, age+gender, emotion, voice_quality")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="generate a synthetic zero-day dataset")
    p.add_argument("--config", required=True, help="JSON file of generator parameters")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UnlabeledQueryError, EmptySamplesError, MissingClassError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (RaddError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:  # pragma: no cover - defensive
        logger.exception("internal error")
        return EXIT_INTERNAL


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
