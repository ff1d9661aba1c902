"""``gcnprune`` command line.

Subcommands: train, sparsify, grid, cost, synth, validate. Experiment
subcommands write ``report.json`` and ``curves.csv`` into ``--out``.

Exit codes: 0 ok, 2 configuration error, 3 data/validation failure,
4 training error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import annotation_of, emit_config, parse_config
from .cost import (
    LayerDims,
    SparsityTriple,
    complexity_report,
    dense_layer_macs,
    multiplication_order,
    reduction_factor_bound,
    sparse_layer_macs_bound,
)
from .exceptions import ConfigError, ParseError, TrainingError, ValidationError
from .graphs import load_dataset_dir, synth_barabasi_albert, synth_erdos_renyi, write_dataset_dir
from .selfcheck import run_checks
from .workflow import ExperimentConfig, TrainingContext, grid_search, iterative_sparsify, train_baseline

SCHEMA_VERSION = 1
CURVE_COLUMNS = ["round", "epoch", "loss", "train_acc", "val_acc", "test_acc", "a", "w", "h"]
EXIT_OK, EXIT_CONFIG, EXIT_VALIDATION, EXIT_TRAINING = 0, 2, 3, 4

log = logging.getLogger("gcnprune")


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat TOML config file")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--dataset", help="dataset directory (edges.txt, features.*, labels.csv)")
    p.add_argument("--seed", type=int, help="experiment seed")
    group = p.add_argument_group("config overrides")
    for name in ExperimentConfig.field_names():
        if name in ("dataset", "seed"):
            continue
        kind = annotation_of(name)
        group.add_argument(
            f"--{name.replace('_', '-')}", dest=name, metavar=kind.__name__.upper(),
            help=f"override config key '{name}'",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gcnprune", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("train", "train the dense baseline only"),
        ("sparsify", "iterative sparsify/retrain loop"),
        ("grid", "grid search over (a, w, h) sparsity targets"),
    ):
        _add_config_flags(sub.add_parser(name, help=help_text))

    cost = sub.add_parser("cost", help="analytic MAC cost of one layer")
    cost.add_argument("--n", type=int, required=True, help="nodes")
    cost.add_argument("--d", type=int, required=True, help="input width")
    cost.add_argument("--f", type=int, required=True, help="output width")
    cost.add_argument("--m", type=int, required=True, help="adjacency nonzeros")
    cost.add_argument("--a", type=float, default=0.0, help="graph sparsity fraction")
    cost.add_argument("--h", type=float, default=0.0, help="embedding sparsity fraction")
    cost.add_argument("--w", type=float, default=0.0, help="weight sparsity fraction")
    cost.add_argument("--layers", type=int, default=2)
    cost.add_argument("--out", help="also write report.json here")

    synth = sub.add_parser("synth", help="write a synthetic dataset directory")
    synth.add_argument("--kind", choices=("ba", "er"), default="ba")
    synth.add_argument("--n", type=int, default=500)
    synth.add_argument("--m-attach", type=int, default=3)
    synth.add_argument("--p", type=float, default=0.01)
    synth.add_argument("--n-classes", type=int, default=3)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("--out", required=True)

    val = sub.add_parser("validate", help="run the invariant self-checks")
    val.add_argument("--seed", type=int, default=0)
    return parser


def _resolve(args) -> tuple[ExperimentConfig, list[str]]:
    overrides = {k: getattr(args, k, None) for k in ExperimentConfig.field_names()}
    return parse_config(args.config, overrides)


def _load(cfg: ExperimentConfig, defaulted: list[str]) -> TrainingContext:
    if not cfg.dataset:
        raise ConfigError("dataset: a dataset directory is required (--dataset or config key)")
    d = Path(cfg.dataset)
    if "split" in defaulted and (d / "train.txt").exists():
        # shipped split files win over the default; echo them so the config replays
        cfg.split = "files:" + ",".join(str((d / f"{p}.txt").resolve()) for p in ("train", "val", "test"))
    ds = load_dataset_dir(d, cfg.split)
    return TrainingContext.from_dataset(ds, cfg.normalize_features)


def _round_dict(record) -> dict:
    out = record.to_dict()
    out.pop("curves")
    return out


def write_report(out_dir: Path, command: str, cfg: ExperimentConfig, defaulted: list[str],
                 ctx: TrainingContext | None, records: list, verdict, extra: dict | None,
                 started: float) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": command,
        "config": cfg.to_dict(),
        "defaulted_keys": defaulted,
        "seed": cfg.seed,
        "dataset": ctx.dataset.summary() if ctx else None,
        "rounds": [_round_dict(r) for r in records],
        "verdict": verdict,
    }
    if extra:
        report.update(extra)
    report["wall_clock_seconds"] = round(time.perf_counter() - started, 3)
    path = out_dir / "report.json"
    path.write_text(json.dumps(report, indent=2, default=_json_default) + "\n", encoding="utf-8")
    (out_dir / "config.resolved.toml").write_text(emit_config(cfg), encoding="utf-8")

    with open(out_dir / "curves.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for rec in sorted(records, key=lambda r: r.round_index):
            s = rec.sparsity_state
            for row in rec.curves:
                writer.writerow([rec.round_index, row["epoch"], repr(row["loss"]), repr(row["train_acc"]),
                                 repr(row["val_acc"]), repr(row["test_acc"]),
                                 repr(s["a"]), repr(s["w"]), repr(s["h"])])
    return path


def _cmd_experiment(args) -> int:
    started = time.perf_counter()
    cfg, defaulted = _resolve(args)
    if args.dataset:
        cfg.dataset = args.dataset
        defaulted = [k for k in defaulted if k != "dataset"]
    if args.seed is not None:
        cfg.seed = args.seed
        defaulted = [k for k in defaulted if k != "seed"]
    ctx = _load(cfg, defaulted)
    out = Path(args.out)
    if args.command == "train":
        record, _ = train_baseline(cfg, ctx)
        verdict = {"round": 0, "test_accuracy": record.test_accuracy_at_best_val}
        write_report(out, "train", cfg, defaulted, ctx, [record], verdict, None, started)
        print(f"baseline test accuracy at best validation: {record.test_accuracy_at_best_val:.4f}")
    elif args.command == "sparsify":
        result = iterative_sparsify(cfg, ctx)
        write_report(out, "sparsify", cfg, defaulted, ctx, result.records, result.verdict, None, started)
        v = result.verdict
        print(f"verdict: round {v['round']} sparsity {json.dumps(v['sparsity'])} "
              f"test accuracy {v['test_accuracy']:.4f} (baseline {v['baseline_accuracy']:.4f})")
    else:
        result = grid_search(cfg, ctx)
        base = result.pop("baseline_record")
        write_report(out, "grid", cfg, defaulted, ctx, [base],
                     {"best": result["best"], "status": result["verdict"]},
                     {"grid": result["cells"], "baseline_accuracy": result["baseline_accuracy"]}, started)
        print(f"grid: {result['verdict']}; best {json.dumps(result['best'])}")
    print(f"wrote {out / 'report.json'} and {out / 'curves.csv'}")
    return EXIT_OK


def _cmd_cost(args) -> int:
    dims = LayerDims(args.n, args.d, args.f, args.m)
    s = SparsityTriple(args.a, args.h, args.w)
    report = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "command": "cost",
        "dims": asdict(dims),
        "sparsity": asdict(s),
        "order": multiplication_order(dims),
        "dense_macs": dense_layer_macs(dims),
        "sparse_macs_bound": float(sparse_layer_macs_bound(dims, s)),
        "reduction_bound": float(reduction_factor_bound(s.w, s.h)),
        "complexity": complexity_report(args.layers, dims, s),
    }
    print(f"dense MACs: {report['dense_macs']}")
    print(f"sparse MACs bound: {report['sparse_macs_bound']:g}")
    print(f"reduction factor bound: {report['reduction_bound']:g}")
    if dims.d <= dims.f:
        print("note: d <= f, the cheaper left-order product is charged")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    return EXIT_OK


def _cmd_synth(args) -> int:
    if args.kind == "ba":
        ds = synth_barabasi_albert(args.n, args.m_attach, args.seed, args.n_classes)
    else:
        ds = synth_erdos_renyi(args.n, args.p, args.seed, args.n_classes)
    path = write_dataset_dir(ds, args.out)
    print(f"wrote {ds.name} ({ds.n_nodes} nodes, {len(ds.edges)} directed edges) to {path}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    results = run_checks(args.seed)
    for name, ok in results.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    return EXIT_OK if all(results.values()) else EXIT_VALIDATION


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on unknown flags already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"cost": _cmd_cost, "synth": _cmd_synth, "validate": _cmd_validate}
    try:
        return handlers.get(args.command, _cmd_experiment)(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValidationError, ParseError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
