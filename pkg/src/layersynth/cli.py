"""Command-line driver: synthesize controllers, validate them, print stats.

Exit codes: 0 success, 1 configuration error, 2 synthesis error,
3 validation found violations.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import controller as ctrl
from . import synthesis
from .config import ConfigError, ProblemConfig, load_config
from .grid import export_cellset_csv, gamma_down
from .problem import REACH_AVOID

_RUNNERS = {
    "eager-safe": lambda s, st, sp, c: synthesis.eager_safe(
        s, st, sp, substeps=c.substeps, workers=c.workers
    ),
    "lazy-safe": lambda s, st, sp, c: synthesis.lazy_safe(
        s, st, sp, substeps=c.substeps, workers=c.workers
    ),
    "eager-reach": lambda s, st, sp, c: synthesis.eager_reach(
        s, st, sp, m=c.m, substeps=c.substeps, workers=c.workers
    ),
    "lazy-reach": lambda s, st, sp, c: synthesis.lazy_reach(
        s, st, sp, m=c.m, substeps=c.substeps, workers=c.workers
    ),
    "single-layer": lambda s, st, sp, c: synthesis.single_layer(
        s, st, sp, substeps=c.substeps, workers=c.workers
    ),
}


def run_synthesis(config: ProblemConfig, out_dir: Path) -> dict:
    """Synthesize per the configuration and write all output files."""
    sys_ = config.build_system()
    stack = config.build_stack()
    spec = config.build_spec()
    t0 = time.perf_counter()
    result = _RUNNERS[config.algorithm](sys_, stack, spec, config)
    total = time.perf_counter() - t0
    out_dir.mkdir(parents=True, exist_ok=True)

    export_cellset_csv(stack, result.winning, out_dir / "winning_layer1.csv")
    domains = {l: None for l in range(1, stack.levels + 1)}
    for stage in result.controller.stages:
        dom = stage.domain
        if domains[stage.layer] is None:
            domains[stage.layer] = dom.copy()
        else:
            domains[stage.layer].union_update(dom)
    for l in range(1, stack.levels + 1):
        dom = domains[l]
        if dom is None:
            from .grid import CellSet

            dom = CellSet.empty(stack, l)
        export_cellset_csv(stack, dom, out_dir / f"domain_layer{l}.csv")
    ctrl.save(result.controller, out_dir / "controller.mlc")

    stats = result.stats.to_dict()
    stats["config"] = config.to_dict()
    stats["winning_layer1_cells"] = result.winning.count()
    stats["stages"] = [
        {"layer": s.layer, "stage": s.stage, "cells": s.domain.count()}
        for s in result.controller.stages
    ]
    with open(out_dir / "stats.json", "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
        fh.write("\n")
    timings = dict(result.stats.timings)
    timings["total"] = total
    with open(out_dir / "timings.json", "w", encoding="utf-8") as fh:
        json.dump(timings, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if result.winning.is_empty():
        print("warning: winning set is empty", file=sys.stderr)
    print(
        f"{config.algorithm}: winning layer-1 cells = {result.winning.count()}, "
        f"stages = {len(result.controller.stages)}, wall = {total:.2f}s"
    )
    return stats


def run_validation(
    controller_path: Path, config: ProblemConfig, runs: int, horizon: int, seed: int, out: Path | None
) -> ctrl.ValidationReport:
    mlc = ctrl.load(controller_path)
    sys_ = config.build_system()
    spec = config.build_spec()
    report = ctrl.validate(
        mlc, sys_, spec, runs, horizon, seed, substeps_base=config.substeps, workers=config.workers
    )
    payload = report.to_dict()
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    print(json.dumps(payload, indent=2, sort_keys=True))
    return report


def _cmd_synthesize(args) -> int:
    try:
        config = load_config(args.config)
        if args.algorithm:
            config.algorithm = args.algorithm
        if args.layers:
            config.layers = args.layers
        if args.m:
            config.m = args.m
        if args.threads:
            config.workers = args.threads
        if config.algorithm not in _RUNNERS:
            raise ConfigError(f"algorithm: unknown algorithm {config.algorithm!r}")
        config.build_stack()
        out_dir = Path(args.out or config.out_dir)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    try:
        run_synthesis(config, out_dir)
    except Exception as exc:  # noqa: BLE001 - surfaced as exit status
        print(f"synthesis error: {exc}", file=sys.stderr)
        return 2
    return 0


def _cmd_validate(args) -> int:
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    try:
        report = run_validation(
            Path(args.controller),
            config,
            args.runs,
            args.horizon,
            args.seed,
            Path(args.out) if args.out else None,
        )
    except Exception as exc:  # noqa: BLE001
        print(f"validation error: {exc}", file=sys.stderr)
        return 2
    return 3 if report.violations else 0


def _cmd_stats(args) -> int:
    path = Path(args.indir) / "stats.json"
    try:
        with open(path, "r", encoding="utf-8") as fh:
            stats = json.load(fh)
    except OSError as exc:
        print(f"cannot read {path}: {exc}", file=sys.stderr)
        return 1
    levels = stats.get("levels", 0)
    print(f"layers: {levels}")
    print(f"layer-1 winning cells: {stats.get('winning_layer1_cells')}")
    trans = stats.get("transitions_per_layer", [])
    cpre = stats.get("cpre_evals", [])
    fp = stats.get("fp_iterations", [])
    for l in range(1, levels + 1):
        print(
            f"  layer {l}: transitions={trans[l-1] if l <= len(trans) else 0} "
            f"cpre_evals={cpre[l-1] if l <= len(cpre) else 0} "
            f"fp_iterations={fp[l-1] if l <= len(fp) else 0}"
        )
    for stage in stats.get("stages", []):
        print(f"  stage {stage['stage']}: layer {stage['layer']}, {stage['cells']} cells")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layersynth",
        description="Multi-resolution symbolic controller synthesis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_syn = sub.add_parser("synthesize", help="run controller synthesis from a config")
    p_syn.add_argument("--config", required=True)
    p_syn.add_argument("--algorithm", choices=sorted(_RUNNERS))
    p_syn.add_argument("--layers", type=int)
    p_syn.add_argument("--m", type=int)
    p_syn.add_argument("--threads", type=int)
    p_syn.add_argument("--out")
    p_syn.set_defaults(func=_cmd_synthesize)

    p_val = sub.add_parser("validate", help="Monte Carlo closed-loop validation")
    p_val.add_argument("--controller", required=True)
    p_val.add_argument("--config", required=True)
    p_val.add_argument("--runs", type=int, default=100)
    p_val.add_argument("--horizon", type=int, default=200)
    p_val.add_argument("--seed", type=int, default=0)
    p_val.add_argument("--out")
    p_val.set_defaults(func=_cmd_validate)

    p_stats = sub.add_parser("stats", help="pretty-print a stats file")
    p_stats.add_argument("--in", dest="indir", required=True)
    p_stats.set_defaults(func=_cmd_stats)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
