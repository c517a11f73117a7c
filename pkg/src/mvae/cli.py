"""Command-line entry point: ``mvae run|sweep|eval``.

Exit status is 0 on success, 1 when a run or sweep fails (including sweeps
that produced error rows) and 2 for usage or configuration errors.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, MVaeError
from .experiment import (
    ExperimentConfig,
    emit_results,
    evaluate_run,
    run_single,
    run_sweep,
    write_rows,
)
from .objective import LITERAL, STANDARD
from .trainer import OBJECTIVES


def _parser():
    p = argparse.ArgumentParser(prog="mvae", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, type=Path, help="experiment JSON file")
        sp.add_argument("--out", type=Path, help="output directory (overrides out_dir)")
        sp.add_argument("--seed", type=int, action="append",
                        help="seed override; repeat for several seeds")
        sp.add_argument("--psi-mode", choices=(STANDARD, LITERAL))
        sp.add_argument("--alpha", type=float, help="fixed M1+M2 weight instead of the oracle")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")

    run = sub.add_parser("run", help="train and evaluate a single configuration")
    common(run)
    run.add_argument("--objective", choices=OBJECTIVES)

    sweep = sub.add_parser("sweep", help="both objectives over the p1 grid and seeds")
    common(sweep)
    sweep.add_argument("--objective", choices=OBJECTIVES, action="append",
                       help="restrict to one objective (default: both)")
    sweep.add_argument("--jobs", type=int, default=1, help="concurrent runs")

    ev = sub.add_parser("eval", help="recompute accuracy from a saved run directory")
    ev.add_argument("run_dir", type=Path)
    return p


def _load(args):
    cfg = ExperimentConfig.load(args.config)
    over = {}
    if args.seed:
        over["seeds"] = args.seed
    if args.out is not None:
        over["out_dir"] = str(args.out)
    if args.alpha is not None:
        over["alpha"] = args.alpha
    train = dict(cfg.train)
    if args.psi_mode:
        train["psi_mode"] = args.psi_mode
    d = {**cfg.to_dict(), **over, "train": train}
    if args.command == "run" and args.objective:
        d["objective"] = args.objective
    return ExperimentConfig.from_dict(d)


def _write_rows(rows, cfg, fmt):
    if cfg.out_dir is None:
        write_rows(rows, sys.stdout, fmt)
        return
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = emit_results(rows, out / f"results.{fmt}", fmt)
    logging.getLogger("mvae").info("wrote %s", path)


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "eval":
            print(json.dumps(evaluate_run(args.run_dir), indent=2))
            return 0
        cfg = _load(args)
        if args.command == "run":
            if cfg.flip is None and cfg.sweep is not None:
                raise ConfigError("run needs a flip vector; use sweep for a p1 grid")
            rows = [run_single(cfg, seed=s, out_dir=cfg.out_dir) for s in cfg.seeds]
        else:
            objectives = tuple(args.objective) if args.objective else OBJECTIVES
            rows = run_sweep(cfg, jobs=args.jobs, out_dir=cfg.out_dir, objectives=objectives)
        _write_rows(rows, cfg, args.format)
        failed = [r for r in rows if r.error]
        for r in failed:
            print(f"error: p1={r.p1} seed={r.seed} {r.objective}: {r.error}", file=sys.stderr)
        return 1 if failed else 0
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2
    except (MVaeError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
