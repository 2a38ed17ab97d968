"""Command-line verbs: train, eval, sweep, gradcheck, compare."""
from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from dataclasses import replace
from pathlib import Path

from engine import gradcheck, trainers
from engine.toydata import DataError
from engine.trainers import ConfigError
from ganlab import reporting, sweep
from ganlab.config import get_out_dir, get_parallelism, gradcheck_cases, svg_enabled
from ganlab.experiment import Experiment, load_experiment, load_sweep

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

DEFAULT_COMPARE_RUNS = 5


def _svg(flag: str | None) -> bool:
    return svg_enabled() if flag is None else flag == "on"


def _seeded(experiment: Experiment, seed: int | None) -> Experiment:
    if seed is None:
        return experiment
    diffusion = replace(experiment.diffusion, seed=seed) if experiment.diffusion else None
    return Experiment(trainers.with_seed(experiment.train, seed), diffusion)


def cmd_train(config_path: Path, out_dir: Path | None = None, *, seed: int | None = None, svg: bool = True) -> int:
    experiment = _seeded(load_experiment(config_path), seed)
    run_dir = Path(out_dir) if out_dir else get_out_dir() / experiment.train.run_id()
    log = sweep.run_experiment(experiment, run_dir, svg=svg)
    final = log.final
    print(f"{log.run_id}: {log.status} after {len(log.records)} evaluations -> {run_dir}")
    if final is not None:
        print(f"  js={final.js:.4f} w1={final.w1:.4f} modes={final.modes_covered} d_acc={final.d_accuracy:.3f}")
    return EXIT_OK


def cmd_eval(runlog_path: Path, *, seed: int | None = None) -> int:
    path = Path(runlog_path)
    if path.is_dir():
        path = path / reporting.RUNLOG_FILE
    log = reporting.read_runlog(path)
    score = reporting.rescore(log, seed)
    print(f"{log.run_id or path.parent.name}: status={log.status}")
    print(
        f"  kl={score.kl!r} js={score.js!r} w1={score.w1!r} "
        f"modes={score.modes_covered} hq_frac={score.high_quality_fraction!r}"
    )
    for key, value in sorted(log.diagnostics.items()):
        print(f"  {key}={value!r}")
    return EXIT_OK


def cmd_sweep(sweep_path: Path, out_dir: Path | None = None, parallelism: int | None = None, *, svg: bool = False) -> int:
    spec = load_sweep(sweep_path)
    target = Path(out_dir) if out_dir else get_out_dir() / Path(sweep_path).stem
    rows = sweep.run_sweep(spec, target, parallel=parallelism or get_parallelism(), svg=svg)
    diverged = sum(1 for r in rows if r.status == trainers.STATUS_DIVERGED)
    print(f"{len(rows)} runs ({diverged} diverged) -> {target / reporting.INDEX_FILE}")
    return EXIT_OK


def cmd_gradcheck(cases: int | None = None, seed: int = 0) -> int:
    report = gradcheck.run_suite(cases or gradcheck_cases(), seed)
    for name, (ok, total) in report.summary().items():
        if ok != total:
            print(f"FAIL {name}: {ok}/{total}")
    print(f"{len(report.results) - len(report.failures)}/{len(report.results)} gradient checks passed")
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_compare(
    config_path: Path,
    out_dir: Path | None = None,
    *,
    seed: int | None = None,
    runs: int = DEFAULT_COMPARE_RUNS,
    svg: bool = False,
) -> int:
    experiment = load_experiment(config_path)
    seeds = [seed] if seed is not None else list(range(runs))
    target = Path(out_dir) if out_dir else get_out_dir() / f"compare-{Path(config_path).stem}"
    rows = sweep.compare(experiment, seeds, target, svg=svg)
    print(reporting.compare_markdown(rows), end="")
    print(f"-> {target / reporting.COMPARE_CSV}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ganlab", description="Desk-scale adversarial training lab")
    sub = parser.add_subparsers(dest="verb", required=True)

    train = sub.add_parser("train", help="Train one experiment and write its run directory")
    train.add_argument("--config", type=Path, required=True, metavar="PATH")
    train.add_argument("--out", type=Path, metavar="DIR")
    train.add_argument("--seed", type=int)
    train.add_argument("--svg", choices=("on", "off"))

    ev = sub.add_parser("eval", help="Re-score a finished run from its runlog.json")
    ev.add_argument("runlog", type=Path, metavar="PATH")
    ev.add_argument("--seed", type=int)

    sw = sub.add_parser("sweep", help="Run a sweep grid and write index.csv")
    sw.add_argument("--config", type=Path, required=True, metavar="PATH")
    sw.add_argument("--out", type=Path, metavar="DIR")
    sw.add_argument("--parallel", type=int, metavar="N")
    sw.add_argument("--svg", choices=("on", "off"), default="off")

    gc = sub.add_parser("gradcheck", help="Run the finite-difference gradient suite")
    gc.add_argument("--cases", type=int, metavar="N")
    gc.add_argument("--seed", type=int, default=0)

    cmp = sub.add_parser("compare", help="Matched GAN and diffusion runs, written as a comparison table")
    cmp.add_argument("--config", type=Path, required=True, metavar="PATH")
    cmp.add_argument("--out", type=Path, metavar="DIR")
    cmp.add_argument("--seed", type=int)
    cmp.add_argument("--runs", type=int, default=DEFAULT_COMPARE_RUNS, metavar="N")
    cmp.add_argument("--svg", choices=("on", "off"), default="off")
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "train":
            return cmd_train(args.config, args.out, seed=args.seed, svg=_svg(args.svg))
        if args.verb == "eval":
            return cmd_eval(args.runlog, seed=args.seed)
        if args.verb == "sweep":
            return cmd_sweep(args.config, args.out, args.parallel, svg=args.svg == "on")
        if args.verb == "gradcheck":
            return cmd_gradcheck(args.cases, args.seed)
        if args.verb == "compare":
            return cmd_compare(args.config, args.out, seed=args.seed, runs=args.runs, svg=args.svg == "on")
    except ConfigError as exc:
        where = getattr(args, "config", None)
        print(f"config error{f' in {where}' if where else ''}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, DataError, ValueError) as exc:
        logger.error("%s failed: %s", args.verb, exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE
