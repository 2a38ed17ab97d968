"""Run one experiment into a directory, or a whole sweep grid across worker processes."""
from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from engine import trainers
from engine.diffusion import train_denoiser
from engine.trainers import RunLog
from ganlab import reporting
from ganlab.experiment import Experiment, SweepCell, SweepSpec, print_experiment

logger = logging.getLogger(__name__)


def run_experiment(experiment: Experiment, run_dir: Path, *, svg: bool = True) -> RunLog:
    """Train, then write metrics, samples, run log, config echo and generator weights."""
    trainer = trainers.make_trainer(experiment.train)
    log = trainer.run()
    reporting.write_run(
        run_dir,
        log,
        print_experiment(experiment),
        generator=trainer.bundle.generator.trainable(),
        svg=svg,
    )
    return log


def run_diffusion(experiment: Experiment, run_dir: Path, *, svg: bool = True) -> RunLog:
    denoiser, log = train_denoiser(experiment.train.data, experiment.diffusion_or_default())
    reporting.write_run(
        run_dir,
        log,
        print_experiment(experiment),
        generator=denoiser.network.trainable(),
        svg=svg,
    )
    return log


def cell_dir(out_dir: Path, cell: SweepCell) -> Path:
    return Path(out_dir) / f"cell{cell.index:04d}-s{cell.seed}"


def run_cell(cell: SweepCell, out_dir: Path, svg: bool) -> reporting.IndexRow:
    """Worker entry point; a diverged run is an ordinary row."""
    log = run_experiment(cell.experiment, cell_dir(out_dir, cell), svg=svg)
    return reporting.IndexRow(
        cell=cell.index,
        label=cell.label,
        seed=cell.seed,
        run_id=log.run_id,
        status=log.status,
        wall_time=log.wall_time,
        final=log.final,
    )


def _collect(
    cells: Sequence[SweepCell],
    out_dir: Path,
    svg: bool,
    parallel: int,
    worker: Callable[[SweepCell, Path, bool], reporting.IndexRow],
) -> list[reporting.IndexRow]:
    if parallel <= 1 or len(cells) <= 1:
        return [worker(cell, out_dir, svg) for cell in cells]
    with ProcessPoolExecutor(max_workers=parallel) as pool:
        futures = [pool.submit(worker, cell, out_dir, svg) for cell in cells]
        return [f.result() for f in futures]


def run_sweep(spec: SweepSpec, out_dir: Path, *, parallel: int = 1, svg: bool = False) -> list[reporting.IndexRow]:
    """Run every cell and write ``index.csv``; rows are ordered by cell whatever the pool size."""
    cells = list(spec.cells())
    logger.info("sweep: %d runs over %d axes, %d workers", len(cells), len(spec.axes), parallel)
    rows = sorted(_collect(cells, Path(out_dir), svg, parallel, run_cell), key=lambda r: r.cell)
    reporting.write_index(rows, Path(out_dir) / reporting.INDEX_FILE)
    diverged = sum(1 for r in rows if r.status == trainers.STATUS_DIVERGED)
    if diverged:
        logger.warning("sweep: %d of %d runs diverged", diverged, len(rows))
    return rows


def compare(
    experiment: Experiment,
    seeds: Sequence[int],
    out_dir: Path,
    *,
    svg: bool = False,
) -> list[reporting.CompareRow]:
    """Matched GAN and diffusion runs on the same data and seeds; writes compare.csv and compare.md."""
    out_dir = Path(out_dir)
    gan_logs: list[RunLog] = []
    ddpm_logs: list[RunLog] = []
    for seed in seeds:
        seeded = Experiment(
            trainers.with_seed(experiment.train, seed),
            replace(experiment.diffusion_or_default(), seed=int(seed)),
        )
        gan_logs.append(run_experiment(seeded, out_dir / f"gan-s{seed}", svg=svg))
        ddpm_logs.append(run_diffusion(seeded, out_dir / f"ddpm-s{seed}", svg=svg))
    rows = [
        reporting.summarize(experiment.train.algorithm, gan_logs),
        reporting.summarize("ddpm", ddpm_logs),
    ]
    reporting.write_compare(rows, out_dir)
    return rows
