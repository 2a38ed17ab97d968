"""Run-directory files: metrics/sample CSVs, run logs, SVG histograms and comparison tables.

Floats are written with ``repr`` so every CSV and JSON file parses back to the
exact values that were recorded.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from engine import metrics, toydata
from engine.metrics import MetricsRecord
from engine.nn import ParameterSet, save_parameters
from engine.toydata import DataSpec, Rng
from engine.trainers import RunLog

logger = logging.getLogger(__name__)

METRICS_HEADER = ("step", "d_loss", "g_loss", "kl", "js", "w1", "modes_covered", "hq_frac", "d_acc")
INDEX_PREFIX = ("cell", "label", "seed", "run_id", "status", "wall_time")
COMPARE_HEADER = ("model", "runs", "diverged", "js", "w1", "modes_covered", "wall_time")

METRICS_FILE = "metrics.csv"
SAMPLES_FILE = "samples.csv"
RUNLOG_FILE = "runlog.json"
TIMING_FILE = "timing.json"
CONFIG_ECHO_FILE = "config.yaml"
GENERATOR_FILE = "generator.json"
HISTOGRAM_FILE = "histogram.svg"
INDEX_FILE = "index.csv"
COMPARE_CSV = "compare.csv"
COMPARE_MD = "compare.md"


def fmt(value: float | int) -> str:
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def _record_row(record: MetricsRecord) -> list[str]:
    return [
        fmt(record.step),
        fmt(record.d_loss),
        fmt(record.g_loss),
        fmt(record.kl),
        fmt(record.js),
        fmt(record.w1),
        fmt(record.modes_covered),
        fmt(record.high_quality_fraction),
        fmt(record.d_accuracy),
    ]


def _record_from_row(row: Sequence[str]) -> MetricsRecord:
    step, d_loss, g_loss, kl, js, w1, modes, hq, acc = row
    return MetricsRecord(
        step=int(step),
        d_loss=float(d_loss),
        g_loss=float(g_loss),
        kl=float(kl),
        js=float(js),
        w1=float(w1),
        modes_covered=int(modes),
        high_quality_fraction=float(hq),
        d_accuracy=float(acc),
    )


def metrics_csv(records: Iterable[MetricsRecord]) -> str:
    output = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(METRICS_HEADER)
    for record in records:
        writer.writerow(_record_row(record))
    return output.getvalue()


def parse_metrics_csv(text: str) -> list[MetricsRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != METRICS_HEADER:
        raise ValueError(f"metrics header must be {','.join(METRICS_HEADER)}")
    return [_record_from_row(row) for row in rows[1:] if row]


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _read(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc


def write_metrics(records: Iterable[MetricsRecord], path: Path) -> Path:
    return _write(path, metrics_csv(records))


def read_metrics(path: Path) -> list[MetricsRecord]:
    return parse_metrics_csv(_read(path))


def write_samples(samples: np.ndarray, path: Path) -> Path:
    return _write(path, toydata.to_csv(samples))


def read_samples(path: Path) -> np.ndarray:
    return toydata.from_csv(_read(path))


# --- run logs -------------------------------------------------------------


def runlog_to_dict(log: RunLog) -> dict[str, Any]:
    samples = np.asarray(log.samples, dtype=np.float64)
    return {
        "version": 1,
        "run_id": log.run_id,
        "status": log.status,
        "config": log.config,
        "records": [r.as_dict() for r in log.records],
        "samples": samples.tolist(),
        "diagnostics": log.diagnostics,
        "counters": log.counters,
    }


def runlog_from_dict(doc: dict[str, Any]) -> RunLog:
    records = [MetricsRecord(**r) for r in doc.get("records", [])]
    samples = np.asarray(doc.get("samples", []), dtype=np.float64)
    data = doc.get("config", {}).get("data")
    if samples.size == 0 and data is not None:
        samples = samples.reshape(0, toydata.from_description(data).dim)
    return RunLog(
        config=doc.get("config", {}),
        records=records,
        samples=samples,
        wall_time=float(doc.get("wall_time", 0.0)),
        status=str(doc.get("status", "")),
        diagnostics=dict(doc.get("diagnostics", {})),
        counters=dict(doc.get("counters", {})),
        timings=dict(doc.get("timings", {})),
        run_id=str(doc.get("run_id", "")),
    )


def write_runlog(log: RunLog, path: Path) -> Path:
    return _write(path, json.dumps(runlog_to_dict(log), indent=2, sort_keys=True))


def write_timing(log: RunLog, path: Path) -> Path:
    """Wall-clock time and phase timings; runlog.json carries neither."""
    return _write(path, json.dumps({"wall_time": log.wall_time, "timings": log.timings}, indent=2, sort_keys=True))


def read_runlog(path: Path) -> RunLog:
    try:
        doc = json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path} is not a run log: {exc}") from exc
    timing = Path(path).with_name(TIMING_FILE)
    if timing.exists():
        try:
            doc.update(json.loads(_read(timing)))
        except json.JSONDecodeError:
            logger.warning("ignoring unreadable %s", timing)
    return runlog_from_dict(doc)


def reference_draws(dist: DataSpec, n: int, rng: Rng) -> np.ndarray:
    """Target samples to score against; translation tasks score the output domain."""
    if isinstance(dist, toydata.PairedData):
        return toydata.make_paired(n, rng, dist.noise).y
    if isinstance(dist, toydata.TwoDomainData):
        return toydata.make_two_domain(n, rng).b
    return toydata.sample(dist, n, rng)


def rescore(log: RunLog, seed: int | None = None) -> metrics.SampleScore:
    """Score the stored samples of a finished run against fresh reference draws."""
    data = toydata.from_description(log.config["data"])
    samples = np.asarray(log.samples, dtype=np.float64)
    if samples.shape[0] == 0:
        raise ValueError(f"run {log.run_id or '?'} stored no samples")
    run_seed = int(log.config.get("seed", 0)) if seed is None else int(seed)
    rng = Rng(run_seed).stream("eval/rescore")
    return metrics.score_samples(samples, reference_draws(data, samples.shape[0], rng), data)


# --- SVG ------------------------------------------------------------------

_PANEL_W, _PANEL_H, _PAD = 480, 200, 30


def _panel(generated: np.ndarray, reference: np.ndarray, lo: float, hi: float, top: int, title: str) -> list[str]:
    bins = metrics.DEFAULT_BINS
    gen = metrics.histogram(generated, bins, lo, hi).probs
    ref = metrics.histogram(reference, bins, lo, hi).probs
    peak = max(float(gen.max(initial=0.0)), float(ref.max(initial=0.0)), 1e-12)
    width = (_PANEL_W - 2 * _PAD) / bins
    base = top + _PANEL_H - _PAD
    height = _PANEL_H - 2 * _PAD

    parts = [
        f'<text x="{_PAD}" y="{top + 18}" font-size="12">{title}</text>',
        f'<line x1="{_PAD}" y1="{base}" x2="{_PANEL_W - _PAD}" y2="{base}" stroke="black"/>',
        f'<text x="{_PAD}" y="{base + 14}" font-size="10">{lo:.2f}</text>',
        f'<text x="{_PANEL_W - _PAD}" y="{base + 14}" font-size="10" text-anchor="end">{hi:.2f}</text>',
    ]
    for i, p in enumerate(gen):
        h = height * float(p) / peak
        parts.append(
            f'<rect x="{_PAD + i * width:.2f}" y="{base - h:.2f}" width="{width:.2f}" '
            f'height="{h:.2f}" fill="steelblue" fill-opacity="0.6"/>'
        )
    points = " ".join(
        f"{_PAD + (i + 0.5) * width:.2f},{base - height * float(p) / peak:.2f}" for i, p in enumerate(ref)
    )
    parts.append(f'<polyline points="{points}" fill="none" stroke="crimson" stroke-width="1.5"/>')
    return parts


def histogram_svg(samples: np.ndarray, dist: DataSpec, seed: int = 0) -> str:
    """Generated histogram (bars) against the target (line), one panel per axis."""
    x = np.asarray(samples, dtype=np.float64).reshape(-1, dist.dim)
    reference = reference_draws(dist, max(x.shape[0], 2000), Rng(seed).stream("eval/svg"))
    ranges = toydata.eval_range(dist)
    body: list[str] = []
    for axis, (lo, hi) in enumerate(ranges):
        body.extend(_panel(x[:, axis], reference[:, axis], lo, hi, axis * _PANEL_H, f"axis {axis}"))
    total_h = _PANEL_H * len(ranges)
    return "\n".join(
        [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_PANEL_W}" height="{total_h}" '
            f'viewBox="0 0 {_PANEL_W} {total_h}">',
            '<rect width="100%" height="100%" fill="white"/>',
            *body,
            "</svg>",
            "",
        ]
    )


# --- run directory --------------------------------------------------------


def write_run(
    run_dir: Path,
    log: RunLog,
    config_text: str,
    *,
    generator: ParameterSet | None = None,
    svg: bool = True,
) -> Path:
    """Write every per-run artifact into ``run_dir``."""
    run_dir = Path(run_dir)
    write_metrics(log.records, run_dir / METRICS_FILE)
    write_samples(log.samples, run_dir / SAMPLES_FILE)
    write_runlog(log, run_dir / RUNLOG_FILE)
    write_timing(log, run_dir / TIMING_FILE)
    _write(run_dir / CONFIG_ECHO_FILE, config_text)
    if generator is not None:
        try:
            save_parameters(generator, run_dir / GENERATOR_FILE)
        except OSError as exc:
            raise OSError(f"cannot write {run_dir / GENERATOR_FILE}: {exc.strerror or exc}") from exc
    if svg and np.asarray(log.samples).shape[0]:
        dist = toydata.from_description(log.config["data"])
        _write(run_dir / HISTOGRAM_FILE, histogram_svg(log.samples, dist, int(log.config.get("seed", 0))))
    logger.info("wrote run %s to %s", log.run_id, run_dir)
    return run_dir


# --- sweep index ----------------------------------------------------------


@dataclass(frozen=True)
class IndexRow:
    cell: int
    label: str
    seed: int
    run_id: str
    status: str
    wall_time: float
    final: MetricsRecord | None


def index_csv(rows: Iterable[IndexRow]) -> str:
    output = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow([*INDEX_PREFIX, *METRICS_HEADER])
    for row in rows:
        prefix = [str(row.cell), row.label, str(row.seed), row.run_id, row.status, fmt(row.wall_time)]
        writer.writerow(prefix + (_record_row(row.final) if row.final else [""] * len(METRICS_HEADER)))
    return output.getvalue()


def write_index(rows: Iterable[IndexRow], path: Path) -> Path:
    return _write(path, index_csv(rows))


def read_index(path: Path) -> list[IndexRow]:
    rows = list(csv.reader(io.StringIO(_read(path))))
    out = []
    width = len(INDEX_PREFIX)
    for row in rows[1:]:
        if not row:
            continue
        final = _record_from_row(row[width:]) if row[width] else None
        out.append(IndexRow(int(row[0]), row[1], int(row[2]), row[3], row[4], float(row[5]), final))
    return out


# --- GAN vs diffusion comparison ------------------------------------------


@dataclass(frozen=True)
class CompareRow:
    model: str
    runs: int
    diverged: int
    js: float
    w1: float
    modes_covered: float
    wall_time: float


def summarize(model: str, logs: Sequence[RunLog]) -> CompareRow:
    """Mean final metrics over completed runs; divergences are counted, not averaged."""
    finals = [log.final for log in logs if not log.diverged and log.final is not None]

    def mean(values: list[float]) -> float:
        return float(np.mean(values)) if values else math.nan

    return CompareRow(
        model=model,
        runs=len(logs),
        diverged=sum(1 for log in logs if log.diverged),
        js=mean([f.js for f in finals]),
        w1=mean([f.w1 for f in finals]),
        modes_covered=mean([float(f.modes_covered) for f in finals]),
        wall_time=mean([log.wall_time for log in logs]),
    )


def compare_csv(rows: Iterable[CompareRow]) -> str:
    output = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow(COMPARE_HEADER)
    for r in rows:
        writer.writerow([r.model, str(r.runs), str(r.diverged), fmt(r.js), fmt(r.w1), fmt(r.modes_covered), fmt(r.wall_time)])
    return output.getvalue()


def compare_markdown(rows: Sequence[CompareRow]) -> str:
    lines = [
        "| aspect | " + " | ".join(r.model for r in rows) + " |",
        "|---|" + "---|" * len(rows),
        "| training stability (diverged runs) | " + " | ".join(f"{r.diverged}/{r.runs}" for r in rows) + " |",
        "| sample diversity (modes covered) | " + " | ".join(f"{r.modes_covered:.2f}" for r in rows) + " |",
        "| sample quality (JS) | " + " | ".join(f"{r.js:.4f}" for r in rows) + " |",
        "| sample quality (W1) | " + " | ".join(f"{r.w1:.4f}" for r in rows) + " |",
        "| cost (wall time, s) | " + " | ".join(f"{r.wall_time:.2f}" for r in rows) + " |",
    ]
    return "\n".join(lines) + "\n"


def write_compare(rows: Sequence[CompareRow], out_dir: Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    return _write(out_dir / COMPARE_CSV, compare_csv(rows)), _write(out_dir / COMPARE_MD, compare_markdown(rows))
