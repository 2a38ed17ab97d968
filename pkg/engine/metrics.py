"""Divergence estimators and mode-collapse diagnostics.

All logarithms are natural, so the Jensen-Shannon divergence is bounded by ln 2.
"""
from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass

import numpy as np

from engine import toydata
from engine.toydata import DataSpec

logger = logging.getLogger(__name__)

KL_EPS = 1e-10
DEFAULT_BINS = 64
RADIUS_MULT = 3.0
MIN_SHARE = 0.01
METRIC_FIELDS = (
    "step",
    "d_loss",
    "g_loss",
    "kl",
    "js",
    "w1",
    "modes_covered",
    "high_quality_fraction",
    "d_accuracy",
)


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class Histogram:
    probs: np.ndarray
    edges: np.ndarray

    @property
    def bins(self) -> int:
        return int(self.probs.size)

    def same_layout(self, other: Histogram) -> bool:
        return self.edges.shape == other.edges.shape and bool(np.array_equal(self.edges, other.edges))


@dataclass(frozen=True)
class MetricsRecord:
    step: int
    d_loss: float
    g_loss: float
    kl: float
    js: float
    w1: float
    modes_covered: int
    high_quality_fraction: float
    d_accuracy: float

    def as_dict(self) -> dict[str, float | int]:
        return asdict(self)


def histogram(samples: Sequence[float] | np.ndarray, bins: int, lo: float, hi: float) -> Histogram:
    """Normalized counts on uniform bins; out-of-range samples land in the edge bins."""
    if bins < 2:
        raise MetricsError(f"need at least 2 bins, got {bins}")
    if not lo < hi:
        raise MetricsError(f"need lo < hi, got [{lo}, {hi}]")
    values = np.asarray(samples, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise MetricsError("cannot build a histogram from an empty sample set")
    edges = np.linspace(lo, hi, bins + 1)
    idx = np.floor((values - lo) / (hi - lo) * bins).astype(np.int64)
    idx = np.clip(idx, 0, bins - 1)
    counts = np.bincount(idx, minlength=bins).astype(np.float64)
    return Histogram(counts / counts.sum(), edges)


def _check_layout(p: Histogram, q: Histogram) -> None:
    if not p.same_layout(q):
        raise MetricsError("histograms have different bin layouts")


def kl(p: Histogram, q: Histogram, eps: float = KL_EPS) -> float:
    """sum P log((P + eps) / (Q + eps)); eps=0 gives the raw, possibly infinite value."""
    _check_layout(p, q)
    mask = p.probs > 0
    pp, qq = p.probs[mask], q.probs[mask]
    with np.errstate(divide="ignore"):
        return float(np.sum(pp * np.log((pp + eps) / (qq + eps))))


def js(p: Histogram, q: Histogram) -> float:
    _check_layout(p, q)
    m = Histogram(0.5 * (p.probs + q.probs), p.edges)
    value = 0.5 * kl(p, m, eps=0.0) + 0.5 * kl(q, m, eps=0.0)
    return float(min(max(value, 0.0), math.log(2.0)))


def w1_exact(xs: Sequence[float] | np.ndarray, ys: Sequence[float] | np.ndarray) -> float:
    """Exact 1-D earth mover's distance between equal-size empirical samples."""
    a = np.sort(np.asarray(xs, dtype=np.float64).reshape(-1))
    b = np.sort(np.asarray(ys, dtype=np.float64).reshape(-1))
    if a.size != b.size:
        raise MetricsError(f"sample sizes differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise MetricsError("w1 needs at least one sample")
    return float(np.mean(np.abs(a - b)))


def mode_stats(
    samples: np.ndarray,
    centers: np.ndarray,
    std: float,
    radius_mult: float = RADIUS_MULT,
    min_share: float = MIN_SHARE,
) -> tuple[int, float]:
    """(modes covered, share of samples within radius_mult*std of their nearest center)."""
    c = np.asarray(centers, dtype=np.float64)
    if c.size == 0:
        raise MetricsError("mode_stats needs at least one center")
    if c.ndim == 1:
        c = c[:, None]
    x = np.asarray(samples, dtype=np.float64).reshape(-1, c.shape[1])
    if x.shape[0] == 0:
        return 0, 0.0
    d2 = np.sum((x[:, None, :] - c[None, :, :]) ** 2, axis=2)
    nearest = np.argmin(d2, axis=1)
    close = np.sqrt(d2[np.arange(x.shape[0]), nearest]) <= radius_mult * std
    hits = np.bincount(nearest[close], minlength=c.shape[0])
    covered = int(np.sum(hits >= min_share * x.shape[0]))
    return covered, float(np.mean(close))


def d_accuracy(p_real: Sequence[float] | np.ndarray, p_fake: Sequence[float] | np.ndarray) -> float:
    """Share of real scored > 0.5 plus fake scored <= 0.5."""
    r = np.asarray(p_real, dtype=np.float64).reshape(-1)
    f = np.asarray(p_fake, dtype=np.float64).reshape(-1)
    total = r.size + f.size
    if total == 0:
        raise MetricsError("d_accuracy needs at least one score")
    return float((np.sum(r > 0.5) + np.sum(f <= 0.5)) / total)


@dataclass(frozen=True)
class SampleScore:
    kl: float
    js: float
    w1: float
    modes_covered: int
    high_quality_fraction: float


def score_samples(
    samples: np.ndarray,
    reference: np.ndarray,
    dist: DataSpec,
    bins: int = DEFAULT_BINS,
) -> SampleScore:
    """Score generated samples against reference draws of ``dist``.

    KL/JS are averaged over per-axis marginal histograms on the distribution's
    evaluation range; w1 is the per-axis mean of the exact 1-D distance.
    """
    x = np.asarray(samples, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if ref.ndim == 1:
        ref = ref[:, None]
    if x.shape[1] != ref.shape[1]:
        raise MetricsError(f"sample width {x.shape[1]} does not match reference {ref.shape[1]}")
    n = min(x.shape[0], ref.shape[0])
    ranges = toydata.eval_range(dist)
    kls, jss, w1s = [], [], []
    for axis, (lo, hi) in enumerate(ranges):
        p = histogram(ref[:, axis], bins, lo, hi)
        q = histogram(x[:, axis], bins, lo, hi)
        kls.append(kl(p, q))
        jss.append(js(p, q))
        w1s.append(w1_exact(x[:n, axis], ref[:n, axis]))
    if isinstance(dist, (toydata.Gaussian1D, *toydata.MIXTURES)):
        covered, hq = mode_stats(x, dist.centers(), dist.mode_std)
    elif isinstance(dist, toydata.TwoDomainData):
        covered, hq = mode_stats(x, toydata.domain_b_centers(), toydata.DOMAIN_SCALE * 0.05)
    else:
        covered, hq = 0, float("nan")
    return SampleScore(
        kl=float(np.mean(kls)),
        js=float(np.mean(jss)),
        w1=float(np.mean(w1s)),
        modes_covered=covered,
        high_quality_fraction=hq,
    )
