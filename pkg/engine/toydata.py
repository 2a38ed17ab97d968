"""Deterministic synthetic targets: Gaussians, mode mixtures, paired and two-domain sets.

Random streams use numpy's Philox4x64 counter-based bit generator seeded through a
``SeedSequence``; child streams come from ``SeedSequence.spawn`` (split) or from a
name-keyed spawn key (stream), so a run's draws depend only on its seed.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import zlib
from collections.abc import Sequence
from dataclasses import dataclass, fields
from typing import Any, Union

import numpy as np

logger = logging.getLogger(__name__)

PAIR_ROTATION = math.pi / 4
PAIR_NOISE = 0.05
DOMAIN_SCALE = 0.5
DOMAIN_SHIFT = (2.0, 2.0)


class DataError(ValueError):
    pass


class Rng:
    """Splittable Philox stream."""

    def __init__(self, seed: int, *, _sequence: np.random.SeedSequence | None = None):
        self.seed = int(seed)
        self._sequence = _sequence or np.random.SeedSequence(self.seed)
        self.generator = np.random.Generator(np.random.Philox(self._sequence))

    def split(self, n: int) -> list[Rng]:
        return [Rng(self.seed, _sequence=child) for child in self._sequence.spawn(n)]

    def stream(self, name: str) -> Rng:
        """Independent child stream keyed by ``name``; same name, same stream."""
        key = tuple(self._sequence.spawn_key) + (zlib.crc32(name.encode("utf-8")),)
        child = np.random.SeedSequence(self._sequence.entropy, spawn_key=key)
        return Rng(self.seed, _sequence=child)

    def normal(self, size: int | tuple[int, ...], loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
        return self.generator.normal(loc, scale, size)

    def uniform(self, size: int | tuple[int, ...], low: float = 0.0, high: float = 1.0) -> np.ndarray:
        return self.generator.uniform(low, high, size)

    def integers(self, low: int, high: int, size: int | tuple[int, ...]) -> np.ndarray:
        return self.generator.integers(low, high, size)


@dataclass(frozen=True)
class Gaussian1D:
    mean: float = 4.0
    std: float = 1.25

    def __post_init__(self) -> None:
        _check_std(self.std)

    @property
    def dim(self) -> int:
        return 1

    def centers(self) -> np.ndarray:
        return np.array([[self.mean]])

    @property
    def mode_std(self) -> float:
        return self.std


@dataclass(frozen=True)
class MixtureRing:
    k: int = 8
    radius: float = 2.0
    std: float = 0.05

    def __post_init__(self) -> None:
        _check_std(self.std)
        if self.k < 1:
            raise DataError(f"ring needs k >= 1, got {self.k}")

    @property
    def dim(self) -> int:
        return 2

    def centers(self) -> np.ndarray:
        angles = 2.0 * np.pi * np.arange(self.k) / self.k
        return self.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)

    @property
    def mode_std(self) -> float:
        return self.std


@dataclass(frozen=True)
class MixtureGrid:
    n: int = 5
    spacing: float = 2.0
    std: float = 0.05

    def __post_init__(self) -> None:
        _check_std(self.std)
        if self.n < 1:
            raise DataError(f"grid needs n >= 1, got {self.n}")

    @property
    def dim(self) -> int:
        return 2

    def centers(self) -> np.ndarray:
        axis = (np.arange(self.n) - (self.n - 1) / 2.0) * self.spacing
        xs, ys = np.meshgrid(axis, axis, indexing="ij")
        return np.stack([xs.reshape(-1), ys.reshape(-1)], axis=1)

    @property
    def mode_std(self) -> float:
        return self.std


@dataclass(frozen=True)
class LabeledMixture:
    means: tuple[tuple[float, ...], ...] = ()
    std: float = 0.05

    def __post_init__(self) -> None:
        _check_std(self.std)
        if not self.means:
            raise DataError("labeled mixture needs at least one center")
        widths = {len(c) for c in self.means}
        if len(widths) != 1:
            raise DataError("labeled mixture centers must share one dimension")

    @classmethod
    def ring(cls, k: int = 4, radius: float = 2.0, std: float = 0.05) -> LabeledMixture:
        centers = MixtureRing(k, radius, std).centers()
        return cls(tuple(tuple(float(v) for v in row) for row in centers), std)

    @property
    def dim(self) -> int:
        return len(self.means[0])

    @property
    def num_classes(self) -> int:
        return len(self.means)

    def centers(self) -> np.ndarray:
        return np.array(self.means, dtype=np.float64)

    @property
    def mode_std(self) -> float:
        return self.std


@dataclass(frozen=True)
class PairedData:
    """Marker for the supervised rotation pairs."""

    noise: float = PAIR_NOISE

    @property
    def dim(self) -> int:
        return 2


@dataclass(frozen=True)
class TwoDomainData:
    """Marker for the unaligned ring / shifted-ring domains."""

    @property
    def dim(self) -> int:
        return 2


DistributionSpec = Union[Gaussian1D, MixtureRing, MixtureGrid, LabeledMixture]
DataSpec = Union[Gaussian1D, MixtureRing, MixtureGrid, LabeledMixture, PairedData, TwoDomainData]
MIXTURES = (MixtureRing, MixtureGrid, LabeledMixture)


@dataclass
class PairedSet:
    x: np.ndarray
    y: np.ndarray


@dataclass
class TwoDomainSet:
    a: np.ndarray
    b: np.ndarray


def _check_std(std: float) -> None:
    if not std > 0:
        raise DataError(f"std must be positive, got {std}")


def _check_count(n: int) -> None:
    if int(n) < 1:
        raise DataError(f"sample count must be >= 1, got {n}")


def sample(dist: DistributionSpec, n: int, rng: Rng) -> np.ndarray:
    """n i.i.d. draws as an [n x d] matrix."""
    x, _ = sample_labeled(dist, n, rng)
    return x


def sample_labeled(dist: DistributionSpec, n: int, rng: Rng) -> tuple[np.ndarray, np.ndarray]:
    """Draws plus the index of the mode each came from (zeros for a single Gaussian)."""
    _check_count(n)
    n = int(n)
    if isinstance(dist, Gaussian1D):
        return rng.normal((n, 1), dist.mean, dist.std), np.zeros(n, dtype=np.int64)
    if isinstance(dist, MIXTURES):
        centers = dist.centers()
        modes = rng.integers(0, len(centers), n)
        noise = rng.normal((n, centers.shape[1]), 0.0, dist.std)
        return centers[modes] + noise, modes.astype(np.int64)
    raise DataError(f"cannot sample from {type(dist).__name__}")


def log_density(dist: DistributionSpec, x: Sequence[float] | np.ndarray | float) -> np.ndarray | float:
    """Exact log density; mixtures are log-sum-exp over equally weighted modes."""
    if not isinstance(dist, (Gaussian1D, *MIXTURES)):
        raise DataError(f"no closed-form density for {type(dist).__name__}")
    scalar = np.ndim(x) == 0
    points = np.asarray(x, dtype=np.float64).reshape(-1, dist.dim)
    centers = dist.centers()
    var = dist.mode_std**2
    sq = np.sum((points[:, None, :] - centers[None, :, :]) ** 2, axis=2)
    per_mode = -0.5 * sq / var - 0.5 * dist.dim * np.log(2.0 * np.pi * var)
    out = np.logaddexp.reduce(per_mode, axis=1) - np.log(len(centers))
    return float(out[0]) if scalar else out


def rotation(angle: float = PAIR_ROTATION) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def make_paired(n: int, rng: Rng, noise: float = PAIR_NOISE) -> PairedSet:
    """Inputs x ~ N(0, I); targets y = Rot(pi/4) x + noise * eps."""
    _check_count(n)
    x = rng.normal((int(n), 2))
    y = x @ rotation().T + noise * rng.normal((int(n), 2))
    return PairedSet(x=x, y=y)


def domain_b_centers() -> np.ndarray:
    return DOMAIN_SCALE * MixtureRing(8, 2.0, 0.05).centers() + np.asarray(DOMAIN_SHIFT)


def make_two_domain(n: int, rng: Rng) -> TwoDomainSet:
    """Ring-of-8 domain A and an independently drawn scaled, shifted copy as B."""
    _check_count(n)
    ring = MixtureRing(8, 2.0, 0.05)
    a = sample(ring, n, rng)
    b = DOMAIN_SCALE * sample(ring, n, rng) + np.asarray(DOMAIN_SHIFT)
    return TwoDomainSet(a=a, b=b)


def labels_for(dist: LabeledMixture, samples: np.ndarray) -> np.ndarray:
    """Nearest-center labels; ties go to the lowest index."""
    points = np.asarray(samples, dtype=np.float64).reshape(-1, dist.dim)
    d2 = np.sum((points[:, None, :] - dist.centers()[None, :, :]) ** 2, axis=2)
    return np.argmin(d2, axis=1).astype(np.int64)


def eval_range(dist: DataSpec) -> list[tuple[float, float]]:
    """Per-axis histogram range used when scoring samples against ``dist``."""
    if isinstance(dist, Gaussian1D):
        half = 4.8 * dist.std
        return [(dist.mean - half, dist.mean + half)]
    if isinstance(dist, MIXTURES):
        centers = dist.centers()
        pad = max(1.0, 6.0 * dist.mode_std)
        return [(float(lo) - pad, float(hi) + pad) for lo, hi in zip(centers.min(0), centers.max(0))]
    if isinstance(dist, PairedData):
        return [(-4.0, 4.0), (-4.0, 4.0)]
    if isinstance(dist, TwoDomainData):
        centers = domain_b_centers()
        return [(float(lo) - 1.0, float(hi) + 1.0) for lo, hi in zip(centers.min(0), centers.max(0))]
    raise DataError(f"no evaluation range for {type(dist).__name__}")


def to_csv(samples: np.ndarray) -> str:
    """One row per sample, header x0,x1,...; floats in shortest round-trip form."""
    points = np.asarray(samples, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    output = io.StringIO()
    writer = csv.writer(output, lineterminator="\n")
    writer.writerow([f"x{j}" for j in range(points.shape[1])])
    for row in points:
        writer.writerow([repr(float(v)) for v in row])
    return output.getvalue()


def from_csv(text: str) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise DataError("empty sample file")
    width = len(rows[0])
    values = [[float(v) for v in row] for row in rows[1:] if row]
    return np.array(values, dtype=np.float64).reshape(-1, width)


DATA_KINDS: dict[str, type] = {
    "gaussian1d": Gaussian1D,
    "ring": MixtureRing,
    "grid": MixtureGrid,
    "labeled": LabeledMixture,
    "paired": PairedData,
    "two_domain": TwoDomainData,
}


def kind_of(dist: DataSpec) -> str:
    for name, cls in DATA_KINDS.items():
        if type(dist) is cls:
            return name
    raise DataError(f"unregistered distribution type {type(dist).__name__}")


def describe(dist: DataSpec) -> dict[str, Any]:
    """Plain mapping with a ``kind`` key; inverse of :func:`from_description`."""
    doc: dict[str, Any] = {"kind": kind_of(dist)}
    for f in fields(dist):
        value = getattr(dist, f.name)
        if f.name == "means":
            value = [list(row) for row in value]
        doc[f.name] = value
    return doc


def from_description(doc: dict[str, Any]) -> DataSpec:
    body = dict(doc)
    kind = body.pop("kind", None)
    cls = DATA_KINDS.get(str(kind))
    if cls is None:
        raise DataError(f"unknown data kind {kind!r}; accepted: {tuple(DATA_KINDS)}")
    accepted = {f.name for f in fields(cls)}
    if cls is LabeledMixture and "means" not in body:
        extra = set(body) - {"k", "radius", "std"}
        if extra:
            raise DataError(f"unknown key {sorted(extra)[0]!r} for labeled data")
        return LabeledMixture.ring(int(body.get("k", 4)), float(body.get("radius", 2.0)), float(body.get("std", 0.05)))
    unknown = set(body) - accepted
    if unknown:
        raise DataError(f"unknown key {sorted(unknown)[0]!r} for {kind} data; accepted: {sorted(accepted)}")
    for f in fields(cls):
        if f.name not in body:
            continue
        if f.name == "means":
            body["means"] = tuple(tuple(float(v) for v in row) for row in body["means"])
        elif f.type == "float":
            body[f.name] = float(body[f.name])
        elif f.type == "int":
            body[f.name] = int(body[f.name])
    return cls(**body)
