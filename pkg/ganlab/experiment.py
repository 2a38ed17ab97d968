"""Experiment and sweep documents: YAML in, validated configs out, and back again."""
from __future__ import annotations

import itertools
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from collections.abc import Iterator
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any

import yaml

from engine import toydata
from engine.diffusion import DiffusionConfig, validate_diffusion
from engine.toydata import DataError
from engine.trainers import (
    ConfigError,
    ModelConfig,
    OptimConfig,
    RegularizerConfig,
    TrainConfig,
    default_optim,
    validate_config,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
SECTIONS = ("experiment", "model", "data", "optim", "regularizers", "diffusion")
EXPERIMENT_KEYS = ("algorithm", "seed", "steps", "batch", "eval_every", "eval_samples", "n_critic", "unroll_k")
SWEEP_KEYS = ("version", "base", "axes", "seeds")


@dataclass(frozen=True)
class Experiment:
    train: TrainConfig
    diffusion: DiffusionConfig | None = None

    def diffusion_or_default(self) -> DiffusionConfig:
        """Diffusion settings for comparisons; the experiment seed wins when none are given."""
        return self.diffusion or DiffusionConfig(seed=self.train.seed)


def _coerce(key: str, kind: str, value: Any) -> Any:
    if kind == "int | None":
        return None if value is None else _coerce(key, "int", value)
    if kind == "bool":
        if isinstance(value, bool):
            return value
        raise ConfigError(key, f"expected true/false, got {value!r}")
    if kind == "int":
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigError(key, f"expected an integer, got {value!r}")
    if kind == "float":
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(key, f"expected a number, got {value!r}")
    if kind == "str":
        if isinstance(value, str):
            return value
        raise ConfigError(key, f"expected a string, got {value!r}")
    if kind == "tuple[int, ...]":
        if not isinstance(value, (list, tuple)):
            raise ConfigError(key, f"expected a list of integers, got {value!r}")
        return tuple(_coerce(key, "int", v) for v in value)
    raise ConfigError(key, f"unsupported field type {kind}")


def _section(name: str, body: Any, cls: type, *, only: tuple[str, ...] | None = None) -> dict[str, Any]:
    if body is None:
        return {}
    if not isinstance(body, dict):
        raise ConfigError(name, f"section must be a mapping, got {type(body).__name__}")
    types = {f.name: str(f.type) for f in fields(cls) if only is None or f.name in only}
    out: dict[str, Any] = {}
    for key, value in body.items():
        if key not in types:
            raise ConfigError(f"{name}.{key}", "unknown key", sorted(types))
        out[key] = _coerce(f"{name}.{key}", types[key], value)
    return out


def _data(body: Any) -> toydata.DataSpec:
    if body is None:
        return toydata.Gaussian1D()
    if not isinstance(body, dict):
        raise ConfigError("data", f"section must be a mapping, got {type(body).__name__}")
    try:
        return toydata.from_description(body)
    except DataError as exc:
        key = "data.kind" if "kind" in str(exc) else "data"
        raise ConfigError(key, str(exc), sorted(toydata.DATA_KINDS) if key == "data.kind" else None) from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError("data", str(exc)) from exc


def experiment_from_dict(doc: Any) -> Experiment:
    """Build and validate an :class:`Experiment` from a parsed document."""
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ConfigError("document", f"top level must be a mapping, got {type(doc).__name__}")
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("version", f"unsupported schema version {version!r}", (SCHEMA_VERSION,))
    for key in doc:
        if key != "version" and key not in SECTIONS:
            raise ConfigError(str(key), "unknown key", ("version", *SECTIONS))

    top = _section("experiment", doc.get("experiment"), TrainConfig, only=EXPERIMENT_KEYS)
    model = ModelConfig(**_section("model", doc.get("model"), ModelConfig))
    algorithm = top.get("algorithm", TrainConfig.algorithm)
    optim = replace(default_optim(algorithm), **_section("optim", doc.get("optim"), OptimConfig))
    regularizers = RegularizerConfig(**_section("regularizers", doc.get("regularizers"), RegularizerConfig))
    train = TrainConfig(
        data=_data(doc.get("data")), model=model, optim=optim, regularizers=regularizers, **top
    )
    validate_config(train)

    diffusion = None
    if doc.get("diffusion") is not None:
        diffusion = DiffusionConfig(**_section("diffusion", doc["diffusion"], DiffusionConfig))
        validate_diffusion(diffusion)
    return Experiment(train=train, diffusion=diffusion)


def _load_yaml(text: str) -> Any:
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("document", f"syntax error: {exc}") from exc


def _load_toml(text: str) -> Any:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("document", f"syntax error: {exc}") from exc


DOCUMENT_SUFFIXES = (".yaml", ".yml", ".toml")


def load_document(path: str | Path) -> Any:
    """Read an experiment or sweep file; the suffix picks YAML or TOML."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix not in DOCUMENT_SUFFIXES:
        raise ConfigError("document", f"unsupported file type {suffix or path.name!r}", DOCUMENT_SUFFIXES)
    text = path.read_text(encoding="utf-8")
    return _load_toml(text) if suffix == ".toml" else _load_yaml(text)


def parse_experiment(text: str) -> Experiment:
    return experiment_from_dict(_load_yaml(text))


def parse_config(text: str) -> TrainConfig:
    """Parse an experiment document; missing keys take their defaults."""
    return parse_experiment(text).train


def load_experiment(path: str | Path) -> Experiment:
    return experiment_from_dict(load_document(path))


def experiment_to_dict(experiment: Experiment) -> dict[str, Any]:
    train = experiment.train.as_dict()
    doc: dict[str, Any] = {
        "version": SCHEMA_VERSION,
        "experiment": {key: train[key] for key in EXPERIMENT_KEYS},
        "data": train["data"],
        "model": train["model"],
        "optim": train["optim"],
        "regularizers": train["regularizers"],
    }
    if experiment.diffusion is not None:
        doc["diffusion"] = experiment.diffusion.as_dict()
    return doc


def print_experiment(experiment: Experiment | TrainConfig) -> str:
    """Full YAML rendering with every default spelled out; parses back to an equal config."""
    if isinstance(experiment, TrainConfig):
        experiment = Experiment(experiment)
    return yaml.safe_dump(experiment_to_dict(experiment), sort_keys=False, default_flow_style=None)


def set_key(doc: dict[str, Any], dotted: str, value: Any) -> dict[str, Any]:
    """Copy of ``doc`` with ``section.key`` replaced."""
    section, _, key = dotted.partition(".")
    if not key or section not in SECTIONS:
        raise ConfigError(dotted, "sweep axes are written as section.key", SECTIONS)
    out = dict(doc)
    body = dict(out.get(section) or {})
    body[key] = value
    out[section] = body
    return out


@dataclass(frozen=True)
class SweepCell:
    index: int
    overrides: tuple[tuple[str, Any], ...]
    seed: int
    experiment: Experiment

    @property
    def label(self) -> str:
        parts = [f"{k}={v}" for k, v in self.overrides]
        parts.append(f"seed={self.seed}")
        return ",".join(parts)


@dataclass(frozen=True)
class SweepSpec:
    base: dict[str, Any]
    axes: tuple[tuple[str, tuple[Any, ...]], ...] = ()
    seeds: tuple[int, ...] = (0,)

    def __len__(self) -> int:
        count = len(self.seeds)
        for _, values in self.axes:
            count *= len(values)
        return count

    def cells(self) -> Iterator[SweepCell]:
        """Axes vary in declaration order (last axis fastest), seeds innermost."""
        keys = [k for k, _ in self.axes]
        grids = [values for _, values in self.axes]
        index = 0
        for combo in itertools.product(*grids):
            doc = dict(self.base)
            for key, value in zip(keys, combo):
                doc = set_key(doc, key, value)
            exp = experiment_from_dict(doc)
            for seed in self.seeds:
                train = replace(exp.train, seed=int(seed))
                diffusion = replace(exp.diffusion, seed=int(seed)) if exp.diffusion else None
                yield SweepCell(index, tuple(zip(keys, combo)), int(seed), Experiment(train, diffusion))
                index += 1


def sweep_from_dict(doc: Any) -> SweepSpec:
    if not isinstance(doc, dict):
        raise ConfigError("document", "sweep file must be a mapping")
    version = doc.get("version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError("version", f"unsupported schema version {version!r}", (SCHEMA_VERSION,))
    for key in doc:
        if key not in SWEEP_KEYS:
            raise ConfigError(str(key), "unknown key", SWEEP_KEYS)
    base = doc.get("base") or {}
    if not isinstance(base, dict):
        raise ConfigError("base", "must be an experiment mapping")
    experiment_from_dict(base)

    raw_axes = doc.get("axes") or {}
    if not isinstance(raw_axes, dict):
        raise ConfigError("axes", "must map section.key to a list of values")
    axes = []
    for key, values in raw_axes.items():
        if not isinstance(values, list) or not values:
            raise ConfigError(f"axes.{key}", "needs a non-empty list of values")
        set_key(base, str(key), values[0])
        axes.append((str(key), tuple(values)))

    seeds = doc.get("seeds", [0])
    if isinstance(seeds, int) and not isinstance(seeds, bool):
        seeds = list(range(seeds))
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("seeds", "needs a non-empty list of integers or a count")
    return SweepSpec(base=base, axes=tuple(axes), seeds=tuple(_coerce("seeds", "int", s) for s in seeds))


def parse_sweep(text: str) -> SweepSpec:
    return sweep_from_dict(_load_yaml(text))


def load_sweep(path: str | Path) -> SweepSpec:
    return sweep_from_dict(load_document(path))
