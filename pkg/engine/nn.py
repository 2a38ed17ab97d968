"""MLP layers, initialization, spectral normalization, optimizers and clipping."""
from __future__ import annotations

import copy
import hashlib
import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from engine import autodiff as ad
from engine.autodiff import Graph, Tensor
from engine.toydata import Rng

logger = logging.getLogger(__name__)

HIDDEN_ACTIVATIONS = ("relu", "leaky_relu", "tanh", "sigmoid", "identity")
OUTPUT_ACTIVATIONS = ("sigmoid", "identity", "tanh")
LEAKY_SLOPE = 0.2
OPTIMIZER_KINDS = ("sgd", "adam", "rmsprop")


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    """Layer widths ``[in, h1, ..., out]`` plus one activation per hidden layer."""

    layer_sizes: tuple[int, ...]
    activations: tuple[str, ...]
    output_activation: str = "identity"
    spectral_norm: bool = False
    feature_tap: int | None = None

    def __post_init__(self) -> None:
        if len(self.layer_sizes) < 2 or any(int(s) < 1 for s in self.layer_sizes):
            raise NetworkError(f"layer sizes must be >= 2 positive widths, got {self.layer_sizes}")
        if len(self.activations) != len(self.layer_sizes) - 2:
            raise NetworkError(
                f"need {len(self.layer_sizes) - 2} hidden activations, got {len(self.activations)}"
            )
        for name in self.activations:
            if name not in HIDDEN_ACTIVATIONS:
                raise NetworkError(f"unknown activation {name!r}; accepted: {HIDDEN_ACTIVATIONS}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise NetworkError(
                f"unknown output activation {self.output_activation!r}; accepted: {OUTPUT_ACTIVATIONS}"
            )
        if self.feature_tap is not None and not 0 <= self.feature_tap < len(self.activations):
            raise NetworkError(f"feature_tap {self.feature_tap} is not a hidden layer index")

    @classmethod
    def mlp(
        cls,
        in_dim: int,
        hidden: Sequence[int],
        out_dim: int,
        *,
        activation: str = "leaky_relu",
        output: str = "identity",
        spectral_norm: bool = False,
        feature_tap: int | None = None,
    ) -> NetworkSpec:
        sizes = (int(in_dim), *(int(h) for h in hidden), int(out_dim))
        return cls(sizes, (activation,) * len(hidden), output, spectral_norm, feature_tap)

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def num_layers(self) -> int:
        return len(self.layer_sizes) - 1

    def layer_activation(self, index: int) -> str:
        return self.activations[index] if index < len(self.activations) else self.output_activation


@dataclass
class ParameterSet:
    """Ordered trainable arrays ``[W0, b0, W1, b1, ...]`` plus power-iteration state."""

    values: list[np.ndarray]
    sn_u: dict[int, np.ndarray] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.values)

    def attach(self, graph: Graph) -> list[Tensor]:
        return [graph.leaf(v) for v in self.values]

    def constants(self) -> list[Tensor]:
        return [Tensor(v) for v in self.values]

    def copy(self) -> ParameterSet:
        return ParameterSet([v.copy() for v in self.values], {k: u.copy() for k, u in self.sn_u.items()})

    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for v in self.values:
            digest.update(np.ascontiguousarray(v).tobytes())
        for key in sorted(self.sn_u):
            digest.update(np.ascontiguousarray(self.sn_u[key]).tobytes())
        return digest.hexdigest()

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(v))) for v in self.values)


@dataclass(frozen=True)
class LinearLayer:
    weights: np.ndarray
    bias: np.ndarray
    spectral_norm: bool = False
    u: np.ndarray | None = None


@dataclass
class EmbeddingTable:
    weights: np.ndarray

    @classmethod
    def create(cls, num_classes: int, embed_dim: int, rng: Rng) -> EmbeddingTable:
        return cls(rng.normal((int(num_classes), int(embed_dim))))

    @property
    def num_classes(self) -> int:
        return int(self.weights.shape[0])

    @property
    def embed_dim(self) -> int:
        return int(self.weights.shape[1])


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 2e-4
    betas: tuple[float, float] = (0.5, 0.999)
    eps: float = 1e-8
    alpha: float = 0.99
    step_count: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    mean_square: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.kind not in OPTIMIZER_KINDS:
            raise NetworkError(f"unknown optimizer {self.kind!r}; accepted: {OPTIMIZER_KINDS}")

    def copy(self) -> OptimizerState:
        return copy.deepcopy(self)


def layers(spec: NetworkSpec, params: ParameterSet) -> list[LinearLayer]:
    return [
        LinearLayer(
            weights=params.values[2 * i],
            bias=params.values[2 * i + 1],
            spectral_norm=spec.spectral_norm,
            u=params.sn_u.get(i),
        )
        for i in range(spec.num_layers)
    ]


def _unit(vector: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        raise NetworkError("power iteration hit a zero vector; singular direction undefined")
    return vector / norm


def _power_iteration(w: np.ndarray, u: np.ndarray, iters: int) -> tuple[np.ndarray, np.ndarray]:
    v = _unit(w.T @ u)
    for _ in range(iters):
        u = _unit(w @ v)
        v = _unit(w.T @ u)
    return u, v


def spectral_normalize(
    w: np.ndarray, u: np.ndarray, iters: int = 1
) -> tuple[float, np.ndarray, np.ndarray]:
    """Power-iteration estimate of the top singular value; returns (sigma, W/sigma, u)."""
    if iters < 1:
        raise NetworkError(f"spectral_normalize needs iters >= 1, got {iters}")
    w = np.asarray(w, dtype=np.float64)
    if not np.any(w):
        raise NetworkError("cannot spectrally normalize a zero matrix")
    u, v = _power_iteration(w, _unit(np.asarray(u, dtype=np.float64)), iters)
    sigma = float(u @ w @ v)
    return sigma, w / sigma, u


def init_network(spec: NetworkSpec, seed: int) -> ParameterSet:
    """He-normal weights ahead of relu-family activations, Xavier-uniform elsewhere; zero biases."""
    rng = Rng(seed)
    values: list[np.ndarray] = []
    sn_u: dict[int, np.ndarray] = {}
    for i in range(spec.num_layers):
        fan_in, fan_out = spec.layer_sizes[i], spec.layer_sizes[i + 1]
        if spec.layer_activation(i) in ("relu", "leaky_relu"):
            w = rng.normal((fan_out, fan_in), 0.0, np.sqrt(2.0 / fan_in))
        else:
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform((fan_out, fan_in), -bound, bound)
        values.extend([w, np.zeros(fan_out)])
        if spec.spectral_norm:
            sn_u[i] = _unit(rng.normal(fan_out))
    return ParameterSet(values, sn_u)


def _activate(name: str, h: Tensor) -> Tensor:
    if name == "relu":
        return ad.relu(h)
    if name == "leaky_relu":
        return ad.leaky_relu(h, LEAKY_SLOPE)
    if name == "tanh":
        return ad.tanh(h)
    if name == "sigmoid":
        return ad.sigmoid(h)
    return h


def forward(
    spec: NetworkSpec,
    params: ParameterSet,
    x: Tensor | np.ndarray,
    *,
    weights: Sequence[Tensor] | None = None,
    training: bool = False,
) -> tuple[Tensor, Tensor | None]:
    """Run the MLP. ``weights`` are graph-attached copies of ``params`` when gradients are wanted.

    Spectrally normalized layers refine their singular-vector estimate once per call in
    training mode and not at all in eval mode.
    """
    h = x if isinstance(x, Tensor) else Tensor(x)
    if len(h.shape) != 2 or h.shape[1] != spec.input_dim:
        raise NetworkError(f"expected input [batch x {spec.input_dim}], got {list(h.shape)}")
    tensors = list(weights) if weights is not None else params.constants()
    tapped: Tensor | None = None
    for i in range(spec.num_layers):
        w, b = tensors[2 * i], tensors[2 * i + 1]
        if spec.spectral_norm:
            w = _normalized_weight(params, i, w, training)
        h = ad.add(ad.matmul(h, ad.transpose(w)), b)
        h = _activate(spec.layer_activation(i), h)
        if spec.feature_tap == i:
            tapped = h
    return h, tapped


def _normalized_weight(params: ParameterSet, index: int, w: Tensor, training: bool) -> Tensor:
    u, v = _power_iteration(w.value, params.sn_u[index], 1 if training else 0)
    if training:
        params.sn_u[index] = u
    sigma = ad.matmul(ad.matmul(Tensor(u[None, :]), w), Tensor(v[:, None]))
    return ad.divide(w, sigma)


def effective_weight(spec: NetworkSpec, params: ParameterSet, index: int) -> np.ndarray:
    """The weight matrix layer ``index`` actually applies in eval mode."""
    w = params.values[2 * index]
    if not spec.spectral_norm:
        return w
    u, v = _power_iteration(w, params.sn_u[index], 0)
    return w / float(u @ w @ v)


def make_optimizer(
    kind: str,
    lr: float,
    *,
    betas: tuple[float, float] = (0.5, 0.999),
    eps: float = 1e-8,
    alpha: float = 0.99,
) -> OptimizerState:
    return OptimizerState(kind=kind, lr=float(lr), betas=(float(betas[0]), float(betas[1])), eps=eps, alpha=alpha)


def _grad_arrays(grads: Sequence[Tensor | np.ndarray]) -> list[np.ndarray]:
    return [np.asarray(g.value if isinstance(g, Tensor) else g, dtype=np.float64) for g in grads]


def optimizer_step(
    state: OptimizerState, params: ParameterSet, grads: Sequence[Tensor | np.ndarray]
) -> None:
    """In-place update of ``params`` by the textbook rule of ``state.kind``."""
    gs = _grad_arrays(grads)
    if len(gs) != len(params.values):
        raise NetworkError(f"got {len(gs)} gradients for {len(params.values)} parameters")
    for i, (p, g) in enumerate(zip(params.values, gs)):
        if p.shape != g.shape:
            raise NetworkError(f"gradient {i} has shape {g.shape}, parameter has {p.shape}")

    state.step_count += 1
    if state.kind == "sgd":
        for p, g in zip(params.values, gs):
            p -= state.lr * g
        return

    if state.kind == "rmsprop":
        if not state.mean_square:
            state.mean_square = [np.zeros_like(p) for p in params.values]
        for i, (p, g) in enumerate(zip(params.values, gs)):
            state.mean_square[i] = state.alpha * state.mean_square[i] + (1 - state.alpha) * g * g
            p -= state.lr * g / (np.sqrt(state.mean_square[i]) + state.eps)
        return

    if not state.m:
        state.m = [np.zeros_like(p) for p in params.values]
        state.v = [np.zeros_like(p) for p in params.values]
    b1, b2 = state.betas
    t = state.step_count
    for i, (p, g) in enumerate(zip(params.values, gs)):
        state.m[i] = b1 * state.m[i] + (1 - b1) * g
        state.v[i] = b2 * state.v[i] + (1 - b2) * g * g
        m_hat = state.m[i] / (1 - b1**t)
        v_hat = state.v[i] / (1 - b2**t)
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def clip_weight_values(params: ParameterSet, c: float) -> ParameterSet:
    """Clamp every entry to [-c, c] in place."""
    if c <= 0:
        raise NetworkError(f"clip bound must be positive, got {c}")
    for p in params.values:
        np.clip(p, -c, c, out=p)
    return params


def clip_gradient(
    grads: Sequence[Tensor | np.ndarray], mode: str, bound: float
) -> list[np.ndarray]:
    """``value``: clamp entries; ``norm``: rescale when the global L2 norm exceeds ``bound``."""
    if bound <= 0:
        raise NetworkError(f"clip bound must be positive, got {bound}")
    gs = _grad_arrays(grads)
    if mode == "value":
        return [np.clip(g, -bound, bound) for g in gs]
    if mode == "norm":
        total = float(np.sqrt(sum(float(np.sum(g * g)) for g in gs)))
        if total > bound:
            return [g * (bound / total) for g in gs]
        return [g.copy() for g in gs]
    raise NetworkError(f"unknown clip mode {mode!r}; accepted: ('value', 'norm')")


def embed(table: EmbeddingTable | Tensor, labels: Sequence[int] | np.ndarray) -> Tensor:
    """Row lookup; gradients reach only the selected rows."""
    t = table if isinstance(table, Tensor) else Tensor(table.weights)
    idx = np.asarray(labels, dtype=np.int64).reshape(-1)
    rows = t.shape[0]
    if idx.size and (idx.min() < 0 or idx.max() >= rows):
        raise NetworkError(f"label out of range [0, {rows})")
    return ad.select_rows(t, idx.tolist())


@dataclass
class Network:
    """A spec with its parameters and, for conditional models, an embedding table."""

    spec: NetworkSpec
    params: ParameterSet
    embedding: EmbeddingTable | None = None

    def trainable(self) -> ParameterSet:
        """Flat view sharing arrays with ``params`` (and the embedding, appended last)."""
        extra = [self.embedding.weights] if self.embedding is not None else []
        return ParameterSet(self.params.values + extra, self.params.sn_u)

    def bind(self, graph: Graph) -> Binding:
        tensors = self.trainable().attach(graph)
        n = len(self.params.values)
        return Binding(tensors[:n], tensors[n] if self.embedding is not None else None)

    def __call__(
        self,
        x: Tensor | np.ndarray,
        binding: Binding | None = None,
        *,
        training: bool = False,
    ) -> Tensor:
        weights = binding.weights if binding is not None else None
        out, _ = forward(self.spec, self.params, x, weights=weights, training=training)
        return out

    def features(
        self, x: Tensor | np.ndarray, binding: Binding | None = None, *, training: bool = False
    ) -> tuple[Tensor, Tensor | None]:
        weights = binding.weights if binding is not None else None
        return forward(self.spec, self.params, x, weights=weights, training=training)

    def table(self, binding: Binding | None = None) -> Tensor:
        if self.embedding is None:
            raise NetworkError("network has no embedding table")
        if binding is not None and binding.table is not None:
            return binding.table
        return Tensor(self.embedding.weights)

    def copy(self) -> Network:
        table = EmbeddingTable(self.embedding.weights.copy()) if self.embedding is not None else None
        return Network(self.spec, self.params.copy(), table)


@dataclass
class Binding:
    weights: list[Tensor]
    table: Tensor | None = None

    @property
    def tensors(self) -> list[Tensor]:
        return self.weights + ([self.table] if self.table is not None else [])


def save_parameters(params: ParameterSet, path: Path) -> None:
    """JSON document keyed by parameter index; each entry carries its shape."""
    doc: dict[str, Any] = {
        "version": 1,
        "tensors": [
            {"index": i, "shape": list(v.shape), "values": [float(x) for x in v.reshape(-1)]}
            for i, v in enumerate(params.values)
        ],
        "sn_u": {str(k): [float(x) for x in u] for k, u in sorted(params.sn_u.items())},
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc), encoding="utf-8")


def load_parameters(path: Path) -> ParameterSet:
    doc = json.loads(path.read_text(encoding="utf-8"))
    entries = sorted(doc.get("tensors", []), key=lambda e: int(e["index"]))
    values = [np.array(e["values"], dtype=np.float64).reshape(e["shape"]) for e in entries]
    sn_u = {int(k): np.array(u, dtype=np.float64) for k, u in doc.get("sn_u", {}).items()}
    return ParameterSet(values, sn_u)
