"""Finite-difference oracle suite for every op, every loss and the double-backprop path."""
from __future__ import annotations

import logging
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field

import numpy as np

from engine import autodiff as ad
from engine import losses
from engine.autodiff import Graph, Tensor
from engine.nn import NetworkSpec, forward, init_network
from engine.toydata import Rng

logger = logging.getLogger(__name__)

RTOL = 1e-5
RTOL_SECOND_ORDER = 1e-4
ATOL = 1e-7
FD_EPS = 1e-6

Builder = Callable[[list[Tensor], Graph], Tensor]


@dataclass(frozen=True)
class CaseResult:
    name: str
    case: int
    max_abs_err: float
    passed: bool


@dataclass
class SuiteReport:
    results: list[CaseResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def failures(self) -> list[CaseResult]:
        return [r for r in self.results if not r.passed]

    def summary(self) -> dict[str, tuple[int, int]]:
        """name -> (passed, total)."""
        out: dict[str, tuple[int, int]] = {}
        for r in self.results:
            ok, total = out.get(r.name, (0, 0))
            out[r.name] = (ok + int(r.passed), total + 1)
        return out


def check_gradient(
    build: Builder,
    inputs: list[np.ndarray],
    *,
    rtol: float = RTOL,
    atol: float = ATOL,
    eps: float = FD_EPS,
) -> tuple[bool, float]:
    """Compare the graph gradient of a scalar builder with central differences."""
    graph = Graph()
    leaves = [graph.leaf(x) for x in inputs]
    analytic = np.concatenate([g.value.reshape(-1) for g in ad.grad(build(leaves, graph), leaves)])

    shapes = [np.shape(x) for x in inputs]
    sizes = [int(np.prod(s)) for s in shapes]

    def f(flat: np.ndarray) -> float:
        parts, offset = [], 0
        for shape, size in zip(shapes, sizes):
            parts.append(Tensor(flat[offset : offset + size].reshape(shape)))
            offset += size
        return build(parts, Graph()).item()

    flat = np.concatenate([np.asarray(x, dtype=np.float64).reshape(-1) for x in inputs])
    numeric = ad.finite_diff(f, flat, eps)
    err = np.abs(analytic - numeric)
    ok = bool(np.all(err <= atol + rtol * np.abs(numeric)))
    return ok, float(err.max(initial=0.0))


def _weighted(out: Tensor, rng: Rng) -> Tensor:
    """Reduce any op output to a scalar with a fixed random weighting."""
    return ad.reduce_sum(ad.mul(out, Tensor(rng.normal(out.shape))))


def _away(rng: Rng, shape: tuple[int, ...], pivot: float = 0.0, low: float = 0.1, high: float = 2.0) -> np.ndarray:
    """Values at least ``low`` from ``pivot``, so kinks stay outside the difference stencil."""
    sign = np.where(rng.uniform(shape) < 0.5, -1.0, 1.0)
    return pivot + sign * rng.uniform(shape, low, high)


def _dims(rng: Rng) -> tuple[int, int]:
    return int(rng.integers(1, 5, 1)[0]), int(rng.integers(1, 5, 1)[0])


def _op_case(op: str, rng: Rng) -> tuple[Builder, list[np.ndarray]]:
    n, m = _dims(rng)
    wseed = int(rng.integers(0, 2**31, 1)[0])

    def unary(fn: Callable[[Tensor], Tensor], x: np.ndarray) -> tuple[Builder, list[np.ndarray]]:
        return (lambda ts, g: _weighted(fn(ts[0]), Rng(wseed))), [x]

    if op in ("add", "sub", "mul"):
        fn = {"add": ad.add, "sub": ad.sub, "mul": ad.mul}[op]
        other = (n, m) if rng.uniform(1)[0] < 0.5 else (1, m)
        return (lambda ts, g: _weighted(fn(ts[0], ts[1]), Rng(wseed))), [
            rng.normal((n, m)),
            rng.normal(other),
        ]
    if op == "negate":
        return unary(ad.negate, rng.normal((n, m)))
    if op == "scale":
        c = float(rng.normal(1)[0])
        return unary(lambda t: ad.scale(t, c), rng.normal((n, m)))
    if op == "matmul":
        k = int(rng.integers(1, 5, 1)[0])
        return (lambda ts, g: _weighted(ad.matmul(ts[0], ts[1]), Rng(wseed))), [
            rng.normal((n, k)),
            rng.normal((k, m)),
        ]
    if op == "transpose":
        return unary(ad.transpose, rng.normal((n, m)))
    if op in ("sum", "mean"):
        reduce = ad.reduce_sum if op == "sum" else ad.reduce_mean
        choice = int(rng.integers(0, 3, 1)[0])
        axis, keep = [(None, False), (0, False), (1, True)][choice]
        return unary(lambda t: reduce(t, axis=axis, keepdims=keep), rng.normal((n, m)))
    if op in ("log", "sqrt"):
        fn = ad.log if op == "log" else ad.sqrt
        return unary(fn, rng.uniform((n, m), 0.5, 2.0))
    if op == "exp":
        return unary(ad.exp, 0.5 * rng.normal((n, m)))
    if op == "square":
        return unary(ad.square, rng.normal((n, m)))
    if op == "abs":
        return unary(ad.absolute, _away(rng, (n, m)))
    if op == "max_const":
        c = float(rng.normal(1)[0])
        return unary(lambda t: ad.maximum(t, c), _away(rng, (n, m), pivot=c))
    if op == "relu":
        return unary(ad.relu, _away(rng, (n, m)))
    if op == "leaky_relu":
        return unary(lambda t: ad.leaky_relu(t, 0.2), _away(rng, (n, m)))
    if op == "tanh":
        return unary(ad.tanh, rng.normal((n, m)))
    if op == "sigmoid":
        return unary(ad.sigmoid, 2.0 * rng.normal((n, m)))
    if op == "log_softmax":
        return unary(lambda t: ad.log_softmax(t, axis=1), rng.normal((n, m)))
    if op == "concat":
        pieces = int(rng.integers(2, 4, 1)[0])
        axis = int(rng.integers(0, 2, 1)[0])
        shapes = [
            (n, int(rng.integers(1, 4, 1)[0])) if axis == 1 else (int(rng.integers(1, 4, 1)[0]), m)
            for _ in range(pieces)
        ]
        return (lambda ts, g: _weighted(ad.concat(ts, axis=axis), Rng(wseed))), [
            rng.normal(s) for s in shapes
        ]
    if op == "select_rows":
        idx = rng.integers(0, n, int(rng.integers(1, 6, 1)[0])).tolist()
        return unary(lambda t: ad.select_rows(t, idx), rng.normal((n, m)))
    if op == "row_l2_norm":
        return unary(ad.row_l2_norm, _away(rng, (n, m), low=0.3))
    raise ValueError(f"no gradient case for op {op!r}")


def _probs(rng: Rng, n: int) -> np.ndarray:
    return rng.uniform((n, 1), 0.05, 0.95)


def _loss_case(name: str, rng: Rng) -> tuple[Builder, list[np.ndarray]]:
    n = int(rng.integers(1, 6, 1)[0])
    d = int(rng.integers(1, 4, 1)[0])
    if name == "d_loss_minimax":
        real = float(rng.uniform(1, 0.6, 1.0)[0])
        fake = float(rng.uniform(1, 0.0, 0.4)[0])
        smoothing = losses.SmoothingConfig(real, fake)
        return (lambda ts, g: losses.d_loss_minimax(ts[0], ts[1], smoothing)), [_probs(rng, n), _probs(rng, n)]
    if name in ("g_loss_nonsaturating", "g_loss_saturating"):
        kind = name.removeprefix("g_loss_")
        return (lambda ts, g: losses.g_loss(kind, ts[0])), [_probs(rng, n)]
    if name in ("wgan", "lsgan", "hinge", "ebgan"):
        fn = {
            "wgan": losses.wgan_losses,
            "lsgan": losses.lsgan_losses,
            "hinge": losses.hinge_losses,
            "ebgan": losses.ebgan_losses,
        }[name]
        if name == "hinge":
            inputs = [_away(rng, (n, 1), pivot=1.0), _away(rng, (n, 1), pivot=-1.0)]
        elif name == "ebgan":
            inputs = [rng.uniform((n, 1), 0.1, 2.0), rng.uniform((n, 1), 0.1, 2.0)]
        else:
            inputs = [rng.normal((n, 1)), rng.normal((n, 1))]
        mix = float(rng.normal(1)[0])

        def both(ts: list[Tensor], g: Graph) -> Tensor:
            d_loss, g_loss = fn(ts[0], ts[1])
            return ad.add(d_loss, ad.scale(g_loss, mix))

        return both, inputs
    if name == "infogan_aux":
        k = int(rng.integers(2, 5, 1)[0])
        codes = rng.integers(0, k, n).tolist()
        return (lambda ts, g: losses.infogan_aux_loss(ts[0], codes)), [rng.normal((n, k))]
    if name == "pix2pix":
        lam = float(rng.uniform(1, 0.0, 5.0)[0])
        y = rng.normal((n, d))
        y_hat = y + _away(rng, (n, d))
        return (
            lambda ts, g: losses.composite_pix2pix_g(ad.reduce_sum(ad.square(ts[0])), ts[1], Tensor(y), lam)
        ), [rng.normal((1, 1)), y_hat]
    if name == "cycle":
        x, y = rng.normal((n, d)), rng.normal((n, d))
        return (lambda ts, g: losses.cycle_loss(Tensor(x), ts[0], Tensor(y), ts[1])), [
            x + _away(rng, (n, d)),
            y + _away(rng, (n, d)),
        ]
    if name == "feature_matching":
        h = int(rng.integers(1, 5, 1)[0])
        m = int(rng.integers(1, 6, 1)[0])
        return (lambda ts, g: losses.feature_matching_loss(ts[0], ts[1])), [rng.normal((n, h)), rng.normal((m, h))]
    if name == "reconstruction_energy":
        return (lambda ts, g: _weighted(losses.reconstruction_energy(ts[0], ts[1]), Rng(7))), [
            rng.normal((n, d)),
            rng.normal((n, d)),
        ]
    raise ValueError(f"no gradient case for loss {name!r}")


def _tanh_critic(rng: Rng, data_dim: int = 2, width: int = 3) -> tuple[NetworkSpec, list[np.ndarray]]:
    spec = NetworkSpec.mlp(data_dim, (width,), 1, activation="tanh", output="identity")
    params = init_network(spec, int(rng.integers(0, 2**31, 1)[0]))
    return spec, [v.copy() for v in params.values]


def _network_case(rng: Rng) -> tuple[Builder, list[np.ndarray]]:
    depth = int(rng.integers(0, 3, 1)[0])
    widths = tuple(int(w) for w in rng.integers(1, 5, depth))
    acts = ("tanh", "sigmoid", "identity")
    activation = acts[int(rng.integers(0, 3, 1)[0])]
    output = ("identity", "sigmoid", "tanh")[int(rng.integers(0, 3, 1)[0])]
    in_dim, out_dim = _dims(rng)
    spec = NetworkSpec.mlp(in_dim, widths, out_dim, activation=activation, output=output)
    params = init_network(spec, int(rng.integers(0, 2**31, 1)[0]))
    x = rng.normal((int(rng.integers(1, 5, 1)[0]), in_dim))
    seed = int(rng.integers(0, 2**31, 1)[0])

    def build(ts: list[Tensor], g: Graph) -> Tensor:
        out, _ = forward(spec, params, x, weights=ts)
        return _weighted(out, Rng(seed))

    return build, [v.copy() for v in params.values]


def _penalty_case(rng: Rng) -> tuple[Builder, list[np.ndarray]]:
    spec, values = _tanh_critic(rng)
    n = int(rng.integers(2, 6, 1)[0])
    real, fake = rng.normal((n, 2)), rng.normal((n, 2))
    seed = int(rng.integers(0, 2**31, 1)[0])
    params = init_network(spec, 0)

    def build(ts: list[Tensor], g: Graph) -> Tensor:
        def critic(x: Tensor) -> Tensor:
            return forward(spec, params, x, weights=ts)[0]

        return losses.gradient_penalty(critic, real, fake, 10.0, Rng(seed), g)

    return build, values


def _double_backprop_case(rng: Rng) -> tuple[Builder, list[np.ndarray]]:
    spec, values = _tanh_critic(rng)
    x_value = rng.normal((int(rng.integers(1, 5, 1)[0]), 2))
    params = init_network(spec, 0)

    def build(ts: list[Tensor], g: Graph) -> Tensor:
        x = g.leaf(x_value)
        out = forward(spec, params, x, weights=ts)[0]
        (gx,) = ad.grad(ad.reduce_sum(out), [x], create_graph=True)
        return ad.reduce_sum(ad.square(gx))

    return build, values


LOSS_CASES = (
    "d_loss_minimax",
    "g_loss_nonsaturating",
    "g_loss_saturating",
    "wgan",
    "lsgan",
    "hinge",
    "ebgan",
    "infogan_aux",
    "pix2pix",
    "cycle",
    "feature_matching",
    "reconstruction_energy",
)
SECOND_ORDER_CASES = ("gradient_penalty", "double_backprop")


def case_names() -> tuple[str, ...]:
    return (*(f"op:{op}" for op in ad.OP_KINDS), *(f"loss:{n}" for n in LOSS_CASES), "network", *SECOND_ORDER_CASES)


def _make_case(name: str, rng: Rng) -> tuple[Builder, list[np.ndarray], float]:
    if name.startswith("op:"):
        build, inputs = _op_case(name[3:], rng)
        return build, inputs, RTOL
    if name.startswith("loss:"):
        build, inputs = _loss_case(name[5:], rng)
        return build, inputs, RTOL
    if name == "network":
        build, inputs = _network_case(rng)
        return build, inputs, RTOL
    if name == "gradient_penalty":
        build, inputs = _penalty_case(rng)
        return build, inputs, RTOL_SECOND_ORDER
    if name == "double_backprop":
        build, inputs = _double_backprop_case(rng)
        return build, inputs, RTOL_SECOND_ORDER
    raise ValueError(f"unknown gradient check {name!r}")


def run_suite(cases: int = 100, seed: int = 0, names: Iterable[str] | None = None) -> SuiteReport:
    """Run ``cases`` randomized checks for each named target (all targets by default)."""
    report = SuiteReport()
    root = Rng(seed)
    for name in names or case_names():
        stream = root.stream(name)
        for i in range(cases):
            build, inputs, rtol = _make_case(name, stream)
            with np.errstate(all="ignore"):
                ok, err = check_gradient(build, inputs, rtol=rtol)
            report.results.append(CaseResult(name, i, err, ok))
            if not ok:
                logger.warning("gradient check %s case %d failed (max abs err %.3e)", name, i, err)
    logger.info(
        "gradient checks: %d/%d passed", sum(r.passed for r in report.results), len(report.results)
    )
    return report
