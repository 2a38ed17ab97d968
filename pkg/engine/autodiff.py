"""Dense reverse-mode automatic differentiation over float64 numpy arrays.

Every recorded op carries a vector-Jacobian product that is itself written with
recorded ops, so a gradient taken with ``create_graph=True`` can be differentiated
again (the gradient-penalty term needs this).
"""
from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

logger = logging.getLogger(__name__)

OP_KINDS: tuple[str, ...] = (
    "add",
    "sub",
    "mul",
    "negate",
    "scale",
    "matmul",
    "transpose",
    "sum",
    "mean",
    "log",
    "exp",
    "square",
    "sqrt",
    "abs",
    "max_const",
    "relu",
    "leaky_relu",
    "tanh",
    "sigmoid",
    "log_softmax",
    "concat",
    "select_rows",
    "row_l2_norm",
)

# Norms below this are treated as this value inside the row-norm VJP.
_NORM_FLOOR = 1e-12


class AutodiffError(ValueError):
    pass


class ShapeError(AutodiffError):
    def __init__(self, op: str, shapes: Sequence[Sequence[int]], detail: str = ""):
        self.op = op
        self.shapes = tuple(tuple(int(d) for d in s) for s in shapes)
        message = f"{op}: incompatible shapes {list(self.shapes)}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class DomainError(AutodiffError):
    def __init__(self, op: str, detail: str):
        self.op = op
        self.detail = detail
        super().__init__(f"{op}: {detail}")


class GraphError(AutodiffError):
    pass


class Tensor:
    """A float64 array, optionally attached to a node of a :class:`Graph`."""

    __slots__ = ("value", "graph", "node", "generation")

    def __init__(
        self,
        value: Any,
        graph: Graph | None = None,
        node: int | None = None,
    ):
        self.value = np.asarray(value, dtype=np.float64)
        self.graph = graph
        self.node = node
        self.generation = graph.generation if graph is not None else -1

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.value.shape)

    @property
    def size(self) -> int:
        return int(self.value.size)

    @property
    def attached(self) -> bool:
        return self.node is not None

    def detach(self) -> Tensor:
        return Tensor(self.value)

    def item(self) -> float:
        if self.value.size != 1:
            raise AutodiffError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.value.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self) -> str:
        where = f"node={self.node}" if self.attached else "detached"
        return f"Tensor(shape={self.shape}, {where})"

    def __add__(self, other: Any) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Any) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Any) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: Any) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Any) -> Tensor:
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, other)

    def __rmul__(self, other: Any) -> Tensor:
        return self.__mul__(other)

    def __neg__(self) -> Tensor:
        return negate(self)

    def __matmul__(self, other: Any) -> Tensor:
        return matmul(self, other)


@dataclass
class Node:
    op: str
    inputs: tuple[int | None, ...]
    attrs: dict[str, Any]
    value: np.ndarray
    saved: tuple[np.ndarray, ...] = ()


class Graph:
    """Append-only tape. Node inputs always point at earlier nodes."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.generation = 0

    def __len__(self) -> int:
        return len(self.nodes)

    def leaf(self, value: Any) -> Tensor:
        array = np.array(value, dtype=np.float64)
        self.nodes.append(Node("leaf", (), {}, array))
        return Tensor(array, self, len(self.nodes) - 1)

    def tensor(self, index: int) -> Tensor:
        return Tensor(self.nodes[index].value, self, index)

    def clear(self) -> None:
        """Drop every node; tensors from earlier generations become unusable."""
        self.nodes = []
        self.generation += 1

    def replay(self) -> list[np.ndarray]:
        """Recompute every node's forward value from its recorded inputs."""
        values: list[np.ndarray] = []
        for node in self.nodes:
            if node.op == "leaf":
                values.append(node.value)
                continue
            args = [
                values[idx] if idx is not None else saved
                for idx, saved in zip(node.inputs, node.saved)
            ]
            values.append(_RULES[node.op].forward(args, node.attrs))
        return values


@dataclass(frozen=True)
class OpRule:
    forward: Callable[[list[np.ndarray], dict[str, Any]], np.ndarray]
    vjp: Callable[[list[Tensor], Tensor, Tensor, dict[str, Any]], list[Tensor | None]]
    arity: int | None = None


def _as_tensor(value: Any) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _common_graph(op: str, tensors: Sequence[Tensor]) -> Graph | None:
    graph: Graph | None = None
    for t in tensors:
        if not t.attached:
            continue
        assert t.graph is not None
        if t.generation != t.graph.generation:
            raise GraphError(f"{op}: tensor belongs to a cleared graph generation")
        if graph is None:
            graph = t.graph
        elif t.graph is not graph:
            raise GraphError(f"{op}: inputs live on different graphs")
    return graph


def apply(op: str, inputs: Sequence[Any], attrs: dict[str, Any] | None = None) -> Tensor:
    """Evaluate ``op`` on ``inputs``; record it when any input is graph-attached."""
    rule = _RULES.get(op)
    if rule is None:
        raise AutodiffError(f"unknown op {op!r}")
    tensors = [_as_tensor(t) for t in inputs]
    if rule.arity is not None and len(tensors) != rule.arity:
        raise AutodiffError(f"{op}: expected {rule.arity} inputs, got {len(tensors)}")
    params = dict(attrs or {})
    graph = _common_graph(op, tensors)
    value = rule.forward([t.value for t in tensors], params)
    if graph is None:
        return Tensor(value)
    node = Node(
        op=op,
        inputs=tuple(t.node if t.attached else None for t in tensors),
        attrs=params,
        value=value,
        saved=tuple(t.value for t in tensors),
    )
    graph.nodes.append(node)
    return Tensor(value, graph, len(graph.nodes) - 1)


def grad(output: Tensor, wrt: Sequence[Tensor], create_graph: bool = False) -> list[Tensor]:
    """d(output)/d(wrt_i) for a scalar, graph-attached ``output``.

    With ``create_graph`` the returned tensors are recorded on the same graph and
    can be differentiated again; otherwise they are detached.
    """
    if output.size != 1:
        raise AutodiffError(f"grad: output must be scalar, got shape {output.shape}")
    if not output.attached or output.graph is None:
        raise GraphError("grad: output is not on a graph")
    graph = output.graph
    if output.generation != graph.generation:
        raise GraphError("grad: output belongs to a cleared graph generation")
    for w in wrt:
        if w.graph is not graph or not w.attached or w.generation != graph.generation:
            raise GraphError("grad: every wrt tensor must be attached to the output's graph")

    out_id = output.node
    assert out_id is not None
    wrt_ids = [w.node for w in wrt]

    needed = bytearray(out_id + 1)
    reachable = [i for i in wrt_ids if i is not None and i <= out_id]
    for i in reachable:
        needed[i] = 1
    start = min(reachable) if reachable else out_id + 1
    for i in range(start, out_id + 1):
        if needed[i]:
            continue
        if any(j is not None and needed[j] for j in graph.nodes[i].inputs):
            needed[i] = 1

    targets = set(reachable)
    cotangents: dict[int, Tensor] = {}
    if needed[out_id]:
        cotangents[out_id] = Tensor(np.ones_like(output.value))

    for i in range(out_id, start - 1, -1):
        if not needed[i] or i not in cotangents:
            continue
        node = graph.nodes[i]
        if node.op == "leaf":
            continue
        g = cotangents[i] if i in targets else cotangents.pop(i)
        if create_graph:
            ins = [
                graph.tensor(idx) if idx is not None else Tensor(saved)
                for idx, saved in zip(node.inputs, node.saved)
            ]
            out = graph.tensor(i)
        else:
            ins = [Tensor(saved) for saved in node.saved]
            out = Tensor(node.value)
            g = g.detach()
        parts = _RULES[node.op].vjp(ins, out, g, node.attrs)
        for idx, part in zip(node.inputs, parts):
            if idx is None or part is None or not needed[idx]:
                continue
            if not create_graph:
                part = part.detach()
            cotangents[idx] = cotangents[idx] + part if idx in cotangents else part

    results: list[Tensor] = []
    for w, idx in zip(wrt, wrt_ids):
        g = cotangents.get(idx) if idx is not None else None
        results.append(g if g is not None else Tensor(np.zeros_like(w.value)))
    return results


def finite_diff(f: Callable[[np.ndarray], float], x: Any, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of a flat vector."""
    if eps <= 0:
        raise AutodiffError("finite_diff: eps must be positive")
    base = np.array(x, dtype=np.float64).reshape(-1)
    out = np.zeros_like(base)
    for i in range(base.size):
        plus = base.copy()
        minus = base.copy()
        plus[i] += eps
        minus[i] -= eps
        out[i] = (float(f(plus)) - float(f(minus))) / (2.0 * eps)
    return out


# ---------------------------------------------------------------------------
# Broadcasting: operands agree, one is single-element, or one is a row that is
# repeated along the batch axis.


def _is_single(shape: tuple[int, ...], other: tuple[int, ...]) -> bool:
    if shape == ():
        return True
    return len(shape) == len(other) and all(d == 1 for d in shape)


def _is_row(shape: tuple[int, ...], other: tuple[int, ...]) -> bool:
    if len(other) != 2:
        return False
    if len(shape) == 2:
        return shape[0] == 1 and shape[1] == other[1]
    return len(shape) == 1 and shape[0] == other[1]


def _broadcast_shape(op: str, a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    if a == b:
        return a
    if _is_single(a, b) or _is_row(a, b):
        return b
    if _is_single(b, a) or _is_row(b, a):
        return a
    raise ShapeError(op, [a, b], "operands must agree or broadcast one row across the batch")


def _unbroadcast(g: Tensor, shape: tuple[int, ...]) -> Tensor:
    if g.shape == shape:
        return g
    if shape == ():
        return apply("sum", [g], {"axis": None, "keepdims": False})
    if len(shape) == len(g.shape) and all(d == 1 for d in shape):
        return apply("sum", [g], {"axis": None, "keepdims": True})
    if len(shape) == len(g.shape):
        return apply("sum", [g], {"axis": 0, "keepdims": True})
    return apply("sum", [g], {"axis": 0, "keepdims": False})


def _expand(g: Tensor, shape: tuple[int, ...], axis: int | None) -> Tensor:
    """Inverse of a keepdims reduction: repeat ``g`` back up to ``shape``."""
    if axis is None or len(shape) == 1 or axis == 0:
        return Tensor(np.ones(shape)) * g
    # axis == 1 on a matrix: a column times a row of ones.
    return apply("matmul", [g, Tensor(np.ones((1, shape[1])))])


def _reciprocal(t: Tensor) -> Tensor:
    return apply("exp", [apply("negate", [apply("log", [t])])])


def _mask(condition: np.ndarray) -> Tensor:
    return Tensor(condition.astype(np.float64))


def _check_axis(op: str, shape: tuple[int, ...], axis: int | None, keepdims: bool) -> None:
    if axis is None:
        return
    if len(shape) > 2 or axis not in (0, 1) or axis >= len(shape):
        raise ShapeError(op, [shape], f"axis {axis} unsupported")
    if axis == 1 and not keepdims:
        raise ShapeError(op, [shape], "axis=1 reductions must keep dims")


# --- forward / vjp rules ----------------------------------------------------


def _fwd_add(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    _broadcast_shape("add", args[0].shape, args[1].shape)
    return args[0] + args[1]


def _vjp_add(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    return [_unbroadcast(g, ins[0].shape), _unbroadcast(g, ins[1].shape)]


def _fwd_sub(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    _broadcast_shape("sub", args[0].shape, args[1].shape)
    return args[0] - args[1]


def _vjp_sub(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    return [_unbroadcast(g, ins[0].shape), _unbroadcast(negate(g), ins[1].shape)]


def _fwd_mul(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    _broadcast_shape("mul", args[0].shape, args[1].shape)
    return args[0] * args[1]


def _vjp_mul(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    a, b = ins
    return [_unbroadcast(mul(g, b), a.shape), _unbroadcast(mul(g, a), b.shape)]


def _fwd_negate(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    return -args[0]


def _vjp_negate(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    return [negate(g)]


def _fwd_scale(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    return args[0] * float(attrs["c"])


def _vjp_scale(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    return [scale(g, float(attrs["c"]))]


def _fwd_matmul(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    a, b = args
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("matmul", [a.shape, b.shape], "inner dimensions must agree")
    return a @ b


def _vjp_matmul(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    a, b = ins
    return [matmul(g, transpose(b)), matmul(transpose(a), g)]


def _fwd_transpose(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    if args[0].ndim != 2:
        raise ShapeError("transpose", [args[0].shape], "matrix expected")
    return np.ascontiguousarray(args[0].T)


def _vjp_transpose(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    return [transpose(g)]


def _fwd_sum(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    axis, keepdims = attrs.get("axis"), bool(attrs.get("keepdims", False))
    _check_axis("sum", args[0].shape, axis, keepdims)
    return np.asarray(np.sum(args[0], axis=axis, keepdims=keepdims), dtype=np.float64)


def _vjp_sum(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    return [_expand(g, ins[0].shape, attrs.get("axis"))]


def _fwd_mean(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    axis, keepdims = attrs.get("axis"), bool(attrs.get("keepdims", False))
    _check_axis("mean", args[0].shape, axis, keepdims)
    return np.asarray(np.mean(args[0], axis=axis, keepdims=keepdims), dtype=np.float64)


def _vjp_mean(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    shape = ins[0].shape
    axis = attrs.get("axis")
    count = int(np.prod(shape)) if axis is None else shape[axis]
    return [scale(_expand(g, shape, axis), 1.0 / count)]


def _fwd_log(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    x = args[0]
    if not np.all(x > 0):
        raise DomainError("log", "input must be strictly positive")
    return np.log(x)


def _vjp_log(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    return [mul(g, _reciprocal(ins[0]))]


def _fwd_exp(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    return np.exp(args[0])


def _vjp_exp(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    return [mul(g, out)]


def _fwd_square(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    return args[0] * args[0]


def _vjp_square(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    return [mul(g, scale(ins[0], 2.0))]


def _fwd_sqrt(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    x = args[0]
    if not np.all(x > 0):
        raise DomainError("sqrt", "input must be strictly positive")
    return np.sqrt(x)


def _vjp_sqrt(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    return [mul(g, scale(_reciprocal(out), 0.5))]


def _fwd_abs(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    return np.abs(args[0])


def _vjp_abs(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    return [mul(g, Tensor(np.sign(ins[0].value)))]


def _fwd_max_const(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    return np.maximum(args[0], float(attrs["c"]))


def _vjp_max_const(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    return [mul(g, _mask(ins[0].value > float(attrs["c"])))]


def _fwd_relu(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    return np.maximum(args[0], 0.0)


def _vjp_relu(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    return [mul(g, _mask(ins[0].value > 0))]


def _fwd_leaky_relu(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    x = args[0]
    return np.where(x > 0, x, x * float(attrs["slope"]))


def _vjp_leaky_relu(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    slopes = np.where(ins[0].value > 0, 1.0, float(attrs["slope"]))
    return [mul(g, Tensor(slopes))]


def _fwd_tanh(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    return np.tanh(args[0])


def _vjp_tanh(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    return [mul(g, sub(1.0, square(out)))]


def _fwd_sigmoid(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    # tanh form never overflows.
    return 0.5 * (1.0 + np.tanh(0.5 * args[0]))


def _vjp_sigmoid(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    return [mul(g, mul(out, sub(1.0, out)))]


def _fwd_log_softmax(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    x = args[0]
    axis = int(attrs.get("axis", 1))
    _check_axis("log_softmax", x.shape, axis, True)
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def _vjp_log_softmax(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    axis = int(attrs.get("axis", 1))
    total = apply("sum", [g], {"axis": axis, "keepdims": True})
    return [sub(g, mul(exp(out), _expand(total, ins[0].shape, axis)))]


def _fwd_concat(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    axis = int(attrs.get("axis", 1))
    shapes = [a.shape for a in args]
    if not args:
        raise ShapeError("concat", shapes, "nothing to concatenate")
    if axis == 1:
        if any(len(s) != 2 for s in shapes) or len({s[0] for s in shapes}) != 1:
            raise ShapeError("concat", shapes, "row counts must agree")
    elif axis == 0:
        if len({s[1:] for s in shapes}) != 1 or any(len(s) != 2 for s in shapes):
            raise ShapeError("concat", shapes, "column counts must agree")
    else:
        raise ShapeError("concat", shapes, f"axis {axis} unsupported")
    return np.concatenate(args, axis=axis)


def _vjp_concat(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    axis = int(attrs.get("axis", 1))
    parts: list[Tensor | None] = []
    offset = 0
    total = out.shape[axis]
    for t in ins:
        width = t.shape[axis]
        if axis == 1:
            block = np.zeros((total, width))
            block[offset : offset + width] = np.eye(width)
            parts.append(matmul(g, Tensor(block)))
        else:
            parts.append(select_rows(g, list(range(offset, offset + width))))
        offset += width
    return parts


def _selection(indices: Sequence[int], rows: int) -> np.ndarray:
    picker = np.zeros((len(indices), rows))
    picker[np.arange(len(indices)), np.asarray(indices, dtype=np.int64)] = 1.0
    return picker


def _fwd_select_rows(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    x = args[0]
    idx = np.asarray(attrs["indices"], dtype=np.int64)
    if x.ndim != 2:
        raise ShapeError("select_rows", [x.shape], "matrix expected")
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeError("select_rows", [x.shape], f"row index out of range [0, {x.shape[0]})")
    return x[idx]


def _vjp_select_rows(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    picker = _selection(attrs["indices"], ins[0].shape[0])
    return [matmul(Tensor(picker.T), g)]


def _fwd_row_l2_norm(args: list[np.ndarray], attrs: dict[str, Any]) -> np.ndarray:
    x = args[0]
    if x.ndim != 2:
        raise ShapeError("row_l2_norm", [x.shape], "matrix expected")
    return np.sqrt(np.sum(x * x, axis=1, keepdims=True))


def _vjp_row_l2_norm(ins: list[Tensor], out: Tensor, g: Tensor, attrs: dict[str, Any]) -> list[Tensor | None]:
    x = ins[0]
    weight = mul(g, _reciprocal(maximum(out, _NORM_FLOOR)))
    return [mul(x, _expand(weight, x.shape, 1))]


_RULES: dict[str, OpRule] = {
    "add": OpRule(_fwd_add, _vjp_add, 2),
    "sub": OpRule(_fwd_sub, _vjp_sub, 2),
    "mul": OpRule(_fwd_mul, _vjp_mul, 2),
    "negate": OpRule(_fwd_negate, _vjp_negate, 1),
    "scale": OpRule(_fwd_scale, _vjp_scale, 1),
    "matmul": OpRule(_fwd_matmul, _vjp_matmul, 2),
    "transpose": OpRule(_fwd_transpose, _vjp_transpose, 1),
    "sum": OpRule(_fwd_sum, _vjp_sum, 1),
    "mean": OpRule(_fwd_mean, _vjp_mean, 1),
    "log": OpRule(_fwd_log, _vjp_log, 1),
    "exp": OpRule(_fwd_exp, _vjp_exp, 1),
    "square": OpRule(_fwd_square, _vjp_square, 1),
    "sqrt": OpRule(_fwd_sqrt, _vjp_sqrt, 1),
    "abs": OpRule(_fwd_abs, _vjp_abs, 1),
    "max_const": OpRule(_fwd_max_const, _vjp_max_const, 1),
    "relu": OpRule(_fwd_relu, _vjp_relu, 1),
    "leaky_relu": OpRule(_fwd_leaky_relu, _vjp_leaky_relu, 1),
    "tanh": OpRule(_fwd_tanh, _vjp_tanh, 1),
    "sigmoid": OpRule(_fwd_sigmoid, _vjp_sigmoid, 1),
    "log_softmax": OpRule(_fwd_log_softmax, _vjp_log_softmax, 1),
    "concat": OpRule(_fwd_concat, _vjp_concat, None),
    "select_rows": OpRule(_fwd_select_rows, _vjp_select_rows, 1),
    "row_l2_norm": OpRule(_fwd_row_l2_norm, _vjp_row_l2_norm, 1),
}


# --- public op helpers ------------------------------------------------------


def add(a: Any, b: Any) -> Tensor:
    return apply("add", [a, b])


def sub(a: Any, b: Any) -> Tensor:
    return apply("sub", [a, b])


def mul(a: Any, b: Any) -> Tensor:
    return apply("mul", [a, b])


def negate(a: Any) -> Tensor:
    return apply("negate", [a])


def scale(a: Any, c: float) -> Tensor:
    return apply("scale", [a], {"c": float(c)})


def matmul(a: Any, b: Any) -> Tensor:
    return apply("matmul", [a, b])


def transpose(a: Any) -> Tensor:
    return apply("transpose", [a])


def reduce_sum(a: Any, axis: int | None = None, keepdims: bool = False) -> Tensor:
    return apply("sum", [a], {"axis": axis, "keepdims": keepdims})


def reduce_mean(a: Any, axis: int | None = None, keepdims: bool = False) -> Tensor:
    return apply("mean", [a], {"axis": axis, "keepdims": keepdims})


def log(a: Any) -> Tensor:
    return apply("log", [a])


def exp(a: Any) -> Tensor:
    return apply("exp", [a])


def square(a: Any) -> Tensor:
    return apply("square", [a])


def sqrt(a: Any) -> Tensor:
    return apply("sqrt", [a])


def absolute(a: Any) -> Tensor:
    return apply("abs", [a])


def maximum(a: Any, c: float) -> Tensor:
    return apply("max_const", [a], {"c": float(c)})


def relu(a: Any) -> Tensor:
    return apply("relu", [a])


def leaky_relu(a: Any, slope: float = 0.2) -> Tensor:
    return apply("leaky_relu", [a], {"slope": float(slope)})


def tanh(a: Any) -> Tensor:
    return apply("tanh", [a])


def sigmoid(a: Any) -> Tensor:
    return apply("sigmoid", [a])


def log_softmax(a: Any, axis: int = 1) -> Tensor:
    return apply("log_softmax", [a], {"axis": axis})


def concat(tensors: Sequence[Any], axis: int = 1) -> Tensor:
    return apply("concat", list(tensors), {"axis": axis})


def select_rows(a: Any, indices: Sequence[int]) -> Tensor:
    return apply("select_rows", [a], {"indices": [int(i) for i in indices]})


def row_l2_norm(a: Any) -> Tensor:
    return apply("row_l2_norm", [a])


def reciprocal(a: Any) -> Tensor:
    """1/a for strictly positive ``a``."""
    return _reciprocal(_as_tensor(a))


def divide(a: Any, b: Any) -> Tensor:
    return mul(a, reciprocal(b))


def minimum(a: Any, c: float) -> Tensor:
    return negate(maximum(negate(a), -float(c)))


def clamp(a: Any, lo: float, hi: float) -> Tensor:
    return minimum(maximum(a, lo), hi)

