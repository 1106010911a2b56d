"""Static-graph reverse-mode automatic differentiation over float64 numpy arrays.

A :class:`Graph` is built once by calling its op methods, which append nodes in
topological order and return :class:`Node` handles. Values are supplied at
evaluation time through a ``bindings`` mapping from leaf name to array, so one
graph can be evaluated on many batches and parameter settings.

    >>> g = Graph()
    >>> x = g.leaf("x")
    >>> out = g.sum(g.mul(x, x))
    >>> float(evaluate(g, {"x": np.array([3.0])}, out))
    9.0
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised for malformed graphs, shape mismatches, and bad gradient requests."""


class UnboundLeafError(GraphError):
    pass


@dataclass(eq=False)
class Node:
    id: int
    op: str
    inputs: tuple[int, ...]
    attrs: dict[str, Any] = field(default_factory=dict)
    graph: "Graph | None" = field(default=None, repr=False)

    def __add__(self, other: "Node") -> "Node":
        return self.graph.add(self, other)

    def __mul__(self, other: "Node") -> "Node":
        return self.graph.mul(self, other)

    def __matmul__(self, other: "Node") -> "Node":
        return self.graph.matmul(self, other)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _softmax(z: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(z - z.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


class Graph:
    """An append-only list of primitive operations over named leaves."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self.leaves: dict[str, Node] = {}
        self.output: Node | None = None

    def _add(self, op: str, inputs: Sequence[Node], **attrs: Any) -> Node:
        for n in inputs:
            if n.graph is not self:
                raise GraphError(f"{op}: input node {n.id} belongs to a different graph")
        node = Node(len(self.nodes), op, tuple(n.id for n in inputs), attrs, self)
        self.nodes.append(node)
        self.output = node
        return node

    # leaves and constants

    def leaf(self, name: str, differentiable: bool = True) -> Node:
        if name in self.leaves:
            raise GraphError(f"duplicate leaf name {name!r}")
        node = self._add("leaf", (), name=name, differentiable=differentiable)
        self.leaves[name] = node
        return node

    def constant(self, value: Any) -> Node:
        return self._add("const", (), value=np.asarray(value, dtype=np.float64))

    # primitives

    def matmul(self, a: Node, b: Node) -> Node:
        return self._add("matmul", (a, b))

    def add(self, a: Node, b: Node) -> Node:
        return self._add("add", (a, b))

    def sub(self, a: Node, b: Node) -> Node:
        return self._add("sub", (a, b))

    def mul(self, a: Node, b: Node) -> Node:
        return self._add("mul", (a, b))

    def scale(self, a: Node, c: float) -> Node:
        return self._add("scale", (a,), c=float(c))

    def relu(self, a: Node) -> Node:
        return self._add("relu", (a,))

    def tanh(self, a: Node) -> Node:
        return self._add("tanh", (a,))

    def softmax(self, a: Node, axis: int = -1) -> Node:
        return self._add("softmax", (a,), axis=axis)

    def cross_entropy(self, logits: Node, labels: Node) -> Node:
        """Per-row softmax cross-entropy of ``[B, C]`` logits against integer labels ``[B]``."""
        return self._add("cross_entropy", (logits, labels))

    def mean(self, a: Node) -> Node:
        return self._add("mean", (a,))

    def sum(self, a: Node) -> Node:
        return self._add("sum", (a,))

    def concat(self, parts: Sequence[Node], axis: int = -1) -> Node:
        if not parts:
            raise GraphError("concat needs at least one input")
        return self._add("concat", tuple(parts), axis=axis)

    def clip(self, a: Node, lo: float, hi: float) -> Node:
        return self._add("clip", (a,), lo=float(lo), hi=float(hi))

    def sign(self, a: Node) -> Node:
        return self._add("sign", (a,))

    def index(self, a: Node, key: tuple) -> Node:
        """Basic (int/slice) indexing; used to pick mixture weights out of a softmax."""
        return self._add("index", (a,), key=key)


def _forward_node(node: Node, args: list[np.ndarray]) -> np.ndarray:
    op = node.op
    if op == "matmul":
        a, b = args
        if a.ndim == 0 or b.ndim == 0 or a.shape[-1] != b.shape[0]:
            raise ValueError(f"cannot multiply shapes {a.shape} and {b.shape}")
        return a @ b
    if op == "add":
        return args[0] + args[1]
    if op == "sub":
        return args[0] - args[1]
    if op == "mul":
        return args[0] * args[1]
    if op == "scale":
        return node.attrs["c"] * args[0]
    if op == "relu":
        return np.maximum(args[0], 0.0)
    if op == "tanh":
        return np.tanh(args[0])
    if op == "softmax":
        return _softmax(args[0], node.attrs["axis"])
    if op == "cross_entropy":
        z, y = args
        y = y.astype(np.int64)
        if z.ndim != 2 or y.shape != (z.shape[0],):
            raise ValueError(f"logits {z.shape} and labels {y.shape} are incompatible")
        m = z.max(axis=1, keepdims=True)
        lse = np.log(np.exp(z - m).sum(axis=1)) + m[:, 0]
        return lse - z[np.arange(z.shape[0]), y]
    if op == "mean":
        return np.asarray(args[0].mean())
    if op == "sum":
        return np.asarray(args[0].sum())
    if op == "concat":
        return np.concatenate(args, axis=node.attrs["axis"])
    if op == "clip":
        return np.clip(args[0], node.attrs["lo"], node.attrs["hi"])
    if op == "sign":
        return np.sign(args[0])
    if op == "index":
        return np.asarray(args[0][node.attrs["key"]])
    raise GraphError(f"unknown op {op!r}")


def _backward_node(
    node: Node, args: list[np.ndarray], out: np.ndarray, g: np.ndarray, need: Sequence[bool]
) -> list[np.ndarray | None]:
    op = node.op
    if op == "matmul":
        a, b = args
        ga = gb = None
        if need[0]:
            ga = g @ b.T if b.ndim == 2 else np.multiply.outer(g, b)
        if need[1]:
            if a.ndim == 1:
                gb = np.multiply.outer(a, g)
            else:
                gb = a.T @ g
        return [ga, gb]
    if op == "add":
        return [_unbroadcast(g, args[0].shape), _unbroadcast(g, args[1].shape)]
    if op == "sub":
        return [_unbroadcast(g, args[0].shape), _unbroadcast(-g, args[1].shape)]
    if op == "mul":
        a, b = args
        return [
            _unbroadcast(g * b, a.shape) if need[0] else None,
            _unbroadcast(g * a, b.shape) if need[1] else None,
        ]
    if op == "scale":
        return [node.attrs["c"] * g]
    if op == "relu":
        return [g * (args[0] > 0)]
    if op == "tanh":
        return [g * (1.0 - out * out)]
    if op == "softmax":
        axis = node.attrs["axis"]
        return [out * (g - (g * out).sum(axis=axis, keepdims=True))]
    if op == "cross_entropy":
        z, y = args
        p = _softmax(z, 1)
        p[np.arange(z.shape[0]), y.astype(np.int64)] -= 1.0
        return [p * g[:, None], None]
    if op == "mean":
        return [np.full(args[0].shape, g / max(args[0].size, 1))]
    if op == "sum":
        return [np.full(args[0].shape, g, dtype=np.float64)]
    if op == "concat":
        axis = node.attrs["axis"]
        bounds = np.cumsum([a.shape[axis] for a in args])[:-1]
        return list(np.split(g, bounds, axis=axis))
    if op == "clip":
        x = args[0]
        inside = (x > node.attrs["lo"]) & (x < node.attrs["hi"])
        return [g * inside]
    if op == "sign":
        return [np.zeros_like(args[0])]
    if op == "index":
        full = np.zeros_like(args[0])
        full[node.attrs["key"]] = g
        return [full]
    raise GraphError(f"no derivative for op {op!r}")


def _resolve_output(graph: Graph, output: Node | None) -> Node:
    out = output if output is not None else graph.output
    if out is None:
        raise GraphError("graph has no nodes")
    if out.graph is not graph:
        raise GraphError("output node belongs to a different graph")
    return out


def _forward(graph: Graph, bindings: Mapping[str, Any], upto: int) -> list[np.ndarray | None]:
    values: list[np.ndarray | None] = [None] * (upto + 1)
    for node in graph.nodes[: upto + 1]:
        if node.op == "leaf":
            name = node.attrs["name"]
            if name not in bindings:
                raise UnboundLeafError(f"leaf {name!r} (node {node.id}) is not bound")
            values[node.id] = np.asarray(bindings[name], dtype=np.float64)
            continue
        if node.op == "const":
            values[node.id] = node.attrs["value"]
            continue
        args = [values[i] for i in node.inputs]
        try:
            with np.errstate(over="ignore", invalid="ignore"):
                values[node.id] = _forward_node(node, args)
        except (ValueError, IndexError) as exc:
            shapes = ", ".join(str(a.shape) for a in args)
            raise GraphError(f"node {node.id} ({node.op}) failed on input shapes {shapes}: {exc}") from exc
    return values


def evaluate(graph: Graph, bindings: Mapping[str, Any], output: Node | None = None) -> np.ndarray:
    """Value of ``output`` (default: the last node added) under ``bindings``."""
    out = _resolve_output(graph, output)
    return _forward(graph, bindings, out.id)[out.id]


def value_and_gradients(
    graph: Graph,
    output: Node | None,
    wrt: Sequence[str],
    bindings: Mapping[str, Any],
) -> tuple[float, dict[str, np.ndarray]]:
    """Scalar value of ``output`` and its gradient with respect to each named leaf.

    Leaves created with ``differentiable=False`` act as stop-gradient inputs:
    requesting them returns an all-zero gradient.
    """
    out = _resolve_output(graph, output)
    for name in wrt:
        if name not in graph.leaves:
            raise GraphError(f"wrt leaf {name!r} is not in the graph")
    values = _forward(graph, bindings, out.id)
    if values[out.id].size != 1:
        raise GraphError(f"output node {out.id} is not scalar (shape {values[out.id].shape})")

    targets = {graph.leaves[n].id for n in wrt if graph.leaves[n].attrs["differentiable"]}
    needs = [False] * (out.id + 1)
    for node in graph.nodes[: out.id + 1]:
        if node.op == "leaf":
            needs[node.id] = node.id in targets
        elif node.op != "const":
            needs[node.id] = any(needs[i] for i in node.inputs)

    adj: list[np.ndarray | None] = [None] * (out.id + 1)
    adj[out.id] = np.ones_like(values[out.id])
    for node in reversed(graph.nodes[: out.id + 1]):
        g = adj[node.id]
        if g is None or not needs[node.id] or not node.inputs:
            continue
        args = [values[i] for i in node.inputs]
        need = [needs[i] for i in node.inputs]
        grads = _backward_node(node, args, values[node.id], g, need)
        for i, gi, ni in zip(node.inputs, grads, need):
            if gi is None or not ni:
                continue
            adj[i] = gi if adj[i] is None else adj[i] + gi

    result = {}
    for name in wrt:
        leaf = graph.leaves[name]
        g = adj[leaf.id] if leaf.id <= out.id else None
        shape = values[leaf.id].shape if leaf.id <= out.id else np.shape(bindings[name])
        result[name] = np.zeros(shape) if g is None else np.asarray(g, dtype=np.float64).reshape(shape)
    return float(values[out.id].reshape(())), result


def gradients(
    graph: Graph,
    output: Node | None,
    wrt: Sequence[str],
    bindings: Mapping[str, Any],
) -> dict[str, np.ndarray]:
    return value_and_gradients(graph, output, wrt, bindings)[1]


def fd_gradient(function: Callable[[np.ndarray], float], point: Any, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    if not h > 0:
        raise ValueError(f"step size must be positive, got {h}")
    p = np.array(point, dtype=np.float64)
    grad = np.zeros_like(p)
    flat = p.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(function(p.copy()))
        flat[i] = orig - h
        fm = float(function(p.copy()))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"non-finite function value near coordinate {i}")
        grad.reshape(-1)[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(actual: np.ndarray, expected: np.ndarray) -> float:
    """Max coordinate error scaled by the largest magnitude of ``expected``."""
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    scale = max(float(np.max(np.abs(expected), initial=0.0)), 1e-12)
    return float(np.max(np.abs(actual - expected), initial=0.0)) / scale
