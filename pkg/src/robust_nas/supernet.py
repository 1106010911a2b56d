"""Cell-based supernet with softmax-mixed edges, plus argmax discretization.

Node layout of a cell with ``num_nodes = N``: nodes 0 and 1 are inputs, nodes
``2..N-2`` are intermediate, and node ``N-1`` is the output, which concatenates
the intermediate nodes. Every intermediate node ``j`` receives one edge from
each ``i < j``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .autodiff import Graph, Node, evaluate, value_and_gradients

OP_KINDS = ("zero", "identity", "linear_relu", "linear_tanh", "bottleneck", "scale")
DEFAULT_OPS = ("zero", "identity", "linear_relu", "linear_tanh", "bottleneck")
SCALE_FACTOR = 0.5


@dataclass(frozen=True)
class OperationSpec:
    name: str
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in OP_KINDS:
            raise ValueError(f"unknown operation kind {self.kind!r}")

    def param_shapes(self, d: int) -> dict[str, tuple[int, ...]]:
        if self.kind in ("linear_relu", "linear_tanh"):
            return {"W": (d, d), "b": (d,)}
        if self.kind == "bottleneck":
            h = math.ceil(d / 2)
            return {"W1": (d, h), "b1": (h,), "W2": (h, d), "b2": (d,)}
        return {}

    def param_count(self, d: int) -> int:
        return sum(math.prod(s) for s in self.param_shapes(d).values())


def make_op(name: str) -> OperationSpec:
    """Operation names double as kinds for the built-in set."""
    return OperationSpec(name, name)


@dataclass(frozen=True)
class SearchSpace:
    num_nodes: int
    width: int
    ops: tuple[OperationSpec, ...] = tuple(make_op(n) for n in DEFAULT_OPS)
    cells: int = 1

    def __post_init__(self) -> None:
        if self.num_nodes < 4:
            raise ValueError(f"a cell needs at least 4 nodes, got {self.num_nodes}")
        if self.width < 1:
            raise ValueError("width must be positive")
        if self.cells < 1:
            raise ValueError("cells must be positive")
        if len(self.ops) < 2 or not any(o.kind == "zero" for o in self.ops):
            raise ValueError("the operation set needs at least 2 operations including zero")
        names = [o.name for o in self.ops]
        if len(set(names)) != len(names):
            raise ValueError("duplicate operation names")

    @classmethod
    def from_names(cls, num_nodes: int, width: int, ops: Iterable[str] = DEFAULT_OPS, cells: int = 1):
        return cls(num_nodes, width, tuple(make_op(n) for n in ops), cells)

    @property
    def op_names(self) -> list[str]:
        return [o.name for o in self.ops]

    @property
    def intermediate(self) -> range:
        return range(2, self.num_nodes - 1)

    def cell_edges(self) -> list[tuple[int, int]]:
        return [(i, j) for j in self.intermediate for i in range(j)]

    def edges(self) -> list[tuple[int, int, int]]:
        """``(cell, i, j)`` for every edge across all cells, in α row order."""
        return [(c, i, j) for c in range(self.cells) for (i, j) in self.cell_edges()]

    @property
    def num_edges(self) -> int:
        return len(self.edges())

    def op_param_counts(self) -> np.ndarray:
        return np.array([o.param_count(self.width) for o in self.ops], dtype=np.float64)

    def op_index(self, name: str) -> int:
        try:
            return self.op_names.index(name)
        except ValueError:
            raise ValueError(f"operation {name!r} is not in the search space") from None

    def to_dict(self) -> dict:
        d = {"nodes": self.num_nodes, "width": self.width, "ops": self.op_names}
        if self.cells != 1:
            d["cells"] = self.cells
        return d


def edge_mixture_weights(alpha_row) -> np.ndarray:
    z = np.asarray(alpha_row, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class NetworkWeights:
    """θ as an ordered mapping of named arrays; edge parameters plus the classifier head."""

    params: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, key: str) -> np.ndarray:
        return self.params[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self.params)

    def names(self) -> list[str]:
        return list(self.params)

    def copy(self) -> "NetworkWeights":
        return NetworkWeights({k: v.copy() for k, v in self.params.items()})

    def flat(self) -> np.ndarray:
        if not self.params:
            return np.zeros(0)
        return np.concatenate([v.reshape(-1) for v in self.params.values()])

    def with_flat(self, vec: np.ndarray) -> "NetworkWeights":
        out, k = {}, 0
        for name, v in self.params.items():
            out[name] = np.asarray(vec[k : k + v.size], dtype=np.float64).reshape(v.shape).copy()
            k += v.size
        if k != len(vec):
            raise ValueError(f"flat vector has {len(vec)} entries, weights need {k}")
        return NetworkWeights(out)

    def size(self) -> int:
        return sum(v.size for v in self.params.values())

    def edge_size(self) -> int:
        return sum(v.size for k, v in self.params.items() if not k.startswith("head."))

    def head_size(self) -> int:
        return self.size() - self.edge_size()

    def to_dict(self) -> dict:
        return {k: v.tolist() for k, v in self.params.items()}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkWeights":
        return cls({k: np.asarray(v, dtype=np.float64) for k, v in d.items()})


@dataclass(frozen=True)
class Genotype:
    space: SearchSpace
    ops: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.ops) != self.space.num_edges:
            raise ValueError(f"genotype has {len(self.ops)} edges, space has {self.space.num_edges}")
        for name in self.ops:
            self.space.op_index(name)

    @property
    def param_count(self) -> int:
        return genotype_param_count(self, self.space)

    def to_dict(self) -> dict:
        edges = []
        for (c, i, j), name in zip(self.space.edges(), self.ops):
            e = {"from": i, "to": j, "op": name}
            if self.space.cells != 1:
                e = {"cell": c, **e}
            edges.append(e)
        return {"space": self.space.to_dict(), "edges": edges, "param_count": self.param_count}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "Genotype":
        s = d["space"]
        space = SearchSpace.from_names(s["nodes"], s["width"], s["ops"], s.get("cells", 1))
        expected = space.edges()
        if len(d["edges"]) != len(expected):
            raise ValueError("edge list does not match the space")
        for e, (c, i, j) in zip(d["edges"], expected):
            if (e.get("cell", 0), e["from"], e["to"]) != (c, i, j):
                raise ValueError(f"unexpected edge {e}; expected cell {c} edge ({i}, {j})")
        return cls(space, tuple(e["op"] for e in d["edges"]))


def discretize(alpha: np.ndarray, space: SearchSpace, exclude_zero: bool = False) -> Genotype:
    """Per-edge argmax; ``np.argmax`` already breaks ties toward the lowest index."""
    a = np.asarray(alpha, dtype=np.float64)
    if a.shape != (space.num_edges, len(space.ops)):
        raise ValueError(f"alpha shape {a.shape} does not match space {(space.num_edges, len(space.ops))}")
    if exclude_zero:
        mask = np.array([o.kind == "zero" for o in space.ops])
        if mask.all():
            raise ValueError("no non-zero operation to choose from")
        a = np.where(mask[None, :], -np.inf, a)
    idx = np.argmax(a, axis=1)
    return Genotype(space, tuple(space.ops[k].name for k in idx))


def genotype_param_count(g: Genotype, space: SearchSpace) -> int:
    ops = {o.name: o for o in space.ops}
    total = 0
    for name in g.ops:
        if name not in ops:
            raise ValueError(f"operation {name!r} is not in the search space")
        total += ops[name].param_count(space.width)
    return total


def _param_name(cell: int, i: int, j: int, op: str, p: str) -> str:
    return f"c{cell}.e{i}-{j}.{op}.{p}"


class Supernet:
    """Computation graph of the (mixed or discretized) network for one search space.

    The graph has leaves ``x`` (inputs), ``delta`` (stop-gradient input
    perturbation), ``y`` (labels), ``alpha`` (only for the mixed network), and
    one leaf per weight tensor. ``logits`` and ``loss`` (mean cross-entropy of
    the perturbed inputs ``x + delta``) are output nodes.
    """

    def __init__(self, space: SearchSpace, num_classes: int, genotype: Genotype | None = None):
        if genotype is not None and genotype.space != space:
            raise ValueError("genotype belongs to a different search space")
        self.space = space
        self.num_classes = num_classes
        self.genotype = genotype
        self.shapes: dict[str, tuple[int, ...]] = {}
        self._fan_in: dict[str, int] = {}
        self._build()

    @property
    def mixed(self) -> bool:
        return self.genotype is None

    def _weight(self, name: str, shape: tuple[int, ...], fan_in: int) -> Node:
        self.shapes[name] = shape
        self._fan_in[name] = fan_in
        return self.graph.leaf(name)

    def _apply(self, op: OperationSpec, x: Node, prefix: tuple[int, int, int]) -> Node | None:
        g = self.graph
        if op.kind == "zero":
            return None
        if op.kind == "identity":
            return x
        if op.kind == "scale":
            return g.scale(x, SCALE_FACTOR)
        shapes = op.param_shapes(self.space.width)
        d, h = self.space.width, math.ceil(self.space.width / 2)
        fan_in = {"W": d, "b": d, "W1": d, "b1": d, "W2": h, "b2": h}
        w = {p: self._weight(_param_name(*prefix, op.name, p), s, fan_in[p]) for p, s in shapes.items()}
        if op.kind == "bottleneck":
            h = g.relu(g.add(g.matmul(x, w["W1"]), w["b1"]))
            return g.add(g.matmul(h, w["W2"]), w["b2"])
        pre = g.add(g.matmul(x, w["W"]), w["b"])
        return g.relu(pre) if op.kind == "linear_relu" else g.tanh(pre)

    def _build(self) -> None:
        space = self.space
        g = self.graph = Graph()
        self.x = g.leaf("x")
        self.delta = g.leaf("delta", differentiable=False)
        self.y = g.leaf("y", differentiable=False)
        inp = g.add(self.x, self.delta)
        weights = None
        if self.mixed:
            self.alpha = g.leaf("alpha")
            weights = g.softmax(self.alpha, axis=1)

        row = 0
        prev2, prev1 = inp, inp
        out = inp
        for c in range(space.cells):
            nodes: dict[int, Node] = {0: prev2, 1: prev1}
            for j in space.intermediate:
                acc = None
                for i in range(j):
                    if self.mixed:
                        terms = []
                        for k, op in enumerate(space.ops):
                            o = self._apply(op, nodes[i], (c, i, j))
                            if o is not None:
                                terms.append(g.mul(g.index(weights, (row, k)), o))
                    else:
                        o = self._apply(space.ops[space.op_index(self.genotype.ops[row])], nodes[i], (c, i, j))
                        terms = [] if o is None else [o]
                    for t in terms:
                        acc = t if acc is None else g.add(acc, t)
                    row += 1
                if acc is None:
                    acc = g.scale(nodes[0], 0.0)
                nodes[j] = acc
            mids = [nodes[j] for j in space.intermediate]
            last = c == space.cells - 1
            if last:
                out = mids[0] if len(mids) == 1 else g.concat(mids, axis=1)
            else:
                # inner cells hand a width-d summary to the next cell
                out = mids[0]
                for m in mids[1:]:
                    out = g.add(out, m)
            prev2, prev1 = prev1, out
        self.features = out
        feat_dim = len(space.intermediate) * space.width
        self.head_shapes = {"head.W": (feat_dim, self.num_classes), "head.b": (self.num_classes,)}
        hw = self._weight("head.W", self.head_shapes["head.W"], feat_dim)
        hb = self._weight("head.b", self.head_shapes["head.b"], feat_dim)
        self.logits = g.add(g.matmul(out, hw), hb)
        self.loss = g.mean(g.cross_entropy(self.logits, self.y))

    # parameters

    def init_weights(self, rng: np.random.Generator) -> NetworkWeights:
        """Fan-in scaled uniform initialization, in graph order."""
        params = {}
        for name, shape in self.shapes.items():
            bound = 1.0 / math.sqrt(self._fan_in[name])
            params[name] = rng.uniform(-bound, bound, size=shape)
        return NetworkWeights(params)

    def init_alpha(self, rng: np.random.Generator, scale: float = 1e-3) -> np.ndarray:
        return scale * rng.standard_normal((self.space.num_edges, len(self.space.ops)))

    def param_names(self) -> list[str]:
        return list(self.shapes)

    # evaluation

    def bindings(self, theta: NetworkWeights, alpha, x, y=None, delta=None) -> dict:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.space.width:
            raise ValueError(f"input width {x.shape[-1] if x.ndim else None} does not match space width {self.space.width}")
        b = dict(theta.params)
        b["x"] = x
        b["delta"] = np.zeros_like(x) if delta is None else delta
        b["y"] = np.zeros(x.shape[0]) if y is None else y
        if self.mixed:
            if alpha is None:
                raise ValueError("the mixed supernet needs architecture parameters")
            b["alpha"] = alpha
        return b

    def forward(self, theta: NetworkWeights, alpha, x, delta=None) -> np.ndarray:
        return evaluate(self.graph, self.bindings(theta, alpha, x, delta=delta), self.logits)

    def loss_value(self, theta, alpha, x, y, delta=None) -> float:
        return float(evaluate(self.graph, self.bindings(theta, alpha, x, y, delta), self.loss))

    def loss_and_grads(self, theta, alpha, x, y, delta=None, wrt: Sequence[str] = ()) -> tuple[float, dict]:
        """Mean cross-entropy and gradients for the requested groups.

        ``wrt`` holds any of ``"theta"``, ``"alpha"``, ``"x"``; the result maps
        ``"theta"`` to a :class:`NetworkWeights` and the others to arrays.
        """
        names = []
        if "theta" in wrt:
            names += self.param_names()
        if "alpha" in wrt:
            if not self.mixed:
                raise ValueError("a discretized network has no architecture parameters")
            names.append("alpha")
        if "x" in wrt:
            names.append("x")
        value, grads = value_and_gradients(self.graph, self.loss, names, self.bindings(theta, alpha, x, y, delta))
        out: dict = {}
        if "theta" in wrt:
            out["theta"] = NetworkWeights({n: grads[n] for n in self.param_names()})
        if "alpha" in wrt:
            out["alpha"] = grads["alpha"]
        if "x" in wrt:
            out["x"] = grads["x"]
        return value, out

    def predict(self, theta, alpha, x, delta=None) -> np.ndarray:
        return np.argmax(self.forward(theta, alpha, x, delta), axis=1)


def network_forward(net: Supernet, theta: NetworkWeights, alpha, x) -> np.ndarray:
    return net.forward(theta, alpha, x)
