"""Independent numerical oracles behind the ``gradcheck`` command.

Each check returns a :class:`CheckResult` with the largest observed error and
the tolerance it was held to. ``ORACLES`` lists them in run order.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from . import adversarial as adv
from .autodiff import Graph, evaluate, fd_gradient, gradients, relative_error
from .bilevel import SearchConfig, alpha_hypergradient
from .mgda import gamma_two_objective, solve_min_norm
from .resource import surrogate_gradient, surrogate_param_count
from .supernet import NetworkWeights, SearchSpace, Supernet


@dataclass
class CheckResult:
    name: str
    max_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.max_error <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: max_err={self.max_error:.3e} tol={self.tol:.1e}"


# random graphs for the autodiff oracle

def random_graph(rng: np.random.Generator, max_depth: int = 5, max_width: int = 16):
    """A random scalar-valued graph over matmul/add/mul/relu/tanh/softmax/concat/scale/clip.

    Returns (graph, output, bindings).
    """
    g = Graph()
    batch = int(rng.integers(1, 5))
    width = int(rng.integers(1, max_width + 1))
    bindings = {"x": rng.standard_normal((batch, width))}
    h = g.leaf("x")
    depth = int(rng.integers(1, max_depth + 1))
    for layer in range(depth):
        out_w = int(rng.integers(1, max_width + 1))
        wname, bname = f"W{layer}", f"b{layer}"
        bindings[wname] = rng.standard_normal((width, out_w)) / np.sqrt(width)
        bindings[bname] = rng.standard_normal(out_w) * 0.1
        h = g.add(g.matmul(h, g.leaf(wname)), g.leaf(bname))
        kind = rng.choice(["relu", "tanh", "softmax", "mul", "scale", "clip", "concat"])
        if kind == "relu":
            h = g.relu(h)
        elif kind == "tanh":
            h = g.tanh(h)
        elif kind == "softmax":
            h = g.softmax(h, axis=1)
        elif kind == "mul":
            h = g.mul(h, g.tanh(h))
        elif kind == "scale":
            h = g.scale(h, float(rng.uniform(-2, 2)))
        elif kind == "clip":
            h = g.clip(h, -0.7, 0.7)
        elif kind == "concat":
            h = g.concat([h, g.tanh(h)], axis=1)
            out_w *= 2
        width = out_w
    classes = width
    if classes >= 2 and rng.random() < 0.5:
        bindings["y"] = rng.integers(0, classes, size=batch)
        out = g.mean(g.cross_entropy(h, g.leaf("y", differentiable=False)))
    else:
        out = g.sum(g.mul(h, h))
    return g, out, bindings


def _leaf_fd_check(graph, out, bindings, names, h=1e-6) -> float:
    grads = gradients(graph, out, names, bindings)
    worst = 0.0
    for name in names:
        def f(v, name=name):
            return float(evaluate(graph, {**bindings, name: v}, out))

        worst = max(worst, relative_error(grads[name], fd_gradient(f, bindings[name], h)))
    return worst


def check_autodiff(seed: int = 0, count: int = 100, tol: float = 1e-5, h: float = 1e-5) -> CheckResult:
    # h=1e-6 is roundoff-limited on graphs whose gradient is small next to the output
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        graph, out, bindings = random_graph(rng)
        names = [n for n, leaf in graph.leaves.items() if leaf.attrs["differentiable"]]
        worst = max(worst, _leaf_fd_check(graph, out, bindings, names, h))
    return CheckResult("autodiff_vs_fd", worst, tol)


def check_supernet(seed: int = 0, tol: float = 1e-4) -> CheckResult:
    rng = np.random.default_rng(seed)
    space = SearchSpace.from_names(4, 4)
    net = Supernet(space, 3)
    theta = net.init_weights(rng)
    alpha = rng.standard_normal((space.num_edges, len(space.ops)))
    x = rng.standard_normal((6, 4))
    y = rng.integers(0, 3, size=6)
    _, g = net.loss_and_grads(theta, alpha, x, y, wrt=("theta", "alpha"))
    fa = fd_gradient(lambda a: net.loss_value(theta, a, x, y), alpha)
    ft = fd_gradient(lambda v: net.loss_value(theta.with_flat(v), alpha, x, y), theta.flat())
    err = max(relative_error(g["alpha"], fa), relative_error(g["theta"].flat(), ft))
    return CheckResult("supernet_theta_alpha_vs_fd", err, tol)


def composite_objective(net: Supernet, theta_next: NetworkWeights, train_batch, val_batch,
                        cfg: SearchConfig, delta0: np.ndarray) -> Callable[[np.ndarray], float]:
    """g(α) = L_val(θ_{t+1} − η ∇_θ L_tr(θ_{t+1}, α), α) with a fixed FGSM-RS start."""
    xt, yt = train_batch
    xv, yv = val_batch

    def g(alpha: np.ndarray) -> float:
        if cfg.use_adv:
            delta = adv.fgsm_rs_perturb(net, theta_next, alpha, xt, yt, cfg.attack, delta0=delta0)
        else:
            delta = np.zeros_like(xt)
        _, gt = net.loss_and_grads(theta_next, alpha, xt, yt, delta, wrt=("theta",))
        inner = theta_next.with_flat(theta_next.flat() - cfg.eta_theta * gt["theta"].flat())
        return net.loss_value(inner, alpha, xv, yv)

    return g


def hypergradient_problem(seed: int = 0, eta_theta: float = 0.5):
    """A 4-node, width-4 supernet with one train and one validation batch."""
    rng = np.random.default_rng(seed)
    space = SearchSpace.from_names(4, 4)
    net = Supernet(space, 2)
    theta = net.init_weights(rng)
    alpha = 0.5 * rng.standard_normal((space.num_edges, len(space.ops)))
    xt, xv = rng.standard_normal((8, 4)), rng.standard_normal((8, 4))
    yt, yv = rng.integers(0, 2, 8), rng.integers(0, 2, 8)
    cfg = SearchConfig(eta_theta=eta_theta, attack=adv.AttackConfig(0.1, 0.125))
    return net, theta, alpha, (xt, yt), (xv, yv), cfg


def check_hypergradient(seed: int = 0, tol: float = 1e-3) -> CheckResult:
    net, theta, alpha, tb, vb, cfg = hypergradient_problem(seed)
    attack_seed = seed + 17
    u1, _ = alpha_hypergradient(net, theta, alpha, tb, vb, cfg, np.random.default_rng(attack_seed))
    delta0 = adv.initial_delta(tb[0], cfg.attack, np.random.default_rng(attack_seed))
    g = composite_objective(net, theta, tb, vb, cfg, delta0)
    oracle = fd_gradient(g, alpha, 1e-5)
    return CheckResult("hypergradient_vs_composite_fd", relative_error(u1, oracle), tol)


def grid_gamma(u1, u2, step: float = 1e-5) -> float:
    grid = np.linspace(0.0, 1.0, int(round(1 / step)) + 1)
    a, b = np.asarray(u1).ravel(), np.asarray(u2).ravel()
    aa, ab, bb = a @ a, a @ b, b @ b
    vals = grid**2 * aa + 2 * grid * (1 - grid) * ab + (1 - grid) ** 2 * bb
    return float(grid[np.argmin(vals)])


def random_pair(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    dim = int(rng.integers(1, 65))
    return rng.standard_normal(dim), rng.standard_normal(dim) * rng.uniform(0.1, 3.0)


def check_gamma(seed: int = 0, count: int = 1000, tol: float = 1e-4) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(count):
        u1, u2 = random_pair(rng)
        worst = max(worst, abs(gamma_two_objective(u1, u2) - grid_gamma(u1, u2)))
    return CheckResult("gamma_closed_form_vs_grid", worst, tol)


@lru_cache(maxsize=4)
def _simplex_grid(n: int, k: int) -> np.ndarray:
    if n == 2:
        g = np.linspace(0, 1, k + 1)
        return np.stack([g, 1 - g], axis=1)
    if n == 3:
        i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
        keep = i + j <= k
        a, b = i[keep] / k, j[keep] / k
        return np.stack([a, b, 1 - a - b], axis=1)
    raise ValueError("grid oracle supports 2 or 3 objectives")


def simplex_grid_min(us, step: float = 1e-3) -> float:
    """Smallest ||Σ γ_i u_i||² over a regular grid on the 2- or 3-simplex."""
    U = np.stack([np.ravel(u) for u in us])
    W = _simplex_grid(len(us), int(round(1 / step)))
    return float(np.min(((W @ (U @ U.T)) * W).sum(axis=1)))


def check_min_norm(seed: int = 0, count: int = 200, tol: float = 1e-3) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(count):
        n = 2 + k % 2
        dim = int(rng.integers(1, 17))
        us = [rng.standard_normal(dim) for _ in range(n)]
        _, d = solve_min_norm(us)
        worst = max(worst, abs(float(d @ d) - simplex_grid_min(us)))
    return CheckResult("min_norm_vs_simplex_grid", worst, tol)


def check_resource_gradient(seed: int = 0, tol: float = 1e-6) -> CheckResult:
    rng = np.random.default_rng(seed)
    space = SearchSpace.from_names(6, 4)
    alpha = rng.standard_normal((space.num_edges, len(space.ops)))
    fd = fd_gradient(lambda a: surrogate_param_count(a, space), alpha)
    return CheckResult("resource_gradient_vs_fd", relative_error(surrogate_gradient(alpha, space), fd), tol)


ORACLES: dict[str, Callable[..., CheckResult]] = {
    "autodiff_vs_fd": check_autodiff,
    "supernet_theta_alpha_vs_fd": check_supernet,
    "hypergradient_vs_composite_fd": check_hypergradient,
    "gamma_closed_form_vs_grid": check_gamma,
    "min_norm_vs_simplex_grid": check_min_norm,
    "resource_gradient_vs_fd": check_resource_gradient,
}


def run_all(seed: int = 0, tol: float | None = None) -> list[CheckResult]:
    results = []
    for check in ORACLES.values():
        r = check(seed=seed)
        if tol is not None:
            r.tol = tol
        results.append(r)
    return results
