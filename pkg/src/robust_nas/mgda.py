"""Min-norm convex combination of objective gradients (MGDA).

``gamma_two_objective`` is the closed form for two objectives;
``solve_min_norm`` handles any number with pairwise Frank-Wolfe.
"""
from __future__ import annotations

import numpy as np


class MinNormError(RuntimeError):
    def __init__(self, message: str, gap: float):
        super().__init__(message)
        self.gap = gap


def _flat(u) -> np.ndarray:
    return np.asarray(u, dtype=np.float64).reshape(-1)


def gamma_two_objective(u1, u2, tol: float = 1e-12) -> float:
    """Weight on ``u1`` minimizing ||γ u1 + (1-γ) u2||² over [0, 1].

    Identical gradients give 0.5. A vanishing ``u2`` gives 1 rather than the
    literal 0, so a satisfied resource objective does not cancel the update.
    """
    a, b = _flat(u1), _flat(u2)
    if a.shape != b.shape:
        raise ValueError(f"gradient dimensions differ: {a.size} vs {b.size}")
    diff = a - b
    denom = float(diff @ diff)
    if denom < tol:
        return 0.5
    if float(np.sqrt(b @ b)) < tol:
        return 1.0
    return float(min(max(float((b - a) @ b) / denom, 0.0), 1.0))


def solve_min_norm(us, max_iter: int = 250, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Weights on the simplex and the min-norm point ``d = Σ γ_i u_i``.

    Stops when the Frank-Wolfe duality gap drops to ``tol``.
    """
    U = np.stack([_flat(u) for u in us])
    n = U.shape[0]
    if n < 2:
        raise ValueError("need at least two gradients")
    M = U @ U.T
    norms = np.diag(M)
    zero = np.flatnonzero(np.sqrt(norms) == 0.0)
    if zero.size:
        w = np.zeros(n)
        w[zero[0]] = 1.0
        return w, w @ U

    w = np.zeros(n)
    w[int(np.argmin(norms))] = 1.0
    gap = np.inf
    for _ in range(max_iter):
        Mw = M @ w
        f = float(w @ Mw)
        s = int(np.argmin(Mw))
        gap = 2.0 * (f - float(Mw[s]))
        if gap <= tol:
            return w, w @ U
        support = np.flatnonzero(w > 0)
        a = int(support[np.argmax(Mw[support])])
        # minimize ||d + t (u_s - u_a)||^2 for t in [0, w_a]
        curv = M[s, s] - 2.0 * M[s, a] + M[a, a]
        slope = Mw[s] - Mw[a]
        t = w[a] if curv <= 0 else min(max(-slope / curv, 0.0), w[a])
        w[s] += t
        w[a] -= t
        if w[a] < 1e-18:
            w[a] = 0.0
        w /= w.sum()
    Mw = M @ w
    gap = 2.0 * (float(w @ Mw) - float(Mw.min()))
    if gap <= tol:
        return w, w @ U
    raise MinNormError(f"min-norm solver did not converge in {max_iter} iterations (gap {gap:.3e})", gap)


def duality_gap(us, weights) -> float:
    U = np.stack([_flat(u) for u in us])
    Mw = U @ (U.T @ np.asarray(weights, dtype=np.float64))
    return float(2.0 * (weights @ Mw - Mw.min()))
