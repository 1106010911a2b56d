"""Parameter-count objective: discrete count, softmax surrogate, and the lower-bounded Ψ."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .supernet import SearchSpace, edge_mixture_weights

UNITS = ("raw-count", "megabytes")
BYTES_PER_PARAM = 4


@dataclass(frozen=True)
class ResourceConfig:
    lower_bound: float = 0.0
    unit: str = "raw-count"

    def __post_init__(self) -> None:
        if self.unit not in UNITS:
            raise ValueError(f"unit must be one of {UNITS}, got {self.unit!r}")
        if not self.lower_bound >= 0:
            raise ValueError("the lower bound must be non-negative")

    def convert(self, count):
        """Raw parameter count to this config's unit."""
        if self.unit == "megabytes":
            return BYTES_PER_PARAM * count / 1e6
        return count


def _alpha(alpha, space: SearchSpace) -> np.ndarray:
    a = np.asarray(alpha, dtype=np.float64)
    if a.shape != (space.num_edges, len(space.ops)):
        raise ValueError(f"alpha shape {a.shape} does not match the space")
    return a


def discrete_param_count(alpha, space: SearchSpace) -> float:
    n = space.op_param_counts()
    idx = np.argmax(_alpha(alpha, space), axis=1)
    return float(n[idx].sum())


def surrogate_param_count(alpha, space: SearchSpace) -> float:
    p = edge_mixture_weights(_alpha(alpha, space))
    return float((p @ space.op_param_counts()).sum())


def surrogate_gradient(alpha, space: SearchSpace) -> np.ndarray:
    """d N̂ / d α: per row, p_o (n_o - Σ_k p_k n_k)."""
    p = edge_mixture_weights(_alpha(alpha, space))
    n = space.op_param_counts()
    return p * (n[None, :] - (p @ n)[:, None])


def resource_objective(alpha, space: SearchSpace, cfg: ResourceConfig) -> tuple[float, np.ndarray]:
    """Ψ = max(N̂, L) in ``cfg.unit`` and its gradient.

    At N̂ == L the N̂ branch's gradient is returned.
    """
    nhat = cfg.convert(surrogate_param_count(alpha, space))
    if nhat < cfg.lower_bound:
        return float(cfg.lower_bound), np.zeros_like(_alpha(alpha, space))
    return float(nhat), cfg.convert(surrogate_gradient(alpha, space))
