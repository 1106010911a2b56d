"""L∞ attacks (random-start FGSM, PGD) and the adversarial training loss."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .supernet import NetworkWeights, Supernet


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float
    xi: float
    steps: int = 1
    random_start: bool = True
    input_range: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        if not self.xi > 0:
            raise ValueError("xi must be positive")
        if self.steps < 1:
            raise ValueError("steps must be at least 1")


def _input_grad(net: Supernet, theta: NetworkWeights, alpha, x, y, delta) -> np.ndarray:
    return net.loss_and_grads(theta, alpha, x, y, delta, wrt=("x",))[1]["x"]


def _project(delta: np.ndarray, x: np.ndarray, cfg: AttackConfig) -> np.ndarray:
    delta = np.clip(delta, -cfg.epsilon, cfg.epsilon)
    if cfg.input_range is not None:
        lo, hi = cfg.input_range
        delta = np.clip(x + delta, lo, hi) - x
    return delta


def sign_step(net: Supernet, theta, alpha, x, y, delta, cfg: AttackConfig) -> np.ndarray:
    """clip_ε(δ + ξ sign(∇_x ℓ(x + δ)))."""
    g = _input_grad(net, theta, alpha, x, y, delta)
    return _project(delta + cfg.xi * np.sign(g), x, cfg)


def initial_delta(x: np.ndarray, cfg: AttackConfig, rng: np.random.Generator | None) -> np.ndarray:
    if cfg.random_start and cfg.epsilon > 0:
        if rng is None:
            raise ValueError("a random start needs an rng")
        return rng.uniform(-cfg.epsilon, cfg.epsilon, size=x.shape)
    return np.zeros_like(x)


def fgsm_rs_perturb(net: Supernet, theta, alpha, x, y, cfg: AttackConfig, rng=None, delta0=None) -> np.ndarray:
    """One clipped sign step from a random (or given) start; the result carries no gradient."""
    x = np.asarray(x, dtype=np.float64)
    delta = initial_delta(x, cfg, rng) if delta0 is None else np.asarray(delta0, dtype=np.float64)
    delta = _project(delta, x, cfg)
    return sign_step(net, theta, alpha, x, y, delta, cfg)


def fgsm_perturb(net: Supernet, theta, alpha, x, y, epsilon: float) -> np.ndarray:
    """Plain FGSM: ε sign(∇_x ℓ(x))."""
    g = _input_grad(net, theta, alpha, x, y, np.zeros_like(x))
    return epsilon * np.sign(g)


def adversarial_training_loss(
    net: Supernet, theta, alpha, x, y, cfg: AttackConfig, rng=None, wrt=("theta",), delta0=None
) -> tuple[float, dict, np.ndarray]:
    """Mean loss on ``x + δ′`` with δ′ held fixed; returns (loss, grads, δ′)."""
    if cfg.steps != 1:
        raise ValueError("adversarial training uses a single FGSM-RS step")
    delta = fgsm_rs_perturb(net, theta, alpha, x, y, cfg, rng, delta0)
    loss, grads = net.loss_and_grads(theta, alpha, x, y, delta, wrt=wrt)
    return loss, grads, delta


def pgd_attack(net: Supernet, theta, alpha, x, y, cfg: AttackConfig, rng=None) -> np.ndarray:
    """Returns adversarial inputs after exactly ``cfg.steps`` clipped sign steps."""
    x = np.asarray(x, dtype=np.float64)
    delta = _project(initial_delta(x, cfg, rng), x, cfg)
    for _ in range(cfg.steps):
        delta = sign_step(net, theta, alpha, x, y, delta, cfg)
    return x + delta


def accuracy(net: Supernet, theta, alpha, x, y) -> float:
    return float(np.mean(net.predict(theta, alpha, x) == np.asarray(y)))


def robust_accuracy(net: Supernet, theta, alpha, x, y, cfg: AttackConfig, rng=None) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] == 0:
        raise ValueError("cannot measure accuracy on an empty dataset")
    if cfg.epsilon == 0:
        return accuracy(net, theta, alpha, x, y)
    return accuracy(net, theta, alpha, pgd_attack(net, theta, alpha, x, y, cfg, rng), y)
