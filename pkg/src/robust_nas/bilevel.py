"""Alternating bi-level search: SGD on θ, MGDA-weighted hypergradient steps on α."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, TextIO

import numpy as np

from . import adversarial as adv
from .data import Dataset, minibatch_stream, split_half
from .mgda import gamma_two_objective
from .resource import ResourceConfig, resource_objective, surrogate_param_count
from .supernet import Genotype, NetworkWeights, SearchSpace, Supernet, discretize


class NumericalError(FloatingPointError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class SearchConfig:
    eta_theta: float = 0.025
    eta_alpha: float = 3e-4
    batch_size: int = 64
    steps: int = 2000
    seed: int = 0
    use_adv: bool = True
    use_nop: bool = True
    use_mgda: bool = True
    second_order: bool = True
    momentum: float = 0.9
    weight_decay: float = 3e-4
    eval_every: int = 0
    attack: adv.AttackConfig = field(default_factory=lambda: adv.AttackConfig(0.1, 0.125))
    eval_attack: adv.AttackConfig = field(
        default_factory=lambda: adv.AttackConfig(0.1, 0.25, steps=10, random_start=False)
    )
    resource: ResourceConfig = field(default_factory=ResourceConfig)

    def __post_init__(self) -> None:
        if not self.eta_theta >= 0:
            raise ValueError("eta_theta must be non-negative")
        if not self.eta_alpha > 0:
            raise ValueError("eta_alpha must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.steps < 0:
            raise ValueError("steps must be non-negative")


@dataclass
class RunLogRecord:
    t: int
    l_val: float
    psi: float
    nhat: float
    gamma: float
    grad_theta_norm: float
    clean_acc: float | None = None
    robust_acc: float | None = None

    def to_json(self) -> str:
        return json.dumps(asdict(self))


@dataclass
class ThetaStep:
    theta: NetworkWeights
    momentum_buffer: dict[str, np.ndarray]
    loss: float
    grad_norm: float


def _check_finite(value, what: str, step: int | None) -> None:
    if not np.all(np.isfinite(value)):
        raise NumericalError(f"non-finite {what}", step)


def sgd_update(theta: NetworkWeights, grad: NetworkWeights, lr: float, momentum: float = 0.0,
               weight_decay: float = 0.0, buffer: dict | None = None) -> tuple[NetworkWeights, dict]:
    """Heavy-ball SGD with L2 decay folded into the gradient (PyTorch convention)."""
    new, buf = {}, {}
    for name, w in theta.params.items():
        g = grad[name]
        if weight_decay:
            g = g + weight_decay * w
        if momentum:
            prev = None if buffer is None else buffer.get(name)
            g = g if prev is None else momentum * prev + g
        buf[name] = g
        new[name] = w - lr * g
    return NetworkWeights(new), buf


def training_loss_grads(net: Supernet, theta, alpha, x, y, cfg: SearchConfig, rng, wrt=("theta",), delta0=None):
    """Lower-level loss (adversarial or clean per ``cfg.use_adv``) and its gradients."""
    if cfg.use_adv:
        loss, grads, _ = adv.adversarial_training_loss(net, theta, alpha, x, y, cfg.attack, rng, wrt, delta0)
        return loss, grads
    return net.loss_and_grads(theta, alpha, x, y, wrt=wrt)


def theta_step(net: Supernet, theta: NetworkWeights, alpha, batch, cfg: SearchConfig, rng,
               momentum_buffer: dict | None = None, step: int | None = None) -> ThetaStep:
    x, y = batch
    loss, grads = training_loss_grads(net, theta, alpha, x, y, cfg, rng)
    _check_finite(loss, "training loss", step)
    g = grads["theta"]
    new, buf = sgd_update(theta, g, cfg.eta_theta, cfg.momentum, cfg.weight_decay, momentum_buffer)
    return ThetaStep(new, buf, loss, float(np.linalg.norm(g.flat())))


def finite_difference_hypergradient(theta_next: np.ndarray, eta: float, train_grad_theta, train_grad_alpha,
                                    val_grads) -> tuple[np.ndarray, float]:
    """Second-order α-gradient for flat parameter vectors.

    ``train_grad_theta(θ)`` and ``train_grad_alpha(θ)`` are gradients of the
    lower-level loss; ``val_grads(θ)`` returns (L_val, ∇_θ L_val, ∇_α L_val).
    Returns (∇_α L_val(θ′) − η D, L_val(θ′)) where D is the central difference
    of ∇_α L_tr along v = ∇_θ′ L_val.
    """
    theta_next = np.asarray(theta_next, dtype=np.float64)
    theta_prime = theta_next - eta * train_grad_theta(theta_next)
    l_val, v, g_alpha = val_grads(theta_prime)
    vnorm = float(np.linalg.norm(v))
    h = 0.01 / vnorm if vnorm >= 1e-12 else 1e-3
    mixed = (train_grad_alpha(theta_next + h * v) - train_grad_alpha(theta_next - h * v)) / (2.0 * h)
    return g_alpha - eta * mixed, l_val


def alpha_hypergradient(net: Supernet, theta_next: NetworkWeights, alpha, train_batch, val_batch,
                        cfg: SearchConfig, rng, step: int | None = None) -> tuple[np.ndarray, float]:
    """Approximate ∇_α L_val(θ′, α) with θ′ = θ_{t+1} − η_θ ∇_θ L_tr(θ_{t+1}, α).

    One perturbation δ′ (drawn once, at θ_{t+1}) is shared by every
    lower-level evaluation here. Returns (gradient, L_val(θ′, α)).
    """
    xt, yt = train_batch
    xv, yv = val_batch
    if not cfg.second_order or cfg.eta_theta == 0:
        l_val, g = net.loss_and_grads(theta_next, alpha, xv, yv, wrt=("alpha",))
        _check_finite(g["alpha"], "validation gradient", step)
        return g["alpha"], l_val

    if cfg.use_adv:
        delta = adv.fgsm_rs_perturb(net, theta_next, alpha, xt, yt, cfg.attack, rng)
    else:
        delta = np.zeros_like(np.asarray(xt, dtype=np.float64))
    as_theta = theta_next.with_flat

    def train_grad_theta(v):
        return net.loss_and_grads(as_theta(v), alpha, xt, yt, delta, wrt=("theta",))[1]["theta"].flat()

    def train_grad_alpha(v):
        return net.loss_and_grads(as_theta(v), alpha, xt, yt, delta, wrt=("alpha",))[1]["alpha"]

    def val_grads(v):
        loss, g = net.loss_and_grads(as_theta(v), alpha, xv, yv, wrt=("theta", "alpha"))
        return loss, g["theta"].flat(), g["alpha"]

    u1, l_val = finite_difference_hypergradient(theta_next.flat(), cfg.eta_theta, train_grad_theta,
                                                train_grad_alpha, val_grads)
    _check_finite(u1, "hypergradient", step)
    return u1, l_val


def alpha_step(alpha, u1, u2, cfg: SearchConfig) -> tuple[np.ndarray, float]:
    alpha = np.asarray(alpha, dtype=np.float64)
    u1 = np.asarray(u1, dtype=np.float64)
    u2 = np.asarray(u2, dtype=np.float64)
    if u1.shape != alpha.shape or u2.shape != alpha.shape:
        raise ValueError(f"gradient shapes {u1.shape}, {u2.shape} do not match alpha {alpha.shape}")
    if not cfg.use_nop:
        return alpha - cfg.eta_alpha * u1, 1.0
    gamma = gamma_two_objective(u1, u2) if cfg.use_mgda else 0.5
    d = gamma * u1 + (1.0 - gamma) * u2
    return alpha - cfg.eta_alpha * d, gamma


@dataclass
class SearchResult:
    genotype: Genotype
    alpha: np.ndarray
    theta: NetworkWeights
    log: list[RunLogRecord]
    space: SearchSpace


def init_state(net: Supernet, seed: int) -> tuple[NetworkWeights, np.ndarray, np.random.Generator]:
    """θ₀, α₀ and the attack rng, each from its own stream of ``seed``."""
    s_theta, s_alpha, s_attack = np.random.SeedSequence(seed).spawn(3)
    theta = net.init_weights(np.random.default_rng(s_theta))
    alpha = net.init_alpha(np.random.default_rng(s_alpha))
    return theta, alpha, np.random.default_rng(s_attack)


def search(cfg: SearchConfig, space: SearchSpace, dataset: Dataset | None = None, *,
           train: Dataset | None = None, val: Dataset | None = None,
           log_file: TextIO | None = None, callback: Callable[[RunLogRecord], None] | None = None,
           exclude_zero: bool = False) -> SearchResult:
    """Run the alternating search for ``cfg.steps`` iterations.

    Pass either a whole ``dataset`` (split in half with ``cfg.seed``) or explicit
    ``train``/``val`` halves. Each record is written to ``log_file`` as it is produced.
    """
    if dataset is not None:
        train, val = split_half(dataset, cfg.seed)
    if train is None or val is None:
        raise ValueError("search needs a dataset or explicit train/val splits")
    if train.width != space.width:
        raise ValueError(f"data width {train.width} does not match space width {space.width}")
    num_classes = max(train.num_classes, val.num_classes)
    net = Supernet(space, num_classes)
    theta, alpha, rng = init_state(net, cfg.seed)
    train_stream = minibatch_stream(len(train), min(cfg.batch_size, len(train)), cfg.seed)
    val_stream = minibatch_stream(len(val), min(cfg.batch_size, len(val)), cfg.seed + 1)
    buf = None
    log: list[RunLogRecord] = []
    for t in range(cfg.steps):
        ti, vi = next(train_stream), next(val_stream)
        tb = (train.inputs[ti], train.labels[ti])
        vb = (val.inputs[vi], val.labels[vi])
        st = theta_step(net, theta, alpha, tb, cfg, rng, buf, step=t)
        theta, buf = st.theta, st.momentum_buffer
        u1, l_val = alpha_hypergradient(net, theta, alpha, tb, vb, cfg, rng, step=t)
        psi, u2 = resource_objective(alpha, space, cfg.resource)
        nhat = cfg.resource.convert(surrogate_param_count(alpha, space))
        alpha, gamma = alpha_step(alpha, u1, u2, cfg)
        _check_finite(alpha, "architecture parameters", t)
        rec = RunLogRecord(t, float(l_val), psi, float(nhat), float(gamma), st.grad_norm)
        if cfg.eval_every and (t + 1) % cfg.eval_every == 0:
            rec.clean_acc = adv.accuracy(net, theta, alpha, val.inputs, val.labels)
            rec.robust_acc = adv.robust_accuracy(net, theta, alpha, val.inputs, val.labels, cfg.eval_attack, rng)
        log.append(rec)
        if log_file is not None:
            log_file.write(rec.to_json() + "\n")
            log_file.flush()
        if callback is not None:
            callback(rec)
    return SearchResult(discretize(alpha, space, exclude_zero), alpha, theta, log, space)


def train_weights(net: Supernet, data: Dataset, cfg: SearchConfig, steps: int, adversarial: bool,
                  seed: int) -> NetworkWeights:
    """Train θ of a fixed (usually discretized) network from scratch with momentum SGD."""
    s_theta, s_attack = np.random.SeedSequence([seed, 1]).spawn(2)
    theta = net.init_weights(np.random.default_rng(s_theta))
    rng = np.random.default_rng(s_attack)
    step_cfg = replace(cfg, use_adv=adversarial)
    stream = minibatch_stream(len(data), min(cfg.batch_size, len(data)), seed)
    buf = None
    for t in range(steps):
        idx = next(stream)
        st = theta_step(net, theta, None, (data.inputs[idx], data.labels[idx]), step_cfg, rng, buf, step=t)
        theta, buf = st.theta, st.momentum_buffer
    return theta

