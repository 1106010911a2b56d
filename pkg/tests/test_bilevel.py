import io
import json
from dataclasses import replace

import numpy as np
import pytest

from robust_nas import checks
from robust_nas.adversarial import AttackConfig
from robust_nas.autodiff import fd_gradient, relative_error
from robust_nas.bilevel import (
    NumericalError,
    SearchConfig,
    alpha_hypergradient,
    alpha_step,
    finite_difference_hypergradient,
    search,
    sgd_update,
    theta_step,
)
from robust_nas.resource import ResourceConfig
from robust_nas.supernet import NetworkWeights, SearchSpace


def test_sgd_update_on_half_squared_norm():
    theta = NetworkWeights({"w": np.array([1.0, -2.0])})
    new, _ = sgd_update(theta, theta, 0.1)
    np.testing.assert_allclose(new["w"], [0.9, -1.8], rtol=0, atol=1e-15)


def test_sgd_momentum_and_decay():
    theta = NetworkWeights({"w": np.array([1.0])})
    grad = NetworkWeights({"w": np.array([2.0])})
    new, buf = sgd_update(theta, grad, 0.1, momentum=0.9, weight_decay=0.5)
    assert buf["w"][0] == 2.5 and new["w"][0] == pytest.approx(0.75)
    new2, buf2 = sgd_update(new, grad, 0.1, momentum=0.9, weight_decay=0.5, buffer=buf)
    assert buf2["w"][0] == pytest.approx(0.9 * 2.5 + 2.0 + 0.5 * 0.75)


def _problem(seed=0, **kw):
    net, theta, alpha, tb, vb, cfg = checks.hypergradient_problem(seed)
    return net, theta, alpha, tb, vb, replace(cfg, **kw)


def test_theta_step_zero_lr_is_identity():
    net, theta, alpha, tb, _, cfg = _problem(eta_theta=0.0)
    st = theta_step(net, theta, alpha, tb, cfg, np.random.default_rng(0))
    assert st.theta.flat().tobytes() == theta.flat().tobytes()


def test_theta_step_clean_flag_ignores_epsilon():
    net, theta, alpha, tb, _, cfg = _problem(use_adv=False)
    a = theta_step(net, theta, alpha, tb, cfg, np.random.default_rng(0))
    b = theta_step(net, theta, alpha, tb, replace(cfg, attack=AttackConfig(5.0, 1.0)), np.random.default_rng(9))
    _, g = net.loss_and_grads(theta, alpha, *tb, wrt=("theta",))
    ref = theta.with_flat(theta.flat() - cfg.eta_theta * (g["theta"].flat() + cfg.weight_decay * theta.flat()))
    assert a.theta.flat().tobytes() == b.theta.flat().tobytes() == ref.flat().tobytes()


def test_theta_step_rejects_non_finite():
    net, theta, alpha, tb, _, cfg = _problem(use_adv=False)
    bad = (np.full_like(tb[0], np.inf), tb[1])
    with pytest.raises(NumericalError, match="step 4"), np.errstate(all="ignore"):
        theta_step(net, theta, alpha, bad, cfg, None, step=4)


def test_scalar_toy_hypergradient():
    # L_tr = alpha * theta, L_val = theta^2 / 2  =>  g'(alpha) = -eta (theta - eta alpha)
    def u1(theta, eta, alpha):
        out, _ = finite_difference_hypergradient(
            np.array([theta]), eta, lambda t: np.array([alpha]), lambda t: t.copy(),
            lambda t: (0.5 * float(t @ t), t.copy(), np.zeros(1)))
        return float(out[0])

    assert u1(1.0, 0.5, 2.0) == 0.0
    for theta, eta, alpha in [(1.0, 0.5, 1.0), (-0.3, 0.2, 0.7), (2.0, 0.1, -1.0)]:
        assert u1(theta, eta, alpha) == pytest.approx(-eta * (theta - eta * alpha), abs=1e-12)


def test_hypergradient_matches_composite_fd():
    assert checks.check_hypergradient().passed


def test_hypergradient_clean_matches_fd():
    net, theta, alpha, tb, vb, cfg = _problem(1, use_adv=False)
    u1, _ = alpha_hypergradient(net, theta, alpha, tb, vb, cfg, None)
    g = checks.composite_objective(net, theta, tb, vb, cfg, None)
    assert relative_error(u1, fd_gradient(g, alpha, 1e-5)) <= 1e-3


@pytest.mark.parametrize("kw", [{"eta_theta": 0.0}, {"second_order": False}])
def test_hypergradient_first_order_degeneration(kw):
    net, theta, alpha, tb, vb, cfg = _problem(**kw)
    u1, l_val = alpha_hypergradient(net, theta, alpha, tb, vb, cfg, np.random.default_rng(0))
    ref_l, ref = net.loss_and_grads(theta, alpha, *vb, wrt=("alpha",))
    assert u1.tobytes() == ref["alpha"].tobytes() and l_val == ref_l


def test_alpha_step_modes(rng):
    alpha = rng.standard_normal((4, 5))
    u1, u2 = rng.standard_normal((4, 5)), rng.standard_normal((4, 5))
    cfg = SearchConfig(eta_alpha=0.1)
    new, gamma = alpha_step(alpha, u1, np.zeros_like(u2), cfg)
    assert gamma == 1.0 and new.tobytes() == (alpha - 0.1 * (1.0 * u1 + 0.0 * u2)).tobytes()
    new, gamma = alpha_step(alpha, u1, u2, replace(cfg, use_mgda=False))
    assert gamma == 0.5 and new.tobytes() == (alpha - 0.1 * (0.5 * u1 + 0.5 * u2)).tobytes()
    new, gamma = alpha_step(alpha, u1, u2, replace(cfg, use_nop=False))
    assert new.tobytes() == (alpha - 0.1 * u1).tobytes()
    with pytest.raises(ValueError):
        alpha_step(alpha, u1[:2], u2, cfg)


def darts_baseline_step(net, theta, alpha, tb, vb, cfg, buf=None):
    """One plain DARTS iteration written out independently: SGD on clean training
    loss, then an unrolled second-order step on the clean validation loss."""
    flat = theta.flat()
    _, g = net.loss_and_grads(theta, alpha, *tb, wrt=("theta",))
    step = g["theta"].flat() + cfg.weight_decay * flat
    nxt = theta.with_flat(flat - cfg.eta_theta * step)
    _, gt = net.loss_and_grads(nxt, alpha, *tb, wrt=("theta",))
    unrolled = nxt.with_flat(nxt.flat() - cfg.eta_theta * gt["theta"].flat())
    _, gv = net.loss_and_grads(unrolled, alpha, *vb, wrt=("theta", "alpha"))
    v = gv["theta"].flat()
    h = 0.01 / np.linalg.norm(v)
    gp = net.loss_and_grads(nxt.with_flat(nxt.flat() + h * v), alpha, *tb, wrt=("alpha",))[1]["alpha"]
    gm = net.loss_and_grads(nxt.with_flat(nxt.flat() - h * v), alpha, *tb, wrt=("alpha",))[1]["alpha"]
    hyper = gv["alpha"] - cfg.eta_theta * ((gp - gm) / (2 * h))
    return nxt, alpha - cfg.eta_alpha * hyper


@pytest.mark.parametrize("nodes,batch", [(4, 32), (5, 64)])
def test_flags_off_reproduce_darts_step(moons, nodes, batch):
    from robust_nas.bilevel import init_state
    from robust_nas.data import batches, split_half
    from robust_nas.supernet import Supernet

    cfg = SearchConfig(steps=1, use_adv=False, use_nop=False, batch_size=batch, eta_alpha=0.5)
    space = SearchSpace.from_names(nodes, 2)
    result = search(cfg, space, moons)
    train, val = split_half(moons, cfg.seed)
    net = Supernet(space, 2)
    theta, alpha, _ = init_state(net, cfg.seed)
    ti = batches(len(train), batch, cfg.seed, 0)[0]
    vi = batches(len(val), batch, cfg.seed + 1, 0)[0]
    tb, vb = (train.inputs[ti], train.labels[ti]), (val.inputs[vi], val.labels[vi])
    theta_ref, alpha_ref = darts_baseline_step(net, theta, alpha, tb, vb, cfg)
    assert result.theta.flat().tobytes() == theta_ref.flat().tobytes()
    assert result.alpha.tobytes() == alpha_ref.tobytes()


def test_search_smoke_invariants(moons):
    space = SearchSpace.from_names(5, 2)
    lb = 6.0
    cfg = SearchConfig(steps=50, eta_alpha=3.0, resource=ResourceConfig(lb))
    result = search(cfg, space, moons)
    assert len(result.log) == 50
    for rec in result.log:
        assert 0.0 <= rec.gamma <= 1.0
        assert rec.psi >= lb
        assert rec.psi == max(rec.nhat, lb)


def test_search_is_deterministic(moons):
    space = SearchSpace.from_names(4, 2)
    cfg = SearchConfig(steps=15, eta_alpha=1.0)
    logs = []
    for _ in range(2):
        buf = io.StringIO()
        r = search(cfg, space, moons, log_file=buf)
        logs.append((buf.getvalue(), r.genotype.to_json(), r.alpha.tobytes()))
    assert logs[0] == logs[1]
    assert len(logs[0][0].splitlines()) == 15


def test_no_mgda_logs_half(moons):
    cfg = SearchConfig(steps=10, use_mgda=False, resource=ResourceConfig(0.0))
    result = search(cfg, SearchSpace.from_names(4, 2), moons)
    assert all(rec.gamma == 0.5 for rec in result.log)


def test_runlog_schema(moons):
    cfg = SearchConfig(steps=4, eval_every=2)
    result = search(cfg, SearchSpace.from_names(4, 2), moons)
    recs = [json.loads(r.to_json()) for r in result.log]
    assert set(recs[0]) == {"t", "l_val", "psi", "nhat", "gamma", "grad_theta_norm", "clean_acc", "robust_acc"}
    assert [r["t"] for r in recs] == [0, 1, 2, 3]
    assert recs[0]["clean_acc"] is None and recs[1]["robust_acc"] is not None


def test_step_order_and_partition(moons, monkeypatch):
    # alpha never touches theta and the alpha step sees theta_{t+1}
    from robust_nas import bilevel

    seen = []
    orig = bilevel.alpha_hypergradient

    def spy(net, theta_next, *a, **k):
        seen.append(theta_next.flat().copy())
        return orig(net, theta_next, *a, **k)

    monkeypatch.setattr(bilevel, "alpha_hypergradient", spy)
    cfg = SearchConfig(steps=1, eta_alpha=100.0)
    result = bilevel.search(cfg, SearchSpace.from_names(4, 2), moons)
    assert seen[0].tobytes() == result.theta.flat().tobytes()
    frozen = bilevel.search(replace(cfg, eta_alpha=1e-12), SearchSpace.from_names(4, 2), moons)
    assert frozen.theta.flat().tobytes() == result.theta.flat().tobytes()


def test_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(eta_alpha=0)
    with pytest.raises(ValueError):
        SearchConfig(batch_size=0)
