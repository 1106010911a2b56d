"""Toy-scale directional experiments on two-moons, built from the CLI code path.

Both experiments run one search per (seed, setting), discretize, retrain the
genotype from scratch, and score it on a fresh test draw.
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass, field

import numpy as np

from .adversarial import accuracy, robust_accuracy
from .bilevel import SearchResult, search, train_weights
from .config import RunConfig, Splits, load_data, parse_config
from .supernet import Genotype, NetworkWeights, Supernet


def evaluate_genotype(cfg: RunConfig, genotype: Genotype, splits: Splits | None = None
                      ) -> tuple[dict, Supernet, NetworkWeights]:
    """Retrain the discretized network from scratch and score it on the test split."""
    splits = splits or load_data(cfg)
    full = splits.full
    net = Supernet(genotype.space, max(full.num_classes, splits.test.num_classes), genotype)
    scfg = cfg.search_config()
    theta = train_weights(net, full, scfg, cfg.retrain.steps, cfg.retrain.adversarial, cfg.search.seed)
    test = splits.test
    clean = accuracy(net, theta, None, test.inputs, test.labels)
    rng = np.random.default_rng([cfg.search.seed, 2])
    robust = robust_accuracy(net, theta, None, test.inputs, test.labels, scfg.eval_attack, rng)
    report = {"clean_err": 1.0 - clean, "param_count": genotype.param_count, "robust_acc": robust}
    return report, net, theta


def run_search(cfg: RunConfig, splits: Splits | None = None) -> SearchResult:
    splits = splits or load_data(cfg)
    return search(cfg.search_config(), cfg.search_space(), train=splits.train, val=splits.val,
                  exclude_zero=cfg.space.exclude_zero)


@dataclass
class DirectionalConfig:
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    n: int = 400
    noise: float = 0.15
    epsilon: float = 0.1
    nodes: int = 5
    steps: int = 300
    # the default 3e-4 barely moves alpha in a few hundred steps
    eta_alpha: float = 3.0
    retrain_steps: int = 1000
    lower_bound: float = 6.0
    extra: dict = field(default_factory=dict)

    def run_config(self, seed: int, **search) -> RunConfig:
        doc = {
            "data": {"kind": "moons", "n": self.n, "noise": self.noise, "seed": seed},
            "space": {"nodes": self.nodes},
            "search": {"steps": self.steps, "eta_alpha": self.eta_alpha, "seed": seed, **search},
            "attack": {"epsilon": self.epsilon},
            "resource": {"lower_bound": self.lower_bound},
            "retrain": {"steps": self.retrain_steps},
        }
        for section, values in self.extra.items():
            doc.setdefault(section, {}).update(values)
        return parse_config(doc)


def _median(xs) -> float:
    return float(statistics.median(xs))


def robustness_direction(exp: DirectionalConfig | None = None, log=None) -> dict:
    """Adversarial search + adversarial retraining versus clean search + clean retraining."""
    exp = exp or DirectionalConfig()
    rows = []
    for seed in exp.seeds:
        row = {"seed": seed}
        for tag, use_adv in (("adv", True), ("clean", False)):
            cfg = exp.run_config(seed, use_adv=use_adv)
            splits = load_data(cfg)
            result = run_search(cfg, splits)
            report, _, _ = evaluate_genotype(cfg, result.genotype, splits)
            row[f"{tag}_robust"] = report["robust_acc"]
            row[f"{tag}_clean"] = 1.0 - report["clean_err"]
            row[f"{tag}_params"] = report["param_count"]
        rows.append(row)
        if log:
            log(row)
    robust_gain = _median([r["adv_robust"] for r in rows]) - _median([r["clean_robust"] for r in rows])
    clean_drop = _median([r["clean_clean"] for r in rows]) - _median([r["adv_clean"] for r in rows])
    return {"rows": rows, "robust_gain": robust_gain, "clean_drop": clean_drop}


def resource_direction(exp: DirectionalConfig | None = None, log=None) -> dict:
    """Genotype size with and without the parameter-count objective."""
    exp = exp or DirectionalConfig()
    rows = []
    for seed in exp.seeds:
        row = {"seed": seed}
        for tag, use_nop in (("nop", True), ("no_nop", False)):
            cfg = exp.run_config(seed, use_nop=use_nop)
            result = run_search(cfg)
            row[f"{tag}_params"] = result.genotype.param_count
            row[f"{tag}_nhat"] = result.log[-1].nhat if result.log else float("nan")
        rows.append(row)
        if log:
            log(row)
    return {
        "rows": rows,
        "lower_bound": exp.lower_bound,
        "median_params_nop": _median([r["nop_params"] for r in rows]),
        "median_params_no_nop": _median([r["no_nop_params"] for r in rows]),
        "median_final_nhat": _median([r["nop_nhat"] for r in rows]),
    }
