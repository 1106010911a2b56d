"""Bi-level multi-objective differentiable architecture search at desk scale.

Architecture logits are updated with an MGDA-weighted combination of a
validation-loss hypergradient and a parameter-count objective, while network
weights are trained on random-start FGSM examples.
"""
from .adversarial import AttackConfig, fgsm_rs_perturb, pgd_attack, robust_accuracy
from .bilevel import SearchConfig, search
from .data import Dataset, generate, load_csv, split_half
from .mgda import gamma_two_objective, solve_min_norm
from .resource import ResourceConfig, resource_objective
from .supernet import Genotype, SearchSpace, Supernet, discretize

__all__ = [
    "AttackConfig",
    "Dataset",
    "Genotype",
    "ResourceConfig",
    "SearchConfig",
    "SearchSpace",
    "Supernet",
    "discretize",
    "fgsm_rs_perturb",
    "gamma_two_objective",
    "generate",
    "load_csv",
    "pgd_attack",
    "resource_objective",
    "robust_accuracy",
    "search",
    "solve_min_norm",
    "split_half",
]
