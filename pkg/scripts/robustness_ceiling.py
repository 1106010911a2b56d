"""How much can adversarial training buy on two-moons at all?

Trains one fixed genotype with clean and with random-start FGSM training and
reports PGD-10 accuracy for several epsilons. No search is involved, so this
bounds the robustness gap any search could produce.

    python scripts/robustness_ceiling.py --seeds 0 1 2 --eps 0.1 0.2 0.3
"""
import argparse
import json
import statistics

import numpy as np

from robust_nas.adversarial import AttackConfig, accuracy, robust_accuracy
from robust_nas.bilevel import SearchConfig, train_weights
from robust_nas.data import generate
from robust_nas.supernet import Genotype, SearchSpace, Supernet


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--eps", type=float, nargs="+", default=[0.1, 0.2, 0.3])
    p.add_argument("--nodes", type=int, default=6)
    p.add_argument("--op", default="linear_relu")
    p.add_argument("--steps", type=int, default=2000)
    args = p.parse_args()

    space = SearchSpace.from_names(args.nodes, 2)
    genotype = Genotype(space, (args.op,) * space.num_edges)
    net = Supernet(space, 2, genotype)
    for eps in args.eps:
        gains = []
        for seed in args.seeds:
            train = generate("moons", 400, 0.15, seed)
            test = generate("moons", 400, 0.15, seed + 1)
            cfg = SearchConfig(attack=AttackConfig(eps, 1.25 * eps),
                               eval_attack=AttackConfig(eps, 2.5 * eps, 10, random_start=False))
            row = {"eps": eps, "seed": seed}
            for tag, adversarial in (("clean", False), ("adv", True)):
                theta = train_weights(net, train, cfg, args.steps, adversarial, seed)
                row[f"{tag}_acc"] = accuracy(net, theta, None, test.inputs, test.labels)
                row[f"{tag}_robust"] = robust_accuracy(net, theta, None, test.inputs, test.labels, cfg.eval_attack,
                                                       np.random.default_rng(seed))
            gains.append(row["adv_robust"] - row["clean_robust"])
            print(json.dumps(row), flush=True)
        print(json.dumps({"eps": eps, "median_robust_gain": statistics.median(gains)}), flush=True)


if __name__ == "__main__":
    main()
