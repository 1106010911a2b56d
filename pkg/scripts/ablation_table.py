"""Search ablations on two-moons: toggle adversarial training, the parameter
objective and MGDA weighting, then retrain and score each found genotype.

    python scripts/ablation_table.py --seeds 0 1 2
"""
import argparse
import json
import statistics

from robust_nas.config import load_data
from robust_nas.experiments import DirectionalConfig, evaluate_genotype, run_search

ROWS = [
    ("full", {}),
    ("no_adv", {"use_adv": False}),
    ("no_nop", {"use_nop": False}),
    ("no_mgda", {"use_mgda": False}),
    ("plain", {"use_adv": False, "use_nop": False}),
]


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--eta-alpha", type=float, default=3.0)
    args = p.parse_args()
    exp = DirectionalConfig(seeds=tuple(args.seeds), steps=args.steps, eta_alpha=args.eta_alpha)

    print(f"{'setting':<8} {'params':>7} {'clean_err':>9} {'robust':>7} {'gamma':>6}")
    for name, flags in ROWS:
        reports, gammas = [], []
        for seed in exp.seeds:
            cfg = exp.run_config(seed, **flags)
            splits = load_data(cfg)
            result = run_search(cfg, splits)
            report, _, _ = evaluate_genotype(cfg, result.genotype, splits)
            reports.append(report)
            gammas.append(statistics.mean(r.gamma for r in result.log))
        med = {k: statistics.median(r[k] for r in reports) for k in reports[0]}
        print(f"{name:<8} {med['param_count']:>7.0f} {med['clean_err']:>9.3f} {med['robust_acc']:>7.3f} "
              f"{statistics.mean(gammas):>6.3f}", flush=True)
        print(json.dumps({"setting": name, "median": med, "mean_gamma": statistics.mean(gammas)}), flush=True)


if __name__ == "__main__":
    main()
