"""Robustness and parameter-count direction experiments on two-moons.

    python scripts/run_directional.py robustness --seeds 0 1 2 3 4
    python scripts/run_directional.py resource --eta-alpha 3.0 --steps 300

Prints one JSON row per seed, then a JSON summary.
"""
import argparse
import json

from robust_nas.experiments import DirectionalConfig, resource_direction, robustness_direction


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("experiment", choices=["robustness", "resource", "both"])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--eta-alpha", type=float, default=3.0)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--nodes", type=int, default=5)
    p.add_argument("--retrain-steps", type=int, default=1000)
    p.add_argument("--lower-bound", type=float, default=6.0)
    args = p.parse_args()

    exp = DirectionalConfig(seeds=tuple(args.seeds), steps=args.steps, eta_alpha=args.eta_alpha,
                            epsilon=args.epsilon, nodes=args.nodes, retrain_steps=args.retrain_steps,
                            lower_bound=args.lower_bound)

    def show(row):
        print(json.dumps(row), flush=True)

    runners = {"robustness": robustness_direction, "resource": resource_direction}
    names = list(runners) if args.experiment == "both" else [args.experiment]
    for name in names:
        summary = runners[name](exp, log=show)
        summary.pop("rows")
        print(json.dumps({"experiment": name, **summary}), flush=True)


if __name__ == "__main__":
    main()
