"""Command-line entry point: ``robust-nas {search,eval,attack,export,gradcheck}``.

Exit codes: 0 ok, 1 failed check, 2 usage or config error, 3 numerical failure.
Machine-readable results go to stdout as JSON; progress and notes go to stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import checks
from .adversarial import accuracy, robust_accuracy
from .bilevel import NumericalError, search
from .config import ConfigError, RunConfig, load_config, load_data
from .data import DataError
from .experiments import evaluate_genotype
from .supernet import Genotype, NetworkWeights, Supernet, discretize

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.search.seed = args.seed
    for flag, key in (("no_adv", "use_adv"), ("no_nop", "use_nop"), ("no_mgda", "use_mgda"), ("first_order", "second_order")):
        if getattr(args, flag, False):
            setattr(cfg.search, key, False)
            if key == "use_adv":
                cfg.retrain.adversarial = False
    return cfg


def _load_genotype(path, cfg: RunConfig) -> Genotype:
    try:
        g = Genotype.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except FileNotFoundError:
        raise ConfigError(f"genotype file not found: {path}") from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: invalid genotype ({exc})") from None
    if g.space != cfg.search_space():
        raise ConfigError(f"genotype space {g.space.to_dict()} does not match config space {cfg.search_space().to_dict()}")
    return g


def cmd_search(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    splits = load_data(cfg)
    space = cfg.search_space()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved-config.json").write_text(cfg.to_json(), encoding="utf-8")
    with (out / "runlog.jsonl").open("w", encoding="utf-8") as log:
        result = search(cfg.search_config(), space, train=splits.train, val=splits.val,
                        log_file=log, exclude_zero=cfg.space.exclude_zero)
    (out / "genotype.json").write_text(result.genotype.to_json(), encoding="utf-8")
    alpha_doc = {"ops": space.op_names, "edges": [list(e) for e in space.edges()], "logits": result.alpha.tolist()}
    (out / "alpha.json").write_text(json.dumps(alpha_doc, indent=2) + "\n", encoding="utf-8")
    _err(f"search finished: {len(result.log)} steps, genotype param_count={result.genotype.param_count}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    splits = load_data(cfg)
    genotype = _load_genotype(args.genotype, cfg)
    report, net, theta = evaluate_genotype(cfg, genotype, splits)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "weights.json").write_text(json.dumps(theta.to_dict()) + "\n", encoding="utf-8")
    _err(f"classifier head parameters (not counted in param_count): {theta.head_size()}")
    print(json.dumps(report))
    return EXIT_OK


def cmd_attack(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    splits = load_data(cfg)
    genotype = _load_genotype(args.genotype, cfg)
    net = Supernet(genotype.space, splits.test.num_classes, genotype)
    try:
        theta = NetworkWeights.from_dict(json.loads(Path(args.weights).read_text(encoding="utf-8")))
    except FileNotFoundError:
        raise ConfigError(f"weights file not found: {args.weights}") from None
    if {k: v.shape for k, v in theta.params.items()} != net.shapes:
        raise ConfigError("weights do not match the genotype's network")
    scfg = cfg.search_config()
    test = splits.test
    rng = np.random.default_rng([cfg.search.seed, 2])
    report = {
        "clean_acc": accuracy(net, theta, None, test.inputs, test.labels),
        "robust_acc": robust_accuracy(net, theta, None, test.inputs, test.labels, scfg.eval_attack, rng),
        "epsilon": scfg.eval_attack.epsilon,
        "steps": scfg.eval_attack.steps,
    }
    print(json.dumps(report))
    return EXIT_OK


def cmd_export(args) -> int:
    run = Path(args.run)
    try:
        cfg = load_config(run / "resolved-config.json")
        alpha_doc = json.loads((run / "alpha.json").read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"incomplete run directory: {exc.filename}") from None
    exclude = args.exclude_zero or cfg.space.exclude_zero
    genotype = discretize(np.array(alpha_doc["logits"]), cfg.search_space(), exclude_zero=exclude)
    if args.csv:
        records = [json.loads(line) for line in (run / "runlog.jsonl").read_text(encoding="utf-8").splitlines() if line]
        with open(args.csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(records[0]) if records else ["t"])
            writer.writeheader()
            writer.writerows(records)
    sys.stdout.write(genotype.to_json())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    seed = 0
    if args.config:
        seed = _apply_overrides(load_config(args.config), args).search.seed
    elif args.seed is not None:
        seed = args.seed
    results = checks.run_all(seed=seed, tol=args.tol)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        _err(f"{len(failed)} of {len(results)} checks failed: {', '.join(failed)}")
        return EXIT_CHECK
    _err(f"all {len(results)} checks passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robust-nas", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="JSON run configuration")
        sp.add_argument("--seed", type=int, help="override search.seed")
        sp.add_argument("--no-adv", action="store_true", help="clean lower-level training")
        sp.add_argument("--no-nop", action="store_true", help="drop the parameter-count objective")
        sp.add_argument("--no-mgda", action="store_true", help="fixed equal objective weights")
        sp.add_argument("--first-order", action="store_true", help="first-order hypergradient")

    s = sub.add_parser("search", help="run an architecture search")
    common(s)
    s.add_argument("--out", required=True, help="run directory")
    s.set_defaults(func=cmd_search)

    e = sub.add_parser("eval", help="retrain a genotype and report the evaluation triple")
    common(e)
    e.add_argument("--genotype", required=True)
    e.add_argument("--out", help="also write weights.json here")
    e.set_defaults(func=cmd_eval)

    a = sub.add_parser("attack", help="PGD-attack trained genotype weights")
    common(a)
    a.add_argument("--genotype", required=True)
    a.add_argument("--weights", required=True)
    a.set_defaults(func=cmd_attack)

    x = sub.add_parser("export", help="re-discretize a run and optionally dump its log as CSV")
    x.add_argument("--run", required=True, help="run directory written by search")
    x.add_argument("--exclude-zero", action="store_true")
    x.add_argument("--csv", help="write runlog records to this CSV file")
    x.set_defaults(func=cmd_export)

    g = sub.add_parser("gradcheck", help="run the numerical oracle checks")
    common(g, config_required=False)
    g.add_argument("--tol", type=float, help="hold every check to this tolerance instead")
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DataError) as exc:
        _err(f"error: {exc}")
        return EXIT_USAGE
    except NumericalError as exc:
        _err(f"numerical failure: {exc}")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
