"""Command-line entry point: ``flexmarl <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import typing
from pathlib import Path

from ..marl.training import METHODS, TrainConfig, load_policy
from ..oracle.lp import build_day_lp, dump_lp
from ..profiles import ScenarioError, load_scenario_csv, write_scenario_csv
from .benchmark import scaling_benchmark
from .experiment import ABLATION_VARIANTS, ExperimentConfig, ablation, run_experiment
from .metrics import BaselinePolicy, DemonstratorPolicy, compute_savings, evaluate_policies
from .scenarios import SCENARIOS, make_scenario


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _optional_float(text: str):
    return None if text.lower() == "none" else float(text)


def _add_train_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("training hyperparameters")
    hints = typing.get_type_hints(TrainConfig)
    for f in dataclasses.fields(TrainConfig):
        if f.name in ("episodes", "seed"):
            continue
        kind = hints[f.name]
        conv = {bool: _bool, int: int, float: float}.get(kind, _optional_float)
        g.add_argument(_flag(f.name), dest=f"train_{f.name}", type=conv, default=None,
                       help=f"default {f.default!r}")


def _add_scenario_flags(p: argparse.ArgumentParser):
    p.add_argument("--scenario", choices=sorted(SCENARIOS), default="default")
    p.add_argument("--scenario-dir", default=None, help="load a CSV scenario directory instead")
    p.add_argument("--n-homes", type=int, default=3)
    p.add_argument("--n-days", type=int, default=8)


def _train_config(args) -> TrainConfig:
    changes = {f.name: getattr(args, f"train_{f.name}") for f in dataclasses.fields(TrainConfig)
               if getattr(args, f"train_{f.name}", None) is not None}
    return dataclasses.replace(TrainConfig(), **changes)


def _experiment_config(args) -> ExperimentConfig:
    if args.config:
        cfg = ExperimentConfig.from_dict(json.loads(Path(args.config).read_text()))
        return cfg
    return ExperimentConfig(method=args.method, scenario=args.scenario, scenario_dir=args.scenario_dir,
                            n_homes=args.n_homes, n_days=args.n_days, n_eval_days=args.n_eval_days,
                            n_train_episodes=args.episodes, seeds=list(args.seeds), output_dir=args.out,
                            run_name=args.run_name, train=_train_config(args))


def _scenario(args, seed: int):
    if args.scenario_dir:
        return load_scenario_csv(args.scenario_dir)
    return make_scenario(args.scenario, seed, args.n_homes, args.n_days)


def cmd_generate(args) -> int:
    sc = make_scenario(args.scenario, args.seed, args.n_homes, args.n_days)
    out = write_scenario_csv(sc, args.out)
    if args.dump_lp:
        for d in range(sc.n_days):
            dump_lp(build_day_lp(sc, d), Path(args.out) / f"day_{d}.lp")
    print(out)
    return 0


def cmd_train(args) -> int:
    path = run_experiment(_experiment_config(args))
    record = json.loads((path / "record.json").read_text())
    print(json.dumps({"results": str(path), "savings": record["summary"]["savings"]}, indent=2))
    return 0


def cmd_evaluate(args) -> int:
    sc = _scenario(args, args.seed)
    days = args.days if args.days else list(range(sc.n_days))
    baseline = evaluate_policies(BaselinePolicy(sc.n_homes), sc, days)
    if args.policy == "baseline":
        policy = BaselinePolicy(sc.n_homes)
    elif args.policy == "lp":
        policy = DemonstratorPolicy()
    else:
        policy = load_policy(args.policy)
        if policy.n_homes != sc.n_homes:
            raise ValueError(f"policy controls {policy.n_homes} homes, scenario has {sc.n_homes}")
    ev = evaluate_policies(policy, sc, days)
    out = {"days": days, "baseline_cost": baseline.cost, "cost": ev.cost, "breakdown": ev.breakdown,
           "savings": compute_savings(baseline.cost, ev.cost, sc.n_homes)}
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_benchmark(args) -> int:
    res = scaling_benchmark(args.methods, args.sizes, args.episodes, args.seeds, args.scenario,
                            _train_config(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "timings.csv", "w") as fh:
        fh.write("method,n_homes,seed,seconds\n")
        for r in res["rows"]:
            fh.write(f"{r['method']},{r['n_homes']},{r['seed']},{r['seconds']!r}\n")
    (out / "fits.json").write_text(json.dumps(res["fits"], indent=2, sort_keys=True) + "\n")
    print(json.dumps({m: {"order": f["order"], "linear": f["linear"]["coefficients"],
                          "quadratic": f["quadratic"]["coefficients"]} for m, f in res["fits"].items()},
                     indent=2))
    return 0


def cmd_ablation(args) -> int:
    cfg = _experiment_config(args)
    variants = {k: ABLATION_VARIANTS[k] for k in args.variants} if args.variants else None
    res = ablation(cfg, variants)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(json.dumps(res, indent=2, sort_keys=True) + "\n")
    print(json.dumps({k: {"p25": v["p25"], "p25_delta": v["p25_delta"]} for k, v in res["variants"].items()},
                     indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flexmarl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic scenario as CSV files")
    _add_scenario_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--dump-lp", action="store_true", help="also write each day's LP in CPLEX LP format")
    p.set_defaults(func=cmd_generate)

    for name, func, helptext in (("train", cmd_train, "train a method and write a results record"),
                                 ("ablation", cmd_ablation, "FACMAC with hysteresis / convolution toggled")):
        p = sub.add_parser(name, help=helptext)
        _add_scenario_flags(p)
        p.add_argument("--config", default=None, help="JSON experiment config (overrides other flags)")
        p.add_argument("--method", choices=METHODS, default="facmac")
        p.add_argument("--episodes", type=int, default=200)
        p.add_argument("--n-eval-days", type=int, default=2)
        p.add_argument("--seeds", type=int, nargs="+", default=[0])
        p.add_argument("--run-name", default=None)
        p.add_argument("--out", default="results")
        if name == "ablation":
            p.add_argument("--variants", nargs="+", choices=sorted(ABLATION_VARIANTS), default=None)
        _add_train_flags(p)
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate", help="cost of a policy on scenario days")
    _add_scenario_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--policy", default="baseline", help="'baseline', 'lp' or a saved policy directory")
    p.add_argument("--days", type=int, nargs="*", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("benchmark-scaling", help="training time against the number of homes")
    p.add_argument("--methods", nargs="+", choices=METHODS, default=["facmac", "iql+opt+marginal"])
    p.add_argument("--sizes", type=int, nargs="+", default=[3, 5, 10])
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--scenario", choices=sorted(SCENARIOS), default="default")
    p.add_argument("--out", default="results/scaling")
    _add_train_flags(p)
    p.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, ScenarioError, RuntimeError, OSError) as exc:
        print(f"flexmarl {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
