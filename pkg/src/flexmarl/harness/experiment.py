"""End-to-end experiment runs: scenario, references, training, evaluation, results."""

from __future__ import annotations

import csv
import dataclasses
import json
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..marl.training import METHODS, TrainConfig, split_days, train
from ..oracle.demonstrator import solve_day
from ..profiles import ScenarioData, load_scenario_csv
from .metrics import BaselinePolicy, compute_savings, evaluate_policies, percentiles
from .scenarios import SCENARIOS, make_scenario

RECORD_FORMAT = "flexmarl-record-1"


@dataclass
class ExperimentConfig:
    method: str = "facmac"
    scenario: str = "default"
    scenario_dir: str | None = None
    n_homes: int = 3
    n_days: int = 8
    n_eval_days: int = 2
    n_train_episodes: int = 200
    seeds: list[int] = field(default_factory=lambda: [0])
    output_dir: str = "results"
    run_name: str | None = None
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self):
        errors = []
        if self.method not in METHODS:
            errors.append(f"method must be one of {', '.join(METHODS)}")
        if self.scenario_dir is None and self.scenario not in SCENARIOS:
            errors.append(f"scenario must be one of {', '.join(SCENARIOS)}")
        if self.n_homes < 1:
            errors.append("n_homes must be >= 1")
        if self.n_days < 1:
            errors.append("n_days must be >= 1")
        if self.n_eval_days < 0:
            errors.append("n_eval_days must be >= 0")
        if self.n_train_episodes < 0:
            errors.append("n_train_episodes must be >= 0")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            errors.append("seeds must be a non-empty list without repeats")
        try:
            self.resolved_train(self.seeds[0] if self.seeds else 0).validate()
        except ValueError as exc:
            errors.append(str(exc))
        if errors:
            raise ValueError("invalid experiment config: " + "; ".join(errors))

    def resolved_train(self, seed: int) -> TrainConfig:
        return dataclasses.replace(self.train, episodes=self.n_train_episodes, seed=seed)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        train_cfg = TrainConfig(**d.pop("train", {}))
        return cls(train=train_cfg, **d)

    @property
    def name(self) -> str:
        return self.run_name or f"{self.method.replace('+', '_')}_{self.scenario}_n{self.n_homes}"


@dataclass
class MetricsRecord:
    seed: int
    n_homes: int
    eval_days: list[int]
    baseline_cost: float
    lp_cost: float
    method_cost: float
    savings: float
    lp_savings: float
    breakdown: dict[str, float]
    train_seconds: float = 0.0

    def to_dict(self, with_timing: bool = False) -> dict:
        d = dataclasses.asdict(self)
        if not with_timing:
            d.pop("train_seconds")
        return d


def load_or_make_scenario(cfg: ExperimentConfig, seed: int) -> ScenarioData:
    if cfg.scenario_dir is not None:
        return load_scenario_csv(cfg.scenario_dir)
    return make_scenario(cfg.scenario, seed, cfg.n_homes, cfg.n_days)


def run_seed(cfg: ExperimentConfig, seed: int, policy_dir: Path | None = None):
    """One seed: returns ``(MetricsRecord, learning curve)``."""
    sc = load_or_make_scenario(cfg, seed)
    train_days, eval_days = split_days(sc, cfg.n_eval_days)
    baseline = evaluate_policies(BaselinePolicy(sc.n_homes), sc, eval_days)
    lp_cost = float(np.mean([solve_day(sc, d).objective for d in eval_days]))
    result = train(cfg.method, sc, cfg.resolved_train(seed), train_days, eval_days)
    ev = evaluate_policies(result.policy, sc, eval_days)
    if policy_dir is not None:
        result.policy.save(policy_dir)
    rec = MetricsRecord(seed=seed, n_homes=sc.n_homes, eval_days=list(eval_days),
                        baseline_cost=baseline.cost, lp_cost=lp_cost, method_cost=ev.cost,
                        savings=compute_savings(baseline.cost, ev.cost, sc.n_homes),
                        lp_savings=compute_savings(baseline.cost, lp_cost, sc.n_homes),
                        breakdown=ev.breakdown, train_seconds=result.train_seconds)
    return rec, result.curve


def _dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Run every seed and write the results directory; returns its path.

    ``record.json`` holds only deterministic quantities so identical
    configs give byte-identical records; wall-clock figures go to
    ``timing.json`` and the learning-curve CSVs. Outputs are assembled in
    a temporary directory and moved into place only on success.
    """
    cfg.validate()
    out_root = Path(cfg.output_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    final = out_root / cfg.name
    tmp = Path(tempfile.mkdtemp(prefix=f".{cfg.name}.", dir=out_root))
    try:
        records, timing = [], {}
        for seed in cfg.seeds:
            try:
                rec, curve = run_seed(cfg, seed, tmp / f"policy_seed{seed}")
            except Exception as exc:
                raise RuntimeError(f"{cfg.method} seed {seed}: {exc}") from exc
            records.append(rec)
            timing[str(seed)] = rec.train_seconds
            with open(tmp / f"curve_seed{seed}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["episode", "eval_cost_per_day", "savings_per_home_month", "wall_clock_s"])
                for row in curve:
                    w.writerow([row["episode"], repr(row["eval_cost"]), repr(row["savings"]),
                                repr(row["seconds"])])
        record = {
            "format": RECORD_FORMAT,
            "config": cfg.to_dict(),
            "per_seed": [r.to_dict() for r in records],
            "summary": {"savings": percentiles([r.savings for r in records]),
                        "method_cost": percentiles([r.method_cost for r in records]),
                        "baseline_cost": percentiles([r.baseline_cost for r in records]),
                        "lp_cost": percentiles([r.lp_cost for r in records])},
        }
        _dump_json(record, tmp / "record.json")
        _dump_json({"train_seconds": timing}, tmp / "timing.json")
        if final.exists():
            shutil.rmtree(final)
        tmp.rename(final)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return final


def read_record(path) -> dict:
    p = Path(path)
    return json.loads((p / "record.json" if p.is_dir() else p).read_text())


ABLATION_VARIANTS = {
    "plain": {"hysteretic": False, "conv": False},
    "hysteretic": {"hysteretic": True, "conv": False},
    "conv": {"hysteretic": False, "conv": True},
    "hysteretic+conv": {"hysteretic": True, "conv": True},
}


def ablation(cfg: ExperimentConfig, variants=None) -> dict:
    """FACMAC with hysteresis and the convolutional layer toggled independently.

    Reports 25th-percentile savings over seeds for every variant and its
    difference to the plain variant.
    """
    variants = variants or ABLATION_VARIANTS
    out = {"config": cfg.to_dict(), "variants": {}}
    for name, toggles in variants.items():
        vcfg = dataclasses.replace(cfg, method="facmac", train=dataclasses.replace(cfg.train, **toggles))
        vcfg.validate()
        savings = [run_seed(vcfg, s)[0].savings for s in vcfg.seeds]
        out["variants"][name] = {"toggles": toggles, "savings": savings, **percentiles(savings)}
    base = out["variants"].get("plain", {}).get("p25")
    for v in out["variants"].values():
        v["p25_delta"] = None if base is None else v["p25"] - base
    return out
