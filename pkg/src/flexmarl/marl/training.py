"""Episodic training loops for the FACMAC and tabular IQL method families."""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import environment as env
from ..environment import DEFAULT_ACTION, JointAction
from ..neural import load_checkpoint, save_checkpoint
from ..oracle.demonstrator import baseline_rollout, demonstration, rollout
from ..profiles import ScenarioData
from .buffer import Batch, ReplayBuffer
from .facmac import FacmacConfig, FacmacLearner, Mixer
from .iql import QTable, Transition, action_grid, equal_frequency_edges, iql_update

METHODS = ("facmac", "facmac+supervised", "iql", "iql+marginal", "iql+opt", "iql+opt+marginal")
MONTH_DAYS = 365.25 / 12


@dataclass
class TrainConfig:
    episodes: int = 200
    seed: int = 0
    eval_every: int = 50
    # facmac
    batch_size: int = 64
    buffer_capacity: int = 50_000
    warmup_steps: int = 240
    update_every: int = 1
    sigma_start: float = 0.3
    sigma_end: float = 0.05
    sigma_decay_fraction: float = 0.5
    demo_fraction: float = 0.5
    gamma: float = 0.99
    tau: float = 0.01
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    hysteretic: bool = True
    hysteresis_alpha: float = 1.0
    hysteresis_beta: float = 0.5
    supervised_weight: float = 1.0
    grad_clip: float | None = 10.0
    conv: bool = True
    shared_actor: bool = True
    local_state: bool = False
    reward_scale: float | None = None
    # iql
    iql_alpha: float = 0.1
    iql_beta: float = 0.05
    iql_hysteretic: bool = True
    n_obs_bins: int = 10
    n_action_bins: int = 5
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05

    def validate(self):
        errors = []
        if self.episodes < 0:
            errors.append("episodes must be >= 0")
        if self.eval_every < 1:
            errors.append("eval_every must be >= 1")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            errors.append("need 1 <= batch_size <= buffer_capacity")
        if self.update_every < 1:
            errors.append("update_every must be >= 1")
        if not 0 <= self.sigma_end <= self.sigma_start:
            errors.append("need 0 <= sigma_end <= sigma_start")
        if not 0 < self.sigma_decay_fraction <= 1:
            errors.append("sigma_decay_fraction must lie in (0, 1]")
        if not 0 <= self.demo_fraction < 1:
            errors.append("demo_fraction must lie in [0, 1)")
        if not 0 < self.iql_beta <= self.iql_alpha <= 1:
            errors.append("need 0 < iql_beta <= iql_alpha <= 1")
        if not 0 <= self.epsilon_end <= self.epsilon_start <= 1:
            errors.append("need 0 <= epsilon_end <= epsilon_start <= 1")
        if self.n_obs_bins < 1 or self.n_action_bins < 2:
            errors.append("need n_obs_bins >= 1 and n_action_bins >= 2")
        if self.reward_scale is not None and self.reward_scale <= 0:
            errors.append("reward_scale must be positive")
        try:
            self.facmac_config().validate()
        except ValueError as exc:
            errors.append(str(exc))
        if errors:
            raise ValueError("invalid training config: " + "; ".join(errors))

    def facmac_config(self) -> FacmacConfig:
        names = {f.name for f in dataclasses.fields(FacmacConfig)}
        return FacmacConfig(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def linear_schedule(start: float, end: float, episode: int, episodes: int, fraction: float) -> float:
    """Linear decay from ``start`` to ``end`` over the first ``fraction`` of training."""
    horizon = max(1.0, fraction * episodes)
    return start + (end - start) * min(1.0, episode / horizon)


@dataclass
class ObsNormaliser:
    mean: float
    scale: float
    window: int = env.WINDOW

    @classmethod
    def fit(cls, scenario: ScenarioData) -> "ObsNormaliser":
        cg = scenario.cost_coeff
        return cls(float(np.mean(cg)), float(np.std(cg)) or 1.0)

    def obs(self, o: np.ndarray) -> np.ndarray:
        o = np.array(o, dtype=float)
        o[..., :self.window] = (o[..., :self.window] - self.mean) / self.scale
        return o

    state = obs


@dataclass
class PolicySet:
    """Trained decision rules for every home plus what is needed to reuse them."""

    method: str
    n_homes: int
    normaliser: ObsNormaliser
    local_state: bool = False
    learner: FacmacLearner | None = None
    tables: list[QTable] | None = None
    default_index: int = 0

    def observations(self, state, scenario) -> np.ndarray:
        mode = "facmac" if self.learner is not None else "iql"
        return np.stack([env.observe(state, i, mode, scenario, self.local_state) for i in range(self.n_homes)])

    def act_array(self, state, scenario, sigma=0.0, rng=None) -> np.ndarray:
        if self.learner is not None:
            return self.learner.act(self.normaliser.obs(self.observations(state, scenario)), sigma, rng)
        b = self.tables[0].bin(float(scenario.cost_coeff[state.t]))
        return np.stack([tab.actions[tab.greedy(b, self.default_index)] for tab in self.tables])

    def act(self, state, scenario) -> JointAction:
        return JointAction.from_array(self.act_array(state, scenario))

    def save(self, directory) -> list[Path]:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        meta = {"method": self.method, "n_homes": self.n_homes, "local_state": self.local_state,
                "normaliser": [self.normaliser.mean, self.normaliser.scale],
                "default_index": self.default_index,
                "actors": len(self.learner.actors) if self.learner is not None else 0,
                "tables": len(self.tables or [])}
        paths = [d / "policy.json"]
        paths[0].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        if self.learner is not None:
            for k, net in enumerate(self.learner.actors):
                paths.append(save_checkpoint(net, d / f"actor_{k}.txt"))
            paths.append(save_checkpoint(self.learner.critic, d / "critic.txt"))
            for name, net in zip(("w1", "b1", "w2", "v"), self.learner.mixer.networks):
                paths.append(save_checkpoint(net, d / f"mixer_{name}.txt"))
        for k, tab in enumerate(self.tables or []):
            paths.append(tab.dump(d / f"qtable_{k}.txt"))
        return paths


def load_policy(directory) -> PolicySet:
    """Rebuild a :class:`PolicySet` for acting from :meth:`PolicySet.save` output."""
    d = Path(directory)
    meta = json.loads((d / "policy.json").read_text())
    norm = ObsNormaliser(*meta["normaliser"])
    policy = PolicySet(meta["method"], meta["n_homes"], norm, meta["local_state"],
                       default_index=meta["default_index"])
    if meta["actors"]:
        actors = [load_checkpoint(d / f"actor_{k}.txt") for k in range(meta["actors"])]
        critic = load_checkpoint(d / "critic.txt")
        state_dim = env.global_state_size(meta["n_homes"])
        mixer_nets = [load_checkpoint(d / f"mixer_{name}.txt") for name in ("w1", "b1", "w2", "v")]
        mixer = Mixer(meta["n_homes"], state_dim, mixer_nets[1].spec.output_size, nets=mixer_nets)
        policy.learner = FacmacLearner(meta["n_homes"], actors[0].spec.input_size, state_dim,
                                       actors=actors, critic=critic, mixer=mixer)
    else:
        policy.tables = [QTable.load(d / f"qtable_{k}.txt") for k in range(meta["tables"])]
    return policy


@dataclass
class TrainResult:
    policy: PolicySet
    curve: list[dict] = field(default_factory=list)
    train_seconds: float = 0.0
    episodes: int = 0


def split_days(scenario: ScenarioData, n_eval: int):
    """Last ``n_eval`` days are held out for evaluation (all days if too few)."""
    days = list(range(scenario.n_days))
    if n_eval <= 0 or n_eval >= len(days):
        return days, days
    return days[:-n_eval], days[-n_eval:]


def evaluate_cost(policy: PolicySet, scenario: ScenarioData, days) -> float:
    return float(np.mean([rollout(scenario, d, lambda s: policy.act(s, scenario))[0] for d in days]))


class _Trainer:
    def __init__(self, method, scenario, cfg: TrainConfig, train_days, eval_days):
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
        cfg.validate()
        self.method, self.sc, self.cfg = method, scenario, cfg
        self.train_days, self.eval_days = list(train_days), list(eval_days)
        self.n = scenario.n_homes
        self.rng = np.random.default_rng(cfg.seed)
        self.scale = cfg.reward_scale if cfg.reward_scale is not None else 1.0 / self.n
        self.norm = ObsNormaliser.fit(scenario)
        self.facmac = method.startswith("facmac")
        self.uses_demo = method in ("facmac+supervised", "iql+opt", "iql+opt+marginal")
        self.marginal = method.endswith("marginal")
        if self.facmac:
            obs_dim = env.observation_size("facmac", cfg.local_state)
            state_dim = env.global_state_size(self.n)
            learner = FacmacLearner(self.n, obs_dim, state_dim, cfg.facmac_config(),
                                    seed=int(self.rng.integers(2**31)))
            self.policy = PolicySet(method, self.n, self.norm, cfg.local_state, learner=learner)
            self.buffer = ReplayBuffer(cfg.buffer_capacity, self.n, obs_dim, state_dim)
            self.demo_buffer = ReplayBuffer(cfg.buffer_capacity, self.n, obs_dim, state_dim)
            self.steps = 0
        else:
            edges = equal_frequency_edges(scenario.cost_coeff, cfg.n_obs_bins)
            grid = action_grid(cfg.n_action_bins)
            tables = [QTable(edges, grid, cfg.iql_alpha, cfg.iql_beta, cfg.gamma) for _ in range(self.n)]
            default = tables[0].nearest_action(DEFAULT_ACTION)
            self.policy = PolicySet(method, self.n, self.norm, tables=tables, default_index=default)
        self.baseline = float(np.mean(baseline_rollout(scenario, self.eval_days)))

    # -- shared helpers ----------------------------------------------------

    def _facmac_view(self, state):
        obs = self.norm.obs(self.policy.observations(state, self.sc))
        return obs, self.norm.state(env.global_state(state, self.sc))

    def _marginals(self, state, action: JointAction, reward: float) -> np.ndarray:
        out = np.zeros(self.n)
        for i in range(self.n):
            _, alt = env.step(state.copy(), action.with_agent(i, DEFAULT_ACTION), self.sc)
            out[i] = reward - alt.reward
        return out

    # -- facmac ------------------------------------------------------------

    def _fill_demo_buffer(self):
        for day in self.train_days:
            demo = demonstration(self.sc, day)
            state = env.initial_state(self.sc, day)
            obs, s = self._facmac_view(state)
            for k in range(self.sc.horizon):
                a = demo.actions[k]
                state, out = env.step(state, JointAction.from_array(a), self.sc)
                obs2, s2 = self._facmac_view(state)
                self.demo_buffer.add(obs, a, out.reward * self.scale, obs2, s, s2, out.done, demo_actions=a)
                obs, s = obs2, s2

    def _facmac_batch(self) -> Batch:
        cfg = self.cfg
        if self.uses_demo and len(self.demo_buffer):
            n_demo = int(round(cfg.batch_size * cfg.demo_fraction))
            return Batch.concat([self.demo_buffer.sample(n_demo, self.rng),
                                 self.buffer.sample(cfg.batch_size - n_demo, self.rng)])
        return self.buffer.sample(cfg.batch_size, self.rng)

    def _facmac_episode(self, episode: int):
        cfg = self.cfg
        learner = self.policy.learner
        sigma = linear_schedule(cfg.sigma_start, cfg.sigma_end, episode, cfg.episodes, cfg.sigma_decay_fraction)
        day = int(self.rng.choice(self.train_days))
        state = env.initial_state(self.sc, day)
        obs, s = self._facmac_view(state)
        for _ in range(self.sc.horizon):
            a = learner.act(obs, sigma, self.rng)
            state, out = env.step(state, JointAction.from_array(a), self.sc)
            obs2, s2 = self._facmac_view(state)
            self.buffer.add(obs, a, out.reward * self.scale, obs2, s, s2, out.done)
            obs, s = obs2, s2
            self.steps += 1
            if len(self.buffer) >= cfg.warmup_steps and self.steps % cfg.update_every == 0:
                batch = self._facmac_batch()
                learner.critic_update(batch)
                learner.actor_update(batch)
                learner.update_targets()

    # -- iql ---------------------------------------------------------------

    def _bin(self, t: int) -> int:
        return self.policy.tables[0].bin(float(self.sc.cost_coeff[t]))

    def _iql_episode(self, episode: int):
        cfg = self.cfg
        tables = self.policy.tables
        eps = linear_schedule(cfg.epsilon_start, cfg.epsilon_end, episode, cfg.episodes, cfg.sigma_decay_fraction)
        mode = "marginal" if self.marginal else "plain"
        day = int(self.rng.choice(self.train_days))
        if self.uses_demo:
            self._iql_demo_episode(day)
        state = env.initial_state(self.sc, day)
        n_actions = len(tables[0].actions)
        for _ in range(self.sc.horizon):
            b = self._bin(state.t)
            idx = [int(self.rng.integers(n_actions)) if self.rng.random() < eps
                   else tab.greedy(b, self.policy.default_index) for tab in tables]
            action = JointAction.from_array(tables[0].actions[idx])
            prev = state
            state, out = env.step(state, action, self.sc)
            marg = self._marginals(prev, action, out.reward) if self.marginal else np.zeros(self.n)
            b2 = self._bin(min(state.t, self.sc.n_steps - 1))
            for i, tab in enumerate(tables):
                iql_update(tab, Transition(b, idx[i], out.reward * self.scale, b2, out.done,
                                           marg[i] * self.scale), mode, hysteretic=cfg.iql_hysteretic)

    def _iql_demo_episode(self, day: int):
        tables = self.policy.tables
        demo = demonstration(self.sc, day)
        state = env.initial_state(self.sc, day)
        for k in range(self.sc.horizon):
            b = self._bin(state.t)
            action = JointAction.from_array(demo.actions[k])
            prev = state
            state, out = env.step(state, action, self.sc)
            marg = self._marginals(prev, action, out.reward) if self.marginal else np.zeros(self.n)
            b2 = self._bin(min(state.t, self.sc.n_steps - 1))
            for i, tab in enumerate(tables):
                d_idx = tab.nearest_action(demo.actions[k, i])
                iql_update(tab, Transition(b, d_idx, out.reward * self.scale, b2, out.done,
                                           marg[i] * self.scale, d_idx),
                           "demonstrator", use_marginal=self.marginal, hysteretic=self.cfg.iql_hysteretic)

    # -- loop --------------------------------------------------------------

    def _record(self, curve, episode, elapsed):
        cost = evaluate_cost(self.policy, self.sc, self.eval_days)
        savings = (self.baseline - cost) * MONTH_DAYS / self.n
        curve.append({"episode": episode, "eval_cost": cost, "savings": savings, "seconds": elapsed})

    def run(self) -> TrainResult:
        curve = []
        elapsed = 0.0
        if self.facmac and self.uses_demo:
            t0 = time.perf_counter()
            self._fill_demo_buffer()
            elapsed += time.perf_counter() - t0
        for ep in range(self.cfg.episodes):
            t0 = time.perf_counter()
            if self.facmac:
                self._facmac_episode(ep)
            else:
                self._iql_episode(ep)
            elapsed += time.perf_counter() - t0
            if (ep + 1) % self.cfg.eval_every == 0 and ep + 1 < self.cfg.episodes:
                self._record(curve, ep + 1, elapsed)
        self._record(curve, self.cfg.episodes, elapsed)
        return TrainResult(self.policy, curve, elapsed, self.cfg.episodes)


def train(method: str, scenario: ScenarioData, config: TrainConfig | None = None,
          train_days=None, eval_days=None) -> TrainResult:
    """Train ``method`` on ``scenario`` days and return policies plus the learning curve.

    The curve holds the mean evaluation cost per day on ``eval_days``
    (greedy policies, no exploration), savings per home-month against the
    baseline on the same days, and cumulative training seconds.
    """
    config = config or TrainConfig()
    if train_days is None or eval_days is None:
        tr, ev = split_days(scenario, 1 if scenario.n_days > 1 else 0)
        train_days = tr if train_days is None else train_days
        eval_days = ev if eval_days is None else eval_days
    return _Trainer(method, scenario, config, train_days, eval_days).run()
