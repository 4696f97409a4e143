"""Acceptance criteria 1-10, each printing one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s`` to watch the lines as
they are produced; they are also printed under plain ``pytest``.
"""

import dataclasses
import time

import numpy as np
import pytest

from flexmarl import environment as env
from flexmarl.environment import JointAction
from flexmarl.harness.benchmark import scaling_benchmark
from flexmarl.harness.experiment import ABLATION_VARIANTS, ExperimentConfig, ablation, run_experiment, run_seed
from flexmarl.harness.scenarios import price_spread_scenario
from flexmarl.marl.buffer import Batch
from flexmarl.marl.facmac import FacmacConfig, FacmacLearner, Mixer, supervised_penalty
from flexmarl.marl.training import TrainConfig, split_days, train
from flexmarl.neural import Activation, Conv1D, Dense, Network, NetworkSpec
from flexmarl.oracle.demonstrator import baseline_rollout, demonstration, solve_day
from flexmarl.oracle.lp import LinearProgram, build_day_lp
from flexmarl.oracle.simplex import OPTIMAL, solve_lp
from flexmarl.profiles import BatteryParams, generate_profiles, validate

from helpers import tiny_scenario
from oracles import brute_force_home_day, central_difference, max_relative_error, vertex_enumeration


@pytest.fixture
def report(capsys):
    def _report(k, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} | {detail}")
        assert ok, f"criterion {k}: {detail}"
    return _report


# -- 1 -------------------------------------------------------------------------------------------

def test_criterion_1_feasibility_fuzzing(report):
    start = time.perf_counter()
    steps = violations = unserved = 0
    scenarios = 0
    while steps < 100_000 or scenarios < 50:
        seed = scenarios
        rng = np.random.default_rng(seed)
        sc = generate_profiles(seed, int(rng.integers(1, 4)), 2)
        scenarios += 1
        for day in range(sc.n_days):
            state = env.initial_state(sc, day)
            end = env.episode_end(state, sc)
            while state.t < end:
                n = sc.n_homes
                a = JointAction(rng.uniform(-1, 1, n), rng.uniform(0, 1, n), rng.uniform(0, 1, n))
                t = state.t
                state, out = env.step(state, a, sc)
                violations += len(env.constraint_violations(state, out, sc, t, tol=1e-9))
                # a trip is served when the energy it needs was in the battery
                unserved += int(np.any(np.asarray(state.E) < -1e-9))
                steps += 1
    elapsed = time.perf_counter() - start
    ok = violations == 0 and unserved == 0 and steps >= 100_000 and scenarios >= 50 and elapsed < 120
    report(1, ok, f"{steps} steps over {scenarios} scenarios, {violations} violations, "
                  f"{unserved} unserved trips, {elapsed:.1f} s")


# -- 2 -------------------------------------------------------------------------------------------

LOSSLESS = BatteryParams(capacity=4.0, min_level=0.5, initial=2.0, max_charge=1.5, max_discharge=1.5,
                         eta_ch=1.0, eta_dis=1.0)


def _tiny_day(seed):
    """Random day with at most two homes and four steps; quantities on a 0.5 kWh grid."""
    rng = np.random.default_rng(seed)
    n, T = int(rng.integers(1, 3)), int(rng.integers(2, 5))

    def half(lo, hi):
        return rng.integers(int(2 * lo), int(2 * hi) + 1, (n, T)) / 2

    mu = (rng.random((n, T)) < 0.7).astype(int)
    d = dict(price=np.round(rng.uniform(0.05, 0.5, T), 3), mu=mu, d_ev=np.where(mu == 0, half(0, 2), 0.0),
             fixed=half(0, 2), flex=half(0, 2) * (rng.random((n, T)) < 0.5), pv=half(0, 3), t_low=half(0, 1),
             export_charge=round(float(rng.uniform(0, 0.3)), 3),
             storage_cost=round(float(rng.uniform(0, 0.05)), 3), n_flex=int(rng.integers(0, 3)))
    d["t_high"] = d["t_low"] + half(0, 1)
    sc = tiny_scenario(d["price"], n_homes=n, mu=mu, d_ev=d["d_ev"], fixed=d["fixed"], flex=d["flex"],
                       pv=d["pv"], t_low=d["t_low"], t_high=d["t_high"], battery=LOSSLESS,
                       export_charge=d["export_charge"], storage_cost=d["storage_cost"], n_flex=d["n_flex"],
                       validate=False)
    return sc, d


def _random_small_lp(rng):
    n = int(rng.integers(2, 6))
    m_eq, m_ub = int(rng.integers(0, min(n, 3) + 1)), int(rng.integers(1, 5))
    lb = np.where(rng.random(n) < 0.3, -rng.uniform(0, 4, n), 0.0)
    ub = lb + rng.uniform(0.5, 5, n)
    x0 = rng.uniform(lb, ub)
    A_eq, A_ub = rng.normal(size=(m_eq, n)), rng.normal(size=(m_ub, n))
    return LinearProgram([f"x{j}" for j in range(n)], rng.normal(size=n), A_eq, A_eq @ x0, A_ub,
                         A_ub @ x0 + rng.uniform(0, 2, m_ub), lb, ub)


def test_criterion_2_oracle_equivalence(report):
    start = time.perf_counter()
    worst, days, seed = 0.0, 0, 0
    while days < 20:
        sc, d = _tiny_day(seed)
        seed += 1
        if validate(sc):
            continue
        sol = solve_lp(build_day_lp(sc, 0))
        ref = 0.0
        for i in range(sc.n_homes):
            ref += brute_force_home_day(d["price"], d["fixed"][i], d["flex"][i], d["n_flex"], d["pv"][i],
                                        d["mu"][i], d["d_ev"][i], LOSSLESS.capacity, LOSSLESS.min_level,
                                        LOSSLESS.initial, LOSSLESS.max_charge, LOSSLESS.max_discharge,
                                        d["t_low"][i], d["t_high"][i], d["export_charge"], d["storage_cost"])
        worst = max(worst, abs(sol.objective - ref) / max(1.0, abs(ref)))
        days += 1
    rng = np.random.default_rng(7)
    lps = 0
    while lps < 20:
        lp = _random_small_lp(rng)
        ref, _ = vertex_enumeration(lp.c, lp.A_eq, lp.b_eq, lp.A_ub, lp.b_ub, lp.lb, lp.ub)
        sol = solve_lp(lp)
        assert sol.status == OPTIMAL
        worst = max(worst, abs(sol.objective - ref) / max(1.0, abs(ref)))
        lps += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-6 and elapsed < 60
    report(2, ok, f"{days} day programmes vs grid search and {lps} random LPs vs vertex enumeration, "
                  f"worst relative gap {worst:.2e}, {elapsed:.1f} s")


# -- 3 -------------------------------------------------------------------------------------------

def test_criterion_3_reward_lp_duality(report):
    worst, count = 0.0, 0
    for seed in range(7):
        for n in (1, 2, 3):
            sc = generate_profiles(100 + seed, n, 1)
            demo = demonstration(sc, 0)
            worst = max(worst, abs(float(demo.rewards.sum()) + demo.plan.objective))
            count += 1
    report(3, worst <= 1e-6 and count >= 20, f"{count} days with 1-3 homes, worst |replay reward + LP objective| "
                                             f"{worst:.2e}")


# -- 4 -------------------------------------------------------------------------------------------

def _batch(rng, B, n, obs_dim, state_dim):
    return Batch(obs=rng.normal(size=(B, n, obs_dim)), actions=rng.uniform(0, 1, (B, n, 3)),
                 rewards=rng.normal(size=B), next_obs=rng.normal(size=(B, n, obs_dim)),
                 states=rng.normal(size=(B, state_dim)), next_states=rng.normal(size=(B, state_dim)),
                 done=(rng.random(B) < 0.2).astype(float), demo=rng.random(B) < 0.5,
                 demo_actions=rng.uniform(0, 1, (B, n, 3)))


def _param_check(nets, grads, loss, rng, max_params=120):
    worst = 0.0
    for net, g in zip(nets, grads):
        idx = rng.choice(net.params.size, min(max_params, net.params.size), replace=False)
        base = net.params.copy()

        def f(p, net=net):
            net.params = p
            return loss()
        num = central_difference(f, base, indices=idx)
        net.params = base
        worst = max(worst, max_relative_error(g[idx], num))
    return worst


def test_criterion_4_gradient_suite(report):
    worst = dict.fromkeys(("layers", "mixer", "critic", "actor", "supervised"), 0.0)
    kinds = ("relu", "tanh", "sigmoid", "elu")
    for seed in range(20):
        rng = np.random.default_rng(seed)
        # layers: convolution with passthrough, every activation kind, bounded heads
        net = Network(NetworkSpec(11, (Conv1D(2, 3, 5, passthrough=1), Activation(kinds[seed % 4]), Dense(16, 6),
                                       Activation(kinds[(seed + 1) % 4]), Dense(6, 3),
                                       Activation(("tanh", "sigmoid", "linear")))), seed=seed)
        x, w = rng.normal(size=(3, 11)), rng.normal(size=(3, 3))
        y, cache = net.forward(x)
        gp, gx = net.backward(cache, w)
        worst["layers"] = max(worst["layers"], _param_check([net], [gp], lambda: float(np.sum(w * net(x))), rng,
                                                            net.params.size))
        worst["layers"] = max(worst["layers"], max_relative_error(
            gx.ravel(), central_difference(lambda v: float(np.sum(w * net(v.reshape(3, 11)))), x.ravel())))
        # mixer
        mix = Mixer(3, 5, hidden=6, seed=seed)
        q, s, wq = rng.normal(size=(4, 3)), rng.normal(size=(4, 5)), rng.normal(size=4)
        _, mc = mix.forward(q, s)
        g_nets, g_q = mix.backward(mc, wq)
        worst["mixer"] = max(worst["mixer"], _param_check(mix.networks, g_nets,
                                                          lambda: float(wq @ mix.forward(q, s)[0]), rng))
        worst["mixer"] = max(worst["mixer"], max_relative_error(
            g_q.ravel(), central_difference(lambda v: float(wq @ mix.forward(v.reshape(4, 3), s)[0]), q.ravel())))
        # critic loss and actor path (with demonstrator items, so the supervised term is included)
        learner = FacmacLearner(2, 26, 7, FacmacConfig(critic_hidden=8, mixer_hidden=6, supervised_weight=0.8),
                                seed=seed)
        batch = _batch(rng, 5, 2, 26, 7)
        targets = learner.td_targets(batch) + rng.normal(size=5)
        _, cg = learner.critic_loss_and_grads(batch, targets)
        worst["critic"] = max(worst["critic"], _param_check(
            learner.critic_networks, cg, lambda: learner.critic_loss_and_grads(batch, targets)[0], rng))
        _, ag = learner.actor_loss_and_grads(batch)
        worst["actor"] = max(worst["actor"], _param_check(
            learner.actors, ag, lambda: learner.actor_loss_and_grads(batch)[0], rng))
        # supervised term on its own, against the action
        demo, act = rng.uniform(0, 1, (4, 3)), rng.uniform(0, 1, (4, 3))
        _, g_pen = supervised_penalty(demo, act, 1.7)
        worst["supervised"] = max(worst["supervised"], max_relative_error(g_pen.ravel(), central_difference(
            lambda a: supervised_penalty(demo, a.reshape(4, 3), 1.7)[0], act.ravel())))
    ok = max(worst.values()) < 1e-4
    report(4, ok, "20 seeds, max relative error " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


# -- 5 -------------------------------------------------------------------------------------------

def test_criterion_5_mixer_monotonicity(report):
    rng = np.random.default_rng(0)
    probes = violations = 0
    for m in range(10):
        n, sd = int(rng.integers(1, 6)), int(rng.integers(1, 30))
        mix = Mixer(n, sd, seed=m)
        for _ in range(100):
            q, s = rng.normal(0, 5, (1, n)), rng.normal(0, 3, (1, sd))
            i, eps = int(rng.integers(n)), float(10 ** rng.uniform(-6, 1))
            bumped = q.copy()
            bumped[0, i] += eps
            violations += int(mix.forward(bumped, s)[0][0] < mix.forward(q, s)[0][0])
            probes += 1
    report(5, violations == 0 and probes >= 1000, f"{probes} probes, {violations} decreases")


# -- 6 -------------------------------------------------------------------------------------------

def test_criterion_6_single_agent_learning(report):
    start = time.perf_counter()
    closures = []
    for seed in range(5):
        sc = price_spread_scenario(seed, n_days=8)
        tr, ev = split_days(sc, 2)
        base = float(np.mean(baseline_rollout(sc, ev)))
        lp = float(np.mean([solve_day(sc, d).objective for d in ev]))
        res = train("facmac", sc, TrainConfig(episodes=150, eval_every=150, seed=seed), tr, ev)
        closures.append((base - res.curve[-1]["eval_cost"]) / (base - lp))
    elapsed = time.perf_counter() - start
    med = float(np.median(closures))
    ok = med >= 0.5 and elapsed < 600
    report(6, ok, f"median gap closure {med:.3f} over 5 seeds (per seed "
                  f"{', '.join(f'{c:.2f}' for c in closures)}), 150 episodes, {elapsed:.0f} s")


# -- 7 -------------------------------------------------------------------------------------------

def test_criterion_7_cooperation(report):
    savings = {"facmac": [], "iql+opt+marginal": []}
    for method in savings:
        for seed in range(5):
            cfg = ExperimentConfig(method=method, scenario="export", n_homes=3, n_days=10, n_eval_days=3,
                                   n_train_episodes=400, seeds=[seed])
            rec, _ = run_seed(cfg, seed)
            savings[method].append(rec.savings)
    positive = {m: sum(s > 0 for s in v) for m, v in savings.items()}
    med_f, med_i = (float(np.median(savings[m])) for m in ("facmac", "iql+opt+marginal"))
    ratio = med_f / med_i if med_i else float("inf")
    ok = all(p >= 4 for p in positive.values()) and abs(ratio - 1.0) <= 0.3
    detail = "; ".join(f"{m} savings " + ", ".join(f"{s:.1f}" for s in v) + f" ({positive[m]}/5 positive)"
                       for m, v in savings.items())
    report(7, ok, f"{detail}; median ratio facmac/iql {ratio:.3f} (band 0.7-1.3)")


# -- 8 -------------------------------------------------------------------------------------------

def test_criterion_8_scaling_direction(report):
    start = time.perf_counter()
    res = scaling_benchmark(["facmac", "iql+opt+marginal"], [3, 5, 10], episodes=30, seeds=range(5))
    elapsed = time.perf_counter() - start
    f, q = res["fits"]["facmac"], res["fits"]["iql+opt+marginal"]

    def desc(fit):
        return (f"order {fit['order']}, linear {np.round(fit['linear']['coefficients'], 3).tolist()}, "
                f"quadratic {np.round(fit['quadratic']['coefficients'], 3).tolist()}, "
                f"log-log exponent {fit['loglog_exponent']:.2f}")
    ok = f["order"] < q["order"] and elapsed < 1800
    report(8, ok, f"facmac: {desc(f)}; iql+opt+marginal: {desc(q)}; {elapsed:.0f} s")


# -- 9 -------------------------------------------------------------------------------------------

def test_criterion_9_ablation_hook(report, tmp_path):
    cfg = ExperimentConfig(method="facmac", n_homes=2, n_days=3, n_eval_days=1, n_train_episodes=3, seeds=[0, 1],
                           output_dir=str(tmp_path), train=TrainConfig(warmup_steps=24, batch_size=16))
    res = ablation(cfg)
    v = res["variants"]
    deltas_ok = all(x["p25_delta"] == x["p25"] - v["plain"]["p25"] for x in v.values())
    toggles_ok = set(v) == set(ABLATION_VARIANTS) and all(x["toggles"] == ABLATION_VARIANTS[k] for k, x in v.items())
    # the toggles reach the learner
    sc = generate_profiles(0, 2, 3)
    kinds = {}
    for name, tog in ABLATION_VARIANTS.items():
        pol = train("facmac", sc, dataclasses.replace(TrainConfig(episodes=0), **tog)).policy
        kinds[name] = (pol.learner.config.hysteretic, any(layer.kind == "conv1d"
                                                           for layer in pol.learner.actors[0].spec.layers))
    wired = all(kinds[k] == (t["hysteretic"], t["conv"]) for k, t in ABLATION_VARIANTS.items())
    # beta = alpha with hysteresis on reproduces the plain run bit for bit
    quick = TrainConfig(episodes=3, eval_every=1, warmup_steps=24, batch_size=16, seed=4)
    plain = train("facmac", sc, dataclasses.replace(quick, hysteretic=False))
    same = train("facmac", sc, dataclasses.replace(quick, hysteretic=True, hysteresis_alpha=0.6,
                                                   hysteresis_beta=0.6))
    params = [np.concatenate([n.params for n in r.policy.learner.critic_networks + r.policy.learner.actors])
              for r in (plain, same)]
    bit_exact = np.array_equal(params[0], params[1]) and \
        [c["eval_cost"] for c in plain.curve] == [c["eval_cost"] for c in same.curve]
    ok = deltas_ok and toggles_ok and wired and bit_exact
    report(9, ok, "p25 deltas " + ", ".join(f"{k} {x['p25_delta']:+.2f}" for k, x in v.items())
           + f"; toggles wired {wired}; beta=alpha bit-exact {bit_exact}")


# -- 10 ------------------------------------------------------------------------------------------

def test_criterion_10_determinism(report, tmp_path):
    same = []
    for method in ("facmac", "iql+opt+marginal"):
        cfg = ExperimentConfig(method=method, n_homes=2, n_days=3, n_eval_days=1, n_train_episodes=3,
                               seeds=[0, 1], output_dir=str(tmp_path),
                               train=TrainConfig(warmup_steps=24, batch_size=16, eval_every=1))
        first = (run_experiment(cfg) / "record.json").read_bytes()
        second = (run_experiment(cfg) / "record.json").read_bytes()
        same.append(first == second)
    report(10, all(same), f"record.json byte-identical on repeat: facmac {same[0]}, iql+opt+marginal {same[1]}")
