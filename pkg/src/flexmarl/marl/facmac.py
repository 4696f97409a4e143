"""Factored centralised critic with monotonic mixing, and its actor updates.

Each agent's utility ``Q_i(o_i, a_i)`` comes from a shared critic network.
A state-conditioned mixer combines the utilities into ``Q_tot`` using
hypernetwork-generated weights passed through ``abs``, so ``Q_tot`` never
decreases when any single utility increases. The actors are trained by
pushing every agent's current action through critic and mixer jointly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..neural import (Activation, Adam, Conv1D, Dense, Network, NetworkSpec, activate,
                      activation_grad, mlp_spec, soft_update)
from .buffer import Batch

ACTION_DIM = 3
ACTION_LOW = np.array([-1.0, 0.0, 0.0])
ACTION_HIGH = np.array([1.0, 1.0, 1.0])
HEAD = Activation(("tanh", "sigmoid", "sigmoid"))


def actor_spec(obs_dim: int, window: int = 24, conv: bool = True, channels: int = 8,
               hidden: int = 64) -> NetworkSpec:
    """Price window through an optional convolution, two hidden layers and bounded heads."""
    if conv:
        first = [Conv1D(1, channels, window, passthrough=obs_dim - window), Activation("relu"),
                 Dense(channels * window + obs_dim - window, hidden)]
    else:
        first = [Dense(obs_dim, hidden)]
    layers = first + [Activation("relu"), Dense(hidden, hidden), Activation("relu"),
                      Dense(hidden, ACTION_DIM), HEAD]
    return NetworkSpec(obs_dim, tuple(layers))


def critic_spec(obs_dim: int, hidden: int = 64) -> NetworkSpec:
    return mlp_spec([obs_dim + ACTION_DIM, hidden, 1], hidden="relu")


def _clip_norm(grads, max_norm):
    if max_norm is None:
        return grads
    norm = np.sqrt(sum(float(g @ g) for g in grads))
    if norm > max_norm:
        return [g * (max_norm / norm) for g in grads]
    return grads


# ---------------------------------------------------------------------------
# mixer


class Mixer:
    """Two-layer monotonic mixing network driven by hypernetworks of the state."""

    def __init__(self, n_agents: int, state_dim: int, hidden: int = 32, activation: str = "elu",
                 seed: int = 0, nets=None):
        self.n_agents, self.state_dim, self.hidden, self.activation = n_agents, state_dim, hidden, activation
        if nets is None:
            rng = np.random.default_rng(seed)
            specs = [mlp_spec([state_dim, n_agents * hidden]), mlp_spec([state_dim, hidden]),
                     mlp_spec([state_dim, hidden]), mlp_spec([state_dim, hidden, 1], hidden="relu")]
            nets = [Network(s, seed=int(rng.integers(2**31))) for s in specs]
        self.w1, self.b1, self.w2, self.v = nets

    @property
    def networks(self) -> list[Network]:
        return [self.w1, self.b1, self.w2, self.v]

    def copy(self) -> "Mixer":
        return Mixer(self.n_agents, self.state_dim, self.hidden, self.activation,
                     nets=[n.copy() for n in self.networks])

    def forward(self, q, s):
        """``Q_tot`` for utilities ``q`` ``(B, n)`` and states ``s`` ``(B, state_dim)``."""
        q = np.asarray(q, dtype=float)
        s = np.asarray(s, dtype=float)
        B = q.shape[0]
        raw1, c1 = self.w1.forward(s)
        bias1, cb = self.b1.forward(s)
        raw2, c2 = self.w2.forward(s)
        v, cv = self.v.forward(s)
        W1 = np.abs(raw1).reshape(B, self.n_agents, self.hidden)
        W2 = np.abs(raw2)
        pre = np.einsum("bn,bnh->bh", q, W1) + bias1
        hid = activate(self.activation, pre)
        q_tot = np.sum(hid * W2, axis=1) + v[:, 0]
        return q_tot, (q, raw1, raw2, W1, W2, pre, hid, c1, cb, c2, cv)

    def backward(self, cache, g_qtot):
        """Return (per-network parameter gradients, gradient w.r.t. ``q``)."""
        q, raw1, raw2, W1, W2, pre, hid, c1, cb, c2, cv = cache
        g = np.asarray(g_qtot, dtype=float)
        B = g.shape[0]
        gv, _ = self.v.backward(cv, g[:, None])
        gw2, _ = self.w2.backward(c2, g[:, None] * hid * np.sign(raw2))
        g_pre = g[:, None] * W2 * activation_grad(self.activation, pre, hid)
        gb1, _ = self.b1.backward(cb, g_pre)
        g_W1 = q[:, :, None] * g_pre[:, None, :]
        gw1, _ = self.w1.backward(c1, (g_W1 * np.sign(raw1).reshape(W1.shape)).reshape(B, -1))
        g_q = np.einsum("bh,bnh->bn", g_pre, W1)
        return [gw1, gb1, gw2, gv], g_q


def mixing_forward(q_values, state, mixer: Mixer):
    q_tot, _ = mixer.forward(np.atleast_2d(q_values), np.atleast_2d(state))
    return q_tot


# ---------------------------------------------------------------------------
# actors


def actors_forward(actors: list[Network], obs):
    """Actions ``(B, n, 3)`` for observations ``(B, n, obs_dim)``.

    A single network is shared by every agent; otherwise agent ``i`` uses
    ``actors[i]``.
    """
    B, n, d = obs.shape
    if len(actors) == 1:
        a, cache = actors[0].forward(obs.reshape(B * n, d))
        return a.reshape(B, n, ACTION_DIM), [cache]
    outs, caches = [], []
    for i, net in enumerate(actors):
        a, c = net.forward(obs[:, i])
        outs.append(a)
        caches.append(c)
    return np.stack(outs, axis=1), caches


def actors_backward(actors: list[Network], caches, g_actions):
    B, n, _ = g_actions.shape
    if len(actors) == 1:
        return [actors[0].backward(caches[0], g_actions.reshape(B * n, ACTION_DIM))[0]]
    return [net.backward(c, g_actions[:, i])[0] for i, (net, c) in enumerate(zip(actors, caches))]


def select_action(actor: Network, obs, sigma: float, rng: np.random.Generator | None = None):
    """Policy output plus clipped Gaussian exploration noise."""
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    a = actor(np.asarray(obs, dtype=float))
    if sigma > 0:
        a = a + rng.normal(0.0, sigma, a.shape)
    return np.clip(a, ACTION_LOW, ACTION_HIGH)


def supervised_penalty(demo_actions, actions, weight: float):
    """``weight * sum((a_demo - a)^2)`` and its gradient w.r.t. ``actions``."""
    diff = np.asarray(demo_actions, dtype=float) - np.asarray(actions, dtype=float)
    return weight * float(np.sum(diff * diff)), -2.0 * weight * diff


# ---------------------------------------------------------------------------
# learner


@dataclass
class FacmacConfig:
    gamma: float = 0.99
    tau: float = 0.01
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    hysteretic: bool = True
    hysteresis_alpha: float = 1.0
    hysteresis_beta: float = 0.5
    supervised_weight: float = 1.0
    grad_clip: float | None = 10.0
    mixer_hidden: int = 32
    mixer_activation: str = "elu"
    critic_hidden: int = 64
    conv: bool = True
    shared_actor: bool = True

    def validate(self):
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0 < self.tau <= 1:
            raise ValueError("tau must lie in (0, 1]")
        if not 0 < self.hysteresis_beta <= self.hysteresis_alpha:
            raise ValueError("hysteresis needs 0 < beta <= alpha")
        if self.supervised_weight < 0:
            raise ValueError("supervised weight must be non-negative")


class FacmacLearner:
    def __init__(self, n_agents: int, obs_dim: int, state_dim: int, config: FacmacConfig | None = None,
                 seed: int = 0, actors=None, critic=None, mixer=None):
        self.config = cfg = config or FacmacConfig()
        cfg.validate()
        self.n_agents, self.obs_dim, self.state_dim = n_agents, obs_dim, state_dim
        rng = np.random.default_rng(seed)
        seeds = rng.integers(2**31, size=n_agents + 2)
        if actors is None:
            spec = actor_spec(obs_dim, conv=cfg.conv)
            count = 1 if cfg.shared_actor else n_agents
            actors = [Network(spec, seed=int(seeds[k])) for k in range(count)]
        self.actors = actors
        self.critic = critic or Network(critic_spec(obs_dim, cfg.critic_hidden), seed=int(seeds[-2]))
        self.mixer = mixer or Mixer(n_agents, state_dim, cfg.mixer_hidden, cfg.mixer_activation,
                                    seed=int(seeds[-1]))
        self.target_actors = [a.copy() for a in self.actors]
        self.target_critic = self.critic.copy()
        self.target_mixer = self.mixer.copy()
        self.actor_opts = [Adam(cfg.actor_lr) for _ in self.actors]
        self.critic_opts = [Adam(cfg.critic_lr) for _ in self.critic_networks]

    @property
    def critic_networks(self) -> list[Network]:
        return [self.critic] + self.mixer.networks

    def actor_for(self, i: int) -> Network:
        return self.actors[0] if len(self.actors) == 1 else self.actors[i]

    # -- value pieces ------------------------------------------------------

    @staticmethod
    def _q_tot(critic: Network, mixer: Mixer, obs, actions, states):
        B, n, d = obs.shape
        x = np.concatenate([obs, actions], axis=2).reshape(B * n, d + ACTION_DIM)
        q, cq = critic.forward(x)
        q_tot, cm = mixer.forward(q.reshape(B, n), states)
        return q_tot, (cq, cm, B, n, d)

    def _q_tot_backward(self, cache, g_qtot):
        cq, cm, B, n, d = cache
        g_mix, g_q = self.mixer.backward(cm, g_qtot)
        g_crit, g_x = self.critic.backward(cq, g_q.reshape(B * n, 1))
        g_actions = g_x.reshape(B, n, d + ACTION_DIM)[:, :, d:]
        return [g_crit] + g_mix, g_actions

    def td_targets(self, batch: Batch) -> np.ndarray:
        a_next, _ = actors_forward(self.target_actors, batch.next_obs)
        q_next, _ = self._q_tot(self.target_critic, self.target_mixer, batch.next_obs, a_next,
                                batch.next_states)
        return batch.rewards + self.config.gamma * (1.0 - batch.done) * q_next

    def critic_loss_and_grads(self, batch: Batch, targets=None):
        """Hysteretic squared TD loss and its gradients for critic and mixer."""
        cfg = self.config
        y = self.td_targets(batch) if targets is None else targets
        q_tot, cache = self._q_tot(self.critic, self.mixer, batch.obs, batch.actions, batch.states)
        delta = y - q_tot
        ratio = cfg.hysteresis_beta / cfg.hysteresis_alpha if cfg.hysteretic else 1.0
        weight = np.where(delta < 0, ratio, 1.0)
        B = len(delta)
        loss = float(np.sum(weight * delta * delta) / B)
        grads, _ = self._q_tot_backward(cache, -2.0 * weight * delta / B)
        return loss, grads

    def critic_update(self, batch: Batch, targets=None) -> float:
        loss, grads = self.critic_loss_and_grads(batch, targets)
        grads = _clip_norm(grads, self.config.grad_clip)
        for net, opt, g in zip(self.critic_networks, self.critic_opts, grads):
            net.params = opt.step(net.params, g)
        return loss

    def actor_loss_and_grads(self, batch: Batch):
        """Negative mean ``Q_tot`` of current-policy actions plus the demonstrator penalty."""
        B = len(batch)
        actions, a_caches = actors_forward(self.actors, batch.obs)
        q_tot, cache = self._q_tot(self.critic, self.mixer, batch.obs, actions, batch.states)
        _, g_actions = self._q_tot_backward(cache, np.full(B, -1.0 / B))
        loss = -float(np.mean(q_tot))
        w = self.config.supervised_weight
        if w > 0 and batch.demo.any():
            m = batch.demo
            pen, g_pen = supervised_penalty(batch.demo_actions[m], actions[m], w)
            loss += pen / B
            g_actions[m] += g_pen / B
        return loss, actors_backward(self.actors, a_caches, g_actions)

    def actor_update(self, batch: Batch) -> float:
        loss, grads = self.actor_loss_and_grads(batch)
        grads = _clip_norm(grads, self.config.grad_clip)
        for net, opt, g in zip(self.actors, self.actor_opts, grads):
            net.params = opt.step(net.params, g)
        return loss

    def update_targets(self):
        tau = self.config.tau
        for tgt, src in zip(self.target_actors, self.actors):
            soft_update(tgt, src, tau)
        soft_update(self.target_critic, self.critic, tau)
        for tgt, src in zip(self.target_mixer.networks, self.mixer.networks):
            soft_update(tgt, src, tau)

    def act(self, obs, sigma: float = 0.0, rng=None) -> np.ndarray:
        """Joint action ``(n, 3)`` from per-agent observations ``(n, obs_dim)``."""
        obs = np.asarray(obs, dtype=float)
        if len(self.actors) == 1:
            a = self.actors[0](obs)
        else:
            a = np.stack([net(obs[i]) for i, net in enumerate(self.actors)])
        if sigma > 0:
            a = a + rng.normal(0.0, sigma, a.shape)
        return np.clip(a, ACTION_LOW, ACTION_HIGH)
