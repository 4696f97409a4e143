"""Independent tabular Q-learning over binned prices and a grid of action triples."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

MODES = ("plain", "marginal", "demonstrator")


def action_grid(n_bins: int = 5) -> np.ndarray:
    """All ``n_bins ** 3`` triples of uniformly spaced action values."""
    bat = np.linspace(-1.0, 1.0, n_bins)
    unit = np.linspace(0.0, 1.0, n_bins)
    return np.array(list(itertools.product(bat, unit, unit)))


def equal_frequency_edges(values, n_bins: int = 10) -> np.ndarray:
    """Interior bin edges placing roughly equal counts of ``values`` in each bin."""
    qs = np.linspace(0.0, 1.0, n_bins + 1)[1:-1]
    return np.quantile(np.asarray(values, dtype=float), qs)


class Transition(NamedTuple):
    obs_bin: int
    action: int
    reward: float
    next_obs_bin: int
    done: bool
    marginal: float | None = None
    demo_action: int | None = None


@dataclass
class QTable:
    edges: np.ndarray
    actions: np.ndarray
    alpha: float = 0.1
    beta: float = 0.05
    gamma: float = 0.99
    values: np.ndarray = field(default=None)
    visits: np.ndarray = field(default=None)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        shape = (len(self.edges) + 1, len(self.actions))
        if self.values is None:
            self.values = np.zeros(shape)
        if self.visits is None:
            self.visits = np.zeros(shape, dtype=np.int64)
        if not 0 < self.beta <= self.alpha <= 1:
            raise ValueError("learning rates need 0 < beta <= alpha <= 1")

    @property
    def n_bins(self) -> int:
        return len(self.edges) + 1

    def bin(self, x: float) -> int:
        return int(np.searchsorted(self.edges, x, side="right"))

    def nearest_action(self, triple) -> int:
        return int(np.argmin(np.sum((self.actions - np.asarray(triple, dtype=float)) ** 2, axis=1)))

    def greedy(self, obs_bin: int, default: int) -> int:
        """Best visited action in ``obs_bin``; ``default`` when none was tried."""
        seen = self.visits[obs_bin] > 0
        if not seen.any():
            return default
        return int(np.argmax(np.where(seen, self.values[obs_bin], -np.inf)))

    def state_value(self, obs_bin: int) -> float:
        seen = self.visits[obs_bin] > 0
        return float(self.values[obs_bin][seen].max()) if seen.any() else 0.0

    def dump(self, path) -> Path:
        """Plain text: edges, action grid, then one row of values per bin."""
        path = Path(path)
        lines = ["edges " + " ".join(repr(float(e)) for e in self.edges),
                 f"actions {len(self.actions)}"]
        lines += [" ".join(repr(float(v)) for v in a) for a in self.actions]
        lines.append(f"values {self.n_bins}")
        lines += [" ".join(repr(float(v)) for v in row) for row in self.values]
        lines.append(f"visits {self.n_bins}")
        lines += [" ".join(str(int(v)) for v in row) for row in self.visits]
        path.write_text("\n".join(lines) + "\n")
        return path

    @classmethod
    def load(cls, path, **rates) -> "QTable":
        lines = Path(path).read_text().splitlines()
        edges = np.array([float(v) for v in lines[0].split()[1:]])
        na = int(lines[1].split()[1])
        actions = np.array([[float(v) for v in ln.split()] for ln in lines[2:2 + na]])
        nb = int(lines[2 + na].split()[1])
        values = np.array([[float(v) for v in ln.split()] for ln in lines[3 + na:3 + na + nb]])
        visits = np.array([[int(v) for v in ln.split()] for ln in lines[4 + na + nb:4 + na + 2 * nb]])
        return cls(edges, actions, values=values, visits=visits, **rates)


def iql_update(table: QTable, tr: Transition, mode: str = "plain", use_marginal: bool = False,
               hysteretic: bool = True) -> float:
    """One tabular update; returns the TD error.

    ``marginal`` mode learns from the reward difference against the default
    action. ``demonstrator`` mode writes only to the demonstrator's cell and
    uses the marginal reward when ``use_marginal`` is set.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "demonstrator":
        if tr.demo_action is None:
            raise ValueError("demonstrator update needs a demonstrator action")
        a = tr.demo_action
        r = tr.marginal if use_marginal else tr.reward
    else:
        a = tr.action
        r = tr.marginal if mode == "marginal" else tr.reward
    if r is None:
        raise ValueError("marginal update needs a marginal reward")
    bootstrap = 0.0 if tr.done else table.gamma * table.state_value(tr.next_obs_bin)
    delta = r + bootstrap - table.values[tr.obs_bin, a]
    rate = table.alpha if (delta > 0 or not hysteretic) else table.beta
    table.values[tr.obs_bin, a] += rate * delta
    table.visits[tr.obs_bin, a] += 1
    return float(delta)
