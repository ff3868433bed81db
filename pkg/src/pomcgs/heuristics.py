"""Value heuristics used to initialise nodes and to bound FSC values.

``V_MDP`` is the state-value function of the fully observable relaxation,
learnt by tabular Q-learning over discretized states.  The blind bound is
the closed-form value of repeating the action with the best worst-case
reward.
"""

from __future__ import annotations

import io
import logging
from dataclasses import asdict, dataclass

import numpy as np

from .belief import ParticleBelief
from .core import ProblemMetadata

__all__ = [
    "QLearningConfig",
    "VTable",
    "train_vmdp",
    "belief_vmdp",
    "blind_value",
    "bellman_residual",
]

logger = logging.getLogger(__name__)

VTABLE_VERSION = 1


@dataclass
class QLearningConfig:
    """Hyper-parameters for the underlying-MDP Q-learning run.

    Episodes run in ``n_envs`` parallel lanes; exploration decays linearly
    from ``eps_start`` to ``eps_end`` over the episode budget.
    """

    episodes: int = 100_000
    max_steps: int = 500
    learning_rate: float = 0.1
    eps_start: float = 1.0
    eps_end: float = 0.05
    n_envs: int = 512
    grid_points: int = 11
    seed: int = 0

    def __post_init__(self):
        for name in ("episodes", "max_steps", "n_envs", "grid_points"):
            if getattr(self, name) < 1:
                raise ValueError(f"QLearningConfig.{name} must be >= 1")
        for name in ("learning_rate", "eps_start", "eps_end"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"QLearningConfig.{name} must lie in (0, 1], got {v}")

    def describe(self) -> str:
        return ",".join(f"{k}={v}" for k, v in asdict(self).items())


class VTable:
    """Map from bin code to state value; unseen bins get ``default``."""

    def __init__(self, keys, values, default: float, fingerprint: str = ""):
        keys = np.asarray(keys, dtype=np.int64)
        values = np.asarray(values, dtype=float)
        order = np.argsort(keys, kind="stable")
        self.keys = keys[order]
        self.values = values[order]
        self.default = float(default)
        self.fingerprint = fingerprint
        self.info = {}

    def __len__(self):
        return len(self.keys)

    def lookup(self, codes) -> np.ndarray:
        codes = np.atleast_1d(np.asarray(codes, dtype=np.int64))
        out = np.full(len(codes), self.default)
        if len(self.keys):
            pos = np.searchsorted(self.keys, codes)
            pos[pos == len(self.keys)] = 0
            hit = self.keys[pos] == codes
            out[hit] = self.values[pos[hit]]
        return out

    def __getitem__(self, code) -> float:
        return float(self.lookup([code])[0])

    def as_dict(self) -> dict:
        return dict(zip(self.keys.tolist(), self.values.tolist()))

    def dumps(self) -> str:
        buf = io.StringIO()
        buf.write(f"pomcgs-vtable {VTABLE_VERSION}\n")
        buf.write(f"fingerprint {self.fingerprint}\n")
        buf.write(f"default {self.default!r}\n")
        for k, v in sorted(self.info.items()):
            buf.write(f"info {k} {v}\n")
        for k, v in zip(self.keys.tolist(), self.values.tolist()):
            buf.write(f"v {k} {v!r}\n")
        return buf.getvalue()

    @classmethod
    def loads(cls, text: str) -> "VTable":
        lines = text.splitlines()
        if not lines or lines[0].split() != ["pomcgs-vtable", str(VTABLE_VERSION)]:
            raise ValueError("not a version-%d vtable file" % VTABLE_VERSION)
        fingerprint, default, info = "", None, {}
        keys, values = [], []
        for lineno, line in enumerate(lines[1:], start=2):
            parts = line.split(" ", 2)
            try:
                if parts[0] == "fingerprint":
                    fingerprint = line[len("fingerprint ") :]
                elif parts[0] == "default":
                    default = float(parts[1])
                elif parts[0] == "info":
                    info[parts[1]] = parts[2] if len(parts) > 2 else ""
                elif parts[0] == "v":
                    keys.append(int(parts[1]))
                    values.append(float(parts[2]))
                elif line.strip():
                    raise ValueError(f"unknown record {parts[0]!r}")
            except (IndexError, ValueError) as exc:
                raise ValueError(f"vtable line {lineno}: {exc}") from None
        if default is None:
            raise ValueError("vtable file lacks a default record")
        table = cls(keys, values, default, fingerprint)
        table.info = info
        return table


def _q_actions(meta: ProblemMetadata, cfg: QLearningConfig) -> list:
    space = meta.action_space
    if space.continuous:
        return space.grid(cfg.grid_points)
    return list(range(space.n))


def train_vmdp(model, cfg: QLearningConfig | None = None, rng=None) -> VTable:
    """Tabular Q-learning on the underlying MDP; returns ``V(k) = max_a Q(k, a)``.

    Q starts at the optimistic value ``r_max / (1 - gamma)``.  Updates from
    lanes hitting the same ``(bin, action)`` pair in one vector step are
    averaged before being applied.
    """
    cfg = cfg or QLearningConfig()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    meta = model.metadata()
    gamma = meta.gamma
    vmin = meta.r_min / (1.0 - gamma)
    vmax = meta.r_max / (1.0 - gamma)
    actions = _q_actions(meta, cfg)
    n_act = len(actions)
    act_arr = np.asarray(actions) if meta.continuous_actions else np.arange(n_act)

    keys = np.empty(0, dtype=np.int64)
    q = np.empty((0, n_act))
    terminal_keys = set()

    def rows_for(codes):
        nonlocal keys, q
        new = np.setdiff1d(codes, keys)
        if len(new):
            merged = np.union1d(keys, new)
            q_new = np.full((len(merged), n_act), vmax)
            q_new[np.searchsorted(merged, keys)] = q
            keys, q = merged, q_new
        return np.searchsorted(keys, codes)

    lanes = min(cfg.n_envs, cfg.episodes)
    states = model.sample_initial_batch(lanes, rng)
    steps = np.zeros(lanes, dtype=np.int64)
    started = lanes
    finished = 0
    active = np.ones(lanes, dtype=bool)

    while active.any():
        idx = np.flatnonzero(active)
        s = states[idx]
        codes = model.discretize_batch(s)
        rows = rows_for(codes)
        eps = cfg.eps_start + (cfg.eps_end - cfg.eps_start) * min(1.0, finished / cfg.episodes)
        greedy = np.argmax(q[rows], axis=1)
        explore = rng.random(len(idx)) < eps
        a_idx = np.where(explore, rng.integers(0, n_act, size=len(idx)), greedy)
        s2, _, r = model.step_batch(s, act_arr[a_idx], rng)
        term = model.is_terminal_batch(s2)
        codes2 = model.discretize_batch(s2)
        terminal_keys.update(codes2[term].tolist())
        rows2 = rows_for(codes2)
        rows = np.searchsorted(keys, codes)  # stale after growth in rows_for(codes2)
        v_next = np.where(term, 0.0, q[rows2].max(axis=1))
        target = r + gamma * v_next

        flat = rows * n_act + a_idx
        uniq, inv = np.unique(flat, return_inverse=True)
        sums = np.bincount(inv, weights=target)
        counts = np.bincount(inv)
        ur, ua = np.divmod(uniq, n_act)
        q[ur, ua] += cfg.learning_rate * (sums / counts - q[ur, ua])

        states[idx] = s2
        steps[idx] += 1
        done = term | (steps[idx] >= cfg.max_steps)
        if done.any():
            done_lanes = idx[done]
            finished += len(done_lanes)
            n_restart = min(len(done_lanes), cfg.episodes - started)
            if n_restart > 0:
                restart = done_lanes[:n_restart]
                states[restart] = model.sample_initial_batch(n_restart, rng)
                steps[restart] = 0
                started += n_restart
            active[done_lanes[n_restart:]] = False

    values = np.clip(q.max(axis=1), vmin, vmax) if len(keys) else np.empty(0)
    for k in terminal_keys:
        values[np.searchsorted(keys, k)] = 0.0
    table = VTable(keys, values, default=vmax, fingerprint=model.fingerprint())
    table.info["qlearning"] = cfg.describe()
    logger.debug("trained V_MDP over %d bins", len(keys))
    return table


def belief_vmdp(b: ParticleBelief, vtab: VTable, model) -> float:
    """Mean of ``V_MDP`` over the belief's particles."""
    if b.count == 0:
        raise ValueError("empty belief")
    return float(np.mean(vtab.lookup(model.discretize_batch(b.particles))))


def blind_value(meta: ProblemMetadata) -> float:
    """``max_a min_s r(s, a) / (1 - gamma)``."""
    if meta.worst_case_rewards is None:
        raise ValueError("problem declares no worst-case reward table")
    return max(meta.worst_case_rewards) / (1.0 - meta.gamma)


def bellman_residual(model, vtab: VTable, rng, n_states: int = 200, n_samples: int = 200) -> float:
    """Mean absolute one-step Bellman residual of ``vtab`` at states drawn from ``b0``.

    Successor values are estimated by Monte Carlo; a diagnostic only.
    """
    meta = model.metadata()
    actions = _q_actions(meta, QLearningConfig())
    states = model.sample_initial_batch(n_states, rng)
    v = vtab.lookup(model.discretize_batch(states))
    best = np.full(n_states, -np.inf)
    rep = np.repeat(np.arange(n_states), n_samples)
    for a in actions:
        acts = [a] * len(rep) if meta.continuous_actions else np.full(len(rep), a)
        s2, _, r = model.step_batch(states[rep], acts, rng)
        term = model.is_terminal_batch(s2)
        v2 = np.where(term, 0.0, vtab.lookup(model.discretize_batch(s2)))
        backup = np.bincount(rep, weights=r + meta.gamma * v2) / n_samples
        best = np.maximum(best, backup)
    return float(np.mean(np.abs(best - v)))
