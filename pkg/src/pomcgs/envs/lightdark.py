"""One-dimensional Light Dark with a declare-and-stop action."""

from __future__ import annotations

import math

import numpy as np

from ..core import ContractViolation, DiscreteActions, GenerativeModel, GridDiscretizer, ProblemMetadata

MOVE_DOWN, DECLARE, MOVE_UP = 0, 1, 2
_DELTA = np.array([-1.0, 0.0, 1.0])


class LightDarkModel(GenerativeModel):
    """Position ``y`` on the real line, observed through noise that vanishes at ``light``.

    Actions move by -1 / +1 (plus small Gaussian noise) or declare arrival,
    which ends the episode with +100 when ``|y| <= 1`` and -100 otherwise.
    Terminal states are encoded as NaN.
    """

    def __init__(self, gamma=0.95, light=10.0, init_mean=2.0, init_std=2.0,
                 low=-10.0, high=20.0, move_noise=0.1, bin_width=0.5, goal_radius=1.0,
                 reward=100.0):
        self.gamma = gamma
        self.light = light
        self.init_mean, self.init_std = init_mean, init_std
        self.low, self.high = low, high
        self.move_noise = move_noise
        self.goal_radius = goal_radius
        self.reward = reward
        self.grid = GridDiscretizer((low,), (high,), (bin_width,))
        self.terminal_code = self.grid.n_cells
        self._meta = ProblemMetadata(
            gamma=gamma,
            r_min=-reward,
            r_max=reward,
            action_space=DiscreteActions(3),
            observation_kind="continuous",
            observation_dim=1,
            worst_case_rewards=(0.0, -reward, 0.0),
        )

    def metadata(self):
        return self._meta

    def fingerprint(self):
        return (f"lightdark(gamma={self.gamma!r},light={self.light!r},init={self.init_mean!r}/"
                f"{self.init_std!r},bounds={self.low!r}/{self.high!r},noise={self.move_noise!r},"
                f"bin={self.grid.width[0]!r})")

    def obs_std(self, y):
        return np.abs(np.asarray(y) - self.light) / math.sqrt(2.0) + 0.01

    def sample_initial(self, rng):
        while True:
            y = rng.normal(self.init_mean, self.init_std)
            if self.low <= y <= self.high:
                return float(y)

    def sample_initial_batch(self, n, rng):
        out = rng.normal(self.init_mean, self.init_std, size=n)
        bad = (out < self.low) | (out > self.high)
        while bad.any():
            out[bad] = rng.normal(self.init_mean, self.init_std, size=int(bad.sum()))
            bad = (out < self.low) | (out > self.high)
        return out

    def step(self, s, a, rng):
        if not 0 <= a < 3:
            raise ContractViolation(f"invalid Light Dark action {a!r}")
        if math.isnan(s):
            return s, 0.0, 0.0
        if a == DECLARE:
            r = self.reward if abs(s) <= self.goal_radius else -self.reward
            return math.nan, 0.0, r
        y = s + _DELTA[a] + rng.normal(0.0, self.move_noise)
        o = y + rng.normal(0.0, float(self.obs_std(y)))
        return float(y), float(o), 0.0

    def step_batch(self, states, actions, rng):
        y = np.asarray(states, dtype=float)
        a = np.broadcast_to(np.asarray(actions, dtype=np.int64), y.shape)
        if np.any((a < 0) | (a > 2)):
            raise ContractViolation("invalid Light Dark action in batch")
        term = np.isnan(y)
        declare = (a == DECLARE) & ~term
        noise = rng.normal(0.0, 1.0, size=(2, len(y)))
        y2 = y + _DELTA[a] + self.move_noise * noise[0]
        o = y2 + self.obs_std(y2) * noise[1]
        hit = np.abs(y) <= self.goal_radius
        r = np.where(declare, np.where(hit, self.reward, -self.reward), 0.0)
        done = term | declare
        y2 = np.where(done, np.nan, y2)
        o = np.where(done, 0.0, o)
        return y2, o, r

    def discretize(self, s):
        return int(self.discretize_batch(np.array([s]))[0])

    def discretize_batch(self, states):
        y = np.asarray(states, dtype=float)
        term = np.isnan(y)
        codes = self.grid.encode(np.where(term, self.low, y))
        codes[term] = self.terminal_code
        return codes

    def is_terminal(self, s):
        return math.isnan(s)

    def is_terminal_batch(self, states):
        return np.isnan(np.asarray(states, dtype=float))
