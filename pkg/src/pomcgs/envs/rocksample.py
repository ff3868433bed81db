"""RockSample(n, k).

State codes pack the robot cell and the rock-quality bits into one
integer: ``((x * n + y) << k) | bits``; ``-1`` is the absorbing exit state.
"""

from __future__ import annotations

import numpy as np

from ..core import ContractViolation, DiscreteActions, GenerativeModel, ProblemMetadata

NORTH, EAST, SOUTH, WEST, SAMPLE = range(5)
OBS_NONE, OBS_GOOD, OBS_BAD = range(3)
TERMINAL = -1

_DX = np.array([0, 1, 0, -1])
_DY = np.array([1, 0, -1, 0])


class RockSampleModel(GenerativeModel):
    """Grid of ``n x n`` cells with ``k`` rocks of unknown quality.

    Actions are the four moves, ``sample`` and one ``check`` per rock.
    Checking rock ``i`` from distance ``d`` reports its quality correctly
    with probability ``0.5 + 0.5 * 2 ** (-d / d0)``.  Moving east off the
    grid exits with +10; sampling a good rock pays +10 (and spoils it), a
    bad one -10.
    """

    def __init__(self, n=7, k=8, layout_seed=0, gamma=0.95, d0=20.0, start=None):
        if n < 1 or k < 0:
            raise ValueError(f"invalid RockSample size n={n}, k={k}")
        if k > n * n - 1:
            raise ValueError(f"{k} rocks do not fit on a {n}x{n} grid")
        self.n, self.k = n, k
        self.layout_seed = layout_seed
        self.gamma = gamma
        self.d0 = d0
        self.start = tuple(start) if start is not None else (0, n // 2)
        start_cell = self.start[0] * n + self.start[1]
        cells = [c for c in range(n * n) if c != start_cell]
        layout_rng = np.random.default_rng(layout_seed)
        chosen = np.sort(layout_rng.choice(len(cells), size=k, replace=False))
        self.rock_cells = np.array([cells[i] for i in chosen], dtype=np.int64)
        self.rock_xy = np.stack(np.divmod(self.rock_cells, n), axis=1) if k else np.zeros((0, 2), np.int64)
        self.rock_at = np.full(n * n, -1, dtype=np.int64)
        self.rock_at[self.rock_cells] = np.arange(k)
        self.n_actions = 5 + k
        worst = [0.0, 0.0, 0.0, 0.0, -10.0] + [0.0] * k
        self._meta = ProblemMetadata(
            gamma=gamma,
            r_min=-10.0,
            r_max=10.0,
            action_space=DiscreteActions(self.n_actions),
            observation_kind="discrete",
            n_observations=3,
            worst_case_rewards=tuple(worst),
        )
        self._mask = (1 << k) - 1

    @property
    def n_states(self) -> int:
        """Non-terminal state count ``n**2 * 2**k``."""
        return self.n * self.n * 2**self.k

    def metadata(self):
        return self._meta

    def fingerprint(self):
        return (f"rocksample(n={self.n},k={self.k},layout_seed={self.layout_seed},"
                f"gamma={self.gamma!r},d0={self.d0!r},start={self.start[0]}/{self.start[1]})")

    def encode(self, x, y, bits):
        return ((x * self.n + y) << self.k) | bits

    def decode(self, s):
        pos, bits = s >> self.k, s & self._mask
        x, y = divmod(pos, self.n)
        return x, y, bits

    def sample_initial(self, rng):
        bits = int(rng.integers(0, 1 << self.k)) if self.k else 0
        return self.encode(self.start[0], self.start[1], bits)

    def sample_initial_batch(self, n, rng):
        bits = rng.integers(0, 1 << self.k, size=n) if self.k else np.zeros(n, np.int64)
        return self.encode(self.start[0], self.start[1], bits.astype(np.int64))

    def check_efficiency(self, d):
        return 0.5 + 0.5 * 2.0 ** (-np.asarray(d) / self.d0)

    def step(self, s, a, rng):
        if not 0 <= a < self.n_actions:
            raise ContractViolation(f"invalid RockSample action {a!r}")
        if s == TERMINAL:
            return TERMINAL, OBS_NONE, 0.0
        x, y, bits = self.decode(int(s))
        n = self.n
        if a < SAMPLE:
            if a == EAST and x == n - 1:
                return TERMINAL, OBS_NONE, 10.0
            x = min(max(x + _DX[a], 0), n - 1)
            y = min(max(y + _DY[a], 0), n - 1)
            return self.encode(int(x), int(y), bits), OBS_NONE, 0.0
        if a == SAMPLE:
            rock = self.rock_at[x * n + y]
            if rock < 0:
                return s, OBS_NONE, 0.0
            good = (bits >> rock) & 1
            bits &= ~(1 << int(rock))
            return self.encode(x, y, bits), OBS_NONE, 10.0 if good else -10.0
        rock = a - 5
        rx, ry = self.rock_xy[rock]
        d = float(np.hypot(x - rx, y - ry))
        correct = rng.random() < 0.5 + 0.5 * 2.0 ** (-d / self.d0)
        good = (bits >> rock) & 1
        o = OBS_GOOD if (good == 1) == correct else OBS_BAD
        return s, o, 0.0

    def step_batch(self, states, actions, rng):
        s = np.asarray(states, dtype=np.int64)
        a = np.broadcast_to(np.asarray(actions, dtype=np.int64), s.shape)
        if np.any((a < 0) | (a >= self.n_actions)):
            raise ContractViolation("invalid RockSample action in batch")
        n, k = self.n, self.k
        term = s == TERMINAL
        live = np.where(term, 0, s)
        pos = live >> k
        bits = live & self._mask
        x, y = np.divmod(pos, n)
        r = np.zeros(len(s))
        o = np.zeros(len(s), dtype=np.int64)
        s2 = s.copy()

        move = a < SAMPLE
        mv = np.where(move, a, 0)
        exit_ = move & (a == EAST) & (x == n - 1)
        nx = np.clip(x + _DX[mv], 0, n - 1)
        ny = np.clip(y + _DY[mv], 0, n - 1)
        s2 = np.where(move, self.encode(nx, ny, bits), s2)
        s2 = np.where(exit_, TERMINAL, s2)
        r = np.where(exit_, 10.0, r)

        rock_here = self.rock_at[pos]
        smp = (a == SAMPLE) & (rock_here >= 0)
        rh = np.where(smp, rock_here, 0)
        good_here = (bits >> rh) & 1
        r = np.where(smp, np.where(good_here == 1, 10.0, -10.0), r)
        s2 = np.where(smp, self.encode(x, y, bits & ~(1 << rh)), s2)

        chk = a >= 5
        if k and chk.any():
            ri = np.where(chk, a - 5, 0)
            d = np.hypot(x - self.rock_xy[ri, 0], y - self.rock_xy[ri, 1])
            correct = rng.random(len(s)) < self.check_efficiency(d)
            good = ((bits >> ri) & 1) == 1
            o = np.where(chk, np.where(good == correct, OBS_GOOD, OBS_BAD), o)

        s2 = np.where(term, TERMINAL, s2)
        r = np.where(term, 0.0, r)
        o = np.where(term, OBS_NONE, o)
        return s2, o, r

    def discretize(self, s):
        return int(s)

    def discretize_batch(self, states):
        return np.asarray(states, dtype=np.int64)

    def is_terminal(self, s):
        return s == TERMINAL

    def is_terminal_batch(self, states):
        return np.asarray(states) == TERMINAL
