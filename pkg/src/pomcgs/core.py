"""Problem contract shared by every solver component.

A POMDP is given to the solver as a :class:`GenerativeModel`: a black-box
simulator that maps ``(s, a)`` to a sampled ``(s', o, r)`` together with a
handful of metadata (discount, reward bounds, action and observation
spaces).  States are opaque to the solver; the only thing it needs from
them is a discretizer mapping each state to an integer bin code.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

__all__ = [
    "ContractViolation",
    "DiscreteActions",
    "BoxActions",
    "ProblemMetadata",
    "GenerativeModel",
    "GridDiscretizer",
    "horizon_exceeded",
    "max_depth",
    "step",
    "child_rng",
    "estimate_worst_case_rewards",
]


class ContractViolation(ValueError):
    """Raised when a model or a caller breaks the generative-model contract."""


@dataclass(frozen=True)
class DiscreteActions:
    """Finite action set ``{0, ..., n - 1}``."""

    n: int

    continuous = False

    def __post_init__(self):
        if self.n < 1:
            raise ContractViolation(f"action count must be >= 1, got {self.n}")

    def contains(self, a) -> bool:
        return isinstance(a, (int, np.integer)) and 0 <= a < self.n

    def candidates(self) -> list:
        return list(range(self.n))


@dataclass(frozen=True)
class BoxActions:
    """Continuous actions: real vectors inside per-dimension bounds.

    ``candidates`` is an optional finite subset used wherever an action has
    to be picked from an enumerable set (blind fallback, Q-learning grid).
    """

    low: tuple
    high: tuple
    candidate_set: Optional[tuple] = None

    continuous = True

    def __post_init__(self):
        if len(self.low) != len(self.high) or not self.low:
            raise ContractViolation("action bounds must be non-empty and of equal length")
        if any(lo > hi for lo, hi in zip(self.low, self.high)):
            raise ContractViolation("action lower bound exceeds upper bound")

    @property
    def dim(self) -> int:
        return len(self.low)

    def contains(self, a) -> bool:
        try:
            vec = tuple(float(x) for x in a)
        except TypeError:
            return False
        return len(vec) == self.dim and all(
            lo <= x <= hi for x, lo, hi in zip(vec, self.low, self.high)
        )

    def sample(self, rng: np.random.Generator) -> tuple:
        return tuple(float(x) for x in rng.uniform(self.low, self.high))

    def grid(self, points_per_dim: int = 11) -> list:
        axes = [np.linspace(lo, hi, points_per_dim) for lo, hi in zip(self.low, self.high)]
        mesh = np.meshgrid(*axes, indexing="ij")
        flat = np.stack([m.ravel() for m in mesh], axis=1)
        return [tuple(float(x) for x in row) for row in flat]

    def candidates(self) -> Optional[list]:
        if self.candidate_set is None:
            return None
        return [tuple(float(x) for x in a) for a in self.candidate_set]


@dataclass(frozen=True)
class ProblemMetadata:
    """Static description of a problem.

    Parameters
    ----------
    gamma : float
        Discount factor in (0, 1).
    r_min, r_max : float
        Bounds on every instant reward the model can emit.
    action_space : DiscreteActions or BoxActions
    observation_kind : {"discrete", "continuous"}
    n_observations : int, optional
        Size of the observation set for discrete observations.
    observation_dim : int
        Dimension of continuous observations.
    worst_case_rewards : sequence of float, optional
        ``min_s r(s, a)`` for every action in ``action_space.candidates()``.
    """

    gamma: float
    r_min: float
    r_max: float
    action_space: Any
    observation_kind: str = "discrete"
    n_observations: Optional[int] = None
    observation_dim: int = 1
    worst_case_rewards: Optional[tuple] = None
    worst_case_method: str = "table"

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ContractViolation(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.r_min > self.r_max:
            raise ContractViolation(f"r_min={self.r_min} exceeds r_max={self.r_max}")
        if self.observation_kind not in ("discrete", "continuous"):
            raise ContractViolation(f"unknown observation kind {self.observation_kind!r}")
        if self.worst_case_rewards is not None:
            for w in self.worst_case_rewards:
                if not self.r_min <= w <= self.r_max:
                    raise ContractViolation(
                        f"worst-case reward {w} outside [{self.r_min}, {self.r_max}]"
                    )

    @property
    def continuous_actions(self) -> bool:
        return self.action_space.continuous

    @property
    def continuous_observations(self) -> bool:
        return self.observation_kind == "continuous"


@dataclass(frozen=True)
class GridDiscretizer:
    """Uniform per-dimension grid; values outside the bounds clamp to edge cells.

    Cells are encoded as a single non-negative integer (mixed radix, first
    dimension most significant) so that histogram keys stay scalar.
    """

    low: tuple
    high: tuple
    width: tuple
    counts: tuple = field(init=False)

    def __post_init__(self):
        counts = tuple(
            max(1, int(math.ceil((hi - lo) / w - 1e-9)))
            for lo, hi, w in zip(self.low, self.high, self.width)
        )
        object.__setattr__(self, "counts", counts)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.counts))

    def cells(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1, len(self.low))
        low = np.asarray(self.low)
        width = np.asarray(self.width)
        idx = np.floor((x - low) / width).astype(np.int64)
        return np.clip(idx, 0, np.asarray(self.counts) - 1)

    def encode(self, x: np.ndarray) -> np.ndarray:
        idx = self.cells(x)
        code = np.zeros(len(idx), dtype=np.int64)
        for d, n in enumerate(self.counts):
            code = code * n + idx[:, d]
        return code


class GenerativeModel(ABC):
    """Black-box simulator contract.

    Subclasses implement the scalar methods; the batched variants default
    to loops over them and are overridden by built-in models with
    vectorized versions.  State batches are numpy arrays whose first axis
    indexes particles.  Models hold no mutable state: all randomness comes
    from the caller's generator.
    """

    @abstractmethod
    def metadata(self) -> ProblemMetadata:
        ...

    @abstractmethod
    def sample_initial(self, rng: np.random.Generator):
        ...

    @abstractmethod
    def step(self, s, a, rng: np.random.Generator):
        """Sample ``(s', o, r)``."""

    @abstractmethod
    def discretize(self, s) -> int:
        ...

    def is_terminal(self, s) -> bool:
        return False

    def fingerprint(self) -> str:
        return type(self).__name__

    # batched defaults

    def sample_initial_batch(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return np.array([self.sample_initial(rng) for _ in range(n)])

    def step_batch(self, states: np.ndarray, actions, rng: np.random.Generator):
        """Step every row of ``states`` with the matching row of ``actions``."""
        out_s, out_o, out_r = [], [], []
        for s, a in zip(states, actions):
            if isinstance(a, np.ndarray):
                a = tuple(float(x) for x in a)
            elif isinstance(a, np.integer):
                a = int(a)
            s2, o, r = self.step(s, a, rng)
            out_s.append(s2)
            out_o.append(o)
            out_r.append(r)
        return np.array(out_s), np.array(out_o), np.asarray(out_r, dtype=float)

    def discretize_batch(self, states: np.ndarray) -> np.ndarray:
        return np.fromiter((self.discretize(s) for s in states), dtype=np.int64, count=len(states))

    def is_terminal_batch(self, states: np.ndarray) -> np.ndarray:
        return np.fromiter((self.is_terminal(s) for s in states), dtype=bool, count=len(states))

    def explicit_model(self):
        """Optional ``(T, O, R, b0)`` tables; ``None`` for pure simulators."""
        return None


def horizon_exceeded(delta: int, meta: ProblemMetadata, epsilon: float) -> bool:
    """True iff ``gamma**delta / (1 - gamma) * (r_max - r_min) < epsilon``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return meta.gamma**delta / (1.0 - meta.gamma) * (meta.r_max - meta.r_min) < epsilon


def max_depth(meta: ProblemMetadata, epsilon: float) -> int:
    """Smallest depth at which :func:`horizon_exceeded` holds."""
    delta = 0
    while not horizon_exceeded(delta, meta, epsilon):
        delta += 1
    return delta


def step(model: GenerativeModel, s, a, rng: np.random.Generator):
    """Checked call to ``model.step``.

    Raises :class:`ContractViolation` for actions outside the action space
    and for rewards outside ``[r_min, r_max]``.
    """
    meta = model.metadata()
    if not meta.action_space.contains(a):
        raise ContractViolation(f"invalid action {a!r} for {model.fingerprint()}")
    s2, o, r = model.step(s, a, rng)
    if not meta.r_min <= r <= meta.r_max:
        raise ContractViolation(
            f"reward {r} for action {a!r} outside [{meta.r_min}, {meta.r_max}]"
        )
    return s2, o, r


# Phase tags for child streams.
PHASE_INIT, PHASE_QLEARN, PHASE_UPDATE, PHASE_EVAL, PHASE_EXEC, PHASE_WORST = range(6)


def child_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent generator derived from a master seed and an integer key path."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def estimate_worst_case_rewards(
    model: GenerativeModel,
    rng: np.random.Generator,
    n_samples: int = 100_000,
    walk_length: int = 50,
    actions: Optional[Sequence] = None,
) -> list:
    """Estimate ``min_s r(s, a)`` by sampling states reachable from ``b0``.

    States are collected along uniformly random walks from initial samples;
    every candidate action is then applied to each collected state.
    """
    meta = model.metadata()
    if actions is None:
        actions = meta.action_space.candidates()
        if actions is None:
            raise ContractViolation("continuous action space declares no candidate actions")
    per_action = max(1, n_samples // len(actions))
    n_walks = max(1, per_action // walk_length)
    states = []
    for _ in range(n_walks):
        s = model.sample_initial(rng)
        for _ in range(walk_length):
            states.append(s)
            if model.is_terminal(s):
                break
            a = actions[int(rng.integers(len(actions)))]
            s, _, _ = model.step(s, a, rng)
    states = np.array(states[:per_action])
    worst = []
    for a in actions:
        acts = [a] * len(states) if meta.continuous_actions else np.full(len(states), a)
        _, _, r = model.step_batch(states, acts, rng)
        worst.append(float(np.min(r)))
    return worst
