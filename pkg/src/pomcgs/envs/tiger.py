"""The classic Tiger problem, with explicit tables for exact solving."""

from __future__ import annotations

import numpy as np

from ..core import ContractViolation, DiscreteActions, GenerativeModel, ProblemMetadata

TIGER_LEFT, TIGER_RIGHT = 0, 1
LISTEN, OPEN_LEFT, OPEN_RIGHT = 0, 1, 2
HEAR_LEFT, HEAR_RIGHT = 0, 1


class TigerModel(GenerativeModel):
    """Two doors, one tiger.

    Listening costs 1 and reports the tiger's side correctly with
    probability ``accuracy``.  Opening pays +10 on the free door and -100 on
    the tiger's; either way the tiger is then reshuffled uniformly and the
    observation is uninformative.
    """

    n_states = 2

    def __init__(self, gamma=0.95, accuracy=0.85, listen_reward=-1.0,
                 correct_reward=10.0, wrong_reward=-100.0):
        self.gamma = gamma
        self.accuracy = accuracy
        self.listen_reward = listen_reward
        self.correct_reward = correct_reward
        self.wrong_reward = wrong_reward
        # rewards[s, a]
        self.rewards = np.array([
            [listen_reward, wrong_reward, correct_reward],
            [listen_reward, correct_reward, wrong_reward],
        ])
        self._meta = ProblemMetadata(
            gamma=gamma,
            r_min=float(self.rewards.min()),
            r_max=float(self.rewards.max()),
            action_space=DiscreteActions(3),
            observation_kind="discrete",
            n_observations=2,
            worst_case_rewards=tuple(float(x) for x in self.rewards.min(axis=0)),
        )

    def metadata(self):
        return self._meta

    def fingerprint(self):
        return (f"tiger(gamma={self.gamma!r},accuracy={self.accuracy!r},"
                f"rewards={self.listen_reward!r}/{self.correct_reward!r}/{self.wrong_reward!r})")

    def sample_initial(self, rng):
        return int(rng.random() < 0.5)

    def sample_initial_batch(self, n, rng):
        return (rng.random(n) < 0.5).astype(np.int64)

    def step(self, s, a, rng):
        if not 0 <= a < 3:
            raise ContractViolation(f"invalid Tiger action {a!r}")
        r = float(self.rewards[s, a])
        if a == LISTEN:
            correct = rng.random() < self.accuracy
            o = s if correct else 1 - s
            return s, o, r
        s2 = int(rng.random() < 0.5)
        o = int(rng.random() < 0.5)
        return s2, o, r

    def step_batch(self, states, actions, rng):
        states = np.asarray(states, dtype=np.int64)
        actions = np.broadcast_to(np.asarray(actions, dtype=np.int64), states.shape)
        if np.any((actions < 0) | (actions > 2)):
            raise ContractViolation("invalid Tiger action in batch")
        n = len(states)
        r = self.rewards[states, actions]
        listen = actions == LISTEN
        u = rng.random((3, n))
        heard = np.where(u[0] < self.accuracy, states, 1 - states)
        s2 = np.where(listen, states, (u[1] < 0.5).astype(np.int64))
        o = np.where(listen, heard, (u[2] < 0.5).astype(np.int64))
        return s2, o, r

    def discretize(self, s):
        return int(s)

    def discretize_batch(self, states):
        return np.asarray(states, dtype=np.int64)

    def explicit_model(self):
        """``T[a, s, s']``, ``O[a, s', o]``, ``R[s, a]`` and ``b0``."""
        T = np.zeros((3, 2, 2))
        T[LISTEN] = np.eye(2)
        T[OPEN_LEFT] = 0.5
        T[OPEN_RIGHT] = 0.5
        O = np.zeros((3, 2, 2))
        acc = self.accuracy
        O[LISTEN] = [[acc, 1 - acc], [1 - acc, acc]]
        O[OPEN_LEFT] = 0.5
        O[OPEN_RIGHT] = 0.5
        return T, O, self.rewards.copy(), np.array([0.5, 0.5])


def exact_tiger_value(gamma=0.95, epsilon=1e-6, grid_step=0.001, model=None) -> float:
    """Optimal value at ``b0`` by value iteration on a belief grid.

    The belief is ``p = P(tiger-left)``; successor beliefs are evaluated by
    linear interpolation on the grid.  Iteration stops once the sup-norm
    change guarantees ``epsilon``-optimality on the grid.
    """
    m = model or TigerModel()
    T, O, R, b0 = m.explicit_model()
    n_points = int(round(1.0 / grid_step)) + 1
    p = np.linspace(0.0, 1.0, n_points)
    B = np.stack([p, 1.0 - p], axis=1)  # belief over (left, right)
    n_act, n_obs = T.shape[0], O.shape[2]

    immediate = B @ R  # (grid, actions)
    if gamma == 0:
        return float(np.interp(b0[0], p, immediate.max(axis=1)))

    # successor beliefs and observation probabilities, fixed across sweeps
    probs = np.zeros((n_act, n_obs, n_points))
    succ = np.zeros((n_act, n_obs, n_points))
    for a in range(n_act):
        pred = B @ T[a]  # predicted next-state distribution
        for o in range(n_obs):
            joint = pred * O[a][:, o]
            po = joint.sum(axis=1)
            probs[a, o] = po
            with np.errstate(invalid="ignore", divide="ignore"):
                succ[a, o] = np.where(po > 0, joint[:, 0] / po, 0.5)

    V = immediate.max(axis=1)
    tol = epsilon * (1.0 - gamma) / (2.0 * gamma)
    while True:
        Qs = immediate.copy()
        for a in range(n_act):
            for o in range(n_obs):
                Qs[:, a] += gamma * probs[a, o] * np.interp(succ[a, o], p, V)
        V_new = Qs.max(axis=1)
        change = np.max(np.abs(V_new - V))
        V = V_new
        if change < tol:
            break
    return float(np.interp(b0[0], p, V))
