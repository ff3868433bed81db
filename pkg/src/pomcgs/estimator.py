"""Estimator-style wrapper around the solver.

``fit`` takes a generative model in place of a data matrix, ``predict``
maps observation histories to actions and ``score`` is the mean discounted
return of the learned controller on the model.
"""

from __future__ import annotations

import numbers

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted, check_scalar

from . import fsc as fsc_mod
from .heuristics import QLearningConfig
from .solver import SolverConfig, solve

__all__ = ["POMCGS"]


class POMCGS(BaseEstimator):
    """Offline planner producing a finite-state controller.

    Parameters
    ----------
    epsilon : float, default=0.01
        Convergence gap and horizon cutoff.
    xi : float, default=0.1
        Merge radius in norm-1 belief distance.
    nb_particles : int, default=5000
    nb_sim : int, default=1000
        Simulations per improvement pass.
    nb_eval : int, default=100000
        Rollouts per evaluation.
    n_star : int, default=50
        Visit count above which a node counts as finalized.
    c : float, default=1.0
        UCB exploration constant.
    k_a, alpha_a : float
        Action progressive widening, continuous actions only.
    n_max_fsc : int, default=100000
    n_clusters : int, default=10
        Observation clusters per (node, action) for continuous observations.
    time_budget : float or None
        Wall-clock seconds; ``None`` means no limit.
    max_iterations : int or None
    qlearning_episodes : int, default=100000
    n_jobs : int, default=1
    random_state : int, default=0

    Attributes
    ----------
    fsc_ : Fsc
        Pruned controller.
    bounds_ : ndarray of shape (n_records, 4)
        Columns ``iteration, upper, lower, nodes``.
    vtable_ : VTable
    n_iter_ : int
    """

    def __init__(self, epsilon=0.01, xi=0.1, nb_particles=5000, nb_sim=1000, nb_eval=100_000,
                 n_star=50, c=1.0, k_a=1.0, alpha_a=0.5, n_max_fsc=100_000, n_clusters=10,
                 time_budget=None, max_iterations=None, qlearning_episodes=100_000, n_jobs=1,
                 random_state=0):
        self.epsilon = epsilon
        self.xi = xi
        self.nb_particles = nb_particles
        self.nb_sim = nb_sim
        self.nb_eval = nb_eval
        self.n_star = n_star
        self.c = c
        self.k_a = k_a
        self.alpha_a = alpha_a
        self.n_max_fsc = n_max_fsc
        self.n_clusters = n_clusters
        self.time_budget = time_budget
        self.max_iterations = max_iterations
        self.qlearning_episodes = qlearning_episodes
        self.n_jobs = n_jobs
        self.random_state = random_state

    def _validate(self):
        check_scalar(self.epsilon, "epsilon", numbers.Real, min_val=0, include_boundaries="neither")
        check_scalar(self.xi, "xi", numbers.Real, min_val=0, include_boundaries="neither")
        for name in ("nb_particles", "nb_eval", "n_star", "n_max_fsc", "n_clusters",
                     "qlearning_episodes", "n_jobs"):
            check_scalar(getattr(self, name), name, numbers.Integral, min_val=1)
        check_scalar(self.nb_sim, "nb_sim", numbers.Integral, min_val=0)
        check_scalar(self.alpha_a, "alpha_a", numbers.Real, min_val=0, max_val=1,
                     include_boundaries="right")

    def _configs(self):
        cfg = SolverConfig(
            epsilon=self.epsilon, xi=self.xi, nb_particles=self.nb_particles, nb_sim=self.nb_sim,
            nb_eval=self.nb_eval, n_star=self.n_star, c=self.c, k_a=self.k_a, alpha_a=self.alpha_a,
            n_max_fsc=self.n_max_fsc, n_clusters=self.n_clusters, seed=self.random_state,
            time_budget=self.time_budget, max_iterations=self.max_iterations, n_jobs=self.n_jobs,
        )
        qcfg = QLearningConfig(episodes=self.qlearning_episodes, seed=self.random_state)
        return cfg, qcfg

    def fit(self, model, vtable=None):
        """Solve ``model`` and store the controller.

        Parameters
        ----------
        model : GenerativeModel
        vtable : VTable, optional
            Pre-trained heuristic; trained from scratch when omitted.
        """
        self._validate()
        cfg, qcfg = self._configs()
        fsc, planner = solve(model, cfg, vtable=vtable, qcfg=qcfg, return_planner=True)
        self.fsc_ = fsc
        self.vtable_ = planner.vtable
        self.n_iter_ = planner.iterations
        self.bounds_ = np.array([[b.iteration, b.upper, b.lower, b.nodes] for b in fsc.bounds])
        self.model_fingerprint_ = model.fingerprint()
        return self

    def predict(self, observations):
        """Actions taken along one observation history.

        Returns ``len(observations) + 1`` actions: the first is chosen before
        any observation, each later one after the matching observation.
        """
        check_is_fitted(self, "fsc_")
        ex = fsc_mod.PolicyExecutor(self.fsc_)
        out = [ex.action()]
        for o in observations:
            ex.observe(o)
            out.append(ex.action())
        return out

    def score(self, model, n_episodes=10_000, seed=0):
        """Mean discounted return over ``n_episodes`` executions on ``model``."""
        check_is_fitted(self, "fsc_")
        res = fsc_mod.run_episodes(self.fsc_, model, n_episodes, seed=seed, epsilon=self.epsilon)
        return float(res["returns"].mean())

    def save(self, path, include_beliefs=False):
        check_is_fitted(self, "fsc_")
        fsc_mod.save(self.fsc_, path, include_beliefs=include_beliefs)
