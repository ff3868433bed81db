"""Monte-Carlo graph search that grows a finite-state controller.

The controller is improved by UCB-guided simulations from the start node.
The first time an action is tried in a node, a large batch of particles is
pushed through the model, the successors are grouped by observation label
and each group is either merged into an existing node with a close belief
or becomes a new node.  Between improvement passes the controller is
evaluated by Monte-Carlo rollouts that yield an upper and a lower bound on
its value at ``b0``; search stops once they meet.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .belief import ParticleBelief, build_beliefs, histogram
from .clustering import kmeans
from .core import (
    PHASE_EVAL,
    PHASE_INIT,
    PHASE_QLEARN,
    PHASE_UPDATE,
    PHASE_WORST,
    child_rng,
    estimate_worst_case_rewards,
    max_depth,
)
from .fsc import ActionStats, BoundPair, CompiledPolicy, Fsc, blind_fallback_action, prune
from .heuristics import QLearningConfig, VTable, belief_vmdp, blind_value, train_vmdp
from .index import BeliefIndex

__all__ = ["SolverConfig", "Planner", "solve", "evaluate_fsc", "BoundPair"]

logger = logging.getLogger(__name__)


@dataclass
class SolverConfig:
    """Tunable parameters of the search.

    ``time_budget`` (seconds) and ``max_iterations`` bound the number of
    improve/evaluate rounds; ``None`` leaves that limit off.  ``n_jobs`` only
    affects evaluation throughput, never its result.
    """

    epsilon: float = 0.01
    xi: float = 0.1
    nb_particles: int = 5000
    nb_sim: int = 1000
    nb_eval: int = 100_000
    n_star: int = 50
    c: float = 1.0
    k_a: float = 1.0
    alpha_a: float = 0.5
    n_max_fsc: int = 100_000
    n_clusters: int = 10
    kmeans_max_iter: int = 100
    seed: int = 0
    time_budget: Optional[float] = None
    max_iterations: Optional[int] = None
    n_jobs: int = 1
    eval_chunk: int = 4096

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.xi > 0:
            raise ValueError(f"xi must be > 0, got {self.xi}")
        for name in ("nb_particles", "nb_eval", "n_star", "n_max_fsc", "n_clusters",
                     "kmeans_max_iter", "n_jobs", "eval_chunk"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.nb_sim < 0:
            raise ValueError(f"nb_sim must be >= 0, got {self.nb_sim}")
        if not self.k_a > 0:
            raise ValueError(f"k_a must be > 0, got {self.k_a}")
        if not 0 < self.alpha_a <= 1:
            raise ValueError(f"alpha_a must lie in (0, 1], got {self.alpha_a}")
        if self.c < 0:
            raise ValueError(f"c must be >= 0, got {self.c}")
        if self.time_budget is not None and self.time_budget < 0:
            raise ValueError("time_budget must be >= 0")
        if self.max_iterations is not None and self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")

    @classmethod
    def preset(cls, size: str = "small", problem: str = "", **overrides) -> "SolverConfig":
        """Standard settings by problem size (``"small"`` or ``"large"``).

        ``c`` is 2.0 for RockSample and Light Dark, 1.0 otherwise.
        """
        if size == "small":
            base = dict(nb_particles=5000, xi=0.1, n_clusters=10)
        elif size == "large":
            base = dict(nb_particles=10_000, xi=0.3, n_clusters=5)
        else:
            raise ValueError(f"unknown problem size {size!r}")
        base["c"] = 2.0 if problem in ("rocksample", "lightdark") else 1.0
        base.update(overrides)
        return cls(**base)

    def snapshot(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("n_jobs")
        return d


class Planner:
    """Search state bound to one model: controller, heuristics and settings."""

    def __init__(self, model, cfg: SolverConfig, vtable: Optional[VTable] = None,
                 qcfg: Optional[QLearningConfig] = None):
        self.model = model
        self.cfg = cfg
        meta = model.metadata()
        if meta.worst_case_rewards is None:
            worst = estimate_worst_case_rewards(model, child_rng(cfg.seed, PHASE_WORST))
            meta = dataclasses.replace(meta, worst_case_rewards=tuple(worst), worst_case_method="sampled")
        self.meta = meta
        self.gamma = meta.gamma
        self.qcfg = qcfg or QLearningConfig()
        if vtable is None:
            vtable = train_vmdp(model, self.qcfg, child_rng(cfg.seed, PHASE_QLEARN))
            self.vtable_source = "trained"
        else:
            self.vtable_source = "supplied"
        self.vtable = vtable
        self.blind = blind_value(meta)
        self.depth = max_depth(meta, cfg.epsilon)
        self.continuous_actions = meta.continuous_actions
        self.continuous_obs = meta.continuous_observations
        self.n_actions = None if self.continuous_actions else meta.action_space.n
        # optional list of (node id, histogram) for every node created by search
        self.audit = None
        # optional list of (node id, action, sample) for every Q sample, in update order
        self.trace = None

        self.fsc = Fsc(self.gamma, self.continuous_obs, model.fingerprint(), blind_fallback_action(meta))
        self.fsc.worst_case_method = meta.worst_case_method
        self.fsc.worst_case_rewards = tuple(meta.worst_case_rewards)
        self.fsc.index = BeliefIndex()
        self.fsc.info.update({f"solver.{k}": str(v) for k, v in cfg.snapshot().items()})
        self.fsc.info["qlearning"] = vtable.info.get("qlearning", self.qcfg.describe())
        particles = model.sample_initial_batch(cfg.nb_particles, child_rng(cfg.seed, PHASE_INIT))
        b0 = ParticleBelief(particles)
        self._new_node(b0, histogram(b0, model))

    # -- node creation -----------------------------------------------------

    def _new_node(self, belief, hist):
        node = self.fsc.add_node(belief, hist)
        node.vmdp = belief_vmdp(belief, self.vtable, self.model)
        node.V = node.vmdp
        self.fsc.index.add(node.id, hist)
        return node

    def _successor(self, belief):
        """Node for a successor belief: nearest at the size cap, else merge-or-create."""
        hist = histogram(belief, self.model)
        index = self.fsc.index
        if len(self.fsc) >= self.cfg.n_max_fsc:
            return self.fsc.nodes[index.search_nearest(hist)]
        nid, _ = index.nearest(hist, radius=self.cfg.xi)
        if nid is not None:
            return self.fsc.nodes[nid]
        node = self._new_node(belief, hist)
        if self.audit is not None:
            self.audit.append((node.id, hist))
        return node

    # -- search ------------------------------------------------------------

    def select_action(self, node, rng):
        """UCB over tried actions; untried discrete actions first, APW for continuous ones."""
        stats = node.stats
        if self.continuous_actions:
            if len(stats) <= self.cfg.k_a * node.N ** self.cfg.alpha_a and node.N < self.cfg.n_star:
                a = self.meta.action_space.sample(rng)
                while a in stats:
                    a = self.meta.action_space.sample(rng)
                stats[a] = ActionStats()
                return a
        else:
            for a in range(self.n_actions):
                if a not in stats:
                    return a
        log_n = math.log(node.N) if node.N > 0 else 0.0
        c = self.cfg.c
        best_a, best = None, -math.inf
        for a, st in stats.items():
            if st.n == 0:
                return a
            score = st.q + c * math.sqrt(log_n / st.n)
            if score > best:
                best_a, best = a, score
        return best_a

    def process_action(self, node, a, delta, rng) -> float:
        """Expand ``a`` at ``node`` with a full particle batch; returns the initial Q."""
        cfg = self.cfg
        n = cfg.nb_particles
        s = node.belief.sample(n, rng)
        acts = np.tile(np.asarray(a, dtype=float), (n, 1)) if self.continuous_actions else np.full(n, a)
        s2, o, r = self.model.step_batch(s, acts, rng)
        st = node.stats[a]
        st.r = float(np.mean(r))
        if self.continuous_obs:
            labels, cents = kmeans(o, cfg.n_clusters, rng, cfg.kmeans_max_iter)
            node.centroids[a] = cents
        else:
            labels = np.asarray(o, dtype=np.int64)
        q = st.r
        for lab, (belief, weight) in build_beliefs(s2, labels).items():
            nxt = self._successor(belief)
            node.eta[(a, int(lab))] = nxt.id
            q += self.gamma * float(weight) * nxt.V
        st.q = q
        node.refresh()
        if self.trace is not None:
            self.trace.append((node.id, a, q))
        return q

    def simulate(self, s, node_id, delta, rng) -> float:
        """One trajectory from ``(s, node_id)`` at depth ``delta``; returns its return.

        Iterative form of the recursive procedure: the forward pass records
        ``(node, action)`` pairs, the backward pass applies the Q updates.
        """
        model = self.model
        nodes = self.fsc.nodes
        path = []
        tail = 0.0
        while True:
            if delta >= self.depth or model.is_terminal(s):
                break
            node = nodes[node_id]
            a = self.select_action(node, rng)
            node.N += 1
            st = node.stats.get(a)
            if st is None:
                st = node.stats[a] = ActionStats()
            st.n += 1
            if st.n == 1:
                tail = self.process_action(node, a, delta, rng)
                break
            s, o, _ = model.step(s, a, rng)
            path.append((node, a))
            nxt = node.eta.get((a, node.label(a, o)))
            if nxt is None:
                tail = self.blind
                break
            node_id = nxt
            delta += 1
        # a (node, action) pair can repeat along the path through cycles; its
        # counter already holds every occurrence, so each update divides by the
        # number of samples folded in so far and Q stays an exact running mean
        pending = {}
        for node, a in path:
            pending[(node.id, a)] = pending.get((node.id, a), 0) + 1
        R = tail
        gamma = self.gamma
        for node, a in reversed(path):
            st = node.stats[a]
            R = st.r + gamma * R
            key = (node.id, a)
            pending[key] -= 1
            st.q += (R - st.q) / (st.n - pending[key])
            node.refresh()
            if self.trace is not None:
                self.trace.append((node.id, a, R))
        return R

    def update_fsc(self, iteration: int):
        n0 = self.fsc.n0
        for i in range(self.cfg.nb_sim):
            rng = child_rng(self.cfg.seed, PHASE_UPDATE, iteration, i)
            self.simulate(self.model.sample_initial(rng), n0, 0, rng)

    def evaluate(self, iteration: int, per_trajectory: bool = False):
        return evaluate_fsc(self.fsc, self.model, self.cfg, self.blind, iteration,
                            per_trajectory=per_trajectory, meta=self.meta, vtable=self.vtable)


def _vmdp_states(vtable, model, states):
    return vtable.lookup(model.discretize_batch(states))


def _eval_chunk(pol: CompiledPolicy, model, meta, cfg, blind, vtable, depth, m, rng):
    gamma = meta.gamma
    s = model.sample_initial_batch(m, rng)
    node = np.full(m, pol.start, dtype=np.int64)
    upper = np.zeros(m)
    lower = np.zeros(m)
    alive = ~model.is_terminal_batch(s)
    disc = 1.0
    for _ in range(depth):
        idx = np.flatnonzero(alive)
        if len(idx) == 0:
            break
        nd = node[idx]
        leaf = (pol.N[nd] <= cfg.n_star) | ~pol.has_psi[nd]
        if leaf.any():
            li = idx[leaf]
            upper[li] += disc * pol.vmdp[nd[leaf]]
            lower[li] += disc * blind
            alive[li] = False
        go = ~leaf
        if go.any():
            gi = idx[go]
            gn = nd[go]
            s2, o, r = model.step_batch(s[gi], pol.actions_for(gn), rng)
            upper[gi] += disc * r
            lower[gi] += disc * r
            s[gi] = s2
            term = model.is_terminal_batch(s2)
            nxt = pol.successors(gn, o)
            miss = (nxt < 0) & ~term
            if miss.any():
                mi = gi[miss]
                upper[mi] += disc * gamma * _vmdp_states(vtable, model, s2[miss])
                lower[mi] += disc * gamma * blind
            node[gi] = np.where(nxt < 0, 0, nxt)
            alive[gi] = ~(term | miss)
        disc *= gamma
    return upper, lower


def evaluate_fsc(fsc: Fsc, model, cfg: SolverConfig, blind: float, iteration: int = 0,
                 per_trajectory: bool = False, meta=None, vtable: Optional[VTable] = None):
    """Monte-Carlo upper and lower bounds on the controller's value at ``b0``.

    Trajectories follow ``psi`` while nodes have more than ``n_star`` visits.
    At an under-visited node the upper bound takes the node's ``V_MDP``
    value and the lower bound the blind value, and the trajectory stops.
    Both bounds share the same sampled transitions.  Chunks of trajectories
    draw from their own streams, so the result is independent of
    ``cfg.n_jobs``.
    """
    meta = meta or model.metadata()
    depth = max_depth(meta, cfg.epsilon)
    pol = CompiledPolicy(fsc)
    chunks = [(c, min(cfg.eval_chunk, cfg.nb_eval - start))
              for c, start in enumerate(range(0, cfg.nb_eval, cfg.eval_chunk))]

    def run(item):
        c, m = item
        rng = child_rng(cfg.seed, PHASE_EVAL, iteration, c)
        return _eval_chunk(pol, model, meta, cfg, blind, vtable, depth, m, rng)

    if cfg.n_jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(item) for item in chunks]
    upper = np.concatenate([u for u, _ in results])
    lower = np.concatenate([lo for _, lo in results])
    bp = BoundPair(upper=math.fsum(upper) / len(upper), lower=math.fsum(lower) / len(lower),
                   iteration=iteration, nodes=len(fsc))
    if per_trajectory:
        return bp, upper, lower
    return bp


def solve(model, cfg: Optional[SolverConfig] = None, vtable: Optional[VTable] = None,
          qcfg: Optional[QLearningConfig] = None,
          callback: Optional[Callable[[BoundPair, "Planner"], Optional[bool]]] = None,
          return_planner: bool = False):
    """Run improve/evaluate rounds until the bounds meet or a budget runs out.

    Returns the controller pruned to the nodes its policy can reach, with
    the bound history in ``fsc.bounds``.  ``callback(bound_pair, planner)``
    runs after every evaluation; a truthy return value stops the search.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    planner = Planner(model, cfg, vtable, qcfg)

    def record(iteration):
        bp = planner.evaluate(iteration)
        bp.seconds = time.perf_counter() - t0
        planner.fsc.bounds.append(bp)
        logger.info("iter %d upper %.4f lower %.4f nodes %d (%.1fs)",
                    iteration, bp.upper, bp.lower, bp.nodes, bp.seconds)
        stop = bool(callback(bp, planner)) if callback is not None else False
        return bp, stop

    bp, stop = record(0)
    it = 0
    while bp.upper - bp.lower > cfg.epsilon and not stop:
        if cfg.max_iterations is not None and it >= cfg.max_iterations:
            break
        if cfg.time_budget is not None and time.perf_counter() - t0 >= cfg.time_budget:
            break
        it += 1
        planner.update_fsc(it)
        bp, stop = record(it)
    planner.iterations = it
    fsc = prune(planner.fsc)
    if return_planner:
        return fsc, planner
    return fsc
