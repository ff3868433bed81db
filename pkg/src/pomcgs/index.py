"""Metric index over belief histograms.

A simplified cover tree (base 2) accelerates nearest-neighbour queries
under the norm-1 distance.  Histogram distances never exceed 2, so the
root sits at the fixed level 1 and every entry is covered by it.  The
linear scan kept alongside is the correctness reference; both paths break
ties by the smallest node id.

Distances from a query to all children of a tree node are computed in one
vectorized call (see :class:`~pomcgs.belief.HistogramPack`).  Beliefs with
disjoint support sit at the maximal distance 2 from each other, which
makes child lists long in practice, so this matters more than pruning.
"""

from __future__ import annotations

import numpy as np

from .belief import BeliefHistogram, HistogramPack

__all__ = ["BeliefIndex", "LinearIndex"]

_ROOT_LEVEL = 1
# slack on triangle-inequality pruning so rounding never hides a tie
_SLACK = 1e-12
_INF = float("inf")


def _pick(d, ids, best):
    """Fold candidate distances ``d`` (ids ``ids``) into ``best = [dist, id]``."""
    if len(d) == 0:
        return
    m = d.min()
    if m > best[0]:
        return
    cand = ids[d == m]
    i = int(cand.min())
    if m < best[0] or best[1] is None or i < best[1]:
        best[0], best[1] = float(m), i


class _TreeNode:
    __slots__ = ("id", "hist", "level", "children", "child_ids", "pack", "maxdist")

    def __init__(self, node_id, hist, level):
        self.id = node_id
        self.hist = hist
        self.level = level
        self.children = []
        self.child_ids = []
        self.pack = HistogramPack()
        self.maxdist = 0.0

    def add_child(self, child):
        self.children.append(child)
        self.child_ids.append(child.id)
        self.pack.append(child.hist)


class LinearIndex:
    """Exhaustive scan; the reference implementation."""

    def __init__(self):
        self.ids = []
        self.hists = []
        self._pack = HistogramPack()
        self.n_distance_evals = 0

    def __len__(self):
        return len(self.ids)

    @property
    def entries(self):
        return list(zip(self.ids, self.hists))

    def add(self, node_id, hist):
        self.ids.append(node_id)
        self.hists.append(hist)
        self._pack.append(hist)

    def distances(self, h):
        self.n_distance_evals += len(self.ids)
        return self._pack.distances(h)

    def nearest(self, h: BeliefHistogram, radius: float = _INF):
        """Closest entry within ``radius`` as ``(id, d)``; ``(None, inf)`` if none."""
        if not self.ids:
            raise LookupError("nearest-neighbour query on an empty index")
        best = [radius, None]
        _pick(self.distances(h), np.asarray(self.ids), best)
        if best[1] is None:
            return None, _INF
        return best[1], best[0]

    def search_nearest(self, h):
        return self.nearest(h)[0]

    def search_or_insert(self, h, xi, make_node):
        if xi <= 0:
            raise ValueError("xi must be positive")
        if self.ids:
            node_id, _ = self.nearest(h, radius=xi)
            if node_id is not None:
                return node_id, False
        node_id = make_node()
        self.add(node_id, h)
        return node_id, True


class BeliefIndex:
    """Cover-tree index with the linear entry list kept alongside.

    ``search_or_insert`` returns the closest entry within ``xi`` (ties on
    the smallest id) or inserts ``h`` under a fresh id from ``make_node``.
    """

    def __init__(self):
        self.root = None
        self.entries = []
        self._ids = set()
        self.n_distance_evals = 0

    def __len__(self):
        return len(self.entries)

    def __contains__(self, node_id):
        return node_id in self._ids

    def _child_dists(self, p, h):
        self.n_distance_evals += len(p.children)
        return p.pack.distances(h)

    def _dist(self, a, b):
        self.n_distance_evals += 1
        pack = HistogramPack()
        pack.append(a)
        return float(pack.distances(b)[0])

    def add(self, node_id, hist):
        if node_id in self._ids:
            raise ValueError(f"node id {node_id} already indexed")
        self.entries.append((node_id, hist))
        self._ids.add(node_id)
        if self.root is None:
            self.root = _TreeNode(node_id, hist, _ROOT_LEVEL)
            return
        self._insert(self.root, node_id, hist, self._dist(self.root.hist, hist))

    def _insert(self, p, node_id, hist, d_p):
        # d_p <= 2**p.level holds for every call (covering invariant)
        while True:
            if d_p > p.maxdist:
                p.maxdist = d_p
            cover = 2.0 ** (p.level - 1)
            if p.children:
                d = self._child_dists(p, hist)
                inside = np.flatnonzero(d <= cover)
            else:
                inside = ()
            if len(inside) == 0:
                p.add_child(_TreeNode(node_id, hist, p.level - 1))
                return
            j = int(inside[0])
            p, d_p = p.children[j], float(d[j])

    def nearest(self, h: BeliefHistogram, radius: float = _INF):
        """Closest entry within ``radius`` as ``(id, d)``; ``(None, inf)`` if none.

        A finite radius also tightens the pruning bound, which is what makes
        merge queries cheap: most subtrees lie well outside ``xi``.
        """
        if self.root is None:
            raise LookupError("nearest-neighbour query on an empty index")
        best = [radius, None]
        d0 = self._dist(self.root.hist, h)
        _pick(np.array([d0]), np.array([self.root.id]), best)
        if d0 - self.root.maxdist <= best[0] + _SLACK:
            self._nn(self.root, h, best)
        if best[1] is None:
            return None, _INF
        return best[1], best[0]

    def _nn(self, p, h, best):
        if not p.children:
            return
        d = self._child_dists(p, h)
        ids = np.asarray(p.child_ids)
        _pick(d, ids, best)
        order = np.lexsort((ids, d))
        for j in order:
            q = p.children[j]
            if not q.children:
                continue
            if d[j] - q.maxdist > best[0] + _SLACK:
                continue
            self._nn(q, h, best)

    def search_nearest(self, h):
        return self.nearest(h)[0]

    def search_or_insert(self, h, xi, make_node):
        if xi <= 0:
            raise ValueError("xi must be positive")
        if self.root is not None:
            node_id, _ = self.nearest(h, radius=xi)
            if node_id is not None:
                return node_id, False
        node_id = make_node()
        self.add(node_id, h)
        return node_id, True

    def linear(self) -> LinearIndex:
        ref = LinearIndex()
        for node_id, hist in self.entries:
            ref.add(node_id, hist)
        return ref

    @classmethod
    def from_entries(cls, entries):
        idx = cls()
        for node_id, hist in entries:
            idx.add(node_id, hist)
        return idx
