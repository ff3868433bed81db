"""Particle beliefs, their binned histograms and the norm-1 distance."""

from __future__ import annotations

from fractions import Fraction

import numpy as np

__all__ = [
    "ParticleBelief",
    "BeliefHistogram",
    "histogram",
    "l1_distance",
    "HistogramPack",
    "build_beliefs",
]


class BeliefHistogram:
    """Sparse normalized histogram over integer bin codes.

    ``keys`` is sorted and unique, ``masses`` holds the matching positive
    probabilities.
    """

    __slots__ = ("keys", "masses")

    def __init__(self, keys, masses):
        self.keys = np.asarray(keys, dtype=np.int64)
        self.masses = np.asarray(masses, dtype=float)

    @classmethod
    def from_dict(cls, d: dict) -> "BeliefHistogram":
        items = sorted((int(k), float(v)) for k, v in d.items() if v > 0)
        if not items:
            raise ValueError("histogram needs at least one positive mass")
        keys, masses = zip(*items)
        return cls(keys, masses)

    @classmethod
    def from_codes(cls, codes: np.ndarray) -> "BeliefHistogram":
        if len(codes) == 0:
            raise ValueError("cannot build a histogram from an empty particle set")
        keys, counts = np.unique(codes, return_counts=True)
        return cls(keys, counts / len(codes))

    def as_dict(self) -> dict:
        return dict(zip(self.keys.tolist(), self.masses.tolist()))

    def __len__(self):
        return len(self.keys)

    def __repr__(self):
        return f"BeliefHistogram({self.as_dict()})"


class ParticleBelief:
    """Uniformly weighted particle set.

    The raw particles are kept because resimulation samples states from
    them; ``hist`` is filled lazily from the owning model's discretizer.
    """

    __slots__ = ("particles", "_hist")

    def __init__(self, particles):
        self.particles = np.asarray(particles)
        self._hist = None

    @property
    def count(self) -> int:
        return len(self.particles)

    def __len__(self):
        return len(self.particles)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return self.particles[rng.integers(0, len(self.particles), size=n)]


def histogram(b: ParticleBelief, model) -> BeliefHistogram:
    if b.count == 0:
        raise ValueError("cannot build a histogram from an empty particle set")
    if b._hist is None:
        b._hist = BeliefHistogram.from_codes(model.discretize_batch(b.particles))
    return b._hist


def l1_distance(h1: BeliefHistogram, h2: BeliefHistogram) -> float:
    """Sum of absolute mass differences over the union of bins."""
    pack = HistogramPack()
    pack.append(h2)
    return float(pack.distances(h1)[0])


class HistogramPack:
    """Many histograms in flat arrays, for one-to-many distance queries.

    Each stored histogram's distance to a query is accumulated only from its
    own entries, in key order, so the value does not depend on what else is
    in the pack.  All nearest-neighbour code goes through here, which keeps
    tie-breaking identical between the tree and the linear scan.
    """

    def __init__(self):
        self._keys = np.empty(64, dtype=np.int64)
        self._masses = np.empty(64)
        self._owner = np.empty(64, dtype=np.int64)
        self._size = 0
        self.n = 0

    def __len__(self):
        return self.n

    def append(self, h: BeliefHistogram):
        m = len(h.keys)
        need = self._size + m
        if need > len(self._keys):
            cap = max(need, 2 * len(self._keys))
            for name in ("_keys", "_masses", "_owner"):
                old = getattr(self, name)
                arr = np.empty(cap, dtype=old.dtype)
                arr[: self._size] = old[: self._size]
                setattr(self, name, arr)
        sl = slice(self._size, need)
        self._keys[sl] = h.keys
        self._masses[sl] = h.masses
        self._owner[sl] = self.n
        self._size = need
        self.n += 1

    def distances(self, h: BeliefHistogram) -> np.ndarray:
        """Norm-1 distance from ``h`` to every stored histogram, in insertion order."""
        keys = self._keys[: self._size]
        masses = self._masses[: self._size]
        owner = self._owner[: self._size]
        hk, hm = h.keys, h.masses
        pos = np.searchsorted(hk, keys)
        pos[pos == len(hk)] = 0
        match = hk[pos] == keys
        qm = hm[pos]
        part = np.bincount(owner, np.where(match, np.abs(masses - qm), masses), minlength=self.n)
        covered = np.bincount(owner, np.where(match, qm, 0.0), minlength=self.n)
        n_match = np.bincount(owner, match, minlength=self.n)
        # query mass on bins the stored histogram lacks
        rest = np.maximum(hm.sum() - covered, 0.0)
        rest[n_match == len(hk)] = 0.0
        return part + rest


def build_beliefs(states: np.ndarray, labels: np.ndarray, label_set=None) -> dict:
    """Partition next-state particles by observation label.

    Returns ``{label: (ParticleBelief, weight)}`` with ``weight`` the exact
    fraction of pairs carrying that label.
    """
    labels = np.asarray(labels)
    if len(labels) != len(states):
        raise ValueError("states and labels differ in length")
    if len(labels) == 0:
        raise ValueError("no particle pairs")
    uniq, inverse, counts = np.unique(labels, return_inverse=True, return_counts=True)
    if label_set is not None:
        missing = set(label_set) - set(uniq.tolist())
        if missing:
            raise ValueError(f"labels without particles: {sorted(missing)}")
        extra = set(uniq.tolist()) - set(label_set)
        if extra:
            raise ValueError(f"pairs carry undeclared labels: {sorted(extra)}")
    order = np.argsort(inverse, kind="stable")
    bounds = np.concatenate([[0], np.cumsum(counts)])
    total = len(labels)
    out = {}
    for j, lab in enumerate(uniq.tolist()):
        rows = order[bounds[j] : bounds[j + 1]]
        out[lab] = (ParticleBelief(states[rows]), Fraction(int(counts[j]), total))
    return out
