"""Finite-state controllers: structure, execution, pruning and serialization.

A controller is a set of nodes, each with an action ``psi`` and outgoing
edges ``eta[(action, label)] -> node id``.  Labels are observation indices
for discrete observations and per-(node, action) cluster indices for
continuous ones, in which case the node also stores the cluster centroids
used to label a raw observation.
"""

from __future__ import annotations

import io
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .belief import BeliefHistogram, ParticleBelief
from .core import PHASE_EXEC, child_rng, max_depth

__all__ = [
    "ActionStats",
    "BoundPair",
    "FscNode",
    "Fsc",
    "OPEN_LEAF",
    "PolicyFormatError",
    "blind_fallback_action",
    "execute_policy_step",
    "prune",
    "serialize",
    "deserialize",
    "export_dot",
    "CompiledPolicy",
    "PolicyExecutor",
    "run_episodes",
]

FORMAT_VERSION = 1


class _OpenLeaf:
    def __repr__(self):
        return "OPEN_LEAF"


OPEN_LEAF = _OpenLeaf()


class PolicyFormatError(ValueError):
    """Malformed, inconsistent or wrong-version policy file."""


@dataclass
class ActionStats:
    n: int = 0
    q: float = 0.0
    r: float = 0.0


@dataclass
class BoundPair:
    upper: float
    lower: float
    iteration: int
    seconds: float = 0.0
    nodes: int = 0

    @property
    def gap(self) -> float:
        return self.upper - self.lower


@dataclass(eq=False)
class FscNode:
    id: int
    belief: Optional[ParticleBelief] = None
    hist: Optional[BeliefHistogram] = None
    N: int = 0
    stats: dict = field(default_factory=dict)
    eta: dict = field(default_factory=dict)
    psi: object = None
    V: float = 0.0
    vmdp: float = 0.0
    centroids: dict = field(default_factory=dict)

    def best_action(self):
        """Tried action with the highest Q, earliest-tried on ties."""
        best_a, best_q = None, -np.inf
        for a, st in self.stats.items():
            if st.n > 0 and st.q > best_q:
                best_a, best_q = a, st.q
        return best_a

    def refresh(self):
        a = self.best_action()
        if a is not None:
            self.psi = a
            self.V = self.stats[a].q

    def label(self, a, o):
        """Edge label of raw observation ``o`` after action ``a``."""
        cents = self.centroids.get(a)
        if cents is None:
            return int(o)
        o = np.atleast_1d(np.asarray(o, dtype=float))
        return int(np.argmin(((cents - o) ** 2).sum(axis=1)))


class Fsc:
    """Policy graph plus the metadata needed to execute and audit it."""

    def __init__(self, gamma: float, continuous_obs: bool = False, fingerprint: str = "",
                 blind_action=None):
        self.gamma = gamma
        self.continuous_obs = continuous_obs
        self.fingerprint = fingerprint
        self.blind_action = blind_action
        self.nodes: dict[int, FscNode] = {}
        self.n0: Optional[int] = None
        self.bounds: list[BoundPair] = []
        self.info: dict[str, str] = {}
        self.worst_case_method = "table"
        self.worst_case_rewards: tuple = ()
        self._next_id = 0
        self.index = None

    def __len__(self):
        return len(self.nodes)

    def add_node(self, belief=None, hist=None, node_id=None) -> FscNode:
        if node_id is None:
            node_id = self._next_id
        if node_id in self.nodes:
            raise ValueError(f"duplicate node id {node_id}")
        node = FscNode(id=node_id, belief=belief, hist=hist)
        self.nodes[node_id] = node
        self._next_id = max(self._next_id, node_id + 1)
        if self.n0 is None:
            self.n0 = node_id
        return node

    def check(self):
        """Raise ``PolicyFormatError`` if an edge dangles or ``n0`` is missing."""
        if self.n0 not in self.nodes:
            raise PolicyFormatError(f"start node {self.n0} is missing")
        for node in self.nodes.values():
            for (a, lab), t in node.eta.items():
                if t not in self.nodes:
                    raise PolicyFormatError(
                        f"edge {node.id} {_fmt_action(a)} {lab} -> {t} points to a missing node"
                    )


def blind_fallback_action(meta):
    """Action maximising the worst-case instant reward; lowest order wins ties."""
    candidates = meta.action_space.candidates()
    if candidates is None:
        raise ValueError("continuous action space without a declared candidate set")
    table = meta.worst_case_rewards
    if table is None or len(table) != len(candidates):
        raise ValueError("worst-case reward table missing or misaligned with the candidate actions")
    best = int(np.argmax(np.asarray(table, dtype=float)))
    return candidates[best]


def execute_policy_step(fsc: Fsc, node_id, o):
    """Next node after observing ``o`` in ``node_id``, or ``OPEN_LEAF``."""
    try:
        node = fsc.nodes[node_id]
    except KeyError:
        raise KeyError(f"unknown node id {node_id}") from None
    if node.psi is None:
        return OPEN_LEAF
    return node.eta.get((node.psi, node.label(node.psi, o)), OPEN_LEAF)


def _copy_node(node: FscNode, eta: dict) -> FscNode:
    return FscNode(
        id=node.id, belief=node.belief, hist=node.hist, N=node.N,
        stats={a: ActionStats(s.n, s.q, s.r) for a, s in node.stats.items()},
        eta=eta, psi=node.psi, V=node.V, vmdp=node.vmdp,
        centroids=dict(node.centroids),
    )


def reachable(fsc: Fsc) -> list:
    """Node ids reachable from ``n0`` along edges of each node's ``psi``."""
    seen = {fsc.n0}
    queue = deque([fsc.n0])
    while queue:
        node = fsc.nodes[queue.popleft()]
        if node.psi is None:
            continue
        for (a, _), t in sorted(node.eta.items(), key=lambda kv: kv[0][1]):
            if a == node.psi and t not in seen:
                seen.add(t)
                queue.append(t)
    return sorted(seen)


def prune(fsc: Fsc) -> Fsc:
    """Copy of ``fsc`` restricted to nodes the executed policy can reach.

    Per-action statistics of kept nodes survive; edges into removed nodes
    are dropped.
    """
    from .index import BeliefIndex

    keep = set(reachable(fsc))
    out = Fsc(fsc.gamma, fsc.continuous_obs, fsc.fingerprint, fsc.blind_action)
    out.bounds = list(fsc.bounds)
    out.info = dict(fsc.info)
    out.worst_case_method = fsc.worst_case_method
    out.worst_case_rewards = fsc.worst_case_rewards
    for node_id in sorted(keep):
        node = fsc.nodes[node_id]
        eta = {k: t for k, t in node.eta.items() if t in keep}
        out.nodes[node_id] = _copy_node(node, eta)
    out.n0 = fsc.n0
    out._next_id = fsc._next_id
    if all(n.hist is not None for n in out.nodes.values()):
        out.index = BeliefIndex.from_entries((i, out.nodes[i].hist) for i in sorted(out.nodes))
    return out


# ---------------------------------------------------------------- file format

def _fmt_float(x) -> str:
    return "%.17g" % float(x)


def _fmt_action(a) -> str:
    if a is None:
        return "-"
    if isinstance(a, tuple):
        return "c:" + ",".join(_fmt_float(x) for x in a)
    return str(int(a))


def _parse_action(tok: str):
    if tok == "-":
        return None
    if tok.startswith("c:"):
        return tuple(float(x) for x in tok[2:].split(","))
    return int(tok)


def serialize(fsc: Fsc, include_beliefs: bool = False) -> str:
    """Render the controller as versioned line-oriented text."""
    if not fsc.nodes:
        raise ValueError("refusing to serialize an FSC without nodes")
    fsc.check()
    buf = io.StringIO()
    w = buf.write
    w(f"pomcgs-policy {FORMAT_VERSION}\n")
    w(f"fingerprint {fsc.fingerprint}\n")
    w(f"gamma {_fmt_float(fsc.gamma)}\n")
    w(f"observations {'continuous' if fsc.continuous_obs else 'discrete'}\n")
    w(f"n0 {fsc.n0}\n")
    w(f"blind {_fmt_action(fsc.blind_action)}\n")
    w("worstcase " + " ".join([fsc.worst_case_method] + [_fmt_float(x) for x in fsc.worst_case_rewards]) + "\n")
    for key in sorted(fsc.info):
        w(f"info {key} {fsc.info[key]}\n")
    for b in fsc.bounds:
        w(f"bound {b.iteration} {_fmt_float(b.upper)} {_fmt_float(b.lower)} {b.nodes}\n")
    for node_id in sorted(fsc.nodes):
        node = fsc.nodes[node_id]
        w(f"node {node_id} psi={_fmt_action(node.psi)} N={node.N} V={_fmt_float(node.V)}\n")
        for a, st in node.stats.items():
            w(f"stat {node_id} {_fmt_action(a)} N={st.n} Q={_fmt_float(st.q)} R={_fmt_float(st.r)}\n")
        for (a, lab), t in sorted(node.eta.items(), key=lambda kv: (_fmt_action(kv[0][0]), kv[0][1])):
            w(f"edge {node_id} {_fmt_action(a)} {lab} -> {t}\n")
        for a, cents in node.centroids.items():
            for lab, c in enumerate(np.atleast_2d(cents)):
                w(f"centroid {node_id} {_fmt_action(a)} {lab} " + " ".join(_fmt_float(x) for x in c) + "\n")
        if include_beliefs and node.hist is not None:
            w(f"belief {node_id} " + " ".join(
                f"{k}:{_fmt_float(m)}" for k, m in zip(node.hist.keys.tolist(), node.hist.masses.tolist())
            ) + "\n")
    return buf.getvalue()


def _kv(tok: str, key: str) -> str:
    if not tok.startswith(key + "="):
        raise ValueError(f"expected {key}=..., got {tok!r}")
    return tok[len(key) + 1:]


def deserialize(text: str) -> Fsc:
    """Parse a policy file; raises ``PolicyFormatError`` on any defect."""
    lines = text.splitlines()
    if not lines:
        raise PolicyFormatError("empty policy file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "pomcgs-policy":
        raise PolicyFormatError("missing pomcgs-policy header")
    if head[1] != str(FORMAT_VERSION):
        raise PolicyFormatError(f"unsupported policy format version {head[1]} (expected {FORMAT_VERSION})")
    header = {}
    info, bounds = {}, []
    nodes: dict[int, FscNode] = {}
    centroids: dict = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        kind = parts[0]
        try:
            if kind in ("fingerprint", "gamma", "observations", "n0", "blind", "worstcase"):
                header[kind] = line[len(kind) + 1:]
            elif kind == "info":
                info[parts[1]] = line.split(" ", 2)[2] if len(parts) > 2 else ""
            elif kind == "bound":
                bounds.append(BoundPair(upper=float(parts[2]), lower=float(parts[3]),
                                        iteration=int(parts[1]), nodes=int(parts[4])))
            elif kind == "node":
                node_id = int(parts[1])
                if node_id in nodes:
                    raise ValueError(f"duplicate node {node_id}")
                nodes[node_id] = FscNode(
                    id=node_id, psi=_parse_action(_kv(parts[2], "psi")),
                    N=int(_kv(parts[3], "N")), V=float(_kv(parts[4], "V")),
                )
            elif kind == "stat":
                nodes[int(parts[1])].stats[_parse_action(parts[2])] = ActionStats(
                    int(_kv(parts[3], "N")), float(_kv(parts[4], "Q")), float(_kv(parts[5], "R"))
                )
            elif kind == "edge":
                if len(parts) != 6 or parts[4] != "->":
                    raise ValueError("malformed edge record")
                nodes[int(parts[1])].eta[(_parse_action(parts[2]), int(parts[3]))] = int(parts[5])
            elif kind == "centroid":
                key = (int(parts[1]), _parse_action(parts[2]))
                centroids.setdefault(key, []).append((int(parts[3]), [float(x) for x in parts[4:]]))
            elif kind == "belief":
                pairs = [tok.split(":") for tok in parts[2:]]
                nodes[int(parts[1])].hist = BeliefHistogram(
                    [int(k) for k, _ in pairs], [float(m) for _, m in pairs]
                )
            else:
                raise ValueError(f"unknown record {kind!r}")
        except KeyError as exc:
            raise PolicyFormatError(f"line {lineno}: record refers to undeclared node {exc}") from None
        except (IndexError, ValueError) as exc:
            raise PolicyFormatError(f"line {lineno}: {exc}") from None
    for key in ("fingerprint", "gamma", "n0", "blind"):
        if key not in header:
            raise PolicyFormatError(f"header lacks {key!r}")
    if not nodes:
        raise PolicyFormatError("policy file declares no nodes")
    for (node_id, a), rows in centroids.items():
        if node_id not in nodes:
            raise PolicyFormatError(f"centroid for undeclared node {node_id}")
        rows.sort()
        if [lab for lab, _ in rows] != list(range(len(rows))):
            raise PolicyFormatError(f"centroid labels of node {node_id} are not 0..K-1")
        nodes[node_id].centroids[a] = np.array([c for _, c in rows])
    fsc = Fsc(float(header["gamma"]), header.get("observations", "discrete") == "continuous",
              header["fingerprint"], _parse_action(header["blind"]))
    wc = header.get("worstcase", "table").split()
    fsc.worst_case_method = wc[0]
    fsc.worst_case_rewards = tuple(float(x) for x in wc[1:])
    fsc.info = info
    fsc.bounds = bounds
    fsc.nodes = nodes
    fsc.n0 = int(header["n0"])
    fsc._next_id = max(nodes) + 1
    fsc.check()
    return fsc


def save(fsc: Fsc, path, include_beliefs: bool = False):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize(fsc, include_beliefs=include_beliefs))


def load(path) -> Fsc:
    with open(path, encoding="utf-8") as fh:
        return deserialize(fh.read())


def export_dot(fsc: Fsc) -> str:
    """Graphviz rendering of the policy edges; output is deterministic."""
    lines = ["digraph fsc {"]
    for node_id in sorted(fsc.nodes):
        node = fsc.nodes[node_id]
        extra = ", peripheries=2" if node_id == fsc.n0 else ""
        lines.append(f'  n{node_id} [label="{node_id}/{_fmt_action(node.psi)}/{node.N}"{extra}];')
    for node_id in sorted(fsc.nodes):
        node = fsc.nodes[node_id]
        if node.psi is None:
            continue
        edges = sorted((lab, t) for (a, lab), t in node.eta.items() if a == node.psi)
        for lab, t in edges:
            lines.append(f'  n{node_id} -> n{t} [label="{lab}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- execution

class PolicyExecutor:
    """Step-by-step execution with a permanent blind fallback at open leaves."""

    def __init__(self, fsc: Fsc):
        self.fsc = fsc
        self.reset()

    def reset(self):
        self.node = self.fsc.n0
        self.fallback = False

    def action(self):
        if self.fallback:
            return self.fsc.blind_action
        psi = self.fsc.nodes[self.node].psi
        if psi is None:
            self.fallback = True
            return self.fsc.blind_action
        return psi

    def observe(self, o):
        if self.fallback:
            return
        nxt = execute_policy_step(self.fsc, self.node, o)
        if nxt is OPEN_LEAF:
            self.fallback = True
        else:
            self.node = nxt


class CompiledPolicy:
    """Dense array view of an FSC for vectorized rollouts along ``psi``."""

    def __init__(self, fsc: Fsc):
        ids = sorted(fsc.nodes)
        self.ids = np.array(ids, dtype=np.int64)
        pos = {nid: i for i, nid in enumerate(ids)}
        self.start = pos[fsc.n0]
        n = len(ids)
        nodes = [fsc.nodes[i] for i in ids]
        self.N = np.array([nd.N for nd in nodes], dtype=np.int64)
        self.vmdp = np.array([nd.vmdp for nd in nodes], dtype=float)
        self.has_psi = np.array([nd.psi is not None for nd in nodes])
        self.continuous_actions = any(isinstance(nd.psi, tuple) for nd in nodes)
        if self.continuous_actions:
            dim = len(next(nd.psi for nd in nodes if nd.psi is not None))
            self.psi = np.zeros((n, dim))
            for i, nd in enumerate(nodes):
                if nd.psi is not None:
                    self.psi[i] = nd.psi
        else:
            self.psi = np.array([-1 if nd.psi is None else int(nd.psi) for nd in nodes], dtype=np.int64)
        self.continuous_obs = fsc.continuous_obs
        edges = [{lab: pos[t] for (a, lab), t in nd.eta.items() if a == nd.psi} if nd.psi is not None else {}
                 for nd in nodes]
        width = max([max(e) + 1 for e in edges if e] + [1])
        self.next = np.full((n, width), -1, dtype=np.int64)
        for i, e in enumerate(edges):
            for lab, t in e.items():
                self.next[i, lab] = t
        if self.continuous_obs:
            cents = [nd.centroids.get(nd.psi) if nd.psi is not None else None for nd in nodes]
            dim = max([c.shape[1] for c in cents if c is not None] + [1])
            self.centroids = np.full((n, width, dim), np.inf)
            for i, c in enumerate(cents):
                if c is not None:
                    self.centroids[i, : len(c)] = c

    def actions_for(self, idx):
        return self.psi[idx]

    def successors(self, idx, obs) -> np.ndarray:
        """Dense successor index per row, ``-1`` where no edge exists."""
        if self.continuous_obs:
            o = np.asarray(obs, dtype=float).reshape(len(idx), -1)
            d2 = ((self.centroids[idx] - o[:, None, :]) ** 2).sum(axis=2)
            d2 = np.where(np.isnan(d2), np.inf, d2)
            lab = np.argmin(d2, axis=1)
            return self.next[idx, lab]
        lab = np.asarray(obs, dtype=np.int64)
        ok = (lab >= 0) & (lab < self.next.shape[1])
        out = np.full(len(idx), -1, dtype=np.int64)
        out[ok] = self.next[idx[ok], lab[ok]]
        return out


def run_episodes(fsc: Fsc, model, n_episodes: int, seed: int = 0, epsilon: float = 0.01,
                 chunk: int = 4096) -> dict:
    """Execute the policy on the true model, falling back to the blind action at open leaves.

    Episodes stop at terminal states or once the residual-return bound drops
    below ``epsilon``.  Returns per-episode arrays ``returns``,
    ``open_leaf`` (fallback triggered) and ``lengths``.
    """
    meta = model.metadata()
    depth = max_depth(meta, epsilon)
    pol = CompiledPolicy(fsc)
    blind = fsc.blind_action
    rets, hits, lens = [], [], []
    for c, start in enumerate(range(0, n_episodes, chunk)):
        m = min(chunk, n_episodes - start)
        rng = child_rng(seed, PHASE_EXEC, c)
        s = model.sample_initial_batch(m, rng)
        node = np.full(m, pol.start, dtype=np.int64)
        fallback = np.zeros(m, dtype=bool)
        hit = np.zeros(m, dtype=bool)
        ret = np.zeros(m)
        length = np.zeros(m, dtype=np.int64)
        alive = ~model.is_terminal_batch(s)
        disc = 1.0
        for _ in range(depth):
            idx = np.flatnonzero(alive)
            if len(idx) == 0:
                break
            nd = node[idx]
            fb = fallback[idx] | ~pol.has_psi[nd]
            newly = fb & ~fallback[idx]
            fallback[idx[newly]] = True
            hit[idx[newly]] = True
            if pol.continuous_actions:
                acts = pol.psi[nd].copy()
                if fb.any():
                    acts[fb] = blind
            else:
                acts = np.where(fb, blind if blind is not None else 0, pol.psi[nd])
            s2, o, r = model.step_batch(s[idx], acts, rng)
            ret[idx] += disc * r
            length[idx] += 1
            s[idx] = s2
            act_rows = ~fb
            if act_rows.any():
                nxt = pol.successors(nd[act_rows], o[act_rows])
                rows = idx[act_rows]
                miss = nxt < 0
                node[rows[~miss]] = nxt[~miss]
                fallback[rows[miss]] = True
                hit[rows[miss]] = True
            alive[idx] = ~model.is_terminal_batch(s2)
            disc *= meta.gamma
        rets.append(ret)
        hits.append(hit)
        lens.append(length)
    return {
        "returns": np.concatenate(rets) if rets else np.empty(0),
        "open_leaf": np.concatenate(hits) if hits else np.empty(0, bool),
        "lengths": np.concatenate(lens) if lens else np.empty(0, np.int64),
    }
