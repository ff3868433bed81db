"""End-to-end acceptance checks.

Each test prints one ``PASS``/``FAIL`` line with the measured quantities
and then asserts the criterion at its stated tolerance.  The long
RockSample(7, 8) reproduction runs only when ``POMCGS_LONG=1`` is set;
otherwise its line reads ``SKIP`` and the desk-scale fallback decides.
Wall time on one core is roughly 40 minutes.
"""

import itertools
import math
import os
from collections import defaultdict

import numpy as np
import pytest

from pomcgs.belief import BeliefHistogram, l1_distance
from pomcgs.clustering import assign, kmeans
from pomcgs.envs import LightDarkModel, RockSampleModel, TigerModel, exact_tiger_value
from pomcgs.fsc import PolicyExecutor, deserialize, prune, run_episodes, serialize
from pomcgs.heuristics import QLearningConfig, blind_value, train_vmdp
from pomcgs.index import BeliefIndex, LinearIndex
from pomcgs.solver import Planner, SolverConfig, solve

from models import random_histogram

pytestmark = pytest.mark.acceptance

DESK_SEEDS = range(10)
DESK_BUDGET = 90.0


@pytest.fixture
def report(capsys):
    def emit(tag, ok, detail):
        status = "PASS" if ok else "FAIL"
        with capsys.disabled():
            print(f"\n[{status}] {tag}: {detail}", flush=True)
        return ok

    return emit


def gaps_of(fsc):
    return [b.upper - b.lower for b in fsc.bounds]


def monotone_tail(gaps, n=3):
    tail = gaps[-n:]
    return len(tail) == n and all(b <= a for a, b in zip(tail, tail[1:]))


# ----------------------------------------------------------------------------- 1


def test_c1_tiger_oracle(report):
    model = TigerModel()
    exact = exact_tiger_value(0.95)
    # UCB constant scaled to the reward span (10 - (-100)); see README
    cfg = SolverConfig(nb_particles=5000, xi=0.05, nb_sim=1000, time_budget=300.0, c=110.0, seed=0)
    fsc = solve(model, cfg)
    b = fsc.bounds[-1]
    ok = abs(b.lower - exact) <= 0.5 and b.upper >= b.lower
    report("C1 Tiger oracle optimality", ok,
           f"lower={b.lower:.4f} upper={b.upper:.4f} exact={exact:.4f} "
           f"|lower-exact|={abs(b.lower - exact):.4f} (tol 0.5) iterations={b.iteration} nodes={len(fsc)}")
    assert ok


# ----------------------------------------------------------------------------- 2


def test_c2_rocksample_78_long(report):
    if os.environ.get("POMCGS_LONG") != "1":
        report("C2 RS(7,8) 1h x 10 seeds", True, "SKIP (set POMCGS_LONG=1 for the long run)")
        pytest.skip("long RockSample(7, 8) run not requested")
    model = RockSampleModel(7, 8)
    vt = train_vmdp(model, QLearningConfig(), np.random.default_rng(0))
    means = []
    for seed in range(10):
        cfg = SolverConfig.preset("small", "rocksample", time_budget=3600.0, seed=seed)
        fsc = solve(model, cfg, vtable=vt)
        means.append(run_episodes(fsc, model, 100_000, seed=seed)["returns"].mean())
    m = float(np.mean(means))
    ok = abs(m - 21.13) <= 2.2
    report("C2 RS(7,8) 1h x 10 seeds", ok, f"mean return {m:.3f} (target 21.13 +/- 2.2) per seed {np.round(means, 2)}")
    assert ok


@pytest.fixture(scope="module")
def rs44_table(rs44):
    # heuristic trained with the default Q-learning settings, once per module
    return train_vmdp(rs44, QLearningConfig(), np.random.default_rng(0))


@pytest.fixture(scope="module")
def rs44_runs(rs44, rs44_table):
    runs = []
    for seed in DESK_SEEDS:
        cfg = SolverConfig.preset("small", "rocksample", time_budget=DESK_BUDGET, seed=seed)
        runs.append(solve(rs44, cfg, vtable=rs44_table))
    return runs


def test_c2_rocksample_44_desk(report, rs44, rs44_runs):
    blind = blind_value(rs44.metadata())
    lows = [f.bounds[-1].lower for f in rs44_runs]
    above = [lo >= blind + 5 for lo in lows]
    mono = [monotone_tail(gaps_of(f)) for f in rs44_runs]
    good = sum(a and m for a, m in zip(above, mono))
    ok = good >= 8
    tails = "; ".join(",".join(f"{g:.3f}" for g in gaps_of(f)[-3:]) for f in rs44_runs)
    report("C2 RS(4,4) desk fallback", ok,
           f"{good}/10 seeds pass (need 8); lower>=blind+5 in {sum(above)}/10 "
           f"(blind={blind:.2f}, lowers={np.round(lows, 2).tolist()}); "
           f"monotone last-3 gap in {sum(mono)}/10 [{tails}]")
    assert ok


# ----------------------------------------------------------------------------- 3


def test_c3_lightdark(report, lightdark):
    vt = train_vmdp(lightdark, QLearningConfig(), np.random.default_rng(0))
    cfg = SolverConfig.preset("small", "lightdark", time_budget=900.0, seed=0)
    fsc = solve(lightdark, cfg, vtable=vt)
    b = fsc.bounds[-1]
    blind = blind_value(lightdark.metadata())
    ok = b.lower > 0 and b.lower - blind >= 50
    report("C3 Light Dark trend", ok,
           f"lower={b.lower:.3f} upper={b.upper:.3f} blind={blind:.2f} margin={b.lower - blind:.3f} (need >0 and >=50) "
           f"iterations={b.iteration} nodes_before_prune={b.nodes}")
    assert ok


# ----------------------------------------------------------------------------- 4


def test_c4_particles(report, rs44, rs44_table):
    lows = {}
    for n in (10_000, 100):
        lows[n] = []
        for seed in range(5):
            cfg = SolverConfig.preset("small", "rocksample", nb_particles=n, time_budget=60.0, seed=seed)
            lows[n].append(solve(rs44, cfg, vtable=rs44_table).bounds[-1].lower)
    hi, lo = float(np.mean(lows[10_000])), float(np.mean(lows[100]))
    ok = hi >= lo
    report("C4a particles 1e4 vs 1e2", ok,
           f"mean lower {hi:.3f} (1e4) vs {lo:.3f} (1e2); per seed {np.round(lows[10_000], 2).tolist()} "
           f"vs {np.round(lows[100], 2).tolist()}")
    assert ok


def _iterations_to_gap(model, vtable, xi, seed, target=1.0, budget=180.0):
    cfg = SolverConfig.preset("small", "rocksample", xi=xi, time_budget=budget, seed=seed)
    fsc = solve(model, cfg, vtable=vtable, callback=lambda bp, _: bp.upper - bp.lower < target)
    hit = [b.iteration for b in fsc.bounds if b.upper - b.lower < target]
    return hit[0] if hit else math.inf


def test_c4_xi(report, rs44, rs44_table):
    its = {xi: [_iterations_to_gap(rs44, rs44_table, xi, s) for s in range(5)] for xi in (0.3, 0.1)}
    wins = sum(a <= b for a, b in zip(its[0.3], its[0.1]))
    ok = wins >= 4
    report("C4b larger xi converges sooner", ok,
           f"xi=0.3 <= xi=0.1 in {wins}/5 seeds (need 4); iterations to gap<1: {its[0.3]} vs {its[0.1]}")
    assert ok


# ----------------------------------------------------------------------------- 5


def test_c5_metric_axioms(report):
    g = np.random.default_rng(0)
    bad = 0
    for _ in range(1000):
        x, y, z = (random_histogram(g, n_bins=20, max_support=10) for _ in range(3))
        dxy, dyx = l1_distance(x, y), l1_distance(y, x)
        bad += not (l1_distance(x, x) == 0.0 and 0 <= dxy <= 2 + 1e-12 and abs(dxy - dyx) <= 1e-12
                    and l1_distance(x, z) <= dxy + l1_distance(y, z) + 1e-12)
    report("C5 metric axioms (1e3 triples)", bad == 0, f"{bad} violations")
    assert bad == 0


def test_c5_index_equivalence(report):
    mismatches = 0
    for seq in range(100):
        g = np.random.default_rng(seq)
        tree, ref = BeliefIndex(), LinearIndex()
        c1, c2 = itertools.count(), itertools.count()
        xi = float(g.choice([0.05, 0.1, 0.3]))
        for _ in range(200):
            k = int(g.integers(1, 5))
            keys = np.sort(g.choice(8, size=k, replace=False))
            m = g.integers(1, 5, size=k).astype(float)
            h = BeliefHistogram(keys, m / m.sum())
            mismatches += tree.search_or_insert(h, xi, lambda: next(c1)) != \
                ref.search_or_insert(h, xi, lambda: next(c2))
    report("C5 index vs linear scan (100 sequences)", mismatches == 0, f"{mismatches} mismatching answers")
    assert mismatches == 0


def test_c5_bound_sandwich(report, tiger, tiger_vtable):
    p = Planner(tiger, SolverConfig(nb_particles=2000, nb_sim=30, nb_eval=1000, c=110.0), vtable=tiger_vtable)
    p.update_fsc(1)
    bp, up, lo = p.evaluate(1, per_trajectory=True)
    bad = int(np.sum(up < lo))
    ok = bad == 0 and len(up) == 1000 and bp.upper >= bp.lower
    report("C5 per-trajectory bound sandwich (1e3)", ok,
           f"{bad} violations; {int(np.sum(up > lo))} trajectories with a strict gap; nodes={len(p.fsc)}")
    assert ok


def test_c5_prune_traces(report, rs44, rs44_table):
    cfg = SolverConfig.preset("small", "rocksample", nb_particles=1000, nb_sim=300, nb_eval=5000,
                              max_iterations=2, seed=0)
    pruned, planner = solve(rs44, cfg, vtable=rs44_table, return_planner=True)
    full = planner.fsc
    differ = 0
    for ep in range(100):
        traces = []
        for f in (full, pruned):
            g = np.random.default_rng(ep)
            ex, s, tr = PolicyExecutor(f), rs44.sample_initial(g), []
            for _ in range(200):
                a = ex.action()
                s, o, r = rs44.step(s, a, g)
                ex.observe(o)
                tr.append((a, o, r, ex.node, ex.fallback))
            traces.append(tr)
        differ += traces[0] != traces[1]
    report("C5 pruning trace preservation (100 episodes)", differ == 0,
           f"{differ} differing traces; nodes {len(full)} -> {len(pruned)}")
    assert differ == 0


def test_c5_kmeans(report):
    bad_mono = bad_fix = 0
    for seed in range(100):
        g = np.random.default_rng(seed)
        x = g.normal(size=(int(g.integers(5, 400)), int(g.integers(1, 4)))) * 5
        hist = []
        labels, c = kmeans(x, int(g.integers(1, 12)), g, history=hist)
        bad_mono += any(b > a + 1e-9 * max(1.0, a) for a, b in zip(hist, hist[1:]))
        bad_fix += not np.array_equal(assign(x, c), labels)
    ok = bad_mono == 0 and bad_fix == 0
    report("C5 k-means monotone objective + fixpoint (1e2 sets)", ok,
           f"{bad_mono} non-monotone histories, {bad_fix} non-fixpoint assignments")
    assert ok


def test_c5_incremental_mean(report, tiger, tiger_vtable):
    p = Planner(tiger, SolverConfig(nb_particles=2000, nb_sim=500, c=110.0), vtable=tiger_vtable)
    p.trace = []
    p.update_fsc(1)
    p.update_fsc(2)
    samples = defaultdict(list)
    for nid, a, x in p.trace:
        samples[(nid, a)].append(x)
    worst = max(abs(p.fsc.nodes[n].stats[a].q - math.fsum(xs) / len(xs)) for (n, a), xs in samples.items())
    counts_ok = all(len(xs) == p.fsc.nodes[n].stats[a].n for (n, a), xs in samples.items())
    ok = worst <= 1e-9 and counts_ok
    report("C5 incremental vs batch mean Q", ok, f"max |diff| = {worst:.3e} over {len(samples)} (node, action) pairs")
    assert ok


def test_c5_roundtrip_and_determinism(report, tiger, tiger_vtable):
    cfg = SolverConfig(nb_particles=2000, xi=0.05, nb_sim=300, nb_eval=20_000, c=110.0, max_iterations=3, seed=5)
    a = serialize(solve(tiger, cfg, vtable=tiger_vtable))
    b = serialize(solve(tiger, cfg, vtable=tiger_vtable))
    par = SolverConfig(**{**cfg.__dict__, "n_jobs": 3})
    c = serialize(solve(tiger, par, vtable=tiger_vtable))
    round_trip = serialize(deserialize(a)) == a
    ok = round_trip and a == b == c
    report("C5 policy round-trip + byte-identical solves", ok,
           f"round-trip {'identical' if round_trip else 'DIFFERS'}; serial twice {'identical' if a == b else 'DIFFER'}; "
           f"parallel {'identical' if a == c else 'DIFFERS'}")
    assert ok


# ----------------------------------------------------------------------------- 6


def test_c6_state_counts(report):
    got = [RockSampleModel(n, k).n_states for n, k in ((7, 8), (11, 11), (15, 15))]
    ok = got == [12_544, 247_808, 7_372_800]
    report("C6 RockSample state counts", ok, f"{got} (want [12544, 247808, 7372800])")
    assert ok
