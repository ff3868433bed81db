from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pomcgs.core import (
    BoxActions,
    ContractViolation,
    DiscreteActions,
    GridDiscretizer,
    ProblemMetadata,
    child_rng,
    estimate_worst_case_rewards,
    horizon_exceeded,
    max_depth,
    step,
)
from pomcgs.envs import LightDarkModel, RockSampleModel, TigerModel

from models import ConstantModel


def tiger_meta(gamma=0.95):
    return ProblemMetadata(gamma=gamma, r_min=-100.0, r_max=10.0, action_space=DiscreteActions(3))


def _first_cut(gamma, span, eps):
    # direct iteration in exact rational arithmetic, independent of the library
    gamma, eps = Fraction(gamma), Fraction(eps)
    d, bound = 0, Fraction(span) / (1 - gamma)
    while not bound < eps:
        bound *= gamma
        d += 1
    return d


class TestHorizon:
    def test_root_not_exceeded(self):
        assert not horizon_exceeded(0, tiger_meta(), 0.01)

    def test_boundary_239_240(self):
        # 0.95**240 * 2200 = 0.00991 < 0.01, so the first cut is at 240
        meta = tiger_meta()
        cut = _first_cut("0.95", 110, "0.01")
        assert cut == 240
        assert not horizon_exceeded(cut - 1, meta, 0.01)
        assert horizon_exceeded(cut, meta, 0.01)
        assert horizon_exceeded(241, meta, 0.01)
        assert max_depth(meta, 0.01) == cut

    def test_flat_rewards_always_exceeded(self):
        meta = ProblemMetadata(gamma=0.9, r_min=3.0, r_max=3.0, action_space=DiscreteActions(1))
        assert horizon_exceeded(0, meta, 1e-9)
        assert max_depth(meta, 1e-9) == 0

    def test_rejects_nonpositive_epsilon(self):
        with pytest.raises(ValueError):
            horizon_exceeded(3, tiger_meta(), 0.0)

    @given(st.floats(0.05, 0.99), st.floats(1e-4, 10.0), st.integers(0, 400))
    def test_monotone(self, gamma, eps, delta):
        meta = ProblemMetadata(gamma=gamma, r_min=-5.0, r_max=5.0, action_space=DiscreteActions(2))
        if horizon_exceeded(delta, meta, eps):
            assert horizon_exceeded(delta + 1, meta, eps)


class TestMetadata:
    def test_gamma_range(self):
        for g in (0.0, 1.0, -0.1):
            with pytest.raises(ContractViolation):
                ProblemMetadata(gamma=g, r_min=0, r_max=1, action_space=DiscreteActions(1))

    def test_reward_order(self):
        with pytest.raises(ContractViolation):
            ProblemMetadata(gamma=0.5, r_min=2, r_max=1, action_space=DiscreteActions(1))

    def test_worst_case_inside_range(self):
        with pytest.raises(ContractViolation):
            ProblemMetadata(gamma=0.5, r_min=0, r_max=1, action_space=DiscreteActions(1),
                            worst_case_rewards=(-1.0,))


class TestActions:
    def test_discrete(self):
        sp = DiscreteActions(3)
        assert sp.contains(2) and not sp.contains(3) and not sp.contains(-1)
        assert sp.candidates() == [0, 1, 2]

    def test_box(self, rng):
        sp = BoxActions((-1.0, 0.0), (1.0, 2.0))
        a = sp.sample(rng)
        assert sp.contains(a) and len(a) == 2
        assert not sp.contains((1.5, 1.0))
        assert len(sp.grid(3)) == 9
        assert sp.candidates() is None


class TestStep:
    def test_tiger_listen(self):
        m = TigerModel()
        s2, o, r = step(m, 0, 0, np.random.default_rng(7))
        assert s2 == 0 and o in (0, 1) and r == -1.0

    def test_tiger_open_correct(self):
        m = TigerModel()
        for seed in range(20):
            s2, o, r = step(m, 0, 2, np.random.default_rng(seed))
            assert r == 10.0 and s2 in (0, 1) and o in (0, 1)

    def test_rocksample_exit_east(self):
        m = RockSampleModel(7, 8)
        for y in range(7):
            for bits in (0, 0b10110101, 255):
                s = m.encode(6, y, bits)
                s2, _, r = step(m, s, 1, np.random.default_rng(0))
                assert r == 10.0 and m.is_terminal(s2)

    def test_invalid_action_names_it(self):
        with pytest.raises(ContractViolation, match="7"):
            step(TigerModel(), 0, 7, np.random.default_rng(0))

    def test_reward_range_checked(self):
        m = ConstantModel(reward=5.0, r_min=0.0, r_max=5.0)
        m.reward = 6.0
        with pytest.raises(ContractViolation, match="outside"):
            step(m, 0, 0, np.random.default_rng(0))

    @pytest.mark.parametrize("model", [TigerModel(), RockSampleModel(4, 4), LightDarkModel()],
                             ids=["tiger", "rs44", "lightdark"])
    def test_replay_bitwise(self, model):
        meta = model.metadata()
        s = model.sample_initial(np.random.default_rng(1))
        for a in meta.action_space.candidates():
            out1 = model.step(s, a, np.random.default_rng(99))
            out2 = model.step(s, a, np.random.default_rng(99))
            assert repr(out1) == repr(out2)

    @pytest.mark.parametrize("model", [TigerModel(), RockSampleModel(4, 4), LightDarkModel()],
                             ids=["tiger", "rs44", "lightdark"])
    def test_rewards_in_range(self, model):
        meta = model.metadata()
        g = np.random.default_rng(3)
        s = model.sample_initial_batch(10_000, g)
        acts = g.integers(0, meta.action_space.n, size=10_000)
        for _ in range(3):
            s, _, r = model.step_batch(s, acts, g)
            assert r.min() >= meta.r_min and r.max() <= meta.r_max


class TestRng:
    def test_streams_reproducible_and_distinct(self):
        a = child_rng(5, 3, 1).random(4)
        b = child_rng(5, 3, 1).random(4)
        c = child_rng(5, 3, 2).random(4)
        d = child_rng(6, 3, 1).random(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c) and not np.array_equal(a, d)


class TestGrid:
    def test_clamps_to_edges(self):
        g = GridDiscretizer((-10.0,), (20.0,), (0.5,))
        assert g.n_cells == 60
        codes = g.encode(np.array([-50.0, -10.0, 19.99, 20.0, 100.0]))
        assert codes.tolist() == [0, 0, 59, 59, 59]

    def test_stable(self):
        g = GridDiscretizer((0.0, 0.0), (1.0, 2.0), (0.25, 0.5))
        x = np.random.default_rng(0).random((100, 2))
        assert np.array_equal(g.encode(x), g.encode(x.copy()))


def test_worst_case_estimate_tiger():
    w = estimate_worst_case_rewards(TigerModel(), np.random.default_rng(0), n_samples=3000)
    assert w == [-1.0, -100.0, -100.0]
