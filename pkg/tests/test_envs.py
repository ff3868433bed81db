import numpy as np
import pytest

from pomcgs.envs import ConfigError, LightDarkModel, RockSampleModel, TigerModel, exact_tiger_value, make_env
from pomcgs.envs.rocksample import TERMINAL

TIGER_V95 = 19.37136789596317


@pytest.mark.parametrize("n,k,count", [(7, 8, 12_544), (11, 11, 247_808), (15, 15, 7_372_800)])
def test_rocksample_state_counts(n, k, count):
    assert make_env("rocksample", n=n, k=k).n_states == count


def test_tiger_shape():
    m = make_env("tiger")
    meta = m.metadata()
    assert m.n_states == 2 and meta.action_space.n == 3 and meta.n_observations == 2


class TestTiger:
    def test_tables_row_stochastic(self):
        T, O, R, b0 = TigerModel().explicit_model()
        assert np.allclose(T.sum(axis=2), 1) and np.allclose(O.sum(axis=2), 1)
        assert b0.sum() == 1 and R.shape == (2, 3)

    def test_listen_accuracy(self):
        m = TigerModel()
        g = np.random.default_rng(0)
        s = m.sample_initial_batch(100_000, g)
        _, o, r = m.step_batch(s, np.zeros_like(s), g)
        acc = np.mean(o == s)
        assert 0.84 <= acc <= 0.86
        assert np.all(r == -1.0)

    def test_sampler_matches_tables_chi2(self):
        # (s2, o) counts per (a, s) against the explicit tables
        m = TigerModel()
        T, O, _, _ = m.explicit_model()
        g = np.random.default_rng(1)
        n = 100_000
        for a in range(3):
            s = m.sample_initial_batch(n, g)
            s2, o, _ = m.step_batch(s, np.full(n, a), g)
            for s0 in (0, 1):
                sel = s == s0
                obs = np.bincount(2 * s2[sel] + o[sel], minlength=4)
                want = (T[a, s0][:, None] * O[a]).ravel() * sel.sum()
                keep = want > 0
                chi2 = ((obs[keep] - want[keep]) ** 2 / want[keep]).sum()
                # 99.9% quantile of chi-square with 3 degrees of freedom
                assert chi2 < 16.27, (a, s0, chi2)

    def test_scalar_and_batch_agree_in_law(self):
        m = TigerModel()
        g = np.random.default_rng(2)
        hits = sum(m.step(0, 0, g)[1] == 0 for _ in range(20_000)) / 20_000
        assert abs(hits - 0.85) < 0.01


class TestExactTiger:
    def test_gamma_zero(self):
        assert exact_tiger_value(gamma=0.0) == pytest.approx(-1.0)

    def test_pinned(self):
        assert exact_tiger_value(0.95) == pytest.approx(TIGER_V95, abs=1e-9)

    def test_grid_converged(self):
        coarse = exact_tiger_value(0.95, grid_step=0.002)
        assert abs(coarse - TIGER_V95) < 0.05

    def test_deterministic(self):
        assert exact_tiger_value(0.95) == exact_tiger_value(0.95)


class TestRockSample:
    def test_check_accuracy_at_rock(self):
        m = RockSampleModel(4, 4)
        g = np.random.default_rng(0)
        rx, ry = m.rock_xy[0]
        s = np.full(100_000, m.encode(int(rx), int(ry), 0b0101))
        _, o, _ = m.step_batch(s, np.full(len(s), 5), g)
        assert np.all(o == o[0])
        assert m.check_efficiency(0) == 1.0

    def test_check_accuracy_far(self):
        # a 330-cell grid leaves room for a robot exactly 200 cells away (120, 160)
        m = RockSampleModel(330, 1, layout_seed=3)
        rx, ry = (int(v) for v in m.rock_xy[0])
        x = rx + 120 if rx + 120 < m.n else rx - 120
        y = ry + 160 if ry + 160 < m.n else ry - 160
        assert np.hypot(x - rx, y - ry) == 200.0
        g = np.random.default_rng(0)
        s = np.full(100_000, m.encode(x, y, 1))
        _, o, _ = m.step_batch(s, np.full(len(s), 5), g)
        acc = np.mean(o == 1)  # OBS_GOOD is reported for a good rock when correct
        assert 0.49 <= acc <= 0.52

    def test_sample_spoils_good_rock(self):
        m = RockSampleModel(4, 4)
        rx, ry = (int(v) for v in m.rock_xy[2])
        s = m.encode(rx, ry, 0b0100)
        s2, _, r = m.step(s, 4, np.random.default_rng(0))
        assert r == 10.0 and m.decode(s2)[2] == 0
        _, _, r = m.step(s2, 4, np.random.default_rng(0))
        assert r == -10.0

    def test_batch_matches_scalar(self):
        m = RockSampleModel(4, 4)
        g = np.random.default_rng(5)
        s = g.integers(0, m.n_states, size=500)
        a = g.integers(0, 5, size=500)  # deterministic actions
        s2, o, r = m.step_batch(s, a, g)
        for i in range(500):
            t = m.step(int(s[i]), int(a[i]), g)
            assert (s2[i], o[i], r[i]) == t

    def test_terminal_absorbs(self):
        m = RockSampleModel(4, 4)
        assert m.step(TERMINAL, 0, np.random.default_rng(0)) == (TERMINAL, 0, 0.0)
        assert m.is_terminal(TERMINAL)

    def test_layout_deterministic(self):
        a, b = RockSampleModel(7, 8, layout_seed=4), RockSampleModel(7, 8, layout_seed=4)
        assert np.array_equal(a.rock_cells, b.rock_cells)
        assert a.start[0] * a.n + a.start[1] not in a.rock_cells.tolist()


class TestLightDark:
    def test_noise_minimal_at_light(self):
        m = LightDarkModel()
        assert m.obs_std(10.0) <= 0.02
        ys = np.linspace(-10, 20, 61)
        assert np.argmin(m.obs_std(ys)) == np.searchsorted(ys, 10.0)

    def test_declare_rewards(self):
        m = LightDarkModel()
        g = np.random.default_rng(0)
        s2, _, r = m.step(0.5, 1, g)
        assert np.isnan(s2) and r == 100.0
        assert m.step(3.0, 1, g)[2] == -100.0

    def test_initial_truncated(self):
        m = LightDarkModel()
        s = m.sample_initial_batch(50_000, np.random.default_rng(0))
        assert s.min() >= -10 and s.max() <= 20
        assert abs(s.mean() - 2.0) < 0.05

    def test_discretizer(self):
        m = LightDarkModel()
        assert m.grid.n_cells == 60
        codes = m.discretize_batch(np.array([-10.0, 0.0, 19.9, np.nan]))
        assert codes.tolist() == [0, 20, 59, m.terminal_code]

    def test_observation_noise_sampled(self):
        m = LightDarkModel()
        g = np.random.default_rng(0)
        # start just below the light so that one move up lands on it (plus motion noise)
        y2, o, _ = m.step_batch(np.full(100_000, 9.0), np.full(100_000, 2), g)
        near = np.abs(y2 - 10.0) < 0.01
        assert near.sum() > 1000
        assert np.std((o - y2)[near]) <= 0.02


class TestMakeEnv:
    def test_unknown(self):
        with pytest.raises(ConfigError, match="unknown environment"):
            make_env("laser-tag")

    def test_unknown_param(self):
        with pytest.raises(ConfigError, match="no parameter"):
            make_env("tiger", n=3)

    def test_bad_value(self):
        with pytest.raises(ConfigError):
            make_env("rocksample", n="seven")
        with pytest.raises(ConfigError):
            make_env("rocksample", n=2, k=9)

    def test_strings_coerced(self):
        m = make_env("rocksample", n="5", k="3", layout_seed="2")
        assert m.n_states == 25 * 8
