import numpy as np
import pytest

from pomcgs.envs import LightDarkModel, RockSampleModel, TigerModel
from pomcgs.heuristics import QLearningConfig, train_vmdp


@pytest.fixture(scope="session")
def tiger():
    return TigerModel()


@pytest.fixture(scope="session")
def tiger_vtable(tiger):
    return train_vmdp(tiger, QLearningConfig(episodes=3000), np.random.default_rng(0))


@pytest.fixture(scope="session")
def rs44():
    return RockSampleModel(4, 4)


@pytest.fixture(scope="session")
def rs44_vtable(rs44):
    return train_vmdp(rs44, QLearningConfig(episodes=20_000), np.random.default_rng(0))


@pytest.fixture(scope="session")
def lightdark():
    return LightDarkModel()


@pytest.fixture(scope="session")
def lightdark_vtable(lightdark):
    return train_vmdp(lightdark, QLearningConfig(episodes=5000), np.random.default_rng(0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tiger_solved(tiger, tiger_vtable):
    """A small Tiger solve: ``(pruned fsc, planner)``; the planner holds the unpruned graph."""
    from pomcgs.solver import SolverConfig, solve

    cfg = SolverConfig(nb_particles=2000, xi=0.05, nb_sim=300, nb_eval=5000, c=110.0,
                       max_iterations=3, seed=1)
    return solve(tiger, cfg, vtable=tiger_vtable, return_planner=True)
