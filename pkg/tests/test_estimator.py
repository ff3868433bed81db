import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from pomcgs import POMCGS
from pomcgs.fsc import load, serialize


def quick(**kw):
    base = dict(nb_particles=1000, nb_sim=100, nb_eval=2000, c=110.0, max_iterations=2,
                qlearning_episodes=2000, random_state=3)
    base.update(kw)
    return POMCGS(**base)


def test_params_roundtrip():
    est = quick(xi=0.2)
    assert est.get_params()["xi"] == 0.2
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    est.set_params(nb_sim=7)
    assert est.nb_sim == 7


@pytest.mark.parametrize("field,value", [("xi", 0.0), ("epsilon", -1.0), ("nb_particles", 0),
                                         ("nb_sim", -1), ("alpha_a", 0.0), ("nb_eval", 1.5)])
def test_invalid_params(tiger, field, value):
    with pytest.raises((ValueError, TypeError), match=field):
        quick(**{field: value}).fit(tiger)


def test_not_fitted():
    with pytest.raises(NotFittedError):
        quick().predict([0])


def test_fit_predict_score(tiger, tiger_vtable, tmp_path):
    est = quick().fit(tiger, vtable=tiger_vtable)
    assert 1 <= est.n_iter_ <= 2 and est.bounds_.shape == (est.n_iter_ + 1, 4)
    assert np.all(est.bounds_[:, 1] >= est.bounds_[:, 2])
    acts = est.predict([0, 0, 1])
    assert len(acts) == 4 and acts[0] == 0
    s = est.score(tiger, n_episodes=2000)
    assert -100.0 / 0.05 <= s <= 10.0 / 0.05
    est.save(tmp_path / "p.txt")
    assert serialize(load(tmp_path / "p.txt")) == serialize(est.fsc_)


def test_fit_deterministic(tiger, tiger_vtable):
    a = quick().fit(tiger, vtable=tiger_vtable)
    b = quick().fit(tiger, vtable=tiger_vtable)
    assert serialize(a.fsc_) == serialize(b.fsc_)
