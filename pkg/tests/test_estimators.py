import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dnls.estimators import LatticeIntegrator, StandingWaveSolver
from dnls.lattice import LatticeState, charge
from dnls.stationary import anticontinuum_seed, critical_energy


def test_integrator_params_and_clone():
    est = LatticeIntegrator(delta=0.1, dt=0.02, T=0.5)
    assert est.get_params()["delta"] == 0.1
    c = clone(est).set_params(T=1.0)
    assert c.T == 1.0 and est.T == 0.5


def test_integrator_fit_transform():
    u0 = LatticeState.gaussian(10, 0, 1.5, 1.0)
    est = LatticeIntegrator(T=0.5)
    with pytest.raises(NotFittedError):
        est.transform(u0)
    out = est.fit_transform(u0.amplitudes)
    assert est.trajectory_.times[-1] == pytest.approx(0.5)
    assert charge(out) == pytest.approx(1.0, rel=1e-10)
    np.testing.assert_array_equal(est.transform(u0), out)


def test_standing_wave_solver():
    seed = anticontinuum_seed([0], 1, 1, 20)
    est = StandingWaveSolver(coupling_schedule=[0, 0.5, 1.0]).fit(seed)
    assert len(est.branch_) == 3 and est.residual_ <= 1e-10
    assert np.linalg.norm(est.transform()) > critical_energy(1, 1)
    single = StandingWaveSolver(epsilon=100.0).fit(seed)
    assert single.branch_ is None and abs(single.profile_[20] - 1) < 0.05
    with pytest.raises(NotFittedError):
        StandingWaveSolver().transform()
