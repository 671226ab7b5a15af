import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from dnls.dynamics import (IntegratorConfig, _Field, _midpoint_jacobian, _interleave,
                           absorbing_prediction, decay_audit, integrate,
                           observe_absorption, step, vector_field)
from dnls.exceptions import AuditFailure, ConvergenceError, NumericalError, ValidationError
from dnls.lattice import LatticeState, ModelParams, charge, hamiltonian_energy


def gaussian(m=20, charge_=1.0, width=2.0, k=0.3):
    return LatticeState.gaussian(m, 0.0, width, charge_, k)


# -- configuration --------------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(dt=0), dict(dt=-1), dict(solver_tol=1e-5),
                                dict(solver_tol=0), dict(record_stride=0),
                                dict(scheme="euler"), dict(max_inner_iters=0)])
def test_integrator_config_rejects(kw):
    with pytest.raises(ValidationError):
        IntegratorConfig(**kw)


# -- vector field ------------------------------------------------------------------------

def test_vector_field_hand_value():
    p = ModelParams(1.0, 0.5, 1, 2)
    f = vector_field(LatticeState.single_site(2, 0), p)
    assert f[0] == pytest.approx(-0.5 - 1j, abs=1e-15)
    assert f[1] == pytest.approx(1j) and f[-1] == pytest.approx(1j)


def test_vector_field_skew_in_conservative_mode():
    p = ModelParams(1.0, 0.0, 1, 3)
    u = LatticeState.single_site(3, 0, 1.7)
    assert np.real(np.vdot(u.amplitudes, vector_field(u, p).amplitudes)) == 0.0
    rng = np.random.default_rng(0)
    u = LatticeState(rng.standard_normal(7) + 1j * rng.standard_normal(7))
    assert abs(np.real(np.vdot(u.amplitudes, vector_field(u, p).amplitudes))) < 1e-13


def test_vector_field_zero():
    assert not np.any(vector_field(LatticeState.zeros(3), ModelParams(1, 0.2, 1, 3)).amplitudes)


def test_vector_field_forcing_sign():
    g = np.zeros(3, complex)
    g[1] = 0.25
    f = vector_field(LatticeState.zeros(1), ModelParams(1, 0, 1, 1, g))
    assert f[0] == pytest.approx(-0.25j)


def test_midpoint_jacobian_matches_dense_finite_differences():
    rng = np.random.default_rng(1)
    for sigma in (1.0, 2.5):
        params = ModelParams(0.8, 0.3, sigma, 3, 0.1 * rng.standard_normal(7))
        field_ = _Field(params)
        v = rng.standard_normal(7) + 1j * rng.standard_normal(7)
        h = 0.05
        ab = _midpoint_jacobian(field_, v, h)
        n = 14
        dense = np.zeros((n, n))
        for j in range(n):
            for i in range(max(0, j - 3), min(n, j + 4)):
                dense[i, j] = ab[3 + i - j, j]

        def G(x):
            w = x[0::2] + 1j * x[1::2]
            return _interleave(w - h * field_(w))
        x0, fd, e = _interleave(v), np.zeros((n, n)), 1e-6
        for j in range(n):
            d = np.zeros(n)
            d[j] = e
            fd[:, j] = (G(x0 + d) - G(x0 - d)) / (2 * e)
        np.testing.assert_allclose(dense, fd, atol=1e-8)


# -- stepping -------------------------------------------------------------------------------

def test_step_conserves_charge_to_solver_tol():
    cfg = IntegratorConfig(dt=0.05)
    p = ModelParams(1.0, 0, 1, 20)
    u = gaussian(charge_=3.0)
    v = step(u, p, cfg)
    assert v.t == pytest.approx(0.05)
    assert abs(charge(v) - charge(u)) <= 10 * cfg.solver_tol * charge(u)


def test_step_charge_decreases_when_damped():
    p = ModelParams(1.0, 0.2, 1, 20)
    u = gaussian()
    for scheme in ("implicit_midpoint", "rk4"):
        assert charge(step(u, p, IntegratorConfig(scheme=scheme))) < charge(u)


def test_step_zero_state_is_fixed():
    v = step(LatticeState.zeros(5), ModelParams(1, 0.3, 2, 5), IntegratorConfig())
    assert not np.any(v.amplitudes)


def test_stiff_step_uses_newton_fallback():
    u = LatticeState.gaussian(10, 0, 1.0, 10.0)
    p = ModelParams(1.0, 0, 3, 10)
    v = step(u, p, IntegratorConfig(dt=0.01))
    assert abs(charge(v) - charge(u)) <= 1e-10 * charge(u)


def test_inner_solver_failure_carries_residual():
    u = LatticeState.gaussian(10, 0, 1.0, 10.0)
    with pytest.raises(ConvergenceError) as info:
        step(u, ModelParams(1.0, 0, 3, 10), IntegratorConfig(dt=0.05, max_inner_iters=1))
    assert info.value.residual is not None and info.value.residual > 0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_blowup_guard_reports_time():
    u = LatticeState.single_site(1, 0, 50.0)
    with pytest.raises(NumericalError) as info:
        integrate(u, ModelParams(1.0, 0, 3, 1), IntegratorConfig(scheme="rk4", dt=0.5), 10)
    assert info.value.time is not None


# -- integration -----------------------------------------------------------------------

def test_integrate_T_zero_single_row():
    traj = integrate(gaussian(), ModelParams(1, 0, 1, 20), IntegratorConfig(), 0.0)
    assert len(traj) == 1 and traj.rows[0].t == 0.0


def test_integrate_records_final_time_and_strictly_increasing_times():
    traj = integrate(gaussian(), ModelParams(1, 0, 1, 20),
                     IntegratorConfig(dt=0.03, record_stride=7), 1.0, keep_snapshots=True)
    t = traj.times
    assert t[-1] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.diff(t) > 0)
    assert len(traj.snapshots) == len(traj.rows)
    assert traj.final_state.t == pytest.approx(1.0)


def test_rows_match_lattice_functionals():
    p = ModelParams(0.9, 0.0, 1.5, 20)
    traj = integrate(gaussian(), p, IntegratorConfig(), 0.5, keep_snapshots=True)
    for row, (_, s) in zip(traj.rows, traj.snapshots):
        assert row.charge == pytest.approx(charge(s), rel=1e-14)
        assert row.energy == pytest.approx(hamiltonian_energy(s, p), rel=1e-13)


def test_integrate_against_scipy_reference():
    m = 4
    rng = np.random.default_rng(2)
    g = 0.1 * (rng.standard_normal(2 * m + 1) + 1j * rng.standard_normal(2 * m + 1))
    p = ModelParams(0.7, 0.2, 1.0, m, g)
    u0 = LatticeState(rng.standard_normal(2 * m + 1) * 0.6 + 0j)
    field_ = _Field(p)

    def rhs(_, x):
        return _interleave(field_(x[0::2] + 1j * x[1::2]))
    ref = solve_ivp(rhs, (0, 2), _interleave(u0.amplitudes), method="DOP853",
                    rtol=1e-12, atol=1e-13).y[:, -1]
    ref = ref[0::2] + 1j * ref[1::2]
    mid = integrate(u0, p, IntegratorConfig(dt=5e-4), 2.0).final_state.amplitudes
    rk = integrate(u0, p, IntegratorConfig("rk4", dt=1e-3), 2.0).final_state.amplitudes
    assert np.linalg.norm(mid - ref) < 5e-6
    assert np.linalg.norm(rk - ref) < 1e-10


def test_exact_dissipation_law():
    p = ModelParams(1.0, 0.1, 1, 20)
    traj = integrate(gaussian(charge_=2.0), p, IntegratorConfig(), 10.0)
    c, t = traj.column("charge"), traj.times
    assert np.max(np.abs(c - c[0] * np.exp(-0.2 * t))) <= 1e-6 * c[0]
    assert c[-1] / c[0] == pytest.approx(math.exp(-2), rel=1e-5)


def test_j_balance_residual_is_second_order():
    g = np.zeros(41, complex)
    g[15:26] = 0.05
    p = ModelParams(1.0, 0.3, 1, 20, g)
    res = []
    for dt in (0.02, 0.01):
        traj = integrate(gaussian(), p, IntegratorConfig(dt=dt, record_stride=1), 1.0)
        res.append(decay_audit(traj).j_balance_residual)
    assert res[1] < 1e-3
    assert 3.0 <= res[0] / res[1] <= 5.0


# -- absorbing ball and audits -------------------------------------------------------------

def test_absorbing_prediction_example():
    rep = absorbing_prediction(0.1, 0.5, 0.3, 1.0)
    assert rep.rho == pytest.approx(0.2)
    assert rep.t0_predicted == pytest.approx(2 * math.log(20), rel=1e-14)
    assert absorbing_prediction(0.0, 0.5, 0.3, 0.3).t0_predicted == 0.0


def test_absorbing_prediction_rho2_and_errors():
    rep = absorbing_prediction(0.1, 0.5, 0.3, 1.0, epsilon=2.0, sigma=1.0)
    assert rep.rho2 ** 2 == pytest.approx(2 * 0.3 ** 4 + 6 * 0.1 * 0.3 + 0.1 * 0.3 / 0.5)
    with pytest.raises(ValidationError):
        absorbing_prediction(0.1, 0.5, 0.2, 1.0)
    with pytest.raises(ValidationError):
        absorbing_prediction(0.1, 0.0, 0.3, 1.0)


def test_observed_entry_precedes_prediction():
    m = 20
    g = np.zeros(2 * m + 1, complex)
    g[m - 5:m + 6] = 0.1 / math.sqrt(11)
    p = ModelParams(1.0, 0.5, 1, m, g)
    u0 = LatticeState.gaussian(m, 0, 2.0, 1.0)
    traj = integrate(u0, p, IntegratorConfig(), 15.0)
    rep = observe_absorption(traj, absorbing_prediction(p.forcing_norm, 0.5, 0.3, 1.0))
    assert rep.t_entry_observed is not None
    assert rep.t_entry_observed <= rep.t0_predicted


def test_decay_audit_conservative_margin_positive():
    traj = integrate(gaussian(charge_=2.0), ModelParams(1, 0, 1, 20), IntegratorConfig(), 5)
    rep = decay_audit(traj)
    assert rep.passed and rep.growth_margin > 0 and rep.gronwall_margin is None


def test_decay_audit_dissipative_gronwall_slack():
    traj = integrate(gaussian(), ModelParams(1, 0.2, 1, 20), IntegratorConfig(), 5)
    rep = decay_audit(traj)
    assert rep.passed and rep.gronwall_margin >= 0


def test_decay_audit_zero_trajectory():
    traj = integrate(LatticeState.zeros(5), ModelParams(1, 0.2, 1, 5), IntegratorConfig(), 1)
    rep = decay_audit(traj)
    assert rep.passed and rep.gronwall_margin == 0.0


def test_decay_audit_flags_violation():
    from dataclasses import replace
    traj = integrate(gaussian(), ModelParams(1, 0.2, 1, 20), IntegratorConfig(), 1)
    traj.rows[-1] = replace(traj.rows[-1], charge=10.0)
    with pytest.raises(AuditFailure) as info:
        decay_audit(traj)
    assert info.value.violations[0][0] == "gronwall"
    assert not decay_audit(traj, strict=False).passed
