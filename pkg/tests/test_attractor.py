import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dnls.attractor import (CutoffSpec, WeightSpec, cutoff_theta, cutoff_theta_prime,
                            damping_condition, semidistance, tail_audit, tail_K, tail_mass,
                            truncation_delta, weight_constants, weighted_audit,
                            weighted_norm)
from dnls.dynamics import IntegratorConfig, integrate
from dnls.exceptions import ValidationError
from dnls.lattice import LatticeState, ModelParams, apply_operator, charge, norm


def box(m, radius, total):
    g = np.zeros(2 * m + 1, complex)
    g[m - radius:m + radius + 1] = total / math.sqrt(2 * radius + 1)
    return g


# -- cutoff -------------------------------------------------------------------------------

def test_theta_values():
    assert cutoff_theta(0.5) == 0.0 and cutoff_theta(1.0) == 0.0
    assert cutoff_theta(3.0) == 1.0 and cutoff_theta(2.0) == 1.0
    assert cutoff_theta(1.5) == pytest.approx(0.5, abs=1e-15)
    with pytest.raises(ValidationError):
        cutoff_theta(-0.1)


def test_theta_derivative_bound():
    s = np.linspace(0, 3, 30001)
    d = cutoff_theta_prime(s)
    assert np.max(np.abs(d)) == pytest.approx(math.pi / 2, rel=1e-12)
    assert s[np.argmax(np.abs(d))] == pytest.approx(1.5)
    fd = np.gradient(cutoff_theta(s), s)
    assert np.max(np.abs(fd - d)) < 1e-3
    spec = CutoffSpec(M=3)
    assert spec.C0 == math.pi / 2 and spec.C1 == math.pi


def test_tail_mass_examples():
    assert tail_mass(LatticeState.single_site(10, 0), 1) == 0.0
    a = np.zeros(21, complex)
    a[5:16] = np.arange(1, 12)
    u = LatticeState(a)
    # |n| > 4 within support {-5..5} leaves n = +-5: values 1 and 11
    assert tail_mass(u, 2) == 1 + 121
    assert tail_mass(u, 1) <= charge(u)
    with pytest.raises(ValidationError):
        tail_mass(u, 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2 ** 31))
def test_cutoff_sandwich(M, seed):
    rng = np.random.default_rng(seed)
    m = 15
    u = LatticeState(rng.standard_normal(2 * m + 1) + 1j * rng.standard_normal(2 * m + 1))
    n = np.abs(np.arange(-m, m + 1))
    mid = float(np.sum(cutoff_theta(n / M) * np.abs(u.amplitudes) ** 2))
    outer = float(np.sum(np.abs(u.amplitudes[n > M]) ** 2))
    assert tail_mass(u, M) <= mid + 1e-12 <= outer + 2e-12


# -- tail audit ----------------------------------------------------------------------------

def test_tail_K_oracle():
    g = box(60, 10, 0.1)
    C1, rho1, delta = math.pi, 0.3, 0.5
    eta = 2 * C1 * rho1 ** 2 / 40 * (1 + 1e-12)
    assert tail_K(eta, rho1, g, delta, C1) == 40
    # with a nonzero forcing tail K is pushed out beyond the support
    g2 = np.ones(121, complex) * 0.01
    K = tail_K(0.05, rho1, g2, delta, C1)
    assert 2 * C1 * rho1 ** 2 / K + np.sum(np.abs(g2[:60 - K]) ** 2) * 2 / delta <= 0.05


def _dissipative_run(m=60, delta=0.5, gnorm=0.1, T=20.0, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(2 * m + 1) + 1j * rng.standard_normal(2 * m + 1)
    p = ModelParams(1.0, delta, 1, m, box(m, 10, gnorm))
    return integrate(LatticeState(a / np.linalg.norm(a)), p, IntegratorConfig(), T,
                     keep_snapshots=True)


def test_tail_audit_compact_forcing():
    traj = _dissipative_run()
    rep = tail_audit(traj, 0.1, 0.3, CutoffSpec())
    assert rep.passed and rep.K_eta >= 1
    assert rep.bound == pytest.approx(0.4)
    assert rep.C1 == pytest.approx(math.pi)
    assert rep.T_eta == pytest.approx(rep.t0 + math.log(0.5 * 0.09 / 0.1) / 0.5)
    assert all(v <= rep.bound for v in rep.max_tail_after_T.values())


def test_tail_audit_huge_eta_and_no_forcing():
    traj = _dissipative_run(gnorm=0.0, T=10)
    rep = tail_audit(traj, 1.0, 0.3, CutoffSpec())
    assert rep.T_eta <= rep.t0 and rep.passed
    tails = [v for _, v in rep.observed_tail]
    assert tails[-1] < tails[0]


def test_tail_audit_errors():
    traj = integrate(LatticeState.zeros(5), ModelParams(1, 0, 1, 5), IntegratorConfig(), 1,
                     keep_snapshots=True)
    with pytest.raises(ValidationError):
        tail_audit(traj, 0.1, 0.3)
    traj = _dissipative_run(T=1)
    with pytest.raises(ValidationError):
        tail_audit(traj, 0.1, 0.3, M_values=[1])


# -- truncation ----------------------------------------------------------------------------

def test_truncation_trivial_cases():
    p = ModelParams(1.0, 0.1, 1, 5)
    cfg = IntegratorConfig()
    rep = truncation_delta([LatticeState.zeros(5)], p, [5, 10], 20, 1.0, cfg)
    assert rep.deltas == [0.0, 0.0]
    u0 = LatticeState.gaussian(5, 0, 1.0, 1.0)
    rep = truncation_delta([u0], p, [20], 20, 1.0, cfg)
    assert rep.deltas[0] <= 1e-14


def test_truncation_decreasing_and_thread_independent():
    m0 = 8
    p = ModelParams(1.0, 0.1, 1, m0, box(m0, 3, 0.1))
    u0s = [LatticeState.gaussian(m0, 0, 1.5, 1.0), LatticeState.single_site(m0, 2, 0.5)]
    cfg = IntegratorConfig(dt=0.02)
    a = truncation_delta(u0s, p, [8, 16, 32], 48, 4.0, cfg)
    b = truncation_delta(u0s, p, [8, 16, 32], 48, 4.0, cfg, max_workers=3)
    assert a.deltas == b.deltas
    assert a.monotone and all(d >= 0 for d in a.deltas)


def test_truncation_validation():
    p = ModelParams(1.0, 0.1, 1, 5)
    cfg = IntegratorConfig()
    with pytest.raises(ValidationError):
        truncation_delta([LatticeState.single_site(8, 7)], p, [5, 10], 20, 1.0, cfg)
    with pytest.raises(ValidationError):
        truncation_delta([LatticeState.zeros(5)], p, [5, 30], 20, 1.0, cfg)


# -- semidistance --------------------------------------------------------------------------

def test_semidistance_examples():
    z = LatticeState.zeros(3)
    three = LatticeState.single_site(3, 1, 3.0)
    assert semidistance([z], [z, three]) == 0.0
    assert semidistance([z, three], [z]) == pytest.approx(3.0)
    assert semidistance([three], [three]) == 0.0
    assert semidistance([LatticeState.single_site(1, 0, 1.0)], [three]) == pytest.approx(
        math.sqrt(10))
    with pytest.raises(ValidationError):
        semidistance([], [z])


def test_semidistance_triangle():
    rng = np.random.default_rng(4)

    def cloud(k):
        return [LatticeState(rng.standard_normal(7) + 0j) for _ in range(k)]
    for _ in range(100):
        A, B, C = cloud(3), cloud(4), cloud(2)
        assert semidistance(A, B) <= semidistance(A, C) + semidistance(C, B) + 1e-12


# -- weights -------------------------------------------------------------------------------------

def test_weight_constants_one_sided():
    spec = WeightSpec("exponential_one_sided", 0.1)
    d1, d2 = weight_constants(spec, 20)
    assert d1 == pytest.approx(math.exp(0.1) - 1, rel=1e-12)
    assert d2 == pytest.approx(math.exp(0.1), rel=1e-12)
    assert (spec.d1, spec.d2_lower) == pytest.approx((0.10517091807564762, 1.1051709180756477))
    assert np.all(spec.weights(20) >= 1.0)


def test_weight_constants_two_sided():
    spec = WeightSpec("exponential_two_sided", 0.1)
    d1, d2 = weight_constants(spec, 20)
    assert d2 == pytest.approx(math.exp(-0.1), rel=1e-12)
    assert d1 == pytest.approx(math.exp(0.1) - 1, rel=1e-12)
    assert spec.d2_lower == pytest.approx(0.9048374180359595)
    w = spec.weights(20)
    assert np.all(w >= 1.0) and w[20] == 1.0


def test_weight_constants_small_lambda():
    d1, d2 = weight_constants(WeightSpec("exponential_one_sided", 1e-12), 10)
    assert d1 < 1e-11 and abs(d2 - 1) < 1e-11


def test_weight_spec_validation():
    with pytest.raises(ValidationError):
        WeightSpec("gaussian", 0.1)
    with pytest.raises(ValidationError):
        WeightSpec("exponential_one_sided", -1)
    with pytest.raises(ValidationError):
        WeightSpec("exponential_two_sided", 1.0).weights(301)


def test_damping_condition_threshold():
    spec = WeightSpec("exponential_one_sided", 0.1)
    assert 8 * math.sinh(0.05) == pytest.approx(0.40017, abs=1e-5)
    ok, slack = damping_condition(0.5, spec)
    assert ok and slack == pytest.approx(0.25 - 4 * math.sinh(0.05), abs=1e-12)
    assert not damping_condition(0.3, spec)[0]
    assert not damping_condition(0.0, spec)[0]
    assert damping_condition(1e-6, WeightSpec("exponential_one_sided", 1e-9))[0]


def test_sinh_identity():
    for lam in np.linspace(1e-6, 2.0, 1000):
        spec = WeightSpec("exponential_one_sided", float(lam))
        _, slack = damping_condition(0.7, spec)
        assert abs(slack - (0.35 - 4 * math.sinh(lam / 2))) <= 1e-12


def test_weighted_norm_examples():
    u = LatticeState.single_site(20, 10)
    spec = WeightSpec("exponential_two_sided", 0.1)
    assert weighted_norm(u, spec) == pytest.approx(math.exp(0.5), rel=1e-14)
    flat = WeightSpec("exponential_two_sided", 0.0)
    rng = np.random.default_rng(5)
    for _ in range(50):
        v = LatticeState(rng.standard_normal(41) + 1j * rng.standard_normal(41))
        assert weighted_norm(v, flat) == norm(v)
        assert weighted_norm(v, spec) >= norm(v)
        assert weighted_norm(v, WeightSpec("exponential_one_sided", 0.1)) >= norm(v)


def test_A_lipschitz_in_weighted_space():
    rng = np.random.default_rng(6)
    for family in ("exponential_one_sided", "exponential_two_sided"):
        spec = WeightSpec(family, 0.1)
        for _ in range(200):
            u = LatticeState(rng.standard_normal(41) + 1j * rng.standard_normal(41))
            v = LatticeState(rng.standard_normal(41) + 1j * rng.standard_normal(41))
            d = LatticeState(u.amplitudes - v.amplitudes)
            lhs = weighted_norm(LatticeState(apply_operator("A", u).amplitudes
                                             - apply_operator("A", v).amplitudes), spec)
            assert lhs <= 4 * weighted_norm(d, spec)


# -- weighted audit ------------------------------------------------------------------------------

def _weighted_run(delta, g_norm, T, m=40):
    spec = WeightSpec("exponential_one_sided", 0.1)
    p = ModelParams(1.0, delta, 1, m, box(m, 5, g_norm))
    traj = integrate(LatticeState.gaussian(m, 0, 2.0, 1.0), p, IntegratorConfig(), T,
                     keep_snapshots=True, weights=spec.weights(m))
    return traj, spec


def test_weighted_audit_bounded():
    traj, spec = _weighted_run(0.5, 0.1, 20)
    rep = weighted_audit(traj, spec, 1e-3, 5)
    assert rep.weighted and rep.bounded and rep.passed
    assert rep.max_weighted_norm_sq <= rep.norm_bound * (1 + 1e-9)


def test_weighted_audit_decays_without_forcing():
    traj, spec = _weighted_run(0.5, 0.0, 10)
    wn = traj.column("weighted_norm")
    assert np.all(np.diff(wn) < 0)
    assert weighted_audit(traj, spec, 1e6, 5).passed


def test_weighted_audit_rejects_weak_damping():
    traj, spec = _weighted_run(0.3, 0.1, 1)
    with pytest.raises(ValidationError, match="damping condition"):
        weighted_audit(traj, spec, 1e-3, 5)
