"""Standing waves ``u_n(t) = exp(i omega^2 t) phi_n`` of the conservative lattice.

Profiles solve ``-(1/eps) A phi + omega^2 phi = |phi|^{2 sigma} phi`` on the
Dirichlet box.  Nontrivial ones are produced by Newton continuation from the
anti-continuum limit (coupling ``1/eps = 0``).  The linear operator
``A_omega = -(1/eps) A + omega^2`` is inverted directly to build the map
``P(z) = A_omega^{-1}(|z|^{2 sigma} z)`` whose contraction on small balls rules
out nontrivial waves of small ``l^2`` norm.
"""

import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.linalg import solve_banded, solveh_banded

from .exceptions import ConvergenceError, NumericalError, ValidationError
from .lattice import (LatticeState, PowerLaw, _abs2, _grad_sq,
                      _laplacian, _pow, _stationary_args, _stationary_residual,
                      stationary_energy)
from .validation import check_int, check_random_state, check_scalar

__all__ = [
    "StandingWave",
    "Branch",
    "GeometryReport",
    "ContractionReport",
    "critical_energy",
    "solve_Aomega",
    "apply_Aomega",
    "fixed_point_map",
    "contraction_probe",
    "anticontinuum_seed",
    "newton_standing_wave",
    "continuation",
    "mountain_pass_geometry",
    "norm_l2eps",
]


@dataclass(frozen=True)
class StandingWave:
    omega: float
    phi: LatticeState
    residual: float
    energy: float
    coupling: float
    trivial: bool = False
    iterations: int = 0

    @property
    def epsilon(self):
        return math.inf if self.coupling == 0 else 1.0 / self.coupling

    @property
    def amplitude(self):
        return float(np.max(np.abs(self.phi.amplitudes)))

    @property
    def l2_norm(self):
        return float(np.sqrt(np.sum(_abs2(self.phi.amplitudes))))


@dataclass
class Branch:
    """Waves along a continuation path; ``completed`` is False for a partial branch."""

    waves: List[StandingWave]
    completed: bool = True
    message: Optional[str] = None

    def __iter__(self):
        return iter(self.waves)

    def __len__(self):
        return len(self.waves)

    def __getitem__(self, k):
        return self.waves[k]


@dataclass(frozen=True)
class GeometryReport:
    r: float
    kappa1: float
    alpha: float
    r_max: float
    rim_min_sampled: float
    ray_negative_t: Optional[float]
    n_samples: int
    seed: int
    passed: bool


@dataclass(frozen=True)
class ContractionReport:
    R: float
    Ec: float
    lipschitz_bound: float
    empirical_ratio_max: float
    converged_to_zero: bool
    iterations: int
    n_pairs: int
    seed: int
    final_norm: float
    sampling: str = "gaussian direction x R*v**(1/(2N)), v ~ U(0,1)"


def critical_energy(omega, sigma):
    """``(omega^4 / 4)^{1/(4 sigma)}``: below this ``l^2`` norm only the trivial
    standing wave of frequency ``omega`` exists."""
    omega = check_scalar(omega, "omega")
    if omega == 0.0:
        raise ValidationError("omega must be nonzero")
    sigma = check_scalar(sigma, "sigma", min_val=0.0)
    if sigma == 0.0:
        raise ValidationError("critical energy is undefined for sigma = 0")
    return (omega ** 4 / 4.0) ** (1.0 / (4.0 * sigma))


def apply_Aomega(phi, epsilon, omega):
    c, omega, _ = _stationary_args(epsilon, omega, 1.0)
    a = phi.amplitudes if isinstance(phi, LatticeState) else np.asarray(phi, complex)
    return -c * _laplacian(a) + omega ** 2 * a


def _solve_Aomega_array(rhs, c, omega):
    n = rhs.size
    if not np.any(rhs):
        return np.zeros_like(rhs)
    ab = np.empty((2, n))
    ab[0, 0] = 0.0
    ab[0, 1:] = -c
    ab[1, :] = 2.0 * c + omega ** 2
    b = np.column_stack([rhs.real, rhs.imag])
    sol = solveh_banded(ab, b, check_finite=False)
    phi = sol[:, 0] + 1j * sol[:, 1]
    r = -c * _laplacian(phi) + omega ** 2 * phi - rhs
    rn, bn = np.linalg.norm(r), np.linalg.norm(rhs)
    if not rn <= 1e-12 * bn:
        raise NumericalError(f"A_omega solve residual {rn:.3e} exceeds 1e-12*||rhs||",
                             residual=float(rn))
    return phi


def solve_Aomega(rhs, epsilon, omega):
    """Solve ``-(1/eps) A phi + omega^2 phi = rhs`` with Dirichlet ends.

    The matrix is symmetric positive definite and tridiagonal; real and
    imaginary parts are solved as two right-hand sides of one banded Cholesky.
    """
    c, omega, _ = _stationary_args(epsilon, omega, 1.0)
    if not isinstance(rhs, LatticeState):
        rhs = LatticeState(rhs)
    return LatticeState(_solve_Aomega_array(rhs.amplitudes, c, omega), rhs.t)


def fixed_point_map(z, epsilon, omega, sigma):
    """``P(z) = A_omega^{-1}(|z|^{2 sigma} z)``; its fixed points are standing waves."""
    c, omega, sigma = _stationary_args(epsilon, omega, sigma)
    if not isinstance(z, LatticeState):
        z = LatticeState(z)
    a = z.amplitudes
    return LatticeState(_solve_Aomega_array(_pow(_abs2(a), sigma) * a, c, omega), z.t)


def _ball_sample(rng, R, n):
    d = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    d /= np.linalg.norm(d)
    return R * rng.uniform() ** (1.0 / (2 * n)) * d


def contraction_probe(R, epsilon, omega, sigma, n_pairs=1000, seed=0, half_width=10,
                      max_iter=200, tol=1e-12):
    """Measure the Lipschitz constant of ``P`` on the ball ``||z|| <= R``.

    Pair ``i`` is drawn from the stream ``default_rng([seed, i])``.  The
    iteration ``z <- P(z)`` starts on the sphere ``||z|| = R`` (stream
    ``[seed, n_pairs]``) and is reported as converged once ``||z|| <= tol``.
    """
    R = check_scalar(R, "R", min_val=0.0, include_min=False)
    c, omega, sigma = _stationary_args(epsilon, omega, sigma)
    n_pairs = check_int(n_pairs, "n_pairs", min_val=100)
    seed = check_int(seed, "seed", min_val=0)
    m = check_int(half_width, "half_width", min_val=0)
    n = 2 * m + 1
    Ec = critical_energy(omega, sigma)
    bound = 2.0 / omega ** 2 * R ** (2.0 * sigma)

    def P(a):
        return _solve_Aomega_array(_pow(_abs2(a), sigma) * a, c, omega)

    worst = 0.0
    for i in range(n_pairs):
        rng = np.random.default_rng([seed, i])
        z, xi = _ball_sample(rng, R, n), _ball_sample(rng, R, n)
        dz = np.linalg.norm(z - xi)
        if dz == 0.0:
            continue
        worst = max(worst, np.linalg.norm(P(z) - P(xi)) / dz)

    rng = np.random.default_rng([seed, n_pairs])
    z = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    z *= R / np.linalg.norm(z)
    it, zn = 0, float(np.linalg.norm(z))
    while zn > tol and it < max_iter:
        z = P(z)
        zn = float(np.linalg.norm(z))
        it += 1
        if not np.isfinite(zn):
            break
    return ContractionReport(R=R, Ec=Ec, lipschitz_bound=bound,
                             empirical_ratio_max=float(worst),
                             converged_to_zero=bool(zn <= tol), iterations=it,
                             n_pairs=n_pairs, seed=seed, final_norm=zn)


def anticontinuum_seed(support, omega, sigma, m):
    """Exact zero-coupling profile: ``omega^{1/sigma}`` on ``support``, 0 elsewhere."""
    omega = check_scalar(omega, "omega")
    sigma = check_scalar(sigma, "sigma", min_val=0.0, include_min=False)
    m = check_int(m, "m", min_val=0)
    support = sorted(set(int(n) for n in support))
    if not support:
        raise ValidationError("support must be nonempty")
    amp = abs(omega) ** (1.0 / sigma)
    return LatticeState.from_sites(m, {n: amp for n in support})


def _gauge_fix(a):
    k = int(np.argmax(np.abs(a)))
    phase = a[k] / abs(a[k])
    return (a * np.conj(phase)).real


def newton_standing_wave(seed, epsilon, omega, sigma, tol=1e-10, max_iter=50,
                         trivial_tol=1e-8):
    """Newton iteration for a real standing-wave profile started at ``seed``.

    The global phase is fixed by rotating the largest seed entry onto the
    positive real axis and dropping the imaginary part.  Steps are halved
    while they increase the residual.  Convergence to a profile with sup norm
    below ``trivial_tol`` is returned with ``trivial=True``.
    """
    c, omega, sigma = _stationary_args(epsilon, omega, sigma)
    tol = check_scalar(tol, "tol", min_val=0.0, include_min=False, max_val=1e-8)
    max_iter = check_int(max_iter, "max_iter", min_val=1)
    if not isinstance(seed, LatticeState):
        seed = LatticeState(seed)
    a = seed.amplitudes
    if not np.any(a):
        return StandingWave(omega=omega, phi=LatticeState(np.zeros_like(a)),
                            residual=0.0, energy=0.0, coupling=c, trivial=True)
    nl = PowerLaw(sigma)
    phi = _gauge_fix(a)
    n = phi.size

    def F(x):
        return -c * _laplacian(x) + omega ** 2 * x - nl.rate(x * x) * x

    r = F(phi)
    rn = float(np.linalg.norm(r))
    it = 0
    while rn > tol:
        if it >= max_iter:
            raise ConvergenceError(
                f"standing-wave Newton did not converge in {max_iter} iterations "
                f"(residual {rn:.3e})", residual=rn, iteration=it)
        p = phi * phi
        ab = np.empty((3, n))
        ab[0, 0] = ab[2, -1] = 0.0
        ab[0, 1:] = -c
        ab[2, :-1] = -c
        ab[1] = 2.0 * c + omega ** 2 - nl.rate(p) - 2.0 * p * nl.rate_derivative(p)
        try:
            dx = solve_banded((1, 1), ab, -r)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise ConvergenceError(f"singular Newton Jacobian: {exc}", residual=rn,
                                   iteration=it) from exc
        lam = 1.0
        for _ in range(30):
            trial = phi + lam * dx
            r_trial = F(trial)
            rn_trial = float(np.linalg.norm(r_trial))
            if np.isfinite(rn_trial) and rn_trial < rn:
                break
            lam *= 0.5
        else:
            raise ConvergenceError("Newton line search stalled", residual=rn,
                                   iteration=it)
        phi, r, rn = trial, r_trial, rn_trial
        it += 1

    state = LatticeState(phi.astype(complex))
    residual = float(np.linalg.norm(_stationary_residual(state.amplitudes, c, omega,
                                                         sigma)))
    eps = math.inf if c == 0 else 1.0 / c
    return StandingWave(omega=omega, phi=state, residual=residual,
                        energy=stationary_energy(state, eps, omega, sigma),
                        coupling=c, trivial=bool(np.max(np.abs(phi)) <= trivial_tol),
                        iterations=it)


def continuation(seed, omega, sigma, coupling_schedule, tol=1e-10, max_iter=50):
    """Follow a standing-wave branch along increasing couplings ``1/eps``.

    Each solve is warm-started from the previous profile.  A failure on the
    first coupling raises; a later failure returns the partial ``Branch`` with
    ``completed=False``.
    """
    schedule = [check_scalar(x, "coupling", min_val=0.0) for x in coupling_schedule]
    if not schedule:
        raise ValidationError("coupling schedule is empty")
    if any(b <= a for a, b in zip(schedule, schedule[1:])):
        raise ValidationError("coupling schedule must be strictly increasing")
    waves = []
    current = seed
    for k, cpl in enumerate(schedule):
        eps = math.inf if cpl == 0 else 1.0 / cpl
        try:
            wave = newton_standing_wave(current, eps, omega, sigma, tol, max_iter)
        except ConvergenceError as exc:
            if k == 0:
                raise
            return Branch(waves, completed=False,
                          message=f"failed at coupling {cpl:g}: {exc}")
        waves.append(wave)
        current = wave.phi
    return Branch(waves)


def norm_l2eps(phi, epsilon, omega):
    """``((1/eps) ||B phi||^2 + omega^2 ||phi||^2)^{1/2}``."""
    c, omega, _ = _stationary_args(epsilon, omega, 1.0)
    a = phi.amplitudes if isinstance(phi, LatticeState) else np.asarray(phi, complex)
    return math.sqrt(c * _grad_sq(a) + omega ** 2 * float(np.sum(_abs2(a))))


def mountain_pass_geometry(r, epsilon, omega, sigma, n_samples=10000, seed=0,
                           half_width=10):
    """Numerically verify the mountain-pass shape of the stationary energy.

    Draws ``n_samples`` complex Gaussian profiles rescaled onto the sphere of
    radius ``r`` in the ``l2_eps`` norm and checks the sampled minimum against
    ``alpha = r^2 (1/2 - kappa1^{2s+2} r^{2s} / (2s+2))`` with
    ``kappa1 = 1 / min(1/eps, |omega|)``.  Also scans ``t`` along the ray
    through a normalised single-site profile for a point of negative energy.
    """
    c, omega, sigma = _stationary_args(epsilon, omega, sigma)
    if c == 0:
        raise ValidationError("mountain-pass constants need a finite epsilon")
    eps = 1.0 / c
    n_samples = check_int(n_samples, "n_samples", min_val=1000)
    seed = check_int(seed, "seed", min_val=0)
    m = check_int(half_width, "half_width", min_val=0)
    kappa1 = 1.0 / min(c, abs(omega))
    r_max = ((sigma + 1.0) / kappa1 ** (2 * sigma + 2)) ** (1.0 / (2 * sigma))
    r = check_scalar(r, "r", min_val=0.0, include_min=False)
    if r >= r_max:
        raise ValidationError(f"r={r:g} outside the admissible interval (0, {r_max:.6g})")
    alpha = r ** 2 * (0.5 - kappa1 ** (2 * sigma + 2) * r ** (2 * sigma) / (2 * sigma + 2))

    rng = check_random_state(seed)
    n = 2 * m + 1
    X = rng.standard_normal((n_samples, n)) + 1j * rng.standard_normal((n_samples, n))
    padded = np.zeros((n_samples, n + 2), dtype=complex)
    padded[:, 1:-1] = X
    grad = np.sum(_abs2(np.diff(padded, axis=1)), axis=1)
    nrm = np.sqrt(c * grad + omega ** 2 * np.sum(_abs2(X), axis=1))
    X *= (r / nrm)[:, None]
    V = np.sum(_pow(_abs2(X), sigma + 1.0), axis=1)
    E = 0.5 * r ** 2 - V / (2 * sigma + 2)
    rim_min = float(E.min())

    e = np.zeros(n, dtype=complex)
    e[m] = 1.0
    e /= norm_l2eps(e, eps, omega)
    ray_t = None
    t = 0.01
    while t <= 1e8:
        if stationary_energy(t * e, eps, omega, sigma) < 0:
            ray_t = t
            break
        t *= 1.01
    return GeometryReport(r=r, kappa1=kappa1, alpha=alpha, r_max=r_max,
                          rim_min_sampled=rim_min, ray_negative_t=ray_t,
                          n_samples=n_samples, seed=seed,
                          passed=bool(rim_min >= alpha and ray_t is not None))
