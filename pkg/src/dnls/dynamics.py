"""Time integration of the damped-driven DNLS lattice and trajectory audits."""

import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import solve_banded

from .exceptions import AuditFailure, ConvergenceError, NumericalError, ValidationError
from .lattice import (LatticeState, ModelParams, _abs2, _grad_sq, _laplacian,
                      _potential)
from .validation import check_int, check_scalar

__all__ = [
    "IntegratorConfig",
    "DiagnosticsRow",
    "Trajectory",
    "AbsorbingReport",
    "DecayReport",
    "vector_field",
    "step",
    "integrate",
    "absorbing_prediction",
    "observe_absorption",
    "decay_audit",
]

SCHEMES = ("implicit_midpoint", "rk4")
BLOWUP_THRESHOLD = 1e100


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = "implicit_midpoint"
    dt: float = 0.01
    solver_tol: float = 1e-12
    max_inner_iters: int = 50
    record_stride: int = 10

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValidationError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        object.__setattr__(self, "dt", check_scalar(self.dt, "dt", min_val=0.0,
                                                    include_min=False))
        object.__setattr__(self, "solver_tol", check_scalar(
            self.solver_tol, "solver_tol", min_val=0.0, include_min=False, max_val=1e-6))
        object.__setattr__(self, "max_inner_iters",
                           check_int(self.max_inner_iters, "max_inner_iters", min_val=1))
        object.__setattr__(self, "record_stride",
                           check_int(self.record_stride, "record_stride", min_val=1))


@dataclass(frozen=True)
class DiagnosticsRow:
    t: float
    charge: float
    energy: float
    l21_sq: float
    J: float
    Lambda: float
    tail_M: Optional[float] = None
    weighted_norm: Optional[float] = None


@dataclass
class Trajectory:
    rows: List[DiagnosticsRow]
    params: ModelParams
    config: IntegratorConfig
    snapshots: Optional[List[Tuple[float, LatticeState]]] = None
    final_state: Optional[LatticeState] = None
    tail_M: Optional[int] = None

    @property
    def times(self):
        return np.array([r.t for r in self.rows])

    def column(self, name):
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    @property
    def initial_state(self):
        return self.snapshots[0][1] if self.snapshots else None

    def __len__(self):
        return len(self.rows)


# -- vector field and steppers ------------------------------------------------

class _Field:
    """Precomputed pieces of ``u' = i c A u - delta u + i f(|u|^2) u - i g``."""

    def __init__(self, params):
        self.c = params.coupling
        self.delta = params.delta
        self.g = np.asarray(params.forcing)
        self.has_g = bool(np.any(self.g))
        self.nl = params.nonlinearity

    def __call__(self, v):
        s = self.nl.rate(_abs2(v))
        inner = self.c * _laplacian(v) + s * v
        if self.has_g:
            inner -= self.g
        out = 1j * inner
        if self.delta:
            out -= self.delta * v
        return out


def vector_field(u, params):
    """Right-hand side of the lattice equation solved for ``u'``."""
    a = params.check_state(u)
    t = u.t if isinstance(u, LatticeState) else 0.0
    return LatticeState(_Field(params)(a), t)


def _interleave(v):
    x = np.empty(2 * v.size)
    x[0::2] = v.real
    x[1::2] = v.imag
    return x


def _midpoint_jacobian(field_, v, h):
    """Banded (3, 3) storage of ``I - h Df(v)`` in interleaved real variables."""
    n = v.size
    x, y = v.real, v.imag
    p = x * x + y * y
    s = field_.nl.rate(p)
    ds = field_.nl.rate_derivative(p)
    c, d = field_.c, field_.delta
    ab = np.zeros((7, 2 * n))
    ab[3, 0::2] = 1.0 + h * (d + 2.0 * ds * x * y)
    ab[3, 1::2] = 1.0 + h * (d - 2.0 * ds * x * y)
    ab[2, 1::2] = -h * (2.0 * c - s - 2.0 * ds * y * y)
    ab[4, 0::2] = h * (2.0 * c - s - 2.0 * ds * x * x)
    if n > 1:
        ab[4, 1:2 * n - 2:2] = h * c
        ab[0, 3::2] = h * c
        ab[6, 0:2 * n - 2:2] = -h * c
        ab[2, 2::2] = -h * c
    return ab


def _midpoint_step(field_, u, dt, tol, max_iter, t=None):
    """One implicit midpoint step; solves ``v = u + (dt/2) f(v)``, returns ``2v - u``.

    Plain fixed-point iteration is tried first.  If it stalls (increment ratio
    above 0.9) or runs out of iterations, damped Newton takes over from the
    iterate with the smallest residual seen so far.
    """
    h = 0.5 * dt
    v = u + h * field_(u)
    best, best_err = u, np.inf
    prev_err = None
    for _ in range(max_iter):
        v_new = u + h * field_(v)
        err = np.max(np.abs(v_new - v))
        if not np.isfinite(err):
            break
        if err < best_err:
            best, best_err = v, err
        v = v_new
        if err <= tol * max(1.0, np.max(np.abs(v))):
            return 2.0 * v - u
        if prev_err is not None and err > 0.9 * prev_err:
            break
        prev_err = err
    return 2.0 * _midpoint_newton(field_, u, best, h, tol, max_iter, t) - u


def _midpoint_newton(field_, u, v, h, tol, max_iter, t):
    def resid(w):
        return w - u - h * field_(w)

    G = resid(v)
    res = float(np.linalg.norm(G))
    for it in range(max_iter):
        ab = _midpoint_jacobian(field_, v, h)
        try:
            dx = solve_banded((3, 3), ab, -_interleave(G))
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise ConvergenceError(f"midpoint Newton solve failed: {exc}",
                                   residual=res, time=t, iteration=it) from exc
        dv = dx[0::2] + 1j * dx[1::2]
        lam = 1.0
        for _ in range(40):
            trial = v + lam * dv
            G_trial = resid(trial)
            res_trial = float(np.linalg.norm(G_trial))
            if np.isfinite(res_trial) and (res_trial < res or lam * np.max(np.abs(dv))
                                           <= tol * max(1.0, np.max(np.abs(v)))):
                break
            lam *= 0.5
        else:
            raise ConvergenceError("implicit midpoint Newton line search stalled",
                                   residual=res, time=t, iteration=it)
        v, G, res = trial, G_trial, res_trial
        if lam == 1.0 and np.max(np.abs(dv)) <= tol * max(1.0, np.max(np.abs(v))):
            return v
    raise ConvergenceError(
        f"implicit midpoint inner solve did not reach tol={tol:g} in "
        f"{max_iter} iterations (residual {res:.3e})", residual=res, time=t,
        iteration=max_iter)


def _rk4_step(field_, u, dt):
    k1 = field_(u)
    k2 = field_(u + 0.5 * dt * k1)
    k3 = field_(u + 0.5 * dt * k2)
    k4 = field_(u + dt * k3)
    return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _advance(field_, u, dt, config, t):
    if config.scheme == "implicit_midpoint":
        out = _midpoint_step(field_, u, dt, config.solver_tol, config.max_inner_iters, t)
    else:
        out = _rk4_step(field_, u, dt)
    peak = np.max(np.abs(out))
    if not np.isfinite(peak) or peak > BLOWUP_THRESHOLD:
        raise NumericalError(f"amplitude overflow (sup norm {peak:.3e}) at t={t:g}",
                             time=t)
    return out


def step(u, params, config):
    """Advance ``u`` by one step of size ``config.dt``."""
    a = params.check_state(u)
    t = u.t if isinstance(u, LatticeState) else 0.0
    out = _advance(_Field(params), a, config.dt, config, t)
    return LatticeState(out, t + config.dt)


def _row(a, t, params, tail_M=None, weights=None):
    eps, sigma, delta = params.epsilon, params.sigma, params.delta
    g = params.forcing
    ch = float(np.sum(_abs2(a)))
    l21 = _grad_sq(a) + ch
    V = _potential(a, sigma)
    energy = params.coupling * l21 - V / (sigma + 1.0)
    gu = float(np.sum(g.real * a.real + g.imag * a.imag))
    im_ug = float(np.sum((np.conj(a) * g).imag))
    J = l21 - eps * (V / (sigma + 1.0) - 2.0 * gu)
    Lam = eps * delta * (sigma / (sigma + 1.0) * V + gu) + im_ug
    tail = None
    if tail_M is not None:
        m = (a.size - 1) // 2
        k = 2 * tail_M
        tail = float(np.sum(_abs2(a[:max(m - k, 0)])) + np.sum(_abs2(a[m + k + 1:])))
    wn = None
    if weights is not None:
        wn = float(np.sqrt(np.sum(weights * _abs2(a))))
    return DiagnosticsRow(t=t, charge=ch, energy=energy, l21_sq=l21, J=J, Lambda=Lam,
                          tail_M=tail, weighted_norm=wn)


def integrate(u0, params, config, T, keep_snapshots=False, tail_M=None, weights=None):
    """Integrate to time ``T`` and record diagnostics every ``record_stride`` steps.

    The final time is always recorded.  If ``T`` is not a multiple of ``dt`` the
    last step is shortened.  ``tail_M`` adds the tail mass beyond ``|n| > 2M``
    to each row and ``weights`` (an array of ``w_n``) adds the weighted norm.
    Numerical failures propagate with the failing time attached.
    """
    if not isinstance(u0, LatticeState):
        u0 = LatticeState(u0)
    a = params.check_state(u0).copy()
    T = check_scalar(T, "T", min_val=0.0)
    if weights is not None:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != a.shape:
            raise ValidationError("weights must match the lattice size")
    if tail_M is not None:
        tail_M = check_int(tail_M, "tail_M", min_val=1)
    field_ = _Field(params)
    dt, stride = config.dt, config.record_stride
    n_full = int(math.floor(T / dt + 1e-9))
    rem = T - n_full * dt
    if rem <= 1e-12 * max(T, 1.0):
        rem = 0.0
    n_steps = n_full + (1 if rem > 0 else 0)
    t0 = u0.t

    rows = [_row(a, t0, params, tail_M, weights)]
    snaps = [(t0, LatticeState(a, t0))] if keep_snapshots else None
    t = t0
    for k in range(1, n_steps + 1):
        h = dt if k <= n_full else rem
        try:
            a = _advance(field_, a, h, config, t)
        except NumericalError as exc:
            if exc.time is None:
                exc.time = t
            raise
        t = t0 + (k * dt if k <= n_full else n_full * dt + rem)
        if k % stride == 0 or k == n_steps:
            rows.append(_row(a, t, params, tail_M, weights))
            if keep_snapshots:
                snaps.append((t, LatticeState(a, t)))
    return Trajectory(rows=rows, params=params, config=config, snapshots=snaps,
                      final_state=LatticeState(a, t), tail_M=tail_M)


# -- absorbing ball ------------------------------------------------------------

@dataclass(frozen=True)
class AbsorbingReport:
    rho: float
    rho1: float
    t0_predicted: float
    R: float
    rho2: Optional[float] = None
    t_entry_observed: Optional[float] = None


def absorbing_prediction(norm_g, delta, rho1, R, epsilon=None, sigma=None):
    """Radius ``rho = ||g||/delta`` and entry time ``t0`` into the ball of radius
    ``rho1`` for data with ``||u0|| <= R``.

    ``t0 = log(R^2 / (rho1^2 - rho^2)) / delta``, clipped at 0 for data already
    inside.  With ``epsilon`` and ``sigma`` the ``l2_1`` radius ``rho2`` is added.
    """
    norm_g = check_scalar(norm_g, "norm_g", min_val=0.0)
    delta = check_scalar(delta, "delta", min_val=0.0, include_min=False)
    rho1 = check_scalar(rho1, "rho1", min_val=0.0, include_min=False)
    R = check_scalar(R, "R", min_val=0.0)
    rho = norm_g / delta
    if rho1 <= rho:
        raise ValidationError(
            f"absorbing-ball radius rho1={rho1:g} must exceed ||g||/delta={rho:g}")
    t0 = 0.0
    if R > 0:
        t0 = max(0.0, math.log(R * R / (rho1 * rho1 - rho * rho)) / delta)
    rho2 = None
    if epsilon is not None and sigma is not None:
        rho2_sq = (epsilon * rho1 ** (2 * sigma + 2) + 3 * epsilon * norm_g * rho1
                   + norm_g * rho1 / delta)
        rho2 = math.sqrt(rho2_sq)
    return AbsorbingReport(rho=rho, rho1=rho1, t0_predicted=t0, R=R, rho2=rho2)


def observe_absorption(traj, report):
    """Fill ``t_entry_observed``: the first sample time after which every
    sampled charge stays within ``rho1^2`` (``None`` if the last sample is out)."""
    times, ch = traj.times, traj.column("charge")
    inside = ch <= report.rho1 ** 2
    if inside.size == 0 or not inside[-1]:
        return replace(report, t_entry_observed=None)
    outside = np.flatnonzero(~inside)
    first = 0 if outside.size == 0 else outside[-1] + 1
    return replace(report, t_entry_observed=float(times[first]))


# -- decay audit -----------------------------------------------------------------

@dataclass
class DecayReport:
    gronwall_margin: Optional[float]
    growth_margin: Optional[float]
    j_balance_residual: Optional[float]
    passed: bool
    violations: List[Tuple[str, float, float]] = field(default_factory=list)


def decay_audit(traj, rtol=1e-9, strict=True):
    """Check the trajectory against the a-priori bounds.

    (i) ``||u(t)||^2 <= ||u0||^2 e^{-delta t} + rho^2 (1 - e^{-delta t})`` when
    ``delta > 0``; (ii) in conservative mode
    ``||u(t)||_{l2_1}^2 <= ||u0||_{l2_1}^2 + 2 eps/(sigma+1) ||u0||^{2 sigma + 2}``;
    (iii) the centred-difference residual of ``J'/2 + delta J - Lambda``
    (reported, never a failure).  Margins are ``bound - observed``, minimised
    over samples; ``rtol`` absorbs rounding at equality points such as ``t = 0``.
    """
    if not traj.rows:
        raise ValidationError("empty trajectory")
    p = traj.params
    t = traj.times
    t_rel = t - t[0]
    ch = traj.column("charge")
    violations = []

    gronwall = None
    if p.delta > 0:
        rho_sq = (p.forcing_norm / p.delta) ** 2
        e = np.exp(-p.delta * t_rel)
        bound = ch[0] * e + rho_sq * (1.0 - e)
        margin = bound - ch
        gronwall = float(margin.min())
        slack = rtol * max(ch[0], rho_sq, 1e-300)
        for k in np.flatnonzero(margin < -slack):
            violations.append(("gronwall", float(t[k]), float(margin[k])))

    growth = None
    if p.conservative:
        l21 = traj.column("l21_sq")
        bound = l21[0] + 2.0 * p.epsilon / (p.sigma + 1.0) * ch[0] ** (p.sigma + 1.0)
        margin = bound - l21
        growth = float(margin.min())
        for k in np.flatnonzero(margin < -rtol * max(bound, 1e-300)):
            violations.append(("growth", float(t[k]), float(margin[k])))

    jres = None
    if len(t) >= 3:
        J, Lam = traj.column("J"), traj.column("Lambda")
        dJ = (J[2:] - J[:-2]) / (t[2:] - t[:-2])
        jres = float(np.max(np.abs(0.5 * dJ + p.delta * J[1:-1] - Lam[1:-1])))

    report = DecayReport(gronwall_margin=gronwall, growth_margin=growth,
                         j_balance_residual=jres, passed=not violations,
                         violations=violations)
    if strict and violations:
        kind, tv, mv = violations[0]
        raise AuditFailure(f"{len(violations)} bound violation(s); first: {kind} at "
                           f"t={tv:g} margin={mv:.3e}", violations, report)
    return report
