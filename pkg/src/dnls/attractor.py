"""Diagnostics for the dissipative lattice: tails, truncation, weighted spaces."""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .dynamics import absorbing_prediction, integrate
from .exceptions import ValidationError
from .lattice import LatticeState, _abs2, _l2, _resize
from .validation import check_amplitudes, check_int, check_scalar

__all__ = [
    "CutoffSpec",
    "TailReport",
    "WeightSpec",
    "TruncationReport",
    "WeightedReport",
    "cutoff_theta",
    "cutoff_theta_prime",
    "tail_mass",
    "tail_K",
    "tail_audit",
    "truncation_delta",
    "semidistance",
    "weight_constants",
    "damping_condition",
    "weighted_norm",
    "weighted_audit",
]

WEIGHT_FAMILIES = ("exponential_one_sided", "exponential_two_sided")
MAX_WEIGHT_EXPONENT = 300.0


@dataclass(frozen=True)
class CutoffSpec:
    """Smooth cutoff ``theta(|n|/M)``: 0 inside ``|n| <= M``, 1 beyond ``2M``.

    The bridge on ``[1, 2]`` is ``sin^2(pi (s-1)/2)`` so ``C0 = pi/2`` exactly.
    ``C1 = 2 C0`` bounds the commutator term of the tail estimate.
    """

    M: int = 1
    C0: float = math.pi / 2

    def __post_init__(self):
        object.__setattr__(self, "M", check_int(self.M, "M", min_val=1))

    @property
    def C1(self):
        return 2.0 * self.C0


def cutoff_theta(s, spec=None):
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValidationError("cutoff argument must be >= 0")
    out = np.where(s <= 1.0, 0.0,
                   np.where(s >= 2.0, 1.0, np.sin(0.5 * np.pi * (s - 1.0)) ** 2))
    return float(out) if out.ndim == 0 else out


def cutoff_theta_prime(s, spec=None):
    s = np.asarray(s, dtype=float)
    inside = (s > 1.0) & (s < 2.0)
    out = np.where(inside, 0.5 * np.pi * np.sin(np.pi * (s - 1.0)), 0.0)
    return float(out) if out.ndim == 0 else out


def _amps(u):
    return u.amplitudes if isinstance(u, LatticeState) else check_amplitudes(u)


def tail_mass(u, M):
    """``sum_{|n| > 2M} |u_n|^2``."""
    M = check_int(M, "M", min_val=1)
    a = _amps(u)
    m = (a.size - 1) // 2
    k = 2 * M
    if k >= m:
        return 0.0
    return float(np.sum(_abs2(a[:m - k])) + np.sum(_abs2(a[m + k + 1:])))


def _outer_sum(a, M):
    """``sum_{|n| > M} |a_n|^2``."""
    m = (a.size - 1) // 2
    if M >= m:
        return 0.0
    return float(np.sum(_abs2(a[:m - M])) + np.sum(_abs2(a[m + M + 1:])))


@dataclass
class TailReport:
    eta: float
    K_eta: int
    T_eta: float
    t0: float
    bound: float
    C1: float
    M_values: List[int]
    observed_tail: List[Tuple[float, float]]
    max_tail_after_T: Dict[int, float]
    passed: bool
    weighted: bool = False
    bounded: Optional[bool] = None
    norm_bound: Optional[float] = None
    max_weighted_norm_sq: Optional[float] = None


def tail_K(eta, rho1, forcing, delta, C1=math.pi):
    """Smallest ``M >= 1`` with ``2 C1 rho1^2 / M + sum_{|n|>M} |g_n|^2 / delta <= eta``."""
    eta = check_scalar(eta, "eta", min_val=0.0, include_min=False)
    g = np.asarray(forcing, dtype=complex)
    m = (g.size - 1) // 2
    for M in range(1, m + 1):
        if 2.0 * C1 * rho1 ** 2 / M + _outer_sum(g, M) / delta <= eta:
            return M
    return max(m + 1, int(math.ceil(2.0 * C1 * rho1 ** 2 / eta)))


def tail_audit(traj, eta, rho1, spec=None, M_values=None):
    """Check ``sum_{|n|>2M} |u_n|^2 <= 2 eta / delta`` for ``t >= T(eta)``.

    ``K(eta)`` is the smallest admissible cutoff (see ``tail_K``) and
    ``T(eta) = t0 + log(delta rho1^2 / eta) / delta`` with ``t0`` the predicted
    absorbing-ball entry time for ``R = ||u(0)||``.  ``M_values`` defaults to
    ``[K+1, 2K, 4K]``; every value must exceed ``K(eta)``.  Needs snapshots.
    A cutoff with no sample past ``T(eta)`` reports NaN and passes vacuously.
    """
    p = traj.params
    if p.delta <= 0:
        raise ValidationError("tail audit needs a dissipative run (delta > 0)")
    if not traj.snapshots:
        raise ValidationError("tail audit needs a trajectory with snapshots")
    spec = spec or CutoffSpec()
    eta = check_scalar(eta, "eta", min_val=0.0, include_min=False)
    R = math.sqrt(traj.rows[0].charge)
    absorb = absorbing_prediction(p.forcing_norm, p.delta, rho1, R)
    K = tail_K(eta, absorb.rho1, p.forcing, p.delta, spec.C1)
    T_eta = absorb.t0_predicted + math.log(p.delta * rho1 ** 2 / eta) / p.delta
    if M_values is None:
        M_values = [K + 1, 2 * K, 4 * K]
    M_values = [check_int(M, "M", min_val=1) for M in M_values]
    bad = [M for M in M_values if M <= K]
    if bad:
        raise ValidationError(f"tested cutoffs {bad} do not exceed K(eta)={K}")
    bound = 2.0 * eta / p.delta
    t_start = traj.snapshots[0][0]
    M_min = min(M_values)
    observed = [(t, tail_mass(s, M_min)) for t, s in traj.snapshots]
    worst = {}
    for M in M_values:
        vals = [tail_mass(s, M) for t, s in traj.snapshots if t - t_start >= T_eta]
        worst[M] = max(vals) if vals else math.nan
    passed = all(not v > bound for v in worst.values())
    return TailReport(eta=eta, K_eta=K, T_eta=T_eta, t0=absorb.t0_predicted,
                      bound=bound, C1=spec.C1, M_values=M_values,
                      observed_tail=observed, max_tail_after_T=worst, passed=passed)


@dataclass
class TruncationReport:
    m_values: List[int]
    m_ref: int
    interval: Tuple[float, float]
    deltas: List[float]
    monotone: bool


def truncation_delta(u0_set, params, m_values, m_ref, T, config, max_workers=1):
    """``delta_m(I) = max_{u0, t in I} ||S_m(t) u0 - S_ref(t) u0||`` on ``I = [0, T]``.

    Each truncated solution is zero-extended to the reference lattice; ``t``
    ranges over the recorded samples.  The forcing of ``params`` and every
    initial state must vanish outside the smallest lattice.  With
    ``max_workers > 1`` the integrations run in a thread pool; results are
    merged in ``m`` order, so the report does not depend on scheduling.
    """
    m_values = [check_int(m, "m", min_val=1) for m in m_values]
    m_ref = check_int(m_ref, "m_ref", min_val=1)
    if not m_values:
        raise ValidationError("m_values is empty")
    if m_ref < max(m_values):
        raise ValidationError("m_ref must be at least max(m_values)")
    u0_set = list(u0_set)
    if not u0_set:
        raise ValidationError("u0_set is empty")
    m_min = min(m_values)
    try:
        base = [LatticeState(_resize(_amps(u), m_min)) for u in u0_set]
        params.resized(m_min)
    except ValidationError as exc:
        raise ValidationError(f"data must be supported within |n| <= {m_min}: {exc}")

    def run(u, m):
        traj = integrate(u.resized(m), params.resized(m), config, T, keep_snapshots=True)
        return [_resize(s.amplitudes, m_ref) for _, s in traj.snapshots]

    jobs = [(i, m) for m in [m_ref] + m_values for i in range(len(base))]
    max_workers = check_int(max_workers, "max_workers", min_val=1)
    if max_workers == 1:
        results = [run(base[i], m) for i, m in jobs]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(lambda job: run(base[job[0]], job[1]), jobs))
    nb = len(base)
    ref_runs = results[:nb]
    deltas = []
    for k, m in enumerate(m_values):
        worst = 0.0
        for i in range(nb):
            for x, r in zip(results[nb * (k + 1) + i], ref_runs[i]):
                worst = max(worst, float(np.sqrt(np.sum(_abs2(x - r)))))
        deltas.append(worst)
    monotone = all(b < a for a, b in zip(deltas, deltas[1:]))
    return TruncationReport(m_values=m_values, m_ref=m_ref, interval=(0.0, float(T)),
                            deltas=deltas, monotone=monotone)


def semidistance(A, B):
    """``sup_{x in A} inf_{y in B} ||x - y||`` after zero-extension to a common width."""
    A, B = [_amps(x) for x in A], [_amps(y) for y in B]
    if not A or not B:
        raise ValidationError("semidistance needs two nonempty sets")
    m = max((x.size - 1) // 2 for x in A + B)
    XA = np.array([_resize(x, m) for x in A])
    XB = np.array([_resize(y, m) for y in B])
    d = np.sqrt(np.sum(_abs2(XA[:, None, :] - XB[None, :, :]), axis=2))
    return float(d.min(axis=1).max())


@dataclass(frozen=True)
class WeightSpec:
    """Exponential weight family with rate ``lam``.

    ``exponential_two_sided``: ``w_n = exp(lam |n|)``.
    ``exponential_one_sided``: ``w_n = exp(lam (n + m))`` on the box ``-m..m``;
    the ratio ``w_{n+1}/w_n = exp(lam)`` is the same as for ``exp(lam n)`` and
    the shift keeps ``w_n >= 1``.
    """

    family: str = "exponential_two_sided"
    lam: float = 0.1
    d1: float = field(init=False)
    d2_lower: float = field(init=False)

    def __post_init__(self):
        if self.family not in WEIGHT_FAMILIES:
            raise ValidationError(
                f"weight family must be one of {WEIGHT_FAMILIES}, got {self.family!r}")
        lam = check_scalar(self.lam, "lambda", min_val=0.0)
        object.__setattr__(self, "lam", lam)
        d1 = math.expm1(lam)
        d2 = math.exp(lam) if self.family == "exponential_one_sided" else math.exp(-lam)
        object.__setattr__(self, "d1", d1)
        object.__setattr__(self, "d2_lower", d2)

    def weights(self, m):
        m = check_int(m, "m", min_val=0)
        if self.lam * m > MAX_WEIGHT_EXPONENT:
            raise ValidationError(
                f"lambda*m = {self.lam * m:g} exceeds {MAX_WEIGHT_EXPONENT:g}; "
                "weights would overflow")
        n = np.arange(-m, m + 1)
        if self.family == "exponential_one_sided":
            return np.exp(self.lam * (n + m))
        return np.exp(self.lam * np.abs(n))


def weight_constants(spec, n_range):
    """``(sup |w_{n+1} - w_n| / w_n, inf w_{n+1} / w_n)`` over ``|n| <= n_range``."""
    n_range = check_int(n_range, "n_range", min_val=1)
    w = spec.weights(n_range)
    ratio = w[1:] / w[:-1]
    return float(np.max(np.abs(ratio - 1.0))), float(np.min(ratio))


def damping_condition(delta, spec):
    """``(passed, slack)`` with ``slack = delta/2 - 2 d1 d2^{-1/2}``.

    For the one-sided family this reads ``delta >= 8 sinh(lam/2)``.
    """
    delta = check_scalar(delta, "delta", min_val=0.0)
    slack = delta / 2.0 - 2.0 * spec.d1 / math.sqrt(spec.d2_lower)
    return bool(slack >= 0.0), float(slack)


def weighted_norm(u, spec):
    """``(sum w_n |u_n|^2)^{1/2}``."""
    a = _amps(u)
    w = spec.weights((a.size - 1) // 2)
    return _l2(np.abs(a), w)


def weighted_tail(u, spec, M):
    """``sum_{|n| > 2M} w_n |u_n|^2``."""
    M = check_int(M, "M", min_val=1)
    a = _amps(u)
    m = (a.size - 1) // 2
    k = 2 * M
    if k >= m:
        return 0.0
    wa = spec.weights(m) * _abs2(a)
    return float(np.sum(wa[:m - k]) + np.sum(wa[m + k + 1:]))


WeightedReport = TailReport


def weighted_audit(traj, spec, eta, M, rtol=1e-6):
    """Weighted absorbing-ball and tail checks along a dissipative trajectory.

    With ``kappa = delta/2 - 2 d1 d2^{-1/2} > 0`` the weighted energy obeys
    ``||u(t)||_w^2 <= ||u0||_w^2 e^{-2 kappa t} + ||g||_w^2 (1 - e^{-2 kappa t})
    / (2 kappa delta)``; every sample is checked against this envelope (up to
    ``rtol``).  The weighted tail beyond ``|n| > 2M`` is compared with
    ``2 eta / delta`` once the transient ``||u0||_w^2 e^{-2 kappa t}`` has
    dropped below ``eta / delta``.  Tail entries are NaN when no sample lies
    beyond ``T(eta)``; such runs pass vacuously.
    """
    p = traj.params
    ok, slack = damping_condition(p.delta, spec)
    if not ok or slack == 0.0:
        raise ValidationError(
            f"damping condition delta/2 - 2 d1 d2^(-1/2) > 0 violated "
            f"(delta={p.delta:g}, slack={slack:.6g})")
    if not traj.snapshots:
        raise ValidationError("weighted audit needs a trajectory with snapshots")
    eta = check_scalar(eta, "eta", min_val=0.0, include_min=False)
    M = check_int(M, "M", min_val=1)
    m = p.half_width
    w = spec.weights(m)
    gw = float(np.sum(w * _abs2(np.asarray(p.forcing))))
    kappa = slack
    t_start, u0 = traj.snapshots[0]
    n0 = weighted_norm(u0, spec) ** 2
    plateau = gw / (2.0 * kappa * p.delta)
    norm_bound = max(n0, plateau)
    bounded = True
    max_wn = 0.0
    for t, s in traj.snapshots:
        e = math.exp(-2.0 * kappa * (t - t_start))
        env = n0 * e + plateau * (1.0 - e)
        val = weighted_norm(s, spec) ** 2
        max_wn = max(max_wn, val)
        if val > env * (1.0 + rtol) + 1e-300:
            bounded = False
    T_eta = 0.0
    if n0 > eta / p.delta:
        T_eta = math.log(p.delta * n0 / eta) / (2.0 * kappa)
    bound = 2.0 * eta / p.delta
    observed = [(t, weighted_tail(s, spec, M)) for t, s in traj.snapshots]
    late = [v for t, v in observed if t - t_start >= T_eta]
    worst = max(late) if late else math.nan
    return TailReport(eta=eta, K_eta=M - 1, T_eta=T_eta, t0=0.0, bound=bound, C1=math.nan,
                      M_values=[M], observed_tail=observed,
                      max_tail_after_T={M: worst}, passed=bounded and not worst > bound,
                      weighted=True, bounded=bounded, norm_bound=norm_bound,
                      max_weighted_norm_sq=max_wn)
