"""Lattice states, model parameters, difference operators and functionals.

The infinite lattice is realised as the Dirichlet box ``n = -m..m``: every
site with ``|n| > m`` is identically zero, so the ghost values read by the
three-point stencils at ``n = ±(m+1)`` are 0.

Norms of difference quotients are taken over the zero-extended sequence on
the whole lattice.  For ``B`` this means the ``2m+2`` edges ``(n, n+1)`` with
``n = -m-1..m``; the edge ``(-m-1, -m)`` carries ``u_{-m}`` and is what keeps
the summation-by-parts identity ``(Au, u) = -||Bu||^2`` exact on the box.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NumericalError, ValidationError
from .validation import check_amplitudes, check_int, check_scalar

__all__ = [
    "LatticeState",
    "ModelParams",
    "FunctionalReport",
    "PowerLaw",
    "apply_operator",
    "norm",
    "norm_l21",
    "apply_nonlinearity",
    "charge",
    "hamiltonian_energy",
    "stationary_energy",
    "stationary_gradient",
    "j_lambda",
    "functional_report",
    "inner",
]


@dataclass(frozen=True, eq=False)
class LatticeState:
    """Complex amplitudes on sites ``-m..m`` at time ``t``.

    The amplitude array is copied and frozen, so states can be shared freely.
    """

    amplitudes: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        a = check_amplitudes(self.amplitudes).copy()
        a.setflags(write=False)
        object.__setattr__(self, "amplitudes", a)
        object.__setattr__(self, "t", check_scalar(self.t, "t", min_val=0.0))

    @property
    def half_width(self):
        return (self.amplitudes.size - 1) // 2

    @property
    def size(self):
        return self.amplitudes.size

    @property
    def sites(self):
        m = self.half_width
        return np.arange(-m, m + 1)

    def __getitem__(self, n):
        """Amplitude at lattice site ``n`` (zero outside the box)."""
        m = self.half_width
        if abs(n) > m:
            return 0j
        return complex(self.amplitudes[n + m])

    def __repr__(self):
        return (f"LatticeState(m={self.half_width}, t={self.t:g}, "
                f"charge={charge(self):.6g})")

    def replace(self, amplitudes=None, t=None):
        return LatticeState(self.amplitudes if amplitudes is None else amplitudes,
                            self.t if t is None else t)

    def resized(self, m, allow_truncation=False):
        """Zero-extend (or truncate) to half width ``m``."""
        m = check_int(m, "m", min_val=0)
        return LatticeState(_resize(self.amplitudes, m, allow_truncation), self.t)

    @classmethod
    def zeros(cls, m, t=0.0):
        m = check_int(m, "m", min_val=0)
        return cls(np.zeros(2 * m + 1, dtype=complex), t)

    @classmethod
    def single_site(cls, m, site=0, value=1.0, t=0.0):
        m = check_int(m, "m", min_val=0)
        if abs(site) > m:
            raise ValidationError(f"site {site} outside lattice [-{m}, {m}]")
        a = np.zeros(2 * m + 1, dtype=complex)
        a[site + m] = value
        return cls(a, t)

    @classmethod
    def from_sites(cls, m, values, t=0.0):
        """Build from a ``{site: amplitude}`` mapping."""
        m = check_int(m, "m", min_val=0)
        a = np.zeros(2 * m + 1, dtype=complex)
        for n, v in values.items():
            if abs(n) > m:
                raise ValidationError(f"site {n} outside lattice [-{m}, {m}]")
            a[n + m] = v
        return cls(a, t)

    @classmethod
    def gaussian(cls, m, center=0.0, width=1.0, charge=1.0, wavenumber=0.0, t=0.0):
        """Gaussian profile ``exp(-(n-c)^2 / (2 w^2) + i k n)`` scaled to ``charge``."""
        m = check_int(m, "m", min_val=0)
        width = check_scalar(width, "width", min_val=0.0, include_min=False)
        charge_ = check_scalar(charge, "charge", min_val=0.0)
        n = np.arange(-m, m + 1)
        a = np.exp(-((n - center) ** 2) / (2.0 * width ** 2) + 1j * wavenumber * n)
        total = np.sum(np.abs(a) ** 2)
        if total == 0.0:
            raise ValidationError("gaussian profile vanishes on the lattice")
        return cls(a * np.sqrt(charge_ / total), t)


def _resize(a, m, allow_truncation=False):
    old = (a.size - 1) // 2
    if m >= old:
        out = np.zeros(2 * m + 1, dtype=a.dtype)
        out[m - old:m + old + 1] = a
        return out
    cut = old - m
    if not allow_truncation and (np.any(a[:cut] != 0) or np.any(a[-cut:] != 0)):
        raise ValidationError(
            f"cannot truncate to half width {m}: nonzero entries beyond |n| = {m}")
    return a[cut:cut + 2 * m + 1].copy()


def _as_array(u):
    if isinstance(u, LatticeState):
        return u.amplitudes
    return check_amplitudes(u)


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Parameters of ``i u' + (1/eps) A u + i delta u + |u|^{2 sigma} u = g``."""

    epsilon: float
    delta: float = 0.0
    sigma: float = 1.0
    half_width: int = 0
    forcing: np.ndarray = field(default=None)

    def __post_init__(self):
        eps = check_scalar(self.epsilon, "epsilon", min_val=0.0, include_min=False,
                           allow_inf=True)
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "delta", check_scalar(self.delta, "delta", min_val=0.0))
        object.__setattr__(self, "sigma", check_scalar(self.sigma, "sigma", min_val=0.0))
        m = check_int(self.half_width, "half_width", min_val=0)
        object.__setattr__(self, "half_width", m)
        if self.forcing is None:
            g = np.zeros(2 * m + 1, dtype=complex)
        else:
            g = check_amplitudes(self.forcing, "forcing", half_width=m).copy()
        g.setflags(write=False)
        object.__setattr__(self, "forcing", g)

    @property
    def coupling(self):
        """Inter-site coupling ``1/epsilon`` (0 in the anti-continuum limit)."""
        return 1.0 / self.epsilon

    @property
    def conservative(self):
        return self.delta == 0.0 and not np.any(self.forcing)

    @property
    def forcing_norm(self):
        return float(np.sqrt(np.sum(_abs2(self.forcing))))

    @property
    def nonlinearity(self):
        return PowerLaw(self.sigma)

    def replace(self, **changes):
        kw = dict(epsilon=self.epsilon, delta=self.delta, sigma=self.sigma,
                  half_width=self.half_width, forcing=self.forcing)
        kw.update(changes)
        return ModelParams(**kw)

    def resized(self, m):
        """Same parameters on half width ``m``; forcing is zero-extended."""
        return self.replace(half_width=m, forcing=_resize(np.asarray(self.forcing), m))

    def check_state(self, u):
        a = _as_array(u)
        if a.size != 2 * self.half_width + 1:
            raise ValidationError(
                f"state has half width {(a.size - 1) // 2}, "
                f"params expect {self.half_width}")
        return a


@dataclass(frozen=True)
class FunctionalReport:
    charge: float
    energy: float
    l21_norm_sq: float
    J: float
    Lambda: float


# -- array kernels -----------------------------------------------------------

def _abs2(a):
    return a.real * a.real + a.imag * a.imag


def _l2(mod, w=None):
    """``sqrt(sum w mod^2)``, rescaled by the peak only if the plain sum under/overflows."""
    with np.errstate(over="ignore", under="ignore"):
        s = float(np.sqrt(np.sum(mod * mod if w is None else w * (mod * mod))))
    if (s == 0.0 or np.isinf(s)) and np.any(mod):
        scaled = mod if w is None else np.sqrt(w) * mod
        peak = scaled.max()
        if np.isfinite(peak):
            s = float(peak * np.sqrt(np.sum((scaled / peak) ** 2)))
    return s


def _pow(p, s):
    """``p**s`` for nonnegative ``p``; integer exponents by multiplication."""
    if s == 0:
        return np.ones_like(p)
    if float(s).is_integer() and s <= 8:
        out = p.copy()
        for _ in range(int(s) - 1):
            out *= p
        return out
    return np.power(p, s)


def _laplacian(a):
    out = -2.0 * a
    out[1:] += a[:-1]
    out[:-1] += a[1:]
    return out


def _forward(a):
    out = -a.copy()
    out[:-1] += a[1:]
    return out


def _backward(a):
    out = -a.copy()
    out[1:] += a[:-1]
    return out


def _edge_differences(a):
    """``u_{n+1} - u_n`` for ``n = -m-1..m`` on the zero-extended sequence."""
    padded = np.zeros(a.size + 2, dtype=a.dtype)
    padded[1:-1] = a
    return np.diff(padded)


def _grad_sq(a):
    return float(np.sum(_abs2(_edge_differences(a))))


def inner(u, v):
    """Real scalar product ``Re sum u_n conj(v_n)``."""
    a, b = _as_array(u), _as_array(v)
    return float(np.sum(a.real * b.real + a.imag * b.imag))


# -- nonlinearity seam -------------------------------------------------------

class PowerLaw:
    """Site map ``z -> f(|z|^2) z`` with ``f(p) = p**sigma``.

    Any object exposing ``rate(p)`` (the function ``f``) and ``rate_derivative(p)``
    can stand in for it wherever a nonlinearity is accepted.
    """

    def __init__(self, sigma):
        self.sigma = check_scalar(sigma, "sigma", min_val=0.0)

    def rate(self, p):
        return _pow(p, self.sigma)

    def rate_derivative(self, p):
        s = self.sigma
        if s == 0:
            return np.zeros_like(p)
        if s >= 1:
            return s * _pow(p, s - 1)
        with np.errstate(divide="ignore"):
            return np.where(p > 0, s * np.power(np.where(p > 0, p, 1.0), s - 1), 0.0)

    def __call__(self, a):
        return self.rate(_abs2(a)) * a

    def __repr__(self):
        return f"PowerLaw(sigma={self.sigma!r})"


# -- public operations -------------------------------------------------------

_OPERATORS = {"B": _forward, "Bstar": _backward, "A": _laplacian}


def apply_operator(kind, u):
    """Apply ``B``, ``Bstar`` or ``A`` with zero ghost values at ``±(m+1)``.

    The result is restricted to the box and keeps the input's time.
    """
    try:
        op = _OPERATORS[kind]
    except KeyError:
        raise ValidationError(
            f"unknown operator {kind!r}; expected one of {sorted(_OPERATORS)}") from None
    if not isinstance(u, LatticeState):
        u = LatticeState(u)
    return LatticeState(op(u.amplitudes), u.t)


def norm(u, p=2):
    """The ``l^p`` norm; ``p = inf`` gives the sup norm."""
    p = check_scalar(p, "p", min_val=1.0, allow_inf=True)
    mod = np.abs(_as_array(u))
    if np.isinf(p):
        return float(mod.max(initial=0.0))
    if p == 2:
        return _l2(mod)
    peak = mod.max(initial=0.0)
    if peak == 0.0:
        return 0.0
    return float(peak * np.sum((mod / peak) ** p) ** (1.0 / p))


def norm_l21(u):
    """``sqrt(||Bu||^2 + ||u||^2)``."""
    a = _as_array(u)
    return float(np.sqrt(_grad_sq(a) + np.sum(_abs2(a))))


def apply_nonlinearity(u, sigma=1.0, nonlinearity=None):
    """Site-wise ``|u_n|^{2 sigma} u_n`` (or a supplied ``f(|z|^2) z``)."""
    if not isinstance(u, LatticeState):
        u = LatticeState(u)
    nl = nonlinearity if nonlinearity is not None else PowerLaw(sigma)
    with np.errstate(over="ignore", invalid="ignore"):
        out = nl(u.amplitudes)
    if not np.all(np.isfinite(out)):
        raise NumericalError("nonlinearity overflowed", time=u.t)
    return LatticeState(out, u.t)


def charge(u):
    a = _as_array(u)
    return float(np.sum(_abs2(a)))


def _potential(a, sigma):
    """``sum |u_n|^{2 sigma + 2}``."""
    p = _abs2(a)
    with np.errstate(over="ignore"):
        v = float(np.sum(_pow(p, sigma + 1.0)))
    if not np.isfinite(v):
        raise NumericalError("potential term overflowed")
    return v


def hamiltonian_energy(u, params):
    """``(1/eps) ||u||_{l2_1}^2 - ||u||_{2s+2}^{2s+2} / (s+1)``; conserved when
    ``delta = 0`` and ``g = 0``."""
    a = params.check_state(u)
    l21 = _grad_sq(a) + float(np.sum(_abs2(a)))
    return params.coupling * l21 - _potential(a, params.sigma) / (params.sigma + 1.0)


def _stationary_args(epsilon, omega, sigma):
    epsilon = check_scalar(epsilon, "epsilon", min_val=0.0, include_min=False,
                           allow_inf=True)
    omega = check_scalar(omega, "omega")
    if omega == 0.0:
        raise ValidationError("omega must be nonzero")
    sigma = check_scalar(sigma, "sigma", min_val=0.0, include_min=False)
    return 1.0 / epsilon, omega, sigma


def stationary_energy(phi, epsilon, omega, sigma):
    """Energy functional whose critical points are standing-wave profiles."""
    c, omega, sigma = _stationary_args(epsilon, omega, sigma)
    a = _as_array(phi)
    return (0.5 * c * _grad_sq(a) + 0.5 * omega ** 2 * float(np.sum(_abs2(a)))
            - _potential(a, sigma) / (2.0 * sigma + 2.0))


def _stationary_residual(a, c, omega, sigma):
    return -c * _laplacian(a) + omega ** 2 * a - _pow(_abs2(a), sigma) * a


def stationary_gradient(phi, epsilon, omega, sigma):
    """``l^2`` representer ``-(1/eps) A phi + omega^2 phi - |phi|^{2 sigma} phi``."""
    c, omega, sigma = _stationary_args(epsilon, omega, sigma)
    if not isinstance(phi, LatticeState):
        phi = LatticeState(phi)
    return LatticeState(_stationary_residual(phi.amplitudes, c, omega, sigma), phi.t)


def j_lambda(u, params):
    """Return ``(J(u), Lambda(u))`` of the dissipative energy balance
    ``J'/2 + delta J = Lambda``."""
    a = params.check_state(u)
    eps, delta, sigma = params.epsilon, params.delta, params.sigma
    g = params.forcing
    l21 = _grad_sq(a) + float(np.sum(_abs2(a)))
    V = _potential(a, sigma)
    gu = float(np.sum(g.real * a.real + g.imag * a.imag))
    im_ug = float(np.sum((np.conj(a) * g).imag))
    if np.isinf(eps):
        raise ValidationError("J and Lambda need a finite epsilon")
    J = l21 - eps * (V / (sigma + 1.0) - 2.0 * gu)
    Lam = eps * delta * (sigma / (sigma + 1.0) * V + gu) + im_ug
    return J, Lam


def functional_report(u, params):
    a = params.check_state(u)
    J, Lam = j_lambda(a, params)
    l21 = _grad_sq(a) + float(np.sum(_abs2(a)))
    return FunctionalReport(charge=charge(a), energy=hamiltonian_energy(a, params),
                            l21_norm_sq=l21, J=J, Lambda=Lam)
