"""scikit-learn style wrappers around the integrator and the standing-wave solver.

Inputs are complex amplitude vectors of odd length rather than feature
matrices; the wrappers exist so parameters can be managed with
``get_params``/``set_params``/``clone`` and results follow the trailing
underscore convention.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .dynamics import IntegratorConfig, integrate
from .lattice import LatticeState, ModelParams
from .stationary import continuation, newton_standing_wave

__all__ = ["LatticeIntegrator", "StandingWaveSolver"]


def _state(X):
    return X if isinstance(X, LatticeState) else LatticeState(X)


class LatticeIntegrator(BaseEstimator):
    """Integrate the lattice from an initial state.

    ``fit(u0)`` runs to time ``T`` and stores ``trajectory_``;
    ``transform(u0)`` returns the amplitudes at ``T``.
    """

    def __init__(self, epsilon=1.0, delta=0.0, sigma=1.0, forcing=None,
                 scheme="implicit_midpoint", dt=0.01, T=1.0, record_stride=10,
                 solver_tol=1e-12):
        self.epsilon = epsilon
        self.delta = delta
        self.sigma = sigma
        self.forcing = forcing
        self.scheme = scheme
        self.dt = dt
        self.T = T
        self.record_stride = record_stride
        self.solver_tol = solver_tol

    def _setup(self, u0):
        params = ModelParams(self.epsilon, self.delta, self.sigma, u0.half_width, self.forcing)
        config = IntegratorConfig(scheme=self.scheme, dt=self.dt, solver_tol=self.solver_tol,
                                  record_stride=self.record_stride)
        return params, config

    def fit(self, X, y=None):
        u0 = _state(X)
        params, config = self._setup(u0)
        self.trajectory_ = integrate(u0, params, config, self.T)
        self.params_ = params
        return self

    def transform(self, X):
        check_is_fitted(self, "trajectory_")
        u0 = _state(X)
        params, config = self._setup(u0)
        return integrate(u0, params, config, self.T).final_state.amplitudes

    def fit_transform(self, X, y=None):
        return self.fit(X).trajectory_.final_state.amplitudes


class StandingWaveSolver(BaseEstimator):
    """Newton solver for standing-wave profiles.

    With ``coupling_schedule`` the seed is continued through the listed
    couplings ``1/eps`` (the last entry is the target) and ``branch_`` holds
    every wave; otherwise a single Newton solve at ``epsilon`` is done.
    """

    def __init__(self, epsilon=1.0, omega=1.0, sigma=1.0, coupling_schedule=None,
                 tol=1e-10, max_iter=50):
        self.epsilon = epsilon
        self.omega = omega
        self.sigma = sigma
        self.coupling_schedule = coupling_schedule
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        seed = _state(X)
        if self.coupling_schedule is None:
            wave = newton_standing_wave(seed, self.epsilon, self.omega, self.sigma,
                                        tol=self.tol, max_iter=self.max_iter)
            self.branch_ = None
        else:
            self.branch_ = continuation(seed, self.omega, self.sigma,
                                        list(self.coupling_schedule), tol=self.tol,
                                        max_iter=self.max_iter)
            wave = self.branch_.waves[-1]
        self.wave_ = wave
        self.profile_ = wave.phi.amplitudes
        self.residual_ = wave.residual
        return self

    def transform(self, X=None):
        check_is_fitted(self, "wave_")
        return np.array(self.profile_)
