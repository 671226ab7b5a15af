"""Simulation and diagnostics for the discrete nonlinear Schrödinger lattice

    i u_n' + (1/eps) (A u)_n + i delta u_n + |u_n|^{2 sigma} u_n = g_n

on the Dirichlet box ``n = -m..m``.
"""

from .attractor import (CutoffSpec, TailReport, TruncationReport, WeightSpec,
                        cutoff_theta, damping_condition, semidistance, tail_audit,
                        tail_mass, truncation_delta, weight_constants, weighted_audit,
                        weighted_norm)
from .dynamics import (IntegratorConfig, Trajectory, absorbing_prediction, decay_audit,
                       integrate, observe_absorption, step, vector_field)
from .estimators import LatticeIntegrator, StandingWaveSolver
from .exceptions import AuditFailure, ConvergenceError, NumericalError, ValidationError
from .lattice import (LatticeState, ModelParams, PowerLaw, apply_nonlinearity,
                      apply_operator, charge, functional_report, hamiltonian_energy,
                      j_lambda, norm, norm_l21, stationary_energy, stationary_gradient)
from .stationary import (StandingWave, anticontinuum_seed, contraction_probe,
                         continuation, critical_energy, fixed_point_map,
                         mountain_pass_geometry, newton_standing_wave, solve_Aomega)

__version__ = "0.1.0"

__all__ = [
    "LatticeState", "ModelParams", "PowerLaw", "apply_operator", "norm", "norm_l21",
    "apply_nonlinearity", "charge", "hamiltonian_energy", "stationary_energy",
    "stationary_gradient", "j_lambda", "functional_report",
    "IntegratorConfig", "Trajectory", "vector_field", "step", "integrate",
    "absorbing_prediction", "observe_absorption", "decay_audit",
    "StandingWave", "critical_energy", "solve_Aomega", "fixed_point_map",
    "contraction_probe", "anticontinuum_seed", "newton_standing_wave", "continuation",
    "mountain_pass_geometry",
    "CutoffSpec", "TailReport", "TruncationReport", "WeightSpec", "cutoff_theta",
    "tail_mass", "tail_audit", "truncation_delta", "semidistance", "weight_constants",
    "damping_condition", "weighted_norm", "weighted_audit",
    "LatticeIntegrator", "StandingWaveSolver",
    "ValidationError", "NumericalError", "ConvergenceError", "AuditFailure",
]
