"""Second-order perturbation theory for the finite-temperature Hubbard
4-point function, with rigorous volume-independent remainder bounds and
exact-diagonalization cross-checks on desk-scale lattices."""

from .model import ModelParams, Momentum, Site, dispersion, hopping_matrix, momentum_grid
from .propagator import (
    DiscreteCovariance,
    Propagator,
    build_discrete_covariance,
    decay_D,
    decay_Dh,
    det_covariance,
    determinant_bound_sample,
    matsubara_diagonalize,
)
from .perturb import (
    PerturbationCoefficients,
    SiteQuad,
    coeff_a0,
    coeff_a1,
    coeff_a2,
    coefficients,
    g_lambda_derivative,
    nested_exp_integral,
    ordered_sum_identity_check,
    series_eval,
)
from .bounds import (
    D_upper_2d,
    R_bound,
    TailBound,
    coeff_bound,
    error_table,
    f_closed,
    f_series,
    remainder_bound,
    tree_count,
    tree_count_bruteforce,
)
from .fock_oracle import (
    FockBasis,
    FockOperator,
    annihilation,
    build_H,
    coeff_fit,
    correlation_exact,
    creation,
    lambda_derivative_check,
    thermal_expectation,
)
from .grassmann_check import P_h_truncated, convergence_study, partition_ratio_exact

__all__ = [name for name in dir() if not name.startswith("_")]
