"""Domain-decomposed tensor-product B-spline fitting of gridded data."""
from .bspline import (KnotVector, basis_derivs, basis_funs, collocation_matrix, decode,
                      eval_deriv, find_span, make_knot_vector)
from .datasets import Field, GENERATORS, read_raw_grid, write_raw_grid
from .decomposition import Decomposition, LayoutError, compression_ratio, delta_width, partition
from .lsq import FitError, LocalProblem, fit_unconstrained, fit_with_fixed, residual_error
from .runtime import BlockMessage, ExchangeFault, exchange_volume, run_epoch
from .solver import (SolverConfig, continuity_probe, convergence_metric, enforce_constraints,
                     jump_residuals, solve)
from .storage import MfaModel, read_mfa, write_error_profile, write_mfa

__all__ = [
    "KnotVector", "basis_derivs", "basis_funs", "collocation_matrix", "decode", "eval_deriv",
    "find_span", "make_knot_vector", "Field", "GENERATORS", "read_raw_grid", "write_raw_grid",
    "Decomposition", "LayoutError", "compression_ratio", "delta_width", "partition",
    "FitError", "LocalProblem", "fit_unconstrained", "fit_with_fixed", "residual_error",
    "BlockMessage", "ExchangeFault", "exchange_volume", "run_epoch", "SolverConfig",
    "continuity_probe", "convergence_metric", "enforce_constraints", "jump_residuals", "solve",
    "MfaModel", "read_mfa", "write_error_profile", "write_mfa",
]
__version__ = "0.1.0"
