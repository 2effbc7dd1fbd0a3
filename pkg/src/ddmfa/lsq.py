"""Local least-squares encoding of one block's data.

The tensor-product collocation operator is a Kronecker product, so the
least-squares problem factors per axis and is solved one axis at a time.
Each axis uses a thin QR factorization rather than the normal equations,
which keeps the error proportional to cond(R) instead of its square.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .bspline import CollocationMatrix, apply_along


class FitError(RuntimeError):
    """Raised when a local collocation matrix is rank deficient."""

    def __init__(self, message, axis=None, control=None):
        super().__init__(message)
        self.axis = axis
        self.control = control


@dataclass
class LocalProblem:
    mats: Sequence[CollocationMatrix]
    values: np.ndarray
    # global control index of local column 0 per axis, for error messages
    offsets: Optional[Sequence[int]] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != len(self.mats):
            raise ValueError("data rank does not match number of collocation matrices")
        for k, R in enumerate(self.mats):
            m, n = R.shape
            if self.values.shape[k] != m:
                raise ValueError(f"axis {k}: {self.values.shape[k]} samples vs {m} rows")
            if m < n:
                raise ValueError(f"axis {k}: underdetermined ({m} samples < {n} controls)")
        if self.offsets is None:
            self.offsets = [0] * len(self.mats)

    @property
    def control_shape(self) -> tuple[int, ...]:
        return tuple(R.n for R in self.mats)


def _solve_axis(A: np.ndarray, X: np.ndarray, axis: int, columns: np.ndarray, offset: int):
    empty = np.flatnonzero(~np.any(A != 0.0, axis=0))
    if empty.size:
        g = int(columns[empty[0]]) + offset
        raise FitError(f"axis {axis}: control {g} has no samples in its support "
                       f"(empty span next to global control {g})", axis, g)
    Qf, Rf = scipy.linalg.qr(A, mode="economic", check_finite=False)
    diag = np.abs(np.diag(Rf))
    bad = np.flatnonzero(diag <= A.shape[1] * np.finfo(float).eps * diag.max())
    if bad.size:
        g = int(columns[bad[0]]) + offset
        raise FitError(f"axis {axis}: collocation matrix is rank deficient near control {g} "
                       f"(sample sites violate the Schoenberg-Whitney condition)", axis, g)
    rhs = np.moveaxis(apply_along(Qf.T, X, axis), axis, 0)
    sol = scipy.linalg.solve_triangular(Rf, rhs.reshape(rhs.shape[0], -1), check_finite=False)
    return np.moveaxis(sol.reshape(rhs.shape), 0, axis)


def fit_unconstrained(problem: LocalProblem) -> np.ndarray:
    """Control lattice minimising ||Q - R P||_2."""
    P = problem.values
    for k, R in enumerate(problem.mats):
        P = _solve_axis(R.toarray(), P, k, np.arange(R.n), problem.offsets[k])
    return np.ascontiguousarray(P)


def fit_with_fixed(problem: LocalProblem, fixed: Sequence[np.ndarray],
                   pinned: np.ndarray) -> np.ndarray:
    """Least squares with some control slabs pinned to given values.

    ``fixed[k]`` masks controls of axis k. A control is pinned when any of its
    axis indices is masked, so the free controls form a tensor product and the
    per-axis solve still applies to the data minus the pinned contribution.
    """
    free = [np.flatnonzero(~np.asarray(f, dtype=bool)) for f in fixed]
    dense = [R.toarray() for R in problem.mats]
    base = np.array(pinned, dtype=np.float64, copy=True)
    base[np.ix_(*free)] = 0.0
    shift = base
    for k, A in enumerate(dense):
        shift = apply_along(A, shift, k)
    X = problem.values - shift
    for k, A in enumerate(dense):
        X = _solve_axis(A[:, free[k]], X, k, free[k], problem.offsets[k])
    base[np.ix_(*free)] = X
    return base


def decode_local(problem: LocalProblem, P: np.ndarray) -> np.ndarray:
    out = np.asarray(P, dtype=np.float64)
    for k, R in enumerate(problem.mats):
        out = apply_along(R.toarray(), out, k)
    return out


def residual_error(problem: LocalProblem, P: np.ndarray):
    """Return (L2 error, Linf error, pointwise error field) of E = Q - R P."""
    E = problem.values - decode_local(problem, P)
    linf = float(np.max(np.abs(E))) if E.size else 0.0
    return float(np.sqrt(np.sum(E * E))), linf, E
