"""B-spline basis evaluation, collocation matrices and tensor-product decoding.

All weights are 1, so the rational basis reduces to the plain Cox-de Boor
basis and no denominator is ever formed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

Array = np.ndarray


@dataclass(frozen=True)
class KnotVector:
    degree: int
    knots: Array
    clamp_left: bool = True
    clamp_right: bool = True

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=np.float64)
        object.__setattr__(self, "knots", knots)
        p = self.degree
        if p < 1:
            raise ValueError(f"degree must be >= 1, got {p}")
        if knots.ndim != 1 or len(knots) < 2 * (p + 1):
            raise ValueError("knot vector too short for degree %d" % p)
        if np.any(np.diff(knots) < 0):
            raise ValueError("knots must be non-decreasing")
        _, counts = np.unique(knots, return_counts=True)
        if counts.max() > p + 1:
            raise ValueError("knot multiplicity exceeds degree + 1")
        if self.clamp_left and not np.all(knots[: p + 1] == knots[0]):
            raise ValueError("clamped left end needs p+1 equal knots")
        if self.clamp_right and not np.all(knots[-(p + 1):] == knots[-1]):
            raise ValueError("clamped right end needs p+1 equal knots")

    @property
    def n(self) -> int:
        """Number of basis functions."""
        return len(self.knots) - self.degree - 1

    @property
    def domain(self) -> tuple[float, float]:
        """Parameter range on which the basis is a partition of unity."""
        return float(self.knots[self.degree]), float(self.knots[self.n])

    def greville(self) -> Array:
        p = self.degree
        idx = np.arange(self.n)[:, None] + np.arange(1, p + 1)[None, :]
        return self.knots[idx].mean(axis=1)

    def __eq__(self, other):
        if not isinstance(other, KnotVector):
            return NotImplemented
        return (self.degree == other.degree
                and self.clamp_left == other.clamp_left
                and self.clamp_right == other.clamp_right
                and np.array_equal(self.knots, other.knots))

    __hash__ = None


@dataclass
class SpanBasis:
    span: int
    values: Array
    derivs: Optional[Array] = None


@dataclass
class CollocationMatrix:
    """Banded collocation matrix: row j is nonzero in columns first[j]..first[j]+p."""

    first: Array
    values: Array
    n: int

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.first), self.n

    @property
    def degree(self) -> int:
        return self.values.shape[1] - 1

    def toarray(self) -> Array:
        m, n = self.shape
        out = np.zeros((m, n))
        cols = self.first[:, None] + np.arange(self.degree + 1)[None, :]
        np.put_along_axis(out, cols, self.values, axis=1)
        return out

    def columns(self, start: int, stop: int) -> "CollocationMatrix":
        """Restrict to columns [start, stop); rows must have all support inside."""
        if np.any(self.first < start) or np.any(self.first + self.degree >= stop):
            raise ValueError("row support leaves the requested column window")
        return CollocationMatrix(self.first - start, self.values, stop - start)


def make_knot_vector(p: int, n: int, a: float = 0.0, b: float = 1.0,
                     clamp_left: bool = True, clamp_right: bool = True) -> KnotVector:
    """Uniform knot vector with ``n`` basis functions over [a, b].

    Floating ends continue the interior spacing past the range boundary.
    """
    if n < p + 1:
        raise ValueError(f"need at least p+1={p + 1} basis functions, got {n}")
    if not a < b:
        raise ValueError(f"empty parameter range [{a}, {b}]")
    nspans = n - p
    h = (b - a) / nspans
    inner = a + h * np.arange(nspans + 1)
    inner[-1] = b
    left = np.full(p, a) if clamp_left else a - h * np.arange(p, 0, -1)
    right = np.full(p, b) if clamp_right else b + h * np.arange(1, p + 1)
    return KnotVector(p, np.concatenate([left, inner, right]), clamp_left, clamp_right)


def find_spans(kv: KnotVector, u) -> Array:
    """Vectorised span lookup with the half-open convention."""
    u = np.asarray(u, dtype=np.float64)
    lo, hi = kv.domain
    if np.any(u < lo) or np.any(u > hi):
        raise ValueError(f"parameter outside evaluable range [{lo}, {hi}]")
    p, n = kv.degree, kv.n
    span = np.searchsorted(kv.knots, u, side="right") - 1
    # right endpoint belongs to the last nonempty span
    last = n - 1
    while kv.knots[last] == kv.knots[last + 1]:
        last -= 1
    return np.clip(span, p, last)


def find_span(kv: KnotVector, u: float) -> int:
    return int(find_spans(kv, np.array([u]))[0])


def _basis_batch(knots: Array, p: int, spans: Array, u: Array) -> Array:
    m = len(u)
    N = np.zeros((m, p + 1))
    N[:, 0] = 1.0
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = u - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - u
        saved = np.zeros(m)
        for r in range(j):
            temp = N[:, r] / (right[:, r + 1] + left[:, j - r])
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved
    return N


def _derivs_batch(knots: Array, p: int, spans: Array, u: Array, k: int) -> Array:
    """Rows 0..k of basis derivatives, shape (m, k+1, p+1)."""
    m = len(u)
    ndu = np.zeros((m, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = u - knots[spans + 1 - j]
        right[:, j] = knots[spans + j] - u
        saved = np.zeros(m)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((m, k + 1, p + 1))
    ders[:, 0, :] = ndu[:, :, p]
    a = np.zeros((m, 2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[:] = 0.0
        a[:, 0, 0] = 1.0
        for kk in range(1, k + 1):
            d = np.zeros(m)
            rk, pk = r - kk, p - kk
            if r >= kk:
                a[:, s2, 0] = a[:, s1, 0] / ndu[:, pk + 1, rk]
                d = a[:, s2, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = kk - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[:, s2, j] = (a[:, s1, j] - a[:, s1, j - 1]) / ndu[:, pk + 1, rk + j]
                d = d + a[:, s2, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[:, s2, kk] = -a[:, s1, kk - 1] / ndu[:, pk + 1, r]
                d = d + a[:, s2, kk] * ndu[:, r, pk]
            ders[:, kk, r] = d
            s1, s2 = s2, s1
    fac = float(p)
    for kk in range(1, k + 1):
        ders[:, kk, :] *= fac
        fac *= p - kk
    return ders


def basis_funs(kv: KnotVector, span: int, u: float) -> SpanBasis:
    vals = _basis_batch(kv.knots, kv.degree, np.array([span]), np.array([float(u)]))
    return SpanBasis(span, vals[0])


def basis_derivs(kv: KnotVector, span: int, u: float, k: int) -> SpanBasis:
    if not 0 <= k <= kv.degree:
        raise ValueError(f"derivative order {k} outside [0, {kv.degree}]")
    d = _derivs_batch(kv.knots, kv.degree, np.array([span]), np.array([float(u)]), k)[0]
    return SpanBasis(span, d[0].copy(), d)


def collocation_matrix(kv: KnotVector, params, deriv: int = 0,
                       span_range: Optional[tuple[int, int]] = None) -> CollocationMatrix:
    """Banded collocation matrix of ``kv`` at sorted ``params``.

    ``span_range`` restricts the polynomial pieces to knot intervals
    [lo, hi); a parameter sitting on knot ``hi`` then uses the piece to its
    left, which keeps every row inside the controls of that range.
    """
    params = np.asarray(params, dtype=np.float64)
    if np.any(np.diff(params) < 0):
        raise ValueError("collocation parameters must be sorted ascending")
    spans = find_spans(kv, params)
    if span_range is not None:
        lo, hi = span_range
        spans = np.clip(spans, lo, hi - 1)
        # skip zero-length intervals when clipping from the right
        while hi - 1 > lo and kv.knots[hi - 1] == kv.knots[hi]:
            hi -= 1
        spans = np.minimum(spans, hi - 1)
    if deriv:
        vals = _derivs_batch(kv.knots, kv.degree, spans, params, deriv)[:, deriv, :]
    else:
        vals = _basis_batch(kv.knots, kv.degree, spans, params)
    return CollocationMatrix(spans - kv.degree, vals, kv.n)


def apply_along(matrix: Array, X: Array, axis: int) -> Array:
    """Multiply ``matrix`` into axis ``axis`` of ``X``."""
    Y = np.tensordot(matrix, X, axes=([1], [axis]))
    return np.moveaxis(Y, 0, axis)


def decode(P: Array, kvs: Sequence[KnotVector], params: Sequence[Array]) -> Array:
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != len(kvs) or P.ndim != len(params):
        raise ValueError("lattice rank, knot vectors and parameter grids disagree")
    for k, kv in enumerate(kvs):
        if P.shape[k] != kv.n:
            raise ValueError(f"axis {k}: lattice has {P.shape[k]} controls, knots give {kv.n}")
    out = P
    for k, (kv, u) in enumerate(zip(kvs, params)):
        out = apply_along(collocation_matrix(kv, u).toarray(), out, k)
    return out


def eval_deriv(P: Array, kvs: Sequence[KnotVector], point: Sequence[float],
               orders: Optional[Sequence[int]] = None,
               spans: Optional[Sequence[int]] = None) -> float:
    """Mixed partial derivative of the tensor-product spline at one point.

    ``spans`` forces the polynomial piece used per axis, which gives
    one-sided limits at knots.
    """
    d = len(kvs)
    orders = [0] * d if orders is None else list(orders)
    if len(point) != d or len(orders) != d:
        raise ValueError("point/orders rank does not match the knot vectors")
    local = np.asarray(P, dtype=np.float64)
    for k in reversed(range(d)):
        kv = kvs[k]
        if orders[k] > kv.degree:
            raise ValueError(f"derivative order {orders[k]} exceeds degree {kv.degree}")
        span = find_span(kv, point[k]) if spans is None else int(spans[k])
        row = basis_derivs(kv, span, point[k], orders[k]).derivs[orders[k]]
        sl = local.take(np.arange(span - kv.degree, span + 1), axis=k)
        local = np.tensordot(sl, row, axes=([k], [0]))
    return float(local)
