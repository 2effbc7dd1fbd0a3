"""Regular block decomposition over a single global knot/control index space.

Every axis carries one global knot vector, clamped at the global ends. Each
block owns a range of knot spans (its Omega range); at interior faces the
local fit range is widened by the mandatory shared spans (``delta_width``)
plus the optional overlap. A block's local controls are all controls whose
support touches its widened span range. Controls held by more than one block
are the shared DoFs.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bspline import KnotVector, collocation_matrix, make_knot_vector

Range = tuple[int, int]
Box = tuple[Range, ...]


class LayoutError(ValueError):
    pass


def delta_width(p: int) -> int:
    """Number of knot spans shared at an interior face for degree ``p``."""
    if p < 1:
        raise ValueError(f"degree must be >= 1, got {p}")
    return p // 2


def box_intersection(a: Box, b: Box) -> Optional[Box]:
    out = []
    for (a0, a1), (b0, b1) in zip(a, b):
        lo, hi = max(a0, b0), min(a1, b1)
        if lo >= hi:
            return None
        out.append((lo, hi))
    return tuple(out)


def box_size(box: Box) -> int:
    return int(np.prod([hi - lo for lo, hi in box]))


def box_slices(box: Box, origin: Sequence[int]) -> tuple[slice, ...]:
    return tuple(slice(lo - o, hi - o) for (lo, hi), o in zip(box, origin))


@dataclass
class AxisLayout:
    """Per-axis decomposition data; block ``b`` refers to the block coordinate on this axis."""

    kv: KnotVector
    params: np.ndarray
    nblocks: int
    omega: list[Range]          # knot-interval index ranges
    delta: list[Range]          # (left, right) mandatory shared span counts
    overlap: list[Range]        # (left, right) optional overlap span counts
    local_spans: list[Range]    # knot-interval index ranges of Omega + Delta + delta
    local_ctrl: list[Range]
    owned_ctrl: list[Range]
    inputs: list[Range]
    interfaces: list[float]     # parameter value of each interior block face

    @property
    def n_ctrl(self) -> int:
        return self.kv.n

    @property
    def n_inputs(self) -> int:
        return len(self.params)

    def holders(self, c: int) -> list[int]:
        return [b for b, (lo, hi) in enumerate(self.local_ctrl) if lo <= c < hi]

    def holder_counts(self) -> np.ndarray:
        counts = np.zeros(self.n_ctrl, dtype=np.int64)
        for lo, hi in self.local_ctrl:
            counts[lo:hi] += 1
        return counts

    def adjacent(self, b: int) -> list[int]:
        lo, hi = self.local_ctrl[b]
        return [c for c, (l2, h2) in enumerate(self.local_ctrl) if max(lo, l2) < min(hi, h2)]


@dataclass
class GlobalLayout:
    axes: list[AxisLayout]
    degree: int
    overlap: int
    clamp_interfaces: bool
    bounds: list[tuple[float, float]]

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def block_counts(self) -> tuple[int, ...]:
        return tuple(a.nblocks for a in self.axes)

    @property
    def nblocks(self) -> int:
        return int(np.prod(self.block_counts))

    @property
    def ctrl_shape(self) -> tuple[int, ...]:
        return tuple(a.n_ctrl for a in self.axes)

    @property
    def input_shape(self) -> tuple[int, ...]:
        return tuple(a.n_inputs for a in self.axes)

    @property
    def knot_vectors(self) -> list[KnotVector]:
        return [a.kv for a in self.axes]


@dataclass
class BlockLayout:
    id: int
    coords: tuple[int, ...]
    omega: list[Range]
    delta: list[Range]
    overlap: list[Range]
    local_spans: list[Range]
    inputs: Box
    local_box: Box
    owned_box: Box
    neighbors: list[int] = field(default_factory=list)
    face_neighbors: list[int] = field(default_factory=list)

    @property
    def local_shape(self) -> tuple[int, ...]:
        return tuple(hi - lo for lo, hi in self.local_box)

    @property
    def origin(self) -> tuple[int, ...]:
        return tuple(lo for lo, _ in self.local_box)

    def ghost_mask(self) -> np.ndarray:
        """Boolean mask over the local box marking controls this block does not own."""
        mask = np.ones(self.local_shape, dtype=bool)
        inner = box_intersection(self.local_box, self.owned_box)
        if inner is not None:
            mask[box_slices(inner, self.origin)] = False
        return mask

    def ghost_indices(self) -> list[tuple[int, ...]]:
        idx = np.argwhere(self.ghost_mask()) + np.asarray(self.origin)
        return [tuple(int(v) for v in row) for row in idx]


class SharedDofMap:
    """Participating blocks and weights of every shared control.

    Holder sets factor per axis, so they are stored per axis and expanded on
    demand; ``entries`` materialises the full map for small problems.
    """

    SINGLY = "singly-shared"
    MULTI = "multi-shared"

    def __init__(self, layout: GlobalLayout):
        self.layout = layout
        self._counts = [a.holder_counts() for a in layout.axes]

    def n_shared(self, index: Sequence[int]) -> int:
        return int(np.prod([c[i] for c, i in zip(self._counts, index)]))

    def holders(self, index: Sequence[int]) -> list[int]:
        per_axis = [a.holders(i) for a, i in zip(self.layout.axes, index)]
        counts = self.layout.block_counts
        return sorted(int(np.ravel_multi_index(c, counts)) for c in itertools.product(*per_axis))

    def counts_on(self, box: Box) -> np.ndarray:
        """n_s for every control of ``box`` (outer product of per-axis counts)."""
        out = np.ones((), dtype=np.int64)
        for k, (lo, hi) in enumerate(box):
            out = np.multiply.outer(out, self._counts[k][lo:hi])
        return out

    @classmethod
    def classify(cls, n_s: int) -> Optional[str]:
        if n_s == 2:
            return cls.SINGLY
        if n_s > 2:
            return cls.MULTI
        return None

    def weight(self, index: Sequence[int]) -> float:
        return 1.0 / self.n_shared(index)

    def shared_indices(self) -> np.ndarray:
        counts = self.counts_on(tuple((0, n) for n in self.layout.ctrl_shape))
        return np.argwhere(counts >= 2)

    def entries(self) -> dict:
        out = {}
        for row in self.shared_indices():
            g = tuple(int(v) for v in row)
            ids = self.holders(g)
            out[g] = (ids, 1.0 / len(ids), self.classify(len(ids)))
        return out


@dataclass
class Decomposition:
    layout: GlobalLayout
    blocks: list[BlockLayout]
    shared: SharedDofMap

    def plan(self, routing: str = "direct") -> dict[int, list[tuple[int, Box]]]:
        """Destination blocks and shared control boxes for every block."""
        out = {}
        for blk in self.blocks:
            dests = blk.neighbors if routing == "direct" else blk.face_neighbors
            entries = []
            for j in dests:
                box = box_intersection(blk.local_box, self.blocks[j].local_box)
                if box is not None:
                    entries.append((j, box))
            out[blk.id] = entries
        return out


def _split(total: int, parts: int) -> list[Range]:
    return [((b * total) // parts, ((b + 1) * total) // parts) for b in range(parts)]


def _floating_axis(params, nb, n, p, overlap) -> AxisLayout:
    kv = make_knot_vector(p, n, 0.0, 1.0)
    S = n - p
    dw = delta_width(p)
    omega, delta, over, local = [], [], [], []
    for s0, s1 in _split(S, nb):
        dl = (dw, overlap) if s0 > 0 else (0, 0)
        dr = (dw, overlap) if s1 < S else (0, 0)
        lo = max(0, s0 - dl[0] - dl[1])
        hi = min(S, s1 + dr[0] + dr[1])
        omega.append((s0 + p, s1 + p))
        delta.append((dl[0], dr[0]))
        over.append((dl[1], dr[1]))
        local.append((lo + p, hi + p))
    return _finish_axis(kv, params, omega, delta, over, local)


def _clamped_axis(params, nb, n, p) -> AxisLayout:
    # interior faces snap to input samples so the pinned interface control
    # interpolates a real data value
    m = len(params)
    faces = [params[int(round(b * (m - 1) / nb))] for b in range(1, nb)]
    edges = [0.0] + faces + [1.0]
    if np.any(np.diff(edges) <= 0):
        raise LayoutError("too few input samples for the requested block count")
    # n = spans + nb*(p-1) + 1 with multiplicity-p face knots
    total = n - nb * (p - 1) - 1
    per =[hi - lo for lo, hi in _split(total, nb)]
    if min(per) < 1:
        raise LayoutError("controls per block too small for clamped interfaces")
    knots = [0.0] * (p + 1)
    for b in range(nb):
        a, c = edges[b], edges[b + 1]
        knots += list(a + (c - a) * np.arange(1, per[b]) / per[b])
        knots += [c] * (p if b < nb - 1 else p + 1)
    kv = KnotVector(p, np.array(knots))
    if kv.n != n:
        raise LayoutError(f"internal: clamped knot vector has {kv.n} controls, expected {n}")
    omega, pos = [], p
    for b in range(nb):
        start = pos
        pos += per[b]
        omega.append((start, pos))
        pos += p - 1  # zero-length intervals of the repeated face knot
    zero = [(0, 0)] * nb
    return _finish_axis(kv, params, omega, zero, zero, list(omega))


def _finish_axis(kv, params, omega, delta, over, local) -> AxisLayout:
    p = kv.degree
    knots = kv.knots
    nb = len(omega)
    local_ctrl = [(lo - p, hi) for lo, hi in local]
    gv = kv.greville()
    owner = np.full(kv.n, -1)
    for b, (j0, j1) in enumerate(omega):
        inside = (gv >= knots[j0]) & (gv <= knots[j1]) & (owner < 0)
        owner[inside] = b
    if np.any(owner < 0):
        raise LayoutError("internal: a control has no owner")
    owned = []
    for b in range(nb):
        idx = np.flatnonzero(owner == b)
        if idx.size == 0:
            raise LayoutError(f"block {b} owns no controls; use fewer blocks or more controls")
        owned.append((int(idx[0]), int(idx[-1]) + 1))
        lo, hi = local_ctrl[b]
        if owned[-1][0] < lo or owned[-1][1] > hi:
            raise LayoutError("internal: owned controls outside the local support")
    inputs = []
    for lo, hi in local:
        i0 = int(np.searchsorted(params, knots[lo], side="left"))
        i1 = int(np.searchsorted(params, knots[hi], side="right"))
        inputs.append((i0, i1))
    interfaces = [float(knots[j1]) for _, j1 in omega[:-1]]
    return AxisLayout(kv, np.asarray(params), nb, list(omega), list(delta), list(over),
                      list(local), local_ctrl, owned, inputs, interfaces)


def _check_axis(axis: AxisLayout, k: int) -> None:
    nb = axis.nblocks
    for b in range(nb):
        lo, hi = axis.local_spans[b]
        if b > 0 and lo < axis.omega[b - 1][0]:
            raise LayoutError(f"axis {k}: overlap of block {b} reaches past its left neighbor")
        if b < nb - 1 and hi > axis.omega[b + 1][1]:
            raise LayoutError(f"axis {k}: overlap of block {b} reaches past its right neighbor")
        if b + 2 < nb and axis.local_ctrl[b][1] > axis.local_ctrl[b + 2][0]:
            raise LayoutError(
                f"axis {k}: blocks {b} and {b + 2} share controls; overlap must stay within "
                f"immediate neighbors (reduce overlap or add controls per block)")
        m = axis.inputs[b][1] - axis.inputs[b][0]
        n = axis.local_ctrl[b][1] - axis.local_ctrl[b][0]
        if m < n:
            raise LayoutError(f"axis {k}: block {b} has {m} input samples for {n} controls")
        _check_schoenberg_whitney(axis, b, k)


def _check_schoenberg_whitney(axis: AxisLayout, b: int, k: int) -> None:
    # collocation matrices are totally positive, so a nonsingular square
    # submatrix exists iff a strictly increasing row can be matched to every
    # column with a nonzero entry
    i0, i1 = axis.inputs[b]
    lo, hi = axis.local_ctrl[b]
    R = collocation_matrix(axis.kv, axis.params[i0:i1], span_range=axis.local_spans[b])
    A = R.columns(lo, hi).toarray()
    row = -1
    for j in range(hi - lo):
        hits = np.flatnonzero(A[row + 1:, j] > 0)
        if hits.size == 0:
            raise LayoutError(f"axis {k}: block {b} has too few input samples in the "
                              f"support of control {lo + j}; add input points or "
                              f"reduce controls")
        row += 1 + int(hits[0])


def partition(dims: Sequence[int], bounds: Optional[Sequence[tuple[float, float]]],
              blocks: Sequence[int], p: int, n_block: Optional[Sequence[int]] = None,
              overlap: int = 0, clamp_interfaces: bool = False,
              n_global: Optional[Sequence[int]] = None) -> Decomposition:
    """Build the global layout, per-block layouts and the shared-DoF map.

    Control counts come either per block per axis (``n_block``) or as a
    global total per axis (``n_global``).
    """
    d = len(dims)
    if len(blocks) != d:
        raise LayoutError(f"{len(blocks)} block counts given for a {d}-dimensional grid")
    if bounds is None:
        bounds = [(0.0, float(n - 1)) for n in dims]
    if p < 1:
        raise LayoutError(f"degree must be >= 1, got {p}")
    if overlap < 0:
        raise LayoutError("overlap must be non-negative")
    if (n_block is None) == (n_global is None):
        raise LayoutError("give exactly one of n_block or n_global")
    axes = []
    for k in range(d):
        nb = int(blocks[k])
        if nb < 1:
            raise LayoutError(f"axis {k}: block count must be >= 1")
        if n_block is not None:
            if n_block[k] < p + 1:
                raise LayoutError(f"axis {k}: n_block={n_block[k]} < p+1={p + 1}")
            n = nb * int(n_block[k])
        else:
            n = int(n_global[k])
            if n < nb * (p + 1):
                raise LayoutError(f"axis {k}: {n} global controls too few for {nb} blocks")
        if dims[k] < n:
            raise LayoutError(f"axis {k}: {dims[k]} input samples < {n} controls")
        lo, hi = bounds[k]
        if not lo < hi:
            raise LayoutError(f"axis {k}: empty bounds [{lo}, {hi}]")
        params = np.linspace(0.0, 1.0, int(dims[k]))
        if clamp_interfaces and nb > 1:
            axis = _clamped_axis(params, nb, n, p)
        else:
            axis = _floating_axis(params, nb, n, p, overlap)
        _check_axis(axis, k)
        axes.append(axis)
    layout = GlobalLayout(axes, p, 0 if clamp_interfaces else overlap, clamp_interfaces,
                          [(float(a), float(b)) for a, b in bounds])
    counts = layout.block_counts
    out = []
    adj = [[set(a.adjacent(b)) for b in range(a.nblocks)] for a in axes]
    for coords in itertools.product(*[range(c) for c in counts]):
        bid = int(np.ravel_multi_index(coords, counts))
        ax = [(axes[k], coords[k]) for k in range(d)]
        blk = BlockLayout(
            id=bid, coords=tuple(coords),
            omega=[a.omega[b] for a, b in ax],
            delta=[a.delta[b] for a, b in ax],
            overlap=[a.overlap[b] for a, b in ax],
            local_spans=[a.local_spans[b] for a, b in ax],
            inputs=tuple(a.inputs[b] for a, b in ax),
            local_box=tuple(a.local_ctrl[b] for a, b in ax),
            owned_box=tuple(a.owned_ctrl[b] for a, b in ax),
        )
        nbrs, faces = [], []
        for other in itertools.product(*[sorted(adj[k][coords[k]]) for k in range(d)]):
            if other == tuple(coords):
                continue
            oid = int(np.ravel_multi_index(other, counts))
            nbrs.append(oid)
            if sum(o != c for o, c in zip(other, coords)) == 1:
                faces.append(oid)
        blk.neighbors = sorted(nbrs)
        blk.face_neighbors = sorted(faces)
        out.append(blk)
    return Decomposition(layout, out, SharedDofMap(layout))


def compression_ratio(layout: GlobalLayout) -> float:
    """Total input points over total global control points."""
    return float(np.prod(layout.input_shape, dtype=np.float64)
                 / np.prod(layout.ctrl_shape, dtype=np.float64))
