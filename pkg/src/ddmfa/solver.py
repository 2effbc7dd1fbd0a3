"""Restricted additive Schwarz solver over a block decomposition.

Epoch 0 fits every block independently on its extended data. Each later
epoch exchanges the copies of shared controls and replaces every copy by the
uniform average over its holders, until the relative control change falls
below the tolerance.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bspline import KnotVector, collocation_matrix, eval_deriv, find_span
from .decomposition import (BlockLayout, Decomposition, box_intersection,
                            box_slices)
from .lsq import FitError, LocalProblem, fit_unconstrained, fit_with_fixed, residual_error
from .runtime import BlockMessage, run_epoch

ROUTINGS = ("direct", "face")


class EnforcementError(RuntimeError):
    """A shared control did not receive a contribution from every holder."""


@dataclass
class SolverConfig:
    max_iter: int = 10
    tol: float = 1e-10
    workers: int = 1
    routing: str = "direct"
    enforce: bool = True
    log: Optional[Callable[[dict], None]] = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError(f"tolerance must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.routing not in ROUTINGS:
            raise ValueError(f"routing must be one of {ROUTINGS}, got {self.routing!r}")


@dataclass
class JumpResidual:
    blocks: tuple[int, int]
    ss: float
    ms: float

    @property
    def value(self) -> float:
        return max(self.ss, self.ms)


@dataclass
class BlockState:
    layout: BlockLayout
    problem: LocalProblem
    counts: np.ndarray              # n_s over the local box
    P: Optional[np.ndarray] = None
    l2: float = float("nan")
    linf: float = float("nan")
    # face routing: origin id -> (values, mask) over the local box
    known: dict = field(default_factory=dict)
    done: Optional[np.ndarray] = None

    @property
    def id(self) -> int:
        return self.layout.id


@dataclass
class SolveResult:
    decomp: Decomposition
    blocks: list[BlockState]
    control: np.ndarray
    converged: bool
    iterations: int                 # constraint iterations needed
    epochs: int                     # exchange epochs run
    history: list[dict]
    timings: dict[str, float]
    message: str = ""

    @property
    def knot_vectors(self) -> list[KnotVector]:
        return self.decomp.layout.knot_vectors

    def local_lattice(self, bid: int) -> np.ndarray:
        """Block ``bid``'s local controls embedded in a zero global lattice."""
        st = self.blocks[bid]
        out = np.zeros(self.decomp.layout.ctrl_shape)
        out[tuple(slice(lo, hi) for lo, hi in st.layout.local_box)] = st.P
        return out


def build_problem(decomp: Decomposition, blk: BlockLayout, values: np.ndarray) -> LocalProblem:
    axes = decomp.layout.axes
    mats = []
    for k, ax in enumerate(axes):
        i0, i1 = blk.inputs[k]
        lo, hi = blk.local_box[k]
        R = collocation_matrix(ax.kv, ax.params[i0:i1], span_range=blk.local_spans[k])
        mats.append(R.columns(lo, hi))
    Q = values[tuple(slice(i0, i1) for i0, i1 in blk.inputs)]
    return LocalProblem(mats, Q, [lo for lo, _ in blk.local_box])


def _interface_slabs(decomp: Decomposition, blk: BlockLayout) -> list[list[tuple[int, int]]]:
    """Per axis, (local control, local input) pairs of the clamped faces of ``blk``."""
    out = []
    for k, ax in enumerate(decomp.layout.axes):
        b = blk.coords[k]
        lo, hi = blk.local_box[k]
        i0, i1 = blk.inputs[k]
        faces = []
        if ax.nblocks > 1:
            if b > 0:
                i = int(np.searchsorted(ax.params, ax.interfaces[b - 1]))
                faces.append((0, i - i0))
            if b < ax.nblocks - 1:
                i = int(np.searchsorted(ax.params, ax.interfaces[b]))
                faces.append((hi - lo - 1, i - i0))
        out.append(faces)
    return out


def fit_clamped(mats, Q: np.ndarray, faces) -> np.ndarray:
    """Fit with interface slabs pinned to lower-dimensional fits of the face data.

    Both blocks at a face fit the same data slice with the same operators,
    so their interface controls agree exactly.
    """
    d = Q.ndim
    if d == 0:
        return np.asarray(Q, dtype=np.float64)
    problem = LocalProblem(mats, Q)
    if not any(faces):
        return fit_unconstrained(problem)
    shape = problem.control_shape
    pinned = np.zeros(shape)
    fixed = [np.zeros(n, dtype=bool) for n in shape]
    for k in range(d):
        sub_mats = [m for j, m in enumerate(mats) if j != k]
        sub_faces = [f for j, f in enumerate(faces) if j != k]
        for c, i in faces[k]:
            slab = fit_clamped(sub_mats, Q.take(i, axis=k), sub_faces)
            idx = [slice(None)] * d
            idx[k] = c
            pinned[tuple(idx)] = slab
            fixed[k][c] = True
    return fit_with_fixed(problem, fixed, pinned)


def enforce_constraints(blk: BlockLayout, P: np.ndarray, incoming: Sequence[BlockMessage],
                        counts: np.ndarray) -> np.ndarray:
    """Average every shared control over all of its holders.

    Contributions (own copy included) are summed in ascending source id,
    then scaled by 1/n_s. Controls whose copies already agree keep their
    value, so the operation is idempotent.
    """
    origin = blk.origin
    contribs = [(blk.id, blk.local_box, P)]
    for msg in incoming:
        box = box_intersection(msg.box, blk.local_box)
        if box != msg.box:
            raise EnforcementError(f"block {blk.id}: message from {msg.source} holds "
                                   f"controls outside the local box")
        contribs.append((msg.source, msg.box, msg.values))
    contribs.sort(key=lambda c: c[0])
    total = np.zeros_like(P)
    seen = np.zeros(P.shape, dtype=np.int64)
    lo = np.full(P.shape, np.inf)
    hi = np.full(P.shape, -np.inf)
    for _, box, vals in contribs:
        sl = box_slices(box, origin)
        total[sl] += vals
        seen[sl] += 1
        lo[sl] = np.minimum(lo[sl], vals)
        hi[sl] = np.maximum(hi[sl], vals)
    shared = counts >= 2
    bad = shared & (seen != counts)
    if np.any(bad):
        g = tuple(int(i) for i in np.argwhere(bad)[0] + np.asarray(origin))
        i = tuple(int(v) - o for v, o in zip(g, origin))
        raise EnforcementError(f"block {blk.id}: control {g} has {seen[i] - 1} neighbor "
                               f"contributions, expected {counts[i] - 1}")
    if np.any(~shared & (seen != 1)):
        raise EnforcementError(f"block {blk.id}: received values for an unshared control")
    out = P.copy()
    upd = shared & (lo != hi)
    out[upd] = total[upd] * (1.0 / counts[upd])
    return out


def jump_residuals(decomp: Decomposition, lattices: dict[int, np.ndarray]) -> list[JumpResidual]:
    """L-inf disagreement of shared copies for every neighboring block pair."""
    out = []
    for blk in decomp.blocks:
        for j in blk.neighbors:
            if j <= blk.id:
                continue
            other = decomp.blocks[j]
            box = box_intersection(blk.local_box, other.local_box)
            if box is None:
                continue
            a = lattices[blk.id][box_slices(box, blk.origin)]
            b = lattices[j][box_slices(box, other.origin)]
            diff = np.abs(a - b)
            ns = decomp.shared.counts_on(box)
            ss = float(diff[ns == 2].max(initial=0.0))
            ms = float(diff[ns > 2].max(initial=0.0))
            out.append(JumpResidual((blk.id, j), ss, ms))
    return out


def convergence_metric(prev: dict[int, np.ndarray], curr: dict[int, np.ndarray]) -> float:
    out = 0.0
    for bid, P in curr.items():
        if P.size == 0:
            continue
        change = float(np.max(np.abs(P - prev[bid])))
        out = max(out, change / max(1.0, float(np.max(np.abs(P)))))
    return out


def assemble(decomp: Decomposition, lattices: dict[int, np.ndarray]) -> np.ndarray:
    """Global control lattice from every block's owned slab."""
    out = np.zeros(decomp.layout.ctrl_shape)
    for blk in decomp.blocks:
        dst = tuple(slice(lo, hi) for lo, hi in blk.owned_box)
        out[dst] = lattices[blk.id][box_slices(blk.owned_box, blk.origin)]
    return out


def _local_fit(decomp: Decomposition, st: BlockState) -> None:
    try:
        if decomp.layout.clamp_interfaces:
            faces = _interface_slabs(decomp, st.layout)
            st.P = fit_clamped(st.problem.mats, st.problem.values, faces)
        else:
            st.P = fit_unconstrained(st.problem)
    except FitError as exc:
        raise FitError(f"block {st.id}: {exc}", exc.axis, exc.control) from exc
    st.l2, st.linf, _ = residual_error(st.problem, st.P)


def _direct_step(decomp, plan, tag):
    def step(st: BlockState):
        return [BlockMessage(st.id, j, box, st.P[box_slices(box, st.layout.origin)], tag)
                for j, box in plan[st.id]]
    return step


def _direct_finalize(st: BlockState, inbox):
    st.P = enforce_constraints(st.layout, st.P, inbox, st.counts)


def _face_step(decomp, tag):
    # relay every copy known so far to face neighbors, restricted to their boxes
    def step(st: BlockState):
        out = []
        for j in st.layout.face_neighbors:
            nb = decomp.blocks[j]
            box = box_intersection(st.layout.local_box, nb.local_box)
            if box is None:
                continue
            sl = box_slices(box, st.layout.origin)
            for origin in sorted(st.known):
                if origin == j:
                    continue
                vals, mask = st.known[origin]
                sub = mask[sl]
                if not sub.any():
                    continue
                # bounding box of the known part keeps payloads rectangular
                idx = np.argwhere(sub)
                lo, hi = idx.min(axis=0), idx.max(axis=0) + 1
                if not sub[tuple(slice(a, b) for a, b in zip(lo, hi))].all():
                    raise EnforcementError("internal: relayed region is not a box")
                rbox = tuple((b0 + int(a), b0 + int(c)) for (b0, _), a, c in zip(box, lo, hi))
                out.append(BlockMessage(st.id, j, rbox,
                                        vals[box_slices(rbox, st.layout.origin)], tag, origin))
        return out
    return step


def _face_finalize(st: BlockState, inbox):
    origin = st.layout.origin
    for msg in inbox:
        if msg.origin == st.id:
            continue
        if msg.origin not in st.known:
            st.known[msg.origin] = (np.zeros(st.P.shape), np.zeros(st.P.shape, dtype=bool))
        vals, mask = st.known[msg.origin]
        sl = box_slices(msg.box, origin)
        fresh = ~mask[sl]
        vals[sl] = np.where(fresh, msg.values, vals[sl])
        mask[sl] = True
    total = np.zeros(st.P.shape)
    seen = np.zeros(st.P.shape, dtype=np.int64)
    lo = np.full(st.P.shape, np.inf)
    hi = np.full(st.P.shape, -np.inf)
    for o in sorted(st.known):
        vals, mask = st.known[o]
        total[mask] += vals[mask]
        seen += mask
        lo[mask] = np.minimum(lo[mask], vals[mask])
        hi[mask] = np.maximum(hi[mask], vals[mask])
    if np.any(seen > st.counts):
        raise EnforcementError(f"block {st.id}: more copies than holders")
    ready = (st.counts >= 2) & (seen == st.counts) & ~st.done
    upd = ready & (lo != hi)
    P = st.P.copy()
    P[upd] = total[upd] * (1.0 / st.counts[upd])
    st.P = P
    st.done |= ready


def solve(values: np.ndarray, decomp: Decomposition,
          config: Optional[SolverConfig] = None) -> SolveResult:
    """Run the decoupled fits and the averaging iteration."""
    config = config or SolverConfig()
    values = np.asarray(values, dtype=np.float64)
    if values.shape != decomp.layout.input_shape:
        raise ValueError(f"field shape {values.shape} does not match layout "
                         f"{decomp.layout.input_shape}")
    log = config.log or (lambda rec: None)
    timings = {"setup": 0.0, "local_solve": 0.0, "exchange": 0.0, "constraint": 0.0,
               "decode": 0.0}

    t0 = time.perf_counter()
    states = [BlockState(blk, build_problem(decomp, blk, values),
                         decomp.shared.counts_on(blk.local_box))
              for blk in decomp.blocks]
    timings["setup"] = time.perf_counter() - t0

    none_plan = {st.id: () for st in states}
    ep = run_epoch(states, lambda st: _local_fit(decomp, st), none_plan, config.workers)
    timings["local_solve"] = ep.compute_time
    history = [_record(0, None, [], states)]
    log(history[-1])

    converged, iterations, epochs = True, 0, 0
    message = ""
    has_shared = any(np.any(st.counts >= 2) for st in states)
    if config.enforce and has_shared:
        converged = False
        plan = decomp.plan(config.routing)
        allowed = {bid: [j for j, _ in entries] for bid, entries in plan.items()}
        if config.routing == "face":
            for st in states:
                st.known = {st.id: (st.P.copy(), np.ones(st.P.shape, dtype=bool))}
                st.done = np.zeros(st.P.shape, dtype=bool)
        worst = None
        for it in range(1, config.max_iter + 1):
            prev = {st.id: st.P for st in states}
            if config.routing == "direct":
                step, fin = _direct_step(decomp, plan, it), _direct_finalize
            else:
                step, fin = _face_step(decomp, it), _face_finalize
            ep = run_epoch(states, step, allowed, config.workers, finalize=fin, tag=it)
            timings["exchange"] += ep.compute_time + ep.deliver_time
            timings["constraint"] += ep.finalize_time
            t1 = time.perf_counter()
            for st in states:
                st.l2, st.linf, _ = residual_error(st.problem, st.P)
            timings["decode"] += time.perf_counter() - t1
            curr = {st.id: st.P for st in states}
            dp = convergence_metric(prev, curr)
            jumps = jump_residuals(decomp, curr)
            worst = max(jumps, key=lambda j: j.value) if jumps else None
            history.append(_record(it, dp, jumps, states, sum(ep.sent.values())))
            log(history[-1])
            epochs = it
            if dp < config.tol:
                converged, iterations = True, it - 1
                break
        if not converged:
            iterations = config.max_iter
            where = f"blocks {worst.blocks}, jump {worst.value:.3e}" if worst else "n/a"
            message = (f"not converged after {config.max_iter} iterations: "
                       f"dPMax={history[-1]['dPMax']:.3e}, worst interface {where}")
    lattices = {st.id: st.P for st in states}
    return SolveResult(decomp, states, assemble(decomp, lattices), converged, iterations,
                       epochs, history, timings, message)


def _record(it, dp, jumps, states, sent=0) -> dict:
    ss = max((j.ss for j in jumps), default=0.0)
    ms = max((j.ms for j in jumps), default=0.0)
    return {"iteration": it, "dPMax": dp, "jump_ss": ss, "jump_ms": ms, "sent": sent,
            "blocks": [{"id": st.id, "l2": st.l2, "linf": st.linf} for st in states]}


def format_record(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True)


def one_sided_jump(left: np.ndarray, right: np.ndarray, kvs: Sequence[KnotVector],
                   axis: int, u: float, orders: Sequence[int],
                   points: Sequence[Sequence[float]]) -> np.ndarray:
    """Max |left - right| per derivative order (along ``axis``) at parameter ``u``.

    ``left`` is evaluated with the polynomial piece just below ``u`` and
    ``right`` with the piece just above; each is evaluated exactly at ``u``.
    """
    kv = kvs[axis]
    p = kv.degree
    lo, hi = kv.domain
    j = find_span(kv, u)
    width = float(kv.knots[j + 1] - kv.knots[j])
    eps = 1e-7 * width
    s_left = find_span(kv, max(lo, u - eps))
    s_right = find_span(kv, min(hi, u + eps))
    out = np.zeros(len(orders))
    for pt in points:
        x = list(pt)
        x.insert(axis, u)
        spans_l = [find_span(k, v) for k, v in zip(kvs, x)]
        spans_r = list(spans_l)
        spans_l[axis], spans_r[axis] = s_left, s_right
        for n, k in enumerate(orders):
            if k > p:
                raise ValueError(f"order {k} exceeds degree {p}")
            ords = [0] * len(kvs)
            ords[axis] = k
            a = eval_deriv(left, kvs, x, ords, spans_l)
            b = eval_deriv(right, kvs, x, ords, spans_r)
            out[n] = max(out[n], abs(a - b))
    return out


def probe_points(kvs: Sequence[KnotVector], axis: int, per_axis: int = 7):
    """Tensor grid of parameter points on the other axes of an interface."""
    grids = [np.linspace(*kv.domain, per_axis) for k, kv in enumerate(kvs) if k != axis]
    if not grids:
        return [()]
    mesh = np.meshgrid(*grids, indexing="ij")
    return [tuple(float(g.flat[i]) for g in mesh) for i in range(mesh[0].size)]


@dataclass
class ProbeResult:
    axis: int
    u: float
    jumps: np.ndarray   # per derivative order 0..k
    scale: np.ndarray   # max |derivative| near the interface per order

    @property
    def max_jump(self) -> float:
        return float(self.jumps.max())


def continuity_probe(P: np.ndarray, kvs: Sequence[KnotVector], axis: int, u: float,
                     k: int, per_axis: int = 7) -> ProbeResult:
    """Derivative jumps of orders 0..k of one spline across parameter ``u``."""
    if k > kvs[axis].degree - 1 and k != 0:
        raise ValueError(f"probe order {k} exceeds p-1={kvs[axis].degree - 1}")
    orders = list(range(k + 1))
    pts = probe_points(kvs, axis, per_axis)
    jumps = one_sided_jump(P, P, kvs, axis, u, orders, pts)
    scale = np.zeros(len(orders))
    for pt in pts:
        x = list(pt)
        x.insert(axis, u)
        for n, kk in enumerate(orders):
            ords = [0] * len(kvs)
            ords[axis] = kk
            scale[n] = max(scale[n], abs(eval_deriv(P, kvs, x, ords)))
    return ProbeResult(axis, u, jumps, scale)


def baseline_jump(result: SolveResult, axis: int, face: int, k: int = 0,
                  per_axis: int = 7) -> np.ndarray:
    """Jumps between the two decoupled local fits at one interior face.

    Each side is evaluated from its own block's local lattice, taking the
    lowest-id block on either side of the face (first block row/column on
    the other axes).
    """
    decomp = result.decomp
    counts = decomp.layout.block_counts
    coords_l = [0] * len(counts)
    coords_l[axis] = face
    coords_r = list(coords_l)
    coords_r[axis] = face + 1
    bl = int(np.ravel_multi_index(coords_l, counts))
    br = int(np.ravel_multi_index(coords_r, counts))
    kvs = result.knot_vectors
    u = decomp.layout.axes[axis].interfaces[face]
    # sample only the part of the face both blocks cover
    pts = []
    for pt in probe_points(kvs, axis, per_axis):
        ok = True
        for n, k2 in enumerate([a for a in range(len(kvs)) if a != axis]):
            lo, hi = decomp.blocks[bl].omega[k2]
            kn = kvs[k2].knots
            ok &= bool(kn[lo] <= pt[n] <= kn[hi])
        if ok:
            pts.append(pt)
    return one_sided_jump(result.local_lattice(bl), result.local_lattice(br), kvs, axis, u,
                          list(range(k + 1)), pts)
