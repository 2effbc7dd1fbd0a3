"""End-to-end encode runs: load, partition, solve, probe, report."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .bspline import collocation_matrix, make_knot_vector
from .datasets import GENERATORS, Field, read_raw_grid
from .decomposition import Decomposition, compression_ratio, partition
from .lsq import LocalProblem, fit_unconstrained
from .runtime import exchange_volume
from .solver import SolveResult, SolverConfig, continuity_probe, solve
from .storage import MfaModel


@dataclass
class RunSpec:
    gen: Optional[str] = None
    npts: Optional[int] = None
    raw: Optional[str] = None
    dims: Optional[tuple[int, ...]] = None
    dtype: str = "float32"
    byteorder: str = "little"
    degree: int = 3
    blocks: Optional[tuple[int, ...]] = None
    nctrl: Optional[tuple[int, ...]] = None
    nctrl_global: Optional[tuple[int, ...]] = None
    overlap: int = 0
    clamp_interfaces: bool = False
    tol: float = 1e-10
    max_iter: int = 10
    workers: Optional[int] = None
    routing: str = "direct"
    probe_order: Optional[int] = None

    def load(self) -> Field:
        if self.gen is not None:
            if self.gen not in GENERATORS:
                raise ValueError(f"unknown generator {self.gen!r}; choose from {sorted(GENERATORS)}")
            if self.npts is None:
                raise ValueError("--npts is required with --gen")
            return GENERATORS[self.gen](self.npts)
        if self.raw is None or self.dims is None:
            raise ValueError("give --gen/--npts or --raw/--dims")
        return read_raw_grid(self.raw, self.dims, self.dtype, self.byteorder)

    def grid_dims(self) -> tuple[int, ...]:
        if self.dims is not None:
            return tuple(self.dims)
        if self.gen is None or self.npts is None:
            raise ValueError("grid extents unknown; give --dims or --gen/--npts")
        d = {"sinc1d-asym": 1, "sinc1d-sym": 1, "sinc2d": 2, "sinc3d": 3}[self.gen]
        return (self.npts,) * d

    def expand(self, values, d: int, what: str) -> Optional[tuple[int, ...]]:
        if values is None:
            return None
        values = tuple(int(v) for v in values)
        if len(values) == 1:
            return values * d
        if len(values) != d:
            raise ValueError(f"{what} has {len(values)} entries for a {d}-dimensional grid")
        return values


@dataclass
class RunReport:
    spec: RunSpec
    decomp: Decomposition
    result: Optional[SolveResult]
    model: Optional[MfaModel]
    eta: float
    volume: dict[int, int]
    error: Optional[np.ndarray] = None
    l2: float = float("nan")
    linf: float = float("nan")
    probe_order: int = 0
    max_jump: float = 0.0
    value_jump: float = 0.0
    timings: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.result is None or self.result.converged

    def summary(self) -> dict:
        out = {"eta": self.eta, "blocks": list(self.decomp.layout.block_counts),
               "controls": list(self.decomp.layout.ctrl_shape),
               "inputs": list(self.decomp.layout.input_shape),
               "exchange_volume": sum(self.volume.values())}
        if self.result is not None:
            out.update({
                "converged": self.result.converged,
                "iterations": self.result.iterations,
                "dPMax": [h["dPMax"] for h in self.result.history[1:]],
                "l2": self.l2, "linf": self.linf,
                "probe_order": self.probe_order, "max_jump": self.max_jump,
                "value_jump": self.value_jump,
                "timings": self.timings,
                "per_block": self.result.history[-1]["blocks"],
            })
        return out


def make_decomposition(spec: RunSpec, dims: Sequence[int], bounds) -> Decomposition:
    d = len(dims)
    blocks = spec.expand(spec.blocks or (1,), d, "--blocks")
    nb = spec.expand(spec.nctrl, d, "--nctrl")
    ng = spec.expand(spec.nctrl_global, d, "--nctrl-global")
    overlap = spec.overlap if any(b > 1 for b in blocks) else 0
    return partition(dims, bounds, blocks, spec.degree, n_block=nb, overlap=overlap,
                     clamp_interfaces=spec.clamp_interfaces, n_global=ng)


def model_errors(model: MfaModel, field_: Field):
    params = [np.linspace(0.0, 1.0, n) for n in field_.dims]
    err = field_.values - model.decode_params(params)
    return err, float(np.sqrt(np.sum(err * err))), float(np.max(np.abs(err)))


def make_model(field_: Field, kvs, control, meta: dict) -> MfaModel:
    """Attach provenance (including final errors) to a fitted global lattice."""
    model = MfaModel([kv.degree for kv in kvs], list(kvs), control, list(field_.bounds))
    _, l2, linf = model_errors(model, field_)
    prov = dict(meta)
    prov.update({"source": field_.name, "l2": l2, "linf": linf,
                 "eta": float(field_.values.size / control.size)})
    model.provenance = prov
    return model


def fit_single(field_: Field, degree: int, nctrl: Sequence[int]) -> MfaModel:
    """Direct single-block fit of the whole field with clamped global knots."""
    kvs = [make_knot_vector(degree, n) for n in nctrl]
    mats = [collocation_matrix(kv, np.linspace(0.0, 1.0, m)) for kv, m in zip(kvs, field_.dims)]
    P = fit_unconstrained(LocalProblem(mats, field_.values))
    meta = {"blocks": [1] * field_.dim, "overlap": 0, "clamp_interfaces": False,
            "iterations": 0, "converged": True, "interfaces": [[] for _ in kvs]}
    return make_model(field_, kvs, P, meta)


def encode(spec: RunSpec, log: Optional[Callable[[dict], None]] = None,
           dry_run: bool = False) -> RunReport:
    t0 = time.perf_counter()
    if dry_run:
        dims = spec.grid_dims()
        decomp = make_decomposition(spec, dims, None)
        return RunReport(spec, decomp, None, None, compression_ratio(decomp.layout),
                         exchange_volume(decomp, spec.routing))
    field_ = spec.load()
    decomp = make_decomposition(spec, field_.dims, field_.bounds)
    setup = time.perf_counter() - t0
    config = SolverConfig(max_iter=spec.max_iter, tol=spec.tol, workers=spec.workers or 1,
                          routing=spec.routing, log=log)
    result = solve(field_.values, decomp, config)
    layout = decomp.layout
    meta = {"blocks": list(layout.block_counts), "overlap": layout.overlap,
            "clamp_interfaces": layout.clamp_interfaces and layout.nblocks > 1,
            "iterations": result.iterations, "converged": result.converged,
            "interfaces": [list(a.interfaces) for a in layout.axes]}
    t1 = time.perf_counter()
    model = make_model(field_, layout.knot_vectors, result.control, meta)
    err, l2, linf = model_errors(model, field_)
    decode_time = time.perf_counter() - t1
    order = spec.degree - 1 if spec.probe_order is None else spec.probe_order
    max_jump = value_jump = 0.0
    for k, ax in enumerate(layout.axes):
        for u in ax.interfaces:
            pr = continuity_probe(model.control, model.knot_vectors, k, u, order)
            max_jump = max(max_jump, float(pr.jumps[-1]))
            value_jump = max(value_jump, float(pr.jumps[0]))
    timings = dict(result.timings)
    timings["setup"] += setup
    timings["decode"] += decode_time
    return RunReport(spec, decomp, result, model, compression_ratio(layout),
                     exchange_volume(decomp, spec.routing), err, l2, linf, order,
                     max_jump, value_jump, timings)
