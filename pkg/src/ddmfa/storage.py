"""MFDD model container and error-profile exports.

Layout (all little-endian):

    b"MFDD" | u32 version | u32 d | d x u32 degree | d x u32 extent
    | d x u32 knot count | d x u8 (clamp_left, clamp_right) | 2d x f64 bounds
    | u32 text length | provenance text (utf-8, "key=<json>" lines, sorted)
    | knots (f64, axis by axis) | controls (f64, row-major)
"""
from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .bspline import KnotVector, decode, eval_deriv

MAGIC = b"MFDD"
VERSION = 1


class FormatError(ValueError):
    pass


@dataclass
class MfaModel:
    degrees: list[int]
    knot_vectors: list[KnotVector]
    control: np.ndarray
    bounds: list[tuple[float, float]]
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.control = np.asarray(self.control, dtype=np.float64)
        if len(self.knot_vectors) != self.control.ndim:
            raise ValueError("one knot vector per lattice dimension is required")
        for k, kv in enumerate(self.knot_vectors):
            if kv.n != self.control.shape[k]:
                raise ValueError(f"axis {k}: {self.control.shape[k]} controls but knots give {kv.n}")
            if kv.degree != self.degrees[k]:
                raise ValueError(f"axis {k}: degree {self.degrees[k]} vs knot degree {kv.degree}")

    @property
    def dim(self) -> int:
        return self.control.ndim

    def to_params(self, x, axis: int) -> np.ndarray:
        a, b = self.bounds[axis]
        u = (np.asarray(x, dtype=np.float64) - a) / (b - a)
        return np.clip(u, 0.0, 1.0)

    def decode_params(self, params: Sequence[np.ndarray]) -> np.ndarray:
        return decode(self.control, self.knot_vectors, params)

    def decode_grid(self, npts: Sequence[int]) -> np.ndarray:
        return self.decode_params([np.linspace(0.0, 1.0, n) for n in npts])

    def derivative(self, point: Sequence[float], orders: Sequence[int]) -> float:
        """Mixed partial at a physical point, with respect to physical coordinates."""
        u = [float(self.to_params(x, k)) for k, x in enumerate(point)]
        scale = np.prod([(b - a) ** -o for (a, b), o in zip(self.bounds, orders)])
        return float(eval_deriv(self.control, self.knot_vectors, u, orders) * scale)

    def __eq__(self, other):
        if not isinstance(other, MfaModel):
            return NotImplemented
        return (self.degrees == other.degrees and self.knot_vectors == other.knot_vectors
                and np.array_equal(self.control, other.control)
                and self.bounds == other.bounds and self.provenance == other.provenance)

    __hash__ = None


def _provenance_text(prov: dict) -> bytes:
    lines = []
    for key in sorted(prov):
        if "\n" in key or "=" in key:
            raise FormatError(f"bad provenance key {key!r}")
        lines.append(f"{key}={json.dumps(prov[key], sort_keys=True)}")
    return "\n".join(lines).encode("utf-8")


def _parse_provenance(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        key, _, val = line.partition("=")
        out[key] = json.loads(val)
    return out


def dumps_mfa(model: MfaModel) -> bytes:
    d = model.dim
    kvs = model.knot_vectors
    parts = [MAGIC, struct.pack("<II", VERSION, d),
             struct.pack(f"<{d}I", *model.degrees),
             struct.pack(f"<{d}I", *model.control.shape),
             struct.pack(f"<{d}I", *[len(kv.knots) for kv in kvs]),
             bytes(v for kv in kvs for v in (kv.clamp_left, kv.clamp_right)),
             struct.pack(f"<{2 * d}d", *[v for ab in model.bounds for v in ab])]
    text = _provenance_text(model.provenance)
    parts += [struct.pack("<I", len(text)), text]
    parts += [np.asarray(kv.knots, dtype="<f8").tobytes() for kv in kvs]
    parts.append(np.ascontiguousarray(model.control, dtype="<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"truncated payload: need {n} bytes at offset {self.pos}, "
                              f"{len(self.buf) - self.pos} left")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads_mfa(buf: bytes) -> MfaModel:
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise FormatError("bad magic, not an MFDD file")
    version, d = r.unpack("<II")
    if version != VERSION:
        raise FormatError(f"unsupported MFDD version {version} (expected {VERSION})")
    degrees = list(r.unpack(f"<{d}I"))
    extents = r.unpack(f"<{d}I")
    nknots = r.unpack(f"<{d}I")
    flags = r.take(2 * d)
    b = r.unpack(f"<{2 * d}d")
    bounds = [(b[2 * k], b[2 * k + 1]) for k in range(d)]
    (tlen,) = r.unpack("<I")
    prov = _parse_provenance(r.take(tlen).decode("utf-8"))
    kvs = []
    for k in range(d):
        knots = np.frombuffer(r.take(8 * nknots[k]), dtype="<f8").astype(np.float64)
        kvs.append(KnotVector(degrees[k], knots, bool(flags[2 * k]), bool(flags[2 * k + 1])))
    count = int(np.prod(extents))
    ctrl = np.frombuffer(r.take(8 * count), dtype="<f8").astype(np.float64).reshape(extents)
    if r.pos != len(buf):
        raise FormatError(f"{len(buf) - r.pos} trailing bytes after control values")
    return MfaModel(degrees, kvs, ctrl, bounds, prov)


def write_mfa(model: MfaModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_mfa(model))


def read_mfa(path) -> MfaModel:
    with open(path, "rb") as fh:
        return loads_mfa(fh.read())


def write_error_profile(error: np.ndarray, path, coords: Optional[Sequence[np.ndarray]] = None,
                        summary: Optional[dict] = None) -> None:
    """Pointwise errors as CSV, or a structured summary as JSON (``.json`` suffix)."""
    if str(path).endswith(".json"):
        with open(path, "w") as fh:
            json.dump(summary if summary is not None else {}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return
    error = np.asarray(error, dtype=np.float64)
    if coords is None:
        coords = [np.arange(n, dtype=np.float64) for n in error.shape]
    names = [f"x{k}" for k in range(error.ndim)]
    mesh = np.meshgrid(*coords, indexing="ij")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["error"])
        for i in range(error.size):
            row = [float(m.flat[i]) for m in mesh] + [float(error.flat[i])]
            w.writerow([repr(v) for v in row])


def read_error_profile(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array([[float(v) for v in row] for row in rows[1:]])
