"""Synthetic sinc fields and raw binary grid ingestion.

sinc is the normalized convention sin(pi x)/(pi x) with sinc(0) = 1.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass
class Field:
    dims: tuple[int, ...]
    bounds: list[tuple[float, float]]
    values: np.ndarray
    name: Optional[str] = None

    def __post_init__(self):
        self.dims = tuple(int(n) for n in self.dims)
        self.bounds = [(float(a), float(b)) for a, b in self.bounds]
        self.values = np.asarray(self.values, dtype=np.float64)
        if len(self.bounds) != len(self.dims):
            raise ValueError("one (min, max) pair per dimension is required")
        if any(not a < b for a, b in self.bounds):
            raise ValueError(f"bounds must satisfy min < max, got {self.bounds}")
        if self.values.size != int(np.prod(self.dims)):
            raise ValueError(f"{self.values.size} values for dims {self.dims}")
        self.values = self.values.reshape(self.dims)

    @property
    def dim(self) -> int:
        return len(self.dims)

    def axes(self) -> list[np.ndarray]:
        return [grid_axis(n, b) for n, b in zip(self.dims, self.bounds)]


def grid_axis(n: int, bounds: tuple[float, float]) -> np.ndarray:
    x = np.linspace(bounds[0], bounds[1], n)
    x[-1] = bounds[1]
    return x


def _check(npts: int) -> None:
    if npts < 2:
        raise ValueError(f"npts must be >= 2, got {npts}")


def gen_sinc_1d_asym(npts: int, bounds=(-4.0, 4.0)) -> Field:
    _check(npts)
    x = grid_axis(npts, bounds)
    v = np.sinc(x) + np.sinc(2 * x - 1) + np.sinc(3 * x + 1.5)
    return Field((npts,), [bounds], v, "sinc1d-asym")


def gen_sinc_1d_sym(npts: int, bounds=(-4.0, 4.0)) -> Field:
    _check(npts)
    x = grid_axis(npts, bounds)
    return Field((npts,), [bounds], np.sinc(x + 1) + np.sinc(x - 1), "sinc1d-sym")


def gen_sinc_2d(npts: int, bounds=(-4.0, 4.0)) -> Field:
    _check(npts)
    x = grid_axis(npts, bounds)
    X, Y = np.meshgrid(x, x, indexing="ij")
    v = np.sinc(np.sqrt(X**2 + Y**2)) + np.sinc(2 * (X - 2) ** 2 + 2 * (Y + 2) ** 2)
    return Field((npts, npts), [bounds] * 2, v, "sinc2d")


def gen_sinc_3d(npts: int, bounds=(-4.0, 4.0)) -> Field:
    _check(npts)
    x = grid_axis(npts, bounds)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    v = (np.sinc(np.sqrt(X**2 + Y**2 + Z**2))
         + np.sinc(2 * (X - 2) ** 2 + (Y + 2) ** 2 + (Z - 2) ** 2))
    return Field((npts,) * 3, [bounds] * 3, v, "sinc3d")


GENERATORS = {
    "sinc1d-asym": gen_sinc_1d_asym,
    "sinc1d-sym": gen_sinc_1d_sym,
    "sinc2d": gen_sinc_2d,
    "sinc3d": gen_sinc_3d,
}


def _dtype(value_type: str, byteorder: str) -> np.dtype:
    order = {"little": "<", "big": ">", "native": "="}
    if byteorder not in order:
        raise ValueError(f"byte order must be one of {sorted(order)}, got {byteorder!r}")
    return np.dtype(value_type).newbyteorder(order[byteorder])


def read_raw_grid(path, dims: Sequence[int], value_type: str = "float32",
                  byteorder: str = "little", bounds=None) -> Field:
    """Row-major raw samples, last dimension fastest, no header."""
    dt = _dtype(value_type, byteorder)
    expected = int(np.prod(dims)) * dt.itemsize
    actual = os.path.getsize(path)
    if actual != expected:
        raise ValueError(f"{path}: size mismatch, expected {expected} bytes for dims "
                         f"{tuple(dims)} of {value_type}, found {actual}")
    vals = np.fromfile(path, dtype=dt).astype(np.float64)
    if bounds is None:
        bounds = [(0.0, float(n - 1)) for n in dims]
    return Field(tuple(dims), bounds, vals.reshape(tuple(dims)), os.path.basename(str(path)))


def write_raw_grid(field: Field, path, value_type: str = "float64",
                   byteorder: str = "little") -> None:
    dt = _dtype(value_type, byteorder)
    np.ascontiguousarray(field.values, dtype=dt).tofile(path)
