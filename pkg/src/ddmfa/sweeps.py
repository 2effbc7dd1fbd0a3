"""Smallest valid problem sizes for parameter sweeps."""
from __future__ import annotations

from typing import Sequence

from .datasets import GENERATORS, Field
from .decomposition import Decomposition, LayoutError, partition

SWEEP_FIELDS = {1: "sinc1d-asym", 2: "sinc2d", 3: "sinc3d"}


def min_block_controls(d: int, blocks: Sequence[int], p: int, overlap: int,
                       limit: int = 500) -> int:
    """Smallest controls-per-block count that passes the locality checks."""
    big = [max(blocks) * limit] * d
    for nb in range(p + 1, limit):
        try:
            partition(big, None, blocks, p, n_block=[nb] * d, overlap=overlap)
            return nb
        except LayoutError:
            continue
    raise LayoutError(f"no valid control count below {limit} for blocks={blocks}, p={p}")


def sweep_case(d: int, blocks: Sequence[int], p: int, overlap: int,
               oversample: float = 1.5) -> tuple[Field, Decomposition]:
    """Sinc field and decomposition at the smallest valid resolution.

    Samples per dimension start at ``oversample`` times the global control
    count and grow until every block has enough inputs for its controls.
    At exactly one sample per control some degree-5 local fits are
    numerically rank deficient, hence the 1.5 default.
    """
    nb = min_block_controls(d, blocks, p, overlap)
    npts = int(oversample * max(blocks) * nb + 0.5)
    while True:
        try:
            partition([npts] * d, None, list(blocks), p, n_block=[nb] * d, overlap=overlap)
            break
        except LayoutError:
            npts += 1
    field = GENERATORS[SWEEP_FIELDS[d]](npts)
    return field, partition(field.dims, field.bounds, list(blocks), p,
                            n_block=[nb] * d, overlap=overlap)
