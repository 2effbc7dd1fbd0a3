"""In-process block-parallel runtime with nearest-neighbor message exchange.

An epoch runs a compute step on every block, waits at a barrier, delivers
every enqueued message to its destination inbox, and then runs an optional
finalize step that dequeues the inbox. Blocks are mapped to workers round
robin by block id; inboxes are sorted by (source, origin) before dequeue so
the results do not depend on the schedule.
"""
from __future__ import annotations

import os
import queue
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping, Optional, Sequence

import numpy as np

from .decomposition import Box, Decomposition, box_size

WORKERS_ENV = "DDMFA_WORKERS"


class ExchangeFault(RuntimeError):
    """A message violated the nearest-neighbor contract."""


@dataclass(frozen=True)
class BlockMessage:
    """Control values for a box of global control indices.

    ``origin`` is the block whose copy the values are; it differs from
    ``source`` only when a message relays another block's data.
    """

    source: int
    dest: int
    box: Box
    values: np.ndarray
    tag: int = 0
    origin: Optional[int] = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.origin is None:
            object.__setattr__(self, "origin", self.source)
        if vals.shape != tuple(hi - lo for lo, hi in self.box):
            raise ValueError("payload shape does not match its index box")

    def __len__(self):
        return self.values.size

    def indices(self) -> np.ndarray:
        grids = np.meshgrid(*[np.arange(lo, hi) for lo, hi in self.box], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def pairs(self):
        """(global control index, value) pairs of the payload."""
        for idx, v in zip(self.indices(), self.values.ravel()):
            yield tuple(int(i) for i in idx), float(v)


@dataclass
class EpochResult:
    sent: dict[int, int]
    received: dict[int, int]
    messages: int
    outputs: dict[int, Any]
    compute_time: float = 0.0
    deliver_time: float = 0.0
    finalize_time: float = 0.0


def resolve_workers(workers: Optional[int] = None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    return workers


def _map_blocks(fn, blocks: Sequence, workers: int) -> dict[int, Any]:
    if workers == 1 or len(blocks) == 1:
        return {b.id: fn(b) for b in blocks}
    lanes = [blocks[w::workers] for w in range(workers)]

    def lane(items):
        return [(b.id, fn(b)) for b in items]

    out = {}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for res in pool.map(lane, [l for l in lanes if l]):
            out.update(res)
    return out


def run_epoch(blocks: Sequence, step: Callable[[Any], Iterable[BlockMessage]],
              plan: Mapping[int, Iterable[int]], workers: int = 1,
              finalize: Optional[Callable[[Any, list[BlockMessage]], Any]] = None,
              tag: int = 0) -> EpochResult:
    """Run ``step`` on every block, exchange, then ``finalize`` with each inbox.

    ``plan`` lists the legal destinations of every block; anything else is
    an :class:`ExchangeFault`.
    """
    workers = resolve_workers(workers)
    allowed = {bid: set(d) for bid, d in plan.items()}
    inboxes = {b.id: queue.SimpleQueue() for b in blocks}

    t0 = time.perf_counter()
    outgoing = _map_blocks(lambda b: list(step(b) or ()), blocks, workers)
    t1 = time.perf_counter()

    sent = {b.id: 0 for b in blocks}
    received = {b.id: 0 for b in blocks}
    count = 0
    for bid in sorted(outgoing):
        for msg in outgoing[bid]:
            if msg.source != bid:
                raise ExchangeFault(f"block {bid} enqueued a message claiming source {msg.source}")
            if msg.dest not in allowed.get(bid, ()):
                raise ExchangeFault(f"block {bid} addressed non-neighbor block {msg.dest}")
            if msg.tag != tag:
                raise ExchangeFault(f"message tagged {msg.tag} sent during epoch {tag}")
            inboxes[msg.dest].put(msg)
            sent[bid] += len(msg)
            count += 1
    drained = {}
    for bid, q in inboxes.items():
        msgs = []
        while not q.empty():
            msgs.append(q.get())
        msgs.sort(key=lambda m: (m.source, m.origin, m.box))
        received[bid] = sum(len(m) for m in msgs)
        drained[bid] = msgs
    if sum(sent.values()) != sum(received.values()):
        raise ExchangeFault("payload count mismatch between send and receive")
    t2 = time.perf_counter()

    outputs = {}
    if finalize is not None:
        outputs = _map_blocks(lambda b: finalize(b, drained[b.id]), blocks, workers)
    t3 = time.perf_counter()
    return EpochResult(sent, received, count, outputs, t1 - t0, t2 - t1, t3 - t2)


def exchange_volume(decomp: Decomposition, routing: str = "direct") -> dict[int, int]:
    """Shared control values each block sends in one exchange epoch."""
    return {bid: sum(box_size(box) for _, box in entries)
            for bid, entries in decomp.plan(routing).items()}
