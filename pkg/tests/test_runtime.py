import random
from dataclasses import dataclass, field

import numpy as np
import pytest

from ddmfa.decomposition import box_intersection, partition
from ddmfa.runtime import BlockMessage, ExchangeFault, exchange_volume, run_epoch


@dataclass
class Toy:
    id: int
    got: list = field(default_factory=list)
    ran: int = 0


def plan_of(dec):
    return {b.id: b.neighbors for b in dec.blocks}


class TestBlockMessage:
    def test_pairs_and_immutability(self):
        m = BlockMessage(0, 1, ((2, 4), (5, 6)), np.array([[1.0], [2.0]]))
        assert list(m.pairs()) == [((2, 5), 1.0), ((3, 5), 2.0)]
        assert len(m) == 2 and m.origin == 0
        with pytest.raises(ValueError):
            m.values[0, 0] = 3.0

    def test_payload_copied_on_enqueue(self):
        vals = np.zeros(3)
        m = BlockMessage(0, 1, ((0, 3),), vals)
        vals[:] = 1
        assert np.all(m.values == 0)

    def test_shape_must_match_box(self):
        with pytest.raises(ValueError):
            BlockMessage(0, 1, ((0, 3),), np.zeros(4))


class TestRunEpoch:
    def test_single_block_no_messages(self):
        blocks = [Toy(0)]

        def step(b):
            b.ran += 1
            return []

        res = run_epoch(blocks, step, {0: []}, workers=4)
        assert blocks[0].ran == 1 and res.messages == 0

    def test_center_block_sends_to_eight(self):
        dec = partition([90, 90], None, [3, 3], 3, n_block=[10, 10])
        blocks = [Toy(b.id) for b in dec.blocks]
        plan = dec.plan("direct")

        def step(b):
            return [BlockMessage(b.id, j, box, np.zeros([h - l for l, h in box]))
                    for j, box in plan[b.id]]

        res = run_epoch(blocks, step, plan_of(dec), finalize=lambda b, inbox: len(inbox))
        assert len(plan[4]) == 8
        assert res.outputs[4] == 8
        assert res.outputs[0] == 3

    def test_non_neighbor_is_fault(self):
        dec = partition([90, 90], None, [3, 3], 3, n_block=[10, 10])
        blocks = [Toy(b.id) for b in dec.blocks]

        def step(b):
            if b.id == 0:
                return [BlockMessage(0, 8, ((0, 1), (0, 1)), np.zeros((1, 1)))]
            return []

        with pytest.raises(ExchangeFault, match="non-neighbor"):
            run_epoch(blocks, step, plan_of(dec))

    def test_spoofed_source_is_fault(self):
        with pytest.raises(ExchangeFault):
            run_epoch([Toy(0), Toy(1)], lambda b: [BlockMessage(1 - b.id, b.id, ((0, 1),), [0.0])],
                      {0: [1], 1: [0]})

    def test_wrong_tag_is_fault(self):
        with pytest.raises(ExchangeFault):
            run_epoch([Toy(0), Toy(1)], lambda b: [BlockMessage(b.id, 1 - b.id, ((0, 1),), [0.0], 3)],
                      {0: [1], 1: [0]}, tag=2)

    def test_barrier_separates_compute_and_delivery(self):
        # every finalize must see the full set of messages from the step phase
        blocks = [Toy(i) for i in range(6)]
        plan = {i: [j for j in range(6) if j != i] for i in range(6)}

        def step(b):
            return [BlockMessage(b.id, j, ((b.id, b.id + 1),), [float(b.id)]) for j in plan[b.id]]

        res = run_epoch(blocks, step, plan, workers=3,
                        finalize=lambda b, inbox: [m.source for m in inbox])
        for i in range(6):
            assert res.outputs[i] == [j for j in range(6) if j != i]
        assert sum(res.sent.values()) == sum(res.received.values()) == 30

    @pytest.mark.parametrize("workers", [1, 2, 8])
    def test_inbox_order_independent_of_schedule(self, workers):
        blocks = [Toy(i) for i in range(5)]
        plan = {i: [j for j in range(5) if j != i] for i in range(5)}
        rng = random.Random(workers)

        def step(b):
            out = [BlockMessage(b.id, j, ((0, 1),), [b.id + 0.5]) for j in plan[b.id]]
            rng.shuffle(out)
            return out

        res = run_epoch(blocks, step, plan, workers=workers,
                        finalize=lambda b, inbox: tuple(m.source for m in inbox))
        assert res.outputs == {i: tuple(j for j in range(5) if j != i) for i in range(5)}

    def test_env_worker_override(self, monkeypatch):
        monkeypatch.setenv("DDMFA_WORKERS", "3")
        blocks = [Toy(i) for i in range(4)]
        res = run_epoch(blocks, lambda b: [], {i: [] for i in range(4)}, workers=None)
        assert res.messages == 0

    def test_rejects_zero_workers(self):
        with pytest.raises(ValueError):
            run_epoch([Toy(0)], lambda b: [], {0: []}, workers=0)


class TestExchangeVolume:
    def test_two_block_1d_counts(self):
        dec = partition([200], None, [2], 3, n_block=[10], overlap=1)
        # shared index range is the intersection of the local boxes
        b0, b1 = dec.blocks
        box = box_intersection(b0.local_box, b1.local_box)
        assert box == ((6, 13),)
        assert exchange_volume(dec) == {0: 7, 1: 7}

    def test_clamped_sends_less(self):
        for p in (2, 3, 4):
            kw = dict(n_block=[14, 14])
            c = exchange_volume(partition([90, 90], None, [2, 2], p, clamp_interfaces=True, **kw))
            f = exchange_volume(partition([90, 90], None, [2, 2], p, **kw))
            assert sum(c.values()) < sum(f.values())

    def test_monotone_in_overlap(self):
        prev = None
        for ov in range(0, 7):
            vol = sum(exchange_volume(partition([400], None, [4], 3, n_block=[20], overlap=ov)).values())
            assert prev is None or vol >= prev
            prev = vol

    def test_single_block_sends_nothing(self):
        assert exchange_volume(partition([40], None, [1], 2, n_block=[10])) == {0: 0}

    def test_message_boxes_within_both_local_sets(self):
        dec = partition([60, 60, 60], None, [2, 2, 2], 2, n_block=[9, 9, 9], overlap=1)
        for bid, entries in dec.plan().items():
            for j, box in entries:
                for blk in (dec.blocks[bid], dec.blocks[j]):
                    assert box_intersection(box, blk.local_box) == box
