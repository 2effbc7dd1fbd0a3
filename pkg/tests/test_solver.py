import numpy as np
import pytest

from ddmfa.bspline import decode
from ddmfa.datasets import gen_sinc_1d_asym, gen_sinc_2d, gen_sinc_3d
from ddmfa.decomposition import BlockLayout, partition
from ddmfa.runtime import BlockMessage
from ddmfa.solver import (EnforcementError, SolverConfig, baseline_jump, continuity_probe,
                          convergence_metric, enforce_constraints, jump_residuals, solve)


def toy_block(bid, box):
    return BlockLayout(bid, (0,), [], [], [], [], box, box, box)


class TestEnforceConstraints:
    def test_two_copies_average(self):
        blk = toy_block(1, ((0, 1),))
        out = enforce_constraints(blk, np.array([3.0]), [BlockMessage(2, 1, ((0, 1),), [5.0])],
                                  np.array([2]))
        assert out[0] == 4.0

    def test_corner_of_four(self):
        blk = toy_block(0, ((0, 1), (0, 1)))
        msgs = [BlockMessage(j, 0, ((0, 1), (0, 1)), [[float(j + 1)]]) for j in (3, 1, 2)]
        out = enforce_constraints(blk, np.array([[1.0]]), msgs, np.array([[4]]))
        assert out[0, 0] == 2.5

    def test_all_equal_unchanged(self):
        blk = toy_block(0, ((0, 3),))
        P = np.array([0.1, 0.7, 0.3])
        msgs = [BlockMessage(1, 0, ((1, 3),), P[1:]), BlockMessage(2, 0, ((1, 3),), P[1:])]
        out = enforce_constraints(blk, P, msgs, np.array([1, 3, 3]))
        assert np.array_equal(out, P)

    def test_idempotent(self):
        blk = toy_block(0, ((0, 2),))
        P = np.array([1.0, 2.0])
        once = enforce_constraints(blk, P, [BlockMessage(1, 0, ((1, 2),), [0.3])], np.array([1, 2]))
        twice = enforce_constraints(blk, once, [BlockMessage(1, 0, ((1, 2),), once[1:])],
                                    np.array([1, 2]))
        assert np.array_equal(once, twice)

    def test_unshared_untouched(self):
        blk = toy_block(0, ((0, 3),))
        P = np.array([9.0, 1.0, 1.0])
        out = enforce_constraints(blk, P, [BlockMessage(1, 0, ((1, 3),), [3.0, 5.0])],
                                  np.array([1, 2, 2]))
        np.testing.assert_array_equal(out, [9.0, 2.0, 3.0])

    def test_missing_contribution_is_error(self):
        blk = toy_block(0, ((0, 2),))
        with pytest.raises(EnforcementError, match="expected 2"):
            enforce_constraints(blk, np.zeros(2), [BlockMessage(1, 0, ((0, 2),), [1.0, 1.0])],
                                np.array([3, 3]))

    def test_order_of_arrival_irrelevant(self):
        blk = toy_block(2, ((0, 1),))
        vals = [0.1, 0.7, 1e-17, 0.3]
        msgs = [BlockMessage(j, 2, ((0, 1),), [v]) for j, v in zip((0, 1, 3, 4), vals)]
        a = enforce_constraints(blk, np.array([0.2]), msgs, np.array([5]))
        b = enforce_constraints(blk, np.array([0.2]), msgs[::-1], np.array([5]))
        assert a[0] == b[0]


class TestConvergenceMetric:
    def test_unchanged(self):
        P = {0: np.ones(4), 1: np.zeros(3)}
        assert convergence_metric(P, P) == 0.0

    def test_single_change(self):
        prev = {0: np.array([0.5, 0.2])}
        curr = {0: np.array([0.5, 0.201])}
        assert convergence_metric(prev, curr) == pytest.approx(1e-3)

    def test_relative_to_large_values(self):
        prev = {0: np.array([100.0])}
        curr = {0: np.array([101.0])}
        assert convergence_metric(prev, curr) == pytest.approx(1 / 101)


@pytest.fixture(scope="module")
def case():
    f = gen_sinc_1d_asym(10000)
    dec = partition(f.dims, f.bounds, [2], 3, n_block=[60], overlap=3)
    return f, dec


@pytest.fixture(scope="module")
def runs():
    f = gen_sinc_2d(60)
    dec = partition(f.dims, f.bounds, [2, 2], 3, n_block=[12, 12])
    return (solve(f.values, dec, SolverConfig(routing="face")),
            solve(f.values, dec, SolverConfig(routing="direct")))


class TestSolve1D:
    def test_single_constraint_iteration(self, case):
        f, dec = case
        r = solve(f.values, dec)
        assert r.converged and r.iterations == 1
        assert r.history[2]["dPMax"] < 1e-10

    def test_converged_model_is_smooth(self, case):
        f, dec = case
        r = solve(f.values, dec)
        u = dec.layout.axes[0].interfaces[0]
        pr = continuity_probe(r.control, r.knot_vectors, 0, u, 2)
        assert pr.max_jump < 1e-8 * max(1.0, pr.scale.max())

    def test_baseline_jump_positive_then_removed(self, case):
        f, dec = case
        raw = solve(f.values, dec, SolverConfig(enforce=False))
        assert baseline_jump(raw, 0, 0)[0] > 0
        done = solve(f.values, dec)
        assert baseline_jump(done, 0, 0)[0] < 1e-8

    def test_all_copies_agree(self, case):
        f, dec = case
        r = solve(f.values, dec)
        jumps = jump_residuals(dec, {st.id: st.P for st in r.blocks})
        assert jumps and all(j.value == 0.0 for j in jumps)

    def test_single_block_has_no_epochs(self):
        f = gen_sinc_1d_asym(500)
        dec = partition(f.dims, f.bounds, [1], 3, n_block=[40])
        r = solve(f.values, dec)
        assert r.converged and r.epochs == 0 and r.iterations == 0
        assert jump_residuals(dec, {0: r.blocks[0].P}) == []
        for u in (0.2, 0.5, 0.77):
            assert continuity_probe(r.control, r.knot_vectors, 0, u, 2).max_jump < 1e-12

    def test_shape_mismatch(self):
        dec = partition([100], None, [2], 3, n_block=[10])
        with pytest.raises(ValueError):
            solve(np.zeros(99), dec)


class TestClamped:
    def test_interface_interpolates_and_c0(self):
        f = gen_sinc_1d_asym(10000)
        dec = partition(f.dims, f.bounds, [2], 3, n_block=[60], clamp_interfaces=True)
        r = solve(f.values, dec)
        ax = dec.layout.axes[0]
        u = ax.interfaces[0]
        i = int(np.searchsorted(ax.params, u))
        val = decode(r.control, r.knot_vectors, [np.array([u])])[0]
        assert abs(val - f.values[i]) < 1e-10
        pr = continuity_probe(r.control, r.knot_vectors, 0, u, 1)
        assert pr.jumps[0] < 1e-10
        assert pr.jumps[1] > 1e-6

    def test_2d_copies_agree_before_exchange(self):
        f = gen_sinc_2d(90)
        dec = partition(f.dims, f.bounds, [3, 2], 3, n_block=[12, 12], clamp_interfaces=True)
        r = solve(f.values, dec)
        assert r.history[1]["dPMax"] == 0.0
        assert r.iterations == 0
        for k, ax in enumerate(dec.layout.axes):
            for u in ax.interfaces:
                assert continuity_probe(r.control, r.knot_vectors, k, u, 0).max_jump < 1e-10


class TestMultiD:
    @pytest.mark.parametrize("overlap", [0, 3])
    def test_five_by_five(self, overlap):
        f = gen_sinc_2d(200)
        dec = partition(f.dims, f.bounds, [5, 5], 3, n_block=[20, 20], overlap=overlap)
        r = solve(f.values, dec)
        assert r.converged and r.iterations <= 2
        assert r.history[1]["jump_ss"] < 1e-12

    @pytest.mark.parametrize("workers", [2, 8])
    def test_worker_count_bit_identical(self, workers):
        f = gen_sinc_3d(30)
        dec = partition(f.dims, f.bounds, [2, 2, 2], 2, n_block=[9, 9, 9], overlap=1)
        a = solve(f.values, dec, SolverConfig(workers=1))
        b = solve(f.values, dec, SolverConfig(workers=workers))
        assert a.control.tobytes() == b.control.tobytes()


class TestFaceRelay:
    """Face-only forwarding: corner copies need extra hops."""

    def test_singly_shared_first(self, runs):
        face, _ = runs
        assert face.history[1]["jump_ss"] < 1e-12
        assert face.history[1]["jump_ms"] > 1e-12
        assert face.history[2]["jump_ms"] < 1e-12

    def test_dpmax_sequence(self, runs):
        face, _ = runs
        dps = [h["dPMax"] for h in face.history[1:]]
        assert dps[0] > 0 and dps[1] > 0 and dps[2] < 1e-10
        assert face.iterations == 2

    def test_same_lattice_as_direct(self, runs):
        face, direct = runs
        assert np.array_equal(face.control, direct.control)

    def test_non_convergence_reported(self):
        f = gen_sinc_2d(60)
        dec = partition(f.dims, f.bounds, [2, 2], 3, n_block=[12, 12])
        r = solve(f.values, dec, SolverConfig(routing="face", max_iter=1))
        assert not r.converged
        assert "dPMax" in r.message and "worst interface" in r.message


class TestConfig:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            SolverConfig(tol=0)
        with pytest.raises(ValueError):
            SolverConfig(max_iter=0)
        with pytest.raises(ValueError):
            SolverConfig(routing="ring")
