import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sstats

from ersim import tem
from ersim.bench import gen_ghz, gen_qaoa
from ersim.circuit import Circuit, GateKind, StateVector, apply_gate, op, run_noiseless
from ersim.ecm import canonical_layout, raw_layout, reduce_tally, tally_ers, tally_from_rows
from ersim.noise import NoiseSpec, attach_noise, site_channels
from ersim.rng import leaf_stream, stream
from ersim.tem import (
    ExecutionTree,
    MemoryBudgetError,
    PruningConfig,
    TraversalStats,
    build_tree,
    dftt_execute,
    draw_outcomes,
    frontier_depth,
    keep_all,
    parallel_subtrees,
    partition_significant,
    select_insignificant,
    tree_from_partition,
)
from strategies import random_circuit

WORKED_COUNTS = [800, 100, 50, 42, 5, 3]


def rz_chain(n_slots: int, n_qubits: int = 1) -> Circuit:
    """One qubit with ``n_slots - 1`` RZ gates: a canonical layout with exactly ``n_slots`` slots."""
    ops = [op(GateKind.H, 0)] + [op(GateKind.RZ, 0, params=[0.3 + k]) for k in range(n_slots - n_qubits)]
    return Circuit(n_qubits, ops)


def worked_tally():
    layout = canonical_layout(rz_chain(3))
    rows = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [2, 0, 0], [3, 0, 0]]
    return tally_from_rows(layout, rows, WORKED_COUNTS)


def random_tree(rng, n=3, gates=12, shots=5000, p=0.05):
    c = attach_noise(random_circuit(rng, n, gates, measure="some"), NoiseSpec())
    t = reduce_tally(c, tally_ers(c, site_channels(c, NoiseSpec(p, p)), shots, rng))
    return c, tree_from_partition(keep_all(t))


class TestPruningConfig:
    @pytest.mark.parametrize("kw", [dict(alpha=0), dict(alpha=1.5), dict(beta=-1), dict(selection="x")])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            PruningConfig(**kw)


class TestPartition:
    def test_worked_threshold(self):
        part = partition_significant(worked_tally(), PruningConfig(alpha=0.01, beta=100), np.random.default_rng(0))
        assert part.threshold == pytest.approx(8.0)
        assert sorted(part.significant_counts.tolist()) == [42, 50, 100, 800]
        assert sorted(part.selected_original.tolist()) == [3, 5]
        assert part.n_insignificant == 2 and part.insig_total == 8

    def test_worked_gamma_with_one_selected(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            part = partition_significant(worked_tally(), PruningConfig(alpha=0.01, beta=1), rng)
            k = part.selected_original[0]
            assert part.gamma == pytest.approx(8 / k)
            assert part.selected_counts.tolist() == [8]

    def test_single_entry_tally(self):
        t = tally_from_rows(canonical_layout(rz_chain(2)), [[0, 0]], [1000])
        part = partition_significant(t, PruningConfig(), np.random.default_rng(0))
        assert part.n_insignificant == 0 and part.gamma is None and part.insig_total == 0
        assert part.significant_counts.tolist() == [1000]

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(1, 5000), min_size=1, max_size=64), st.floats(0.001, 1.0), st.integers(0, 20), st.integers(0, 2**31))
    def test_invariants(self, counts, alpha, beta, seed):
        h = 3
        rows = list(itertools.product(range(4), repeat=h))[: len(counts)]
        t = tally_from_rows(canonical_layout(rz_chain(h)), rows, counts)
        part = partition_significant(t, PruningConfig(alpha=alpha, beta=beta), np.random.default_rng(seed))
        assert (part.significant_counts >= part.threshold).all()
        insig = t.counts[t.counts < part.threshold]
        assert part.n_insignificant == len(insig) and part.insig_total == insig.sum()
        assert part.n_selected == min(beta, len(insig))
        assert (part.selected_original < part.threshold).all()
        if part.n_selected:
            assert part.selected_counts.sum() == part.insig_total
            assert part.gamma == pytest.approx(part.insig_total / part.selected_original.sum())
            floor = (part.insig_total * part.selected_original) // part.selected_original.sum()
            big = np.argmax(part.selected_original)
            assert np.array_equal(np.delete(part.selected_counts, big), np.delete(floor, big))
        assert part.kept_shots.sum() == t.total_shots

    def test_zero_beta_conserves_shots(self):
        part = partition_significant(worked_tally(), PruningConfig(alpha=0.01, beta=0), np.random.default_rng(0))
        assert part.n_selected == 0 and part.gamma is None
        assert part.kept_shots.sum() == 1000
        # floor(1000 c / 992) = 806, 42, 50, 100; the residual 2 goes to the largest
        assert sorted(part.significant_counts.tolist()) == [42, 50, 100, 808]

    def test_weighted_selection_frequencies(self):
        counts = np.array([1, 2, 3, 4])
        rng = np.random.default_rng(1)
        hits = np.bincount([select_insignificant(counts, 1, rng)[0] for _ in range(20000)], minlength=4)
        _, pval = sstats.chisquare(hits, 20000 * counts / counts.sum())
        assert pval > 0.001

    def test_uniform_selection_frequencies(self):
        counts = np.array([1, 2, 3, 4])
        rng = np.random.default_rng(2)
        hits = np.bincount([select_insignificant(counts, 1, rng, "uniform")[0] for _ in range(20000)], minlength=4)
        _, pval = sstats.chisquare(hits)
        assert pval > 0.001

    def test_qaoa10_significant_fraction(self):
        # reference split 58% / 42%; the layer count behind it is unstated, p = 2 is used here
        c = attach_noise(gen_qaoa(10, 2, seed=0))
        t = reduce_tally(c, tally_ers(c, site_channels(c, NoiseSpec()), 10**6, stream(0, "tally")))
        frac = partition_significant(t, PruningConfig(), stream(0, "prune")).significant_fraction()
        print(f"10-qubit QAOA p=2 significant fraction: {frac:.3f} (reference 0.58)")
        assert abs(frac - 0.58) <= 0.10


class TestTree:
    def test_single_er_path(self):
        layout = canonical_layout(rz_chain(4))
        tree = build_tree(layout, [[0, 1, 0, 2]], [10])
        assert tree.n_edges == layout.height == 4 and tree.n_leaves == 1

    def test_full_b4_depth2(self):
        layout = canonical_layout(rz_chain(2))
        rows = list(itertools.product(range(4), repeat=2))
        tree = build_tree(layout, rows, [1] * 16)
        assert tree.n_edges == 20 and tree.n_leaves == 16
        assert tree.n_leaves == (1 - 1 / 4) * tree.n_edges + 1

    def test_last_site_divergence(self):
        layout = canonical_layout(rz_chain(4))
        tree = build_tree(layout, [[1, 0, 2, 1], [1, 0, 2, 3]], [1, 1])
        assert tree.lcp.tolist() == [0, 3]
        assert tree.n_edges == 4 + 1

    def test_children_sorted(self):
        layout = canonical_layout(rz_chain(2))
        tree = build_tree(layout, [[3, 0], [0, 2], [1, 1], [0, 1]], [1, 2, 3, 4])
        assert tree.rows.tolist() == [[0, 1], [0, 2], [1, 1], [3, 0]]
        assert tree.shots.tolist() == [4, 2, 3, 1]

    def test_errors(self):
        layout = canonical_layout(rz_chain(2))
        with pytest.raises(ValueError):
            build_tree(layout, [[1, 0], [1, 0]], [1, 1])
        with pytest.raises(ValueError):
            build_tree(layout, [[1, 0]], [0])
        with pytest.raises(ValueError):
            build_tree(layout, np.zeros((0, 2)), [])

    def test_paths_equal_placements(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            _, tree = random_tree(rng)
            for i in range(tree.n_leaves):
                path = list(tree.root_segment)
                for k in range(tree.height):
                    code = tree.rows[i, k]
                    if code:
                        path.append(tree.pauli_ops[k][code])
                    path += tree.segments[k]
                expected = [o for o in tree.layout.placement(tree.rows[i]) if o.kind.is_unitary]
                assert path == expected

    def test_branching_on_raw_sites(self):
        c = attach_noise(gen_ghz(3))
        t = tally_ers(c, site_channels(c, NoiseSpec(0.3, 0.3)), 20000, np.random.default_rng(0))
        tree = tree_from_partition(keep_all(t))
        branching = tree.max_branching()
        roles = [s.role for s in c.noise_sites]
        for b, role in zip(branching, roles):
            assert b <= (2 if role == "meas" else 4)
        assert max(branching) == 4


def replay_counts(tree, seed):
    """Leaf-by-leaf oracle: simulate every leaf circuit from scratch with the same leaf stream."""
    acc = {}
    for i in range(tree.n_leaves):
        placed = Circuit(tree.layout.n_qubits, tree.layout.placement(tree.rows[i]))
        probs = run_noiseless(placed).probabilities(tree.layout.measured)
        outs, cnts = draw_outcomes(probs, int(tree.shots[i]), leaf_stream(seed, tree.leaf_key(i)))
        for k, c in zip(outs.tolist(), cnts.tolist()):
            acc[k] = acc.get(k, 0) + c
    width = len(tree.layout.measured)
    return {format(k, f"0{width}b"): v for k, v in sorted(acc.items())}


class TestDftt:
    def test_ghz_single_leaf(self):
        c = attach_noise(gen_ghz(2))
        layout = canonical_layout(c)
        tree = build_tree(layout, [[0] * layout.height], [1000])
        counts, st_ = dftt_execute(tree, seed=1)
        assert set(counts) <= {"00", "11"} and sum(counts.values()) == 1000
        assert abs(counts["00"] - 500) <= 3 * math.sqrt(250)
        assert st_.inverse_gate_applications == 0

    @pytest.mark.parametrize("policy", ["rollback", "cheapest"])
    def test_matches_leaf_replay(self, policy):
        rng = np.random.default_rng(2)
        for trial in range(15):
            _, tree = random_tree(rng, n=4, gates=15)
            counts, _ = dftt_execute(tree, seed=trial, policy=policy)
            assert counts == replay_counts(tree, trial)

    def test_rollback_reuses_prefix(self):
        # rollback walks every edge forward exactly once and back once except along the last path
        rng = np.random.default_rng(3)
        for _ in range(10):
            _, tree = random_tree(rng)
            _, s = dftt_execute(tree, policy="rollback")
            assert s.forward_edge_traversals == tree.n_edges
            assert s.inverse_edge_traversals == tree.n_edges - tree.height
            assert s.forward_gate_applications == tree.edge_gates()

    def test_rollback_exactness(self):
        rng = np.random.default_rng(4)
        _, tree = random_tree(rng, n=4, gates=25, p=0.1)
        state = StateVector.zero(tree.layout.n_qubits)
        for o in tree.root_segment:
            apply_gate(state, o)
        w = tem._Walker(tree, state, 0, "rollback", TraversalStats())
        for i in range(tree.n_leaves):
            w.goto(i, int(tree.lcp[i]) if i else 0, tree.height)
            expected = run_noiseless(Circuit(tree.layout.n_qubits, tree.layout.placement(tree.rows[i])))
            assert np.max(np.abs(state.amps - expected.amps)) <= 1e-8

    @pytest.mark.parametrize("policy", ["rollback", "cheapest"])
    def test_op_count_bound(self, policy):
        rng = np.random.default_rng(5)
        for _ in range(20):
            _, tree = random_tree(rng, n=3, gates=int(rng.integers(4, 20)))
            _, s = dftt_execute(tree, policy=policy)
            assert s.dftt_gate_applications <= 2 * tree.edge_gates()
            assert s.inverse_gate_applications <= s.forward_gate_applications
            if policy == "cheapest" and tree.n_leaves >= 3:
                assert s.dftt_gate_applications < tree.naive_gates()

    def test_shot_conservation(self):
        rng = np.random.default_rng(6)
        _, tree = random_tree(rng)
        counts, _ = dftt_execute(tree)
        assert sum(counts.values()) == tree.total_shots

    def test_drift_fallback_recomputes(self, monkeypatch, caplog):
        rng = np.random.default_rng(7)
        _, tree = random_tree(rng)
        expected, _ = dftt_execute(tree, seed=3, policy="rollback")
        monkeypatch.setattr(tem, "ROLLBACK_TOL", -1.0)
        with caplog.at_level("WARNING", logger="ersim.tem"):
            counts, s = dftt_execute(tree, seed=3, policy="rollback")
        assert counts == expected
        assert s.restarts == tree.n_leaves - 1
        assert "drifted" in caplog.text

    def test_unnormalized_init_rejected(self):
        tree = build_tree(canonical_layout(rz_chain(1)), [[0]], [1])
        with pytest.raises(ValueError):
            dftt_execute(tree, StateVector(1, np.array([1, 1], dtype=complex)))


class TestParallel:
    def test_single_worker_delegates(self):
        rng = np.random.default_rng(8)
        _, tree = random_tree(rng)
        assert parallel_subtrees(tree, workers=1, seed=5) == dftt_execute(tree, seed=5)

    def test_four_child_frontier(self):
        layout = canonical_layout(rz_chain(2))
        tree = build_tree(layout, list(itertools.product(range(4), repeat=2)), [3] * 16)
        assert frontier_depth(tree, 4) == 1
        assert tree.frontier(1) == [(0, 4), (4, 8), (8, 12), (12, 16)]

    def test_qaoa10_two_workers_identical(self):
        c = attach_noise(gen_qaoa(10, 1, seed=2))
        t = reduce_tally(c, tally_ers(c, site_channels(c, NoiseSpec()), 20000, stream(1, "tally")))
        tree = tree_from_partition(partition_significant(t, PruningConfig(), stream(1, "prune")))
        one, _ = parallel_subtrees(tree, workers=1, seed=9)
        two, _ = parallel_subtrees(tree, workers=2, seed=9)
        assert one == two

    def test_memory_budget(self):
        tree = build_tree(canonical_layout(rz_chain(2)), [[0, 0], [1, 0]], [1, 1])
        with pytest.raises(MemoryBudgetError):
            parallel_subtrees(tree, workers=2, memory_budget=10)

    def test_bad_worker_count(self):
        tree = build_tree(canonical_layout(rz_chain(1)), [[0]], [1])
        with pytest.raises(ValueError):
            parallel_subtrees(tree, workers=0)
