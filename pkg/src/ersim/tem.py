"""Tree-based execution: pruning, the shared-prefix execution tree, and its
depth-first traversal with uncomputation.

The tree is a trie over realization rows in slot order. Level ``k`` of the trie
is slot ``k``; the edge into a level-``k`` node applies the slot Pauli and then
the noiseless gates up to the next slot. Gates in front of the first slot form
the root segment, applied once.

The trie is stored implicitly: leaves sorted lexicographically (I < X < Y < Z
at every level) plus, for each leaf, the length of the prefix it shares with the
previous leaf. That is exactly the order a depth-first walk visits the leaves.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import FIRST_COMPLETED, ProcessPoolExecutor, wait
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .circuit import StateVector, apply_gate, bitstring, inverse, pauli_op
from .ecm import ERTally, SlotLayout
from .rng import leaf_stream

log = logging.getLogger(__name__)

ROLLBACK_TOL = 1e-8


class MemoryBudgetError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# pruning


@dataclass(frozen=True)
class PruningConfig:
    alpha: float = 0.01
    beta: int = 100
    selection: str = "weighted"

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if self.selection not in ("weighted", "uniform"):
            raise ValueError(f"unknown selection mode {self.selection!r}")


@dataclass
class PruningPartition:
    layout: SlotLayout
    significant_rows: np.ndarray
    significant_counts: np.ndarray
    selected_rows: np.ndarray
    selected_counts: np.ndarray
    """Scaled shot counts of the selected insignificant rows."""
    selected_original: np.ndarray
    gamma: Optional[float]
    p0: int
    threshold: float
    insig_total: int
    n_insignificant: int
    total_shots: int
    alpha: float

    @property
    def kept_rows(self) -> np.ndarray:
        return np.vstack([self.significant_rows, self.selected_rows])

    @property
    def kept_shots(self) -> np.ndarray:
        return np.concatenate([self.significant_counts, self.selected_counts])

    @property
    def n_selected(self) -> int:
        return len(self.selected_counts)

    def significant_fraction(self) -> float:
        return float(self.significant_counts.sum()) / self.total_shots


def select_insignificant(counts: np.ndarray, k: int, rng: np.random.Generator, mode: str = "weighted") -> np.ndarray:
    """Indices of ``k`` insignificant entries drawn without replacement.

    ``weighted`` draws proportionally to shot counts, ``uniform`` ignores them.
    """
    n = len(counts)
    if k >= n:
        return np.arange(n)
    if k == 0:
        return np.zeros(0, dtype=np.int64)
    p = None if mode == "uniform" else counts / counts.sum()
    return np.sort(rng.choice(n, size=k, replace=False, p=p))


def _rescale(counts: np.ndarray, total: int) -> np.ndarray:
    """Counts scaled to sum to ``total``: floor, then the residual to the largest entry."""
    out = (total * counts) // int(counts.sum())
    out[int(np.argmax(counts))] += total - int(out.sum())
    return out


def partition_significant(tally: ERTally, cfg: PruningConfig, rng: np.random.Generator) -> PruningPartition:
    """Split ``tally`` at ``alpha * max count`` and rescale a sample of the tail.

    Selected insignificant entries get ``floor(gamma * count)`` shots with
    ``gamma = insig_total / selected_total``; the rounding residual goes to the
    largest selected entry so the tail keeps exactly its original shot total.
    With ``beta = 0`` the tail's shots are spread over the significant entries
    the same way, so the total is conserved in every case.
    """
    if len(tally) == 0:
        raise ValueError("cannot partition an empty tally")
    counts = tally.counts
    p0 = int(counts.max())
    threshold = cfg.alpha * p0
    sig = counts >= threshold
    insig_idx = np.flatnonzero(~sig)
    insig_counts = counts[insig_idx]
    insig_total = int(insig_counts.sum())
    chosen = insig_idx[select_insignificant(insig_counts, min(cfg.beta, len(insig_idx)), rng, cfg.selection)]
    original = counts[chosen]
    gamma = None
    scaled = original.copy()
    sig_counts = counts[sig]
    if len(chosen):
        sel_total = int(original.sum())
        gamma = insig_total / sel_total
        scaled = _rescale(original, insig_total)
    elif insig_total:
        # beta = 0: nothing stands in for the tail, so the significant entries absorb its shots
        sig_counts = _rescale(sig_counts, int(sig_counts.sum()) + insig_total)
    h = tally.layout.height
    return PruningPartition(
        layout=tally.layout,
        significant_rows=tally.rows[sig].reshape(-1, h),
        significant_counts=sig_counts,
        selected_rows=tally.rows[chosen].reshape(-1, h),
        selected_counts=scaled,
        selected_original=original,
        gamma=gamma,
        p0=p0,
        threshold=threshold,
        insig_total=insig_total,
        n_insignificant=len(insig_idx),
        total_shots=tally.total_shots,
        alpha=cfg.alpha,
    )


def keep_all(tally: ERTally) -> PruningPartition:
    """Partition that prunes nothing."""
    h = tally.layout.height
    return PruningPartition(
        layout=tally.layout,
        significant_rows=tally.rows,
        significant_counts=tally.counts,
        selected_rows=np.zeros((0, h), dtype=np.uint8),
        selected_counts=np.zeros(0, dtype=np.int64),
        selected_original=np.zeros(0, dtype=np.int64),
        gamma=None,
        p0=int(tally.counts.max()),
        threshold=0.0,
        insig_total=0,
        n_insignificant=0,
        total_shots=tally.total_shots,
        alpha=0.0,
    )


# --------------------------------------------------------------------------
# the tree


class ExecutionTree:
    """Shared-prefix trie over realization rows. Immutable after construction."""

    def __init__(self, layout: SlotLayout, rows: np.ndarray, shots: np.ndarray):
        rows = np.ascontiguousarray(rows, dtype=np.uint8).reshape(-1, layout.height)
        shots = np.asarray(shots, dtype=np.int64)
        if len(rows) == 0:
            raise ValueError("a tree needs at least one leaf")
        if len(rows) != len(shots):
            raise ValueError("rows and shots disagree in length")
        if (shots <= 0).any():
            raise ValueError("every leaf needs a positive shot count")
        h = layout.height
        order = np.lexsort(rows.T[::-1]) if h else np.arange(len(rows))
        rows, shots = rows[order], shots[order]
        lcp = np.zeros(len(rows), dtype=np.int64)
        if len(rows) > 1:
            if h == 0:
                raise ValueError("duplicate realization keys")
            diff = rows[1:] != rows[:-1]
            if not diff.any(axis=1).all():
                raise ValueError("duplicate realization keys")
            lcp[1:] = diff.argmax(axis=1)
        self.layout = layout
        self.rows = rows
        self.shots = shots
        self.lcp = lcp

        ops = layout.ops
        bounds = list(layout.positions) + [len(ops)]
        unitary = lambda seq: tuple(o for o in seq if o.kind.is_unitary)
        self.root_segment = unitary(ops[: bounds[0]])
        self.segments = [unitary(ops[bounds[k] : bounds[k + 1]]) for k in range(h)]
        self.inverse_segments = [tuple(inverse(o) for o in reversed(s)) for s in self.segments]
        self.pauli_ops = [[None] + [pauli_op(c, layout.qubits[k]) for c in (1, 2, 3)] for k in range(h)]
        seg_len = np.array([len(s) for s in self.segments], dtype=np.int64)
        # gate cost of the edge into level k for each leaf
        self._cost = (rows != 0).astype(np.int64) + seg_len
        self._cum = np.concatenate([np.zeros((len(rows), 1), dtype=np.int64), np.cumsum(self._cost, axis=1)], axis=1)

    @property
    def height(self) -> int:
        return self.layout.height

    @property
    def n_leaves(self) -> int:
        return len(self.rows)

    @property
    def n_edges(self) -> int:
        return int((self.height - self.lcp).sum())

    @property
    def total_shots(self) -> int:
        return int(self.shots.sum())

    def edge_gates(self) -> int:
        """Gates on all edges, root segment included."""
        h = self.height
        new = self._cum[:, h] - self._cum[np.arange(self.n_leaves), self.lcp]
        return len(self.root_segment) + int(new.sum())

    def path_gates(self) -> np.ndarray:
        """Full replay length of every leaf circuit."""
        return len(self.root_segment) + self._cum[:, self.height]

    def naive_gates(self) -> int:
        return int(self.path_gates().sum())

    def leaf_key(self, i: int) -> bytes:
        return self.rows[i].tobytes()

    def max_branching(self) -> np.ndarray:
        """Largest number of children of any node at each level."""
        h = self.height
        out = np.zeros(h, dtype=np.int64)
        for k in range(h):
            prefixes = {}
            for r in self.rows:
                prefixes.setdefault(r[:k].tobytes(), set()).add(int(r[k]))
            out[k] = max(len(v) for v in prefixes.values())
        return out

    def frontier(self, depth: int) -> list:
        """``(lo, hi)`` leaf ranges of the subtrees rooted at ``depth``."""
        starts = [0] + [int(i) for i in np.flatnonzero(self.lcp[1:] < depth) + 1]
        ends = starts[1:] + [self.n_leaves]
        return list(zip(starts, ends))


def build_tree(layout: SlotLayout, rows, shots) -> ExecutionTree:
    return ExecutionTree(layout, rows, shots)


def tree_from_partition(partition: PruningPartition) -> ExecutionTree:
    return ExecutionTree(partition.layout, partition.kept_rows, partition.kept_shots)


@dataclass
class TraversalStats:
    forward_gate_applications: int = 0
    inverse_gate_applications: int = 0
    edges: int = 0
    leaves: int = 0
    height: int = 0
    edge_gates: int = 0
    naive_gate_applications: int = 0
    forward_edge_traversals: int = 0
    inverse_edge_traversals: int = 0
    naive_edge_traversals: int = 0
    restarts: int = 0

    def __iadd__(self, other: "TraversalStats"):
        for f in ("forward_gate_applications", "inverse_gate_applications", "forward_edge_traversals",
                  "inverse_edge_traversals", "restarts"):
            setattr(self, f, getattr(self, f) + getattr(other, f))
        return self

    def to_dict(self) -> dict:
        return {f.name: int(getattr(self, f.name)) for f in fields(self)}

    @property
    def dftt_gate_applications(self) -> int:
        return self.forward_gate_applications + self.inverse_gate_applications


class _Walker:
    """Moves one statevector around the tree.

    ``policy="rollback"`` always uncomputes back to the branch node.
    ``policy="cheapest"`` instead restarts from the subtree root when replaying
    the shared prefix costs fewer gates than uncomputing the old suffix.
    """

    def __init__(self, tree: ExecutionTree, state: StateVector, base_depth: int, policy: str, stats: TraversalStats):
        if policy not in ("rollback", "cheapest"):
            raise ValueError(f"unknown rollback policy {policy!r}")
        self.tree = tree
        self.state = state
        self.base = base_depth
        # input state of this subtree, read-only; never mutated
        self.origin = state.amps.copy()
        self.policy = policy
        self.stats = stats
        self.depth = base_depth
        self.prev = -1

    def _apply_edge(self, i: int, k: int):
        tree, s = self.tree, self.state
        code = tree.rows[i, k]
        if code:
            apply_gate(s, tree.pauli_ops[k][code])
        for o in tree.segments[k]:
            apply_gate(s, o)
        self.stats.forward_gate_applications += int(tree._cost[i, k])
        self.stats.forward_edge_traversals += 1

    def _undo_edge(self, i: int, k: int):
        tree, s = self.tree, self.state
        for o in tree.inverse_segments[k]:
            apply_gate(s, o)
        code = tree.rows[i, k]
        if code:
            apply_gate(s, tree.pauli_ops[k][code])
        self.stats.inverse_gate_applications += int(tree._cost[i, k])
        self.stats.inverse_edge_traversals += 1

    def _restart(self, i: int, shared: int):
        self.state.amps[...] = self.origin
        self.stats.restarts += 1
        for k in range(self.base, shared):
            self._apply_edge(i, k)

    def goto(self, i: int, shared: int, stop: int):
        """Move to the depth-``stop`` node on leaf ``i``'s path.

        ``shared`` is how many levels leaf ``i`` shares with the current path.
        """
        tree = self.tree
        shared = max(shared, self.base)
        if self.prev >= 0 and self.depth > shared:
            p = self.prev
            undo = int(tree._cum[p, self.depth] - tree._cum[p, shared])
            redo = int(tree._cum[i, shared] - tree._cum[i, self.base])
            if self.policy == "cheapest" and redo < undo:
                self._restart(i, shared)
            else:
                for k in range(self.depth - 1, shared - 1, -1):
                    self._undo_edge(p, k)
                if abs(self.state.norm() - 1.0) > ROLLBACK_TOL:
                    log.warning("uncomputation drifted beyond %.0e; recomputing node from the subtree root", ROLLBACK_TOL)
                    self._restart(i, shared)
        for k in range(shared, stop):
            self._apply_edge(i, k)
        self.depth = stop
        self.prev = i


def _sample_leaf(tree: ExecutionTree, state: StateVector, i: int, seed: int, acc: dict):
    probs = state.probabilities(tree.layout.measured)
    outcomes, counts = draw_outcomes(probs, int(tree.shots[i]), leaf_stream(seed, tree.leaf_key(i)))
    for k, c in zip(outcomes.tolist(), counts.tolist()):
        acc[k] = acc.get(k, 0) + c


def draw_outcomes(probs: np.ndarray, shots: int, rng: np.random.Generator):
    """``shots`` i.i.d. outcome indices by inverse CDF; returns (outcomes, counts)."""
    cdf = np.cumsum(probs)
    total = cdf[-1]
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"state is not normalized (total probability {total:.9f})")
    idx = np.searchsorted(cdf, rng.random(shots) * total, side="right")
    np.minimum(idx, len(cdf) - 1, out=idx)
    return np.unique(idx, return_counts=True)


def _walk_range(tree, state, lo, hi, base, seed, policy, stats, acc):
    w = _Walker(tree, state, base, policy, stats)
    h = tree.height
    for i in range(lo, hi):
        w.goto(i, base if i == lo else int(tree.lcp[i]), h)
        _sample_leaf(tree, state, i, seed, acc)


def _finish(tree: ExecutionTree, acc: dict, stats: TraversalStats):
    width = len(tree.layout.measured)
    stats.edges = tree.n_edges
    stats.leaves = tree.n_leaves
    stats.height = tree.height
    stats.edge_gates = tree.edge_gates()
    stats.naive_gate_applications = tree.naive_gates()
    stats.naive_edge_traversals = tree.n_leaves * tree.height
    return {bitstring(k, width): acc[k] for k in sorted(acc)}, stats


def dftt_execute(tree: ExecutionTree, init: Optional[StateVector] = None, seed: int = 0, policy: str = "cheapest"):
    """Depth-first traversal; returns (bitstring counts, TraversalStats).

    Each leaf draws its shots from a stream keyed by ``seed`` and the leaf's
    row, so results do not depend on traversal order or worker count. The walk
    does not unwind after the last leaf.
    """
    n = tree.layout.n_qubits
    state = StateVector.zero(n) if init is None else init.copy()
    if abs(state.norm() - 1.0) > 1e-9:
        raise ValueError("initial state must be normalized")
    stats = TraversalStats()
    for o in tree.root_segment:
        apply_gate(state, o)
    stats.forward_gate_applications += len(tree.root_segment)
    acc: dict = {}
    _walk_range(tree, state, 0, tree.n_leaves, 0, seed, policy, stats, acc)
    return _finish(tree, acc, stats)


# --------------------------------------------------------------------------
# parallel subtrees

_WORKER_TREE: Optional[ExecutionTree] = None


def _init_worker(tree):
    global _WORKER_TREE
    _WORKER_TREE = tree


def _subtree_task(amps, lo, hi, depth, seed, policy):
    tree = _WORKER_TREE
    stats = TraversalStats()
    acc: dict = {}
    state = StateVector(tree.layout.n_qubits, amps)
    _walk_range(tree, state, lo, hi, depth, seed, policy, stats, acc)
    return acc, stats


def frontier_depth(tree: ExecutionTree, workers: int) -> int:
    """Shallowest depth with at least ``workers`` nodes (leaves count at every depth below them)."""
    lcp = tree.lcp[1:]
    for d in range(tree.height + 1):
        if 1 + int((lcp < d).sum()) >= workers:
            return d
    return tree.height


def available_memory() -> int:
    try:
        return os.sysconf("SC_PAGE_SIZE") * os.sysconf("SC_AVPHYS_PAGES")
    except (ValueError, OSError, AttributeError):
        return 1 << 62


def parallel_subtrees(
    tree: ExecutionTree,
    init: Optional[StateVector] = None,
    workers: int = 1,
    seed: int = 0,
    policy: str = "cheapest",
    memory_budget: Optional[int] = None,
):
    """Run disjoint subtrees in ``workers`` processes; same contract as :func:`dftt_execute`.

    The walk descends to the shallowest frontier with at least ``workers``
    nodes, copies the state at each frontier node once, and hands each copy to
    a worker that traverses that subtree. Output counts equal the one-worker run.
    """
    if workers < 1:
        raise ValueError("workers must be at least 1")
    if workers == 1:
        return dftt_execute(tree, init, seed, policy)
    n = tree.layout.n_qubits
    # each worker holds a working state and its subtree input; the driver holds one more
    need = (2 * workers + 2) * (16 << n)
    budget = available_memory() if memory_budget is None else memory_budget
    if need > budget:
        raise MemoryBudgetError(f"{workers} workers need ~{need / 2**20:.0f} MiB of statevectors; budget is {budget / 2**20:.0f} MiB")

    state = StateVector.zero(n) if init is None else init.copy()
    stats = TraversalStats()
    for o in tree.root_segment:
        apply_gate(state, o)
    stats.forward_gate_applications += len(tree.root_segment)
    depth = frontier_depth(tree, workers)
    groups = tree.frontier(depth)
    walker = _Walker(tree, state, 0, policy, stats)
    acc: dict = {}
    pending = set()

    def collect(done):
        for fut in done:
            part, st = fut.result()
            for k, c in part.items():
                acc[k] = acc.get(k, 0) + c
            stats.__iadd__(st)

    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(tree,)) as pool:
        for lo, hi in groups:
            walker.goto(lo, 0 if lo == 0 else int(tree.lcp[lo]), depth)
            pending.add(pool.submit(_subtree_task, state.amps.copy(), lo, hi, depth, seed, policy))
            if len(pending) >= workers:
                done, pending = wait(pending, return_when=FIRST_COMPLETED)
                collect(done)
        collect(pending)
    return _finish(tree, acc, stats)
