"""Error characterization: tally sampled error realizations, then merge the
ones that are output-equivalent by pushing their Paulis to the right.

Both raw and canonical realizations live on a :class:`SlotLayout`: the noiseless
gate list plus an ordered list of *slots*, each a point ``(position, qubit)``
where a Pauli may be inserted before ``ops[position]``. A realization is a row
of Pauli codes, one per slot.

Raw layout
    one slot per noise site.
Canonical layout
    one slot in front of every single-qubit gate that can block a Pauli
    (RX, RY, RZ, S, Sdg, T, Tdg) plus one slot per qubit at the right edge.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import pauli
from .circuit import Circuit, GateKind, Operation, pauli_op
from .noise import ErrorRealization, PauliChannel, sample_ers

log = logging.getLogger(__name__)

BLOCKED = "blocked"

_Z_AXIS = frozenset({GateKind.RZ, GateKind.S, GateKind.Sdg, GateKind.T, GateKind.Tdg})
BLOCKING_KINDS = frozenset({GateKind.RX, GateKind.RY}) | _Z_AXIS
_PASS_THROUGH = frozenset({GateKind.I, GateKind.X, GateKind.Y, GateKind.Z, GateKind.MEASURE})


@dataclass(frozen=True)
class SlotLayout:
    n_qubits: int
    ops: tuple
    positions: tuple
    qubits: tuple
    measured: tuple
    canonical: bool = False
    # op index -> slot index, for blocking gates of a canonical layout
    block_slot: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def height(self) -> int:
        return len(self.positions)

    @property
    def unitary_count(self) -> int:
        return sum(1 for o in self.ops if o.kind.is_unitary)

    def placement(self, row: Sequence[int]) -> list:
        """Noiseless ops with the row's non-identity Paulis inserted at their slots.

        MEASURE markers are moved to the end so that end-of-circuit slots land
        in front of them; measurement is read off the final state either way.
        """
        out, measures = [], []
        k = 0
        h = self.height
        for g, o in enumerate(self.ops):
            while k < h and self.positions[k] == g:
                if row[k]:
                    out.append(pauli_op(int(row[k]), self.qubits[k]))
                k += 1
            (out if o.kind.is_unitary else measures).append(o)
        while k < h:
            if row[k]:
                out.append(pauli_op(int(row[k]), self.qubits[k]))
            k += 1
        return out + measures

    def placement_circuit(self, row: Sequence[int]) -> Circuit:
        return Circuit(self.n_qubits, self.placement(row))

    def triples(self, row: Sequence[int]) -> list:
        return [(self.positions[k], self.qubits[k], int(c)) for k, c in enumerate(row) if c]

    def key_string(self, row: Sequence[int]) -> str:
        t = self.triples(row)
        if not t:
            return "I"
        return ";".join(f"{g}:{q}:{pauli.LABELS[c]}" for g, q, c in t)


def raw_layout(circuit: Circuit) -> SlotLayout:
    """One slot per noise site of an annotated circuit."""
    ops, positions, qubits = [], [], []
    for o in circuit.ops:
        if o.is_noise:
            positions.append(len(ops))
            qubits.append(o.qubits[0])
        else:
            ops.append(o)
    return SlotLayout(circuit.n_qubits, tuple(ops), tuple(positions), tuple(qubits), tuple(circuit.measured_qubits))


def canonical_layout(circuit: Circuit) -> SlotLayout:
    ops = [o for o in circuit.ops if not o.is_noise]
    positions, qubits, block_slot = [], [], {}
    for g, o in enumerate(ops):
        if o.kind in BLOCKING_KINDS:
            block_slot[g] = len(positions)
            positions.append(g)
            qubits.append(o.qubits[0])
    for q in range(circuit.n_qubits):
        positions.append(len(ops))
        qubits.append(q)
    return SlotLayout(
        circuit.n_qubits,
        tuple(ops),
        tuple(positions),
        tuple(qubits),
        tuple(circuit.measured_qubits),
        canonical=True,
        block_slot=block_slot,
    )


# --------------------------------------------------------------------------
# commutation rules


def _blocks(kind: GateKind, x, z):
    """Mask of frame Paulis that cannot pass ``kind`` without changing it."""
    if kind is GateKind.RX:
        return z
    if kind is GateKind.RY:
        return x ^ z
    return x


def push_rule(p: int, gate: Operation, role: str = "single"):
    """Result of moving Pauli ``p`` from just before ``gate`` to just after it.

    Returns a list of ``(qubit, pauli)`` replacements, or :data:`BLOCKED` when
    moving would alter the gate (e.g. X through RZ(theta) flips theta). ``role``
    is ``"control"``, ``"target"`` or ``"single"``.
    """
    if not p:
        raise ValueError("identity has nothing to push")
    kind = gate.kind
    if kind is GateKind.CNOT:
        c, t = gate.qubits
        if role not in ("control", "target"):
            raise ValueError("CNOT role must be 'control' or 'target'")
        x, z = pauli.to_xz(p)
        x, z = bool(x), bool(z)
        if role == "control":
            out = [(c, pauli.from_xz(x, z)), (t, pauli.from_xz(x, False))]
        else:
            out = [(c, pauli.from_xz(False, z)), (t, pauli.from_xz(x, z))]
        return [(q, int(code)) for q, code in out if code]
    (q,) = gate.qubits
    if kind in _PASS_THROUGH:
        return [(q, p)]
    if kind is GateKind.H:
        return [(q, {pauli.X: pauli.Z, pauli.Z: pauli.X, pauli.Y: pauli.Y}[p])]
    x, z = pauli.to_xz(p)
    if _blocks(kind, bool(x), bool(z)):
        return BLOCKED
    return [(q, p)]


def commute_many(circuit: Circuit, ers: np.ndarray, layout: Optional[SlotLayout] = None) -> np.ndarray:
    """Canonical rows for a batch of raw error realizations.

    One forward pass over the circuit, vectorized across realizations. A per-qubit
    Pauli frame holds the noise pushed so far; back-to-back Paulis merge by
    multiplication (phase dropped), Clifford gates conjugate the frame, and a
    blocking rotation freezes the frame Pauli into the slot in front of it.
    The result is exact up to global phase.
    """
    layout = layout or canonical_layout(circuit)
    ers = np.asarray(ers, dtype=np.uint8)
    if ers.ndim != 2 or ers.shape[1] != len(circuit.noise_sites):
        raise ValueError(f"expected (rows, {len(circuit.noise_sites)}) realizations, got {ers.shape}")
    rows = ers.shape[0]
    out = np.zeros((rows, layout.height), dtype=np.uint8)
    fx = np.zeros((circuit.n_qubits, rows), dtype=bool)
    fz = np.zeros((circuit.n_qubits, rows), dtype=bool)
    sx, sz = pauli.to_xz(ers.T)
    site = 0
    g = 0
    for o in circuit.ops:
        if o.is_noise:
            q = o.qubits[0]
            fx[q] ^= sx[site]
            fz[q] ^= sz[site]
            site += 1
            continue
        kind = o.kind
        if kind is GateKind.CNOT:
            c, t = o.qubits
            fx[t] ^= fx[c]
            fz[c] ^= fz[t]
        elif kind is GateKind.H:
            q = o.qubits[0]
            fx[q], fz[q] = fz[q].copy(), fx[q].copy()
        elif kind in BLOCKING_KINDS:
            q = o.qubits[0]
            # copy: for Z-axis gates the mask is fx[q] itself, which is cleared below
            hit = np.array(_blocks(kind, fx[q], fz[q]), copy=True)
            if hit.any():
                out[hit, layout.block_slot[g]] = pauli.from_xz(fx[q][hit], fz[q][hit])
                fx[q][hit] = False
                fz[q][hit] = False
        g += 1
    h0 = layout.height - circuit.n_qubits
    for q in range(circuit.n_qubits):
        out[:, h0 + q] = pauli.from_xz(fx[q], fz[q])
    return out


def measurement_reduce(layout: SlotLayout, rows: np.ndarray) -> np.ndarray:
    """Drop right-edge Pauli parts that cannot change the read-out distribution.

    The Z part of a final Pauli on a read-out qubit is a diagonal phase; a final
    Pauli on a qubit that is not read out acts on a traced-out subsystem.
    """
    rows = np.array(rows, dtype=np.uint8, copy=True)
    h0 = layout.height - layout.n_qubits
    measured = set(layout.measured)
    for q in range(layout.n_qubits):
        col = rows[:, h0 + q]
        if q in measured:
            x, _ = pauli.to_xz(col)
            rows[:, h0 + q] = np.where(x, pauli.X, pauli.I)
        else:
            rows[:, h0 + q] = pauli.I
    return rows


@dataclass(frozen=True)
class CanonicalER:
    layout: SlotLayout
    codes: tuple

    @property
    def key(self) -> bytes:
        return bytes(self.codes)

    @property
    def hamming_weight(self) -> int:
        return sum(1 for c in self.codes if c)

    def triples(self) -> list:
        """``(gate position, qubit, pauli)`` for every residual Pauli, sorted."""
        return self.layout.triples(self.codes)

    def placement_circuit(self) -> Circuit:
        return self.layout.placement_circuit(self.codes)

    def __eq__(self, other):
        return isinstance(other, CanonicalER) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __str__(self):
        return self.layout.key_string(self.codes)


def commute_er(circuit: Circuit, er, layout: Optional[SlotLayout] = None, reduce: bool = False) -> CanonicalER:
    layout = layout or canonical_layout(circuit)
    paulis = er.paulis if isinstance(er, ErrorRealization) else er
    row = commute_many(circuit, np.array([paulis], dtype=np.uint8).reshape(1, -1), layout)
    if reduce:
        row = measurement_reduce(layout, row)
    return CanonicalER(layout, tuple(int(c) for c in row[0]))


# --------------------------------------------------------------------------
# tallies


def _unique_rows(rows: np.ndarray, weights: Optional[np.ndarray] = None):
    """Distinct rows in lexicographic order with summed weights."""
    rows = np.ascontiguousarray(rows, dtype=np.uint8)
    n, w = rows.shape
    if weights is None:
        weights = np.ones(n, dtype=np.int64)
    if n == 0:
        return rows.reshape(0, w), np.zeros(0, dtype=np.int64)
    if w == 0:
        return rows[:1], np.array([weights.sum()], dtype=np.int64)
    order = np.lexsort(rows.T[::-1])
    srt = rows[order]
    new = np.ones(n, dtype=bool)
    new[1:] = (srt[1:] != srt[:-1]).any(axis=1)
    starts = np.flatnonzero(new)
    sums = np.add.reduceat(np.asarray(weights, dtype=np.int64)[order], starts)
    return srt[starts], sums


@dataclass
class ERTally:
    """Distinct realizations on ``layout`` with their shot counts."""

    layout: SlotLayout
    rows: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.uint8).reshape(-1, self.layout.height)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if len(self.rows) != len(self.counts):
            raise ValueError("rows and counts disagree in length")

    @property
    def total_shots(self) -> int:
        return int(self.counts.sum())

    def __len__(self):
        return len(self.counts)

    def keys(self) -> list:
        return [r.tobytes() for r in self.rows]

    def as_dict(self) -> dict:
        return {r.tobytes(): int(c) for r, c in zip(self.rows, self.counts)}

    def hamming_weights(self) -> np.ndarray:
        return (self.rows != 0).sum(axis=1)

    def merge(self, other: "ERTally") -> "ERTally":
        if other.layout != self.layout:
            raise ValueError("tallies on different layouts cannot be merged")
        rows, counts = _unique_rows(np.vstack([self.rows, other.rows]), np.concatenate([self.counts, other.counts]))
        return ERTally(self.layout, rows, counts)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["canonical_key", "count", "hamming_weight"])
            for r, c, hw in zip(self.rows, self.counts, self.hamming_weights()):
                w.writerow([self.layout.key_string(r), int(c), int(hw)])


def tally_ers(
    circuit: Circuit,
    channels: Sequence[PauliChannel],
    shots: int,
    rng: np.random.Generator,
    chunk: int = 1 << 16,
) -> ERTally:
    """Draw ``shots`` realizations and count each distinct one."""
    if shots < 1:
        raise ValueError("shots must be at least 1")
    layout = raw_layout(circuit)
    if len(channels) != layout.height:
        raise ValueError("one channel per noise site is required")
    parts_rows, parts_counts = [], []
    done = 0
    while done < shots:
        m = min(chunk, shots - done)
        rows, counts = _unique_rows(sample_ers(channels, m, rng))
        parts_rows.append(rows)
        parts_counts.append(counts)
        done += m
    if len(parts_rows) == 1:
        rows, counts = parts_rows[0], parts_counts[0]
    else:
        rows, counts = _unique_rows(np.vstack(parts_rows), np.concatenate(parts_counts))
    return ERTally(layout, rows, counts)


def reduce_tally(circuit: Circuit, tally: ERTally, layout: Optional[SlotLayout] = None, reduce_measure: bool = True) -> ERTally:
    """Merge realizations whose canonical forms agree, summing their counts."""
    layout = layout or canonical_layout(circuit)
    canon = commute_many(circuit, tally.rows, layout)
    if reduce_measure:
        canon = measurement_reduce(layout, canon)
    rows, counts = _unique_rows(canon, tally.counts)
    log.debug("commutation merged %d realizations into %d", len(tally), len(rows))
    return ERTally(layout, rows, counts)


def tally_from_rows(layout: SlotLayout, rows: Iterable, counts: Iterable) -> ERTally:
    rows = np.array(list(rows), dtype=np.uint8).reshape(-1, layout.height)
    r, c = _unique_rows(rows, np.array(list(counts), dtype=np.int64))
    return ERTally(layout, r, c)
