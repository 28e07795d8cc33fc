"""Ground-truth engines for verification at small sizes.

``dms_run`` evolves the full density matrix with tensor contractions that share
no code with the strided statevector kernel. ``naive_svs`` is the per-shot
baseline that every optimization is measured against.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .circuit import Circuit, GateKind, StateVector, _gate_matrix, apply_gate, bitstring, pauli_op
from .noise import NoiseSpec, PauliChannel, attach_noise, sample_ers, site_channels
from .tem import PruningPartition, draw_outcomes

MAX_DMS_QUBITS = 12

_PAULI_MATS = [_gate_matrix(k, ()) for k in (GateKind.I, GateKind.X, GateKind.Y, GateKind.Z)]


class OracleCapacityError(ValueError):
    pass


class DensityMatrix:
    """``2**n x 2**n`` density matrix held as a rank-``2n`` tensor.

    Axes ``0..n-1`` index the row (ket) qubits and ``n..2n-1`` the column (bra)
    qubits; qubit ``q`` sits at axis ``n-1-q`` within each half.
    """

    def __init__(self, n_qubits: int, rho: Optional[np.ndarray] = None):
        if n_qubits > MAX_DMS_QUBITS:
            raise OracleCapacityError(f"density matrices are capped at {MAX_DMS_QUBITS} qubits, got {n_qubits}")
        self.n_qubits = n = n_qubits
        if rho is None:
            rho = np.zeros((1 << n, 1 << n), dtype=np.complex128)
            rho[0, 0] = 1.0
        self.tensor = np.asarray(rho, dtype=np.complex128).reshape((2,) * (2 * n))

    @property
    def rho(self) -> np.ndarray:
        d = 1 << self.n_qubits
        return self.tensor.reshape(d, d)

    def _row_axis(self, q):
        return self.n_qubits - 1 - q

    def _contract(self, tensor, u: np.ndarray, qubits, bra: bool):
        k = len(qubits)
        axes = [self._row_axis(q) + (self.n_qubits if bra else 0) for q in qubits]
        ut = u.reshape((2,) * (2 * k))
        if bra:
            ut = ut.conj()
        out = np.tensordot(ut, tensor, axes=(list(range(k, 2 * k)), axes))
        return np.moveaxis(out, list(range(k)), axes)

    def conjugate(self, u: np.ndarray, qubits):
        """``rho -> U rho U^dagger``; ``qubits`` lists the high-order qubit first."""
        t = self._contract(self.tensor, u, qubits, bra=False)
        self.tensor = self._contract(t, u, qubits, bra=True)

    def apply_channel(self, channel: PauliChannel, qubit: int):
        base = self.tensor
        out = np.zeros_like(base)
        for code, p in enumerate(channel.probs):
            if p == 0:
                continue
            if code == 0:
                out += p * base
                continue
            t = self._contract(base, _PAULI_MATS[code], (qubit,), bra=False)
            out += p * self._contract(t, _PAULI_MATS[code], (qubit,), bra=True)
        self.tensor = out

    def diagonal(self) -> np.ndarray:
        return np.real(np.diagonal(self.rho)).copy()

    def trace(self) -> complex:
        return complex(np.trace(self.rho))


def _marginal(diag: np.ndarray, n: int, qubits) -> np.ndarray:
    return StateVector(n, np.sqrt(np.clip(diag, 0, None)).astype(np.complex128)).probabilities(qubits)


def dms_state(circuit: Circuit, spec: Optional[NoiseSpec]) -> DensityMatrix:
    """Final density matrix; attaches noise sites when the circuit has none."""
    if spec is not None and not circuit.noise_sites:
        circuit = attach_noise(circuit, spec)
    channels = site_channels(circuit, spec) if spec is not None else []
    dm = DensityMatrix(circuit.n_qubits)
    site = 0
    for o in circuit.ops:
        if o.is_noise:
            if channels:
                dm.apply_channel(channels[site], o.qubits[0])
            site += 1
        elif o.kind is GateKind.MEASURE or o.kind is GateKind.I:
            continue
        elif o.kind is GateKind.CNOT:
            dm.conjugate(_gate_matrix(o.kind, ()), o.qubits)
        else:
            dm.conjugate(_gate_matrix(o.kind, o.params), o.qubits)
    return dm


def dms_probabilities(circuit: Circuit, spec: Optional[NoiseSpec]) -> np.ndarray:
    """Exact outcome probabilities over the measured qubits."""
    if circuit.n_qubits > MAX_DMS_QUBITS:
        raise OracleCapacityError(f"density matrices are capped at {MAX_DMS_QUBITS} qubits, got {circuit.n_qubits}")
    dm = dms_state(circuit, spec)
    return _marginal(dm.diagonal(), circuit.n_qubits, circuit.measured_qubits)


def dms_run(circuit: Circuit, spec: Optional[NoiseSpec]) -> dict:
    """Exact distribution ``P(k) = <k|rho|k>`` as bitstring -> probability."""
    probs = dms_probabilities(circuit, spec)
    width = len(circuit.measured_qubits)
    return {bitstring(k, width): float(p) for k, p in enumerate(probs) if p > 1e-15}


def naive_svs(circuit: Circuit, spec: NoiseSpec, shots: int, rng: np.random.Generator, return_array: bool = False):
    """One fresh noisy statevector simulation per shot, one sample each."""
    if not circuit.noise_sites:
        circuit = attach_noise(circuit, spec)
    channels = site_channels(circuit, spec)
    measured = circuit.measured_qubits
    width = len(measured)
    counts = np.zeros(1 << width, dtype=np.int64)
    n = circuit.n_qubits
    plan = []
    site = 0
    for o in circuit.ops:
        if o.is_noise:
            plan.append((site, o.qubits[0]))
            site += 1
        elif o.kind.is_unitary and o.kind is not GateKind.I:
            plan.append((-1, o))
    paulis = [[None] + [pauli_op(c, q) for c in (1, 2, 3)] for q in range(n)]
    ers = sample_ers(channels, shots, rng)
    for er in ers:
        state = StateVector.zero(n)
        for s, item in plan:
            if s < 0:
                apply_gate(state, item)
            elif er[s]:
                apply_gate(state, paulis[item][er[s]])
        outcome, _ = draw_outcomes(state.probabilities(measured), 1, rng)
        counts[outcome[0]] += 1
    if return_array:
        return counts
    return {bitstring(int(k), width): int(counts[k]) for k in np.flatnonzero(counts)}


def pruning_bound(partition: PruningPartition) -> float:
    """Worst-case per-outcome probability shift caused by pruning."""
    if partition.n_insignificant == 0:
        return 0.0
    gamma = partition.gamma or 0.0
    return partition.p0 / partition.total_shots * partition.alpha * (partition.n_insignificant + gamma * partition.n_selected)
