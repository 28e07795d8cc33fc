"""Circuit representation and the statevector kernel.

Qubit 0 is the least significant bit of the amplitude index. Bitstrings are
printed most-significant qubit first, so ``X`` on qubit 0 of ``|00>`` gives
``"01"``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional, Sequence

import numpy as np


class CircuitError(ValueError):
    """Malformed circuit, operation or circuit text."""


class GateKind(str, enum.Enum):
    I = "I"
    X = "X"
    Y = "Y"
    Z = "Z"
    H = "H"
    S = "S"
    Sdg = "Sdg"
    T = "T"
    Tdg = "Tdg"
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    CNOT = "CNOT"
    MEASURE = "MEASURE"

    @property
    def n_params(self) -> int:
        return 1 if self in _ROTATIONS else 0

    @property
    def n_qubits(self) -> int:
        return 2 if self is GateKind.CNOT else 1

    @property
    def is_unitary(self) -> bool:
        return self is not GateKind.MEASURE


_ROTATIONS = frozenset({GateKind.RX, GateKind.RY, GateKind.RZ})
_PAULI_KINDS = (GateKind.I, GateKind.X, GateKind.Y, GateKind.Z)


@dataclass(frozen=True)
class NoiseSiteId:
    """Identifies one noise site. ``role`` is ``"gate"`` or ``"meas"``."""

    index: int
    role: str = "gate"


@dataclass(frozen=True)
class Operation:
    kind: GateKind
    qubits: tuple
    params: tuple = ()
    noise_site: Optional[NoiseSiteId] = None

    def __post_init__(self):
        kind = GateKind(self.kind)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if len(self.qubits) != kind.n_qubits:
            raise CircuitError(f"{kind.value} acts on {kind.n_qubits} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise CircuitError(f"repeated qubit in {kind.value} {self.qubits}")
        if any(q < 0 for q in self.qubits):
            raise CircuitError(f"negative qubit index in {self.qubits}")
        if len(self.params) != kind.n_params:
            raise CircuitError(f"{kind.value} takes {kind.n_params} parameter(s), got {len(self.params)}")
        if self.noise_site is not None and kind is not GateKind.I:
            raise CircuitError("noise sites are carried by identity placeholders only")

    @property
    def is_noise(self) -> bool:
        return self.noise_site is not None

    def __str__(self):
        parts = [self.kind.value, *map(str, self.qubits), *(repr(p) for p in self.params)]
        return " ".join(parts)


def op(kind, *qubits, params=()) -> Operation:
    """Shorthand constructor: ``op("CNOT", 0, 1)``, ``op("RZ", 2, params=[0.3])``."""
    return Operation(GateKind(kind), qubits, tuple(params))


@dataclass
class Circuit:
    n_qubits: int
    ops: list = field(default_factory=list)

    def __post_init__(self):
        if self.n_qubits < 1:
            raise CircuitError("a circuit needs at least one qubit")
        self.ops = list(self.ops)
        measured = set()
        seen_sites = set()
        for o in self.ops:
            for q in o.qubits:
                if q >= self.n_qubits:
                    raise CircuitError(f"qubit {q} out of range for {self.n_qubits} qubits")
                if q in measured and not o.is_noise:
                    raise CircuitError(f"operation {o} follows MEASURE on qubit {q}")
            if o.kind is GateKind.MEASURE:
                if o.qubits[0] in measured:
                    raise CircuitError(f"qubit {o.qubits[0]} measured twice")
                measured.add(o.qubits[0])
            if o.is_noise:
                if o.noise_site.index in seen_sites:
                    raise CircuitError(f"duplicate noise site {o.noise_site}")
                if o.qubits[0] in measured:
                    raise CircuitError("noise site placed after MEASURE")
                seen_sites.add(o.noise_site.index)

    @property
    def noise_sites(self) -> list:
        return [o.noise_site for o in self.ops if o.is_noise]

    @property
    def measured_qubits(self) -> list:
        """Qubits read out, ascending. All qubits when the circuit has no MEASURE."""
        qs = sorted(o.qubits[0] for o in self.ops if o.kind is GateKind.MEASURE)
        return qs or list(range(self.n_qubits))

    def unitary_ops(self) -> list:
        return [o for o in self.ops if o.kind.is_unitary and not o.is_noise]

    def without_noise(self) -> "Circuit":
        return Circuit(self.n_qubits, [o for o in self.ops if not o.is_noise])

    def __len__(self):
        return len(self.ops)


# --------------------------------------------------------------------------
# gate matrices

_SQ2 = 1 / math.sqrt(2)
_FIXED = {
    GateKind.I: np.eye(2),
    GateKind.X: np.array([[0, 1], [1, 0]]),
    GateKind.Y: np.array([[0, -1j], [1j, 0]]),
    GateKind.Z: np.diag([1, -1]),
    GateKind.H: np.array([[_SQ2, _SQ2], [_SQ2, -_SQ2]]),
    GateKind.S: np.diag([1, 1j]),
    GateKind.Sdg: np.diag([1, -1j]),
    GateKind.T: np.diag([1, np.exp(1j * math.pi / 4)]),
    GateKind.Tdg: np.diag([1, np.exp(-1j * math.pi / 4)]),
    # basis order |control target> with the control as the high bit
    GateKind.CNOT: np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]]),
}


@lru_cache(maxsize=4096)
def _gate_matrix(kind: GateKind, params: tuple) -> np.ndarray:
    if kind in _FIXED:
        m = np.array(_FIXED[kind], dtype=np.complex128)
    else:
        (theta,) = params
        c, s = math.cos(theta / 2), math.sin(theta / 2)
        if kind is GateKind.RX:
            m = np.array([[c, -1j * s], [-1j * s, c]])
        elif kind is GateKind.RY:
            m = np.array([[c, -s], [s, c]], dtype=np.complex128)
        else:
            m = np.diag([complex(c, -s), complex(c, s)])
    m.setflags(write=False)
    return m


def gate_matrix(kind, params: Sequence[float] = ()) -> np.ndarray:
    """Unitary of a gate kind; 2x2, or 4x4 for CNOT in |control target> order."""
    try:
        kind = GateKind(kind)
    except ValueError:
        raise CircuitError(f"unknown gate {kind!r}") from None
    if not kind.is_unitary:
        raise CircuitError("MEASURE has no unitary")
    params = tuple(float(p) for p in params)
    if len(params) != kind.n_params:
        raise CircuitError(f"{kind.value} takes {kind.n_params} parameter(s), got {len(params)}")
    return _gate_matrix(kind, params)


# --------------------------------------------------------------------------
# statevector


class StateVector:
    """``2**n`` complex amplitudes, owned by a single worker."""

    __slots__ = ("n_qubits", "amps")

    def __init__(self, n_qubits: int, amps: Optional[np.ndarray] = None):
        self.n_qubits = int(n_qubits)
        if amps is None:
            amps = np.zeros(1 << self.n_qubits, dtype=np.complex128)
            amps[0] = 1.0
        else:
            amps = np.asarray(amps, dtype=np.complex128)
            if amps.shape != (1 << self.n_qubits,):
                raise CircuitError(f"expected {1 << self.n_qubits} amplitudes, got {amps.shape}")
        self.amps = amps

    @classmethod
    def zero(cls, n_qubits: int) -> "StateVector":
        return cls(n_qubits)

    @classmethod
    def basis(cls, n_qubits: int, index: int) -> "StateVector":
        amps = np.zeros(1 << n_qubits, dtype=np.complex128)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amps.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def probabilities(self, qubits: Optional[Sequence[int]] = None) -> np.ndarray:
        """Outcome probabilities over ``qubits`` (ascending; default all).

        Bit ``j`` of the returned index is the value of ``qubits[j]``.
        """
        probs = np.abs(self.amps) ** 2
        n = self.n_qubits
        if qubits is None or list(qubits) == list(range(n)):
            return probs
        qubits = list(qubits)
        tensor = probs.reshape((2,) * n)
        # tensor axis a holds qubit n-1-a
        drop = tuple(n - 1 - q for q in range(n) if q not in qubits)
        marg = tensor.sum(axis=drop)
        kept_axes_qubits = [q for q in reversed(range(n)) if q in qubits]
        order = [kept_axes_qubits.index(q) for q in reversed(qubits)]
        return np.ascontiguousarray(marg.transpose(order)).reshape(-1)

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits})"


def _check(state: StateVector, o: Operation):
    if not o.kind.is_unitary:
        raise CircuitError("MEASURE is a marker and cannot be applied to a state")
    for q in o.qubits:
        if q >= state.n_qubits:
            raise CircuitError(f"qubit {q} out of range for a {state.n_qubits}-qubit state")


def _apply_1q(amps: np.ndarray, n: int, q: int, kind: GateKind, m: np.ndarray):
    v = amps.reshape(1 << (n - q - 1), 2, 1 << q)
    a0 = v[:, 0, :]
    a1 = v[:, 1, :]
    if kind is GateKind.X:
        tmp = a0.copy()
        a0[...] = a1
        a1[...] = tmp
    elif kind is GateKind.Z:
        a1 *= -1
    elif kind is GateKind.Y:
        tmp = a0.copy()
        a0[...] = a1
        a0 *= -1j
        a1[...] = tmp
        a1 *= 1j
    elif m[0, 1] == 0 and m[1, 0] == 0:
        if m[0, 0] != 1:
            a0 *= m[0, 0]
        a1 *= m[1, 1]
    else:
        tmp = a0.copy()
        a0 *= m[0, 0]
        a0 += m[0, 1] * a1
        a1 *= m[1, 1]
        a1 += m[1, 0] * tmp


def _apply_cnot(amps: np.ndarray, n: int, control: int, target: int):
    t = amps.reshape((2,) * n)
    ca, ta = n - 1 - control, n - 1 - target
    i10 = [slice(None)] * n
    i11 = [slice(None)] * n
    i10[ca] = 1
    i11[ca] = 1
    i10[ta] = 0
    i11[ta] = 1
    i10, i11 = tuple(i10), tuple(i11)
    tmp = t[i10].copy()
    t[i10] = t[i11]
    t[i11] = tmp


def apply_gate(state: StateVector, o: Operation) -> StateVector:
    """Apply a unitary operation in place and return the state."""
    _check(state, o)
    if o.kind is GateKind.CNOT:
        _apply_cnot(state.amps, state.n_qubits, *o.qubits)
    elif o.kind is not GateKind.I:
        _apply_1q(state.amps, state.n_qubits, o.qubits[0], o.kind, _gate_matrix(o.kind, o.params))
    return state


_INVERSE_KIND = {GateKind.S: GateKind.Sdg, GateKind.Sdg: GateKind.S, GateKind.T: GateKind.Tdg, GateKind.Tdg: GateKind.T}


def inverse(o: Operation) -> Operation:
    """The operation undoing ``o``."""
    if not o.kind.is_unitary:
        raise CircuitError("MEASURE has no inverse")
    if o.kind in _INVERSE_KIND:
        return Operation(_INVERSE_KIND[o.kind], o.qubits)
    if o.kind in _ROTATIONS:
        return Operation(o.kind, o.qubits, (-o.params[0],))
    return Operation(o.kind, o.qubits)


def apply_inverse(state: StateVector, o: Operation) -> StateVector:
    return apply_gate(state, inverse(o))


def run_noiseless(circuit: Circuit, init: Optional[StateVector] = None) -> StateVector:
    """Apply every unitary gate of ``circuit`` to a copy of ``init`` (default ``|0..0>``).

    Noise placeholders act as identity and MEASURE markers are skipped.
    """
    state = StateVector.zero(circuit.n_qubits) if init is None else init.copy()
    if state.n_qubits != circuit.n_qubits:
        raise CircuitError("initial state and circuit disagree on the qubit count")
    for o in circuit.ops:
        if o.kind.is_unitary and not o.is_noise:
            apply_gate(state, o)
    return state


def bitstring(index: int, width: int) -> str:
    return format(index, f"0{width}b") if width else ""


def counts_to_dict(counts: np.ndarray, width: int) -> dict:
    nz = np.flatnonzero(counts)
    return {bitstring(int(k), width): int(counts[k]) for k in nz}


def sample_counts(probs: np.ndarray, shots: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial draw of ``shots`` outcomes; returns a count per outcome index."""
    if shots < 0:
        raise ValueError("shots must be non-negative")
    total = probs.sum()
    if abs(total - 1.0) > 1e-6:
        raise CircuitError(f"state is not normalized (total probability {total:.9f})")
    if shots == 0:
        return np.zeros(len(probs), dtype=np.int64)
    return rng.multinomial(shots, probs / total)


def sample_state(
    state: StateVector,
    shots: int,
    rng: np.random.Generator,
    qubits: Optional[Sequence[int]] = None,
) -> dict:
    """Draw ``shots`` i.i.d. computational-basis samples; returns bitstring counts."""
    width = state.n_qubits if qubits is None else len(qubits)
    counts = sample_counts(state.probabilities(qubits), shots, rng)
    return counts_to_dict(counts, width)


# --------------------------------------------------------------------------
# text format


def parse_circuit(text: str, n_qubits: Optional[int] = None) -> Circuit:
    """Parse ``GATE q0 [q1] [angle]`` lines; ``#`` starts a comment line."""
    ops = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        name, *args = line.split()
        kind = _lookup_kind(name)
        if kind is None:
            raise CircuitError(f"line {lineno}: unknown gate {name!r}")
        want = kind.n_qubits + kind.n_params
        if len(args) != want:
            raise CircuitError(f"line {lineno}: {kind.value} expects {want} argument(s), got {len(args)}")
        try:
            qubits = [int(a) for a in args[: kind.n_qubits]]
            params = [float(a) for a in args[kind.n_qubits :]]
        except ValueError:
            raise CircuitError(f"line {lineno}: malformed arguments {args}") from None
        try:
            ops.append(Operation(kind, qubits, params))
        except CircuitError as exc:
            raise CircuitError(f"line {lineno}: {exc}") from None
    if n_qubits is None:
        n_qubits = 1 + max((q for o in ops for q in o.qubits), default=0)
    return Circuit(n_qubits, ops)


def _lookup_kind(name: str) -> Optional[GateKind]:
    for kind in GateKind:
        if kind.value.upper() == name.upper():
            return kind
    if name.upper() in ("CX", "SDAG", "TDAG", "M"):
        return {"CX": GateKind.CNOT, "SDAG": GateKind.Sdg, "TDAG": GateKind.Tdg, "M": GateKind.MEASURE}[name.upper()]
    return None


def format_circuit(circuit: Circuit) -> str:
    return "".join(f"{o}\n" for o in circuit.ops if not o.is_noise)


def load_circuit(path) -> Circuit:
    with open(path) as fh:
        return parse_circuit(fh.read())


def pauli_op(code: int, qubit: int) -> Operation:
    return Operation(_PAULI_KINDS[code], (qubit,))


def embed(ops: Iterable[Operation], n_qubits: int) -> np.ndarray:
    """Dense ``2**n`` unitary of a gate list, built from Kronecker products.

    Deliberately independent of the strided kernel; used as a test oracle.
    """
    dim = 1 << n_qubits
    total = np.eye(dim, dtype=np.complex128)
    for o in ops:
        if not o.kind.is_unitary or o.is_noise:
            continue
        total = _embed_one(o, n_qubits) @ total
    return total


def _embed_one(o: Operation, n: int) -> np.ndarray:
    dim = 1 << n
    if o.kind is GateKind.CNOT:
        c, t = o.qubits
        u = np.zeros((dim, dim), dtype=np.complex128)
        for k in range(dim):
            j = k ^ (1 << t) if (k >> c) & 1 else k
            u[j, k] = 1
        return u
    m = _gate_matrix(o.kind, o.params)
    (q,) = o.qubits
    u = np.ones((1, 1), dtype=np.complex128)
    for j in reversed(range(n)):
        u = np.kron(u, m if j == q else np.eye(2))
    return u
