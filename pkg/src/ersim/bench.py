"""Benchmark circuit generators and evaluation metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .circuit import Circuit, CircuitError, GateKind, bitstring, op, run_noiseless
from .rng import stream

FAMILIES = ("qaoa", "adder", "ghz", "bitcode", "phasecode", "bv")


def _measure_all(ops: list, qubits):
    ops.extend(op(GateKind.MEASURE, q) for q in qubits)


def gen_qaoa(n: int, p_layers: int, seed: int = 0) -> Circuit:
    """Layered ansatz: an RX on every qubit, then ZZ couplings around a ring.

    Each ZZ coupling is ``CNOT(i, j) RZ(j) CNOT(i, j)``. For ``n == 2`` the ring
    degenerates to a single edge. Every angle is drawn independently and
    uniformly from ``[0, 2 pi)``.
    """
    if n < 2 or p_layers < 1:
        raise CircuitError(f"QAOA needs n >= 2 and p >= 1, got n={n}, p={p_layers}")
    rng = stream(seed, "qaoa-angles")
    edges = [(0, 1)] if n == 2 else [(i, (i + 1) % n) for i in range(n)]
    ops = []
    for _ in range(p_layers):
        for q in range(n):
            ops.append(op(GateKind.RX, q, params=(rng.uniform(0, 2 * math.pi),)))
        for i, j in edges:
            ops.append(op(GateKind.CNOT, i, j))
            ops.append(op(GateKind.RZ, j, params=(rng.uniform(0, 2 * math.pi),)))
            ops.append(op(GateKind.CNOT, i, j))
    _measure_all(ops, range(n))
    return Circuit(n, ops)


def toffoli(a: int, b: int, c: int) -> list:
    """Controls ``a``, ``b`` and target ``c`` with six CNOTs and a T layer."""
    G = GateKind
    return [
        op(G.H, c),
        op(G.CNOT, b, c),
        op(G.Tdg, c),
        op(G.CNOT, a, c),
        op(G.T, c),
        op(G.CNOT, b, c),
        op(G.Tdg, c),
        op(G.CNOT, a, c),
        op(G.T, b),
        op(G.T, c),
        op(G.H, c),
        op(G.CNOT, a, b),
        op(G.T, a),
        op(G.Tdg, b),
        op(G.CNOT, a, b),
    ]


def _maj(c, b, a):
    return [op(GateKind.CNOT, a, b), op(GateKind.CNOT, a, c)] + toffoli(c, b, a)


def _uma(c, b, a):
    return toffoli(c, b, a) + [op(GateKind.CNOT, a, c), op(GateKind.CNOT, c, b)]


def adder_registers(n: int):
    """``(carry, b_qubits, a_qubits)`` for an ``n``-qubit ripple-carry adder."""
    k = (n - 1) // 2
    return 0, [1 + 2 * i for i in range(k)], [2 + 2 * i for i in range(k)]


def gen_adder(n: int, a: int = 1, b: int = 1) -> Circuit:
    """Ripple-carry adder with a single ancilla computing ``b <- (a + b) mod 2**k``.

    ``n = 2k + 1``: qubit 0 is the incoming carry, ``b_i`` lives on ``1 + 2i``
    and ``a_i`` on ``2 + 2i``. Only the ``b`` register is measured, so the
    printed outcome is the sum in binary.
    """
    if n < 5 or n % 2 == 0:
        raise CircuitError(f"adder needs an odd qubit count >= 5, got {n}")
    c0, bq, aq = adder_registers(n)
    k = len(bq)
    if not (0 <= a < 1 << k and 0 <= b < 1 << k):
        raise CircuitError(f"operands must fit in {k} bits, got a={a}, b={b}")
    ops = []
    for i in range(k):
        if a >> i & 1:
            ops.append(op(GateKind.X, aq[i]))
        if b >> i & 1:
            ops.append(op(GateKind.X, bq[i]))
    carries = [c0] + aq[:-1]
    for i in range(k):
        ops += _maj(carries[i], bq[i], aq[i])
    for i in reversed(range(k)):
        ops += _uma(carries[i], bq[i], aq[i])
    _measure_all(ops, bq)
    return Circuit(n, ops)


def gen_ghz(n: int) -> Circuit:
    if n < 2:
        raise CircuitError(f"GHZ needs n >= 2, got {n}")
    ops = [op(GateKind.H, 0)] + [op(GateKind.CNOT, 0, i) for i in range(1, n)]
    _measure_all(ops, range(n))
    return Circuit(n, ops)


def _code_layout(d: int):
    if d < 1:
        raise CircuitError(f"code distance must be >= 1, got {d}")
    n = 4 * d + 1
    return n, list(range(0, n, 2)), list(range(1, n, 2))


def gen_bit_code(d: int) -> Circuit:
    """Repetition code: data on even qubits, parity ancillas on odd qubits, ``d`` check rounds.

    Ancillas are not reset between rounds, so each ancilla ends holding the
    parity of its syndromes across all rounds.
    """
    n, data, anc = _code_layout(d)
    ops = []
    for _ in range(d):
        for a in anc:
            ops.append(op(GateKind.CNOT, a - 1, a))
            ops.append(op(GateKind.CNOT, a + 1, a))
    _measure_all(ops, range(n))
    return Circuit(n, ops)


def gen_phase_code(d: int) -> Circuit:
    """Phase-flip variant: data starts in ``|+>`` and each round checks X parities.

    A round maps the data to the Z basis with H, runs the bit-code checks and
    maps back. A final H on the data makes noiseless outcomes all zero.
    """
    n, data, anc = _code_layout(d)
    hs = [op(GateKind.H, q) for q in data]
    ops = list(hs)
    for _ in range(d):
        ops += hs
        for a in anc:
            ops.append(op(GateKind.CNOT, a - 1, a))
            ops.append(op(GateKind.CNOT, a + 1, a))
        ops += hs
    ops += hs
    _measure_all(ops, range(n))
    return Circuit(n, ops)


def gen_bv(n: int, secret: str) -> Circuit:
    """Bernstein-Vazirani over ``n - 1`` data qubits with the phase ancilla on qubit ``n - 1``.

    ``secret`` is written most-significant first, so its last character is
    qubit 0 and the noiseless outcome string equals ``secret``.
    """
    if len(secret) != n - 1 or set(secret) - {"0", "1"}:
        raise CircuitError(f"secret must be a {n - 1}-bit string, got {secret!r}")
    anc = n - 1
    data = range(n - 1)
    ops = [op(GateKind.X, anc)] + [op(GateKind.H, q) for q in range(n)]
    for q in data:
        if secret[-1 - q] == "1":
            ops.append(op(GateKind.CNOT, q, anc))
    ops += [op(GateKind.H, q) for q in data]
    _measure_all(ops, data)
    return Circuit(n, ops)


@dataclass(frozen=True)
class BenchmarkSpec:
    """Which generator to call and with what size.

    ``n_qubits`` is ignored by the code families, which are sized by
    ``distance``; the BV size may be inferred from ``secret``.
    """

    family: str
    n_qubits: Optional[int] = None
    distance: Optional[int] = None
    layers: int = 2
    seed: int = 0
    secret: Optional[str] = None

    def __post_init__(self):
        fam = self.family.lower()
        object.__setattr__(self, "family", fam)
        if fam not in FAMILIES:
            raise CircuitError(f"unknown benchmark {self.family!r}; choose from {', '.join(FAMILIES)}")
        if fam in ("bitcode", "phasecode"):
            if self.distance is None:
                raise CircuitError(f"{fam} needs a code distance")
            if self.n_qubits is not None and self.n_qubits != 4 * self.distance + 1:
                raise CircuitError(f"{fam} with d={self.distance} has {4 * self.distance + 1} qubits, not {self.n_qubits}")
        elif fam == "bv":
            if self.secret is None and self.n_qubits is None:
                raise CircuitError("bv needs a secret or a qubit count")
        elif self.n_qubits is None:
            raise CircuitError(f"{fam} needs a qubit count")

    def build(self) -> Circuit:
        f = self.family
        if f == "qaoa":
            return gen_qaoa(self.n_qubits, self.layers, self.seed)
        if f == "adder":
            return gen_adder(self.n_qubits)
        if f == "ghz":
            return gen_ghz(self.n_qubits)
        if f == "bitcode":
            return gen_bit_code(self.distance)
        if f == "phasecode":
            return gen_phase_code(self.distance)
        secret = self.secret if self.secret is not None else default_secret(self.n_qubits - 1)
        return gen_bv(len(secret) + 1, secret)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("family", "n_qubits", "distance", "layers", "seed", "secret")}


def default_secret(bits: int) -> str:
    """Alternating ``1010...`` pattern used when no BV secret is given."""
    return "".join("1" if i % 2 == 0 else "0" for i in range(bits))


@dataclass
class RunReport:
    distribution: dict
    wall_time: float
    traversal_stats: dict
    config: dict
    fidelity: Optional[float]
    stage_times_s: dict = field(default_factory=dict)
    key_counts: dict = field(default_factory=dict)
    pruning_bound: Optional[float] = None

    @property
    def total_shots(self) -> int:
        return sum(self.distribution.values())


def speedup(time_b: float, time_a: float) -> float:
    """Speedup of protocol A over baseline B, ``time_B / time_A``."""
    if time_a <= 0 or time_b <= 0:
        raise ZeroDivisionError("times must be positive")
    return time_b / time_a


def rel_fidelity_diff(f_a: float, f_b: float) -> float:
    if f_a + f_b <= 0:
        raise ZeroDivisionError("fidelities sum to zero")
    return abs(f_a - f_b) / (f_a + f_b)


def _to_probs(dist: Mapping[str, float]) -> dict:
    total = float(sum(dist.values()))
    if total <= 0:
        raise ValueError("empty distribution")
    return {k: v / total for k, v in dist.items()}


def classical_fidelity(p: Mapping[str, float], q: Mapping[str, float]) -> float:
    """Squared Bhattacharyya overlap of two distributions (counts are normalized first)."""
    p, q = _to_probs(p), _to_probs(q)
    return float(sum(math.sqrt(p[k] * q[k]) for k in p.keys() & q.keys()) ** 2)


def tvd(p: Mapping[str, float], q: Mapping[str, float]) -> float:
    """Total variation distance; counts are normalized first."""
    p, q = _to_probs(p), _to_probs(q)
    return 0.5 * float(sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in p.keys() | q.keys()))


def ideal_distribution(circuit: Circuit) -> dict:
    """Noiseless outcome probabilities over the measured qubits."""
    clean = circuit.without_noise()
    probs = run_noiseless(clean).probabilities(clean.measured_qubits)
    width = len(clean.measured_qubits)
    return {bitstring(i, width): float(v) for i, v in enumerate(probs) if v > 1e-15}
