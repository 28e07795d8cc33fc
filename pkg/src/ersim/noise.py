"""Pauli noise channels, noise-site attachment and error-realization sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import pauli
from .circuit import Circuit, CircuitError, GateKind, NoiseSiteId, Operation

_PROB_TOL = 1e-12


class NoiseError(ValueError):
    pass


@dataclass(frozen=True)
class PauliChannel:
    """Mixture ``p_I rho + p_X X rho X + p_Y Y rho Y + p_Z Z rho Z``."""

    probs: tuple

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        if len(probs) != 4:
            raise NoiseError("a Pauli channel has exactly four probabilities")
        if any(p < -_PROB_TOL or p > 1 + _PROB_TOL for p in probs):
            raise NoiseError(f"probabilities must lie in [0, 1]: {probs}")
        if abs(sum(probs) - 1) > _PROB_TOL:
            raise NoiseError(f"probabilities must sum to 1: {probs} sums to {sum(probs)!r}")
        object.__setattr__(self, "probs", tuple(min(max(p, 0.0), 1.0) for p in probs))

    @property
    def error_probability(self) -> float:
        return 1.0 - self.probs[0]

    def compose(self, other: "PauliChannel") -> "PauliChannel":
        """Both channels back to back, convolved under the phase-free Pauli product."""
        out = [0.0] * 4
        for a, pa in enumerate(self.probs):
            for b, pb in enumerate(other.probs):
                out[pauli.multiply(a, b)] += pa * pb
        # renormalize away float drift so the invariant holds to 1e-12
        total = sum(out)
        return PauliChannel(tuple(p / total for p in out))


IDENTITY_CHANNEL = PauliChannel((1.0, 0.0, 0.0, 0.0))


def _check_p(p: float):
    if not 0.0 <= p <= 1.0:
        raise NoiseError(f"error probability must be in [0, 1], got {p}")


def depolarizing_channel(p: float) -> PauliChannel:
    _check_p(p)
    return PauliChannel((1 - p, p / 3, p / 3, p / 3))


def measurement_flip_channel(p: float) -> PauliChannel:
    _check_p(p)
    return PauliChannel((1 - p, p, 0.0, 0.0))


@dataclass(frozen=True)
class DecoherenceParams:
    t: float
    T1: float
    T2: float

    def __post_init__(self):
        if self.t < 0:
            raise NoiseError("gate duration t must be non-negative")
        if self.T1 <= 0 or self.T2 <= 0:
            raise NoiseError("T1 and T2 must be positive")
        if self.T2 > 2 * self.T1:
            raise NoiseError(f"unphysical coherence times: T2={self.T2} exceeds 2*T1={2 * self.T1}")


def twirl_decoherence(d: DecoherenceParams) -> PauliChannel:
    """Pauli-twirled amplitude and phase damping over a gate of duration ``d.t``."""
    relax = (1 - math.exp(-d.t / d.T1)) / 4
    p_z = (1 - math.exp(-d.t / d.T2)) / 2 - relax
    if p_z < -_PROB_TOL:
        raise NoiseError(f"twirled channel has negative p_Z={p_z:.3g} for t={d.t}, T1={d.T1}, T2={d.T2}")
    p_z = max(p_z, 0.0)
    return PauliChannel((1 - 2 * relax - p_z, relax, relax, p_z))


@dataclass(frozen=True)
class NoiseSpec:
    gate_error_p: float = 0.01
    meas_error_p: float = 0.01
    decoherence: Optional[DecoherenceParams] = None

    def __post_init__(self):
        _check_p(self.gate_error_p)
        _check_p(self.meas_error_p)

    @property
    def gate_noise(self) -> PauliChannel:
        channel = depolarizing_channel(self.gate_error_p)
        if self.decoherence is not None:
            channel = channel.compose(twirl_decoherence(self.decoherence))
        return channel

    @property
    def meas_noise(self) -> PauliChannel:
        return measurement_flip_channel(self.meas_error_p)

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseSpec":
        deco = data.get("decoherence")
        return cls(
            gate_error_p=float(data.get("gate_error_p", 0.01)),
            meas_error_p=float(data.get("meas_error_p", 0.01)),
            decoherence=None if deco is None else DecoherenceParams(float(deco["t"]), float(deco["T1"]), float(deco["T2"])),
        )

    def to_dict(self) -> dict:
        deco = self.decoherence
        return {
            "gate_error_p": self.gate_error_p,
            "meas_error_p": self.meas_error_p,
            "decoherence": None if deco is None else {"t": deco.t, "T1": deco.T1, "T2": deco.T2},
        }


def attach_noise(circuit: Circuit, spec: Optional[NoiseSpec] = None) -> Circuit:
    """Insert one noise placeholder per (unitary gate, acted qubit) and one before each MEASURE.

    ``spec`` does not change where sites go; channels are resolved separately by
    :func:`site_channels`.
    """
    if circuit.noise_sites:
        raise NoiseError("circuit already carries noise sites")
    ops = []
    k = 0
    for o in circuit.ops:
        if o.kind is GateKind.MEASURE:
            ops.append(Operation(GateKind.I, o.qubits, noise_site=NoiseSiteId(k, "meas")))
            k += 1
            ops.append(o)
            continue
        ops.append(o)
        for q in o.qubits:
            ops.append(Operation(GateKind.I, (q,), noise_site=NoiseSiteId(k, "gate")))
            k += 1
    return Circuit(circuit.n_qubits, ops)


def site_channels(circuit: Circuit, spec: NoiseSpec) -> list:
    """Channel for each noise site, in circuit order."""
    gate, meas = spec.gate_noise, spec.meas_noise
    return [meas if s.role == "meas" else gate for s in circuit.noise_sites]


def channel_table(channels: Sequence[PauliChannel]) -> np.ndarray:
    """Cumulative thresholds ``(sites, 3)`` used for inverse-CDF sampling."""
    if not channels:
        return np.zeros((0, 3))
    probs = np.array([c.probs for c in channels], dtype=np.float64)
    table = np.cumsum(probs, axis=1)[:, :3]
    # a threshold followed only by zero-probability Paulis must never be crossed
    tail = np.cumsum(probs[:, ::-1], axis=1)[:, ::-1]
    table[tail[:, 1:] == 0] = 2.0
    return table


@dataclass(frozen=True)
class ErrorRealization:
    """One Pauli per noise site, as codes ``I=0, X=1, Y=2, Z=3``."""

    paulis: tuple

    @property
    def hamming_weight(self) -> int:
        return sum(1 for p in self.paulis if p)

    def __len__(self):
        return len(self.paulis)

    def __str__(self):
        return "".join(pauli.LABELS[p] for p in self.paulis)

    @classmethod
    def from_string(cls, s: str) -> "ErrorRealization":
        return cls(tuple(pauli.parse(c) for c in s))


def sample_ers(channels: Sequence[PauliChannel], shots: int, rng: np.random.Generator) -> np.ndarray:
    """``(shots, sites)`` uint8 matrix of independently drawn site Paulis."""
    table = channel_table(channels)
    u = rng.random((shots, len(channels)))
    codes = (u >= table[:, 0]).astype(np.uint8)
    codes += u >= table[:, 1]
    codes += u >= table[:, 2]
    return codes


def sample_er(circuit: Circuit, channels: Sequence[PauliChannel], rng: np.random.Generator) -> ErrorRealization:
    if len(channels) != len(circuit.noise_sites):
        raise CircuitError("one channel per noise site is required")
    return ErrorRealization(tuple(int(c) for c in sample_ers(channels, 1, rng)[0]))
