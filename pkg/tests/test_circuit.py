import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from ersim.circuit import (
    Circuit,
    CircuitError,
    GateKind,
    Operation,
    StateVector,
    apply_gate,
    apply_inverse,
    embed,
    format_circuit,
    gate_matrix,
    inverse,
    op,
    parse_circuit,
    run_noiseless,
    sample_state,
)
from ersim.bench import gen_qaoa
from strategies import random_ops, random_state

X_MAT = np.array([[0, 1], [1, 0]])
Z_MAT = np.diag([1, -1])


class TestGateMatrix:
    def test_pauli_x(self):
        assert np.array_equal(gate_matrix(GateKind.X), X_MAT)

    def test_rz_zero_is_identity(self):
        assert np.allclose(gate_matrix(GateKind.RZ, [0.0]), np.eye(2), atol=1e-15)

    def test_rz_quarter_turn_matches_exponential(self):
        theta = math.pi / 2
        expected = expm(-1j * theta / 2 * Z_MAT)
        assert np.allclose(gate_matrix(GateKind.RZ, [theta]), expected, atol=1e-12)
        assert np.allclose(np.diag(expected), [np.exp(-1j * math.pi / 4), np.exp(1j * math.pi / 4)])

    @pytest.mark.parametrize("kind,gen", [(GateKind.RX, X_MAT), (GateKind.RY, np.array([[0, -1j], [1j, 0]])), (GateKind.RZ, Z_MAT)])
    def test_rotations_match_exponential(self, kind, gen):
        for theta in np.linspace(-4, 4, 9):
            assert np.allclose(gate_matrix(kind, [theta]), expm(-1j * theta / 2 * gen), atol=1e-12)

    @pytest.mark.parametrize("kind", [k for k in GateKind if k is not GateKind.MEASURE])
    def test_unitary(self, kind):
        m = gate_matrix(kind, [0.7] * kind.n_params)
        assert np.allclose(m @ m.conj().T, np.eye(len(m)), atol=1e-12)

    def test_errors(self):
        with pytest.raises(CircuitError):
            gate_matrix("FOO")
        with pytest.raises(CircuitError):
            gate_matrix(GateKind.RX, [])
        with pytest.raises(CircuitError):
            gate_matrix(GateKind.MEASURE)


class TestOperationAndCircuit:
    def test_param_count_enforced(self):
        with pytest.raises(CircuitError):
            Operation(GateKind.H, (0,), (1.0,))
        with pytest.raises(CircuitError):
            Operation(GateKind.RZ, (0,))

    def test_distinct_qubits(self):
        with pytest.raises(CircuitError):
            op(GateKind.CNOT, 1, 1)

    def test_qubit_range(self):
        with pytest.raises(CircuitError):
            Circuit(2, [op(GateKind.H, 2)])

    def test_gate_after_measure_rejected(self):
        with pytest.raises(CircuitError):
            Circuit(1, [op(GateKind.MEASURE, 0), op(GateKind.X, 0)])

    def test_measured_qubits_default_all(self):
        assert Circuit(3, [op(GateKind.H, 0)]).measured_qubits == [0, 1, 2]
        assert Circuit(3, [op(GateKind.MEASURE, 2), op(GateKind.MEASURE, 0)]).measured_qubits == [0, 2]


class TestApplyGate:
    def test_x_on_qubit0(self):
        s = apply_gate(StateVector.zero(2), op(GateKind.X, 0))
        assert np.allclose(s.amps, [0, 1, 0, 0])

    def test_hadamard(self):
        s = apply_gate(StateVector.zero(1), op(GateKind.H, 0))
        assert np.allclose(s.amps, np.array([1, 1]) / math.sqrt(2))

    def test_cnot_hand_oracle(self):
        # (|00> + |01>)/sqrt2 has qubit 0 set on the second term; control 0 flips qubit 1
        s = StateVector(2, np.array([1, 1, 0, 0]) / math.sqrt(2))
        apply_gate(s, op(GateKind.CNOT, 0, 1))
        assert np.allclose(s.amps, np.array([1, 0, 0, 1]) / math.sqrt(2))

    def test_measure_rejected(self):
        with pytest.raises(CircuitError):
            apply_gate(StateVector.zero(1), op(GateKind.MEASURE, 0))

    def test_qubit_out_of_range(self):
        with pytest.raises(CircuitError):
            apply_gate(StateVector.zero(1), op(GateKind.X, 1))

    def test_matches_dense_chain(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            n = int(rng.integers(1, 5))
            ops = random_ops(rng, n, int(rng.integers(1, 12)))
            v = random_state(rng, n)
            s = StateVector(n, v.copy())
            for o in ops:
                apply_gate(s, o)
            assert np.allclose(s.amps, embed(ops, n) @ v, atol=1e-9)

    def test_norm_preserved_over_long_circuits(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            n = int(rng.integers(1, 7))
            s = StateVector(n, random_state(rng, n))
            for o in random_ops(rng, n, 200):
                apply_gate(s, o)
            assert abs(s.norm() - 1) <= 1e-9


class TestInverse:
    def test_x_self_inverse(self):
        assert inverse(op(GateKind.X, 0)) == op(GateKind.X, 0)
        s = StateVector.zero(1)
        apply_gate(apply_gate(s, op(GateKind.X, 0)), op(GateKind.X, 0))
        assert np.allclose(s.amps, [1, 0])

    def test_rz_inverse_negates_angle(self):
        assert inverse(op(GateKind.RZ, 0, params=[0.4])) == op(GateKind.RZ, 0, params=[-0.4])

    def test_h_round_trip(self):
        rng = np.random.default_rng(1)
        v = random_state(rng, 3)
        s = StateVector(3, v.copy())
        apply_inverse(apply_gate(s, op(GateKind.H, 1)), op(GateKind.H, 1))
        assert np.allclose(s.amps, v, atol=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 5), st.integers(1, 60))
    def test_sequence_round_trip(self, seed, n, n_gates):
        rng = np.random.default_rng(seed)
        ops = random_ops(rng, n, n_gates)
        v = random_state(rng, n)
        s = StateVector(n, v.copy())
        for o in ops:
            apply_gate(s, o)
        for o in reversed(ops):
            apply_inverse(s, o)
        assert np.max(np.abs(s.amps - v)) <= 1e-9


class TestRunNoiseless:
    def test_empty_circuit(self):
        init = StateVector(2, np.array([0, 1, 0, 0], dtype=complex))
        assert np.array_equal(run_noiseless(Circuit(2, []), init).amps, init.amps)

    def test_bell(self):
        s = run_noiseless(Circuit(2, [op(GateKind.H, 0), op(GateKind.CNOT, 0, 1)]))
        assert np.allclose(s.amps, np.array([1, 0, 0, 1]) / math.sqrt(2))

    def test_qaoa_matches_matrix_chain(self):
        c = gen_qaoa(4, 1, seed=3)
        expected = embed(c.ops, 4)[:, 0]
        assert np.allclose(run_noiseless(c).amps, expected, atol=1e-9)


class TestSampling:
    def test_deterministic_state(self):
        s = StateVector.basis(2, 1)
        assert sample_state(s, 100, np.random.default_rng(0)) == {"01": 100}

    def test_zero_shots(self):
        assert sample_state(StateVector.zero(1), 0, np.random.default_rng(0)) == {}

    def test_binomial_statistics(self):
        s = StateVector(1, np.array([1, 1]) / math.sqrt(2))
        counts = sample_state(s, 10**6, np.random.default_rng(2))
        assert sum(counts.values()) == 10**6
        assert abs(counts["0"] - 5e5) <= 3 * 500

    def test_unnormalized_rejected(self):
        with pytest.raises(CircuitError):
            sample_state(StateVector(1, np.array([1, 1], dtype=complex)), 10, np.random.default_rng(0))

    def test_marginal_bit_order(self):
        # |q2 q1 q0> = |110>, read qubits (0, 2): bit0 = q0 = 0, bit1 = q2 = 1
        s = StateVector.basis(3, 0b110)
        assert sample_state(s, 5, np.random.default_rng(0), qubits=[0, 2]) == {"10": 5}


class TestTextFormat:
    def test_round_trip(self):
        text = "# demo\nH 0\nCNOT 0 1\nRZ 2 1.5707963\nMEASURE 0\n"
        c = parse_circuit(text)
        assert c.n_qubits == 3
        assert [o.kind for o in c.ops] == [GateKind.H, GateKind.CNOT, GateKind.RZ, GateKind.MEASURE]
        assert parse_circuit(format_circuit(c)).ops == c.ops

    @pytest.mark.parametrize("bad", ["FOO 0", "CNOT 0", "H 0 1", "RZ 0", "RZ 0 abc", "CNOT 1 1"])
    def test_rejects_malformed(self, bad):
        with pytest.raises(CircuitError):
            parse_circuit(bad)
