import numpy as np
import pytest

from qstockpred.simulator import (
    GateOp,
    QubitLayout,
    Statevector,
    apply_circuit,
    apply_gate,
    fidelity,
    init_basis,
    kron,
    marginal_probs,
    sample_bitstrings,
    swap_test_estimate,
    swap_test_p0,
)

from oracles import (
    apply_gates_dense,
    random_circuit,
    random_gateop,
    random_state,
    reduced_density_diagonal,
)


def plus_state():
    return apply_gate(init_basis(1, "0"), GateOp("H", 0))


class TestInitBasis:
    def test_ground_state(self):
        np.testing.assert_allclose(init_basis(1, "0").amps, [1, 0])

    def test_two_qubit_basis(self):
        np.testing.assert_allclose(init_basis(2, "10").amps, [0, 0, 1, 0])

    def test_binary_expansion(self):
        state = init_basis(3, "011")
        assert state.amps[3] == 1.0
        assert np.count_nonzero(state.amps) == 1

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            init_basis(2, "101")
        with pytest.raises(ValueError):
            init_basis(2, "1x")


class TestApplyGate:
    def test_ry_pi_flips(self):
        out = apply_gate(init_basis(1, "0"), GateOp("RY", 0), np.pi)
        assert abs(out.probability("1") - 1.0) < 1e-12

    def test_rz_leaves_probabilities(self):
        state = init_basis(3, "101")
        for theta in (0.3, -1.7, np.pi):
            out = apply_gate(state, GateOp("RZ", 1), theta)
            np.testing.assert_allclose(out.probabilities(), state.probabilities(), atol=1e-12)

    def test_cnot_builds_bell(self):
        state = apply_gate(init_basis(2, "00"), GateOp("H", 0))
        out = apply_gate(state, GateOp("CNOT", target=1, controls=((0, 1),)))
        np.testing.assert_allclose(out.amps, [1 / np.sqrt(2), 0, 0, 1 / np.sqrt(2)], atol=1e-12)

    def test_theta_required_for_rotations(self):
        with pytest.raises(ValueError):
            apply_gate(init_basis(1, "0"), GateOp("RY", 0))

    def test_theta_rejected_for_fixed(self):
        with pytest.raises(ValueError):
            apply_gate(init_basis(1, "0"), GateOp("H", 0), 0.5)

    def test_polarity_zero_control(self):
        # X fires only when the control reads 0
        gate = GateOp("X", target=1, controls=((0, 0),))
        out = apply_gate(init_basis(2, "00"), gate)
        assert abs(out.probability("01") - 1.0) < 1e-12
        out = apply_gate(init_basis(2, "10"), gate)
        assert abs(out.probability("10") - 1.0) < 1e-12

    def test_out_of_range_index(self):
        with pytest.raises(ValueError):
            apply_gate(init_basis(1, "0"), GateOp("X", target=1))

    def test_gateop_validation(self):
        with pytest.raises(ValueError):
            GateOp("SWAP", target=0, target2=0)
        with pytest.raises(ValueError):
            GateOp("X", target=0, controls=((0, 1),))
        with pytest.raises(ValueError):
            GateOp("CNOT", target=0)
        with pytest.raises(ValueError):
            GateOp("CCNOT", target=0, controls=((1, 1),))
        with pytest.raises(ValueError):
            GateOp("H", target=0, param_slot=0)

    def test_every_kind_matches_dense_oracle(self):
        rng = np.random.default_rng(11)
        min_qubits = {"CNOT": 2, "CCNOT": 3, "SWAP": 2}
        for kind in ("RX", "RY", "RZ", "X", "H", "CNOT", "CCNOT", "SWAP"):
            for _ in range(20):
                n = int(rng.integers(min_qubits.get(kind, 2), 5))
                gate, theta = random_gateop(rng, n, kinds=[kind])
                vec = random_state(rng, n)
                got = apply_gate(Statevector(n, vec), gate, theta)
                from oracles import gate_matrix

                want = gate_matrix(gate, n, theta) @ vec
                np.testing.assert_allclose(got.amps, want, atol=1e-10)

    def test_norm_preserved_over_long_sequences(self):
        rng = np.random.default_rng(5)
        state = Statevector(4, random_state(rng, 4))
        for _ in range(200):
            gate, theta = random_gateop(rng, 4)
            state = apply_gate(state, gate, theta)
        assert state.norm_error() <= 1e-10


class TestApplyCircuit:
    def test_empty_circuit_is_identity(self):
        from qstockpred.ansatz import ParamCircuit

        pc = ParamCircuit(n_qubits=2, gates=[], n_params=0, layers=[], blocks=[])
        state = init_basis(2, "10")
        out = apply_circuit(state, pc, [])
        np.testing.assert_allclose(out.amps, state.amps)

    def test_linearity(self):
        rng = np.random.default_rng(3)
        pc, params = random_circuit(rng, 3, 12)
        a = init_basis(3, "010")
        b = init_basis(3, "111")
        alpha, beta = 0.6, 0.8
        mixed = Statevector(3, alpha * a.amps + beta * b.amps)
        out_mixed = apply_circuit(mixed, pc, params)
        out_sum = alpha * apply_circuit(a, pc, params).amps + beta * apply_circuit(b, pc, params).amps
        np.testing.assert_allclose(out_mixed.amps, out_sum, atol=1e-12)

    def test_random_circuit_matches_dense_product(self):
        rng = np.random.default_rng(7)
        pc, params = random_circuit(rng, 3, 10)
        vec = random_state(rng, 3)
        got = apply_circuit(Statevector(3, vec), pc, params)
        want = apply_gates_dense(vec, pc.gates, 3, params)
        np.testing.assert_allclose(got.amps, want, atol=1e-10)

    def test_param_length_checked(self):
        rng = np.random.default_rng(0)
        pc, params = random_circuit(rng, 2, 6)
        with pytest.raises(ValueError):
            apply_circuit(init_basis(2, "00"), pc, params[:-1])

    def test_qubit_map_embedding(self):
        rng = np.random.default_rng(21)
        pc, params = random_circuit(rng, 2, 8)
        small = random_state(rng, 2)
        # embed circuit qubits (0,1) -> register qubits (2,0) of a 3-qubit register
        big = np.kron(small.reshape(2, 2).transpose(1, 0).reshape(4), [1, 0]).reshape(2, 2, 2)
        big = np.transpose(big, (1, 2, 0)).reshape(8)  # order: q0=c1, q1=anc, q2=c0
        got = apply_circuit(Statevector(3, big), pc, params, qubit_map=[2, 0])
        mapped_gates = []
        from qstockpred.simulator import GateOp as G

        remap = {0: 2, 1: 0}
        for g in pc.gates:
            mapped_gates.append(G(g.kind, target=remap[g.target],
                                  controls=tuple((remap[q], p) for q, p in g.controls),
                                  param_slot=g.param_slot,
                                  target2=None if g.target2 is None else remap[g.target2]))
        want = apply_gates_dense(big, mapped_gates, 3, params)
        np.testing.assert_allclose(got.amps, want, atol=1e-10)

    def test_unitarity_preserves_fidelity(self):
        rng = np.random.default_rng(13)
        pc, params = random_circuit(rng, 3, 15)
        a = Statevector(3, random_state(rng, 3))
        b = Statevector(3, random_state(rng, 3))
        before = fidelity(a, b)
        after = fidelity(apply_circuit(a, pc, params), apply_circuit(b, pc, params))
        assert abs(before - after) <= 1e-10


class TestFidelity:
    def test_identical(self):
        assert fidelity(init_basis(1, "0"), init_basis(1, "0")) == pytest.approx(1.0)

    def test_orthogonal(self):
        assert fidelity(init_basis(1, "0"), init_basis(1, "1")) == pytest.approx(0.0)

    def test_half_overlap(self):
        assert fidelity(init_basis(1, "0"), plus_state()) == pytest.approx(0.5)

    def test_symmetric_and_phase_blind(self):
        rng = np.random.default_rng(2)
        a = Statevector(2, random_state(rng, 2))
        b = Statevector(2, random_state(rng, 2))
        assert fidelity(a, b) == pytest.approx(fidelity(b, a))
        rotated = Statevector(2, np.exp(1j * 0.7) * a.amps)
        assert fidelity(a, rotated) == pytest.approx(1.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            fidelity(init_basis(1, "0"), init_basis(2, "00"))


class TestSwapTest:
    def test_register_probability_formula(self):
        # explicit ancilla construction must reproduce (1 + F) / 2 exactly
        rng = np.random.default_rng(17)
        for _ in range(10):
            a = Statevector(2, random_state(rng, 2))
            b = Statevector(2, random_state(rng, 2))
            assert swap_test_p0(a, b) == pytest.approx((1 + fidelity(a, b)) / 2, abs=1e-12)

    def test_identical_states(self):
        a = init_basis(2, "01")
        assert swap_test_estimate(a, a, shots=500, rng_seed=0) == pytest.approx(1.0)

    def test_orthogonal_states_converge_to_half(self):
        p0 = swap_test_estimate(init_basis(1, "0"), init_basis(1, "1"), shots=10**6, rng_seed=1)
        assert abs(p0 - 0.5) <= 3 * 0.5 / 1000  # 3 sigma of a fair binomial

    def test_half_fidelity_states(self):
        p0 = swap_test_estimate(init_basis(1, "0"), plus_state(), shots=10**6, rng_seed=2)
        assert abs(p0 - 0.75) <= 0.002

    def test_seed_determinism(self):
        a, b = init_basis(1, "0"), plus_state()
        assert swap_test_estimate(a, b, 1000, 7) == swap_test_estimate(a, b, 1000, 7)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            swap_test_estimate(init_basis(1, "0"), init_basis(2, "00"), 10, 0)


class TestMarginals:
    def test_bell_marginal_is_mixed(self):
        bell = apply_gate(apply_gate(init_basis(2, "00"), GateOp("H", 0)),
                          GateOp("CNOT", target=1, controls=((0, 1),)))
        dist = marginal_probs(bell, [1])
        assert dist.prob("0") == pytest.approx(0.5)
        assert dist.prob("1") == pytest.approx(0.5)

    def test_basis_state_deterministic(self):
        dist = marginal_probs(init_basis(3, "011"), [0, 2])
        assert dist.prob("01") == pytest.approx(1.0)

    def test_against_partial_trace_oracle(self):
        rng = np.random.default_rng(23)
        vec = random_state(rng, 4)
        dist = marginal_probs(Statevector(4, vec), [1, 3])
        want = reduced_density_diagonal(vec, 4, [1, 3])
        np.testing.assert_allclose(dist.to_vector(), want, atol=1e-10)

    def test_sums_to_one(self):
        rng = np.random.default_rng(29)
        vec = random_state(rng, 4)
        dist = marginal_probs(Statevector(4, vec), [0, 2, 3])
        assert abs(sum(dist.probs.values()) - 1.0) <= 1e-10

    def test_empty_keep_rejected(self):
        with pytest.raises(ValueError):
            marginal_probs(init_basis(2, "00"), [])
        with pytest.raises(ValueError):
            marginal_probs(init_basis(2, "00"), [5])


class TestSampling:
    def test_deterministic_state(self):
        counts = sample_bitstrings(init_basis(1, "1"), [0], shots=100, rng_seed=0)
        assert counts == {"1": 100}

    def test_binomial_bound(self):
        counts = sample_bitstrings(plus_state(), [0], shots=10**5, rng_seed=3)
        freq = counts.get("0", 0) / 10**5
        assert abs(freq - 0.5) <= 0.005

    def test_counts_sum_to_shots(self):
        rng = np.random.default_rng(31)
        state = Statevector(3, random_state(rng, 3))
        counts = sample_bitstrings(state, [0, 1, 2], shots=1234, rng_seed=4)
        assert sum(counts.values()) == 1234

    def test_seed_reproducibility(self):
        rng = np.random.default_rng(37)
        state = Statevector(2, random_state(rng, 2))
        a = sample_bitstrings(state, [0, 1], shots=500, rng_seed=99)
        b = sample_bitstrings(state, [0, 1], shots=500, rng_seed=99)
        assert a == b


class TestQubitLayout:
    def test_model_layout_covers_register(self):
        layout = QubitLayout.for_model(3, 1, 1, 4)
        layout.validate()
        assert list(layout.context) == [0, 1, 2]
        assert list(layout.prediction) == [3]
        assert list(layout.label) == [4, 5, 6]
        assert layout.label_work == 6
        assert list(layout.label_value_bits) == [4, 5]

    def test_loss_register_layout(self):
        layout = QubitLayout.for_model(3, 1).with_loss_register()
        layout.validate()
        assert layout.swap_ancilla == 0
        assert list(layout.target_copy) == [5, 6, 7, 8]

    def test_symbol_bits_scale_ranges(self):
        layout = QubitLayout.for_model(2, 1, symbol_bits=2)
        assert len(layout.context) == 4
        assert len(layout.prediction) == 2

    def test_kron_order(self):
        left = init_basis(1, "1")
        right = init_basis(2, "01")
        assert kron(left, right).probability("101") == pytest.approx(1.0)
