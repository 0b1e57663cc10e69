import json

import numpy as np
import pytest

from qstockpred.ansatz import (
    ShareSpecifySpec,
    build_conditional_ansatz,
    build_label_control,
    build_layered_pqc,
    build_loader_circuit,
    build_share_specify,
    circuit_from_dicts,
    circuit_to_dicts,
    circuit_to_json,
    label_pattern,
    param_count,
    prepare_label,
    reduce_for_label,
    trainable_mask,
)
from qstockpred.simulator import (
    Statevector,
    apply_circuit,
    fidelity,
    init_basis,
    kron,
    marginal_probs,
)

from oracles import random_state


def label_basis(spec, asset):
    bits = "".join(str(b) for b in label_pattern(spec.n_assets, asset)) + "0"
    return init_basis(spec.label_bits + 1, bits)


class TestLoader:
    def test_default_shape_counts(self):
        pc = build_loader_circuit(3, 4)
        assert pc.n_params == 24
        assert sum(1 for g in pc.gates if g.kind == "CNOT") == 12

    def test_single_qubit_ring_degenerates(self):
        pc = build_loader_circuit(1, 1)
        assert pc.n_params == 2
        assert all(g.kind != "CNOT" for g in pc.gates)

    def test_zero_angles_fix_ground_state(self):
        pc = build_loader_circuit(2, 1)
        out = apply_circuit(init_basis(2, "00"), pc, np.zeros(pc.n_params))
        np.testing.assert_allclose(out.amps, init_basis(2, "00").amps, atol=1e-12)

    def test_rotation_axes_cycle(self):
        pc = build_loader_circuit(3, 1)
        rotations = [g.kind for g in pc.gates if g.is_rotation]
        assert rotations == ["RY"] * 3 + ["RZ"] * 3


class TestLayeredPqc:
    def test_default_param_count(self):
        assert build_layered_pqc(4, 4, 2).n_params == 32

    def test_single_layer_count(self):
        assert build_layered_pqc(4, 1, 2).n_params == 8

    def test_zero_angles_identity_with_identity_entangler(self):
        pc = build_layered_pqc(3, 2, 2, entangler="identity")
        rng = np.random.default_rng(4)
        vec = random_state(rng, 3)
        out = apply_circuit(Statevector(3, vec), pc, np.zeros(pc.n_params))
        np.testing.assert_allclose(out.amps, vec, atol=1e-12)

    def test_param_count_formula(self):
        for n, layers, sub in ((2, 1, 1), (3, 2, 2), (4, 3, 3)):
            assert build_layered_pqc(n, layers, sub).n_params == layers * n * sub

    def test_chain_entangler_never_targets_sources(self):
        pc = build_layered_pqc(4, 4, 2, entangler="chain", n_targets=1)
        for gate in pc.gates:
            if gate.kind == "CNOT":
                assert gate.target == 3

    def test_unknown_entangler(self):
        with pytest.raises(ValueError):
            build_layered_pqc(3, 1, 2, entangler="mesh")


class TestShareSpecify:
    def test_parameter_partition(self):
        spec = ShareSpecifySpec(context_len=3, horizon=1, n_assets=2, layers=1, sublayers=2)
        pc = build_share_specify(spec)
        blocks = pc.slot_blocks()
        assert blocks.count("shared") == 8
        assert blocks.count("specific:0") == 8
        assert blocks.count("specific:1") == 8
        # per-asset trainable budget: shared + own specify
        assert int(trainable_mask(pc, 0).sum()) == 16

    def test_k4_total_slots(self):
        spec = ShareSpecifySpec(context_len=3, horizon=1, n_assets=4, layers=1, sublayers=2)
        pc = build_share_specify(spec)
        assert param_count(pc) == 40
        assert int(trainable_mask(pc, 2).sum()) == 16

    def test_k2_uses_polarity_controls(self):
        spec = ShareSpecifySpec(context_len=3, horizon=1, n_assets=2)
        pc = build_share_specify(spec)
        for gate, block in zip(pc.gates, pc.blocks):
            if block == "specific:0" and gate.is_rotation:
                assert gate.controls == ((4, 0),)
            if block == "specific:1" and gate.is_rotation:
                assert gate.controls == ((4, 1),)

    def test_zero_angles_identity_on_data_for_all_labels(self):
        rng = np.random.default_rng(8)
        for style in ("direct", "toffoli"):
            spec = ShareSpecifySpec(context_len=2, horizon=1, n_assets=4,
                                    entangler="identity", control_style=style)
            pc = build_share_specify(spec)
            for asset in range(4):
                data = Statevector(3, random_state(rng, 3))
                state = kron(data, label_basis(spec, asset))
                out = apply_circuit(state, pc, np.zeros(pc.n_params))
                assert fidelity(out, state) == pytest.approx(1.0, abs=1e-10)

    def test_k_not_power_of_two(self):
        with pytest.raises(ValueError):
            ShareSpecifySpec(context_len=3, horizon=1, n_assets=3)

    @pytest.mark.parametrize("n_assets", [2, 4, 8])
    @pytest.mark.parametrize("style", ["direct", "toffoli"])
    def test_multiplexer_property(self, n_assets, style):
        # full circuit on |data>|k> == reduced circuit on |data>, tensor |k>
        spec = ShareSpecifySpec(context_len=3, horizon=1, n_assets=n_assets,
                                layers=1, sublayers=2, control_style=style)
        pc = build_share_specify(spec)
        rng = np.random.default_rng(n_assets)
        params = rng.uniform(-np.pi, np.pi, pc.n_params)
        for asset in range(n_assets):
            reduced, slot_map = reduce_for_label(pc, asset)
            data = Statevector(4, random_state(rng, 4))
            full_in = kron(data, label_basis(spec, asset))
            out_full = apply_circuit(full_in, pc, params)
            out_reduced = kron(apply_circuit(data, reduced, params[slot_map]),
                               label_basis(spec, asset))
            assert fidelity(out_full, out_reduced) == pytest.approx(1.0, abs=1e-10)

    def test_label_orthogonality(self):
        # asset k's specify block leaves |data>|k'> unchanged for k' != k
        spec = ShareSpecifySpec(context_len=2, horizon=1, n_assets=4, layers=1, sublayers=2)
        pc = build_share_specify(spec)
        rng = np.random.default_rng(3)
        params = np.zeros(pc.n_params)
        blocks = pc.slot_blocks()
        asset = 1
        for i, blk in enumerate(blocks):
            if blk == f"specific:{asset}":
                params[i] = rng.uniform(-np.pi, np.pi)
        spec_id = ShareSpecifySpec(context_len=2, horizon=1, n_assets=4,
                                   layers=1, sublayers=2, entangler="identity")
        pc_id = build_share_specify(spec_id)
        for other in range(4):
            data = Statevector(3, random_state(rng, 3))
            state = kron(data, label_basis(spec, other))
            out = apply_circuit(state, pc_id, params)
            if other == asset:
                assert fidelity(out, state) < 0.999
            else:
                assert fidelity(out, state) == pytest.approx(1.0, abs=1e-10)

    def test_control_styles_agree(self):
        rng = np.random.default_rng(12)
        for n_assets in (4, 8):
            direct = build_share_specify(ShareSpecifySpec(2, 1, n_assets, control_style="direct"))
            toffoli = build_share_specify(ShareSpecifySpec(2, 1, n_assets, control_style="toffoli"))
            assert direct.n_params == toffoli.n_params
            params = rng.uniform(-np.pi, np.pi, direct.n_params)
            for asset in range(n_assets):
                data = Statevector(3, random_state(rng, 3))
                spec = ShareSpecifySpec(2, 1, n_assets)
                state = kron(data, label_basis(spec, asset))
                a = apply_circuit(state, direct, params)
                b = apply_circuit(state, toffoli, params)
                assert fidelity(a, b) == pytest.approx(1.0, abs=1e-10)


class TestLabelControl:
    def test_k4_pattern_11_is_bare_ccnot(self):
        gates = build_label_control(4, 3)
        assert [g.kind for g in gates] == ["CCNOT"]
        assert gates[0].controls == ((0, 1), (1, 1))

    def test_k4_pattern_00_is_x_wrapped(self):
        gates = build_label_control(4, 0)
        assert [g.kind for g in gates] == ["X", "X", "CCNOT", "X", "X"]

    def test_k2_degenerates_to_polarity(self):
        assert build_label_control(2, 0) == []
        assert build_label_control(2, 1) == []

    @pytest.mark.parametrize("n_assets", [4, 8])
    def test_work_bit_set_iff_label_matches(self, n_assets):
        bits = (n_assets - 1).bit_length()
        for asset in range(n_assets):
            gates = build_label_control(n_assets, asset)
            for value in range(n_assets):
                state = init_basis(bits + 1, format(value, f"0{bits}b") + "0")
                for g in gates:
                    from qstockpred.simulator import apply_gate

                    state = apply_gate(state, g)
                work = marginal_probs(state, [bits])
                expected = 1.0 if value == asset else 0.0
                assert work.prob("1") == pytest.approx(expected, abs=1e-12)

    def test_uncompute_restores_work_bit(self):
        gates = build_label_control(8, 5)
        state = init_basis(4, "1010")
        from qstockpred.simulator import apply_gate

        for g in gates + gates:
            state = apply_gate(state, g)
        assert state.probability("1010") == pytest.approx(1.0)

    def test_out_of_range_asset(self):
        with pytest.raises(ValueError):
            build_label_control(4, 4)


class TestPrepareLabel:
    def test_single_asset(self):
        state = prepare_label([1, 0, 0, 0])
        assert state.n_qubits == 2
        np.testing.assert_allclose(state.amps, [1, 0, 0, 0])

    def test_equal_weights(self):
        np.testing.assert_allclose(prepare_label([1, 1]).amps,
                                   [1 / np.sqrt(2), 1 / np.sqrt(2)])

    def test_three_to_one(self):
        np.testing.assert_allclose(prepare_label([3, 1]).amps,
                                   [np.sqrt(0.75), 0.5], atol=1e-12)

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            prepare_label([0, 0])
        with pytest.raises(ValueError):
            prepare_label([1, -1])


class TestConditionalAnsatz:
    def test_context_is_never_targeted(self):
        pc = build_conditional_ansatz(3, 1)
        assert pc.n_params == 8
        for gate in pc.gates:
            assert gate.target == 3

    def test_preserves_context_exactly(self):
        from qstockpred.data import EmpiricalDist
        from qstockpred.inference import context_preservation_score

        pc = build_conditional_ansatz(2, 1)
        rng = np.random.default_rng(6)
        params = rng.uniform(-np.pi, np.pi, pc.n_params)
        ctx = EmpiricalDist(2, {"00": 0.25, "01": 0.25, "10": 0.25, "11": 0.25})
        assert context_preservation_score(pc, params, ctx) == pytest.approx(1.0, abs=1e-12)


class TestCounts:
    def test_param_count_examples(self):
        assert param_count(build_loader_circuit(3, 4)) == 24
        assert param_count(build_layered_pqc(4, 4, 2)) == 32
        spec = ShareSpecifySpec(context_len=3, horizon=1, n_assets=4, layers=1, sublayers=2)
        assert param_count(build_share_specify(spec)) == 40

    def test_slots_unique_per_gate(self):
        spec = ShareSpecifySpec(context_len=3, horizon=1, n_assets=8, layers=2, sublayers=2)
        pc = build_share_specify(spec)
        slots = [g.param_slot for g in pc.gates if g.param_slot is not None]
        assert len(slots) == len(set(slots)) == pc.n_params


class TestSerialization:
    def test_json_roundtrip(self):
        spec = ShareSpecifySpec(context_len=2, horizon=1, n_assets=4, control_style="toffoli")
        pc = build_share_specify(spec)
        entries = json.loads(circuit_to_json(pc))
        again = circuit_from_dicts(pc.n_qubits, entries, pc.layout)
        assert again.n_params == pc.n_params
        rng = np.random.default_rng(1)
        params = rng.uniform(-np.pi, np.pi, pc.n_params)
        state = Statevector(pc.n_qubits, random_state(rng, pc.n_qubits))
        a = apply_circuit(state, pc, params)
        b = apply_circuit(state, again, params)
        assert fidelity(a, b) == pytest.approx(1.0, abs=1e-12)

    def test_export_schema_fields(self):
        pc = build_loader_circuit(2, 1)
        entry = circuit_to_dicts(pc)[0]
        assert set(entry) == {"kind", "target", "controls", "param_slot", "layer", "block_tag"}
