"""Circuit builders: distribution loader, layered PQC, share-and-specify.

All builders emit ParamCircuit objects whose rotation sub-layers cycle
through (RY, RZ) and whose entangler is a CNOT ring by default (identity is
selectable). Parameter slots are never shared between gates, so each slot
is one independently trainable angle.

Label-controlled gates come in two interchangeable styles: "direct" puts
the label bit pattern straight onto each rotation as polarity-carrying
controls; "toffoli" first writes an activation bit onto a work qubit with an
X-conjugated Toffoli cascade, controls on that bit, then uncomputes. Both
styles implement the same unitary on the data register for every label.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .simulator import GateOp, QubitLayout, Statevector

SUBLAYER_AXES = ("RY", "RZ")
ENTANGLERS = ("ring", "chain", "identity")
CONTROL_STYLES = ("direct", "toffoli")


@dataclass(eq=False)
class ParamCircuit:
    """Ordered gate list with per-gate layer and block annotations."""

    n_qubits: int
    gates: list[GateOp]
    n_params: int
    layers: list[int]
    blocks: list[str]
    layout: QubitLayout | None = field(default=None, repr=False)

    def validate(self):
        if not (len(self.gates) == len(self.layers) == len(self.blocks)):
            raise ValueError("per-gate annotations out of sync with gate list")
        seen: dict[int, int] = {}
        for i, gate in enumerate(self.gates):
            for q in gate.touched_qubits():
                if not 0 <= q < self.n_qubits:
                    raise ValueError(f"gate {i} touches qubit {q} outside the register")
            if gate.is_rotation:
                if gate.param_slot is None:
                    raise ValueError(f"gate {i}: rotations in a circuit must carry a slot")
                if not 0 <= gate.param_slot < self.n_params:
                    raise ValueError(f"gate {i}: slot {gate.param_slot} out of range")
                if gate.param_slot in seen:
                    raise ValueError(f"slot {gate.param_slot} referenced by more than one gate")
                seen[gate.param_slot] = i
        if len(seen) != self.n_params:
            raise ValueError("some parameter slots are never referenced")

    def slot_blocks(self) -> list[str]:
        """Block tag of each parameter slot, by the gate that owns it."""
        out = [""] * self.n_params
        for gate, block in zip(self.gates, self.blocks):
            if gate.param_slot is not None:
                out[gate.param_slot] = block
        return out


@dataclass(frozen=True)
class ShareSpecifySpec:
    """Shape of a share-and-specify multi-asset circuit."""

    context_len: int
    horizon: int = 1
    n_assets: int = 2
    layers: int = 1
    sublayers: int = 2
    entangler: str = "ring"
    symbol_bits: int = 1
    control_style: str = "direct"

    def __post_init__(self):
        if self.context_len < 1 or self.horizon < 1 or self.layers < 1 or self.sublayers < 1:
            raise ValueError("context_len, horizon, layers, sublayers must all be >= 1")
        if self.n_assets < 2 or self.n_assets & (self.n_assets - 1):
            raise ValueError(f"n_assets must be a power of two >= 2, got {self.n_assets}")
        if self.entangler not in ENTANGLERS:
            raise ValueError(f"unknown entangler {self.entangler!r}")
        if self.control_style not in CONTROL_STYLES:
            raise ValueError(f"unknown control style {self.control_style!r}")

    @property
    def label_bits(self) -> int:
        return (self.n_assets - 1).bit_length()

    @property
    def data_qubits(self) -> int:
        return (self.context_len + self.horizon) * self.symbol_bits

    def layout(self) -> QubitLayout:
        return QubitLayout.for_model(
            self.context_len, self.horizon, self.symbol_bits, self.n_assets
        )


class _Builder:
    def __init__(self, n_qubits: int, layout: QubitLayout | None = None):
        self.n_qubits = n_qubits
        self.layout = layout
        self.gates: list[GateOp] = []
        self.layers: list[int] = []
        self.blocks: list[str] = []
        self.next_slot = 0

    def add(self, gate: GateOp, layer: int, block: str):
        self.gates.append(gate)
        self.layers.append(layer)
        self.blocks.append(block)

    def rotation(self, kind: str, qubit: int, layer: int, block: str, controls=()):
        slot = self.next_slot
        self.next_slot += 1
        self.add(GateOp(kind, target=qubit, controls=tuple(controls), param_slot=slot),
                 layer, block)

    def ring(self, qubits, layer: int, block: str, controls=()):
        if len(qubits) < 2:
            return
        for i, q in enumerate(qubits):
            nxt = qubits[(i + 1) % len(qubits)]
            self.add(GateOp("CNOT", target=nxt, controls=((q, 1),) + tuple(controls)),
                     layer, block)

    def chain(self, sources, targets, layer: int, block: str, controls=()):
        # one CNOT per target, source cycling with the layer so repeated layers
        # pick up different context bits; sources are only ever controls
        if not sources or not targets:
            return
        for i, t in enumerate(targets):
            src = sources[(layer - 1 + i) % len(sources)]
            self.add(GateOp("CNOT", target=t, controls=((src, 1),) + tuple(controls)),
                     layer, block)

    def entangle(self, kind: str, qubits, layer: int, block: str, controls=(),
                 n_targets: int = 1):
        if kind == "ring":
            self.ring(qubits, layer, block, controls)
        elif kind == "chain":
            split = max(1, len(qubits) - n_targets)
            self.chain(qubits[:split], qubits[split:], layer, block, controls)

    def finish(self) -> ParamCircuit:
        pc = ParamCircuit(
            n_qubits=self.n_qubits,
            gates=self.gates,
            n_params=self.next_slot,
            layers=self.layers,
            blocks=self.blocks,
            layout=self.layout,
        )
        pc.validate()
        return pc


def _rotation_rows(b: _Builder, qubits, sublayers: int, layer: int, block: str, controls=()):
    for j in range(sublayers):
        axis = SUBLAYER_AXES[j % len(SUBLAYER_AXES)]
        for q in qubits:
            b.rotation(axis, q, layer, block, controls)


def build_layered_pqc(n: int, layers: int, sublayers: int = 2,
                      entangler: str = "ring", n_targets: int = 1) -> ParamCircuit:
    """Generic layered circuit: per layer, ``sublayers`` rotation rows over
    all n qubits (axes cycling RY, RZ) followed by the entangler.

    Entanglers: "ring" is the CNOT ring over all qubits; "chain" points one
    CNOT per layer from a cycling source qubit into each of the last
    ``n_targets`` qubits (sources are only controls, so a chain never maps
    amplitude between the leading qubits); "identity" adds nothing.
    Parameter count is exactly layers * n * sublayers.
    """
    if n < 1 or layers < 1 or sublayers < 1:
        raise ValueError("n, layers and sublayers must be >= 1")
    if entangler not in ENTANGLERS:
        raise ValueError(f"unknown entangler {entangler!r}")
    b = _Builder(n)
    qubits = list(range(n))
    for layer in range(1, layers + 1):
        _rotation_rows(b, qubits, sublayers, layer, "shared")
        b.entangle(entangler, qubits, layer, "entangler", n_targets=n_targets)
    return b.finish()


def build_loader_circuit(n_qubits: int, layers: int) -> ParamCircuit:
    """Hardware-efficient distribution loader: RY row, RZ row, CNOT ring.

    With a single qubit the ring degenerates and the self-loop CNOT is
    omitted. 2 * n_qubits * layers parameters.
    """
    return build_layered_pqc(n_qubits, layers, sublayers=2, entangler="ring")


def label_pattern(n_assets: int, asset: int) -> tuple[int, ...]:
    """Label-bit values (MSB first) selecting ``asset``; asset 0 is all zeros."""
    bits = (n_assets - 1).bit_length()
    if not 0 <= asset < n_assets:
        raise ValueError(f"asset {asset} out of range for {n_assets} assets")
    return tuple((asset >> (bits - 1 - i)) & 1 for i in range(bits))


def build_label_control(n_assets: int, asset: int, value_qubits=None,
                        work_qubit: int | None = None) -> list[GateOp]:
    """Toffoli-cascade gates that set the work qubit iff the label reads ``asset``.

    Emits X conjugation on every zero-bit control wire around a
    multi-controlled NOT onto the work qubit. Applying the same list again
    uncomputes the work qubit. With two assets the single label bit is used
    as a polarity control directly and no gates are needed.
    """
    if n_assets < 2 or n_assets & (n_assets - 1):
        raise ValueError("n_assets must be a power of two >= 2")
    pattern = label_pattern(n_assets, asset)
    bits = len(pattern)
    if value_qubits is None:
        value_qubits = list(range(bits))
    value_qubits = list(value_qubits)
    if len(value_qubits) != bits:
        raise ValueError(f"need {bits} label value qubits")
    if n_assets == 2:
        return []
    if work_qubit is None:
        work_qubit = bits
    flips = [GateOp("X", target=q) for q, bit in zip(value_qubits, pattern) if bit == 0]
    controls = tuple((q, 1) for q in value_qubits)
    kind = "CCNOT" if bits == 2 else "X"
    cascade = GateOp(kind, target=work_qubit, controls=controls)
    return flips + [cascade] + flips


def build_share_specify(spec: ShareSpecifySpec) -> ParamCircuit:
    """Share-and-specify circuit: per layer, a shared block on the data
    qubits followed by one label-controlled specify block per asset.

    Slot order is all shared slots of a layer first, then the specify slots
    asset by asset; block tags record the owner so training can freeze
    inactive assets.
    """
    layout = spec.layout()
    b = _Builder(layout.n_qubits, layout)
    data = list(layout.data)
    value_bits = list(layout.label_value_bits)
    work = layout.label_work
    n_targets = spec.horizon * spec.symbol_bits
    for layer in range(1, spec.layers + 1):
        _rotation_rows(b, data, spec.sublayers, layer, "shared")
        b.entangle(spec.entangler, data, layer, "entangler", n_targets=n_targets)
        for asset in range(spec.n_assets):
            pattern = label_pattern(spec.n_assets, asset)
            block = f"specific:{asset}"
            if spec.control_style == "direct" or spec.n_assets == 2:
                controls = tuple((q, bit) for q, bit in zip(value_bits, pattern))
                _rotation_rows(b, data, spec.sublayers, layer, block, controls)
                b.entangle(spec.entangler, data, layer, block, controls, n_targets)
            else:
                cascade = build_label_control(spec.n_assets, asset, value_bits, work)
                for g in cascade:
                    b.add(g, layer, "label-control")
                controls = ((work, 1),)
                _rotation_rows(b, data, spec.sublayers, layer, block, controls)
                b.entangle(spec.entangler, data, layer, block, controls, n_targets)
                for g in cascade:
                    b.add(g, layer, "label-control")
    return b.finish()


def build_conditional_ansatz(context_len: int, horizon: int = 1,
                             symbol_bits: int = 1) -> ParamCircuit:
    """Multiplexer of RY rotations: one angle per (context pattern,
    prediction qubit), each rotation controlled on the full context pattern.

    Context qubits are never targets, so the circuit preserves context
    exactly; useful as a structurally context-preserving reference model.
    """
    layout = QubitLayout.for_model(context_len, horizon, symbol_bits)
    b = _Builder(layout.n_qubits, layout)
    ctx = list(layout.context)
    for code in range(1 << len(ctx)):
        pattern = tuple((code >> (len(ctx) - 1 - i)) & 1 for i in range(len(ctx)))
        controls = tuple(zip(ctx, pattern))
        for q in layout.prediction:
            b.rotation("RY", q, 1, "shared", controls)
    return b.finish()


def prepare_label(weights) -> Statevector:
    """Label-register fragment sqrt(w_k / sum w) |k> over log2(K) qubits."""
    weights = np.asarray(weights, dtype=float)
    n_assets = len(weights)
    if n_assets < 2 or n_assets & (n_assets - 1):
        raise ValueError("need a power-of-two number of weights")
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    total = weights.sum()
    if total <= 0:
        raise ValueError("weights must not all be zero")
    amps = np.sqrt(weights / total).astype(np.complex128)
    return Statevector((n_assets - 1).bit_length(), amps)


def param_count(circuit: ParamCircuit) -> int:
    return circuit.n_params


def trainable_mask(circuit: ParamCircuit, asset: int | None) -> np.ndarray:
    """Boolean slot mask: shared slots plus, if given, one asset's slots."""
    blocks = circuit.slot_blocks()
    want = {"shared"}
    if asset is not None:
        want.add(f"specific:{asset}")
    return np.array([blk in want for blk in blocks], dtype=bool)


def reduce_for_label(circuit: ParamCircuit, asset: int) -> tuple[ParamCircuit, np.ndarray]:
    """Strip a share-and-specify circuit down to the plain circuit seen by
    one asset: label controls removed, other assets' gates dropped.

    Returns the reduced data-register circuit plus the array mapping its
    slots back to the full circuit's slot indices.
    """
    layout = circuit.layout
    if layout is None or not len(layout.label):
        raise ValueError("circuit does not carry a labelled layout")
    data_width = len(layout.data)
    keep_blocks = {"shared", "entangler", f"specific:{asset}"}
    b = _Builder(data_width)
    slot_map: list[int] = []
    for gate, layer, block in zip(circuit.gates, circuit.layers, circuit.blocks):
        if block not in keep_blocks:
            continue
        controls = tuple((q, p) for q, p in gate.controls if q < data_width)
        slot = None
        if gate.param_slot is not None:
            slot = len(slot_map)
            slot_map.append(gate.param_slot)
        b.add(GateOp(gate.kind, target=gate.target, controls=controls,
                     param_slot=slot, target2=gate.target2), layer, block)
        b.next_slot = len(slot_map)
    reduced = b.finish()
    return reduced, np.asarray(slot_map, dtype=int)


def circuit_to_dicts(circuit: ParamCircuit) -> list[dict]:
    """JSON-friendly gate listing with layer and block annotations."""
    out = []
    for gate, layer, block in zip(circuit.gates, circuit.layers, circuit.blocks):
        entry = {
            "kind": gate.kind,
            "target": gate.target,
            "controls": [[q, p] for q, p in gate.controls],
            "param_slot": gate.param_slot,
            "layer": layer,
            "block_tag": block,
        }
        if gate.target2 is not None:
            entry["target2"] = gate.target2
        out.append(entry)
    return out


def circuit_from_dicts(n_qubits: int, entries: list[dict],
                       layout: QubitLayout | None = None) -> ParamCircuit:
    gates, layers, blocks = [], [], []
    n_params = 0
    for e in entries:
        gates.append(GateOp(
            kind=e["kind"],
            target=int(e["target"]),
            controls=tuple((int(q), int(p)) for q, p in e.get("controls", [])),
            param_slot=None if e.get("param_slot") is None else int(e["param_slot"]),
            target2=None if e.get("target2") is None else int(e["target2"]),
        ))
        layers.append(int(e.get("layer", 1)))
        blocks.append(e.get("block_tag", "shared"))
        if gates[-1].param_slot is not None:
            n_params = max(n_params, gates[-1].param_slot + 1)
    pc = ParamCircuit(n_qubits=n_qubits, gates=gates, n_params=n_params,
                      layers=layers, blocks=blocks, layout=layout)
    pc.validate()
    return pc


def circuit_to_json(circuit: ParamCircuit) -> str:
    return json.dumps(circuit_to_dicts(circuit), indent=2)
