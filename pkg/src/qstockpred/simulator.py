"""Dense statevector engine.

Conventions, fixed package-wide:
  - qubit 0 is the most significant bit of a basis index (topmost wire), so
    basis state |b0 b1 ... b_{n-1}> lives at integer index b0 b1 ... b_{n-1}
    read as binary;
  - rotation gates follow G(theta) = exp(-i * theta * P / 2) for Pauli P;
  - global phase is never observable and never tested.

Gate application pairs amplitude indices once per (circuit, register) and
caches the index arrays, so repeated evaluation of the same circuit during
training amortizes the bookkeeping.
"""

from __future__ import annotations

import json
import weakref
from dataclasses import dataclass, field
from math import sqrt

import numpy as np

from .data import EmpiricalDist

ROTATION_KINDS = ("RX", "RY", "RZ")
FIXED_KINDS = ("X", "H", "CNOT", "CCNOT", "SWAP")
GATE_KINDS = ROTATION_KINDS + FIXED_KINDS

_MIN_CONTROLS = {"CNOT": 1, "CCNOT": 2}


def as_rng(seed) -> np.random.Generator:
    """Accept an int seed, seed sequence, or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class GateOp:
    """One gate: a kind, a target, optional polarity-carrying controls.

    ``controls`` is a tuple of (qubit, polarity) pairs; the gate acts only on
    basis states whose control bits match the declared polarities. SWAP uses
    ``target2`` for its second qubit; all other kinds leave it None.
    ``param_slot`` binds a rotation angle to a position in a parameter vector.
    """

    kind: str
    target: int
    controls: tuple[tuple[int, int], ...] = ()
    param_slot: int | None = None
    target2: int | None = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        object.__setattr__(self, "controls", tuple((int(q), int(p)) for q, p in self.controls))
        touched = {self.target}
        if self.kind == "SWAP":
            if self.target2 is None or self.target2 == self.target:
                raise ValueError("SWAP needs two distinct targets")
            touched.add(self.target2)
        elif self.target2 is not None:
            raise ValueError(f"{self.kind} takes a single target")
        ctrl_qubits = [q for q, _ in self.controls]
        if len(set(ctrl_qubits)) != len(ctrl_qubits):
            raise ValueError("control qubits must be distinct")
        if touched & set(ctrl_qubits):
            raise ValueError("target must not appear among controls")
        for _, pol in self.controls:
            if pol not in (0, 1):
                raise ValueError("control polarity must be 0 or 1")
        need = _MIN_CONTROLS.get(self.kind, 0)
        if len(self.controls) < need:
            raise ValueError(f"{self.kind} needs at least {need} control(s)")
        if self.param_slot is not None and self.kind not in ROTATION_KINDS:
            raise ValueError(f"{self.kind} cannot carry a parameter slot")

    @property
    def is_rotation(self) -> bool:
        return self.kind in ROTATION_KINDS

    def touched_qubits(self) -> tuple[int, ...]:
        """Target(s) plus controls, in that order; the qubits a gate acts through."""
        qubits = [self.target]
        if self.target2 is not None:
            qubits.append(self.target2)
        qubits.extend(q for q, _ in self.controls)
        return tuple(qubits)


@dataclass
class Statevector:
    """Normalized complex amplitudes over 2^n_qubits basis states."""

    n_qubits: int
    amps: np.ndarray

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=np.complex128)
        if self.amps.shape != (1 << self.n_qubits,):
            raise ValueError(
                f"amplitude array has length {self.amps.shape}, expected {1 << self.n_qubits}"
            )

    @classmethod
    def zero(cls, n_qubits: int) -> "Statevector":
        if n_qubits < 1:
            raise ValueError("need at least one qubit")
        amps = np.zeros(1 << n_qubits, dtype=np.complex128)
        amps[0] = 1.0
        return cls(n_qubits, amps)

    def copy(self) -> "Statevector":
        return Statevector(self.n_qubits, self.amps.copy())

    def norm_error(self) -> float:
        return abs(float(np.vdot(self.amps, self.amps).real) - 1.0)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def probability(self, bits: str) -> float:
        if len(bits) != self.n_qubits:
            raise ValueError("bitstring length does not match register")
        return float(abs(self.amps[int(bits, 2)]) ** 2)

    def to_json_amplitudes(self) -> str:
        """Debug dump: JSON array of [re, im] pairs in basis-index order."""
        return json.dumps([[a.real, a.imag] for a in self.amps])


def init_basis(n_qubits: int, bits: str) -> Statevector:
    """Computational basis state |bits>, qubit 0 = most significant bit."""
    if n_qubits < 1:
        raise ValueError("need at least one qubit")
    if len(bits) != n_qubits or set(bits) - {"0", "1"}:
        raise ValueError(f"bits {bits!r} does not describe {n_qubits} qubits")
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[int(bits, 2)] = 1.0
    return Statevector(n_qubits, amps)


def kron(a: Statevector, b: Statevector) -> Statevector:
    """Tensor product register: a's qubits first (more significant)."""
    return Statevector(a.n_qubits + b.n_qubits, np.kron(a.amps, b.amps))


def rotation_matrix(kind: str, theta: float) -> np.ndarray:
    half = 0.5 * theta
    c, s = np.cos(half), np.sin(half)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    if kind == "RZ":
        return np.array([[np.exp(-1j * half), 0.0], [0.0, np.exp(1j * half)]], dtype=np.complex128)
    raise ValueError(f"{kind} is not a rotation")

_X_MAT = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.complex128)
_H_MAT = np.array([[1.0, 1.0], [1.0, -1.0]], dtype=np.complex128) / sqrt(2.0)


def _check_indices(gate: GateOp, n: int, qubit_map) -> GateOp:
    """Validate (and optionally remap) a gate's qubit indices for an n-qubit register."""
    if qubit_map is not None:
        gate = GateOp(
            kind=gate.kind,
            target=qubit_map[gate.target],
            controls=tuple((qubit_map[q], p) for q, p in gate.controls),
            param_slot=gate.param_slot,
            target2=None if gate.target2 is None else qubit_map[gate.target2],
        )
    for q in gate.touched_qubits():
        if not 0 <= q < n:
            raise ValueError(f"qubit index {q} out of range for {n}-qubit register")
    return gate


def _control_mask(n: int, controls) -> np.ndarray:
    idx = np.arange(1 << n)
    sel = np.ones(idx.shape, dtype=bool)
    for q, pol in controls:
        mask = 1 << (n - 1 - q)
        sel &= ((idx & mask) != 0) == bool(pol)
    return sel


def _compile_gate(gate: GateOp, n: int):
    """Precompute the amplitude index pairs a gate mixes on an n-qubit register."""
    idx = np.arange(1 << n)
    sel = _control_mask(n, gate.controls)
    if gate.kind == "SWAP":
        m1 = 1 << (n - 1 - gate.target)
        m2 = 1 << (n - 1 - gate.target2)
        ia = idx[sel & ((idx & m1) != 0) & ((idx & m2) == 0)]
        return gate.kind, gate.param_slot, ia, ia ^ (m1 | m2)
    tmask = 1 << (n - 1 - gate.target)
    i0 = idx[sel & ((idx & tmask) == 0)]
    return gate.kind, gate.param_slot, i0, i0 | tmask


def _apply_kernel(amps: np.ndarray, kind: str, i0: np.ndarray, i1: np.ndarray, theta):
    if kind in ("X", "CNOT", "CCNOT", "SWAP"):
        tmp = amps[i0].copy()
        amps[i0] = amps[i1]
        amps[i1] = tmp
        return
    a0 = amps[i0]
    a1 = amps[i1]
    if kind == "H":
        u = _H_MAT
    else:
        u = rotation_matrix(kind, theta)
    amps[i0] = u[0, 0] * a0 + u[0, 1] * a1
    amps[i1] = u[1, 0] * a0 + u[1, 1] * a1


def apply_gate(state: Statevector, gate: GateOp, theta: float | None = None) -> Statevector:
    """Apply one gate and return the new state.

    ``theta`` must be given exactly when the gate is a rotation (angle in
    radians); fixed gates reject it.
    """
    if gate.is_rotation:
        if theta is None:
            raise ValueError(f"{gate.kind} requires a rotation angle")
    elif theta is not None:
        raise ValueError(f"{gate.kind} takes no angle")
    gate = _check_indices(gate, state.n_qubits, None)
    kind, _, i0, i1 = _compile_gate(gate, state.n_qubits)
    amps = state.amps.copy()
    _apply_kernel(amps, kind, i0, i1, theta)
    return Statevector(state.n_qubits, amps)


_KERNEL_CACHE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _compiled(circuit, n: int, qubit_map) -> list:
    per_circuit = _KERNEL_CACHE.setdefault(circuit, {})
    key = (n, None if qubit_map is None else tuple(qubit_map))
    plan = per_circuit.get(key)
    if plan is None:
        plan = [_compile_gate(_check_indices(g, n, qubit_map), n) for g in circuit.gates]
        per_circuit[key] = plan
    return plan


def apply_circuit(state: Statevector, circuit, params, qubit_map=None) -> Statevector:
    """Apply a parameterized circuit's gates in declared order.

    ``params`` must match the circuit's parameter count. ``qubit_map``
    optionally embeds the circuit into a larger register by mapping circuit
    qubit i to register qubit qubit_map[i].
    """
    params = np.asarray(params, dtype=float)
    if params.shape != (circuit.n_params,):
        raise ValueError(
            f"parameter vector has shape {params.shape}, circuit expects {circuit.n_params}"
        )
    if qubit_map is None and circuit.n_qubits > state.n_qubits:
        raise ValueError("circuit does not fit the register")
    amps = state.amps.copy()
    for kind, slot, i0, i1 in _compiled(circuit, state.n_qubits, qubit_map):
        _apply_kernel(amps, kind, i0, i1, None if slot is None else params[slot])
    return Statevector(state.n_qubits, amps)


def fidelity(a: Statevector, b: Statevector) -> float:
    """|<a|b>|^2; 1 iff the states agree up to global phase."""
    if a.n_qubits != b.n_qubits:
        raise ValueError("fidelity needs equal register sizes")
    return float(abs(np.vdot(a.amps, b.amps)) ** 2)


def swap_test_p0(a: Statevector, b: Statevector) -> float:
    """Exact ancilla P(0) of the swap test register, (1 + |<a|b>|^2) / 2.

    Builds the full (2n+1)-qubit circuit: ancilla in (|0>+|1>)/sqrt(2),
    qubit-wise controlled swaps between the two state copies, Hadamard,
    then the ancilla marginal.
    """
    if a.n_qubits != b.n_qubits:
        raise ValueError("swap test needs equal register sizes")
    n = a.n_qubits
    reg = kron(kron(init_basis(1, "0"), a), b)
    reg = apply_gate(reg, GateOp("H", target=0))
    for i in range(n):
        reg = apply_gate(reg, GateOp("SWAP", target=1 + i, target2=1 + n + i, controls=((0, 1),)))
    reg = apply_gate(reg, GateOp("H", target=0))
    probs = reg.probabilities()
    half = 1 << (2 * n)
    return float(probs[:half].sum())


def swap_test_estimate(a: Statevector, b: Statevector, shots: int, rng_seed) -> float:
    """Empirical ancilla P(0) from ``shots`` measurements of the swap test."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    p0 = min(1.0, max(0.0, swap_test_p0(a, b)))
    rng = as_rng(rng_seed)
    return float(rng.binomial(shots, p0)) / shots


def _marginal_vector(state: Statevector, keep: tuple[int, ...]) -> np.ndarray:
    probs = state.probabilities().reshape([2] * state.n_qubits)
    drop = tuple(q for q in range(state.n_qubits) if q not in keep)
    if drop:
        probs = probs.sum(axis=drop)
    return probs.reshape(-1)


def marginal_probs(state: Statevector, keep) -> EmpiricalDist:
    """Diagonal of the reduced state over ``keep`` (ascending qubit order)."""
    keep = tuple(sorted(set(int(q) for q in keep)))
    if not keep:
        raise ValueError("keep set must be nonempty")
    if keep[0] < 0 or keep[-1] >= state.n_qubits:
        raise ValueError("keep set out of range")
    vec = _marginal_vector(state, keep)
    return EmpiricalDist.from_vector(vec, len(keep), tol=0.0)


def sample_bitstrings(state: Statevector, measured, shots: int, rng_seed) -> dict[str, int]:
    """Measurement counts over the ``measured`` qubits (ascending order).

    Deterministic for a fixed seed; counts always sum to ``shots``.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    measured = tuple(sorted(set(int(q) for q in measured)))
    if not measured:
        raise ValueError("measured set must be nonempty")
    if measured[0] < 0 or measured[-1] >= state.n_qubits:
        raise ValueError("measured set out of range")
    vec = _marginal_vector(state, measured)
    vec = np.clip(vec, 0.0, None)
    vec = vec / vec.sum()
    rng = as_rng(rng_seed)
    counts = rng.multinomial(shots, vec)
    width = len(measured)
    return {format(i, f"0{width}b"): int(c) for i, c in enumerate(counts) if c}


@dataclass(frozen=True)
class QubitLayout:
    """Fixed qubit-ordering convention for a model register.

    Data qubits come first (context then prediction), then the label value
    bits, then one label work qubit. The loss-register variant prepends the
    swap ancilla and appends a target copy of the data+label register, which
    only exists while a sampled fidelity loss is being evaluated.
    """

    context: range
    prediction: range
    label: range = field(default_factory=lambda: range(0))
    target_copy: range | None = None
    swap_ancilla: int | None = None

    @property
    def n_qubits(self) -> int:
        parts = [self.context, self.prediction, self.label]
        last = max(r.stop for r in parts if len(r))
        if self.target_copy is not None:
            last = max(last, self.target_copy.stop)
        if self.swap_ancilla is not None:
            last = max(last, self.swap_ancilla + 1)
        return last

    @property
    def data(self) -> range:
        return range(self.context.start, self.prediction.stop)

    @property
    def label_value_bits(self) -> range:
        """Label bits that encode the asset index (excludes the work qubit)."""
        if not len(self.label):
            return self.label
        return range(self.label.start, self.label.stop - 1)

    @property
    def label_work(self) -> int | None:
        return self.label[-1] if len(self.label) else None

    @classmethod
    def for_model(cls, context_len: int, horizon: int, symbol_bits: int = 1,
                  n_assets: int | None = None) -> "QubitLayout":
        if context_len < 1 or horizon < 1 or symbol_bits < 1:
            raise ValueError("context_len, horizon and symbol_bits must be >= 1")
        t_bits = context_len * symbol_bits
        p_bits = horizon * symbol_bits
        label_width = 0
        if n_assets is not None:
            if n_assets < 2 or n_assets & (n_assets - 1):
                raise ValueError("n_assets must be a power of two >= 2")
            label_width = (n_assets - 1).bit_length() + 1
        return cls(
            context=range(0, t_bits),
            prediction=range(t_bits, t_bits + p_bits),
            label=range(t_bits + p_bits, t_bits + p_bits + label_width),
        )

    def with_loss_register(self) -> "QubitLayout":
        n = self.n_qubits
        return QubitLayout(
            context=range(self.context.start + 1, self.context.stop + 1),
            prediction=range(self.prediction.start + 1, self.prediction.stop + 1),
            label=range(self.label.start + 1, self.label.stop + 1),
            target_copy=range(1 + n, 1 + 2 * n),
            swap_ancilla=0,
        )

    def validate(self):
        ranges = [self.context, self.prediction, self.label]
        if self.target_copy is not None:
            ranges.append(self.target_copy)
        seen: set[int] = set()
        if self.swap_ancilla is not None:
            seen.add(self.swap_ancilla)
        for r in ranges:
            qs = set(r)
            if qs & seen:
                raise ValueError("layout ranges overlap")
            seen |= qs
        if seen != set(range(self.n_qubits)):
            raise ValueError("layout does not cover the register")
