"""Independent dense-matrix reference implementations for the tests.

Everything here builds full 2^n x 2^n operators with Kronecker products and
never calls the package's gate kernels, so simulator bugs cannot hide in
their own verification.
"""

import numpy as np

I2 = np.eye(2, dtype=complex)
X_MAT = np.array([[0, 1], [1, 0]], dtype=complex)
H_MAT = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
P0 = np.array([[1, 0], [0, 0]], dtype=complex)
P1 = np.array([[0, 0], [0, 1]], dtype=complex)


def rotation(kind: str, theta: float) -> np.ndarray:
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == "RY":
        return np.array([[c, -s], [s, c]])
    if kind == "RZ":
        return np.array([[np.exp(-1j * theta / 2), 0], [0, np.exp(1j * theta / 2)]])
    raise ValueError(kind)


def kron_all(factors) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for f in factors:
        out = np.kron(out, f)
    return out


def embed(n: int, ops: dict[int, np.ndarray]) -> np.ndarray:
    """Operator acting with ops[q] on qubit q (qubit 0 = most significant)."""
    return kron_all([ops.get(q, I2) for q in range(n)])


def swap_matrix(n: int, q1: int, q2: int) -> np.ndarray:
    # SWAP = sum over |ab><ba| on the two qubits
    terms = []
    for a, pa in ((0, P0), (1, P1)):
        for b, pb in ((0, P0), (1, P1)):
            ket_a = np.zeros((2, 2), dtype=complex)
            ket_a[a, b] = 1.0
            ket_b = np.zeros((2, 2), dtype=complex)
            ket_b[b, a] = 1.0
            terms.append(embed(n, {q1: ket_a, q2: ket_b}))
    return sum(terms)


def gate_matrix(gate, n: int, theta=None) -> np.ndarray:
    """Full-register unitary of one GateOp, controls included."""
    if gate.kind in ("RX", "RY", "RZ"):
        core = embed(n, {gate.target: rotation(gate.kind, theta)})
    elif gate.kind == "H":
        core = embed(n, {gate.target: H_MAT})
    elif gate.kind in ("X", "CNOT", "CCNOT"):
        core = embed(n, {gate.target: X_MAT})
    elif gate.kind == "SWAP":
        core = swap_matrix(n, gate.target, gate.target2)
    else:
        raise ValueError(gate.kind)
    if not gate.controls:
        return core
    proj = embed(n, {q: (P1 if pol else P0) for q, pol in gate.controls})
    return proj @ core + (np.eye(1 << n) - proj)


def circuit_matrix(circuit, params, n=None) -> np.ndarray:
    """Dense product of all gate unitaries, in application order."""
    n = circuit.n_qubits if n is None else n
    out = np.eye(1 << n, dtype=complex)
    for gate in circuit.gates:
        theta = None if gate.param_slot is None else params[gate.param_slot]
        out = gate_matrix(gate, n, theta) @ out
    return out


def apply_gates_dense(state_vec: np.ndarray, gates, n: int, params=None) -> np.ndarray:
    vec = np.asarray(state_vec, dtype=complex).copy()
    for gate in gates:
        theta = None if gate.param_slot is None else params[gate.param_slot]
        vec = gate_matrix(gate, n, theta) @ vec
    return vec


def reduced_density_diagonal(state_vec: np.ndarray, n: int, keep) -> np.ndarray:
    """Diagonal of the reduced density matrix over ``keep`` via explicit
    partial trace of the full density operator."""
    keep = sorted(keep)
    rho = np.outer(state_vec, np.conj(state_vec))
    # reshape to 2n tensor indices, trace out the dropped qubits pairwise
    rho = rho.reshape([2] * (2 * n))
    drop = [q for q in range(n) if q not in keep]
    for count, q in enumerate(drop):
        axis = q - sum(1 for d in drop[:count] if d < q)
        m = rho.shape and (len(rho.shape) // 2)
        rho = np.trace(rho, axis1=axis, axis2=axis + m)
    dim = 1 << len(keep)
    return np.real(np.diag(rho.reshape(dim, dim)))


def random_gateop(rng, n: int, kinds=None):
    """Random GateOp over <= n qubits covering every kind and control shape."""
    from qstockpred.simulator import GateOp

    kinds = kinds or ["RX", "RY", "RZ", "X", "H", "CNOT", "CCNOT", "SWAP"]
    usable = [k for k in kinds
              if n >= {"CNOT": 2, "CCNOT": 3, "SWAP": 2}.get(k, 1)]
    kind = usable[rng.integers(len(usable))]
    qubits = list(rng.permutation(n))
    need = {"CNOT": 1, "CCNOT": 2}.get(kind, 0)
    n_targets = 2 if kind == "SWAP" else 1
    max_controls = min(need + 2, n - n_targets)
    n_controls = int(rng.integers(need, max_controls + 1))
    target = qubits[0]
    target2 = qubits[1] if kind == "SWAP" else None
    controls = tuple(
        (qubits[n_targets + i], int(rng.integers(2))) for i in range(n_controls)
    )
    theta = float(rng.uniform(-np.pi, np.pi)) if kind in ("RX", "RY", "RZ") else None
    return GateOp(kind, target=target, controls=controls, target2=target2), theta


def random_circuit(rng, n: int, n_gates: int, plain_rotations: bool = False):
    """Random ParamCircuit plus a matching parameter vector.

    ``plain_rotations`` drops controls from rotation gates; the two-term
    parameter-shift rule is only exact for uncontrolled rotations, so the
    gradient tests draw circuits in that family (fixed gates keep controls).
    """
    from qstockpred.ansatz import ParamCircuit
    from qstockpred.simulator import GateOp

    gates, params = [], []
    for _ in range(n_gates):
        gate, theta = random_gateop(rng, n)
        if theta is not None:
            controls = () if plain_rotations else gate.controls
            gate = GateOp(gate.kind, target=gate.target, controls=controls,
                          param_slot=len(params), target2=gate.target2)
            params.append(theta)
        gates.append(gate)
    pc = ParamCircuit(n_qubits=n, gates=gates, n_params=len(params),
                      layers=[1] * len(gates), blocks=["shared"] * len(gates))
    pc.validate()
    return pc, np.array(params)


def random_state(rng, n: int) -> np.ndarray:
    vec = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return vec / np.linalg.norm(vec)
