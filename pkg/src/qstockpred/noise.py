"""Monte-Carlo gate noise and readout error.

Depolarizing convention: after every gate, each qubit the gate touched is
hit with probability p by one Pauli drawn uniformly from {X, Y, Z}. Readout
error flips each measured bit independently with probability p. Trajectories
are independent; each derives its generator from (master seed, trajectory
index), so pooled results do not depend on execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import EmpiricalDist
from .inference import kl_divergence
from .simulator import Statevector, _apply_kernel, _compiled, apply_circuit, marginal_probs

DEFAULT_TRAJECTORIES = 100


@dataclass
class NoiseModel:
    """Per-gate depolarizing probability, per-bit readout flip probability,
    and the number of Monte-Carlo trajectories to pool."""

    depolarizing_p: float = 0.0
    readout_p: float = 0.0
    trajectories: int = DEFAULT_TRAJECTORIES

    def __post_init__(self):
        if not 0.0 <= self.depolarizing_p <= 1.0:
            raise ValueError("depolarizing_p must be in [0, 1]")
        if not 0.0 <= self.readout_p <= 1.0:
            raise ValueError("readout_p must be in [0, 1]")
        if self.trajectories < 1:
            raise ValueError("trajectories must be >= 1")


def trajectory_rng(seed, trajectory: int) -> np.random.Generator:
    """Generator for one trajectory, a pure function of (seed, index)."""
    if isinstance(seed, (int, np.integer)):
        seed = (int(seed),)
    return np.random.default_rng((*tuple(int(s) for s in seed), int(trajectory)))


def _apply_pauli(amps: np.ndarray, n: int, qubit: int, which: int):
    """In-place X (0), Y (1) or Z (2) on one qubit of a dense amplitude array."""
    mask = 1 << (n - 1 - qubit)
    idx = np.arange(len(amps))
    hi = (idx & mask) != 0
    if which == 2:
        amps[hi] *= -1.0
        return
    lo_idx = idx[~hi]
    hi_idx = lo_idx | mask
    lo = amps[lo_idx].copy()
    if which == 0:
        amps[lo_idx] = amps[hi_idx]
        amps[hi_idx] = lo
    else:
        amps[lo_idx] = -1j * amps[hi_idx]
        amps[hi_idx] = 1j * lo


def _noisy_trajectory(circuit, params, input_state: Statevector, p: float,
                      rng: np.random.Generator) -> Statevector:
    n = input_state.n_qubits
    amps = input_state.amps.copy()
    plan = _compiled(circuit, n, None)
    params = np.asarray(params, dtype=float)
    for gate, (kind, slot, i0, i1) in zip(circuit.gates, plan):
        _apply_kernel(amps, kind, i0, i1, None if slot is None else params[slot])
        if p > 0.0:
            for q in gate.touched_qubits():
                if rng.random() < p:
                    _apply_pauli(amps, n, q, int(rng.integers(3)))
    return Statevector(n, amps)


def apply_readout_error(counts: dict[str, int], p: float, rng) -> dict[str, int]:
    """Flip each bit of each counted sample independently with probability p.

    Total count is preserved; p=0 returns the counts unchanged and p=1
    complements every string.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    if p == 0.0 or not counts:
        return dict(counts)
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    width = len(next(iter(counts)))
    weights = 1 << np.arange(width - 1, -1, -1)
    out: dict[str, int] = {}
    for key in sorted(counts):
        c = counts[key]
        base = int(key, 2)
        if p == 1.0:
            flipped = np.full(c, base ^ int((1 << width) - 1))
        else:
            masks = (rng.random((c, width)) < p) @ weights
            flipped = base ^ masks.astype(np.int64)
        codes, reps = np.unique(flipped, return_counts=True)
        for code, rep in zip(codes, reps):
            name = format(int(code), f"0{width}b")
            out[name] = out.get(name, 0) + int(rep)
    return out


def noisy_execute(
    circuit,
    params,
    input_state: Statevector,
    model: NoiseModel,
    shots: int,
    rng_seed,
    measured=None,
) -> EmpiricalDist:
    """Pooled outcome distribution under gate and readout noise.

    Shots are split evenly across trajectories (the remainder goes to the
    first ones); each trajectory resamples the gate-noise path and its
    measurement outcomes from its own derived generator.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    if measured is None:
        measured = range(input_state.n_qubits)
    measured = tuple(sorted(set(int(q) for q in measured)))
    n_traj = min(model.trajectories, shots)
    base, extra = divmod(shots, n_traj)
    pooled: dict[str, int] = {}
    for t in range(n_traj):
        traj_shots = base + (1 if t < extra else 0)
        rng = trajectory_rng(rng_seed, t)
        state = _noisy_trajectory(circuit, params, input_state, model.depolarizing_p, rng)
        vec = marginal_probs(state, measured).to_vector()
        vec = np.clip(vec, 0.0, None)
        counts_arr = rng.multinomial(traj_shots, vec / vec.sum())
        width = len(measured)
        counts = {format(i, f"0{width}b"): int(c) for i, c in enumerate(counts_arr) if c}
        counts = apply_readout_error(counts, model.readout_p, rng)
        for key, c in counts.items():
            pooled[key] = pooled.get(key, 0) + c
    width = len(measured)
    return EmpiricalDist(
        length=width,
        probs={k: pooled[k] / shots for k in sorted(pooled)},
    )


def noise_sweep(
    circuit,
    params,
    input_state: Statevector,
    probabilities,
    kind: str,
    shots: int,
    rng_seed,
    measured=None,
    trajectories: int = DEFAULT_TRAJECTORIES,
    eps: float = 1e-9,
) -> list[tuple[float, float]]:
    """KL(noiseless || noisy) over the measured-qubit marginal, per noise level.

    The noiseless reference is the exact marginal; each sweep point runs a
    fresh pooled Monte-Carlo estimate with a seed derived from the point
    index, so the whole sweep is reproducible from one master seed.
    """
    probabilities = [float(p) for p in probabilities]
    if sorted(probabilities) != probabilities:
        raise ValueError("probabilities must be sorted ascending")
    if kind not in ("depolarizing", "readout"):
        raise ValueError(f"unknown noise kind {kind!r}")
    if measured is None:
        measured = range(input_state.n_qubits)
    measured = tuple(sorted(set(int(q) for q in measured)))
    reference = marginal_probs(apply_circuit(input_state, circuit, params), measured)
    if isinstance(rng_seed, (int, np.integer)):
        rng_seed = (int(rng_seed),)
    results = []
    for i, p in enumerate(probabilities):
        model = NoiseModel(
            depolarizing_p=p if kind == "depolarizing" else 0.0,
            readout_p=p if kind == "readout" else 0.0,
            trajectories=trajectories,
        )
        noisy = noisy_execute(circuit, params, input_state, model, shots,
                              (*rng_seed, i), measured)
        results.append((p, kl_divergence(reference, noisy, eps)))
    return results


def sweep_to_csv(results_by_kind: dict[str, list[tuple[float, float]]]) -> str:
    """RFC-4180 rows `p,kind,kl` for plotting."""
    lines = ["p,kind,kl"]
    for kind in sorted(results_by_kind):
        for p, kl in results_by_kind[kind]:
            lines.append(f"{p},{kind},{kl}")
    return "\n".join(lines) + "\n"
