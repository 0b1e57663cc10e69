"""Prediction and evaluation on trained circuits.

Conditional predictions renormalize on the event that the context qubits
read back the queried context, because trained circuits only approximately
preserve context. Rollouts come in two modes: ``exact`` keeps every step in
superposition on a growing register, ``sampled`` measures each step and
feeds the outcome back classically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import EmpiricalDist, QuantizerSpec, conditional_slice, context_marginal
from .errors import DegeneratePredictionError, ResourceError
from .simulator import (
    GateOp,
    Statevector,
    apply_circuit,
    apply_gate,
    as_rng,
    init_basis,
    kron,
    marginal_probs,
)
from .ansatz import ParamCircuit, label_pattern, prepare_label

DEFAULT_KL_EPS = 1e-9
DEFAULT_QUBIT_BUDGET = 20
PRESERVATION_WARN = 0.8


@dataclass
class Prediction:
    """Next-symbol distribution for one context."""

    context: str
    next_dist: EmpiricalDist
    expected_movement: float | None
    preservation_mass: float

    def to_dict(self) -> dict:
        return {
            "context": self.context,
            "next_dist": {k: self.next_dist.probs[k] for k in sorted(self.next_dist.probs)},
            "expected_movement": self.expected_movement,
            "preservation_score": self.preservation_mass,
        }


def _layout_of(circuit: ParamCircuit):
    if circuit.layout is None:
        raise ValueError("circuit carries no qubit layout; build it with the ansatz builders")
    return circuit.layout


def _label_bits(circuit: ParamCircuit, label: int | None) -> str:
    layout = _layout_of(circuit)
    width = len(layout.label)
    if width == 0:
        if label is not None:
            raise ValueError("circuit has no label register")
        return ""
    if label is None:
        raise ValueError("circuit has a label register; a label is required")
    n_assets = 1 << len(layout.label_value_bits)
    return "".join(str(b) for b in label_pattern(n_assets, label)) + "0"


def model_input_state(circuit: ParamCircuit, context: str, label: int | None = None) -> Statevector:
    """Basis input |context>|0...0> (prediction ancillas, label bits, work)."""
    layout = _layout_of(circuit)
    if len(context) != len(layout.context) or set(context) - {"0", "1"}:
        raise ValueError(f"context {context!r} does not fit the {len(layout.context)}-bit window")
    bits = context + "0" * len(layout.prediction) + _label_bits(circuit, label)
    return init_basis(circuit.n_qubits, bits)


def predict_conditional(
    circuit: ParamCircuit,
    params,
    context: str,
    label: int | None = None,
    quantizer: QuantizerSpec | None = None,
) -> Prediction:
    """Run the circuit on a basis context and read the conditional next-symbol
    distribution, renormalized on the context qubits reading back ``context``.
    """
    layout = _layout_of(circuit)
    state = model_input_state(circuit, context, label)
    out = apply_circuit(state, circuit, params)
    joint = marginal_probs(out, list(layout.context) + list(layout.prediction))
    tail_bits = len(layout.prediction)
    masses: dict[str, float] = {}
    for key, p in joint.probs.items():
        if key.startswith(context):
            tail = key[len(context):]
            masses[tail] = masses.get(tail, 0.0) + p
    mass = sum(masses.values())
    if mass < 1e-12:
        raise DegeneratePredictionError(
            f"no amplitude left on context {context!r} (preservation mass {mass:.3e})",
            preservation_mass=mass,
        )
    next_dist = EmpiricalDist(
        length=tail_bits,
        probs={k: v / mass for k, v in sorted(masses.items())},
    )
    movement = None
    if quantizer is not None:
        movement = expected_movement(next_dist, quantizer)
    return Prediction(context=context, next_dist=next_dist,
                      expected_movement=movement, preservation_mass=mass)


def level_values(quantizer: QuantizerSpec) -> np.ndarray:
    """Representative return value of each quantization level.

    uniform: x_min + i * dx. quantile: bin midpoints. sign: the per-class
    mean returns recorded when the quantizer was fitted.
    """
    if quantizer.mode == "sign":
        if quantizer.class_means is None:
            raise ValueError("sign quantizer has no recorded class means")
        return np.asarray(quantizer.class_means, dtype=float)
    if quantizer.mode == "uniform":
        return quantizer.x_min + quantizer.delta_x * np.arange(quantizer.d)
    edges = np.concatenate([[quantizer.x_min], quantizer.boundaries, [quantizer.x_max]])
    return 0.5 * (edges[:-1] + edges[1:])


def expected_movement(dist: EmpiricalDist, quantizer: QuantizerSpec) -> float:
    """Probability-weighted representative value of a one-symbol distribution."""
    if dist.length != quantizer.symbol_bits:
        raise ValueError("distribution is not over a single symbol slot")
    values = level_values(quantizer)
    return float(sum(p * values[int(key, 2)] for key, p in dist.probs.items()))


def kl_divergence(p: EmpiricalDist, q: EmpiricalDist, eps: float = DEFAULT_KL_EPS) -> float:
    """KL(p || q) with both sides eps-smoothed over the full bitstring space."""
    if p.length != q.length:
        raise ValueError("distributions have different bit lengths")
    if eps <= 0:
        raise ValueError("eps must be positive")
    dim = 1 << p.length
    pv = (p.to_vector() + eps) / (1.0 + eps * dim)
    qv = (q.to_vector() + eps) / (1.0 + eps * dim)
    return float(np.sum(pv * np.log(pv / qv)))


def context_preservation_score(
    circuit: ParamCircuit,
    params,
    context_dist: EmpiricalDist,
    label: int | None = None,
) -> float:
    """Probability-weighted chance that each context reads back unchanged."""
    layout = _layout_of(circuit)
    score = 0.0
    for context, weight in context_dist.probs.items():
        if weight == 0.0:
            continue
        state = model_input_state(circuit, context, label)
        out = apply_circuit(state, circuit, params)
        ctx_marginal = marginal_probs(out, layout.context)
        score += weight * ctx_marginal.prob(context)
    return float(score)


def conditional_kl(
    circuit: ParamCircuit,
    params,
    joint: EmpiricalDist,
    label: int | None = None,
    eps: float = DEFAULT_KL_EPS,
) -> tuple[float, dict[str, float]]:
    """Context-weighted KL(empirical conditional || predicted conditional),
    with predictions read per basis context via predict_conditional.

    Returns the weighted total plus per-context values, weighting each
    context by its mass under the joint distribution. Meaningful when the
    circuit (approximately) preserves context; a scrambling circuit can
    reach perfect batch fidelity while these per-basis readouts stay poor.
    """
    layout = _layout_of(circuit)
    ctx_bits = len(layout.context)
    ctx_marg = context_marginal(joint, ctx_bits)
    per_context: dict[str, float] = {}
    total = 0.0
    for context in sorted(ctx_marg.probs):
        weight = ctx_marg.probs[context]
        empirical = conditional_slice(joint, context)
        predicted = predict_conditional(circuit, params, context, label).next_dist
        kl = kl_divergence(empirical, predicted, eps)
        per_context[context] = kl
        total += weight * kl
    return float(total), per_context


def predicted_joint(
    circuit: ParamCircuit,
    params,
    ctx_dist: EmpiricalDist,
    label: int | None = None,
) -> EmpiricalDist:
    """Joint outcome distribution of the batch forward pass.

    Loads the whole context distribution as one superposition, applies the
    circuit, and measures the data qubits exactly; this is the distribution
    the trained state actually samples from.
    """
    from .training import dist_to_amplitudes  # local import, no cycle at load time

    layout = _layout_of(circuit)
    data_bits = len(layout.data)
    data_in = dist_to_amplitudes(ctx_dist, data_bits)
    if len(layout.label):
        label_state = init_basis(len(layout.label), _label_bits(circuit, label))
        state = kron(data_in, label_state)
    else:
        state = data_in
    out = apply_circuit(state, circuit, params)
    return marginal_probs(out, layout.data)


def batch_conditional_kl(
    circuit: ParamCircuit,
    params,
    ctx_dist: EmpiricalDist,
    joint: EmpiricalDist,
    label: int | None = None,
    eps: float = DEFAULT_KL_EPS,
) -> tuple[float, dict[str, float]]:
    """Context-weighted KL(empirical conditional || batch-predicted conditional).

    The model's conditionals are sliced out of the batch-state joint
    (predicted_joint), matching how a full measurement of the trained state
    would be tabulated. Weights come from the empirical joint.
    """
    layout = _layout_of(circuit)
    ctx_bits = len(layout.context)
    model_joint = predicted_joint(circuit, params, ctx_dist, label)
    ctx_marg = context_marginal(joint, ctx_bits)
    per_context: dict[str, float] = {}
    total = 0.0
    for context in sorted(ctx_marg.probs):
        weight = ctx_marg.probs[context]
        empirical = conditional_slice(joint, context)
        predicted = conditional_slice(model_joint, context)
        kl = kl_divergence(empirical, predicted, eps)
        per_context[context] = kl
        total += weight * kl
    return float(total), per_context


def _rollout_plan(circuit: ParamCircuit, steps: int):
    layout = _layout_of(circuit)
    ctx_bits = len(layout.context)
    step_bits = len(layout.prediction)
    label_width = len(layout.label)
    return layout, ctx_bits, step_bits, label_width


def sequential_rollout(
    circuit: ParamCircuit,
    params,
    context: str,
    steps: int,
    mode: str = "exact",
    rng=None,
    label: int | None = None,
    episodes: int = 10_000,
    max_qubits: int = DEFAULT_QUBIT_BUDGET,
) -> EmpiricalDist:
    """Distribution over the next ``steps`` symbols from repeated application.

    Exact mode appends fresh prediction qubits and slides the circuit's
    context window along the growing register, returning the full joint over
    all paths. Sampled mode draws one continuation per step, feeds it back
    as the new context, and pools ``episodes`` independent runs.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    layout, ctx_bits, step_bits, label_width = _rollout_plan(circuit, steps)
    if len(context) != ctx_bits or set(context) - {"0", "1"}:
        raise ValueError(f"context {context!r} does not fit the {ctx_bits}-bit window")
    if mode == "exact":
        n = ctx_bits + steps * step_bits + label_width
        if n > max_qubits:
            raise ResourceError(
                f"exact rollout needs {n} qubits, budget is {max_qubits}; use sampled mode"
            )
        bits = context + "0" * (steps * step_bits) + _label_bits(circuit, label)
        state = init_basis(n, bits)
        label_base = ctx_bits + steps * step_bits
        data_width = ctx_bits + step_bits
        for r in range(steps):
            offset = r * step_bits
            qubit_map = [offset + i for i in range(data_width)]
            qubit_map += [label_base + j for j in range(label_width)]
            state = apply_circuit(state, circuit, params, qubit_map)
        return marginal_probs(state, range(ctx_bits, ctx_bits + steps * step_bits))
    if mode == "sampled":
        return _sampled_rollout(circuit, params, context, steps, as_rng(rng), label, episodes)
    raise ValueError(f"unknown rollout mode {mode!r}")


def _sampled_rollout(circuit, params, context, steps, rng, label, episodes) -> EmpiricalDist:
    _, ctx_bits, step_bits, _ = _rollout_plan(circuit, steps)
    n_next = 1 << step_bits
    ctx_mask = (1 << ctx_bits) - 1
    memo: dict[int, np.ndarray] = {}

    def next_vector(code: int) -> np.ndarray:
        vec = memo.get(code)
        if vec is None:
            ctx = format(code, f"0{ctx_bits}b")
            vec = predict_conditional(circuit, params, ctx, label).next_dist.to_vector()
            vec = np.clip(vec, 0.0, None)
            vec /= vec.sum()
            memo[code] = vec
        return vec

    codes = np.full(episodes, int(context, 2), dtype=np.int64)
    paths = np.zeros(episodes, dtype=np.int64)
    for _ in range(steps):
        drawn = np.empty(episodes, dtype=np.int64)
        for code in np.unique(codes):
            mask = codes == code
            drawn[mask] = rng.choice(n_next, size=int(mask.sum()), p=next_vector(int(code)))
        paths = (paths << step_bits) | drawn
        codes = ((codes << step_bits) | drawn) & ctx_mask
    length = steps * step_bits
    counts = np.bincount(paths, minlength=1 << length)
    return EmpiricalDist.from_vector(counts / episodes, length)


@dataclass
class PortfolioRollout:
    """Per-asset path distributions plus the observed label marginal."""

    label_marginal: np.ndarray
    paths: dict[int, EmpiricalDist]


def portfolio_rollout(
    circuit: ParamCircuit,
    params,
    contexts: list[str],
    weights,
    steps: int,
    mode: str = "exact",
    rng=None,
    episodes: int = 10_000,
    max_qubits: int = DEFAULT_QUBIT_BUDGET,
) -> PortfolioRollout:
    """Rollout over a weighted superposition of asset labels.

    Contexts are loaded under label control so each asset starts from its
    own history; specify blocks never mix labels, so in exact mode the label
    marginal reproduces the normalized weights exactly.
    """
    layout, ctx_bits, step_bits, label_width = _rollout_plan(circuit, steps)
    if label_width == 0:
        raise ValueError("portfolio rollout needs a labelled circuit")
    weights = np.asarray(weights, dtype=float)
    n_assets = 1 << len(layout.label_value_bits)
    if len(contexts) != n_assets or len(weights) != n_assets:
        raise ValueError(f"need {n_assets} contexts and weights, got "
                         f"{len(contexts)} and {len(weights)}")
    for ctx in contexts:
        if len(ctx) != ctx_bits or set(ctx) - {"0", "1"}:
            raise ValueError(f"context {ctx!r} does not fit the {ctx_bits}-bit window")
    if mode == "sampled":
        rng = as_rng(rng)
        norm = weights / weights.sum()
        picks = rng.choice(n_assets, size=episodes, p=norm)
        paths = {}
        marginal = np.zeros(n_assets)
        for k in range(n_assets):
            count = int((picks == k).sum())
            marginal[k] = count / episodes
            if count:
                paths[k] = _sampled_rollout(circuit, params, contexts[k], steps,
                                            rng, k, count)
        return PortfolioRollout(label_marginal=marginal, paths=paths)
    if mode != "exact":
        raise ValueError(f"unknown rollout mode {mode!r}")

    pred_bits = steps * step_bits
    n = ctx_bits + pred_bits + label_width
    if n > max_qubits:
        raise ResourceError(
            f"exact portfolio rollout needs {n} qubits, budget is {max_qubits}; use sampled mode"
        )
    label_base = ctx_bits + pred_bits
    value_qubits = list(range(label_base, label_base + label_width - 1))
    data_zero = init_basis(ctx_bits + pred_bits, "0" * (ctx_bits + pred_bits))
    state = kron(kron(data_zero, prepare_label(weights)), init_basis(1, "0"))
    for k, ctx in enumerate(contexts):
        pattern = label_pattern(n_assets, k)
        controls = tuple(zip(value_qubits, pattern))
        for i, bit in enumerate(ctx):
            if bit == "1":
                state = apply_gate(state, GateOp("X", target=i, controls=controls))
    data_width = ctx_bits + step_bits
    for r in range(steps):
        offset = r * step_bits
        qubit_map = [offset + i for i in range(data_width)]
        qubit_map += [label_base + j for j in range(label_width)]
        state = apply_circuit(state, circuit, params, qubit_map)
    read = marginal_probs(state, list(range(ctx_bits, ctx_bits + pred_bits)) + value_qubits)
    marginal = np.zeros(n_assets)
    masses: dict[int, dict[str, float]] = {k: {} for k in range(n_assets)}
    for key, p in read.probs.items():
        path, lbl = key[:pred_bits], key[pred_bits:]
        k = int(lbl, 2)
        marginal[k] += p
        masses[k][path] = masses[k].get(path, 0.0) + p
    paths = {}
    for k in range(n_assets):
        if marginal[k] > 0:
            paths[k] = EmpiricalDist(
                length=pred_bits,
                probs={key: v / marginal[k] for key, v in sorted(masses[k].items())},
            )
    return PortfolioRollout(label_marginal=marginal, paths=paths)
