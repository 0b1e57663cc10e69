"""Losses, gradient estimators and the batch-gradient training loops.

The batch update works on amplitude-encoded distributions: the whole
context distribution is loaded as one superposition, the circuit maps it
forward in a single pass, and one gradient step against the loaded joint
target aggregates every context at once (the linearity of the circuit keeps
each context paired with its own continuation).

Two gradient estimators are provided. SPSA perturbs all parameters
simultaneously with a random sign vector and needs two loss evaluations;
the parameter-shift rule evaluates the loss at +/- pi/2 per parameter and
is exact for losses that are affine in a fixed observable's expectation
(the fidelity loss is). ``shots=0`` evaluates expectations exactly; any
positive shot count samples the swap-test ancilla or the measured
histogram instead, reproducing hardware-style training noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .ansatz import (
    ParamCircuit,
    ShareSpecifySpec,
    build_conditional_ansatz,
    build_layered_pqc,
    build_loader_circuit,
    build_share_specify,
    label_pattern,
    trainable_mask,
)
from .data import EmpiricalDist, SymbolSeries, empirical_dist
from .inference import batch_conditional_kl
from .simulator import (
    Statevector,
    apply_circuit,
    as_rng,
    fidelity,
    init_basis,
    kron,
    sample_bitstrings,
    swap_test_estimate,
)

GRAD_ESTIMATORS = ("spsa", "parameter_shift")
LOSSES = ("fidelity", "mse")


@dataclass
class TrainConfig:
    """Hyperparameters for a training run; defaults follow the reference
    regime (3000 epochs, learning rate 0.1, SPSA delta 0.01, 10,000 shots,
    seed 42)."""

    epochs: int = 3000
    learning_rate: float = 0.1
    spsa_delta: float = 0.01
    shots: int = 10_000
    seed: int = 42
    grad_estimator: str = "spsa"
    loss: str = "fidelity"
    schedule: list[tuple[int, int]] | None = None
    init: str = "random"

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if not 0 < self.spsa_delta <= 1:
            raise ValueError("spsa_delta must be in (0, 1]")
        if self.shots < 0:
            raise ValueError("shots must be >= 0 (0 selects exact expectations)")
        if self.grad_estimator not in GRAD_ESTIMATORS:
            raise ValueError(f"unknown gradient estimator {self.grad_estimator!r}")
        if self.loss not in LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.init not in ("random", "small", "zeros"):
            raise ValueError(f"unknown init {self.init!r}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "spsa_delta": self.spsa_delta,
            "shots": self.shots,
            "seed": self.seed,
            "grad_estimator": self.grad_estimator,
            "loss": self.loss,
            "schedule": self.schedule,
            "init": self.init,
        }


@dataclass
class TrainReport:
    """Per-epoch losses and the trained parameters of one run."""

    loss_curve: list[float]
    final_params: np.ndarray
    kl_per_asset: dict[str, float]
    epochs_run: int
    config: dict = field(default_factory=dict)
    final_fidelity: float | None = None
    schedule: list[tuple[int, int]] | None = None
    kl_per_context: dict[str, dict[str, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "loss_curve": [float(x) for x in self.loss_curve],
            "kl_per_asset": self.kl_per_asset,
            "final_params": [float(x) for x in self.final_params],
            "config": self.config,
            "epochs_run": self.epochs_run,
        }
        if self.final_fidelity is not None:
            out["final_fidelity"] = self.final_fidelity
        if self.schedule is not None:
            out["schedule"] = [[int(k), int(e)] for k, e in self.schedule]
        if self.kl_per_context:
            out["kl_per_context"] = self.kl_per_context
        return out


def init_params(n_params: int, rng, init: str = "random") -> np.ndarray:
    """Initial angles: uniform in [-pi, pi), "small" uniform in [-0.3, 0.3)
    near the identity point, or all zeros."""
    if init == "zeros":
        return np.zeros(n_params)
    rng = as_rng(rng)
    if init == "small":
        return rng.uniform(-0.3, 0.3, size=n_params)
    return rng.uniform(-np.pi, np.pi, size=n_params)


def dist_to_amplitudes(dist: EmpiricalDist, n_qubits: int | None = None) -> Statevector:
    """Amplitude-encode a distribution: sqrt(P(x)) on |x>, padded with |0>
    ancillas on the right when the register is wider than the bitstrings."""
    if n_qubits is None:
        n_qubits = dist.length
    if dist.length > n_qubits:
        raise ValueError("distribution needs more qubits than the register has")
    pad = n_qubits - dist.length
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    for key, p in dist.probs.items():
        amps[int(key, 2) << pad] = np.sqrt(p)
    return Statevector(n_qubits, amps)


def fidelity_loss(out: Statevector, target: Statevector) -> float:
    """(1 - |<target|out>|^2) / 2, in [0, 0.5]; zero iff equal up to phase."""
    return 0.5 * (1.0 - fidelity(out, target))


def mse_loss(measured: EmpiricalDist, target: EmpiricalDist) -> float:
    """Sum of squared probability gaps over the full outcome space."""
    if measured.length != target.length:
        raise ValueError("distributions have different bit lengths")
    diff = measured.to_vector() - target.to_vector()
    return float(np.dot(diff, diff))


def _pad_input(input_state: Statevector, circuit: ParamCircuit) -> Statevector:
    if input_state.n_qubits == circuit.n_qubits:
        return input_state
    if input_state.n_qubits > circuit.n_qubits:
        raise ValueError("input register is wider than the circuit")
    pad = circuit.n_qubits - input_state.n_qubits
    return kron(input_state, init_basis(pad, "0" * pad))


def loss_eval(
    circuit: ParamCircuit,
    params,
    input_state: Statevector,
    target,
    cfg: TrainConfig,
    rng=None,
) -> float:
    """One loss evaluation; exact when cfg.shots == 0, sampled otherwise.

    ``target`` may be a Statevector or an EmpiricalDist; fidelity loss wants
    a state (distributions are amplitude-encoded first), MSE wants a
    distribution over the full measured register.
    """
    rng = as_rng(cfg.seed if rng is None else rng)
    out = apply_circuit(_pad_input(input_state, circuit), circuit, params)
    if cfg.loss == "fidelity":
        if isinstance(target, EmpiricalDist):
            target = dist_to_amplitudes(target, circuit.n_qubits)
        if cfg.shots == 0:
            return fidelity_loss(out, target)
        return 1.0 - swap_test_estimate(out, target, cfg.shots, rng)
    if isinstance(target, Statevector):
        target = EmpiricalDist.from_vector(target.probabilities(), target.n_qubits)
    if target.length != circuit.n_qubits:
        raise ValueError("MSE target must cover the full register")
    if cfg.shots == 0:
        measured = EmpiricalDist.from_vector(out.probabilities(), out.n_qubits)
    else:
        counts = sample_bitstrings(out, range(out.n_qubits), cfg.shots, rng)
        measured = EmpiricalDist(
            length=out.n_qubits,
            probs={k: c / cfg.shots for k, c in counts.items()},
        )
    return mse_loss(measured, target)


def grad_parameter_shift(circuit: ParamCircuit, params, loss_fn, active_mask=None) -> np.ndarray:
    """Exact gradient from 2m shifted evaluations: 0.5 * (L(+pi/2) - L(-pi/2))
    per parameter. Frozen slots get zero without being evaluated."""
    params = np.asarray(params, dtype=float)
    grad = np.zeros(circuit.n_params)
    slots = range(circuit.n_params) if active_mask is None else np.flatnonzero(active_mask)
    for i in slots:
        shifted = params.copy()
        shifted[i] += np.pi / 2
        plus = loss_fn(shifted)
        shifted[i] -= np.pi
        minus = loss_fn(shifted)
        grad[i] = 0.5 * (plus - minus)
    return grad


def grad_spsa(circuit: ParamCircuit, params, loss_fn, delta: float, rng,
              active_mask=None) -> np.ndarray:
    """Two-evaluation simultaneous-perturbation estimate.

    One sign vector with entries in {-1, +1} perturbs every active
    parameter at once; component i of the estimate is
    (L(theta + delta*alpha) - L(theta - delta*alpha)) / (2*delta*alpha_i).
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    params = np.asarray(params, dtype=float)
    rng = as_rng(rng)
    active = np.arange(circuit.n_params) if active_mask is None else np.flatnonzero(active_mask)
    alpha = rng.integers(0, 2, size=len(active)) * 2 - 1
    pert = np.zeros(circuit.n_params)
    pert[active] = delta * alpha
    plus = loss_fn(params + pert)
    minus = loss_fn(params - pert)
    grad = np.zeros(circuit.n_params)
    grad[active] = (plus - minus) / (2.0 * delta * alpha)
    return grad


def qbgu_step(
    circuit: ParamCircuit,
    params,
    input_state: Statevector,
    target,
    cfg: TrainConfig,
    rng=None,
    active_mask=None,
) -> tuple[np.ndarray, float]:
    """One batch gradient step against the loaded joint target.

    Returns (updated parameters, loss before the step). The input state
    carries the context distribution; missing prediction ancillas are
    appended in |0>.
    """
    params = np.asarray(params, dtype=float)
    rng = as_rng(cfg.seed if rng is None else rng)
    input_state = _pad_input(input_state, circuit)

    def closure(p):
        return loss_eval(circuit, p, input_state, target, cfg, rng)

    loss_now = closure(params)
    if cfg.grad_estimator == "spsa":
        grad = grad_spsa(circuit, params, closure, cfg.spsa_delta, rng, active_mask)
    else:
        grad = grad_parameter_shift(circuit, params, closure, active_mask)
    return params - cfg.learning_rate * grad, loss_now


def run_training(
    circuit: ParamCircuit,
    params,
    input_state: Statevector,
    target,
    cfg: TrainConfig,
    rng,
    epochs: int,
    active_mask=None,
) -> tuple[np.ndarray, list[float]]:
    """Run ``epochs`` batch steps; returns final params and the loss curve."""
    params = np.asarray(params, dtype=float)
    curve: list[float] = []
    for _ in range(epochs):
        params, loss = qbgu_step(circuit, params, input_state, target, cfg, rng, active_mask)
        curve.append(loss)
    return params, curve


def train_distribution_loader(target: EmpiricalDist, layers: int, cfg: TrainConfig) -> TrainReport:
    """Train the hardware-efficient loader from |0...0> toward sqrt(P)."""
    circuit = build_loader_circuit(target.length, layers)
    rng = as_rng(cfg.seed)
    params = init_params(circuit.n_params, rng, cfg.init)
    start = init_basis(target.length, "0" * target.length)
    target_state = dist_to_amplitudes(target)
    params, curve = run_training(circuit, params, start, target_state, cfg, rng, cfg.epochs)
    final = fidelity(apply_circuit(start, circuit, params), target_state)
    return TrainReport(
        loss_curve=curve,
        final_params=params,
        kl_per_asset={},
        epochs_run=len(curve),
        config=cfg.to_dict(),
        final_fidelity=float(final),
    )


def train_qstl(
    symbols: SymbolSeries,
    context_len: int = 3,
    horizon: int = 1,
    layers: int = 4,
    cfg: TrainConfig | None = None,
    asset_name: str = "asset",
    entangler: str = "ring",
    ansatz: str = "layered",
) -> tuple[TrainReport, ParamCircuit]:
    """Single-asset training: load the context distribution, map it through
    the circuit, and fit the loaded joint target.

    ``ansatz="layered"`` is the generic layered circuit; "conditional"
    selects the context-controlled rotation multiplexer, which preserves
    context structurally and therefore pins every per-context conditional
    once the batch loss converges.
    """
    cfg = cfg or TrainConfig()
    ctx_dist = empirical_dist(symbols, context_len)
    joint_dist = empirical_dist(symbols, context_len + horizon)
    bits = symbols.quantizer.symbol_bits
    if ansatz == "layered":
        circuit = build_qstl_circuit(context_len, horizon, layers, bits,
                                     entangler=entangler)
    elif ansatz == "conditional":
        circuit = build_conditional_ansatz(context_len, horizon, bits)
    else:
        raise ValueError(f"unknown ansatz {ansatz!r}")
    report = train_conditional(circuit, ctx_dist, joint_dist, cfg, asset_name=asset_name)
    return report, circuit


def build_qstl_circuit(context_len: int, horizon: int, layers: int,
                       symbol_bits: int = 1, sublayers: int = 2,
                       entangler: str = "ring") -> ParamCircuit:
    from .simulator import QubitLayout

    n = (context_len + horizon) * symbol_bits
    circuit = build_layered_pqc(n, layers, sublayers, entangler,
                                n_targets=horizon * symbol_bits)
    circuit.layout = QubitLayout.for_model(context_len, horizon, symbol_bits)
    return circuit


def train_conditional(
    circuit: ParamCircuit,
    ctx_dist: EmpiricalDist,
    joint_dist: EmpiricalDist,
    cfg: TrainConfig,
    asset_name: str = "asset",
) -> TrainReport:
    """Fit one circuit to one (context, joint) distribution pair and report
    the conditional KL against the empirical conditionals."""
    layout = circuit.layout
    if layout is None:
        raise ValueError("circuit carries no layout")
    rng = as_rng(cfg.seed)
    params = init_params(circuit.n_params, rng, cfg.init)
    input_state = dist_to_amplitudes(ctx_dist, circuit.n_qubits)
    target_state = dist_to_amplitudes(joint_dist, circuit.n_qubits)
    params, curve = run_training(circuit, params, input_state, target_state, cfg, rng, cfg.epochs)
    kl, per_context = batch_conditional_kl(circuit, params, ctx_dist, joint_dist)
    return TrainReport(
        loss_curve=curve,
        final_params=params,
        kl_per_asset={asset_name: float(kl)},
        epochs_run=len(curve),
        config=cfg.to_dict(),
        kl_per_context={asset_name: per_context},
    )


def round_robin_schedule(n_assets: int, block_epochs: int, cycles: int = 1) -> list[tuple[int, int]]:
    """Alternating per-asset epoch blocks: asset 0 first, in label order."""
    if block_epochs < 1 or cycles < 1:
        raise ValueError("block_epochs and cycles must be >= 1")
    return [(k, block_epochs) for _ in range(cycles) for k in range(n_assets)]


def train_qmtl(
    assets: list[SymbolSeries] | list[tuple[EmpiricalDist, EmpiricalDist]],
    spec: ShareSpecifySpec,
    cfg: TrainConfig | None = None,
    names: list[str] | None = None,
) -> tuple[TrainReport, ParamCircuit]:
    """Multi-asset training on the share-and-specify circuit.

    ``assets`` holds one SymbolSeries (or a prebuilt (context, joint)
    distribution pair) per label, in label order. Each schedule block fixes
    the label to its asset and updates only the shared slots plus that
    asset's specify slots; everything else stays frozen.
    """
    cfg = cfg or TrainConfig()
    if len(assets) != spec.n_assets:
        raise ValueError(f"spec expects {spec.n_assets} assets, got {len(assets)}")
    names = names or [f"asset{k}" for k in range(spec.n_assets)]
    if len(names) != spec.n_assets:
        raise ValueError("one name per asset required")

    pairs: list[tuple[EmpiricalDist, EmpiricalDist]] = []
    for entry in assets:
        if isinstance(entry, SymbolSeries):
            pairs.append((
                empirical_dist(entry, spec.context_len),
                empirical_dist(entry, spec.context_len + spec.horizon),
            ))
        else:
            pairs.append(entry)

    circuit = build_share_specify(spec)
    layout = circuit.layout
    rng = as_rng(cfg.seed)
    params = init_params(circuit.n_params, rng, cfg.init)
    schedule = cfg.schedule or round_robin_schedule(spec.n_assets, cfg.epochs)

    inputs = {}
    targets = {}
    for k, (ctx_dist, joint_dist) in enumerate(pairs):
        bits = "".join(str(b) for b in label_pattern(spec.n_assets, k)) + "0"
        label_state = init_basis(len(layout.label), bits)
        inputs[k] = kron(dist_to_amplitudes(ctx_dist, len(layout.data)), label_state)
        targets[k] = kron(dist_to_amplitudes(joint_dist, len(layout.data)), label_state)

    curve: list[float] = []
    for asset, block_epochs in schedule:
        if not 0 <= asset < spec.n_assets:
            raise ValueError(f"schedule references unknown asset {asset}")
        mask = trainable_mask(circuit, asset)
        params, block_curve = run_training(
            circuit, params, inputs[asset], targets[asset], cfg, rng, block_epochs, mask
        )
        curve.extend(block_curve)

    kl_per_asset: dict[str, float] = {}
    kl_per_context: dict[str, dict[str, float]] = {}
    for k, (ctx_dist, joint_dist) in enumerate(pairs):
        kl, per_context = batch_conditional_kl(circuit, params, ctx_dist, joint_dist, label=k)
        kl_per_asset[names[k]] = float(kl)
        kl_per_context[names[k]] = per_context
    report = TrainReport(
        loss_curve=curve,
        final_params=params,
        kl_per_asset=kl_per_asset,
        epochs_run=len(curve),
        config=cfg.to_dict(),
        schedule=[(int(k), int(e)) for k, e in schedule],
        kl_per_context=kl_per_context,
    )
    return report, circuit


def exact_config(cfg: TrainConfig) -> TrainConfig:
    """Copy of a config with exact-expectation evaluation (shots=0)."""
    return replace(cfg, shots=0)
