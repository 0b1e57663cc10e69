"""Command-line entry point: data -> training -> inference -> noise studies.

Every run resolves its configuration from defaults, then an optional flat
key=value config file, then explicit command-line flags, and writes the
fully resolved config next to its outputs so any run can be reproduced from
its own output directory. All randomness is seeded; outputs are
byte-identical across repeated runs of the same resolved config.

Exit codes: 0 ok, 2 data error, 3 config error, 4 resource error,
5 degenerate prediction.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import ansatz, data, inference, noise, training
from .errors import DataFormatError, DegeneratePredictionError, ResourceError
from .simulator import QubitLayout, init_basis

EXIT_OK = 0
EXIT_DATA = 2
EXIT_CONFIG = 3
EXIT_RESOURCE = 4
EXIT_DEGENERATE = 5


class ConfigError(ValueError):
    pass


PIPELINE_DEFAULTS = {
    "context_len": 3,
    "horizon": 1,
    "d": 2,
    "quantizer": "sign",
    "window": 5,
    "stride": 1,
    "preprocess_order": "diff_first",
    "split": 0.8,
    "layers": 4,
    "sublayers": 2,
    "entangler": "ring",
    "control_style": "direct",
    "epochs": 3000,
    "epochs_per_block": 250,
    "cycles": 1,
    "learning_rate": 0.1,
    "spsa_delta": 0.01,
    "shots": 10000,
    "seed": 42,
    "grad_estimator": "spsa",
    "loss": "fidelity",
    "init": "random",
}

_INT_KEYS = {"context_len", "horizon", "d", "window", "stride", "layers", "sublayers",
             "epochs", "epochs_per_block", "cycles", "shots", "seed", "steps",
             "episodes", "budget", "trajectories", "asset"}
_FLOAT_KEYS = {"split", "learning_rate", "spsa_delta"}


def _coerce(key: str, value):
    if value is None or not isinstance(value, str):
        return value
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    return value


def read_config_file(path: str | Path) -> dict:
    """Flat key=value lines; '#' starts a comment."""
    out = {}
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    for line_num, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_num}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def resolve_config(args: argparse.Namespace, extra_defaults: dict | None = None) -> dict:
    cfg = dict(PIPELINE_DEFAULTS)
    if extra_defaults:
        cfg.update(extra_defaults)
    if getattr(args, "config", None):
        for key, value in read_config_file(args.config).items():
            if key not in cfg:
                raise ConfigError(f"unknown config key {key!r}")
            cfg[key] = _coerce(key, value)
    for key in cfg:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = _coerce(key, flag)
    return cfg


def write_resolved_config(cfg: dict, out_dir: Path):
    lines = [f"{k}={cfg[k]}" for k in sorted(cfg)]
    (out_dir / "config.txt").write_text("\n".join(lines) + "\n")


def dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_loss_curve(curve, path: Path):
    lines = ["epoch,loss"] + [f"{i},{float(v)}" for i, v in enumerate(curve)]
    path.write_text("\n".join(lines) + "\n")


def _train_config(cfg: dict, epochs: int | None = None,
                  schedule=None) -> training.TrainConfig:
    return training.TrainConfig(
        epochs=cfg["epochs"] if epochs is None else epochs,
        learning_rate=cfg["learning_rate"],
        spsa_delta=cfg["spsa_delta"],
        shots=cfg["shots"],
        seed=cfg["seed"],
        grad_estimator=cfg["grad_estimator"],
        loss=cfg["loss"],
        schedule=schedule,
        init=cfg["init"],
    )


def prepare_asset(path: str, cfg: dict) -> tuple[data.SymbolSeries, data.SymbolSeries, data.QuantizerSpec, str]:
    """Shared pipeline: ingest, difference+smooth, fit quantizer on the
    training fraction, quantize, split chronologically."""
    series = data.ingest_csv(path)
    returns = data.diff_and_smooth(series, cfg["window"], cfg["stride"], cfg["preprocess_order"])
    if not 0.0 < cfg["split"] < 1.0:
        raise ConfigError("split must be in (0, 1)")
    cut = int(cfg["split"] * len(returns))
    if cut < 1:
        raise ConfigError("training split is empty")
    quantizer = data.fit_quantizer(returns[:cut], cfg["d"], cfg["quantizer"])
    symbols = data.quantize(returns, quantizer)
    train, test = data.split_train_test(symbols, cfg["split"])
    return train, test, quantizer, series.asset_id


def _validate_shape(cfg: dict):
    if cfg["context_len"] < 1:
        raise ConfigError("context_len must be >= 1")
    if cfg["horizon"] < 1:
        raise ConfigError("horizon must be >= 1")
    if cfg["d"] < 2 or cfg["d"] & (cfg["d"] - 1):
        raise ConfigError("d must be a power of two >= 2")


def circuit_checkpoint(kind: str, circuit: ansatz.ParamCircuit, params,
                       cfg: dict, quantizers, names) -> dict:
    gates = ansatz.circuit_to_dicts(circuit)
    digest = hashlib.sha256(json.dumps(gates, sort_keys=True).encode()).hexdigest()
    return {
        "kind": kind,
        "n_qubits": circuit.n_qubits,
        "context_len": cfg["context_len"],
        "horizon": cfg["horizon"],
        "d": cfg["d"],
        "n_assets": len(names) if kind == "mtl" else None,
        "names": names,
        "gates": gates,
        "circuit_hash": digest,
        "params": [float(p) for p in params],
        "quantizers": quantizers,
        "config": {k: cfg[k] for k in sorted(cfg)},
    }


def load_checkpoint(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        raise DataFormatError(f"model file not found: {p}")
    try:
        model = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{p}: not valid JSON: {e}") from None
    for key in ("kind", "gates", "params", "n_qubits"):
        if key not in model:
            raise DataFormatError(f"{p}: missing checkpoint key {key!r}")
    return model


def circuit_from_checkpoint(model: dict) -> tuple[ansatz.ParamCircuit, np.ndarray]:
    symbol_bits = (int(model["d"]) - 1).bit_length()
    if model["kind"] == "mtl":
        layout = QubitLayout.for_model(model["context_len"], model["horizon"],
                                       symbol_bits, model["n_assets"])
    elif model["kind"] == "loader":
        layout = None
    else:
        layout = QubitLayout.for_model(model["context_len"], model["horizon"], symbol_bits)
    circuit = ansatz.circuit_from_dicts(model["n_qubits"], model["gates"], layout)
    return circuit, np.asarray(model["params"], dtype=float)


def cmd_load(args) -> int:
    cfg = resolve_config(args)
    _validate_shape(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    train, _, quantizer, asset_id = prepare_asset(args.prices, cfg)
    ctx_dist = data.empirical_dist(train, cfg["context_len"])
    report = training.train_distribution_loader(ctx_dist, cfg["layers"], _train_config(cfg))

    write_resolved_config(cfg, out_dir)
    dump_json({
        "distribution": {k: ctx_dist.probs[k] for k in sorted(ctx_dist.probs)},
        "metadata": {
            "context_len": cfg["context_len"],
            "d": cfg["d"],
            "asset_id": asset_id,
            "quantizer": quantizer.to_dict(),
        },
    }, out_dir / "distribution.json")
    write_loss_curve(report.loss_curve, out_dir / "loss_curve.csv")
    dump_json({"final_fidelity": report.final_fidelity,
               "epochs_run": report.epochs_run}, out_dir / "summary.json")
    loader_circuit = ansatz.build_loader_circuit(ctx_dist.length, cfg["layers"])
    dump_json(circuit_checkpoint("loader", loader_circuit, report.final_params, cfg,
                                 [quantizer.to_dict()], [asset_id]),
              out_dir / "model.json")
    print(f"loaded {asset_id}: final fidelity {report.final_fidelity:.6f}")
    return EXIT_OK


def cmd_train(args) -> int:
    # the multi-asset circuit uses a single share/specify repetition by default
    cfg = resolve_config(args, {"layers": 1} if args.mode == "mtl" else None)
    _validate_shape(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    prepared = [prepare_asset(p, cfg) for p in args.prices]
    names = [asset_id for *_rest, asset_id in prepared]

    if args.mode == "stl":
        if len(prepared) != 1:
            raise ConfigError("stl mode takes exactly one price file")
        train, _, quantizer, asset_id = prepared[0]
        report, circuit = training.train_qstl(
            train, cfg["context_len"], cfg["horizon"], cfg["layers"],
            _train_config(cfg), asset_name=asset_id, entangler=cfg["entangler"],
        )
        quantizers = [quantizer.to_dict()]
        kind = "stl"
    else:
        n_assets = len(prepared)
        if n_assets < 2 or n_assets & (n_assets - 1):
            raise ConfigError("mtl mode needs a power-of-two number of price files")
        spec = ansatz.ShareSpecifySpec(
            context_len=cfg["context_len"], horizon=cfg["horizon"], n_assets=n_assets,
            layers=cfg["layers"], sublayers=cfg["sublayers"], entangler=cfg["entangler"],
            symbol_bits=(cfg["d"] - 1).bit_length(), control_style=cfg["control_style"],
        )
        schedule = training.round_robin_schedule(n_assets, cfg["epochs_per_block"], cfg["cycles"])
        report, circuit = training.train_qmtl(
            [train for train, *_ in prepared], spec,
            _train_config(cfg, epochs=0, schedule=schedule), names=names,
        )
        quantizers = [q.to_dict() for _tr, _te, q, _n in prepared]
        kind = "mtl"

    write_resolved_config(cfg, out_dir)
    dump_json(report.to_dict(), out_dir / "report.json")
    write_loss_curve(report.loss_curve, out_dir / "loss_curve.csv")
    dump_json(circuit_checkpoint(kind, circuit, report.final_params, cfg, quantizers, names),
              out_dir / "model.json")
    for name, kl in report.kl_per_asset.items():
        print(f"{name}: KL {kl:.6f}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = load_checkpoint(args.model)
    if model["kind"] == "loader":
        raise ConfigError("loader models do not support predict")
    circuit, params = circuit_from_checkpoint(model)
    label = args.asset if model["kind"] == "mtl" else None
    if model["kind"] == "mtl" and label is None:
        raise ConfigError("mtl models require --asset")
    quantizer = data.QuantizerSpec.from_dict(model["quantizers"][0 if label is None else label])
    pred = inference.predict_conditional(circuit, params, args.context, label, quantizer)
    if pred.preservation_mass < inference.PRESERVATION_WARN:
        print(f"warning: context preservation {pred.preservation_mass:.3f} below "
              f"{inference.PRESERVATION_WARN}; conditional is heavily renormalized",
              file=sys.stderr)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_json(pred.to_dict(), out_dir / "prediction.json")
    print(json.dumps(pred.to_dict(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_rollout(args) -> int:
    model = load_checkpoint(args.model)
    if model["kind"] == "loader":
        raise ConfigError("loader models do not support rollout")
    circuit, params = circuit_from_checkpoint(model)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.weights is not None:
        # portfolio mode: one context per asset, label register in superposition
        if model["kind"] != "mtl":
            raise ConfigError("portfolio rollout needs an mtl model")
        weights = [float(w) for w in args.weights.split(",")]
        contexts = args.context.split(",")
        result = inference.portfolio_rollout(
            circuit, params, contexts, weights, args.steps, mode=args.mode,
            rng=args.seed, episodes=args.episodes, max_qubits=args.budget,
        )
        payload = {
            "contexts": contexts,
            "steps": args.steps,
            "mode": args.mode,
            "label_marginal": [float(w) for w in result.label_marginal],
            "paths": {
                str(k): {key: d.probs[key] for key in sorted(d.probs)}
                for k, d in result.paths.items()
            },
        }
        dump_json(payload, out_dir / "rollout.json")
        print(f"portfolio rollout over {args.steps} step(s): "
              f"{len(result.paths)} asset path set(s)")
        return EXIT_OK

    label = args.asset if model["kind"] == "mtl" else None
    if model["kind"] == "mtl" and label is None:
        raise ConfigError("mtl models require --asset or --weights")
    dist = inference.sequential_rollout(
        circuit, params, args.context, args.steps, mode=args.mode,
        rng=args.seed, label=label, episodes=args.episodes, max_qubits=args.budget,
    )
    payload = {
        "context": args.context,
        "steps": args.steps,
        "mode": args.mode,
        "paths": {k: dist.probs[k] for k in sorted(dist.probs)},
    }
    dump_json(payload, out_dir / "rollout.json")
    print(f"rollout over {args.steps} step(s): {len(dist.probs)} path(s)")
    return EXIT_OK


def cmd_noise_sweep(args) -> int:
    model = load_checkpoint(args.model)
    circuit, params = circuit_from_checkpoint(model)
    grid = [float(x) for x in args.grid.split(",") if x.strip() != ""]
    if model["kind"] == "loader":
        input_state = init_basis(circuit.n_qubits, "0" * circuit.n_qubits)
        measured = range(circuit.n_qubits)
    else:
        layout = circuit.layout
        context = args.context or "0" * len(layout.context)
        label = args.asset if model["kind"] == "mtl" else None
        if model["kind"] == "mtl" and label is None:
            raise ConfigError("mtl models require --asset")
        input_state = inference.model_input_state(circuit, context, label)
        measured = layout.prediction
    kinds = ["depolarizing", "readout"] if args.kind == "both" else [args.kind]
    results = {
        kind: noise.noise_sweep(circuit, params, input_state, grid, kind,
                                args.shots, args.seed, measured,
                                trajectories=args.trajectories)
        for kind in kinds
    }
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sweep.csv").write_text(noise.sweep_to_csv(results))
    for kind, rows in results.items():
        print(f"{kind}: KL {rows[0][1]:.5f} at p={rows[0][0]} -> {rows[-1][1]:.5f} at p={rows[-1][0]}")
    return EXIT_OK


def cmd_describe(args) -> int:
    model = load_checkpoint(args.model)
    circuit, _ = circuit_from_checkpoint(model)
    print(f"kind: {model['kind']}")
    print(f"qubits: {circuit.n_qubits}")
    print(f"{circuit.n_params} parameters")
    print(f"circuit hash: {model['circuit_hash']}")
    for gate, layer, block in zip(circuit.gates, circuit.layers, circuit.blocks):
        ctrl = "".join(f" c{q}={p}" for q, p in gate.controls)
        slot = "" if gate.param_slot is None else f" slot={gate.param_slot}"
        t2 = "" if gate.target2 is None else f",{gate.target2}"
        print(f"  L{layer} [{block}] {gate.kind} q{gate.target}{t2}{ctrl}{slot}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = resolve_config(args)
    model = load_checkpoint(args.model)
    if model["kind"] == "loader":
        raise ConfigError("loader models do not support eval")
    circuit, params = circuit_from_checkpoint(model)
    # evaluate with the pipeline settings the model was trained with
    for key in ("context_len", "horizon", "d", "quantizer", "window", "stride", "split"):
        if key in model.get("config", {}):
            cfg[key] = model["config"][key]
    train, test, _, asset_id = prepare_asset(args.prices, cfg)
    part = {"train": train, "test": test}[args.part]
    ctx_dist = data.empirical_dist(train, cfg["context_len"])
    joint = data.empirical_dist(part, cfg["context_len"] + cfg["horizon"])
    label = args.asset if model["kind"] == "mtl" else None
    if model["kind"] == "mtl" and label is None:
        raise ConfigError("mtl models require --asset")
    kl, per_context = inference.batch_conditional_kl(circuit, params, ctx_dist, joint, label)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_resolved_config(cfg, out_dir)
    dump_json({
        "asset": asset_id,
        "part": args.part,
        "kl": kl,
        "kl_per_context": per_context,
    }, out_dir / "eval.json")
    print(f"{asset_id} [{args.part}]: KL {kl:.6f}")
    return EXIT_OK


def _add_pipeline_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--context-len", "--T", dest="context_len", type=int)
    p.add_argument("--horizon", "--tau", dest="horizon", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--quantizer", choices=data.QUANTIZER_MODES)
    p.add_argument("--window", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--preprocess-order", dest="preprocess_order",
                   choices=("diff_first", "avg_first"))
    p.add_argument("--split", type=float)
    p.add_argument("--layers", "--L", dest="layers", type=int)
    p.add_argument("--sublayers", "--c", dest="sublayers", type=int)
    p.add_argument("--entangler", choices=ansatz.ENTANGLERS)
    p.add_argument("--control-style", dest="control_style", choices=ansatz.CONTROL_STYLES)
    p.add_argument("--epochs", type=int)
    p.add_argument("--epochs-per-block", dest="epochs_per_block", type=int)
    p.add_argument("--cycles", type=int)
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--spsa-delta", dest="spsa_delta", type=float)
    p.add_argument("--shots", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--grad-estimator", dest="grad_estimator", choices=training.GRAD_ESTIMATORS)
    p.add_argument("--loss", choices=training.LOSSES)
    p.add_argument("--init", choices=("random", "zeros"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qstockpred",
        description="Train and query quantum circuits for quantized return distributions",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("load", help="train the distribution loader on one asset")
    p.add_argument("--prices", required=True)
    p.add_argument("--out", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_load)

    p = sub.add_parser("train", help="train a single- or multi-asset model")
    p.add_argument("--mode", choices=("stl", "mtl"), required=True)
    p.add_argument("--prices", nargs="+", required=True)
    p.add_argument("--out", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="conditional next-symbol prediction")
    p.add_argument("--model", required=True)
    p.add_argument("--context", required=True)
    p.add_argument("--asset", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("rollout", help="multi-step sequential prediction")
    p.add_argument("--model", required=True)
    p.add_argument("--context", required=True,
                   help="context bits; comma-separated per asset with --weights")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--mode", choices=("exact", "sampled"), default="exact")
    p.add_argument("--asset", type=int)
    p.add_argument("--weights", help="portfolio weights, e.g. 3,1 (mtl models)")
    p.add_argument("--episodes", type=int, default=10000)
    p.add_argument("--budget", type=int, default=inference.DEFAULT_QUBIT_BUDGET)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("noise-sweep", help="KL vs noise probability sweep")
    p.add_argument("--model", required=True)
    p.add_argument("--kind", choices=("depolarizing", "readout", "both"), default="both")
    p.add_argument("--grid", default="0,0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.45,0.5")
    p.add_argument("--shots", type=int, default=100000)
    p.add_argument("--trajectories", type=int, default=noise.DEFAULT_TRAJECTORIES)
    p.add_argument("--context")
    p.add_argument("--asset", type=int)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_noise_sweep)

    p = sub.add_parser("describe", help="print a model's gate listing")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("eval", help="KL of a trained model against a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--prices", required=True)
    p.add_argument("--part", choices=("train", "test"), default="train")
    p.add_argument("--asset", type=int)
    p.add_argument("--out", required=True)
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2 on bad flags; map to the config exit code
        return EXIT_CONFIG if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataFormatError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ResourceError as e:
        print(f"resource error: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except DegeneratePredictionError as e:
        print(f"degenerate prediction: {e}", file=sys.stderr)
        return EXIT_DEGENERATE


if __name__ == "__main__":
    sys.exit(main())
