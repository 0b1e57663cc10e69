"""Statevector simulation and training for quantized stock-return models."""

from .data import EmpiricalDist, PriceSeries, QuantizerSpec, SymbolSeries
from .simulator import GateOp, QubitLayout, Statevector
from .ansatz import ParamCircuit, ShareSpecifySpec
from .training import TrainConfig, TrainReport
from .noise import NoiseModel

__all__ = [
    "EmpiricalDist",
    "PriceSeries",
    "QuantizerSpec",
    "SymbolSeries",
    "GateOp",
    "QubitLayout",
    "Statevector",
    "ParamCircuit",
    "ShareSpecifySpec",
    "TrainConfig",
    "TrainReport",
    "NoiseModel",
]

__version__ = "0.1.0"
