"""Price ingestion, return preprocessing, quantization and empirical distributions.

Everything in this module is deterministic: no randomness, no hidden state.
Bitstring conventions: each symbol occupies log2(d) bits, most significant
bit first, and windows are concatenated in time order (oldest symbol first).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, DegenerateDataError

QUANTIZER_MODES = ("sign", "uniform", "quantile")


@dataclass
class PriceSeries:
    """A single asset's close-price history in row order."""

    timestamps: list[str]
    prices: np.ndarray
    asset_id: str = ""

    def __len__(self) -> int:
        return len(self.prices)


@dataclass
class QuantizerSpec:
    """d-level discretization of returns.

    ``boundaries`` holds the d-1 strictly increasing thresholds; a return r
    maps to the number of thresholds <= r (half-open bins, left-closed).
    ``class_means`` is only populated in sign mode, where it stores the mean
    return of each class for value mapping.
    """

    d: int
    mode: str
    boundaries: np.ndarray
    x_min: float = 0.0
    x_max: float = 0.0
    class_means: np.ndarray | None = None

    def __post_init__(self):
        if self.d < 2:
            raise ValueError(f"d must be >= 2, got {self.d}")
        if self.mode not in QUANTIZER_MODES:
            raise ValueError(f"unknown quantizer mode {self.mode!r}")
        self.boundaries = np.asarray(self.boundaries, dtype=float)
        if len(self.boundaries) != self.d - 1:
            raise ValueError("need exactly d-1 boundaries")
        if np.any(np.diff(self.boundaries) <= 0):
            raise ValueError("boundaries must be strictly increasing")

    @property
    def symbol_bits(self) -> int:
        """Bits needed to encode one symbol; requires d to be a power of two."""
        b = self.d.bit_length() - 1
        if (1 << b) != self.d:
            raise ValueError(f"d={self.d} is not a power of two")
        return b

    @property
    def delta_x(self) -> float:
        return (self.x_max - self.x_min) / (self.d - 1)

    def to_dict(self) -> dict:
        out = {
            "d": self.d,
            "mode": self.mode,
            "boundaries": [float(b) for b in self.boundaries],
            "x_min": float(self.x_min),
            "x_max": float(self.x_max),
        }
        if self.class_means is not None:
            out["class_means"] = [float(m) for m in self.class_means]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "QuantizerSpec":
        means = d.get("class_means")
        return cls(
            d=int(d["d"]),
            mode=d["mode"],
            boundaries=np.asarray(d["boundaries"], dtype=float),
            x_min=float(d["x_min"]),
            x_max=float(d["x_max"]),
            class_means=None if means is None else np.asarray(means, dtype=float),
        )


@dataclass
class SymbolSeries:
    """Quantized return series over the alphabet {0..d-1}."""

    symbols: np.ndarray
    quantizer: QuantizerSpec

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=np.int64)
        if len(self.symbols) and (self.symbols.min() < 0 or self.symbols.max() >= self.quantizer.d):
            raise ValueError("symbol out of range for quantizer")

    def __len__(self) -> int:
        return len(self.symbols)


@dataclass
class EmpiricalDist:
    """Probability table over fixed-length bitstrings; absent keys mean 0."""

    length: int
    probs: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for key, p in self.probs.items():
            if len(key) != self.length or set(key) - {"0", "1"}:
                raise ValueError(f"bad bitstring key {key!r} for length {self.length}")
            if p < 0:
                raise ValueError(f"negative probability for {key!r}")
        total = sum(self.probs.values())
        if self.probs and abs(total - 1.0) > 1e-10:
            raise ValueError(f"probabilities sum to {total}, expected 1")

    def prob(self, key: str) -> float:
        return self.probs.get(key, 0.0)

    def to_vector(self) -> np.ndarray:
        """Dense probability vector of length 2^length, index = int(bitstring, 2)."""
        vec = np.zeros(1 << self.length)
        for key, p in self.probs.items():
            vec[int(key, 2)] = p
        return vec

    @classmethod
    def from_vector(cls, vec: np.ndarray, length: int, tol: float = 0.0) -> "EmpiricalDist":
        vec = np.asarray(vec, dtype=float)
        if len(vec) != (1 << length):
            raise ValueError("vector length does not match bit length")
        probs = {
            format(i, f"0{length}b"): float(p)
            for i, p in enumerate(vec)
            if p > tol
        }
        return cls(length=length, probs=probs)

    def to_json(self) -> str:
        return json.dumps({k: self.probs[k] for k in sorted(self.probs)}, indent=2)


def ingest_csv(path: str | Path, asset_id: str | None = None) -> PriceSeries:
    """Parse a `date,close` CSV into a PriceSeries.

    Dates must be ISO-8601, strictly increasing, without duplicates. Raises
    DataFormatError with the offending row number on any violation.
    """
    path = Path(path)
    if not path.exists():
        raise DataFormatError(f"price file not found: {path}")
    timestamps: list[str] = []
    prices: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        if [h.strip().lower() for h in header[:2]] != ["date", "close"]:
            raise DataFormatError(f"{path}: expected header 'date,close', got {header!r}")
        for row_num, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) < 2:
                raise DataFormatError(f"{path}: row {row_num}: expected 2 columns")
            date = row[0].strip()
            try:
                close = float(row[1])
            except ValueError:
                raise DataFormatError(
                    f"{path}: row {row_num}: close {row[1]!r} is not a number"
                ) from None
            if not math.isfinite(close) or close <= 0:
                raise DataFormatError(f"{path}: row {row_num}: close must be a positive number")
            if timestamps:
                if date == timestamps[-1]:
                    raise DataFormatError(f"{path}: row {row_num}: duplicate date {date}")
                if date < timestamps[-1]:
                    raise DataFormatError(f"{path}: row {row_num}: dates not increasing")
            timestamps.append(date)
            prices.append(close)
    if not prices:
        raise DataFormatError(f"{path}: no data rows")
    return PriceSeries(timestamps=timestamps, prices=np.asarray(prices), asset_id=asset_id or path.stem)


def moving_average(values: np.ndarray, window: int, stride: int) -> np.ndarray:
    """Trailing moving average of width ``window`` advancing by ``stride``."""
    values = np.asarray(values, dtype=float)
    if window < 1 or stride < 1:
        raise ValueError("window and stride must be >= 1")
    if len(values) < window:
        raise ValueError(f"need at least {window} values, got {len(values)}")
    csum = np.concatenate([[0.0], np.cumsum(values)])
    starts = np.arange(0, len(values) - window + 1, stride)
    return (csum[starts + window] - csum[starts]) / window


def diff_and_smooth(
    series: PriceSeries,
    window: int,
    stride: int,
    order: str = "diff_first",
) -> np.ndarray:
    """Finite differences of consecutive prices followed by moving-average smoothing.

    ``order="avg_first"`` smooths the prices first and differences the
    smoothed series instead; both orders are supported because the natural
    sample counts differ by one and either reading is defensible.
    """
    prices = np.asarray(series.prices, dtype=float)
    if order == "diff_first":
        if len(prices) < window + 1:
            raise ValueError("series too short for differencing + smoothing")
        return moving_average(np.diff(prices), window, stride)
    if order == "avg_first":
        if len(prices) < window + stride:
            raise ValueError("series too short for smoothing + differencing")
        return np.diff(moving_average(prices, window, stride))
    raise ValueError(f"unknown order {order!r}")


def fit_quantizer(returns: np.ndarray, d: int, mode: str) -> QuantizerSpec:
    """Fit a d-level quantizer to a return sample.

    sign: fixed threshold at zero (d must be 2); also records per-class mean
    returns for value mapping. uniform: equal-width bins of size
    (x_max - x_min)/(d-1). quantile: thresholds at the empirical j/d
    quantiles so each level holds roughly the same share of points.
    """
    returns = np.asarray(returns, dtype=float)
    if len(returns) == 0:
        raise ValueError("cannot fit quantizer to empty returns")
    if d < 2:
        raise ValueError("d must be >= 2")
    x_min, x_max = float(returns.min()), float(returns.max())
    if mode == "sign":
        if d != 2:
            raise ValueError("sign mode fixes d=2")
        neg = returns[returns < 0]
        pos = returns[returns >= 0]
        class_means = np.array([
            float(neg.mean()) if len(neg) else 0.0,
            float(pos.mean()) if len(pos) else 0.0,
        ])
        return QuantizerSpec(d=2, mode="sign", boundaries=np.array([0.0]),
                             x_min=x_min, x_max=x_max, class_means=class_means)
    if mode == "uniform":
        if x_max == x_min:
            raise DegenerateDataError("constant returns: uniform bins are undefined")
        dx = (x_max - x_min) / (d - 1)
        boundaries = x_min + dx * np.arange(1, d)
        return QuantizerSpec(d=d, mode="uniform", boundaries=boundaries, x_min=x_min, x_max=x_max)
    if mode == "quantile":
        boundaries = np.quantile(returns, np.arange(1, d) / d)
        if np.any(np.diff(boundaries) <= 0):
            raise DegenerateDataError("returns too concentrated for distinct quantile boundaries")
        return QuantizerSpec(d=d, mode="quantile", boundaries=boundaries, x_min=x_min, x_max=x_max)
    raise ValueError(f"unknown quantizer mode {mode!r}")


def quantize(returns: np.ndarray, spec: QuantizerSpec) -> SymbolSeries:
    """Map returns to bin indices; out-of-range values clamp to the end bins.

    Bins are half-open [threshold, next): a value equal to a threshold maps
    up, so in sign mode a zero return counts as an upward move.
    """
    returns = np.asarray(returns, dtype=float)
    symbols = np.searchsorted(spec.boundaries, returns, side="right")
    return SymbolSeries(symbols=symbols, quantizer=spec)


def encode_window(symbols, symbol_bits: int) -> str:
    """Bit-pack a symbol window, oldest symbol first, MSB-first per symbol."""
    return "".join(format(int(s), f"0{symbol_bits}b") for s in symbols)


def empirical_dist(symbols: SymbolSeries, window_len: int) -> EmpiricalDist:
    """Histogram of sliding windows (stride 1) as a bitstring distribution."""
    if window_len < 1:
        raise ValueError("window_len must be >= 1")
    n = len(symbols)
    if n < window_len:
        raise ValueError(f"need at least {window_len} symbols, got {n}")
    bits = symbols.quantizer.symbol_bits
    d = symbols.quantizer.d
    sym = symbols.symbols
    codes = np.zeros(n - window_len + 1, dtype=np.int64)
    for i in range(window_len):
        codes = codes * d + sym[i : n - window_len + 1 + i]
    counts = np.bincount(codes, minlength=d**window_len)
    total = counts.sum()
    length = window_len * bits
    probs = {
        format(code, f"0{length}b"): float(c) / total
        for code, c in enumerate(counts)
        if c
    }
    return EmpiricalDist(length=length, probs=probs)


def conditional_slice(joint: EmpiricalDist, context: str) -> EmpiricalDist:
    """Conditional distribution of the final symbol given the leading context bits.

    An unseen context yields the uniform distribution (the max-entropy
    fallback; unseen contexts never occur in the training data itself).
    """
    if len(context) >= joint.length:
        raise ValueError("context must be shorter than the joint bitstring")
    tail_bits = joint.length - len(context)
    masses = {}
    for key, p in joint.probs.items():
        if key.startswith(context):
            masses[key[len(context):]] = masses.get(key[len(context):], 0.0) + p
    total = sum(masses.values())
    if total <= 0.0:
        uniform = 1.0 / (1 << tail_bits)
        probs = {format(i, f"0{tail_bits}b"): uniform for i in range(1 << tail_bits)}
        return EmpiricalDist(length=tail_bits, probs=probs)
    probs = {k: v / total for k, v in sorted(masses.items())}
    return EmpiricalDist(length=tail_bits, probs=probs)


def context_marginal(joint: EmpiricalDist, context_bits: int) -> EmpiricalDist:
    """Marginal of the leading ``context_bits`` bits of a joint distribution."""
    if not 0 < context_bits < joint.length:
        raise ValueError("context_bits must be in (0, joint.length)")
    masses: dict[str, float] = {}
    for key, p in joint.probs.items():
        head = key[:context_bits]
        masses[head] = masses.get(head, 0.0) + p
    return EmpiricalDist(length=context_bits, probs=dict(sorted(masses.items())))


def split_train_test(symbols: SymbolSeries, fraction: float) -> tuple[SymbolSeries, SymbolSeries]:
    """Chronological prefix/suffix split at floor(fraction * len)."""
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    cut = int(fraction * len(symbols))
    return (
        SymbolSeries(symbols=symbols.symbols[:cut], quantizer=symbols.quantizer),
        SymbolSeries(symbols=symbols.symbols[cut:], quantizer=symbols.quantizer),
    )
