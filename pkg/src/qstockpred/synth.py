"""Bundled synthetic datasets: price walks, rule data, correlated pairs.

These generators make the full pipeline and test suite runnable without any
external market data. Everything is seeded and deterministic.
"""

from __future__ import annotations

import datetime
from pathlib import Path

import numpy as np

from .data import EmpiricalDist, QuantizerSpec, SymbolSeries, fit_quantizer, quantize

START_DATE = datetime.date(1985, 1, 1)


def sample_prices_path() -> Path:
    """Location of the bundled 10,033-row sample price CSV."""
    return Path(__file__).parent / "assets" / "sample_prices.csv"


def synthetic_price_walk(rows: int, seed: int = 7, start: float = 100.0,
                         drift: float = 0.0003, vol: float = 0.012) -> np.ndarray:
    """Positive price path from a seeded geometric random walk."""
    if rows < 2:
        raise ValueError("need at least two rows")
    rng = np.random.default_rng(seed)
    increments = rng.normal(drift, vol, size=rows - 1)
    log_prices = np.concatenate([[0.0], np.cumsum(increments)])
    return start * np.exp(log_prices)


def write_price_csv(path: str | Path, prices, start_date: datetime.date = START_DATE) -> Path:
    """Write a `date,close` CSV with consecutive daily dates."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write("date,close\n")
        day = start_date
        for p in prices:
            fh.write(f"{day.isoformat()},{float(p):.6f}\n")
            day += datetime.timedelta(days=1)
    return path


def rule_joint(context_len: int, rule, context_weights=None) -> tuple[EmpiricalDist, EmpiricalDist]:
    """Deterministic-rule dataset as explicit distributions.

    The joint puts each context's full conditional mass on rule(context
    bits); contexts default to uniform weight. ``rule`` maps a tuple of
    context bits to the next bit.
    """
    n_ctx = 1 << context_len
    if context_weights is None:
        weights = np.full(n_ctx, 1.0 / n_ctx)
    else:
        weights = np.asarray(context_weights, dtype=float)
        if len(weights) != n_ctx or weights.sum() <= 0 or np.any(weights < 0):
            raise ValueError("context_weights must be a nonnegative vector over all contexts")
        weights = weights / weights.sum()
    ctx_probs = {}
    joint_probs = {}
    for code in range(n_ctx):
        if weights[code] == 0.0:
            continue
        bits = tuple((code >> (context_len - 1 - i)) & 1 for i in range(context_len))
        key = "".join(str(b) for b in bits)
        nxt = int(rule(bits))
        if nxt not in (0, 1):
            raise ValueError("rule must return a bit")
        ctx_probs[key] = float(weights[code])
        joint_probs[key + str(nxt)] = float(weights[code])
    return (
        EmpiricalDist(length=context_len, probs=ctx_probs),
        EmpiricalDist(length=context_len + 1, probs=joint_probs),
    )


def last_bit_rule(bits: tuple[int, ...]) -> int:
    """Next symbol copies the most recent context symbol."""
    return bits[-1]


def deterministic_rule_series(context_len: int, length: int) -> np.ndarray:
    """Binary series following s[t] = 1 - s[t - context_len].

    The orbit is periodic with period 2*context_len and visits
    2*context_len distinct contexts, each with a deterministic continuation,
    which makes it a compact fixture for rule-learning checks on real
    sliding-window pipelines.
    """
    if length < context_len + 1:
        raise ValueError("series too short for the context length")
    sym = np.zeros(length, dtype=np.int64)
    for t in range(context_len, length):
        sym[t] = 1 - sym[t - context_len]
    return sym


def hmm_correlated_returns(n: int, n_assets: int = 2, persistence: float = 0.8,
                           noise: float = 1.2, seed: int = 0) -> list[np.ndarray]:
    """Correlated returns from one two-state latent trend plus per-asset noise.

    The latent trend m_t in {-1, +1} flips with probability 1 - persistence
    each step; every asset observes m_t + noise * eps with its own iid
    Gaussian eps. All assets share the same true conditional law, so
    cross-asset differences in finite samples are purely idiosyncratic.
    """
    if not 0.0 < persistence < 1.0:
        raise ValueError("persistence must be in (0, 1)")
    rng = np.random.default_rng(seed)
    trend = np.empty(n)
    trend[0] = 1.0
    stay = rng.random(n) < persistence
    for t in range(1, n):
        trend[t] = trend[t - 1] if stay[t] else -trend[t - 1]
    return [trend + noise * rng.normal(size=n) for _ in range(n_assets)]


def correlated_returns(n: int, n_assets: int = 2, shared_weight: float = 0.8,
                       smoothing: int = 5, seed: int = 0) -> list[np.ndarray]:
    """Return series driven by one smoothed latent trend plus idiosyncratic noise.

    Each asset's raw increments are shared_weight * latent +
    (1 - shared_weight) * own noise; a trailing moving average of width
    ``smoothing`` then gives all series the persistence the sign-quantized
    pipeline trains on.
    """
    if not 0.0 <= shared_weight <= 1.0:
        raise ValueError("shared_weight must be in [0, 1]")
    rng = np.random.default_rng(seed)
    raw = n + smoothing
    latent = rng.normal(0.0, 1.0, size=raw)
    out = []
    for _ in range(n_assets):
        idio = rng.normal(0.0, 1.0, size=raw)
        mixed = shared_weight * latent + (1.0 - shared_weight) * idio
        kernel = np.ones(smoothing) / smoothing
        smooth = np.convolve(mixed, kernel, mode="valid")
        out.append(smooth[:n])
    return out


def sign_symbols(returns: np.ndarray) -> SymbolSeries:
    """Sign-quantized symbols of a return series."""
    spec = fit_quantizer(returns, 2, "sign")
    return quantize(returns, spec)


def quantized_symbols(returns: np.ndarray, d: int, mode: str) -> tuple[SymbolSeries, QuantizerSpec]:
    spec = fit_quantizer(returns, d, mode)
    return quantize(returns, spec), spec
