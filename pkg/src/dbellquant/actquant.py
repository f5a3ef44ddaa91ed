"""Uniform fake quantization of activations and outlier statistics."""
from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .ltdb import inverse_apply

GRANULARITIES = ("per-tensor", "per-token")


@dataclass(frozen=True)
class ActQuantConfig:
    bits: int = 6
    granularity: str = "per-tensor"
    symmetric: bool = False

    def __post_init__(self):
        if int(self.bits) != self.bits or not 2 <= self.bits <= 16:
            raise ValueError(f"bits must be an integer in [2, 16], got {self.bits!r}")
        if self.granularity not in GRANULARITIES:
            raise ValueError(f"granularity must be one of {GRANULARITIES}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ActivationStats:
    max_abs: float
    min: float
    max: float
    outlier_fraction: float
    kurtosis: float

    def to_dict(self) -> dict:
        return asdict(self)


def quant_scale(X, config: ActQuantConfig) -> np.ndarray:
    """Grid pitch used by :func:`fake_quantize`, broadcastable to ``X``."""
    X = np.asarray(X, dtype=np.float64)
    axis, keep = _reduce_axes(X, config)
    if config.symmetric:
        return np.abs(X).max(axis=axis, keepdims=keep) / (2 ** (config.bits - 1) - 1)
    lo = X.min(axis=axis, keepdims=keep)
    hi = X.max(axis=axis, keepdims=keep)
    return (hi - lo) / (2 ** config.bits - 1)


def _reduce_axes(X, config):
    if config.granularity == "per-token" and X.ndim >= 2:
        return tuple(range(1, X.ndim)), True
    return None, False


def fake_quantize(X, config: ActQuantConfig | None = None) -> np.ndarray:
    """Quantize-dequantize ``X`` on a uniform grid (round half to even).

    Asymmetric mode maps ``[min, max]`` onto ``2**bits - 1`` steps; the
    symmetric mode uses ``max|x|`` and ``2**(bits-1) - 1`` steps per side.
    Ranges are taken from ``X`` itself, per tensor or per row. A slice with
    zero range is returned unchanged.
    """
    config = config or ActQuantConfig()
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        return X.copy()
    axis, keep = _reduce_axes(X, config)
    if config.symmetric:
        levels = 2 ** (config.bits - 1) - 1
        hi = np.abs(X).max(axis=axis, keepdims=keep)
        scale = hi / levels
        safe = np.where(scale > 0, scale, 1.0)
        codes = np.clip(np.round(X / safe), -levels, levels)
        out = codes * safe
        # keep the extremes exact so requantizing reproduces the same grid
        out = np.where(codes == levels, hi, np.where(codes == -levels, -hi, out))
        return np.where(scale > 0, out, X)
    levels = 2 ** config.bits - 1
    lo = X.min(axis=axis, keepdims=keep)
    hi = X.max(axis=axis, keepdims=keep)
    scale = (hi - lo) / levels
    safe = np.where(scale > 0, scale, 1.0)
    codes = np.clip(np.round((X - lo) / safe), 0, levels)
    out = np.where(codes == levels, hi, lo + codes * safe)
    return np.where(scale > 0, out, X)


def activation_stats(X, c: float = 6.0) -> ActivationStats:
    """Range, outlier share (``|x| > c * std``) and excess kurtosis of ``X``."""
    X = np.asarray(X, dtype=np.float64)
    if X.size == 0:
        raise ValueError("empty input")
    flat = X.reshape(-1)
    std = flat.std()
    if std > 0:
        outliers = float(np.mean(np.abs(flat) > c * std))
        centered = flat - flat.mean()
        kurt = float(np.mean(centered ** 4) / np.mean(centered ** 2) ** 2 - 3.0)
    else:
        outliers, kurt = 0.0, 0.0
    return ActivationStats(
        max_abs=float(np.abs(flat).max()),
        min=float(flat.min()),
        max=float(flat.max()),
        outlier_fraction=outliers,
        kurtosis=kurt,
    )


@dataclass(frozen=True)
class SmoothingReport:
    before: ActivationStats
    after: ActivationStats
    fraction_T_above_one: float

    def to_dict(self) -> dict:
        return {
            "before": self.before.to_dict(),
            "after": self.after.to_dict(),
            "fraction_T_above_one": self.fraction_T_above_one,
        }


def smoothing_report(X, T, c: float = 6.0) -> SmoothingReport:
    """Compare activation statistics before and after dividing by ``T``."""
    T = np.asarray(T, dtype=np.float64)
    after = inverse_apply(X, T)
    return SmoothingReport(
        before=activation_stats(X, c),
        after=activation_stats(after, c),
        fraction_T_above_one=float(np.mean(T > 1.0)),
    )
