"""Single-layer quantization: train the transform, fuse, binarize, simulate.

Layer reconstruction error stands in for model-level perplexity.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from .actquant import ActQuantConfig, fake_quantize
from .binarizer import BinarizedWeights, as_weight_matrix, binarize, dequantize
from .ltdb import LossTrace, LTDBConfig, check_transform, fuse, inverse_apply, train_transform


@dataclass
class LayerSpec:
    W: np.ndarray
    X_calib: np.ndarray
    ltdb: LTDBConfig = field(default_factory=LTDBConfig)
    act: ActQuantConfig | None = field(default_factory=ActQuantConfig)

    def __post_init__(self):
        self.W = as_weight_matrix(self.W)
        self.X_calib = np.asarray(self.X_calib, dtype=np.float64)
        if self.X_calib.ndim != 2 or self.X_calib.shape[1] != self.W.shape[0]:
            raise ValueError("dimension mismatch")


@dataclass
class QuantizedLayerArtifact:
    """Binarized fused weights plus the transform the activations must be divided by.

    ``act`` of ``None`` means activations stay in full precision.
    """

    binarized: BinarizedWeights
    transform: np.ndarray
    trace: LossTrace
    ltdb: LTDBConfig
    act: ActQuantConfig | None

    def __post_init__(self):
        self.transform = check_transform(self.transform, self.binarized.rows)


@dataclass(frozen=True)
class ErrorReport:
    mse: float
    rel_frobenius: float
    max_abs_err: float
    baseline_mse: float

    def to_dict(self) -> dict:
        return asdict(self)


def quantize_layer(spec: LayerSpec, backend: str | None = None) -> QuantizedLayerArtifact:
    T, trace = train_transform(spec.W, spec.X_calib, spec.ltdb, backend=backend)
    W_fused, T = fuse(spec.W, T)
    return QuantizedLayerArtifact(binarize(W_fused, spec.ltdb.layout), T, trace, spec.ltdb, spec.act)


def baseline_layer(W, ltdb: LTDBConfig | None = None,
                   act: ActQuantConfig | None = ActQuantConfig()) -> QuantizedLayerArtifact:
    """The untransformed reference: ``T`` fixed to ones, no training."""
    W = as_weight_matrix(W)
    ltdb = ltdb or LTDBConfig()
    trace = LossTrace(stop_reason="baseline")
    return QuantizedLayerArtifact(binarize(W, ltdb.layout), np.ones(W.shape[0]), trace, ltdb, act)


def reference_forward(W, X) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or W.ndim != 2 or X.shape[1] != W.shape[0]:
        raise ValueError("dimension mismatch")
    return X @ W


def _quantize_acts(X, act):
    return X if act is None else fake_quantize(X, act)


def simulate_forward(artifact: QuantizedLayerArtifact, X) -> np.ndarray:
    """``fake_quantize(X / T) @ dequantize(binarized)``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != artifact.binarized.rows:
        raise ValueError("dimension mismatch")
    return _quantize_acts(inverse_apply(X, artifact.transform), artifact.act) @ dequantize(artifact.binarized)


def fused_forward(W, T, X, act: ActQuantConfig | None = None) -> np.ndarray:
    """Transformed forward pass without weight binarization (debug path)."""
    W_fused, T = fuse(W, T)
    return _quantize_acts(inverse_apply(X, T), act) @ W_fused


def error_report(Y, Y_q, baseline_Yq) -> ErrorReport:
    Y = np.asarray(Y, dtype=np.float64)
    Y_q = np.asarray(Y_q, dtype=np.float64)
    baseline_Yq = np.asarray(baseline_Yq, dtype=np.float64)
    if Y.shape != Y_q.shape or Y.shape != baseline_Yq.shape:
        raise ValueError("shape mismatch")
    diff = Y - Y_q
    ref = np.linalg.norm(Y)
    err = np.linalg.norm(diff)
    if ref > 0:
        rel = err / ref
    else:
        rel = 0.0 if err == 0 else float("inf")
    return ErrorReport(
        mse=float(np.mean(diff ** 2)),
        rel_frobenius=float(rel),
        max_abs_err=float(np.abs(diff).max()) if diff.size else 0.0,
        baseline_mse=float(np.mean((Y - baseline_Yq) ** 2)),
    )


def evaluate_layer(spec: LayerSpec, artifact: QuantizedLayerArtifact, X=None) -> ErrorReport:
    """Error of the quantized layer against the float layer, with the T=ones baseline alongside."""
    X = spec.X_calib if X is None else X
    Y = reference_forward(spec.W, X)
    base = baseline_layer(spec.W, spec.ltdb, artifact.act)
    return error_report(Y, simulate_forward(artifact, X), simulate_forward(base, X))


def histogram_export(values, bins: int = 100) -> dict:
    """Uniform-bin histogram over ``[min, max]`` as plain lists."""
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise ValueError("empty input")
    if int(bins) != bins or bins < 1:
        raise ValueError("bins must be a positive integer")
    counts, edges = np.histogram(values, bins=int(bins))
    return {"edges": edges.tolist(), "counts": counts.tolist()}


def histogram_modes(counts, prominence: float = 0.2, smooth: int = 3) -> int:
    """Number of well-separated peaks in a count profile.

    Counts are box-smoothed over ``smooth`` bins and peaks must stand out by
    ``prominence`` times the tallest smoothed bin.
    """
    from scipy.signal import find_peaks

    c = np.asarray(counts, dtype=np.float64)
    if smooth > 1 and c.size >= smooth:
        c = np.convolve(c, np.ones(smooth) / smooth, mode="same")
    padded = np.concatenate([[0.0], c, [0.0]])
    peaks, _ = find_peaks(padded, prominence=prominence * padded.max())
    return int(peaks.size)
