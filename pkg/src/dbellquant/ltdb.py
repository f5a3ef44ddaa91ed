"""Learnable per-input-channel transform that reshapes weights into a dual-bell form.

A positive vector ``T`` (length ``C_in``) scales row ``i`` of ``W`` by
``T[i]`` and divides column ``i`` of the activations by the same value, so
``X @ W == (X / T) @ (T[:, None] * W)``. ``T`` starts from an
activation-aware guess and is trained so that the transformed weights sit
close to the two binarization levels of their block.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from . import kernels
from .binarizer import QuantLayout, as_weight_matrix, binarize, dequantize

logger = logging.getLogger(__name__)

_NORMS = ("l1", "l2")
_CENTER_GRADIENTS = ("tracked", "frozen")
_UPDATES = ("multiplicative", "additive")


class DivergenceError(RuntimeError):
    """Raised when a training loss stops being finite."""


class DegenerateChannelWarning(UserWarning):
    """An input channel has zero activation or weight range."""


@dataclass(frozen=True)
class LTDBConfig:
    epsilon: float = 0.85
    learning_rate: float = 1.0
    max_epochs: int = 500
    lambda_dtmd: float = 1.0
    lambda_dtnp: float = 1.0
    center_floor: float = 1e-8
    t_clamp: tuple[float, float] = (1e-4, 1e4)
    layout: QuantLayout = field(default_factory=QuantLayout)
    dtnp_norm: str = "l1"
    center_gradient: str = "tracked"
    update: str = "multiplicative"

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if int(self.max_epochs) != self.max_epochs or self.max_epochs < 1:
            raise ValueError("max_epochs must be a positive integer")
        if not (self.lambda_dtmd > 0 and self.lambda_dtnp > 0):
            raise ValueError("loss coefficients must be positive")
        if not self.center_floor > 0:
            raise ValueError("center_floor must be positive")
        t_min, t_max = self.t_clamp
        if not 0 < t_min < t_max:
            raise ValueError("t_clamp must satisfy 0 < t_min < t_max")
        object.__setattr__(self, "t_clamp", (float(t_min), float(t_max)))
        if self.dtnp_norm not in _NORMS:
            raise ValueError(f"dtnp_norm must be one of {_NORMS}")
        if self.center_gradient not in _CENTER_GRADIENTS:
            raise ValueError(f"center_gradient must be one of {_CENTER_GRADIENTS}")
        if self.update not in _UPDATES:
            raise ValueError(f"update must be one of {_UPDATES}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["t_clamp"] = list(self.t_clamp)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LTDBConfig":
        d = dict(d)
        if "layout" in d and isinstance(d["layout"], dict):
            d["layout"] = QuantLayout(**d["layout"])
        if "t_clamp" in d:
            d["t_clamp"] = tuple(d["t_clamp"])
        return cls(**d)


@dataclass
class LossTrace:
    """Per-iteration DTMD/DTNP values of one training run."""

    dtmd: list[float] = field(default_factory=list)
    dtnp: list[float] = field(default_factory=list)
    best_iter: int = 0
    stopped_early: bool = False
    stop_reason: str = "max_epochs"

    def __len__(self):
        return len(self.dtmd)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LossTrace":
        return cls(**d)


def check_transform(T, length: int | None = None) -> np.ndarray:
    T = np.asarray(T, dtype=np.float64)
    if T.ndim != 1:
        raise ValueError("transform must be a 1-D vector")
    if length is not None and T.size != length:
        raise ValueError("dimension mismatch")
    if not np.all(np.isfinite(T)) or np.any(T <= 0):
        raise ValueError("transform entries must be positive and finite")
    return T


def init_transform(W, X_calib, epsilon: float = 0.85, center_floor: float = 1e-8,
                   t_clamp: tuple[float, float] = (1e-4, 1e4)) -> np.ndarray:
    """Activation-aware starting point ``max|X_j|**eps / max|W_j|**(1 - eps)``.

    ``X_j`` is activation column ``j`` over the whole calibration set and
    ``W_j`` is weight row ``j``. A zero maximum is replaced by
    ``center_floor`` and reported with a ``DegenerateChannelWarning``.
    """
    W = as_weight_matrix(W)
    X = np.asarray(X_calib, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != W.shape[0]:
        raise ValueError("dimension mismatch")
    x_max = np.abs(X).max(axis=0)
    w_max = np.abs(W).max(axis=1)
    zero = (x_max == 0) | (w_max == 0)
    if np.any(zero):
        idx = np.flatnonzero(zero).tolist()
        warnings.warn(f"degenerate channels {idx}: zero activation or weight maximum",
                      DegenerateChannelWarning, stacklevel=2)
        x_max = np.where(x_max == 0, center_floor, x_max)
        w_max = np.where(w_max == 0, center_floor, w_max)
    T = x_max ** epsilon / w_max ** (1.0 - epsilon)
    return np.clip(T, *t_clamp)


def apply_transform(W, T) -> np.ndarray:
    """Scale row ``i`` of ``W`` by ``T[i]``."""
    W = np.asarray(W, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if W.ndim != 2 or T.ndim != 1 or T.size != W.shape[0]:
        raise ValueError("dimension mismatch")
    return T[:, None] * W


def inverse_apply(X, T) -> np.ndarray:
    """Divide column ``j`` of ``X`` by ``T[j]``."""
    X = np.asarray(X, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    if X.ndim != 2 or T.ndim != 1 or T.size != X.shape[1]:
        raise ValueError("dimension mismatch")
    return X / T


def block_centers(W_t, layout: QuantLayout) -> tuple[np.ndarray, np.ndarray]:
    """Per-entry lower/upper centers of the block each entry belongs to."""
    W_t = np.asarray(W_t, dtype=np.float64)
    beta, alpha = kernels.block_stats(W_t, layout.block_size, backend="numpy")
    rep = np.repeat(np.arange(beta.shape[0]), layout.block_size)[: W_t.shape[0]]
    return (beta - alpha)[rep], (beta + alpha)[rep]


def _nearest(W_t, m1, m2):
    d1 = np.abs(W_t - m1)
    d2 = np.abs(W_t - m2)
    upper = d2 < d1
    return np.where(upper, m2, m1), np.where(upper, d2, d1)


def dtmd_loss(W_t, layout: QuantLayout | None = None, lam: float = 1.0) -> float:
    """Mean distance of each entry to its nearer block center, times ``lam``."""
    layout = layout or QuantLayout()
    W_t = as_weight_matrix(W_t)
    dtmd, _, _ = kernels.dual_target(W_t, np.ones(W_t.shape[0]), layout.block_size, 1e-8)
    return lam * dtmd


def dtnp_loss(W_t, layout: QuantLayout | None = None, lam: float = 1.0,
              center_floor: float = 1e-8, norm: str = "l1", centers=None) -> float:
    """Mean distance to the nearer center, relative to that center's magnitude.

    ``centers`` may carry fixed ``(m1, m2)`` arrays broadcastable to
    ``W_t``; by default they are recomputed from ``W_t`` itself.
    """
    layout = layout or QuantLayout()
    W_t = as_weight_matrix(W_t)
    if centers is None:
        _, dtnp, _ = kernels.dual_target(W_t, np.ones(W_t.shape[0]), layout.block_size,
                                         center_floor, norm == "l2")
        return lam * dtnp
    m, d = _nearest(W_t, *centers)
    ratio = d / np.maximum(np.abs(m), center_floor)
    if norm == "l2":
        ratio = ratio ** 2
    return lam * float(ratio.mean())


def dtnp_gradient(W, T, layout: QuantLayout | None = None, config: LTDBConfig | None = None,
                  center_gradient: str | None = None, backend: str | None = None) -> np.ndarray:
    """Gradient of the DTNP loss of ``T * W`` with respect to ``T``.

    With ``center_gradient="frozen"`` the two centers are held constant at
    their current values; ``"tracked"`` also differentiates through the
    block mean and mean absolute deviation that define them. Kinks (an
    entry exactly on its center or on ``beta``) contribute zero.
    """
    config = config or LTDBConfig()
    layout = layout or config.layout
    mode = center_gradient or config.center_gradient
    if mode not in _CENTER_GRADIENTS:
        raise ValueError(f"center_gradient must be one of {_CENTER_GRADIENTS}")
    W = as_weight_matrix(W)
    T = check_transform(T, W.shape[0])
    grad_mode = kernels.GRAD_TRACKED if mode == "tracked" else kernels.GRAD_FROZEN
    _, _, g = kernels.dual_target(W, T, layout.block_size, config.center_floor,
                                  config.dtnp_norm == "l2", grad_mode, backend=backend)
    return config.lambda_dtnp * g


def train_transform(W, X_calib, config: LTDBConfig | None = None, T_init=None,
                    backend: str | None = None) -> tuple[np.ndarray, LossTrace]:
    """Train ``T`` on the DTNP loss, stopping as soon as DTMD rises.

    Returns the ``T`` of the iteration with the lowest DTMD together with
    the full trace. Each iteration records DTMD (coefficient 1, so the
    stopping test is scale free) and DTNP of the current ``T * W``, stops if
    DTMD exceeds the best value seen so far, and otherwise takes one
    gradient step. A trace whose first DTMD is exactly zero stops at once.
    """
    config = config or LTDBConfig()
    W = as_weight_matrix(W)
    t_min, t_max = config.t_clamp
    if T_init is None:
        T = init_transform(W, X_calib, config.epsilon, config.center_floor, config.t_clamp)
    else:
        T = np.clip(check_transform(T_init, W.shape[0]), t_min, t_max)
    bs = config.layout.block_size
    l2 = config.dtnp_norm == "l2"
    grad_mode = kernels.GRAD_TRACKED if config.center_gradient == "tracked" else kernels.GRAD_FROZEN
    mod = kernels.get_backend(backend)
    Wc = np.ascontiguousarray(W)

    trace = LossTrace()
    best_T = T.copy()
    best = np.inf
    for it in range(config.max_epochs):
        dtmd, dtnp, g = mod.dual_target(Wc, T, bs, config.center_floor, l2, grad_mode)
        dtnp *= config.lambda_dtnp
        trace.dtmd.append(float(dtmd))
        trace.dtnp.append(float(dtnp))
        if not (np.isfinite(dtmd) and np.isfinite(dtnp) and np.all(np.isfinite(g))):
            raise DivergenceError("diverged")
        if dtmd > best:
            trace.stopped_early = True
            trace.stop_reason = "dtmd_increase"
            break
        best = dtmd
        best_T = T.copy()
        trace.best_iter = it
        if dtmd == 0.0:
            trace.stopped_early = True
            trace.stop_reason = "converged"
            break
        g = config.lambda_dtnp * g
        if config.update == "multiplicative":
            # gradient step on log T
            T = T * np.exp(-config.learning_rate * T * g)
        else:
            T = T - config.learning_rate * g
        T = np.clip(T, t_min, t_max)
        if not np.all(np.isfinite(T)):
            raise DivergenceError("diverged")
    logger.debug("LTDB stopped after %d iterations (%s), best %d",
                 len(trace), trace.stop_reason, trace.best_iter)
    return best_T, trace


def fuse(W, T) -> tuple[np.ndarray, np.ndarray]:
    """Fold ``T`` into the weights.

    Returns the scaled weights and ``T`` itself; the caller owns dividing
    the activations by ``T`` (normally folded into the preceding norm layer).
    """
    T = check_transform(T)
    return apply_transform(W, T), T


def fused_binarization_mse(W, T, layout: QuantLayout | None = None) -> float:
    """Binarization error of ``T * W`` measured back in the frame of ``W``.

    Equals ``binarization_mse(W)`` when ``T`` is all ones, which makes it
    the like-for-like comparison against the untransformed baseline.
    """
    W = as_weight_matrix(W)
    T = check_transform(T, W.shape[0])
    deq = dequantize(binarize(apply_transform(W, T), layout))
    return float(np.mean((W - deq / T[:, None]) ** 2))
