"""Synthetic data generators and brute-force checks of the binarization error claims.

The two scaling checks reproduce a single-channel argument: a weight column
made of a few same-sign outliers plus near-zero values that sum to zero.
Either enlarging the near-zero values (and shrinking their inputs) or
shrinking the outliers (and enlarging their inputs) keeps the exact output
and strictly lowers the binarized output error, provided the conditions in
:func:`scale_up_preconditions` / :func:`scale_down_preconditions` hold.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, asdict

import numpy as np

from .binarizer import QuantLayout, binarize, dequantize

UNMET = "precondition unmet"


@dataclass(frozen=True)
class DualBellSpec:
    pi: float
    mu1: float
    mu2: float
    sigma1: float
    sigma2: float

    def __post_init__(self):
        if not 0.0 <= self.pi <= 1.0:
            raise ValueError("pi must lie in [0, 1]")
        if not (self.sigma1 > 0 and self.sigma2 > 0):
            raise ValueError("sigmas must be positive")

    @property
    def second_moment(self) -> float:
        return (self.pi * (self.mu1 ** 2 + self.sigma1 ** 2)
                + (1 - self.pi) * (self.mu2 ** 2 + self.sigma2 ** 2))


@dataclass(frozen=True)
class OutlierVectorSpec:
    outliers: tuple[float, ...]
    normals: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "outliers", tuple(float(v) for v in self.outliers))
        object.__setattr__(self, "normals", tuple(float(v) for v in self.normals))
        if not self.outliers:
            raise ValueError("need at least one outlier")

    @property
    def n(self) -> int:
        return len(self.outliers) + len(self.normals)

    @property
    def k(self) -> int:
        return len(self.outliers)

    @property
    def total(self) -> float:
        """Sum of the outliers (``A``)."""
        return math.fsum(self.outliers)

    def weights(self) -> np.ndarray:
        return np.array(self.outliers + self.normals)


@dataclass(frozen=True)
class TheoremCheckReport:
    original_error: float
    scaled_error: float
    passed: bool
    status: str

    def to_dict(self) -> dict:
        return asdict(self)


def gen_single_bell(n: int, mu: float = 0.0, sigma: float = 1.0, seed=None) -> np.ndarray:
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return np.random.default_rng(seed).normal(mu, sigma, size=n)


def gen_dual_bell(n: int, spec: DualBellSpec, seed=None) -> np.ndarray:
    rng = np.random.default_rng(seed)
    first = rng.random(n) < spec.pi
    z = rng.standard_normal(n)
    return np.where(first, spec.mu1 + spec.sigma1 * z, spec.mu2 + spec.sigma2 * z)


def outlier_columns(cols: int, fraction: float, seed=None) -> np.ndarray:
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    count = 0 if fraction == 0 else min(cols, max(1, round(fraction * cols)))
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(cols, size=count, replace=False)) if count else np.array([], dtype=int)


def gen_calibration_with_outliers(rows: int, cols: int, outlier_cols: float = 0.01,
                                  magnitude: float = 20.0, seed=None, return_columns: bool = False):
    """Standard normal activations with a fraction of columns scaled by ``magnitude``.

    A non-zero fraction selects at least one column.
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    data_seed, col_seed = ss.spawn(2)
    X = np.random.default_rng(data_seed).standard_normal((rows, cols))
    idx = outlier_columns(cols, outlier_cols, col_seed)
    X[:, idx] *= magnitude
    return (X, idx) if return_columns else X


def antisymmetric_normals(count: int, scale: float, rng) -> np.ndarray:
    """``count`` small values built from +/- pairs (plus a zero when odd), so they sum to 0."""
    half = rng.uniform(0.0, scale, size=count // 2)
    vals = np.empty(count)
    vals[0:2 * half.size:2] = half
    vals[1:2 * half.size:2] = -half
    if count % 2:
        vals[-1] = 0.0
    return vals


def random_outlier_spec(rng, n_range=(100, 400), factor: float = 2.0) -> OutlierVectorSpec:
    """Random spec satisfying both scaling preconditions for factors up to ``factor``.

    Uses ``n >= 100``, ``k <= n / 20``, same-sign outliers at least ten times
    the largest normal value, and normals small enough that the scaled
    values stay below the column mean.
    """
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    k = int(rng.integers(1, n // 20 + 1))
    sign = rng.choice([-1.0, 1.0])
    outliers = sign * rng.uniform(1.0, 10.0, size=k)
    A = abs(outliers.sum())
    # normals below mean / factor keep both scaled columns on the same side of the mean
    bound = min(A / n / factor, np.abs(outliers).min() / 10.0) * 0.99
    normals = antisymmetric_normals(n - k, bound, rng)
    return OutlierVectorSpec(tuple(outliers), tuple(rng.permutation(normals)))


def _binarized_output(x: np.ndarray, w: np.ndarray) -> float:
    deq = dequantize(binarize(w[:, None], QuantLayout(block_size=w.size)))[:, 0]
    return float(x @ deq)


def _common_preconditions(spec: OutlierVectorSpec) -> list[str]:
    problems = []
    out = np.array(spec.outliers)
    if not (np.all(out > 0) or np.all(out < 0)):
        problems.append("outliers must share one sign")
    if not 2 * spec.k < spec.n:
        problems.append("need k < n/2")
    normal_sum = math.fsum(spec.normals)
    if abs(normal_sum) > 1e-12 * max(1.0, sum(abs(v) for v in spec.normals)):
        problems.append("normals must sum to zero")
    mean = abs(spec.total) / spec.n
    if np.any(np.abs(out) <= mean):
        problems.append("every outlier must lie beyond the column mean")
    return problems


def scale_up_preconditions(spec: OutlierVectorSpec, eta: float) -> list[str]:
    problems = _common_preconditions(spec)
    if not 1.0 <= eta < 2.0:
        problems.append("eta must lie in [1, 2)")
    max_normal = max((abs(v) for v in spec.normals), default=0.0)
    if not eta * max_normal < abs(spec.total) / spec.n:
        problems.append("eta * max|normal| must stay below |A|/n")
    return problems


def scale_down_preconditions(spec: OutlierVectorSpec, gamma: float) -> list[str]:
    problems = _common_preconditions(spec)
    if not 0.5 < gamma <= 1.0:
        problems.append("gamma must lie in (1/2, 1]")
    max_normal = max((abs(v) for v in spec.normals), default=0.0)
    if not max_normal < gamma * abs(spec.total) / spec.n:
        problems.append("max|normal| must stay below gamma*|A|/n")
    return problems


def _report(original, scaled, problems) -> TheoremCheckReport:
    if problems:
        return TheoremCheckReport(original, scaled, False, UNMET)
    passed = scaled < original
    return TheoremCheckReport(original, scaled, passed, "passed" if passed else "failed")


def check_scale_up(spec: OutlierVectorSpec, eta: float) -> TheoremCheckReport:
    """Scale the near-zero weights by ``eta`` and their inputs by ``1/eta`` (input all 2s)."""
    w = spec.weights()
    k = spec.k
    x = np.full(spec.n, 2.0)
    y = float(x @ w)
    original = abs(y - _binarized_output(x, w))
    w_new = w.copy()
    w_new[k:] *= eta
    x_new = x.copy()
    x_new[k:] /= eta
    scaled = abs(y - _binarized_output(x_new, w_new))
    return _report(original, scaled, scale_up_preconditions(spec, eta))


def check_scale_down(spec: OutlierVectorSpec, gamma: float) -> TheoremCheckReport:
    """Scale the outliers by ``gamma`` and their inputs by ``1/gamma`` (input all 1s)."""
    w = spec.weights()
    k = spec.k
    x = np.ones(spec.n)
    y = float(x @ w)
    original = abs(y - _binarized_output(x, w))
    w_new = w.copy()
    w_new[:k] *= gamma
    x_new = x.copy()
    x_new[:k] /= gamma
    scaled = abs(y - _binarized_output(x_new, w_new))
    return _report(original, scaled, scale_down_preconditions(spec, gamma))


def closed_form_errors(n: int, k: int, total: float, kind: str, factor: float) -> tuple[float, float]:
    """Errors predicted in closed form when every precondition holds.

    With ``r = k/n`` the two reconstruction levels are
    ``(A/n)(3 - 2r)`` for outliers and ``(A/n)(2r - 1)`` for the rest, and
    they do not move under the scaling. ``kind`` is "up" (factor = eta) or
    "down" (factor = gamma).
    """
    r = k / n
    hi = r * (3 - 2 * r)
    lo = (1 - r) * (2 * r - 1)
    if kind == "up":
        y = 2 * total
        return abs(y - y * (hi + lo)), abs(y - y * (hi + lo / factor))
    if kind == "down":
        y = total
        return abs(y - y * (hi + lo)), abs(y - y * (hi + factor * lo))
    raise ValueError("kind must be 'up' or 'down'")


def scalar_binarization_mse(values) -> float:
    """Binarization MSE of one column with plain Python arithmetic."""
    vals = [float(v) for v in values]
    n = len(vals)
    if n == 0:
        raise ValueError("empty input")
    beta = sum(vals) / n
    alpha = sum(abs(v - beta) for v in vals) / n
    err = 0.0
    for v in vals:
        level = beta + alpha if v - beta > 0 else beta - alpha
        err += (v - level) ** 2
    return err / n


def _column_mse(samples: np.ndarray) -> np.ndarray:
    """Binarization MSE of each row of ``samples`` treated as one channel."""
    W = samples.T
    n = W.shape[0]
    deq = dequantize(binarize(W, QuantLayout(block_size=n)))
    return np.mean((W - deq) ** 2, axis=0)


def compare_bell_errors(n: int, trials: int, single=(0.0, 1.0), dual: DualBellSpec | None = None,
                        seed=None) -> dict:
    """Mean binarization MSE of single-bell versus dual-bell channels of length ``n``."""
    if trials < 1 or n < 1:
        raise ValueError("n and trials must be positive")
    dual = dual or DualBellSpec(0.5, -1.0, 1.0, 0.05, 0.05)
    mu, sigma = single
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_seed, d_seed = ss.spawn(2)
    single_samples = gen_single_bell(n * trials, mu, sigma, s_seed).reshape(trials, n)
    dual_samples = gen_dual_bell(n * trials, dual, d_seed).reshape(trials, n)
    single_mse = _column_mse(single_samples)
    dual_mse = _column_mse(dual_samples)

    m_single = mu ** 2 + sigma ** 2
    moment_gap = abs(dual.second_moment - m_single) / m_single
    warning = None
    if moment_gap > 0.05:
        warning = f"second moments differ by {moment_gap:.1%}"
        warnings.warn(warning, stacklevel=2)
    separated = abs(dual.mu1 - dual.mu2) >= 4 * max(dual.sigma1, dual.sigma2)
    return {
        "n": n,
        "trials": trials,
        "single_mse": float(single_mse.mean()),
        "dual_mse": float(dual_mse.mean()),
        "single_mse_sem": float(single_mse.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0,
        "dual_mse_sem": float(dual_mse.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0,
        "moment_gap": moment_gap,
        "separated": separated,
        "dual_better": bool(dual_mse.mean() < single_mse.mean()),
        "warning": warning,
    }
