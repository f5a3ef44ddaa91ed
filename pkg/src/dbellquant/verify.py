"""Verification suites behind ``dbellquant verify``.

Each suite returns a JSON-ready dict with a top-level ``passed`` flag. The
gradient suite checks :func:`~dbellquant.ltdb.dtnp_gradient` against
central differences of a loss written out here independently of the
kernels.
"""
from __future__ import annotations

import numpy as np

from .binarizer import QuantLayout
from .ltdb import LTDBConfig, dtnp_gradient
from .oracle import (
    UNMET,
    DualBellSpec,
    OutlierVectorSpec,
    check_scale_down,
    check_scale_up,
    compare_bell_errors,
    random_outlier_spec,
)

EQUIVALENCE_TOL = 1e-9
GRADIENT_RTOL = 1e-4
GRADIENT_ATOL = 1e-9
FD_STEP = 1e-4
DUAL_DEGENERATE_TOL = 0.02

HAND_NORMALS = (0.1, -0.1, 0.05, -0.05, 0.02, -0.02, 0.0)
HAND_SPEC = OutlierVectorSpec((4.0,), HAND_NORMALS)


def equivalence(trials=1000, seed=0, max_dim=256, **_):
    """Relative error between ``X @ W`` and ``(X / T) @ (T * W)`` on random triples."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n, cin, cout = rng.integers(1, max_dim + 1, size=3)
        X = rng.standard_normal((n, cin))
        W = rng.standard_normal((cin, cout))
        T = np.exp(rng.uniform(np.log(0.01), np.log(100.0), size=cin))
        Y = X @ W
        Yt = (X / T) @ (T[:, None] * W)
        rel = np.linalg.norm(Y - Yt) / np.linalg.norm(Y)
        worst = max(worst, float(rel))
    return {"passed": worst <= EQUIVALENCE_TOL, "trials": trials, "max_rel_error": worst,
            "tolerance": EQUIVALENCE_TOL}


def _scaling_suite(check, factor_range, hand_factor, trials, seed, factor):
    rng = np.random.default_rng(seed)
    counts = {"passed": 0, "failed": 0, UNMET: 0}
    worst_margin = np.inf
    for _ in range(trials):
        spec = random_outlier_spec(rng)
        f = factor if factor is not None else float(rng.uniform(*factor_range))
        rep = check(spec, f)
        counts[rep.status] += 1
        if rep.status != UNMET:
            worst_margin = min(worst_margin, rep.original_error - rep.scaled_error)
    hand = check(HAND_SPEC, hand_factor)
    # all normals scaled past the column mean: reported, never counted as a failure
    probe = check(OutlierVectorSpec((1.0,), (0.6, -0.6, 0.0)), hand_factor)
    ok = counts["failed"] == 0 and counts["passed"] > 0 and hand.passed
    return {
        "passed": ok,
        "trials": trials,
        "counts": counts,
        "min_error_reduction": float(worst_margin) if np.isfinite(worst_margin) else None,
        "hand_example": hand.to_dict(),
        "precondition_probe": probe.to_dict(),
    }


def scale_up(trials=200, seed=0, eta=None, **_):
    return _scaling_suite(check_scale_up, (1.0 + 1e-6, 2.0), 1.5, trials, seed, eta)


def scale_down(trials=200, seed=0, gamma=None, **_):
    return _scaling_suite(check_scale_down, (0.5 + 1e-6, 1.0 - 1e-6), 1 / 1.5, trials, seed, gamma)


def dual_bell(trials=1000, seed=0, n=128, **_):
    """Separated dual bell beats a unit Gaussian; a collapsed dual bell matches it."""
    trials = max(trials, 1000)
    sep = compare_bell_errors(n, trials, (0.0, 1.0), DualBellSpec(0.5, -1.0, 1.0, 0.05, 0.05), seed)
    same = compare_bell_errors(n, trials, (0.0, 1.0), DualBellSpec(0.5, 0.0, 0.0, 1.0, 1.0), seed + 1)
    gap = abs(same["dual_mse"] - same["single_mse"]) / same["single_mse"]
    return {
        "passed": bool(sep["dual_better"] and gap <= DUAL_DEGENERATE_TOL),
        "separated": sep,
        "degenerate": same,
        "degenerate_rel_gap": gap,
        "tolerance": DUAL_DEGENERATE_TOL,
    }


def reference_centers(Wt, block_size):
    """Per-entry ``(m1, m2, beta)`` computed block by block with plain numpy."""
    m1 = np.empty_like(Wt)
    m2 = np.empty_like(Wt)
    beta = np.empty_like(Wt)
    for s in range(0, Wt.shape[0], block_size):
        blk = Wt[s:s + block_size]
        b = blk.sum(axis=0) / blk.shape[0]
        a = np.abs(blk - b).sum(axis=0) / blk.shape[0]
        m1[s:s + block_size] = b - a
        m2[s:s + block_size] = b + a
        beta[s:s + block_size] = b
    return m1, m2, beta


def reference_dtnp(W, T, block_size, floor=1e-8, l2=False, centers=None):
    Wt = T[:, None] * W
    if centers is None:
        m1, m2, _ = reference_centers(Wt, block_size)
    else:
        m1, m2 = centers
    d1 = np.abs(Wt - m1)
    d2 = np.abs(Wt - m2)
    use_upper = d2 < d1
    d = np.where(use_upper, d2, d1)
    m = np.where(use_upper, m2, m1)
    q = d / np.maximum(np.abs(m), floor)
    return float(np.mean(q ** 2 if l2 else q))


def tie_margin(W, T, block_size):
    """Smallest distance, in transformed units, from any kink of the loss."""
    Wt = T[:, None] * W
    m1, m2, beta = reference_centers(Wt, block_size)
    d1 = np.abs(Wt - m1)
    d2 = np.abs(Wt - m2)
    # |m| is a kink too, and a center near zero makes the loss too steep for differencing
    m = np.where(d2 < d1, m2, m1)
    return float(min(np.minimum(d1, d2).min(), (np.abs(d1 - d2) / 2).min(),
                     np.abs(Wt - beta).min(), np.abs(m).min()))


def finite_difference(W, T, block_size, mode, floor=1e-8, l2=False, h=None):
    """Five-point central difference of :func:`reference_dtnp` in each ``T_i``.

    The default step keeps every stencil point a quarter of the kink margin
    away from the nearest kink.
    """
    if h is None:
        h = min(FD_STEP, 0.25 * tie_margin(W, T, block_size) / (2 * np.abs(W).max()))
    centers = None
    if mode == "frozen":
        m1, m2, _ = reference_centers(T[:, None] * W, block_size)
        centers = (m1, m2)

    def f(i, step):
        t = T.copy()
        t[i] += step
        return reference_dtnp(W, t, block_size, floor, l2, centers)

    g = np.empty_like(T)
    for i in range(T.size):
        g[i] = (-f(i, 2 * h) + 8 * f(i, h) - 8 * f(i, -h) + f(i, -2 * h)) / (12 * h)
    return g


def random_gradient_point(rng, W, block_size, min_margin=1e-3, attempts=1000):
    """A positive ``T`` whose transformed entries all sit away from the loss kinks."""
    scale = np.abs(W).mean()
    for _ in range(attempts):
        T = np.exp(rng.uniform(np.log(0.5), np.log(2.0), size=W.shape[0]))
        if tie_margin(W, T, block_size) > min_margin * scale:
            return T
    raise RuntimeError("could not find a tie-free point")


def gradient_check(W, T, block_size, mode, l2=False, backend=None):
    cfg = LTDBConfig(layout=QuantLayout(block_size), dtnp_norm="l2" if l2 else "l1")
    g = dtnp_gradient(W, T, cfg.layout, cfg, center_gradient=mode, backend=backend)
    fd = finite_difference(W, T, block_size, mode, cfg.center_floor, l2)
    err = np.abs(g - fd)
    ok = bool(np.all(err <= GRADIENT_RTOL * np.abs(fd) + GRADIENT_ATOL))
    worst = float(np.max(err / (np.abs(fd) + GRADIENT_ATOL / GRADIENT_RTOL)))
    return ok, worst


def gradient(trials=100, seed=0, layers=10, **_):
    """Analytic DTNP gradients against central differences, both center modes."""
    rng = np.random.default_rng(seed)
    results = {"frozen": {"checked": 0, "failed": 0, "worst": 0.0},
               "tracked": {"checked": 0, "failed": 0, "worst": 0.0}}
    for _ in range(layers):
        # blocks of one or two rows sit exactly on their centers, a kink of the loss
        block = int(rng.integers(3, 17))
        rem = int(rng.choice([0, *range(3, block)]))
        rows = block * int(rng.integers(1, 4)) + rem
        cols = int(rng.integers(1, 9))
        W = rng.standard_normal((rows, cols))
        for _ in range(trials):
            T = random_gradient_point(rng, W, block)
            for mode, r in results.items():
                ok, worst = gradient_check(W, T, block, mode)
                r["checked"] += 1
                r["failed"] += not ok
                r["worst"] = max(r["worst"], worst)
    passed = all(r["failed"] == 0 for r in results.values())
    return {"passed": passed, "layers": layers, "points_per_layer": trials,
            "rtol": GRADIENT_RTOL, "atol": GRADIENT_ATOL, **results}


SUITES = {
    "equivalence": equivalence,
    "scale-up": scale_up,
    "scale-down": scale_down,
    "dual-bell": dual_bell,
    "gradient": gradient,
}
