"""Pure numpy versions of the hot kernels.

Must stay numerically interchangeable with ``_kernels.pyx``; the test suite
compares the two backends entry by entry.
"""
import numpy as np

GRAD_NONE = 0
GRAD_FROZEN = 1
GRAD_TRACKED = 2


def block_stats(Wt, block_size):
    """Return ``(beta, alpha)`` of shape ``(n_blocks, cols)``."""
    rows = Wt.shape[0]
    betas, alphas = [], []
    for s in range(0, rows, block_size):
        blk = Wt[s:s + block_size]
        b = blk.mean(axis=0)
        betas.append(b)
        alphas.append(np.abs(blk - b).mean(axis=0))
    return np.array(betas), np.array(alphas)


def dual_target(W, T, block_size, floor, l2, grad_mode):
    """DTMD mean, DTNP mean and d(DTNP mean)/dT for ``Wt = T[:, None] * W``.

    Losses are unscaled means over all entries. ``grad_mode`` selects no
    gradient, frozen centers, or centers differentiated through ``beta``
    and ``alpha``.
    """
    rows, cols = W.shape
    n = rows * cols
    Wt = T[:, None] * W
    dtmd = 0.0
    dtnp = 0.0
    grad = np.zeros(rows) if grad_mode != GRAD_NONE else None
    for s in range(0, rows, block_size):
        B = Wt[s:s + block_size]
        r = B.shape[0]
        beta = B.mean(axis=0)
        dev = B - beta
        alpha = np.abs(dev).mean(axis=0)
        m1 = beta - alpha
        m2 = beta + alpha
        d1 = np.abs(B - m1)
        d2 = np.abs(B - m2)
        # ties go to the lower center
        upper = d2 < d1
        m = np.where(upper, m2, m1)
        d = np.where(upper, d2, d1)
        am = np.abs(m)
        den = np.maximum(am, floor)
        dtmd += d.sum()
        if l2:
            dtnp += ((d / den) ** 2).sum()
        else:
            dtnp += (d / den).sum()
        if grad_mode == GRAD_NONE:
            continue
        diff = B - m
        if l2:
            direct = 2.0 * diff / den ** 2
        else:
            direct = np.sign(diff) / den
        G = direct
        if grad_mode == GRAD_TRACKED:
            if l2:
                c = -direct - np.where(am > floor, 2.0 * diff ** 2 * np.sign(m) / den ** 3, 0.0)
            else:
                c = -direct - np.where(am > floor, d * np.sign(m) / den ** 2, 0.0)
            C1 = np.where(upper, 0.0, c).sum(axis=0)
            C2 = np.where(upper, c, 0.0).sum(axis=0)
            sg = np.sign(dev)
            dalpha = (sg - sg.sum(axis=0) / r) / r
            G = G + C1 * (1.0 / r - dalpha) + C2 * (1.0 / r + dalpha)
        grad[s:s + r] = (G * W[s:s + r]).sum(axis=1)
    if grad is not None:
        grad /= n
    return dtmd / n, dtnp / n, grad
