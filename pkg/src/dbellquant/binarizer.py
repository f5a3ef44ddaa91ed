"""Block-wise per-channel weight binarization.

Weights are laid out as ``(C_in, C_out)``: rows are input channels and
columns are output channels. Rows are split into contiguous blocks of
``block_size``; within a block every column gets its own shift ``beta``
(column mean) and scale ``alpha`` (mean absolute deviation from ``beta``).
Each weight is then stored as one sign bit and reconstructed as
``sign * alpha + beta``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEFAULT_BLOCK_SIZE = 128


@dataclass(frozen=True)
class QuantLayout:
    """Row-blocking of a weight matrix along the input dimension."""

    block_size: int = DEFAULT_BLOCK_SIZE

    def __post_init__(self):
        if int(self.block_size) != self.block_size or self.block_size < 1:
            raise ValueError(f"block_size must be a positive integer, got {self.block_size!r}")

    def blocks(self, rows: int) -> list[tuple[int, int]]:
        """Return ``(start, stop)`` row ranges; the last block may be short."""
        return [(s, min(s + self.block_size, rows)) for s in range(0, rows, self.block_size)]


@dataclass(frozen=True)
class MeanCenters:
    """The two reconstruction levels of a block, per output channel."""

    m1: np.ndarray  # beta - alpha
    m2: np.ndarray  # beta + alpha


@dataclass
class BinarizedBlock:
    """One binarized row block: packed signs plus per-column ``beta``/``alpha``."""

    packed: np.ndarray
    rows: int
    cols: int
    beta: np.ndarray
    alpha: np.ndarray

    def __post_init__(self):
        self.packed = np.ascontiguousarray(self.packed, dtype=np.uint8).reshape(-1)
        self.beta = np.asarray(self.beta, dtype=np.float64).reshape(-1)
        self.alpha = np.asarray(self.alpha, dtype=np.float64).reshape(-1)
        if self.packed.size != packed_size(self.rows * self.cols):
            raise ValueError("shape mismatch")
        if self.beta.size != self.cols or self.alpha.size != self.cols:
            raise ValueError("shape mismatch")
        if np.any(self.alpha < 0):
            raise ValueError("alpha must be non-negative")

    @property
    def signs(self) -> np.ndarray:
        return unpack_signs(self.packed, (self.rows, self.cols))


@dataclass
class BinarizedWeights:
    layout: QuantLayout
    blocks: list[BinarizedBlock] = field(default_factory=list)
    rows: int = 0
    cols: int = 0

    @property
    def alphas(self) -> np.ndarray:
        return np.stack([b.alpha for b in self.blocks])

    @property
    def betas(self) -> np.ndarray:
        return np.stack([b.beta for b in self.blocks])


def as_weight_matrix(W) -> np.ndarray:
    """Validate and convert to a finite 2-D float64 array."""
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise ValueError(f"weight matrix must be 2-D, got shape {W.shape}")
    if W.shape[0] < 1 or W.shape[1] < 1:
        raise ValueError("empty input")
    if not np.all(np.isfinite(W)):
        raise ValueError("weight matrix has non-finite entries")
    return W


def _as_block(block) -> np.ndarray:
    block = np.asarray(block, dtype=np.float64)
    if block.ndim == 1:
        block = block[:, None]
    if block.ndim != 2 or block.size == 0:
        raise ValueError("empty input")
    return block


def channel_stats(block) -> tuple[np.ndarray, np.ndarray]:
    """Per-column shift and scale of a block.

    ``beta_j`` is the column mean; ``alpha_j`` is the mean of
    ``|W_ij - beta_j|`` over the block rows. A 1-D input is treated as a
    single column.
    """
    block = _as_block(block)
    beta = block.mean(axis=0)
    alpha = np.abs(block - beta).mean(axis=0)
    return beta, alpha


def _signs(block: np.ndarray, beta: np.ndarray) -> np.ndarray:
    # entries equal to beta fall on the -1 side
    return np.where(block - beta > 0, 1, -1).astype(np.int8)


def binarize_block(block) -> BinarizedBlock:
    block = _as_block(block)
    beta, alpha = channel_stats(block)
    signs = _signs(block, beta)
    return BinarizedBlock(pack_signs(signs), block.shape[0], block.shape[1], beta, alpha)


def dequantize_block(b: BinarizedBlock) -> np.ndarray:
    return b.signs * b.alpha + b.beta


def mean_centers(block) -> MeanCenters:
    beta, alpha = channel_stats(block)
    return MeanCenters(beta - alpha, beta + alpha)


def binarize(W, layout: QuantLayout | None = None) -> BinarizedWeights:
    """Binarize ``W`` block by block along the input (row) dimension."""
    W = as_weight_matrix(W)
    layout = layout or QuantLayout()
    blocks = [binarize_block(W[s:e]) for s, e in layout.blocks(W.shape[0])]
    return BinarizedWeights(layout, blocks, W.shape[0], W.shape[1])


def dequantize(bw: BinarizedWeights) -> np.ndarray:
    if not bw.blocks:
        raise ValueError("inconsistent layout")
    if sum(b.rows for b in bw.blocks) != bw.rows or any(b.cols != bw.cols for b in bw.blocks):
        raise ValueError("inconsistent layout")
    return np.concatenate([dequantize_block(b) for b in bw.blocks], axis=0)


def binarization_mse(W, layout: QuantLayout | None = None) -> float:
    W = as_weight_matrix(W)
    return float(np.mean((W - dequantize(binarize(W, layout))) ** 2))


def packed_size(nbits: int) -> int:
    return (nbits + 7) // 8


def pack_signs(signs) -> np.ndarray:
    """Pack a +/-1 array into bytes, row-major, little-endian bit order.

    Bit value 1 stands for +1 and 0 for -1; trailing padding bits are zero.
    """
    signs = np.asarray(signs)
    return np.packbits((signs.reshape(-1) > 0).astype(np.uint8), bitorder="little")


def unpack_signs(bits, shape) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8).reshape(-1)
    shape = tuple(int(s) for s in np.atleast_1d(shape))
    count = math.prod(shape)
    if bits.size != packed_size(count):
        raise ValueError("shape mismatch")
    flat = np.unpackbits(bits, count=count, bitorder="little")
    return (flat.astype(np.int8) * 2 - 1).reshape(shape)
