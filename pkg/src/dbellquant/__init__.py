"""Block-wise weight binarization with a learnable per-channel equivalent transform.

The transform ``T`` multiplies the rows of a weight matrix and divides the
matching activation channels, so ``X @ W == (X / T) @ (T * W)``. Training
``T`` pulls each block's weights toward its two binarization levels, which
lowers binarization error and flattens activation outliers at the same time.
"""
from .actquant import ActQuantConfig, ActivationStats, SmoothingReport, activation_stats, fake_quantize, smoothing_report
from .binarizer import (
    BinarizedBlock,
    BinarizedWeights,
    MeanCenters,
    QuantLayout,
    binarization_mse,
    binarize,
    binarize_block,
    channel_stats,
    dequantize,
    dequantize_block,
    mean_centers,
    pack_signs,
    unpack_signs,
)
from .kernels import BACKEND
from .ltdb import (
    DegenerateChannelWarning,
    DivergenceError,
    LossTrace,
    LTDBConfig,
    apply_transform,
    dtmd_loss,
    dtnp_gradient,
    dtnp_loss,
    fuse,
    fused_binarization_mse,
    init_transform,
    inverse_apply,
    train_transform,
)
from .pipeline import (
    ErrorReport,
    LayerSpec,
    QuantizedLayerArtifact,
    baseline_layer,
    error_report,
    evaluate_layer,
    fused_forward,
    quantize_layer,
    reference_forward,
    simulate_forward,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
