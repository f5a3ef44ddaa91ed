import numpy as np
import pytest
from scipy import stats

from conftest import synthetic_layer
from dbellquant.actquant import ActQuantConfig, fake_quantize
from dbellquant.binarizer import QuantLayout, dequantize
from dbellquant.ltdb import LTDBConfig, train_transform
from dbellquant.oracle import DualBellSpec, gen_dual_bell, gen_single_bell
from dbellquant.pipeline import (
    LayerSpec,
    baseline_layer,
    error_report,
    evaluate_layer,
    fused_forward,
    histogram_export,
    histogram_modes,
    quantize_layer,
    reference_forward,
    simulate_forward,
)


@pytest.fixture(scope="module")
def trained():
    W, X, _ = synthetic_layer(5, rows=64, cols=6)
    spec = LayerSpec(W, X, LTDBConfig(layout=QuantLayout(32)), ActQuantConfig(6))
    return spec, quantize_layer(spec)


def test_spec_dimension_check(rng):
    with pytest.raises(ValueError, match="dimension mismatch"):
        LayerSpec(rng.standard_normal((4, 2)), rng.standard_normal((3, 5)))


def test_full_precision_debug_path_is_exact(trained, rng):
    spec, art = trained
    X = rng.standard_normal((20, 64))
    Y = reference_forward(spec.W, X)
    np.testing.assert_allclose(fused_forward(spec.W, art.transform, X, act=None), Y, rtol=1e-12, atol=1e-12)


def test_sixteen_bit_path_is_close_but_not_exact(trained, rng):
    spec, art = trained
    X = rng.standard_normal((20, 64))
    Y = reference_forward(spec.W, X)
    err = np.abs(fused_forward(spec.W, art.transform, X, ActQuantConfig(16)) - Y).max()
    assert 0 < err < 1e-2


def test_simulate_forward_composition(trained, rng):
    spec, art = trained
    X = rng.standard_normal((10, 64))
    expected = fake_quantize(X / art.transform, art.act) @ dequantize(art.binarized)
    np.testing.assert_array_equal(simulate_forward(art, X), expected)


def test_baseline_is_untransformed(rng):
    W = rng.standard_normal((16, 3))
    base = baseline_layer(W, LTDBConfig(layout=QuantLayout(8)), act=None)
    assert np.all(base.transform == 1.0)
    X = rng.standard_normal((4, 16))
    np.testing.assert_allclose(simulate_forward(base, X), X @ dequantize(base.binarized))


def test_evaluate_reports_baseline(trained):
    spec, art = trained
    rep = evaluate_layer(spec, art)
    assert rep.mse > 0 and rep.baseline_mse > 0
    assert 0 < rep.rel_frobenius < 2
    assert set(rep.to_dict()) == {"mse", "rel_frobenius", "max_abs_err", "baseline_mse"}


def test_error_report_hand_example():
    Y = np.array([[3.0, 4.0]])
    rep = error_report(Y, np.array([[3.0, 3.0]]), np.array([[1.0, 4.0]]))
    assert rep.mse == 0.5 and rep.max_abs_err == 1.0 and rep.baseline_mse == 2.0
    assert rep.rel_frobenius == pytest.approx(0.2)


def test_error_report_zero_reference():
    z = np.zeros((2, 2))
    assert error_report(z, z, z).rel_frobenius == 0.0
    assert error_report(z, z + 1, z).rel_frobenius == float("inf")
    with pytest.raises(ValueError, match="shape mismatch"):
        error_report(z, np.zeros((2, 3)), z)


def test_forward_mismatch(trained, rng):
    _, art = trained
    with pytest.raises(ValueError, match="dimension mismatch"):
        simulate_forward(art, rng.standard_normal((3, 63)))


def test_histogram_single_value():
    h = histogram_export([2.5], bins=4)
    assert sum(h["counts"]) == 1 and len(h["edges"]) == 5


def test_histogram_empty():
    with pytest.raises(ValueError, match="empty input"):
        histogram_export([])


def test_histogram_uniform_is_flat():
    v = np.random.default_rng(0).uniform(0, 1, 20000)
    h = histogram_export(v, bins=20)
    assert stats.chisquare(h["counts"]).pvalue > 1e-3


def test_histogram_modes_single_and_dual():
    single = gen_single_bell(10000, seed=1)
    dual = gen_dual_bell(10000, DualBellSpec(0.5, -1.0, 1.0, 0.1, 0.1), seed=1)
    assert histogram_modes(histogram_export(single, 50)["counts"]) == 1
    assert histogram_modes(histogram_export(dual, 50)["counts"]) == 2


@pytest.mark.xfail(strict=True, reason="training stops on the DTMD rule with DTMD only ~20% lower; "
                                        "T * W stays unimodal on Gaussian layers")
def test_trained_transform_makes_weights_bimodal():
    W, X, _ = synthetic_layer(0, rows=256, cols=32)
    T, _ = train_transform(W, X)
    assert histogram_modes(histogram_export(T[:, None] * W, 50)["counts"]) == 2


def test_untransformed_gaussian_layer_is_unimodal():
    W, _, _ = synthetic_layer(0, rows=256, cols=32)
    assert histogram_modes(histogram_export(W, 50)["counts"]) == 1
