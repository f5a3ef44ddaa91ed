import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dbellquant.oracle import (
    UNMET,
    DualBellSpec,
    OutlierVectorSpec,
    antisymmetric_normals,
    check_scale_down,
    check_scale_up,
    closed_form_errors,
    compare_bell_errors,
    gen_calibration_with_outliers,
    gen_dual_bell,
    outlier_columns,
    random_outlier_spec,
    scale_down_preconditions,
    scale_up_preconditions,
)
from dbellquant.verify import HAND_SPEC

# worked example: n = 8, one outlier of 4, normals summing to zero
HAND_UP = (10.5, 8.75)
HAND_DOWN = (5.25, 4.375)


def test_hand_example_scale_up():
    rep = check_scale_up(HAND_SPEC, 1.5)
    assert rep.status == "passed"
    assert rep.original_error == pytest.approx(HAND_UP[0])
    assert rep.scaled_error == pytest.approx(HAND_UP[1])


def test_hand_example_scale_down():
    rep = check_scale_down(HAND_SPEC, 1 / 1.5)
    assert rep.status == "passed"
    assert rep.original_error == pytest.approx(HAND_DOWN[0])
    assert rep.scaled_error == pytest.approx(HAND_DOWN[1])


def test_hand_example_closed_form():
    assert closed_form_errors(8, 1, 4.0, "up", 1.5) == pytest.approx(HAND_UP)
    assert closed_form_errors(8, 1, 4.0, "down", 1 / 1.5) == pytest.approx(HAND_DOWN)
    # levels (A/n)(3 - 2r) and (A/n)(2r - 1) with r = 1/8
    r = 1 / 8
    assert 0.5 * (3 - 2 * r) == 1.375 and 0.5 * (2 * r - 1) == -0.375


def test_closed_form_kind():
    with pytest.raises(ValueError):
        closed_form_errors(8, 1, 4.0, "sideways", 1.0)


@given(st.integers(0, 2 ** 32 - 1), st.floats(1.01, 1.99))
def test_scale_up_matches_closed_form(seed, eta):
    spec = random_outlier_spec(np.random.default_rng(seed))
    rep = check_scale_up(spec, eta)
    assert rep.status == "passed"
    orig, scaled = closed_form_errors(spec.n, spec.k, spec.total, "up", eta)
    assert rep.original_error == pytest.approx(orig, rel=1e-7, abs=1e-9)
    assert rep.scaled_error == pytest.approx(scaled, rel=1e-7, abs=1e-9)


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.51, 0.99))
def test_scale_down_matches_closed_form(seed, gamma):
    spec = random_outlier_spec(np.random.default_rng(seed))
    rep = check_scale_down(spec, gamma)
    assert rep.status == "passed"
    orig, scaled = closed_form_errors(spec.n, spec.k, spec.total, "down", gamma)
    assert rep.original_error == pytest.approx(orig, rel=1e-7, abs=1e-9)
    assert rep.scaled_error == pytest.approx(scaled, rel=1e-7, abs=1e-9)


def test_identity_factor_is_not_a_strict_improvement():
    rep = check_scale_up(HAND_SPEC, 1.0)
    assert rep.status == "failed" and rep.scaled_error == pytest.approx(rep.original_error)


@pytest.mark.parametrize("spec, problem", [
    (OutlierVectorSpec((4.0, -4.0), (0.0,) * 6), "share one sign"),
    (OutlierVectorSpec((4.0,) * 4, (0.0,) * 4), "k < n/2"),
    (OutlierVectorSpec((4.0,), (0.1,) + (0.0,) * 6), "sum to zero"),
    (OutlierVectorSpec((4.0,), (0.6, -0.6) + (0.0,) * 5), "below |A|/n"),
])
def test_preconditions_reported_unmet(spec, problem):
    assert any(problem in p for p in scale_up_preconditions(spec, 1.5))
    assert check_scale_up(spec, 1.5).status == UNMET


def test_scale_down_precondition_on_gamma():
    assert scale_down_preconditions(HAND_SPEC, 0.4)
    assert not scale_down_preconditions(HAND_SPEC, 0.7)
    assert scale_up_preconditions(HAND_SPEC, 2.5)


def test_outlier_spec_validation():
    with pytest.raises(ValueError):
        OutlierVectorSpec((), (1.0,))
    s = OutlierVectorSpec((1, 2), (0.5, -0.5))
    assert (s.n, s.k, s.total) == (4, 2, 3.0)


@given(st.integers(1, 50), st.integers(0, 10 ** 6))
def test_antisymmetric_normals_sum_to_zero(count, seed):
    v = antisymmetric_normals(count, 0.3, np.random.default_rng(seed))
    assert v.size == count and math.fsum(v) == 0.0 and np.all(np.abs(v) <= 0.3)


def test_dual_bell_spec_validation():
    with pytest.raises(ValueError):
        DualBellSpec(1.5, 0, 0, 1, 1)
    with pytest.raises(ValueError):
        DualBellSpec(0.5, 0, 0, 0, 1)
    assert DualBellSpec(0.5, -1, 1, 0.05, 0.05).second_moment == pytest.approx(1.0025)


def test_dual_bell_pi_one_is_first_component():
    v = gen_dual_bell(20000, DualBellSpec(1.0, 3.0, -3.0, 0.5, 0.1), seed=0)
    assert v.mean() == pytest.approx(3.0, abs=0.02) and v.std() == pytest.approx(0.5, abs=0.02)


def test_compare_bells_separated():
    r = compare_bell_errors(128, 300, seed=0)
    assert r["dual_better"] and r["separated"] and r["warning"] is None
    # separated modes at +-1 with small spread: error is close to sigma^2
    assert r["dual_mse"] < 0.01 < r["single_mse"]


def test_compare_bells_warns_on_moment_gap():
    with pytest.warns(UserWarning, match="second moments"):
        r = compare_bell_errors(32, 10, dual=DualBellSpec(0.5, -3, 3, 0.1, 0.1), seed=0)
    assert r["warning"]


def test_compare_bells_validation():
    with pytest.raises(ValueError):
        compare_bell_errors(0, 10)


def test_outlier_columns():
    assert outlier_columns(128, 0.01, seed=0).size == 1
    assert outlier_columns(10, 0.0, seed=0).size == 0
    idx = outlier_columns(200, 0.05, seed=3)
    assert idx.size == 10 and np.all(np.diff(idx) > 0)
    with pytest.raises(ValueError):
        outlier_columns(10, 1.5)


def test_calibration_outliers_are_scaled():
    X, idx = gen_calibration_with_outliers(2000, 50, 0.04, 20.0, seed=1, return_columns=True)
    std = X.std(axis=0)
    assert np.all(std[idx] > 15) and np.all(np.delete(std, idx) < 1.2)
    X2 = gen_calibration_with_outliers(2000, 50, 0.04, 20.0, seed=np.random.SeedSequence(1))
    np.testing.assert_array_equal(X, X2)
