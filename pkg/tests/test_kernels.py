import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dbellquant import kernels
from dbellquant.binarizer import QuantLayout, channel_stats

needs_cython = pytest.mark.skipif("cython" not in kernels.available_backends(),
                                  reason="compiled kernels not built")


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.get_backend("fortran")


def test_numpy_always_available():
    assert "numpy" in kernels.available_backends()
    assert kernels.BACKEND in kernels.available_backends()


@pytest.mark.parametrize("backend", kernels.available_backends())
def test_block_stats_matches_channel_stats(backend, rng):
    W = rng.standard_normal((23, 4))
    beta, alpha = kernels.block_stats(W, 7, backend=backend)
    for b, (s, e) in enumerate(QuantLayout(7).blocks(23)):
        eb, ea = channel_stats(W[s:e])
        np.testing.assert_allclose(beta[b], eb, rtol=1e-13, atol=1e-15)
        np.testing.assert_allclose(alpha[b], ea, rtol=1e-13, atol=1e-15)


@needs_cython
@given(st.integers(1, 40), st.integers(1, 6), st.integers(1, 16), st.integers(0, 10 ** 6),
       st.booleans(), st.sampled_from([kernels.GRAD_NONE, kernels.GRAD_FROZEN, kernels.GRAD_TRACKED]))
def test_backends_agree(rows, cols, block, seed, l2, mode):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((rows, cols))
    T = np.exp(rng.uniform(-2, 2, rows))
    c = kernels.dual_target(W, T, block, 1e-8, l2, mode, backend="cython")
    n = kernels.dual_target(W, T, block, 1e-8, l2, mode, backend="numpy")
    assert c[0] == pytest.approx(n[0], rel=1e-12, abs=1e-15)
    assert c[1] == pytest.approx(n[1], rel=1e-12, abs=1e-15)
    if mode == kernels.GRAD_NONE:
        assert c[2] is None and n[2] is None
    else:
        scale = np.abs(n[2]).max() + 1e-300
        assert np.abs(c[2] - n[2]).max() <= 1e-10 * scale


@needs_cython
def test_backends_agree_on_ties():
    # exact ties on beta and between centers
    W = np.array([[-1.0, 2.0], [0.0, 2.0], [1.0, 2.0], [0.0, -2.0]])
    for mode in (kernels.GRAD_FROZEN, kernels.GRAD_TRACKED):
        c = kernels.dual_target(W, np.ones(4), 4, 1e-8, False, mode, backend="cython")
        n = kernels.dual_target(W, np.ones(4), 4, 1e-8, False, mode, backend="numpy")
        np.testing.assert_allclose(c[:2], n[:2], rtol=1e-14)
        np.testing.assert_allclose(c[2], n[2], rtol=1e-12, atol=1e-15)


def test_pure_python_fallback_runs_end_to_end():
    code = ("from dbellquant import kernels, verify; assert kernels.BACKEND == 'numpy'; "
            "assert kernels.available_backends() == ['numpy']; "
            "assert verify.gradient(trials=3, layers=2)['passed']")
    env = dict(os.environ, DBQ_PURE_PYTHON="1")
    r = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
