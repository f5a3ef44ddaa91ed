import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def synthetic_layer(seed, rows=128, cols=8, calib_rows=128, outlier_frac=0.01, magnitude=20.0):
    """Gaussian weights plus outlier-bearing calibration, the same recipe as ``--synthetic``."""
    from dbellquant.oracle import gen_calibration_with_outliers, gen_single_bell

    w_seed, x_seed = np.random.SeedSequence(seed).spawn(2)
    W = gen_single_bell(rows * cols, 0.0, 1.0, w_seed).reshape(rows, cols)
    X, idx = gen_calibration_with_outliers(calib_rows, rows, outlier_frac, magnitude, x_seed,
                                           return_columns=True)
    return W, X, idx


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
