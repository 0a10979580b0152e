import numpy as np
import pytest

from obr.calibration import build_hessian


def random_instance(rng, c_in, n_samples=None, damp_ratio=0.01, correlation=0.0):
    """Activations and their damped Hessian."""
    n_samples = n_samples or 2 * c_in
    x = rng.standard_normal((c_in, n_samples))
    if correlation:
        x = np.sqrt(1 - correlation) * x + np.sqrt(correlation) * rng.standard_normal((1, n_samples))
    return x, build_hessian(x, damp_ratio)


def random_partition(rng, c_in, n_retain):
    perm = rng.permutation(c_in)
    return np.sort(perm[:n_retain]), np.sort(perm[n_retain:])


def lstsq_minimizer(x, lam, retain, evict, e):
    """Minimize 1/2 dw (2XX^T + lam I) dw^T over dw_R with dw_E = e.

    Writes the objective as ||dw A||^2 with A = [X, sqrt(lam/2) I] and hands it
    to an SVD least-squares solve; no Cholesky and no Hessian submatrices.
    """
    c_in = x.shape[0]
    a = np.hstack([x, np.sqrt(lam / 2.0) * np.eye(c_in)])
    sol, *_ = np.linalg.lstsq(a[retain].T, -(e @ a[evict]), rcond=None)
    dw = np.zeros(c_in)
    dw[retain] = sol
    dw[evict] = e
    return dw, float(np.sum((dw @ a) ** 2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
