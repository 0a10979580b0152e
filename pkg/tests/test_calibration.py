import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from obr.calibration import activation_stats, build_hessian, gen_calibration
from obr.core import row_objective


class TestBuildHessian:
    def test_identity_activations(self):
        h = build_hessian(np.eye(2), 0.0)
        np.testing.assert_array_equal(h.h, [[2.0, 0.0], [0.0, 2.0]])
        assert h.damp_lambda == 0.0
        assert h.source_samples == 2

    def test_single_sample_damped(self):
        h = build_hessian([[1.0], [1.0]], 0.01)
        assert h.damp_lambda == pytest.approx(0.02)
        np.testing.assert_allclose(h.h, [[2.02, 2.0], [2.0, 2.02]], rtol=1e-15)
        scipy.linalg.cholesky(h.h)

    def test_rank_deficient_escalates(self):
        x = np.random.default_rng(3).standard_normal((4, 10))
        x[3] = x[1]
        h = build_hessian(x, 0.0)
        assert h.damp_lambda > 0
        assert np.min(np.linalg.eigvalsh(h.h)) > 0

    def test_all_zero_activations(self):
        h = build_hessian(np.zeros((3, 4)), 0.01)
        np.testing.assert_allclose(h.h, 0.01 * np.eye(3))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            build_hessian([[1.0, np.nan]])

    def test_rejects_negative_damping(self):
        with pytest.raises(ValueError):
            build_hessian(np.eye(2), -1.0)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 8)),
                  elements=st.floats(-1e3, 1e3)))
    def test_symmetric_pd_for_all_finite_inputs(self, x):
        h = build_hessian(x, 0.01).h
        np.testing.assert_allclose(h, h.T, rtol=1e-10, atol=0)
        scipy.linalg.cholesky(h)


def test_objective_equals_squared_output_error():
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = rng.standard_normal((8, 20))
        h = build_hessian(x, 0.0)
        dw = rng.standard_normal(8)
        assert row_objective(dw, h) == pytest.approx(np.sum((dw @ x) ** 2), rel=1e-9)


class TestActivationStats:
    def test_identity(self):
        np.testing.assert_array_equal(activation_stats(np.eye(3)).column_norms, [1, 1, 1])

    def test_pythagorean(self):
        np.testing.assert_array_equal(activation_stats([[3.0, 4.0], [0.0, 0.0]]).column_norms, [5, 0])

    def test_matches_gram_diagonal(self):
        x = np.random.default_rng(1).standard_normal((6, 30))
        norms = activation_stats(x).column_norms
        np.testing.assert_allclose(norms ** 2, np.diag(x @ x.T), rtol=1e-12)


class TestGenCalibration:
    def test_uncorrelated(self):
        x = gen_calibration(4, 1000, 0.0, seed=5)
        cov = np.cov(x)
        off = cov[~np.eye(4, dtype=bool)]
        assert np.all(np.abs(off) < 0.1)

    def test_correlated(self):
        x = gen_calibration(4, 1000, 0.8, seed=5)
        corr = np.corrcoef(x)
        off = corr[~np.eye(4, dtype=bool)]
        assert 0.7 <= off.mean() <= 0.9

    def test_deterministic(self):
        np.testing.assert_array_equal(gen_calibration(5, 20, 0.3, 9), gen_calibration(5, 20, 0.3, 9))

    def test_shape_and_validation(self):
        assert gen_calibration(3, 7, 0.0, 0).shape == (3, 7)
        with pytest.raises(ValueError):
            gen_calibration(3, 7, 1.0, 0)
