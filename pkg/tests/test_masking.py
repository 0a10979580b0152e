import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from obr.calibration import ActivationStats, Hessian
from obr.errors import ShapeError
from obr.masking import NM, Unstructured, build_mask, parse_pattern, prune_scores


class TestScores:
    def test_magnitude(self):
        np.testing.assert_array_equal(prune_scores([[-3.0, 1.0]], metric="magnitude"), [[3, 1]])

    def test_wanda(self):
        stats = ActivationStats(np.array([5.0, 0.0]))
        np.testing.assert_array_equal(prune_scores([[1.0, 1.0]], stats=stats, metric="wanda"), [[5, 0]])

    def test_sparsegpt_diagonal(self):
        h = Hessian(np.diag([2.0, 8.0]), 0.0, 1)
        np.testing.assert_allclose(prune_scores([[1.0, 1.0]], hessian=h, metric="sparsegpt"),
                                   [[2.0, 8.0]], rtol=1e-14)

    def test_random_is_seeded(self):
        a = prune_scores(np.ones((3, 4)), metric="random", seed=3)
        np.testing.assert_array_equal(a, prune_scores(np.ones((3, 4)), metric="random", seed=3))
        assert np.all((a >= 0) & (a < 1))

    def test_missing_inputs(self):
        with pytest.raises(ValueError):
            prune_scores(np.ones((1, 2)), metric="wanda")
        with pytest.raises(ValueError):
            prune_scores(np.ones((1, 2)), metric="sparsegpt")
        with pytest.raises(ValueError):
            prune_scores(np.ones((1, 2)), metric="bogus")


class TestBuildMask:
    def test_unstructured_half(self):
        np.testing.assert_array_equal(build_mask([[4, 3, 2, 1]], Unstructured(0.5)).m, [[1, 1, 0, 0]])

    def test_two_four(self):
        np.testing.assert_array_equal(build_mask([[1, 2, 3, 4]], NM(2, 4)).m, [[0, 0, 1, 1]])

    def test_ties_keep_lower_index(self):
        np.testing.assert_array_equal(build_mask([[1, 1, 1, 1]], Unstructured(0.5)).m, [[1, 1, 0, 0]])
        np.testing.assert_array_equal(build_mask([[1] * 8], NM(2, 4)).m, [[1, 1, 0, 0] * 2])

    def test_indivisible(self):
        with pytest.raises(ShapeError, match="C_in=6"):
            build_mask(np.ones((2, 6)), NM(2, 4))

    def test_ratio_zero_and_one(self):
        s = np.random.default_rng(0).random((3, 5))
        assert build_mask(s, Unstructured(0.0)).m.all()
        assert not build_mask(s, Unstructured(1.0)).m.any()

    @pytest.mark.parametrize("text,expected", [
        ("unstructured:0.5", Unstructured(0.5)), ("0.3", Unstructured(0.3)),
        ("2:4", NM(2, 4)), ("4:8", NM(4, 8)),
    ])
    def test_parse(self, text, expected):
        assert parse_pattern(text) == expected
        assert parse_pattern(str(expected)) == expected


_scores = arrays(np.float64, st.tuples(st.integers(1, 5), st.sampled_from([8, 16, 24])),
                 elements=st.floats(-100, 100))


@settings(max_examples=80, deadline=None)
@given(_scores, st.sampled_from([0.0, 0.25, 0.3, 0.5, 0.6, 0.75, 1.0]))
def test_unstructured_exact_count(scores, ratio):
    m = build_mask(scores, Unstructured(ratio)).m
    assert np.all(np.sum(m == 0, axis=1) == math.floor(ratio * scores.shape[1] + 1e-9))


@settings(max_examples=80, deadline=None)
@given(_scores, st.sampled_from([NM(2, 4), NM(4, 8), NM(1, 4)]))
def test_nm_exact_group_count(scores, pattern):
    m = build_mask(scores, pattern).m
    rows, cols = m.shape
    groups = m.reshape(rows, cols // pattern.m, pattern.m)
    assert np.all(np.sum(groups == 0, axis=2) == pattern.n)


@settings(max_examples=60, deadline=None)
@given(_scores, st.sampled_from([Unstructured(0.5), NM(2, 4), NM(4, 8)]))
def test_monotone_transform_invariance(scores, pattern):
    # scaling by a power of two is exact, so no new ties can appear
    a = build_mask(scores, pattern).m
    np.testing.assert_array_equal(a, build_mask(4.0 * scores, pattern).m)


@pytest.mark.parametrize("pattern", [Unstructured(0.5), NM(2, 4), NM(4, 8)])
def test_nonlinear_monotone_transform(pattern):
    scores = np.random.default_rng(8).standard_normal((16, 32))
    a = build_mask(scores, pattern).m
    np.testing.assert_array_equal(a, build_mask(np.exp(scores) * 3.0 + 1.0, pattern).m)


@settings(max_examples=40, deadline=None)
@given(_scores)
def test_four_eight_is_half_unstructured(scores):
    m = build_mask(scores, NM(4, 8)).m
    assert np.all(np.sum(m == 0, axis=1) == scores.shape[1] // 2)
