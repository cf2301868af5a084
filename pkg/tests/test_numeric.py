import math

import numpy as np
import pytest

from tlae.errors import NumericError, ShapeError
from tlae.numeric import RngStream, ew, matmul, sample_std_normal


class TestMatmul:
    def test_identity(self):
        m = np.arange(9.0).reshape(3, 3)
        assert np.array_equal(matmul(np.eye(3), m), m)

    def test_hand_case(self):
        out = matmul([[1.0, 2.0], [3.0, 4.0]], [[1.0], [1.0]])
        assert np.array_equal(out, [[3.0], [7.0]])

    def test_zero_annihilates(self):
        m = np.random.default_rng(0).normal(size=(4, 5))
        assert np.array_equal(matmul(np.zeros((3, 4)), m), np.zeros((3, 5)))

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            matmul(np.zeros((2, 3)), np.zeros((2, 2)))

    def test_associativity(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            a = rng.normal(size=(4, 3))
            b = rng.normal(size=(3, 5))
            c = rng.normal(size=(5, 2))
            left = matmul(matmul(a, b), c)
            right = matmul(a, matmul(b, c))
            assert np.max(np.abs(left - right)) < 1e-10 * max(1.0, np.max(np.abs(left)))

    def test_transpose_of_product(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(4, 6))
        b = rng.normal(size=(6, 5))
        assert np.array_equal(a.T.T, a)
        assert np.max(np.abs(matmul(a, b).T - matmul(b.T, a.T))) < 1e-12


class TestElementwise:
    def test_relu(self):
        assert np.array_equal(ew("relu", [[-1.0, 0.0, 2.0]]), [[0.0, 0.0, 2.0]])

    def test_sigmoid_at_zero(self):
        assert ew("sigmoid", [[0.0]])[0, 0] == 0.5

    def test_sigmoid_extremes_stay_finite(self):
        out = ew("sigmoid", [[-800.0, 800.0]])
        assert out[0, 0] == 0.0 and out[0, 1] == 1.0

    def test_tanh_odd(self):
        assert ew("tanh", [[0.0]])[0, 0] == 0.0
        x = np.array([[0.3, -1.2]])
        assert np.allclose(ew("tanh", x), -ew("tanh", -x))

    def test_binary_shape_check(self):
        with pytest.raises(ShapeError):
            ew("add", np.zeros((2, 2)), np.zeros((2, 3)))

    def test_log_domain_error(self):
        with pytest.raises(NumericError):
            ew("log", [[1.0, 0.0]])

    def test_log_matches_exp(self):
        x = np.array([[0.5, 2.0, 7.0]])
        assert np.allclose(ew("exp", ew("log", x)), x)


class TestRngStream:
    def test_deterministic_replay(self):
        a = sample_std_normal(RngStream(123, 4), 5, 6)
        b = sample_std_normal(RngStream(123, 4), 5, 6)
        assert np.array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = sample_std_normal(RngStream(123, 4), 5, 6)
        b = sample_std_normal(RngStream(123, 5), 5, 6)
        assert not np.array_equal(a, b)

    def test_positive_dims_required(self):
        with pytest.raises(ShapeError):
            sample_std_normal(RngStream(0), 0, 3)

    def test_moments_of_large_sample(self):
        draws = sample_std_normal(RngStream(7, 0), 1000, 1000)
        assert abs(draws.mean()) < 0.005
        assert abs(draws.var() - 1.0) < 0.01

    def test_kolmogorov_smirnov_against_normal_cdf(self):
        draws = np.sort(sample_std_normal(RngStream(11, 0), 1000, 1000).ravel())
        n = draws.size
        cdf = 0.5 * (1.0 + np.vectorize(math.erf)(draws / math.sqrt(2.0)))
        upper = np.arange(1, n + 1) / n - cdf
        lower = cdf - np.arange(0, n) / n
        ks = max(upper.max(), lower.max())
        assert ks < 0.002
