"""Univariate spline kernel tests: evaluation, refinement, two-scale."""

import numpy as np
import pytest
from scipy.interpolate import BSpline

from thbfrac.splines import (
    KnotVector, eval_univariate, two_scale_matrix, two_scale_row, gauss_points,
)


def scipy_basis(kv, i, x):
    """Independent evaluation oracle via scipy.interpolate.BSpline."""
    c = np.zeros(kv.nfuncs)
    c[i] = 1.0
    return BSpline(kv.knots, c, kv.degree, extrapolate=False)(x)


def test_interior_midspan_values():
    kv = KnotVector.uniform_open(2, 8)
    span, ders = eval_univariate(kv, 9 / 16, nders=0)
    assert np.allclose(ders[0], [1 / 8, 3 / 4, 1 / 8], atol=1e-15)


def test_clamped_end_midspan_values():
    kv = KnotVector.uniform_open(2, 8)
    span, ders = eval_univariate(kv, 1 / 16, nders=0)
    assert np.allclose(ders[0], [1 / 4, 5 / 8, 1 / 8], atol=1e-15)
    # independent check with the scipy implementation
    vals = [scipy_basis(kv, span - 2 + j, 1 / 16) for j in range(3)]
    assert np.allclose(ders[0], vals, atol=1e-14)


def test_partition_of_unity():
    kv = KnotVector.uniform_open(2, 8)
    rng = np.random.default_rng(0)
    for x in rng.uniform(0, 1, 1000):
        _, ders = eval_univariate(kv, x, nders=2)
        assert abs(ders[0].sum() - 1.0) <= 1e-12
        assert abs(ders[1].sum()) <= 1e-10
        assert abs(ders[2].sum()) <= 1e-9


def test_derivatives_match_finite_differences():
    kv = KnotVector.uniform_open(2, 8)
    rng = np.random.default_rng(3)
    h = 1e-6
    for x in rng.uniform(0.05, 0.95, 50):
        span, ders = eval_univariate(kv, x, nders=2)
        # compare only when the three evaluations share a span
        if eval_univariate(kv, x + h)[0] != span or eval_univariate(kv, x - h)[0] != span:
            continue
        _, dp = eval_univariate(kv, x + h, nders=0)
        _, dm = eval_univariate(kv, x - h, nders=0)
        fd1 = (dp[0] - dm[0]) / (2 * h)
        fd2 = (dp[0] - 2 * ders[0] + dm[0]) / h ** 2
        assert np.allclose(ders[1], fd1, rtol=1e-5, atol=1e-4)
        assert np.allclose(ders[2], fd2, rtol=1e-3, atol=1e-2)


def test_domain_error_outside_range():
    kv = KnotVector.uniform_open(2, 4)
    with pytest.raises(ValueError):
        eval_univariate(kv, 1.5)
    with pytest.raises(ValueError):
        eval_univariate(kv, -0.1)


def test_dyadic_refine_single_interior_knot():
    kv = KnotVector(2, [0, 0, 0, 0.5, 1, 1, 1])
    ref = kv.dyadic_refine()
    assert np.allclose(ref.knots, [0, 0, 0, 0.25, 0.5, 0.75, 1, 1, 1])


def test_dyadic_refine_eighth_spacing():
    kv = KnotVector.uniform_open(2, 8)
    ref = kv.dyadic_refine()
    assert ref.ncells == 16
    assert np.allclose(np.diff(ref.breakpoints), 1 / 16)
    # ends keep multiplicity p+1
    assert np.all(ref.knots[:3] == 0) and np.all(ref.knots[-3:] == 1)


def test_dyadic_refine_twice_one_span():
    kv = KnotVector.uniform_open(2, 1)
    assert kv.dyadic_refine().dyadic_refine().ncells == 4


def test_two_scale_p1_hat():
    c = KnotVector.uniform_open(1, 4)
    row = two_scale_row(c, c.dyadic_refine(), 2)
    assert row == [(3, 0.5), (4, 1.0), (5, 0.5)]


def test_two_scale_p2_interior_and_end():
    c = KnotVector.uniform_open(2, 8)
    f = c.dyadic_refine()
    interior = two_scale_row(c, f, 4)
    assert [j for j, _ in interior] == [6, 7, 8, 9]
    assert np.allclose([v for _, v in interior], [0.25, 0.75, 0.75, 0.25])
    first = two_scale_row(c, f, 0)
    assert first[0] == (0, 1.0) and first[1] == (1, 0.5)


def test_two_scale_reproduces_coarse_basis():
    c = KnotVector.uniform_open(2, 8)
    f = c.dyadic_refine()
    S = two_scale_matrix(c, f).toarray()
    rng = np.random.default_rng(5)
    xs = rng.uniform(0, 1, 100)
    for i in range(c.nfuncs):
        coarse_vals = scipy_basis(c, i, xs)
        fine_vals = sum(S[i, j] * scipy_basis(f, j, xs) for j in range(f.nfuncs))
        assert np.abs(coarse_vals - fine_vals).max() <= 1e-12


def test_two_scale_row_index_error():
    c = KnotVector.uniform_open(2, 4)
    with pytest.raises(IndexError):
        two_scale_row(c, c.dyadic_refine(), 99)


def test_knot_vector_validation():
    with pytest.raises(ValueError):
        KnotVector(2, [0, 0, 1, 1])  # end multiplicity too low
    with pytest.raises(ValueError):
        KnotVector(2, [0, 0, 0, 0.6, 0.4, 1, 1, 1])  # decreasing


def test_gauss_points_integrate_polynomials():
    x, w = gauss_points(3)
    # degree 2p+1 = 5 integrated exactly on [0,1]
    for k in range(6):
        assert abs((w * x ** k).sum() - 1 / (k + 1)) < 1e-13
