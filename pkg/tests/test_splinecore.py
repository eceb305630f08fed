"""Univariate B-spline machinery."""
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.interpolate import BSpline

from igacohom.splinecore import (
    KnotVector,
    ReducedKnotVector,
    basis_funs,
    collocation_matrix,
    curry_schoenberg_matrix,
    derivative_incidence,
    eval_bspline,
    eval_curry_schoenberg,
    find_span,
    gauss_rule,
    graded_knots,
    greville_points,
    incidence_1d,
    uniform_knots,
)


def cox_de_boor(t, i, p, x):
    """Textbook recursion (0-based ``i``), exact when fed Fractions."""
    if p == 0:
        return Fraction(1) if t[i] <= x < t[i + 1] else Fraction(0)
    out = Fraction(0)
    if t[i + p] != t[i]:
        out += (x - t[i]) / (t[i + p] - t[i]) * cox_de_boor(t, i, p - 1, x)
    if t[i + p + 1] != t[i + 1]:
        out += (t[i + p + 1] - x) / (t[i + p + 1] - t[i + 1]) * cox_de_boor(t, i + 1, p - 1, x)
    return out


@st.composite
def knot_vectors(draw, max_degree=5):
    p = draw(st.integers(1, max_degree))
    inner = draw(st.lists(st.sampled_from([0.125, 0.25, 0.375, 0.5, 0.625, 0.75]), max_size=6))
    inner = sorted(inner)
    # keep interior multiplicity <= p so the space stays C^0
    vals, counts = np.unique(inner, return_counts=True)
    inner = [v for v, c in zip(vals, counts) for _ in range(min(c, p))]
    return KnotVector(p, [0.0] * (p + 1) + inner + [1.0] * (p + 1))


class TestKnotVector:
    def test_open_uniform(self):
        kv = uniform_knots(2, 2)
        np.testing.assert_array_equal(kv.knots, [0, 0, 0, 0.5, 1, 1, 1])
        assert kv.n == 4
        assert kv.num_elements == 2

    @pytest.mark.parametrize("knots, p", [
        ([0, 0, 1], 1),  # too short
        ([0, 0, 0.5, 0.2, 1, 1], 1),  # decreasing
        ([0, 1, 1, 1], 1),  # not open at 0
        ([0, 0, 0, 1, 1], 1),  # 0 repeated p+2 times
        ([0, 0, 1, 2, 2], 1),  # outside [0, 1]
    ])
    def test_invalid(self, knots, p):
        with pytest.raises(ValueError):
            KnotVector(p, knots)

    def test_reduced(self):
        kv = KnotVector(2, [0, 0, 0, 0.5, 1, 1, 1])
        red = kv.reduced()
        assert isinstance(red, ReducedKnotVector)
        assert red.degree == 1
        np.testing.assert_array_equal(red.knots, [0, 0, 0.5, 1, 1])
        assert red.n == kv.n - 1
        assert len(red.knots) == kv.n + kv.degree - 1

    def test_refine_halves_elements(self):
        kv = uniform_knots(3, 2).refine()
        np.testing.assert_allclose(kv.breaks, [0, 0.25, 0.5, 0.75, 1])

    def test_graded_is_symmetric_and_clustered(self):
        kv = graded_knots(2, 4, ratio=2.0)
        b = kv.breaks
        np.testing.assert_allclose(b, 1 - b[::-1], atol=1e-15)
        h = np.diff(b)
        assert h[0] < h[1]
        assert graded_knots(2, 4, 1.0) == uniform_knots(2, 4)


class TestEvaluation:
    def test_hat_midpoint(self):
        assert eval_bspline(KnotVector(1, [0, 0, 1, 1]), 1, 0.5) == 0.5

    def test_against_exact_recursion(self):
        # B_2 on {0,0,0,1/2,1,1,1} at 1/4 evaluated in rational arithmetic
        t = [Fraction(0)] * 3 + [Fraction(1, 2)] + [Fraction(1)] * 3
        exact = cox_de_boor(t, 1, 2, Fraction(1, 4))
        assert exact == Fraction(5, 8)
        kv = KnotVector(2, [0, 0, 0, 0.5, 1, 1, 1])
        assert eval_bspline(kv, 2, 0.25) == pytest.approx(0.625, abs=1e-15)

    def test_last_function_at_one(self):
        kv = uniform_knots(3, 3)
        assert eval_bspline(kv, kv.n, 1.0) == pytest.approx(1.0)
        assert eval_bspline(kv, 1, 1.0) == 0.0

    def test_index_errors(self):
        kv = uniform_knots(2, 1)
        with pytest.raises(IndexError):
            eval_bspline(kv, 0, 0.5)
        with pytest.raises(IndexError):
            eval_bspline(kv, kv.n + 1, 0.5)
        with pytest.raises(IndexError):
            eval_curry_schoenberg(kv, kv.n, 0.5)
        with pytest.raises(ValueError):
            eval_bspline(kv, 1, 1.5)

    def test_span_at_repeated_knots(self):
        kv = KnotVector(2, [0, 0, 0, 0.5, 0.5, 1, 1, 1])
        np.testing.assert_array_equal(find_span(kv, [0.0, 0.49, 0.5, 1.0]), [2, 2, 4, 4])

    @settings(max_examples=40, deadline=None)
    @given(knot_vectors(), st.integers(0, 2**31 - 1))
    def test_matches_scipy(self, kv, seed):
        x = np.random.default_rng(seed).uniform(0, 1, 50)
        ours = collocation_matrix(kv, x).toarray()
        ref = BSpline.design_matrix(x, kv.knots, kv.degree).toarray()
        np.testing.assert_allclose(ours, ref, atol=1e-13)

    def test_partition_of_unity_1000_points(self):
        rng = np.random.default_rng(1)
        for p in range(1, 6):
            kv = KnotVector(p, [0] * (p + 1) + sorted(rng.uniform(0, 1, 5)) + [1] * (p + 1))
            x = rng.uniform(0, 1, 1000)
            s = np.asarray(collocation_matrix(kv, x).sum(axis=1)).ravel()
            assert np.max(np.abs(s - 1)) < 1e-12

    @settings(max_examples=30, deadline=None)
    @given(knot_vectors(), st.floats(0, 1))
    def test_local_support(self, kv, x):
        t = kv.knots
        vals = collocation_matrix(kv, [x]).toarray()[0]
        for i in range(kv.n):
            if x < t[i] or x > t[i + kv.degree + 1]:
                assert vals[i] == 0.0

    def test_basis_funs_derivatives(self):
        kv = uniform_knots(3, 4)
        x = np.linspace(0.01, 0.99, 17)
        span, vals = basis_funs(kv, x, nderiv=1)
        assert vals.shape == (2, x.size, kv.degree + 1)
        np.testing.assert_allclose(vals[1].sum(axis=1), 0, atol=1e-12)


class TestCurrySchoenberg:
    def test_lowest_order_is_one(self):
        kv = KnotVector(1, [0, 0, 1, 1])
        for x in (0.1, 0.5, 0.9):
            assert eval_curry_schoenberg(kv, 1, x) == pytest.approx(1.0)

    def test_quadratic_value(self):
        # 2 * B_1^1(0.5) on {0,0,1,1}
        kv = KnotVector(2, [0, 0, 0, 1, 1, 1])
        assert eval_curry_schoenberg(kv, 1, 0.5) == pytest.approx(1.0)

    @pytest.mark.parametrize("p", [1, 2, 3, 4, 5])
    def test_unit_integral(self, p):
        kv = KnotVector(p, [0] * (p + 1) + [0.2, 0.5, 0.5, 0.7][: max(p, 1)] + [1] * (p + 1))
        x, w = gauss_rule(kv, p + 2)
        integrals = curry_schoenberg_matrix(kv, x).T @ w
        np.testing.assert_allclose(integrals, 1.0, rtol=1e-13)

    def test_scale_uses_parent_knots(self):
        kv = KnotVector(2, [0, 0, 0, 0.25, 1, 1, 1])
        # p / (xi_{i+p} - xi_i) for i = 2..n of the parent vector
        np.testing.assert_allclose(kv.reduced().scale, [2 / 0.25, 2 / 1.0, 2 / 0.75])


class TestIncidence:
    def test_three(self):
        np.testing.assert_array_equal(derivative_incidence(uniform_knots(2, 1)).toarray(), [[-1, 1, 0], [0, -1, 1]])

    def test_structure(self):
        G = incidence_1d(7)
        assert G.shape == (6, 7)
        np.testing.assert_array_equal(np.diff(G.indptr), 2)
        np.testing.assert_array_equal(np.asarray(G.sum(axis=1)).ravel(), 0)
        assert G.dtype.kind == "i"

    def test_constant_in_kernel(self):
        kv = uniform_knots(3, 5)
        np.testing.assert_array_equal(derivative_incidence(kv) @ np.ones(kv.n), 0)

    @pytest.mark.parametrize("p", [1, 2, 3, 4, 5])
    def test_derivative_identity(self, p):
        """Derivative through G and Curry-Schoenberg values vs central differences."""
        rng = np.random.default_rng(p)
        for _ in range(10):
            inner = np.sort(rng.uniform(0.05, 0.95, 3))
            kv = KnotVector(p, [0] * (p + 1) + list(inner) + [1] * (p + 1))
            u = rng.normal(size=kv.n)
            x = rng.uniform(0.02, 0.98, 25)
            x = x[np.min(np.abs(x[:, None] - inner[None, :]), axis=1) > 1e-4]
            h = 1e-6
            fd = (collocation_matrix(kv, x + h) @ u - collocation_matrix(kv, x - h) @ u) / (2 * h)
            dv = curry_schoenberg_matrix(kv, x) @ (derivative_incidence(kv) @ u)
            np.testing.assert_allclose(dv, fd, atol=1e-6 * max(1.0, np.abs(fd).max()))


class TestGreville:
    def test_quadratic(self):
        np.testing.assert_allclose(greville_points(KnotVector(2, [0, 0, 0, 1, 1, 1])), [0, 0.5, 1])

    def test_linear(self):
        np.testing.assert_allclose(greville_points(KnotVector(1, [0, 0, 0.5, 1, 1])), [0, 0.5, 1])

    def test_cubic(self):
        g = greville_points(KnotVector(3, [0, 0, 0, 0, 0.5, 1, 1, 1, 1]))
        np.testing.assert_allclose(g, [0, 1 / 6, 1 / 2, 5 / 6, 1], atol=1e-15)

    def test_degree_zero(self):
        with pytest.raises(ValueError):
            greville_points(KnotVector(0, [0, 0.5, 1]))

    @settings(max_examples=30, deadline=None)
    @given(knot_vectors())
    def test_monotone_endpoints(self, kv):
        g = greville_points(kv)
        assert g[0] == 0.0 and g[-1] == 1.0
        assert np.all(np.diff(g) > 0)
