"""Univariate B-spline machinery on open knot vectors.

Indices in the public scalar API are 1-based to match the usual
B-spline notation (``B_1 .. B_n``); every array-returning helper is
0-based.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Open knot vector of degree ``degree``.

    Parameters
    ----------
    degree : int
        Polynomial degree ``p``.
    knots : array_like
        Non-decreasing knots in ``[0, 1]`` with the first and last knot
        repeated exactly ``p + 1`` times.
    """

    degree: int
    knots: np.ndarray

    def __post_init__(self):
        p = int(self.degree)
        t = np.asarray(self.knots, dtype=float)
        if p < 0:
            raise ValueError(f"degree must be non-negative, got {p}")
        if t.ndim != 1 or t.size < 2 * (p + 1):
            raise ValueError("knot vector too short for the requested degree")
        if np.any(np.diff(t) < 0):
            raise ValueError("knots must be non-decreasing")
        if t[0] != 0.0 or t[-1] != 1.0:
            raise ValueError("knot vector must span [0, 1]")
        if np.any(t[: p + 1] != 0.0) or np.any(t[-(p + 1):] != 1.0):
            raise ValueError("knot vector is not open")
        if t[p + 1] == 0.0 or t[-(p + 2)] == 1.0:
            raise ValueError("end knots repeated more than p + 1 times")
        t.setflags(write=False)
        object.__setattr__(self, "degree", p)
        object.__setattr__(self, "knots", t)

    def __eq__(self, other):
        if not isinstance(other, KnotVector):
            return NotImplemented
        return self.degree == other.degree and np.array_equal(self.knots, other.knots)

    def __hash__(self):
        return hash((self.degree, self.knots.tobytes()))

    def __repr__(self):
        return f"KnotVector(degree={self.degree}, knots={self.knots.tolist()})"

    @property
    def n(self) -> int:
        """Number of basis functions."""
        return self.knots.size - self.degree - 1

    @cached_property
    def breaks(self) -> np.ndarray:
        """Distinct knot values (element boundaries)."""
        return np.unique(self.knots)

    @property
    def num_elements(self) -> int:
        return self.breaks.size - 1

    def reduced(self) -> "ReducedKnotVector":
        return ReducedKnotVector(self)

    def refine(self) -> "KnotVector":
        """Uniform h-refinement: insert the midpoint of every non-empty span."""
        mids = 0.5 * (self.breaks[:-1] + self.breaks[1:])
        return KnotVector(self.degree, np.sort(np.concatenate([self.knots, mids])))


def uniform_knots(degree: int, num_elements: int) -> KnotVector:
    """Open uniform knot vector with ``num_elements`` equal spans."""
    if num_elements < 1:
        raise ValueError("need at least one element")
    inner = np.linspace(0.0, 1.0, num_elements + 1)[1:-1]
    return KnotVector(degree, np.r_[np.zeros(degree + 1), inner, np.ones(degree + 1)])


def graded_knots(degree: int, num_elements: int, ratio: float = 1.0) -> KnotVector:
    """Open knot vector whose element sizes shrink geometrically towards both ends.

    Consecutive elements differ by the factor ``ratio`` (> 1 grades towards the
    end points); the knot vector is symmetric about 1/2.  ``ratio = 1`` gives
    the uniform knot vector.
    """
    if ratio <= 0:
        raise ValueError("grading ratio must be positive")
    if ratio == 1.0:
        return uniform_knots(degree, num_elements)
    half = num_elements // 2
    sizes = ratio ** np.arange(half)
    mid = [ratio ** half] if num_elements % 2 else []
    widths = np.concatenate([sizes, mid, sizes[::-1]])
    breaks = np.concatenate([[0.0], np.cumsum(widths) / widths.sum()])
    breaks[-1] = 1.0
    inner = breaks[1:-1]
    return KnotVector(degree, np.r_[np.zeros(degree + 1), inner, np.ones(degree + 1)])


@dataclass(frozen=True, eq=False)
class ReducedKnotVector:
    """The knot vector with its first and last entry removed, degree ``p - 1``.

    Basis functions on it are the Curry-Schoenberg splines, i.e. B-splines
    of degree ``p - 1`` scaled to unit integral.
    """

    parent: KnotVector

    def __post_init__(self):
        if self.parent.degree < 1:
            raise ValueError("reduced knot vector needs parent degree >= 1")

    @property
    def degree(self) -> int:
        return self.parent.degree - 1

    @cached_property
    def knots(self) -> np.ndarray:
        t = self.parent.knots[1:-1].copy()
        t.setflags(write=False)
        return t

    @property
    def n(self) -> int:
        return self.parent.n - 1

    @cached_property
    def as_knot_vector(self) -> KnotVector:
        return KnotVector(self.degree, self.knots)

    @cached_property
    def scale(self) -> np.ndarray:
        """Curry-Schoenberg factors ``p / (support length)`` for each function."""
        p = self.parent.degree
        t = self.knots
        widths = t[p: p + self.n] - t[: self.n]
        assert np.all(widths > 0), "zero-width Curry-Schoenberg support"
        return p / widths


def find_span(kv: KnotVector, x) -> np.ndarray:
    """0-based index ``s`` of the span ``[t_s, t_{s+1})`` containing ``x``.

    Right-continuous at interior knots; ``x = 1`` is assigned to the last
    non-empty span.
    """
    t = kv.knots
    p = kv.degree
    x = np.asarray(x, dtype=float)
    s = np.searchsorted(t, x, side="right") - 1
    return np.clip(s, p, kv.n - 1)


def basis_funs(kv: KnotVector, x, nderiv: int = 0):
    """All ``p + 1`` non-vanishing basis functions (and derivatives) at ``x``.

    Returns
    -------
    span : ndarray of int, shape (m,)
        0-based span index; the active functions are ``span-p .. span``.
    values : ndarray, shape (nderiv + 1, m, p + 1)
        ``values[d, j, r]`` is the d-th derivative of ``B_{span-p+r}`` at ``x[j]``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    t = kv.knots
    p = kv.degree
    span = find_span(kv, x)
    m = x.size
    # ndu[j][r] triangular table from the de Boor / Piegl-Tiller recurrence
    ndu = np.zeros((m, p + 1, p + 1))
    ndu[:, 0, 0] = 1.0
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = x - t[span + 1 - j]
        right[:, j] = t[span + j] - x
        saved = np.zeros(m)
        for r in range(j):
            ndu[:, j, r] = right[:, r + 1] + left[:, j - r]
            temp = ndu[:, r, j - 1] / ndu[:, j, r]
            ndu[:, r, j] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        ndu[:, j, j] = saved

    ders = np.zeros((nderiv + 1, m, p + 1))
    ders[0] = ndu[:, :, p]
    if nderiv == 0:
        return span, ders

    a = np.zeros((2, m, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[:] = 0.0
        a[0, :, 0] = 1.0
        for k in range(1, nderiv + 1):
            d = np.zeros(m)
            rk, pk = r - k, p - k
            if r >= k:
                a[s2, :, 0] = a[s1, :, 0] / ndu[:, pk + 1, rk]
                d = a[s2, :, 0] * ndu[:, rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                a[s2, :, j] = (a[s1, :, j] - a[s1, :, j - 1]) / ndu[:, pk + 1, rk + j]
                d = d + a[s2, :, j] * ndu[:, rk + j, pk]
            if r <= pk:
                a[s2, :, k] = -a[s1, :, k - 1] / ndu[:, pk + 1, r]
                d = d + a[s2, :, k] * ndu[:, r, pk]
            ders[k, :, r] = d
            s1, s2 = s2, s1
    fac = p
    for k in range(1, nderiv + 1):
        ders[k] *= fac
        fac *= p - k
    return span, ders


def collocation_matrix(kv: KnotVector, x, nderiv: int = 0) -> sp.csr_matrix:
    """Sparse ``len(x) x n`` matrix of basis values (or the ``nderiv``-th derivative)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    span, vals = basis_funs(kv, x, nderiv)
    p = kv.degree
    rows = np.repeat(np.arange(x.size), p + 1)
    cols = (span[:, None] - p + np.arange(p + 1)[None, :]).ravel()
    return sp.csr_matrix((vals[nderiv].ravel(), (rows, cols)), shape=(x.size, kv.n))


def curry_schoenberg_matrix(kv: KnotVector, x, nderiv: int = 0) -> sp.csr_matrix:
    """Sparse ``len(x) x (n-1)`` matrix of Curry-Schoenberg values on the reduced knots."""
    red = kv.reduced()
    mat = collocation_matrix(red.as_knot_vector, x, nderiv)
    return sp.csr_matrix(mat @ sp.diags(red.scale))


def _check_index(i: int, n: int):
    if not 1 <= i <= n:
        raise IndexError(f"basis index {i} outside 1..{n}")


def eval_bspline(kv: KnotVector, i: int, x: float) -> float:
    """Value of the 1-based basis function ``B_i`` at ``x``."""
    _check_index(i, kv.n)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x={x} outside [0, 1]")
    return float(collocation_matrix(kv, [x])[0, i - 1])


def eval_curry_schoenberg(kv: KnotVector, i: int, x: float) -> float:
    """Value of ``D_i = p / (support length) * B_i^{p-1}`` on the reduced knots."""
    _check_index(i, kv.n - 1)
    return float(curry_schoenberg_matrix(kv, [x])[0, i - 1])


def incidence_1d(n: int) -> sp.csr_matrix:
    """Banded ``(n-1) x n`` difference matrix with rows ``[-1, 1]``."""
    if n < 2:
        raise ValueError("need at least two basis functions")
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr", dtype=np.int64)


def derivative_incidence(kv: KnotVector) -> sp.csr_matrix:
    """Matrix mapping B-spline coefficients to Curry-Schoenberg coefficients of the derivative."""
    return incidence_1d(kv.n)


def greville_points(kv: KnotVector) -> np.ndarray:
    """Knot averages ``(t_{i+1} + ... + t_{i+p}) / p``."""
    p = kv.degree
    if p == 0:
        raise ValueError("Greville points are undefined for degree 0")
    t = kv.knots
    c = np.concatenate([[0.0], np.cumsum(t)])
    g = (c[p + 1: p + 1 + kv.n] - c[1: 1 + kv.n]) / p
    # the first/last averages are exact 0/1, kill rounding noise
    g[0], g[-1] = 0.0, 1.0
    return g


def gauss_rule(kv: KnotVector, npts: int):
    """Gauss-Legendre points/weights on every non-empty span, element-major."""
    xg, wg = np.polynomial.legendre.leggauss(npts)
    b = kv.breaks
    a0, a1 = b[:-1, None], b[1:, None]
    pts = 0.5 * (a1 - a0) * xg[None, :] + 0.5 * (a1 + a0)
    wts = 0.5 * (a1 - a0) * wg[None, :]
    return pts.ravel(), wts.ravel()
