"""Tensor-product spline de Rham spaces on a single patch.

DoFs are ordered lexicographically with direction 1 fastest, component
blocks stacked in the order (1, 2, 3).  With that ordering the patch
incidence matrices are literal Kronecker products.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .splinecore import (
    KnotVector,
    basis_funs,
    collocation_matrix,
    curry_schoenberg_matrix,
    greville_points,
    incidence_1d,
)


class DegenerateGeometryError(ValueError):
    """Raised when the geometry map has a non-positive Jacobian determinant."""


# which directions carry the reduced (degree p-1) factor, per form degree and component
_REDUCED = {
    0: [()],
    1: [(0,), (1,), (2,)],
    2: [(1, 2), (0, 2), (0, 1)],
    3: [(0, 1, 2)],
}


@dataclass(frozen=True, eq=False)
class TensorSplineSpace:
    """One of the four spaces ``S_p^k`` on the reference cube."""

    kvs: tuple
    k: int

    def __post_init__(self):
        if self.k not in _REDUCED:
            raise ValueError(f"form degree must be 0..3, got {self.k}")
        if len(self.kvs) != 3:
            raise ValueError("need exactly three knot vectors")

    @property
    def degree(self) -> int:
        return self.kvs[0].degree

    @property
    def reduced_dirs(self):
        return _REDUCED[self.k]

    @cached_property
    def component_shapes(self) -> list:
        out = []
        for red in self.reduced_dirs:
            out.append(tuple(kv.n - (1 if d in red else 0) for d, kv in enumerate(self.kvs)))
        return out

    @cached_property
    def component_dims(self) -> list:
        return [int(np.prod(s)) for s in self.component_shapes]

    @cached_property
    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.component_dims)])

    @property
    def dim(self) -> int:
        return int(self.offsets[-1])

    @property
    def ncomp(self) -> int:
        return len(self.reduced_dirs)

    def factor_matrix(self, comp: int, direction: int, x, nderiv: int = 0) -> sp.csr_matrix:
        """1D evaluation matrix of ``comp`` along ``direction`` at points ``x``."""
        kv = self.kvs[direction]
        if direction in self.reduced_dirs[comp]:
            return curry_schoenberg_matrix(kv, x, nderiv)
        return collocation_matrix(kv, x, nderiv)

    def grid_matrix(self, comp: int, pts: Sequence, deriv=(0, 0, 0)) -> sp.csr_matrix:
        """Evaluation matrix on the tensor grid ``pts[0] x pts[1] x pts[2]`` (dir 1 fastest)."""
        f = [self.factor_matrix(comp, d, pts[d], deriv[d]) for d in range(3)]
        return sp.kron(f[2], sp.kron(f[1], f[0], format="csr"), format="csr")

    def point_matrix(self, comp: int, xi: np.ndarray, deriv=(0, 0, 0)) -> sp.csr_matrix:
        """Evaluation matrix at scattered points ``xi`` of shape (m, 3)."""
        xi = np.atleast_2d(xi)
        f = [self.factor_matrix(comp, d, xi[:, d], deriv[d]) for d in range(3)]
        return _row_kron(f, self.component_shapes[comp])


def _row_kron(factors, shape) -> sp.csr_matrix:
    """Row-wise Kronecker product of three sparse matrices with (m, n_d) shapes."""
    m = factors[0].shape[0]
    n1, n2, _ = shape
    coo = [f.tocsr() for f in factors]
    rows, cols, vals = [], [], []
    for r in range(m):
        a, b, c = (f.getrow(r) for f in coo)
        ia, ib, ic = a.indices, b.indices, c.indices
        va, vb, vc = a.data, b.data, c.data
        idx = ia[None, None, :] + n1 * (ib[None, :, None] + n2 * ic[:, None, None])
        val = va[None, None, :] * vb[None, :, None] * vc[:, None, None]
        rows.append(np.full(idx.size, r))
        cols.append(idx.ravel())
        vals.append(val.ravel())
    if not rows:
        return sp.csr_matrix((0, int(np.prod(shape))))
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(m, int(np.prod(shape))),
    )


def build_space(kvs: Sequence[KnotVector], k: int) -> TensorSplineSpace:
    kvs = tuple(kvs)
    if len(kvs) != 3:
        raise ValueError("need exactly three knot vectors")
    degs = {kv.degree for kv in kvs}
    if len(degs) != 1:
        raise ValueError(f"unequal degrees per direction are unsupported: {sorted(degs)}")
    if kvs[0].degree < 1:
        raise ValueError("degree p >= 1 required")
    return TensorSplineSpace(kvs, k)


def patch_incidence(kvs: Sequence[KnotVector]) -> dict:
    """Kronecker-structured grad/curl/div matrices ``G``, ``C``, ``D`` of a patch."""
    return dict(_patch_incidence(tuple(kv.n for kv in kvs)))


@lru_cache(maxsize=64)
def _patch_incidence(shape) -> tuple:
    n1, n2, n3 = shape
    I = lambda n: sp.identity(n, dtype=np.int64, format="csr")  # noqa: E731
    G1, G2, G3 = incidence_1d(n1), incidence_1d(n2), incidence_1d(n3)

    def k3(a, b, c):
        return sp.kron(a, sp.kron(b, c, format="csr"), format="csr")

    G = sp.vstack([
        k3(I(n3), I(n2), G1),
        k3(I(n3), G2, I(n1)),
        k3(G3, I(n2), I(n1)),
    ], format="csr")

    def z(r, c):
        return sp.csr_matrix((r, c), dtype=np.int64)

    # S^1 component sizes and S^2 component sizes
    e1, e2, e3 = (n1 - 1) * n2 * n3, n1 * (n2 - 1) * n3, n1 * n2 * (n3 - 1)
    f1, f2, f3 = n1 * (n2 - 1) * (n3 - 1), (n1 - 1) * n2 * (n3 - 1), (n1 - 1) * (n2 - 1) * n3
    C = sp.bmat([
        [z(f1, e1), -k3(G3, I(n2 - 1), I(n1)), k3(I(n3 - 1), G2, I(n1))],
        [k3(G3, I(n2), I(n1 - 1)), z(f2, e2), -k3(I(n3 - 1), I(n2), G1)],
        [-k3(I(n3), G2, I(n1 - 1)), k3(I(n3), I(n2 - 1), G1), z(f3, e3)],
    ], format="csr")
    D = sp.hstack([
        k3(I(n3 - 1), I(n2 - 1), G1),
        k3(I(n3 - 1), G2, I(n1 - 1)),
        k3(G3, I(n2 - 1), I(n1 - 1)),
    ], format="csr")
    return (("G", G), ("C", C), ("D", D))


@dataclass(eq=False)
class Patch:
    """Spline/NURBS geometry map of the unit cube.

    ``points`` has shape ``(n1*n2*n3, 3)`` in lexicographic order, direction
    1 fastest.  ``weights`` is ``None`` for a polynomial map.  ``region``
    tags the whole patch as conductor or insulator; ``material`` is a key
    into the material table of the physical configuration.
    """

    kvs: tuple
    points: np.ndarray
    weights: Optional[np.ndarray] = None
    region: str = "insulator"
    material: str = ""
    name: str = ""

    def __post_init__(self):
        if self.region not in ("conductor", "insulator"):
            raise ValueError(f"patch {self.name!r}: region must be 'conductor' or 'insulator', got {self.region!r}")
        self.kvs = tuple(self.kvs)
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        n = int(np.prod([kv.n for kv in self.kvs]))
        if self.points.shape[0] != n:
            raise ValueError(
                f"patch {self.name!r}: {self.points.shape[0]} control points for a map space of dimension {n}"
            )
        if self.weights is not None:
            self.weights = np.asarray(self.weights, dtype=float).ravel()
            if self.weights.size != n:
                raise ValueError(f"patch {self.name!r}: weight count does not match control points")
            if np.any(self.weights <= 0):
                raise ValueError(f"patch {self.name!r}: weights must be strictly positive")

    @property
    def shape(self):
        return tuple(kv.n for kv in self.kvs)

    @property
    def is_conductor(self) -> bool:
        return self.region == "conductor"

    @property
    def is_rational(self) -> bool:
        return self.weights is not None

    def grid_geometry(self, pts, derivatives: bool = True):
        """Map, Jacobian and its determinant on a tensor grid (dir 1 fastest).

        Uses dense sequential contraction of the 1D factors, which is far
        cheaper than forming the 3D Kronecker product for small patches.
        """
        n1, n2, n3 = self.shape
        w = np.ones(n1 * n2 * n3) if self.weights is None else self.weights
        Pw = np.concatenate([self.points * w[:, None], w[:, None]], axis=1).reshape(n3, n2, n1, 4)
        f = [[collocation_matrix(self.kvs[d], pts[d], r).toarray() for r in (0, 1)] for d in range(3)]

        def contract(r1, r2, r3):
            t = np.einsum("ai,kjid->kjad", f[0][r1], Pw)
            t = np.einsum("bj,kjad->kbad", f[1][r2], t)
            t = np.einsum("ck,kbad->cbad", f[2][r3], t)
            return t.reshape(-1, 4)

        v = contract(0, 0, 0)
        W = v[:, 3:]
        x = v[:, :3] / W
        if not derivatives:
            return x, None, None
        cols = []
        for r in [(1, 0, 0), (0, 1, 0), (0, 0, 1)]:
            dv = contract(*r)
            cols.append((dv[:, :3] - x * dv[:, 3:]) / W)
        jac = np.stack(cols, axis=-1)
        return x, jac, np.linalg.det(jac)

    def point_geometry(self, xi):
        """Map, Jacobian and determinant at scattered points ``xi`` of shape (m, 3).

        Gathers the ``(p+1)^3`` active control points of every point and
        contracts them with the dense local basis values.
        """
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        n1, n2, n3 = self.shape
        w = np.ones(n1 * n2 * n3) if self.weights is None else self.weights
        Pw = np.concatenate([self.points * w[:, None], w[:, None]], axis=1).reshape(n3, n2, n1, 4)
        idx, vals = [], []
        for d in range(3):
            span, v = basis_funs(self.kvs[d], xi[:, d], nderiv=1)
            idx.append(span[:, None] - self.kvs[d].degree + np.arange(self.kvs[d].degree + 1))
            vals.append(v)
        loc = Pw[idx[2][:, :, None, None], idx[1][:, None, :, None], idx[0][:, None, None, :]]

        def contract(r1, r2, r3):
            return np.einsum("ma,mb,mc,mcbad->md", vals[0][r1], vals[1][r2], vals[2][r3], loc)

        v = contract(0, 0, 0)
        W = v[:, 3:]
        x = v[:, :3] / W
        cols = []
        for r in [(1, 0, 0), (0, 1, 0), (0, 0, 1)]:
            dv = contract(*r)
            cols.append((dv[:, :3] - x * dv[:, 3:]) / W)
        jac = np.stack(cols, axis=-1)
        return x, jac, np.linalg.det(jac)


def check_jacobian(patch: Patch, detJ: np.ndarray, xi=None):
    bad = np.flatnonzero(detJ <= 0)
    if bad.size:
        where = "" if xi is None else f" at xi={np.round(np.atleast_2d(xi)[bad[0]], 6).tolist()}"
        raise DegenerateGeometryError(
            f"non-positive Jacobian determinant {detJ[bad[0]]:.3e} in patch {patch.name!r}{where}"
        )


def eval_geometry(patch: Patch, xi):
    """Return ``x``, ``J`` and ``detJ`` at one point (or an array of points)."""
    xi_arr = np.atleast_2d(np.asarray(xi, dtype=float))
    if np.any(xi_arr < -1e-14) or np.any(xi_arr > 1 + 1e-14):
        raise ValueError("parametric point outside the closed unit cube")
    xi_arr = np.clip(xi_arr, 0.0, 1.0)
    x, jac, det = patch.point_geometry(xi_arr)
    check_jacobian(patch, det, xi_arr)
    if np.ndim(xi) == 1:
        return x[0], jac[0], float(det[0])
    return x, jac, det


def reference_values(space: TensorSplineSpace, xi) -> np.ndarray:
    """Dense reference basis values, shape (m, dim) for k in {0, 3} and (m, dim, 3) otherwise."""
    xi = np.atleast_2d(xi)
    blocks = [space.point_matrix(c, xi).toarray() for c in range(space.ncomp)]
    if space.k in (0, 3):
        return blocks[0]
    out = np.zeros((xi.shape[0], space.dim, 3))
    for c, b in enumerate(blocks):
        out[:, space.offsets[c]: space.offsets[c + 1], c] = b
    return out


def pullback_basis(patch: Patch, space: TensorSplineSpace, xi) -> np.ndarray:
    """Physical values of every basis function of ``space`` at reference points ``xi``.

    k=0 unchanged, k=1 covariant ``J^{-T} v``, k=2 Piola ``J v / detJ``,
    k=3 ``v / detJ``.
    """
    xi = np.atleast_2d(xi)
    _, jac, det = eval_geometry(patch, xi)
    jac, det = np.atleast_3d(jac).reshape(-1, 3, 3), np.atleast_1d(det)
    ref = reference_values(space, xi)
    if space.k == 0:
        return ref
    if space.k == 3:
        return ref / det[:, None]
    if space.k == 1:
        jinvT = np.linalg.inv(jac).transpose(0, 2, 1)
        return np.einsum("mij,mnj->mni", jinvT, ref)
    return np.einsum("mij,mnj->mni", jac, ref) / det[:, None, None]


@dataclass
class ControlMesh:
    """Local hexahedral control mesh of one patch.

    Cells are listed in the DoF order of the matching space, so the
    DoF-to-cell bijection is the identity; ``dof_to_cell``/``cell_to_dof``
    are kept explicit for callers that permute.
    """

    shape: tuple
    vertices: np.ndarray  # (nv, 3) physical coordinates
    edges: np.ndarray  # (ne, 2) local vertex ids, start -> end along +e_d
    quads: np.ndarray  # (nq, 4) cyclic, normal +e_d
    hexes: np.ndarray  # (nh, 8) VTK hexahedron order
    dof_to_cell: list = field(default_factory=list)
    cell_to_dof: list = field(default_factory=list)


def _lattice(shape):
    n1, n2, n3 = shape
    i3, i2, i1 = np.meshgrid(np.arange(n3), np.arange(n2), np.arange(n1), indexing="ij")
    return i1.ravel(), i2.ravel(), i3.ravel()


def control_mesh(patch: Patch, kvs: Sequence[KnotVector]) -> ControlMesh:
    """Greville control mesh of the discretization ``kvs`` on ``patch``."""
    shape = tuple(kv.n for kv in kvs)
    n1, n2, n3 = shape
    g = [greville_points(kv) for kv in kvs]
    verts, _, _ = patch.grid_geometry(g, derivatives=False)

    def vid(i1, i2, i3):
        return i1 + n1 * (i2 + n2 * i3)

    unit = np.eye(3, dtype=int)
    edges, quads, hexes = [], [], []
    for d in range(3):
        sh = list(shape)
        sh[d] -= 1
        i = np.stack(_lattice(sh), axis=1)
        edges.append(np.stack([vid(*i.T), vid(*(i + unit[d]).T)], axis=1))
    for d in range(3):
        a, b = (d + 1) % 3, (d + 2) % 3
        sh = [n - 1 for n in shape]
        sh[d] += 1
        i = np.stack(_lattice(sh), axis=1)
        quads.append(np.stack([
            vid(*i.T), vid(*(i + unit[a]).T), vid(*(i + unit[a] + unit[b]).T), vid(*(i + unit[b]).T)
        ], axis=1))
    i = np.stack(_lattice([n - 1 for n in shape]), axis=1)
    e0, e1, e2 = unit
    corners = [0 * e0, e0, e0 + e1, e1, e2, e0 + e2, e0 + e1 + e2, e1 + e2]
    hexes = np.stack([vid(*(i + c).T) for c in corners], axis=1)

    edges, quads = np.concatenate(edges), np.concatenate(quads)
    counts = [len(verts), len(edges), len(quads), len(hexes)]
    ident = [np.arange(c) for c in counts]
    return ControlMesh(shape, verts, edges, quads, hexes, ident, [a.copy() for a in ident])
