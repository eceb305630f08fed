"""Quadrature assembly of spline mass matrices, stiffness products and loads.

Matrices use a tensor Gauss rule with ``p + 1`` points per element and
direction; loads of analytic fields use ``2(p + 1)`` points (both configurable).  Patch matrices are accumulated on glued DoFs
through the signed local-to-global maps of :class:`CubicalComplex`, in
patch order, so results are bit-reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .derham import TensorSplineSpace, build_space, check_jacobian
from .multipatch import CubicalComplex, MultipatchGeometry, global_incidence
from .splinecore import gauss_rule


@dataclass(eq=False)
class PatchQuadrature:
    pts: list  # per-direction points
    wts: np.ndarray  # tensor weights, dir 1 fastest
    x: np.ndarray
    jac: np.ndarray
    det: np.ndarray

    @property
    def jinv(self) -> np.ndarray:
        return np.linalg.inv(self.jac)

    @property
    def dV(self) -> np.ndarray:
        return self.wts * self.det


def patch_quadrature(geom: MultipatchGeometry, q: int, npts: Optional[int] = None) -> PatchQuadrature:
    kvs = geom.kvs[q]
    npts = npts or kvs[0].degree + 1
    rules = [gauss_rule(kv, npts) for kv in kvs]
    pts = [r[0] for r in rules]
    w = np.kron(rules[2][1], np.kron(rules[1][1], rules[0][1]))
    patch = geom.patches[q]
    x, jac, det = patch.grid_geometry(pts)
    check_jacobian(patch, det)
    return PatchQuadrature(pts, w, x, jac, det)


class Assembler:
    """Caches quadrature data and basis evaluations of a glued geometry."""

    def __init__(self, geom: MultipatchGeometry, cx: CubicalComplex, npts: Optional[int] = None,
                 load_npts: Optional[int] = None):
        self.geom = geom
        self.cx = cx
        self.npts = npts
        self.load_npts = load_npts
        self._quad = {}
        self._eval = {}
        self._inc = None

    @property
    def num_patches(self) -> int:
        return self.geom.num_patches

    def quad(self, q: int) -> PatchQuadrature:
        if q not in self._quad:
            self._quad[q] = patch_quadrature(self.geom, q, self.npts)
        return self._quad[q]

    def space(self, q: int, k: int) -> TensorSplineSpace:
        return build_space(self.geom.kvs[q], k)

    def basis(self, q: int, k: int, deriv=(0, 0, 0)) -> list:
        """Per-component evaluation matrices of S^k on the quadrature grid."""
        key = (q, k, tuple(deriv))
        if key not in self._eval:
            sp_ = self.space(q, k)
            pts = self.quad(q).pts
            self._eval[key] = [sp_.grid_matrix(c, pts, deriv) for c in range(sp_.ncomp)]
        return self._eval[key]

    @property
    def incidence(self) -> dict:
        if self._inc is None:
            self._inc = global_incidence(self.cx)
        return self._inc

    def patches(self, domain) -> list:
        """Patch indices of a domain tag ('V', 'Vc', 'Vi') or an explicit list/mask."""
        if isinstance(domain, str):
            cond = np.array([p.is_conductor for p in self.geom.patches])
            sel = {"V": np.ones_like(cond), "Vc": cond, "Vi": ~cond}[domain]
            return list(np.flatnonzero(sel))
        arr = np.asarray(domain)
        return list(np.flatnonzero(arr)) if arr.dtype == bool else [int(i) for i in arr]

    def _coeff(self, coeff, q: int) -> float:
        if coeff is None:
            return 1.0
        if callable(coeff):
            return float(coeff(q))
        if np.isscalar(coeff):
            return float(coeff)
        return float(np.asarray(coeff)[q])

    def _accumulate(self, k: int, local: list, kk: Optional[int] = None) -> sp.csr_matrix:
        kk = k if kk is None else kk
        n = self.cx.counts
        out = sp.csr_matrix((n[k], n[kk]))
        for q, Mq in local:
            L, R = self.cx.local_map(q, k), self.cx.local_map(q, kk)
            out = out + L.T @ Mq @ R
        return out.tocsr()

    # patch-level kernels --------------------------------------------------

    def _weights(self, q: int, k: int, c: float) -> np.ndarray:
        """Pointwise metric tensor (m, 3, 3) or scalar weight (m,) for S^k."""
        Q = self.quad(q)
        if k == 0:
            return c * Q.wts * Q.det
        if k == 3:
            return c * Q.wts / Q.det
        jtj = np.einsum("mki,mkj->mij", Q.jac, Q.jac)
        if k == 1:
            return c * (Q.wts * Q.det)[:, None, None] * np.linalg.inv(jtj)
        return c * (Q.wts / Q.det)[:, None, None] * jtj

    @staticmethod
    def _block(E: list, F: list, W) -> sp.csr_matrix:
        if np.ndim(W) == 1:
            return (E[0].T @ sp.diags(W) @ F[0]).tocsr()
        blocks = [[E[a].T @ sp.diags(W[:, a, b]) @ F[b] for b in range(3)] for a in range(3)]
        return sp.bmat(blocks, format="csr")

    def patch_mass(self, q: int, k: int, coeff: float = 1.0) -> sp.csr_matrix:
        E = self.basis(q, k)
        return self._block(E, E, self._weights(q, k, coeff))

    # public ----------------------------------------------------------------

    def mass(self, k: int, domain="V", coeff=None) -> sp.csr_matrix:
        """Glued mass matrix of S^k over the patches of ``domain``."""
        local = [(q, self.patch_mass(q, k, self._coeff(coeff, q))) for q in self.patches(domain)]
        return self._accumulate(k, local)

    def stiffness(self, which: str, domain="V", coeff=None) -> sp.csr_matrix:
        """``A0 = G^T M1 G`` or ``A1 = C^T M2 C`` with the glued incidence matrices."""
        if which == "A0":
            G = self.incidence["G"].astype(float)
            return (G.T @ self.mass(1, domain, coeff) @ G).tocsr()
        if which == "A1":
            C = self.incidence["C"].astype(float)
            return (C.T @ self.mass(2, domain, coeff) @ C).tocsr()
        raise ValueError(f"unknown stiffness operator {which!r}")

    def reference_gradient(self, q: int) -> list:
        """Reference gradient components of S^0 from basis derivatives."""
        return [self.basis(q, 0, d)[0] for d in ((1, 0, 0), (0, 1, 0), (0, 0, 1))]

    def reference_curl(self, q: int) -> list:
        """Reference curl components of S^1, each as a matrix over all S^1 DoFs."""
        sp1 = self.space(q, 1)
        n = sp1.component_dims
        m = len(self.quad(q).wts)

        def d(c, r):
            der = [0, 0, 0]
            der[r] = 1
            return self.basis(q, 1, tuple(der))[c]

        Z = [sp.csr_matrix((m, n[c])) for c in range(3)]
        return [
            sp.hstack([Z[0], -d(1, 2), d(2, 1)], format="csr"),
            sp.hstack([d(0, 2), Z[1], -d(2, 0)], format="csr"),
            sp.hstack([-d(0, 1), d(1, 0), Z[2]], format="csr"),
        ]

    def direct_stiffness(self, which: str, domain="V", coeff=None) -> sp.csr_matrix:
        """Independent assembly from basis derivatives (test oracle)."""
        local = []
        for q in self.patches(domain):
            c = self._coeff(coeff, q)
            if which == "A0":
                g = self.reference_gradient(q)
                W = self._weights(q, 1, c)
                Aq = sum(g[a].T @ sp.diags(W[:, a, b]) @ g[b] for a in range(3) for b in range(3))
                local.append((q, Aq.tocsr()))
            else:
                r = self.reference_curl(q)
                W = self._weights(q, 2, c)
                Aq = sum(r[a].T @ sp.diags(W[:, a, b]) @ r[b] for a in range(3) for b in range(3))
                local.append((q, Aq.tocsr()))
        return self._accumulate(0 if which == "A0" else 1, local)

    # loads -----------------------------------------------------------------

    def load_quadrature(self, q: int) -> PatchQuadrature:
        """Over-integrated rule (``2(p + 1)`` points by default) for analytic source fields.

        Not cached: loads are evaluated once per patch and the rule can be large.
        """
        p = self.geom.kvs[q][0].degree
        return patch_quadrature(self.geom, q, self.load_npts or 2 * (p + 1))

    def _project(self, q: int, k: int, comp: int, pts: list, f: np.ndarray, deriv=(0, 0, 0)) -> np.ndarray:
        """``E^T f`` for the tensor evaluation matrix ``E`` of one component, by sum factorization."""
        sp_ = self.space(q, k)
        F = [sp_.factor_matrix(comp, d, pts[d], deriv[d]).toarray() for d in range(3)]
        t = f.reshape(len(pts[2]), len(pts[1]), len(pts[0]))
        t = np.einsum("ai,cba->cbi", F[0], t)
        t = np.einsum("bj,cbi->cji", F[1], t)
        t = np.einsum("ck,cji->kji", F[2], t)
        return t.reshape(-1)

    def load(self, k: int, field: Callable, domain="V", coeff=None, gradient: bool = False) -> np.ndarray:
        """Load vectors of an analytic vector field ``field(x) -> (m, 3)`` (complex allowed).

        k=1: ``int coeff F . w`` over covariant S^1 functions ``w``;
        k=2: ``int coeff F . w`` over Piola S^2 functions;
        k=0 with ``gradient=True``: ``int coeff F . grad w``.
        """
        if k not in (0, 1, 2):
            raise ValueError("loads are defined for k in {0, 1, 2}")
        if k == 0 and not gradient:
            raise ValueError("scalar loads of vector fields need gradient=True")
        out = np.zeros(self.cx.counts[k])
        for q in self.patches(domain):
            Q = self.load_quadrature(q)
            c = self._coeff(coeff, q)
            F = np.asarray(field(Q.x))
            if k == 2:
                ref = np.einsum("mij,mi->mj", Q.jac, F) * (c * Q.wts)[:, None]
            else:
                ref = np.linalg.solve(Q.jac, F[:, :, None])[:, :, 0] * (c * Q.dV)[:, None]  # J^{-1} F
            if k == 0:
                e = np.eye(3, dtype=int)
                vec = sum(self._project(q, 0, 0, Q.pts, ref[:, a], tuple(e[a])) for a in range(3))
            else:
                vec = np.concatenate([self._project(q, k, a, Q.pts, ref[:, a]) for a in range(3)])
            out = out + self.cx.local_map(q, k).T @ vec
        return out

    def scalar_load(self, k: int, func: Callable, domain="V", coeff=None) -> np.ndarray:
        """``int coeff f w`` for S^0 (k=0) or S^3 (k=3) and scalar ``f(x) -> (m,)``."""
        out = np.zeros(self.cx.counts[k])
        for q in self.patches(domain):
            Q = self.load_quadrature(q)
            c = self._coeff(coeff, q)
            f = np.asarray(func(Q.x))
            w = c * Q.wts * (Q.det if k == 0 else 1.0)
            out = out + self.cx.local_map(q, k).T @ self._project(q, k, 0, Q.pts, f * w)
        return out


def assemble_mass(geom, cx, k, domain="V", coeff=None, npts=None) -> sp.csr_matrix:
    return Assembler(geom, cx, npts).mass(k, domain, coeff)


def assemble_stiffness(geom, cx, which, domain="V", coeff=None, npts=None) -> sp.csr_matrix:
    return Assembler(geom, cx, npts).stiffness(which, domain, coeff)
