"""Time-harmonic eddy-current solvers (convention ``exp(+i omega t)``).

The field ``H = H_s + H_r`` is split into a known source field ``H_s``
(curl free in the domain) and a reaction field ``H_r``.  On the outer
boundary ``H_r x n = 0``.

* H-phi: ``H_r`` is an edge field in the conductor and
  ``grad phi + sum c_k h_k`` in the insulator; interface edges are
  eliminated through the substitution operator of ``interface_coupling``.
* T-Omega: ``H_r = T + grad Omega + sum c_k h_k`` with ``T`` on interior
  conductor edges, gauged by a tree rooted on the interface.  The Omega
  rows are divided by ``i omega``, which keeps the system regular at
  ``omega = 0``.
* A-phi: ``mu H = curl A`` with the boundary condition imposed
  naturally, ``E = -i omega A - grad phi`` in the conductor; gauged by a
  spanning tree of the mesh or by a small insulator conductivity.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .assembly import Assembler
from .cohomology import CohomologyBasis, _adjacency, _bfs, build_tree, compute_generators
from .multipatch import CubicalComplex, MultipatchGeometry, TopologyError, glue
from .sources import MU0


class SolverError(RuntimeError):
    pass


class ConstraintConflictError(ValueError):
    pass


class NoConductorError(ValueError):
    pass


@dataclass(frozen=True)
class Material:
    mu: float = MU0
    sigma: float = 0.0


DEFAULT_MATERIALS = {
    "air": Material(MU0, 0.0),
    "copper": Material(MU0, 5.8e7),
    "aluminium": Material(MU0, 3.526e7),
}


@dataclass
class PhysicalConfig:
    omega: float
    materials: dict = field(default_factory=lambda: dict(DEFAULT_MATERIALS))
    source: Optional[Callable] = None
    formulation: str = "hphi"
    gauge: str = "tree"  # A-phi only: 'tree' or 'sigma_reg'
    sigma_reg: Optional[float] = None  # default 1e-6 max sigma when gauge == 'sigma_reg'
    a_boundary: str = "natural"  # A-phi only: 'natural' or 'dirichlet'
    use_generators: bool = True

    def material(self, patch):
        try:
            return self.materials[patch.material]
        except KeyError:
            raise ValueError(f"unknown material label {patch.material!r} in patch {patch.name!r}") from None

    def coefficients(self, geom: MultipatchGeometry) -> tuple:
        mu, sigma = [], []
        for p in geom.patches:
            m = self.material(p)
            if m.mu <= 0:
                raise ValueError(f"material {p.material!r}: permeability must be positive")
            if p.is_conductor and m.sigma <= 0:
                raise ValueError(f"conductor patch {p.name!r} has non-positive conductivity")
            mu.append(m.mu)
            sigma.append(m.sigma if p.is_conductor else 0.0)
        if self.omega < 0:
            raise ValueError("omega must be non-negative")
        return np.array(mu), np.array(sigma)

    def source_field(self, x):
        if self.source is None:
            return np.zeros(np.atleast_2d(x).shape)
        return self.source(x)


@dataclass(eq=False)
class Solution:
    formulation: str
    blocks: dict
    edge_field: np.ndarray  # H_r (hphi/tomega) or A (aphi), glued S^1 coefficients
    e_field: Optional[np.ndarray]  # aphi only: E coefficients in S^1 (valid on the conductor)
    omega: float
    residual: float
    stats: dict
    system: Optional[tuple] = None  # (matrix, right-hand side) as factored

    @property
    def current_coefficients(self) -> Optional[np.ndarray]:
        """Glued S^2 coefficients of ``J = curl H_r`` (H-based formulations)."""
        return self.blocks.get("_J2")


@dataclass(eq=False)
class DofPlan:
    """Substitution ``u = P x`` from reduced unknowns to the glued edge field."""

    P: sp.csr_matrix
    blocks: dict  # name -> slice into x
    index: dict  # name -> cell ids of that block


def _cell_sets(cx: CubicalComplex) -> dict:
    cv, ce = cx.conductor_cells[0], cx.conductor_cells[1]
    iv, ie = cx.insulator_cells[0], cx.insulator_cells[1]
    bv, be = cx.boundary_cells[0], cx.boundary_cells[1]
    return {
        "cond_v": cv, "cond_e": ce, "ins_v": iv, "ins_e": ie, "bnd_v": bv, "bnd_e": be,
        "gam_v": cv & iv, "gam_e": ce & ie,
        "cint_e": ce & ~ie & ~be,
    }


def _generator_matrix(cx, basis: Optional[CohomologyBasis], sets) -> sp.csr_matrix:
    ne = len(cx.edges)
    if basis is None or len(basis) == 0:
        return sp.csr_matrix((ne, 0))
    Hm = basis.coefficient_matrix().T
    if np.any(Hm[sets["bnd_e"]] != 0):
        raise ConstraintConflictError("a cohomology generator is nonzero on a Dirichlet boundary edge")
    return sp.csr_matrix(Hm)


def _stack(cols: list, names: list, index: dict, ne: int) -> DofPlan:
    blocks, start = {}, 0
    for c, n in zip(cols, names):
        blocks[n] = slice(start, start + c.shape[1])
        start += c.shape[1]
    P = sp.hstack(cols, format="csr") if cols else sp.csr_matrix((ne, 0))
    return DofPlan(P, blocks, index)


def interface_coupling(cx: CubicalComplex, G: sp.spmatrix, basis: Optional[CohomologyBasis]) -> DofPlan:
    """H-phi plan: conductor edges kept, insulator edges expressed by ``phi`` and generators."""
    s = _cell_sets(cx)
    ne = len(cx.edges)
    hc = np.flatnonzero(s["cint_e"])
    phi = np.flatnonzero(s["ins_v"] & ~s["bnd_v"])
    Ihc = sp.csr_matrix((np.ones(hc.size), (hc, np.arange(hc.size))), shape=(ne, hc.size))
    Gi = sp.diags(s["ins_e"].astype(float)) @ G.astype(float)[:, phi]
    Hm = _generator_matrix(cx, basis, s)
    return _stack([Ihc, Gi.tocsr(), Hm], ["H_c", "phi", "c"], {"H_c": hc, "phi": phi}, ne)


def t_gauge_tree(cx: CubicalComplex) -> np.ndarray:
    """Tree edges among interior conductor edges, grown from interface and boundary vertices."""
    s = _cell_sets(cx)
    nv = len(cx.vertices)
    ptr, nbr, eid = _adjacency(cx.edges, nv)
    visited = np.zeros(nv, bool)
    parent = np.full(nv, -1)
    pedge = np.full(nv, -1)
    seeds = np.flatnonzero(s["cond_v"] & (s["gam_v"] | s["bnd_v"]))
    _bfs(ptr, nbr, eid, seeds.tolist(), s["cint_e"], visited, parent, pedge, [])
    inner = s["cond_v"] & ~s["gam_v"] & ~s["bnd_v"]
    if np.any(inner & ~visited):
        raise TopologyError("gauge tree does not reach every interior conductor vertex")
    tree = np.zeros(len(cx.edges), bool)
    tree[pedge[pedge >= 0]] = True
    return tree


def t_omega_plan(cx: CubicalComplex, G: sp.spmatrix, basis: Optional[CohomologyBasis]) -> DofPlan:
    s = _cell_sets(cx)
    ne = len(cx.edges)
    tree = t_gauge_tree(cx)
    t = np.flatnonzero(s["cint_e"] & ~tree)
    om = np.flatnonzero(~s["bnd_v"])
    It = sp.csr_matrix((np.ones(t.size), (t, np.arange(t.size))), shape=(ne, t.size))
    Hm = _generator_matrix(cx, basis, s)
    return _stack([It, Hm, G.astype(float)[:, om].tocsr()], ["T", "c", "Omega"], {"T": t, "Omega": om}, ne)


def _factor_solve(S: sp.spmatrix, b: np.ndarray, tol: float = 1e-10) -> tuple:
    """Sparse LU solve with the relative residual.

    The systems are (nearly) structurally symmetric, so a minimum degree
    ordering of ``A^T + A`` with diagonal pivoting is tried first; if its
    residual exceeds ``tol`` the matrix is refactored with COLAMD and
    partial pivoting.
    """
    S = S.tocsc()
    if S.shape[0] == 0:
        return np.zeros(0, complex), 0.0
    nb = np.linalg.norm(b)
    attempts = [dict(permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.01, options=dict(SymmetricMode=True)),
                dict(permc_spec="COLAMD")]
    for i, kw in enumerate(attempts):
        try:
            lu = splu(S, **kw)
        except RuntimeError as exc:
            if i + 1 < len(attempts):
                continue
            raise SolverError(f"sparse factorization failed ({exc}); the system is singular, "
                              f"check that the cohomology generators cover every insulator loop") from None
        x = lu.solve(b)
        res = np.linalg.norm(S @ x - b) / (nb if nb > 0 else 1.0)
        if np.all(np.isfinite(x)) and res <= tol:
            break
    if not np.all(np.isfinite(x)):
        raise SolverError("solution is not finite; the system is numerically singular")
    return x, float(res)


class EddyCurrentProblem:
    """Glued geometry, material coefficients and cached operators."""

    def __init__(self, geom: MultipatchGeometry, config: PhysicalConfig, cx: Optional[CubicalComplex] = None,
                 basis: Optional[CohomologyBasis] = None):
        self.geom = geom
        self.config = config
        self.cx = cx if cx is not None else glue(geom)
        self.mu, self.sigma = config.coefficients(geom)
        self.asm = Assembler(geom, self.cx)
        self._basis = basis
        self._ops = {}

    @property
    def has_conductor(self) -> bool:
        return bool(self.cx.hex_conductor.any())

    @property
    def basis(self) -> CohomologyBasis:
        if self._basis is None:
            self._basis = compute_generators(self.cx).basis
        return self._basis

    @property
    def G(self):
        return self.asm.incidence["G"].astype(float)

    @property
    def C(self):
        return self.asm.incidence["C"].astype(float)

    def op(self, name: str):
        if name not in self._ops:
            a = self.asm
            rho = np.where(self.sigma > 0, 1.0 / np.where(self.sigma > 0, self.sigma, 1.0), 0.0)
            if name == "K_rho":
                val = (self.C.T @ a.mass(2, "Vc", rho) @ self.C).tocsr()
            elif name == "M_mu":
                val = a.mass(1, "V", self.mu)
            elif name == "m_s":
                val = a.load(1, self.config.source_field, "V", self.mu)
            elif name == "K_nu":
                val = (self.C.T @ a.mass(2, "V", 1.0 / self.mu) @ self.C).tocsr()
            elif name == "M_sigma":
                val = a.mass(1, "Vc", self.sigma)
            elif name == "curl_load":
                val = self.C.T @ a.load(2, self.config.source_field, "V")
            else:
                raise KeyError(name)
            self._ops[name] = val
        return self._ops[name]


def _require_conductor(prob: EddyCurrentProblem):
    if not prob.has_conductor:
        raise NoConductorError("no conductor: the geometry has no patch with region 'conductor'")


def _h_generators(prob: EddyCurrentProblem) -> Optional[CohomologyBasis]:
    return prob.basis if prob.config.use_generators else None


def solve_h_phi(prob: EddyCurrentProblem) -> Solution:
    """H-phi solve; without conductors the system reduces to the weighted Laplacian in ``phi``."""
    w = prob.config.omega
    if w <= 0:
        raise ValueError("H-phi needs omega > 0")
    t0 = time.perf_counter()
    plan = interface_coupling(prob.cx, prob.G, _h_generators(prob))
    A = prob.op("K_rho") + 1j * w * prob.op("M_mu")
    f = -1j * w * prob.op("m_s")
    P = plan.P
    S = (P.T @ A @ P).tocsr()
    b = P.T @ f
    x, res = _factor_solve(S, b)
    u = P @ x
    blocks = {k: x[v] for k, v in plan.blocks.items()}
    blocks["_J2"] = prob.C @ u
    stats = {"unknowns": S.shape[0], "nnz": S.nnz, "time": time.perf_counter() - t0}
    return Solution("hphi", blocks, u, None, w, res, stats, (S, b))


def solve_t_omega(prob: EddyCurrentProblem) -> Solution:
    _require_conductor(prob)
    w = prob.config.omega
    t0 = time.perf_counter()
    plan = t_omega_plan(prob.cx, prob.G, _h_generators(prob))
    P = plan.P
    K, M, ms = prob.op("K_rho"), prob.op("M_mu"), prob.op("m_s")
    sl = plan.blocks["Omega"]
    Ptc = P[:, : sl.start]
    Pom = P[:, sl]
    top = sp.hstack([Ptc.T @ (K + 1j * w * M) @ Ptc, 1j * w * (Ptc.T @ M @ Pom)])
    bot = sp.hstack([Pom.T @ M @ Ptc, Pom.T @ M @ Pom])
    S = sp.vstack([top, bot]).tocsr()
    b = np.concatenate([-1j * w * (Ptc.T @ ms), -(Pom.T @ ms)]).astype(complex)
    x, res = _factor_solve(S, b)
    u = P @ x
    blocks = {k: x[v] for k, v in plan.blocks.items()}
    blocks["_J2"] = prob.C @ u
    stats = {"unknowns": S.shape[0], "nnz": S.nnz, "time": time.perf_counter() - t0}
    return Solution("tomega", blocks, u, None, w, res, stats, (S, b))


def solve_a_phi(prob: EddyCurrentProblem) -> Solution:
    _require_conductor(prob)
    cfg = prob.config
    w = cfg.omega
    if w <= 0:
        raise ValueError("A-phi needs omega > 0")
    t0 = time.perf_counter()
    cx = prob.cx
    s = _cell_sets(cx)
    ne = len(cx.edges)
    K = prob.op("K_nu")
    rhs_a = prob.op("curl_load")
    dirichlet = cfg.a_boundary == "dirichlet"
    if cfg.a_boundary not in ("natural", "dirichlet"):
        raise ValueError(f"unknown boundary option {cfg.a_boundary!r}")

    if cfg.gauge == "sigma_reg":
        sreg = cfg.sigma_reg if cfg.sigma_reg is not None else 1e-6 * prob.sigma.max()
        sig = np.where(prob.sigma > 0, prob.sigma, sreg)
        Ms = prob.asm.mass(1, "V", sig)
        keep = np.flatnonzero(~s["bnd_e"]) if dirichlet else np.arange(ne)
        S = (K + 1j * w * Ms)[keep][:, keep].tocsr()
        b = rhs_a[keep].astype(complex)
        x, res = _factor_solve(S, b)
        a = np.zeros(ne, complex)
        a[keep] = x
        e = -1j * w * a
        blocks = {"A": x}
    elif cfg.gauge == "tree":
        tree = build_tree(cx)
        amask = ~tree.in_tree
        if dirichlet:
            amask &= ~s["bnd_e"]
        keep = np.flatnonzero(amask)
        cv = np.flatnonzero(s["cond_v"])
        # ground one vertex per conductor component
        sub = abs(cx.B1[cv][:, s["cond_e"]])
        ncomp, lab = connected_components(sub @ sub.T, directed=False)
        grounded = {cv[np.flatnonzero(lab == c)[0]] for c in range(ncomp)}
        vv = np.array([v for v in cv if v not in grounded], dtype=int)
        Ms = prob.op("M_sigma")
        Gv = prob.G[:, vv]
        MsG = Ms @ Gv
        S = sp.bmat([
            [(K + 1j * w * Ms)[keep][:, keep], 1j * w * MsG[keep]],
            [1j * w * MsG[keep].T, 1j * w * (Gv.T @ MsG)],
        ], format="csr")
        b = np.concatenate([rhs_a[keep], np.zeros(vv.size)]).astype(complex)
        x, res = _factor_solve(S, b)
        a = np.zeros(ne, complex)
        a[keep] = x[: keep.size]
        v = np.zeros(len(cx.vertices), complex)
        v[vv] = x[keep.size:]
        e = -1j * w * (a + prob.G @ v)
        blocks = {"A": x[: keep.size], "phi_e": 1j * w * x[keep.size:]}
    else:
        raise ValueError(f"unknown gauge {cfg.gauge!r}")
    stats = {"unknowns": S.shape[0], "nnz": S.nnz, "time": time.perf_counter() - t0}
    return Solution("aphi", blocks, a, e, w, res, stats, (S, b))


SOLVERS = {"hphi": solve_h_phi, "tomega": solve_t_omega, "aphi": solve_a_phi}


def solve(prob: EddyCurrentProblem, formulation: Optional[str] = None) -> Solution:
    name = formulation or prob.config.formulation
    if name not in SOLVERS:
        raise ValueError(f"unknown formulation {name!r}; expected one of {sorted(SOLVERS)}")
    return SOLVERS[name](prob)


def solve_poisson(geom: MultipatchGeometry, f: Callable, coeff=None, cx: Optional[CubicalComplex] = None) -> tuple:
    """Scalar ``-div(coeff grad u) = f`` in S^0 with ``u = 0`` on the outer boundary.

    Solves ``A0 u = b`` on the interior vertices, ``A0 = G^T M1 G``.
    Returns the glued coefficients and the assembler used.
    """
    cx = cx or glue(geom)
    asm = Assembler(geom, cx)
    free = np.flatnonzero(~cx.boundary_cells[0])
    A = asm.stiffness("A0", coeff=coeff)[free][:, free]
    b = asm.scalar_load(0, f)[free]
    x, _ = _factor_solve(A, b)
    u = np.zeros(cx.counts[0])
    u[free] = x.real
    return u, asm
