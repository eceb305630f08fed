"""First-cohomology generators of the insulator from the interface surface.

Pipeline:

1. integer H^1 generators on the conductor/insulator interface by a dual
   tree-cotree decomposition (``surface_cohomology``);
2. each generator is extended by zero and its coboundary taken inside
   the conductor, which gives a divergence-free integer current
   (``thicken_to_current``);
3. a spanning tree of the volume graph is removed and ``curl h = j`` is
   solved by back substitution over the remaining edges
   (``build_tree``, ``elimination_order``, ``stt_solve``);
4. the insulator restriction is lifted to spline coefficients and the
   redundant half of the candidates is filtered out by pairing with
   insulator cycles (``restrict_and_lift``, ``filter_lazy``).

All cochain arithmetic is done in int64.
"""
from __future__ import annotations

import time
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import splu

from .multipatch import CubicalComplex, InterfaceComplex, NonManifoldError, extract_interface


class PathologicalTreeError(RuntimeError):
    """Back substitution stalled: the spanning tree admits no elimination order."""

    def __init__(self, unresolved: int):
        super().__init__(f"spanning-tree elimination stalled with {unresolved} unresolved cotree edges; "
                         f"retry with a different root")
        self.unresolved = unresolved


class DisconnectedGraphError(ValueError):
    pass


class CochainError(RuntimeError):
    """Input is not a cocycle / current is not divergence free."""


# graph helpers --------------------------------------------------------------

def _adjacency(edges: np.ndarray, nv: int):
    """CSR adjacency lists: neighbours and edge ids sorted by neighbour id."""
    a = np.concatenate([edges[:, 0], edges[:, 1]])
    b = np.concatenate([edges[:, 1], edges[:, 0]])
    eid = np.concatenate([np.arange(len(edges))] * 2)
    order = np.lexsort((b, a))
    a, b, eid = a[order], b[order], eid[order]
    ptr = np.searchsorted(a, np.arange(nv + 1))
    return ptr, b, eid


def _bfs(ptr, nbr, eid, seeds, allowed_edge, visited, parent, parent_edge, order):
    """Multi-source BFS over allowed edges, appending visit order in place."""
    queue = deque()
    for s in seeds:
        if not visited[s]:
            visited[s] = True
            order.append(s)
        queue.append(s)
    while queue:
        v = queue.popleft()
        for k in range(ptr[v], ptr[v + 1]):
            w, e = nbr[k], eid[k]
            if allowed_edge[e] and not visited[w]:
                visited[w] = True
                parent[w] = v
                parent_edge[w] = e
                order.append(w)
                queue.append(w)


@dataclass(eq=False)
class SpanningTree:
    root: int
    parent: np.ndarray  # parent vertex, -1 at the root / outside the graph
    parent_edge: np.ndarray  # edge to the parent, -1 at the root
    in_tree: np.ndarray  # bool per edge
    in_graph: np.ndarray  # bool per edge (edges the tree spans)
    order: np.ndarray  # BFS visit order

    @property
    def tree_edges(self) -> np.ndarray:
        return np.flatnonzero(self.in_tree)

    @property
    def cotree_edges(self) -> np.ndarray:
        return np.flatnonzero(self.in_graph & ~self.in_tree)


def _spanning_tree(edges, nv, edge_mask, vertex_mask, root=None, first_mask=None) -> SpanningTree:
    """BFS tree on the subgraph (vertex_mask, edge_mask); must be connected.

    With ``first_mask`` the tree is grown over those edges first and then
    extended to the rest of the graph.
    """
    ptr, nbr, eid = _adjacency(edges, nv)
    verts = np.flatnonzero(vertex_mask)
    if verts.size == 0:
        raise DisconnectedGraphError("empty graph")
    if root is None:
        root = int(verts[0])
        if first_mask is not None:
            fv = np.zeros(nv, bool)
            fv[edges[first_mask].ravel()] = True
            if fv.any():
                root = int(np.flatnonzero(fv)[0])
    if not 0 <= root < nv or not vertex_mask[root]:
        raise ValueError(f"root {root} is not a vertex of the graph")
    visited = np.zeros(nv, bool)
    parent = np.full(nv, -1)
    pedge = np.full(nv, -1)
    order: list = []
    if first_mask is not None:
        _bfs(ptr, nbr, eid, [root], first_mask & edge_mask, visited, parent, pedge, order)
        _bfs(ptr, nbr, eid, list(order), edge_mask, visited, parent, pedge, order)
    else:
        _bfs(ptr, nbr, eid, [root], edge_mask, visited, parent, pedge, order)
    missing = vertex_mask & ~visited
    if missing.any():
        sub = sp.coo_matrix((np.ones(edge_mask.sum()), tuple(edges[edge_mask].T)), shape=(nv, nv))
        ncomp, lab = connected_components(sub, directed=False)
        comps = sorted({int(lab[v]) for v in verts})
        raise DisconnectedGraphError(
            f"graph has {len(comps)} connected components; first unreached vertex {int(np.flatnonzero(missing)[0])}"
        )
    in_tree = np.zeros(len(edges), bool)
    in_tree[pedge[pedge >= 0]] = True
    return SpanningTree(root, parent, pedge, in_tree, edge_mask.copy(), np.asarray(order))


def build_tree(cx: CubicalComplex, root: Optional[int] = None, boundary_first: bool = True) -> SpanningTree:
    """BFS spanning tree of the whole control-mesh graph.

    The tree first spans the outer boundary graph from its lowest vertex
    (or ``root``), then extends into the volume.  Since the outer boundary
    is a sphere, the generators computed with this tree vanish on it.
    """
    nv, ne = len(cx.vertices), len(cx.edges)
    first = cx.boundary_cells[1] if boundary_first else None
    return _spanning_tree(cx.edges, nv, np.ones(ne, bool), np.ones(nv, bool), root, first)


# surface cohomology ---------------------------------------------------------

@dataclass(eq=False)
class SurfaceGenerator:
    values: np.ndarray  # int64 per interface edge
    leftover_edge: int  # interface-local index of the generating edge
    component: int


def surface_cohomology(gamma: InterfaceComplex) -> list:
    """Integer H^1 basis of the interface surface by dual tree-cotree."""
    nvg, neg, nqg = len(gamma.vertices), len(gamma.edges), len(gamma.quads)
    if neg == 0:
        return []
    B1 = gamma.B1.tocsc()
    # local edge endpoints
    ends = np.stack([B1.indices[B1.indptr[:-1]], B1.indices[B1.indptr[:-1] + 1]], axis=1)
    B2 = gamma.B2.tocsc()
    B2r = gamma.B2.tocsr()
    if np.any(np.diff(B2r.indptr) != 2):
        raise NonManifoldError("interface edge not shared by exactly two quads")
    ncomp, vlab = gamma.components()

    gens = []
    ptr, nbr, eid = _adjacency(ends, nvg)
    visited = np.zeros(nvg, bool)
    parent = np.full(nvg, -1)
    pedge = np.full(nvg, -1)
    for c in range(ncomp):
        root = int(np.flatnonzero(vlab == c)[0])
        _bfs(ptr, nbr, eid, [root], np.ones(neg, bool), visited, parent, pedge, [])
    primal = np.zeros(neg, bool)
    primal[pedge[pedge >= 0]] = True

    # dual graph: quads adjacent across non-primal edges
    qa = B2r.indices[B2r.indptr[:-1]]
    qb = B2r.indices[B2r.indptr[:-1] + 1]
    dual_edges = np.stack([qa, qb], axis=1)
    dptr, dnbr, deid = _adjacency(dual_edges, nqg)
    dvis = np.zeros(nqg, bool)
    dpar = np.full(nqg, -1)
    dpedge = np.full(nqg, -1)
    dorder: list = []
    qlab = vlab[ends[B2.indices[B2.indptr[:-1]], 0]]
    roots = []
    for c in range(ncomp):
        r = int(np.flatnonzero(qlab == c)[0])
        roots.append(r)
        _bfs(dptr, dnbr, deid, [r], ~primal, dvis, dpar, dpedge, dorder)
    dual = np.zeros(neg, bool)
    dual[dpedge[dpedge >= 0]] = True
    leftover = np.flatnonzero(~primal & ~dual)

    # solve each cocycle by peeling the dual tree from the leaves
    rev = dorder[::-1]
    for ell in leftover:
        g = np.zeros(neg, np.int64)
        g[ell] = 1
        for f in rev:
            e_up = dpedge[f]
            if e_up < 0:
                continue
            rows = B2.indices[B2.indptr[f]: B2.indptr[f + 1]]
            vals = B2.data[B2.indptr[f]: B2.indptr[f + 1]]
            s = 0
            coef = 0
            for r, v in zip(rows, vals):
                if r == e_up:
                    coef = v
                else:
                    s += v * g[r]
            g[e_up] = -s * coef  # coef is +-1
        if (B2.T @ g).any():
            raise CochainError("surface cocycle residual is nonzero (non-orientable surface?)")
        gens.append(SurfaceGenerator(g, int(ell), int(vlab[ends[ell, 0]])))
    return gens


def expected_betti(gamma: InterfaceComplex) -> int:
    """First Betti number of the insulator: half the surface H^1 dimension."""
    if len(gamma.vertices) == 0:
        return 0
    ncomp, vlab = gamma.components()
    B1 = gamma.B1.tocsc()
    e0 = B1.indices[B1.indptr[:-1]]
    elab = vlab[e0]
    B2 = gamma.B2.tocsc()
    qlab = vlab[e0[B2.indices[B2.indptr[:-1]]]]
    total = 0
    for c in range(ncomp):
        chi = int((vlab == c).sum() - (elab == c).sum() + (qlab == c).sum())
        total += 2 - chi
    return total // 2


# Algorithm 2 ---------------------------------------------------------------

def thicken_currents(gens: list, cx: CubicalComplex, gamma: InterfaceComplex) -> np.ndarray:
    """Integer 2-cochains (n_quads, m): coboundaries of the surface generators
    restricted to conductor quads, all generators in one sparse product."""
    full = np.zeros((len(cx.edges), len(gens)), np.int64)
    for i, g in enumerate(gens):
        full[gamma.edges, i] = g.values
    J = np.asarray(cx.B2.T @ full)
    J[~cx.conductor_cells[2]] = 0
    if J[gamma.quads].any():
        raise CochainError("current has a nonzero normal component on the interface")
    if (cx.B3.T @ J).any():
        raise CochainError("current is not divergence free")
    return J


def thicken_to_current(g: SurfaceGenerator, cx: CubicalComplex, gamma: InterfaceComplex) -> np.ndarray:
    """Integer 2-cochain: coboundary of ``g`` on conductor quads, zero elsewhere."""
    return thicken_currents([g], cx, gamma)[:, 0]


@dataclass(eq=False)
class EliminationOrder:
    """Lower-triangular reordering of ``B2^T`` restricted to cotree edges."""

    quads: np.ndarray
    edges: np.ndarray
    matrix: sp.csr_matrix  # square, lower triangular in the order above
    ne: int


def elimination_order(cx: CubicalComplex, tree: SpanningTree) -> EliminationOrder:
    """Greedy order: repeatedly take a quad with one unresolved cotree edge."""
    ne, nq = len(cx.edges), len(cx.quads)
    B2c = cx.B2.tocsc()  # columns = quads -> edges
    B2r = cx.B2.tocsr()  # rows = edges -> quads
    unresolved = ~tree.in_tree
    q_ptr, q_idx = B2c.indptr, B2c.indices
    e_ptr, e_idx = B2r.indptr, B2r.indices
    count = np.add.reduceat(unresolved[q_idx].astype(np.int64), q_ptr[:-1]) if nq else np.zeros(0, np.int64)
    count = count.copy()
    queue = deque(np.flatnonzero(count == 1).tolist())
    order_q, order_e = [], []
    unres = unresolved.copy()
    while queue:
        f = queue.popleft()
        if count[f] != 1:
            continue
        e = -1
        for k in range(q_ptr[f], q_ptr[f + 1]):
            if unres[q_idx[k]]:
                e = q_idx[k]
                break
        unres[e] = False
        order_q.append(f)
        order_e.append(e)
        for k in range(e_ptr[e], e_ptr[e + 1]):
            h = e_idx[k]
            count[h] -= 1
            if count[h] == 1:
                queue.append(h)
    left = int(unres.sum())
    if left:
        raise PathologicalTreeError(left)
    oq, oe = np.asarray(order_q, np.int64), np.asarray(order_e, np.int64)
    pos = np.full(ne, -1)
    pos[oe] = np.arange(oe.size)
    sub = B2c[:, oq].T.tocsr()  # rows follow the elimination order
    coo = sub.tocoo()
    keep = pos[coo.col] >= 0
    mat = sp.csr_matrix((coo.data[keep].astype(float), (coo.row[keep], pos[coo.col[keep]])),
                        shape=(oq.size, oq.size))
    return EliminationOrder(oq, oe, mat, ne)


def stt_solve(order: EliminationOrder, j: np.ndarray) -> np.ndarray:
    """Solve ``B2^T h = j`` with ``h = 0`` on tree edges, for one or many currents.

    ``j`` has shape (n_quads,) or (n_quads, m).  The triangular matrix is
    factored once without reordering (no fill, unit-modulus pivots) and all
    right-hand sides are solved together.  The result is verified to be an
    exact integer solution by the caller via ``check_stt``.
    """
    j = np.asarray(j)
    single = j.ndim == 1
    J = j[:, None] if single else j
    h = np.zeros((order.ne, J.shape[1]), np.int64)
    if order.edges.size and J.shape[1]:
        lu = splu(order.matrix.tocsc(), permc_spec="NATURAL", diag_pivot_thresh=0.0,
                  options=dict(SymmetricMode=True))
        sol = lu.solve(np.asfortranarray(J[order.quads], dtype=float))
        h[order.edges] = np.rint(sol.reshape(order.edges.size, -1)).astype(np.int64)
    return h[:, 0] if single else h


def check_stt(cx: CubicalComplex, h: np.ndarray, j: np.ndarray) -> None:
    res = cx.B2.T @ h - j
    if np.any(res):
        raise CochainError(f"spanning-tree solve residual {int(np.abs(res).max())} is not zero")


# lifting and filtering -------------------------------------------------------

@dataclass(eq=False)
class Generator:
    cochain: np.ndarray  # int64 FEM cochain on all edges, zero outside the insulator
    coefficients: np.ndarray  # glued spline coefficients (I_h^1 applied)
    source: int  # index of the surface generator it came from

    @property
    def support_size(self) -> int:
        return int(np.count_nonzero(self.cochain))


def restrict_and_lift(h: np.ndarray, cx: CubicalComplex, source: int = -1) -> Generator:
    ins_e = cx.insulator_cells[1]
    hr = np.where(ins_e, h, 0).astype(np.int64)
    curl = cx.B2.T @ hr
    if curl[cx.insulator_cells[2]].any():
        raise CochainError("restricted generator has nonzero curl in the insulator")
    return Generator(hr, (cx.iso_sign[1] * hr).astype(float), source)


def insulator_cycles(cx: CubicalComplex) -> tuple:
    """Spanning forest of the insulator graph, for fundamental-cycle pairings."""
    ve, ee = cx.insulator_cells[0], cx.insulator_cells[1]
    nv = len(cx.vertices)
    ptr, nbr, eid = _adjacency(cx.edges, nv)
    visited = np.zeros(nv, bool)
    parent = np.full(nv, -1)
    pedge = np.full(nv, -1)
    order: list = []
    for v in np.flatnonzero(ve):
        if not visited[v]:
            _bfs(ptr, nbr, eid, [v], ee, visited, parent, pedge, order)
    in_tree = np.zeros(len(cx.edges), bool)
    in_tree[pedge[pedge >= 0]] = True
    return np.asarray(order), parent, pedge, np.flatnonzero(ee & ~in_tree)


def pairing_matrix(cochains: np.ndarray, cx: CubicalComplex, cycles=None) -> np.ndarray:
    """Circulations (integers) of each cochain along the fundamental insulator cycles.

    ``cochains`` has shape (m, n_edges).  The cycle of a cotree edge ``e = (a, b)``
    runs ``a -> b`` along ``e`` and back through the tree.
    """
    order, parent, pedge, cot = cycles if cycles is not None else insulator_cycles(cx)
    H = np.atleast_2d(cochains)
    psi = np.zeros((H.shape[0], len(cx.vertices)), np.int64)
    for v in order:
        e = pedge[v]
        if e < 0:
            continue
        u = parent[v]
        s = 1 if cx.edges[e, 1] == v else -1  # edge oriented u -> v?
        psi[:, v] = psi[:, u] + s * H[:, e]
    a, b = cx.edges[cot, 0], cx.edges[cot, 1]
    return H[:, cot] - (psi[:, b] - psi[:, a])


@dataclass(eq=False)
class CohomologyBasis:
    generators: list
    candidates: int
    expected: int
    pairing: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), np.int64))

    def __len__(self):
        return len(self.generators)

    @property
    def support_sizes(self) -> list:
        return [g.support_size for g in self.generators]

    def coefficient_matrix(self) -> np.ndarray:
        n = len(self.generators[0].coefficients) if self.generators else 0
        return np.array([g.coefficients for g in self.generators]).reshape(len(self.generators), n)


def filter_lazy(candidates: list, cx: CubicalComplex, expected: Optional[int] = None,
                tol: float = 1e-8) -> CohomologyBasis:
    """Greedy rank-revealing selection of an independent subset of candidates."""
    if not candidates:
        return CohomologyBasis([], 0, expected or 0)
    P = pairing_matrix(np.array([c.cochain for c in candidates]), cx)
    nz = np.flatnonzero(np.any(P != 0, axis=0))
    P = P[:, nz]
    basis: list = []
    chosen = []
    for i, row in enumerate(P.astype(float)):
        r = row.copy()
        for b in basis:
            r -= (r @ b) * b
        nrm = np.linalg.norm(r)
        scale = max(np.linalg.norm(row), 1.0)
        if nrm > tol * scale:
            basis.append(r / nrm)
            chosen.append(i)
    if expected is not None and len(chosen) < expected:
        warnings.warn(f"only {len(chosen)} independent generators found, expected {expected}")
    return CohomologyBasis([candidates[i] for i in chosen], len(candidates),
                           expected if expected is not None else len(chosen), P[chosen])


@dataclass
class CohomologyResult:
    basis: CohomologyBasis
    surface: list
    tree: Optional[SpanningTree]
    timings: dict


def compute_generators(cx: CubicalComplex, root: Optional[int] = None) -> CohomologyResult:
    """Full pipeline with per-stage wall times (seconds)."""
    t = {}
    t0 = time.perf_counter()
    if not cx.hex_conductor.any() or cx.hex_conductor.all():
        return CohomologyResult(CohomologyBasis([], 0, 0), [], None,
                                {"surface_cohomology": 0.0, "step1": 0.0, "step2": 0.0, "step3": 0.0})
    gamma = extract_interface(cx)
    surf = surface_cohomology(gamma)
    expected = expected_betti(gamma)
    t1 = time.perf_counter()
    t["surface_cohomology"] = t1 - t0
    J = thicken_currents(surf, cx, gamma)
    t2 = time.perf_counter()
    t["step1"] = t2 - t1
    tree = build_tree(cx, root)
    t3 = time.perf_counter()
    t["step2"] = t3 - t2
    order = elimination_order(cx, tree)
    H = stt_solve(order, J)
    check_stt(cx, H, J)
    t4 = time.perf_counter()
    t["step3"] = t4 - t3
    cands = [restrict_and_lift(H[:, i], cx, i) for i in range(H.shape[1])]
    basis = filter_lazy(cands, cx, expected)
    t["filter"] = time.perf_counter() - t4
    return CohomologyResult(basis, surf, tree, t)
