"""Multipatch gluing and the global cubical control-mesh complex.

Global vertex ids are assigned patch-major, lexicographic inside each
patch, with coincident vertices merged onto the smallest id.  Edges,
quads and hexes receive ids in order of first appearance.  Cell
orientations follow the lowest-vertex rule:

* an edge points from its lower to its higher vertex id;
* a quad starts at its lowest vertex ``v1``; of the two edges leaving
  ``v1`` the one reaching the lower id is ``e1``, and the quad is
  oriented as ``e1 ^ e2``, i.e. circulated ``v1 -> end(e1) -> ... -> end(e2) -> v1``;
* a hex is positively oriented in its patch frame, and each of its quads
  enters ``B3`` with the sign of (quad normal) . (outward normal).

Spline DoFs are glued with the orientation of the lowest-id patch that
contains the entity.  ``iso_sign[k]`` holds the diagonal isomorphism
``I_h^k`` between glued spline coefficients and FEM cochains.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .derham import ControlMesh, Patch, check_jacobian, control_mesh, patch_incidence
from .splinecore import KnotVector, gauss_rule, graded_knots


class GluingError(ValueError):
    """Non-conforming interface between two patches."""


class TopologyError(ValueError):
    """Inconsistent cell data in the control mesh."""


class NonManifoldError(TopologyError):
    """Interface surface is not a closed 2-manifold."""


FACE_NAMES = ("u0", "u1", "v0", "v1", "w0", "w1")


def face_index(face) -> int:
    if isinstance(face, str):
        if face not in FACE_NAMES:
            raise ValueError(f"unknown face {face!r}; expected one of {FACE_NAMES}")
        return FACE_NAMES.index(face)
    face = int(face)
    if not 0 <= face < 6:
        raise ValueError(f"face index {face} outside 0..5")
    return face


@dataclass(eq=False)
class MultipatchGeometry:
    """Patches, their discretization knot vectors and optional explicit interfaces.

    ``kvs[q]`` is the triple of solution-space knot vectors of patch ``q``.
    ``interfaces`` is a list of ``(patch_a, face_a, patch_b, face_b)``; when
    given, only the listed faces are glued.
    """

    patches: list
    kvs: list = field(default_factory=list)
    interfaces: Optional[list] = None

    def __post_init__(self):
        self.patches = list(self.patches)
        if not self.patches:
            raise ValueError("geometry needs at least one patch")
        if self.kvs and len(self.kvs) != len(self.patches):
            raise ValueError("one knot vector triple per patch required")
        if self.interfaces is not None:
            self.interfaces = [(int(a), face_index(fa), int(b), face_index(fb)) for a, fa, b, fb in self.interfaces]

    @property
    def num_patches(self) -> int:
        return len(self.patches)

    @property
    def conductor_patches(self) -> list:
        return [q for q, p in enumerate(self.patches) if p.is_conductor]

    @property
    def degree(self) -> int:
        return self.kvs[0][0].degree

    def discretize(self, degree: int, elements=1, grading: float = 1.0) -> "MultipatchGeometry":
        """Copy with solution knot vectors of the given degree.

        ``elements`` is an int, a per-direction triple, or a per-patch list of
        triples.  ``grading`` > 1 clusters elements geometrically towards the
        patch boundaries (symmetric, so conforming faces stay conforming).
        """
        kvs = []
        for q, patch in enumerate(self.patches):
            ne = elements
            if isinstance(elements, (list, tuple)) and len(elements) == self.num_patches and \
                    isinstance(elements[0], (list, tuple)):
                ne = elements[q]
            ne = (ne,) * 3 if np.isscalar(ne) else tuple(ne)
            trip = tuple(graded_knots(degree, int(n), grading) for n in ne)
            for d in range(3):
                gb = patch.kvs[d].breaks
                if not np.all(np.isin(np.round(gb, 12), np.round(trip[d].breaks, 12))):
                    raise ValueError(
                        f"patch {q}: geometry breakpoints {gb.tolist()} are not contained in the discretization"
                    )
            kvs.append(trip)
        return MultipatchGeometry(self.patches, kvs, self.interfaces)

    def check_jacobians(self):
        """Check detJ > 0 at the Gauss points of every element."""
        for q, patch in enumerate(self.patches):
            kvs = self.kvs[q] if self.kvs else patch.kvs
            pts = [gauss_rule(kv, kv.degree + 1)[0] for kv in kvs]
            _, _, det = patch.grid_geometry(pts)
            check_jacobian(patch, det)


@dataclass(eq=False)
class CubicalComplex:
    vertices: np.ndarray
    edges: np.ndarray
    quads: np.ndarray  # Algorithm-1 circulation order, v1 first
    hexes: np.ndarray  # VTK order of the owning patch
    B1: sp.csr_matrix
    B2: sp.csr_matrix
    B3: sp.csr_matrix
    hex_patch: np.ndarray
    hex_conductor: np.ndarray
    local_to_global: list  # [q][k] -> global ids of patch-local cells
    fem_sign: list  # [q][k] -> local orientation relative to FEM orientation
    iso_sign: list  # [k] -> I_h^k diagonal
    owner: list  # [k] -> owning patch of each global cell
    meshes: list  # per patch ControlMesh
    kvs: list

    @property
    def counts(self) -> tuple:
        return (len(self.vertices), len(self.edges), len(self.quads), len(self.hexes))

    @property
    def num_patches(self) -> int:
        return len(self.meshes)

    @property
    def euler_characteristic(self) -> int:
        v, e, f, h = self.counts
        return v - e + f - h

    def boundary(self, k: int) -> sp.csr_matrix:
        return {1: self.B1, 2: self.B2, 3: self.B3}[k]

    def spline_sign(self, q: int, k: int) -> np.ndarray:
        """Sign between patch-local and glued global spline DoFs."""
        return self.fem_sign[q][k] * self.iso_sign[k][self.local_to_global[q][k]]

    def local_map(self, q: int, k: int) -> sp.csr_matrix:
        """Signed ``(n_local, n_global)`` map with ``u_local = L @ u_global``."""
        l2g = self.local_to_global[q][k]
        n = (len(self.vertices), len(self.edges), len(self.quads), len(self.hexes))[k]
        return sp.csr_matrix(
            (self.spline_sign(q, k).astype(float), (np.arange(l2g.size), l2g)), shape=(l2g.size, n)
        )

    # subdomain cell sets -------------------------------------------------

    def _closure(self, hex_mask: np.ndarray) -> list:
        q = (abs(self.B3) @ hex_mask.astype(np.int64)) > 0
        e = (abs(self.B2) @ q.astype(np.int64)) > 0
        v = (abs(self.B1) @ e.astype(np.int64)) > 0
        return [v, e, q, hex_mask.astype(bool)]

    @property
    def conductor_cells(self) -> list:
        if not hasattr(self, "_cond"):
            self._cond = self._closure(self.hex_conductor)
        return self._cond

    @property
    def insulator_cells(self) -> list:
        if not hasattr(self, "_ins"):
            self._ins = self._closure(~self.hex_conductor)
        return self._ins

    @property
    def quad_hex_count(self) -> np.ndarray:
        return np.diff(self.B3.indptr)

    @property
    def boundary_cells(self) -> list:
        """Cells on the outer boundary of V (closure of quads with one hex)."""
        if not hasattr(self, "_bnd"):
            qm = self.quad_hex_count == 1
            e = (abs(self.B2) @ qm.astype(np.int64)) > 0
            v = (abs(self.B1) @ e.astype(np.int64)) > 0
            self._bnd = [v, e, qm, np.zeros(len(self.hexes), bool)]
        return self._bnd

    def conductor_quad_count(self) -> np.ndarray:
        return abs(self.B3) @ self.hex_conductor.astype(np.int64)

    def interface_quads(self) -> np.ndarray:
        nc = self.conductor_quad_count()
        return np.flatnonzero((self.quad_hex_count == 2) & (nc == 1))


def _unique_first(keys: np.ndarray):
    """Ids of unique rows numbered by first appearance, plus the first index per id."""
    _, first, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inv = inv.ravel()
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[inv], first[order]


def _face_vertex_mask(shape, face: int) -> np.ndarray:
    d, side = divmod(face, 2)
    n1, n2, n3 = shape
    idx = np.stack(np.meshgrid(np.arange(n1), np.arange(n2), np.arange(n3), indexing="ij"), -1)
    idx = idx.transpose(2, 1, 0, 3).reshape(-1, 3)  # lexicographic, dir 1 fastest
    return idx[:, d] == (0 if side == 0 else shape[d] - 1)


def _merge_vertices(meshes, interfaces, tol):
    coords = np.concatenate([m.vertices for m in meshes])
    offs = np.concatenate([[0], np.cumsum([len(m.vertices) for m in meshes])])
    patch_of = np.repeat(np.arange(len(meshes)), np.diff(offs))
    n = coords.shape[0]
    pairs = cKDTree(coords).query_pairs(tol, output_type="ndarray")
    if len(pairs):
        pairs = pairs[patch_of[pairs[:, 0]] != patch_of[pairs[:, 1]]]

    face_masks = {}

    def fmask(q, f):
        if (q, f) not in face_masks:
            m = np.zeros(n, bool)
            m[offs[q]: offs[q + 1]] = _face_vertex_mask(meshes[q].shape, f)
            face_masks[q, f] = m
        return face_masks[q, f]

    if interfaces is not None:
        keep = np.zeros(len(pairs), bool)
        for a, fa, b, fb in interfaces:
            ma, mb = fmask(a, fa), fmask(b, fb)
            hit = (ma[pairs[:, 0]] & mb[pairs[:, 1]]) | (mb[pairs[:, 0]] & ma[pairs[:, 1]])
            keep |= hit
            matched_a = np.zeros(n, bool)
            matched_a[pairs[hit].ravel()] = True
            if not (np.all(matched_a[ma]) and np.all(matched_a[mb])) or ma.sum() != mb.sum():
                raise GluingError(
                    f"non-conforming interface: patch {a} face {FACE_NAMES[fa]} / patch {b} face {FACE_NAMES[fb]}"
                )
        pairs = pairs[keep]

    graph = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)) if len(pairs) \
        else sp.coo_matrix((n, n))
    _, label = connected_components(graph, directed=False)
    rep = np.full(label.max() + 1, n)
    np.minimum.at(rep, label, np.arange(n))
    rep_of = rep[label]
    uniq = np.unique(rep_of)
    gid = np.searchsorted(uniq, rep_of)
    return gid, coords[uniq], [gid[offs[q]: offs[q + 1]] for q in range(len(meshes))], offs


def _check_conformity(meshes, vmaps, tol):
    """Faces whose four corners coincide must share every vertex."""
    corners = {}
    for q, m in enumerate(meshes):
        for f in range(6):
            mask = _face_vertex_mask(m.shape, f)
            n1, n2, n3 = m.shape
            d = f // 2
            ext = [0, n1 - 1], [0, n2 - 1], [0, n3 - 1]
            ids = []
            for i3 in ext[2]:
                for i2 in ext[1]:
                    for i1 in ext[0]:
                        idx = [i1, i2, i3]
                        idx[d] = 0 if f % 2 == 0 else m.shape[d] - 1
                        ids.append(idx[0] + n1 * (idx[1] + n2 * idx[2]))
            key = tuple(np.round(np.sort(m.vertices[np.unique(ids)], axis=0).ravel() / tol).astype(np.int64))
            corners.setdefault(key, []).append((q, f, mask))
    for group in corners.values():
        if len(group) < 2:
            continue
        for i in range(len(group)):
            for j in range(i + 1, len(group)):
                (qa, fa, ma), (qb, fb, mb) = group[i], group[j]
                if qa == qb:
                    continue
                sa, sb = set(vmaps[qa][ma].tolist()), set(vmaps[qb][mb].tolist())
                if sa != sb:
                    raise GluingError(
                        f"non-conforming interface: patch {qa} face {FACE_NAMES[fa]} / patch {qb} face {FACE_NAMES[fb]}"
                    )


_CORNERS = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0],
                     [0, 0, 1], [1, 0, 1], [1, 1, 1], [0, 1, 1]])
# hex faces as (corner positions, outward normal)
_HEX_FACES = [
    ([0, 3, 7, 4], (-1, 0, 0)), ([1, 2, 6, 5], (1, 0, 0)),
    ([0, 1, 5, 4], (0, -1, 0)), ([3, 2, 6, 7], (0, 1, 0)),
    ([0, 1, 2, 3], (0, 0, -1)), ([4, 5, 6, 7], (0, 0, 1)),
]


def _quad_direction(cyc: np.ndarray) -> np.ndarray:
    """+1 where the stored cycle runs in the lowest-vertex orientation, else -1."""
    r = np.arange(len(cyc))
    pos = np.argmin(cyc, axis=1)
    nxt = cyc[r, (pos + 1) % 4]
    prv = cyc[r, (pos - 1) % 4]
    return np.where(nxt < prv, 1, -1), pos


def orient_quads(cyc: np.ndarray) -> np.ndarray:
    """Reorder quad vertex cycles so that ``v1`` comes first, followed by ``end(e1)``."""
    cyc = np.asarray(cyc)
    if len(cyc) == 0:
        return cyc.reshape(0, 4)
    direction, pos = _quad_direction(cyc)
    steps = np.arange(4)[None, :] * direction[:, None]
    idx = (pos[:, None] + steps) % 4
    return np.take_along_axis(cyc, idx, axis=1)


def glue(geom: MultipatchGeometry, tol: float = 1e-10) -> CubicalComplex:
    """Build the global control-mesh complex of a discretized multipatch geometry."""
    if not geom.kvs:
        raise ValueError("geometry has no discretization; call discretize() first")
    meshes = [control_mesh(p, kv) for p, kv in zip(geom.patches, geom.kvs)]
    allv = np.concatenate([m.vertices for m in meshes])
    diam = float(np.ptp(allv, axis=0).max()) if len(allv) else 1.0
    tol = tol * max(1.0, diam)
    _, verts, vmaps, _ = _merge_vertices(meshes, geom.interfaces, tol)
    if geom.interfaces is None:
        _check_conformity(meshes, vmaps, tol)
    nv = len(verts)
    npatch = len(meshes)

    # edges
    eg = [vmaps[q][m.edges] for q, m in enumerate(meshes)]
    all_e = np.concatenate(eg)
    if np.any(all_e[:, 0] == all_e[:, 1]):
        raise TopologyError("edge with repeated vertex (collapsed control mesh)")
    ekeys = np.sort(all_e, axis=1)
    eid, efirst = _unique_first(ekeys)
    edges = ekeys[efirst]
    ne = len(edges)

    # quads
    qg = [vmaps[q][m.quads] for q, m in enumerate(meshes)]
    all_q = np.concatenate(qg)
    qkeys = np.sort(all_q, axis=1)
    if np.any(np.diff(qkeys, axis=1) == 0):
        raise TopologyError("quad with repeated vertex")
    qid, qfirst = _unique_first(qkeys)
    quads = orient_quads(all_q[qfirst])
    nq = len(quads)

    # hexes
    hg = [vmaps[q][m.hexes] for q, m in enumerate(meshes)]
    hexes = np.concatenate(hg)
    if np.any(np.diff(np.sort(hexes, axis=1), axis=1) == 0):
        raise TopologyError("hex with repeated vertex")
    nh = len(hexes)
    hex_patch = np.concatenate([np.full(len(h), q) for q, h in enumerate(hg)])

    # B1
    cols = np.repeat(np.arange(ne), 2)
    B1 = sp.csr_matrix(
        (np.tile([-1, 1], ne).astype(np.int64), (edges.ravel(), cols)), shape=(nv, ne)
    )

    # B2 from the oriented cycles
    u = quads
    w = np.roll(quads, -1, axis=1)
    side = np.stack([np.minimum(u, w), np.maximum(u, w)], axis=-1).reshape(-1, 2)
    erow = _row_lookup(edges, side, "quad side is not an edge of the mesh").reshape(nq, 4)
    B2 = sp.csr_matrix(
        (np.where(u < w, 1, -1).ravel().astype(np.int64), (erow.ravel(), np.repeat(np.arange(nq), 4))),
        shape=(ne, nq),
    )

    # B3 from outward normals in the parametric frame of each hex
    qsorted = np.sort(quads, axis=1)
    rows, vals = [], []
    for corners, normal in _HEX_FACES:
        fv = hexes[:, corners]
        qrow = _row_lookup(qsorted, np.sort(fv, axis=1), "hex face is not a quad of the mesh")
        cyc = quads[qrow]  # oriented cycle, global ids
        loc = np.argmax(cyc[:, :, None] == hexes[:, None, :], axis=2)  # position in hex
        c = _CORNERS[loc]
        nrm = np.cross(c[:, 1] - c[:, 0], c[:, 3] - c[:, 0])
        rows.append(qrow)
        vals.append(np.sign(nrm @ np.asarray(normal)))
    B3 = sp.csr_matrix(
        (np.concatenate(vals).astype(np.int64), (np.concatenate(rows), np.tile(np.arange(nh), 6))),
        shape=(nq, nh),
    )
    if nq and np.diff(B3.indptr).max() > 2:
        raise TopologyError("quad shared by more than two hexes")

    # per-patch maps and local orientations
    eoff = np.concatenate([[0], np.cumsum([len(x) for x in eg])])
    qoff = np.concatenate([[0], np.cumsum([len(x) for x in qg])])
    hoff = np.concatenate([[0], np.cumsum([len(x) for x in hg])])
    l2g, fsign = [], []
    for q in range(npatch):
        le = eg[q]
        s1 = np.where(le[:, 0] < le[:, 1], 1, -1)
        s2, _ = _quad_direction(qg[q])
        l2g.append([vmaps[q], eid[eoff[q]: eoff[q + 1]], qid[qoff[q]: qoff[q + 1]],
                    np.arange(hoff[q], hoff[q + 1])])
        fsign.append([np.ones(len(vmaps[q]), np.int64), s1.astype(np.int64), s2.astype(np.int64),
                      np.ones(len(hg[q]), np.int64)])

    iso, owner = [], []
    for k, n in enumerate((nv, ne, nq, nh)):
        own = np.full(n, -1)
        sgn = np.zeros(n, np.int64)
        for q in reversed(range(npatch)):
            own[l2g[q][k]] = q
            sgn[l2g[q][k]] = fsign[q][k]
        owner.append(own)
        iso.append(sgn)

    cond = np.array([p.is_conductor for p in geom.patches])[hex_patch]
    return CubicalComplex(verts, edges, quads, hexes, B1, B2, B3, hex_patch, cond,
                          l2g, fsign, iso, owner, meshes, list(geom.kvs))


def _row_lookup(table: np.ndarray, queries: np.ndarray, msg: str) -> np.ndarray:
    """Index into ``table`` (unique rows) of every query row."""
    both = np.concatenate([table, queries])
    _, inv = np.unique(both, axis=0, return_inverse=True)
    inv = inv.ravel()
    where = np.full(inv.max() + 1 if inv.size else 0, -1)
    where[inv[: len(table)]] = np.arange(len(table))
    out = where[inv[len(table):]]
    if np.any(out < 0):
        raise TopologyError(msg)
    return out


def coboundary_operators(cx: CubicalComplex) -> dict:
    return {"grad": cx.B1.T.tocsr(), "curl": cx.B2.T.tocsr(), "div": cx.B3.T.tocsr()}


def global_incidence(cx: CubicalComplex) -> dict:
    """Glued spline incidence matrices built from the owner patch of each row."""
    out = {}
    for name, k in (("G", 0), ("C", 1), ("D", 2)):
        rows, cols, vals = [], [], []
        for q in range(cx.num_patches):
            K = patch_incidence(cx.kvs[q])[name].tocoo()
            r_own = cx.owner[k + 1][cx.local_to_global[q][k + 1]] == q
            m = r_own[K.row]
            sr, sc = cx.spline_sign(q, k + 1), cx.spline_sign(q, k)
            rows.append(cx.local_to_global[q][k + 1][K.row[m]])
            cols.append(cx.local_to_global[q][k][K.col[m]])
            vals.append(K.data[m] * sr[K.row[m]] * sc[K.col[m]])
        n = cx.counts
        out[name] = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n[k + 1], n[k])
        )
    return out


def isomorphism_maps(cx: CubicalComplex) -> list:
    """Diagonal sign matrices ``I_h^k`` (spline coefficients -> FEM cochains); each is its own inverse."""
    return [sp.diags(s.astype(np.int64), format="csr") for s in cx.iso_sign]


def patch_restriction(cx: CubicalComplex, q: int, k: int) -> sp.csr_matrix:
    """Rows/cols of the FEM coboundary ``B_{k+1}^T`` on the cells of patch ``q``."""
    Bt = cx.boundary(k + 1).T.tocsr()
    return Bt[cx.local_to_global[q][k + 1]][:, cx.local_to_global[q][k]]


class ConsistencyError(RuntimeError):
    pass


def verify_patchwise(cx: CubicalComplex) -> None:
    """Check that every patch restriction equals the signed Kronecker operator."""
    Bt = [cx.boundary(k + 1).T.tocsr() for k in range(3)]
    for q in range(cx.num_patches):
        inc = patch_incidence(cx.kvs[q])
        l2g = cx.local_to_global[q]
        for k, name in enumerate("GCD"):
            expect = sp.diags(cx.fem_sign[q][k + 1]) @ inc[name] @ sp.diags(cx.fem_sign[q][k])
            got = Bt[k][l2g[k + 1]][:, l2g[k]]
            if (abs(got - expect)).nnz:
                raise ConsistencyError(f"patch {q}: coboundary {name} disagrees with the Kronecker operator")


@dataclass(eq=False)
class InterfaceComplex:
    vertices: np.ndarray  # global vertex ids
    edges: np.ndarray  # global edge ids
    quads: np.ndarray  # global quad ids
    B1: sp.csr_matrix
    B2: sp.csr_matrix

    @property
    def euler_characteristic(self) -> int:
        return len(self.vertices) - len(self.edges) + len(self.quads)

    def components(self) -> tuple:
        n = len(self.vertices)
        adj = abs(self.B1) @ abs(self.B1).T if n else sp.csr_matrix((0, 0))
        return connected_components(adj, directed=False) if n else (0, np.zeros(0, int))


def extract_interface(cx: CubicalComplex) -> InterfaceComplex:
    """Sub-complex of the conductor/insulator interface."""
    cq = cx.interface_quads()
    cond, ins = cx.conductor_cells, cx.insulator_cells
    qmask = np.zeros(len(cx.quads), bool)
    qmask[cq] = True
    emask = (abs(cx.B2) @ qmask.astype(np.int64)) > 0
    vmask = (abs(cx.B1) @ emask.astype(np.int64)) > 0
    if np.any((cond[1] & ins[1]) != emask) or np.any((cond[0] & ins[0]) != vmask):
        raise NonManifoldError("conductor and insulator touch along edges or vertices only")
    ev = np.flatnonzero(emask)
    vv = np.flatnonzero(vmask)
    B2g = cx.B2[ev][:, cq]
    bad = np.flatnonzero(np.diff(B2g.indptr) != 2)
    if bad.size:
        raise NonManifoldError(f"interface edge {ev[bad[0]]} lies in {np.diff(B2g.indptr)[bad[0]]} interface quads")
    return InterfaceComplex(vv, ev, cq, cx.B1[vv][:, ev].tocsr(), B2g.tocsr())


def export_triplets(mat: sp.spmatrix, path) -> None:
    """Write ``row col value`` lines, 1-based, sorted by (row, col)."""
    coo = sp.coo_matrix(mat)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write(f"{r + 1} {c + 1} {int(v) if float(v).is_integer() else repr(float(v))}\n")


def restrict_dirichlet(n: int, boundary_mask: np.ndarray) -> np.ndarray:
    """Indices of DoFs kept after removing the boundary ones."""
    return np.flatnonzero(~np.asarray(boundary_mask, bool)[:n])
