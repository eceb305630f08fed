"""Legacy ASCII VTK export of the glued control mesh.

Points are the control-mesh vertices, cells the control hexahedra (VTK
type 12).  Every number is printed with a fixed ``%.12e`` format, so equal
inputs give byte-identical files.  Complex arrays are split into ``_re``
and ``_im`` arrays; vectors have three components.
"""
from __future__ import annotations

from pathlib import Path
from typing import Optional

import numpy as np

from .derham import build_space, eval_geometry
from .multipatch import CubicalComplex
from .splinecore import greville_points

VTK_HEXAHEDRON = 12


def _fmt(a: np.ndarray) -> list:
    return [" ".join(f"{v:.12e}" for v in row) for row in np.atleast_2d(a)]


def _split(name: str, arr) -> list:
    arr = np.asarray(arr)
    if np.iscomplexobj(arr):
        return [(f"{name}_re", arr.real), (f"{name}_im", arr.imag)]
    return [(name, arr.astype(float))]


def _data_section(kind: str, n: int, data: dict) -> list:
    if not data:
        return []
    out = [f"{kind} {n}"]
    for name in sorted(data):
        for nm, arr in _split(name, data[name]):
            if arr.shape[0] != n:
                raise ValueError(f"{kind.lower()} array {name!r} has {arr.shape[0]} rows, expected {n}")
            if arr.ndim == 1:
                out += [f"SCALARS {nm} double 1", "LOOKUP_TABLE default"]
                out += _fmt(arr[:, None])
            elif arr.shape[1:] == (3,):
                out.append(f"VECTORS {nm} double")
                out += _fmt(arr)
            else:
                raise ValueError(f"array {name!r} must be scalar or 3-vector per entry")
    return out


def write_vtk(path, points: np.ndarray, hexes: np.ndarray, point_data: Optional[dict] = None,
              cell_data: Optional[dict] = None, title: str = "igacohom") -> None:
    """Write an unstructured grid of hexahedra with optional point/cell arrays."""
    points = np.asarray(points, float)
    hexes = np.asarray(hexes, np.int64)
    lines = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {len(points)} double")
    lines += _fmt(points) if len(points) else []
    lines.append(f"CELLS {len(hexes)} {9 * len(hexes)}")
    lines += ["8 " + " ".join(map(str, h)) for h in hexes]
    lines.append(f"CELL_TYPES {len(hexes)}")
    lines += [str(VTK_HEXAHEDRON)] * len(hexes)
    lines += _data_section("POINT_DATA", len(points), point_data or {})
    lines += _data_section("CELL_DATA", len(hexes), cell_data or {})
    try:
        Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc.strerror}") from None


# cell sampling -------------------------------------------------------------

def cell_centers(cx: CubicalComplex) -> tuple:
    """Owning patch and parametric centre of every glued hexahedron."""
    xi = np.zeros((len(cx.hexes), 3))
    for q in range(cx.num_patches):
        gl = cx.local_to_global[q][3]
        shape = [kv.n - 1 for kv in cx.kvs[q]]
        mid = [0.5 * (g[:-1] + g[1:]) for g in (greville_points(kv) for kv in cx.kvs[q])]
        loc = np.arange(gl.size)
        i, j, k = loc % shape[0], (loc // shape[0]) % shape[1], loc // (shape[0] * shape[1])
        xi[gl] = np.stack([mid[0][i], mid[1][j], mid[2][k]], axis=1)
    return cx.hex_patch.copy(), xi


def cochain_cell_vectors(cx: CubicalComplex, cochain: np.ndarray) -> np.ndarray:
    """Constant vector per hexahedron best matching the 1-cochain on its 12 edges.

    Solves ``(x_end - x_start) . F = c_e`` in the least-squares sense, a
    mesh-level reconstruction that needs no basis evaluation.
    """
    cochain = np.asarray(cochain)
    E = abs(cx.B2) @ abs(cx.B3)  # edge-hex adjacency
    E = E.tocsc()
    out = np.zeros((len(cx.hexes), 3), dtype=cochain.dtype if np.iscomplexobj(cochain) else float)
    t = cx.vertices[cx.edges[:, 1]] - cx.vertices[cx.edges[:, 0]]
    for h in range(len(cx.hexes)):
        ids = E.indices[E.indptr[h]: E.indptr[h + 1]]
        out[h] = np.linalg.lstsq(t[ids], cochain[ids], rcond=None)[0]
    return out


def sample_cells(prob, sol, quantities=("J", "H")) -> dict:
    """Complex ``J`` (zero outside conductors) and total ``H`` at hex centres."""
    cx, geom = prob.cx, prob.geom
    owner, xi = cell_centers(cx)
    out = {name: np.zeros((len(cx.hexes), 3), complex) for name in quantities}
    for q in range(cx.num_patches):
        sel = np.flatnonzero(owner == q)
        pts = xi[sel]
        x, J, det = eval_geometry(geom.patches[q], pts)

        def field(k, coeffs):
            sp_ = build_space(geom.kvs[q], k)
            loc = cx.local_map(q, k) @ coeffs
            ref = np.stack([sp_.point_matrix(c, pts) @ loc[sp_.offsets[c]: sp_.offsets[c + 1]]
                            for c in range(3)], axis=1)
            if k == 1:
                return np.einsum("mji,mj->mi", np.linalg.inv(J), ref)
            return np.einsum("mij,mj->mi", J, ref) / det[:, None]

        for name in quantities:
            if name == "J":
                if not geom.patches[q].is_conductor:
                    continue
                if sol.formulation == "aphi":
                    out[name][sel] = prob.sigma[q] * field(1, sol.e_field)
                else:
                    out[name][sel] = field(2, sol.current_coefficients)
            elif name == "H":
                if sol.formulation == "aphi":
                    out[name][sel] = field(2, prob.C @ sol.edge_field) / prob.mu[q]
                else:
                    out[name][sel] = field(1, sol.edge_field) + prob.config.source_field(x)
            else:
                raise ValueError(f"unknown quantity {name!r}")
    return out


def export_vtk(path, cx: CubicalComplex, cell_data: Optional[dict] = None, point_data: Optional[dict] = None,
               title: str = "igacohom") -> None:
    """Control mesh of ``cx`` with region tags plus the given arrays."""
    cells = {"conductor": cx.hex_conductor.astype(float), "patch": cx.hex_patch.astype(float)}
    cells.update(cell_data or {})
    write_vtk(path, cx.vertices, cx.hexes, point_data, cells, title)
