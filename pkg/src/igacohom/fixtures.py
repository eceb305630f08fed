"""Geometry builders for the shipped test and benchmark configurations.

Lengths are in meters.  All builders return an undiscretized
:class:`MultipatchGeometry`; call ``discretize(p, nel)`` before gluing.
"""
from __future__ import annotations

import numpy as np

from .derham import Patch
from .multipatch import MultipatchGeometry
from .splinecore import KnotVector

_LIN = KnotVector(1, [0, 0, 1, 1])
_QUAD = KnotVector(2, [0, 0, 0, 1, 1, 1])


def hexa_patch(corners, region="insulator", material="air", name="") -> Patch:
    """Trilinear patch from 8 corners in lexicographic order (x fastest in parameters)."""
    return Patch((_LIN, _LIN, _LIN), np.asarray(corners, float), None, region, material, name)


def box_patch(lo, hi, region="insulator", material="air", name="") -> Patch:
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    return affine_patch(np.diag(hi - lo), lo, region, material, name)


def affine_patch(A, b=(0, 0, 0), region="insulator", material="air", name="") -> Patch:
    """Patch ``x = A xi + b`` on the unit cube."""
    A, b = np.asarray(A, float), np.asarray(b, float)
    c = [A @ np.array([i & 1, (i >> 1) & 1, (i >> 2) & 1], float) + b for i in range(8)]
    return hexa_patch(c, region, material, name)


def unit_cube(region="insulator") -> MultipatchGeometry:
    return MultipatchGeometry([box_patch((0, 0, 0), (1, 1, 1), region, name="cube")])


def two_patch_cube() -> MultipatchGeometry:
    return MultipatchGeometry([
        box_patch((0, 0, 0), (1, 1, 1), name="left"),
        box_patch((1, 0, 0), (2, 1, 1), name="right"),
    ])


def _rot(k):
    c, s = [(1, 0), (0, 1), (-1, 0), (0, -1)][k % 4]
    return np.array([[c, -s], [s, c]], float)


def _ring_patches(r_in, r_out, z0, z1, region, material, prefix):
    """Four trapezoid patches filling the square ring between half-widths r_in and r_out."""
    out = []
    for k in range(4):
        R = _rot(k)
        quad = [R @ np.array(p) for p in [(r_in, -r_in), (r_out, -r_out), (r_in, r_in), (r_out, r_out)]]
        # parameter order: u radial, v tangential
        xy = [quad[0], quad[1], quad[2], quad[3]]
        corners = [np.r_[xy[i & 3], z] for z in (z0, z1) for i in range(4)]
        out.append(hexa_patch(corners, region, material, f"{prefix}{k}"))
    return out


def square_washer(hole=5e-3, conductor=10e-3, box=20e-3, half_height=5e-3, box_half_height=15e-3,
                  material="copper") -> MultipatchGeometry:
    """Square washer conductor (a square torus) centered in an insulating box.

    The xy cross-section uses nine columns: the central hole square, four
    conductor trapezoids and four outer trapezoids.  Each column is split
    into three layers in z; the conductor is the ring in the middle layer.
    27 patches in total.
    """
    zs = [-box_half_height, -half_height, half_height, box_half_height]
    patches = []
    for layer in range(3):
        z0, z1 = zs[layer], zs[layer + 1]
        mid = layer == 1
        patches.append(box_patch((-hole, -hole, z0), (hole, hole, z1), name=f"hole{layer}"))
        patches += _ring_patches(hole, conductor, z0, z1, "conductor" if mid else "insulator",
                                 material if mid else "air", f"ring{layer}_")
        patches += _ring_patches(conductor, box, z0, z1, "insulator", "air", f"outer{layer}_")
    return MultipatchGeometry(patches)


def quarter_annulus(r_in=1.0, r_out=2.0, height=1.0, region="insulator", material="air") -> Patch:
    """Rational quarter annulus: radial direction linear, angular quadratic NURBS, z linear."""
    w = np.sqrt(0.5)
    pts, wts = [], []
    for z in (0.0, height):
        for ang, wt in ((0, 1.0), (1, w), (2, 1.0)):
            for r in (r_in, r_out):
                if ang == 0:
                    p = (r, 0.0)
                elif ang == 1:
                    p = (r, r)
                else:
                    p = (0.0, r)
                pts.append((p[0], p[1], z))
                wts.append(wt)
    return Patch((_LIN, _QUAD, _LIN), np.array(pts), np.array(wts), region, material, "quarter_annulus")


def quarter_annulus_geometry(**kw) -> MultipatchGeometry:
    return MultipatchGeometry([quarter_annulus(**kw)])


def _sector_points(inner, outer, z0, z1, k):
    """Control grid of a 90-degree sector column centred on the direction k*90 deg.

    ``inner``/``outer`` are 'square:<half width>' or 'circle:<radius>' boundary
    curves; u runs from inner to outer, v counterclockwise, w along z.
    """
    R = _rot(k)
    w_arc = np.sqrt(0.5)

    def curve(spec):
        kind, val = spec
        if kind == "square":
            pts = [(val, -val), (val, 0.0), (val, val)]
            wts = [1.0, 1.0, 1.0]
        else:
            c = val * w_arc
            pts = [(c, -c), (val / w_arc, 0.0), (c, c)]
            wts = [1.0, w_arc, 1.0]
        return [R @ np.array(p) for p in pts], wts

    (pi, wi), (po, wo) = curve(inner), curve(outer)
    pts, wts = [], []
    for z in (z0, z1):
        for j in range(3):
            for xy, w in ((pi[j], wi[j]), (po[j], wo[j])):
                pts.append((xy[0], xy[1], z))
                wts.append(w)
    return np.array(pts), np.array(wts)


def circular_washer(hole=5e-3, conductor=10e-3, core=2.5e-3, box=20e-3, half_height=5e-3,
                    box_half_height=15e-3, material="copper") -> MultipatchGeometry:
    """Hollow cylinder conductor in an insulating box, built from rational sectors.

    Each z layer has 13 columns: a central square, four square-to-circle
    sectors up to the hole radius, four quarter-annulus conductor sectors
    and four circle-to-square sectors out to the box.  The conductor is the
    annulus of the middle layer; 39 patches in total.  Circular arcs are
    exact (quadratic NURBS, middle weight sqrt(2)/2).
    """
    zs = [-box_half_height, -half_height, half_height, box_half_height]
    rings = [(("square", core), ("circle", hole)), (("circle", hole), ("circle", conductor)),
             (("circle", conductor), ("square", box))]
    patches = []
    for layer in range(3):
        z0, z1 = zs[layer], zs[layer + 1]
        patches.append(box_patch((-core, -core, z0), (core, core, z1), name=f"core{layer}"))
        for r, (inner, outer) in enumerate(rings):
            cond = layer == 1 and r == 1
            for k in range(4):
                pts, wts = _sector_points(inner, outer, z0, z1, k)
                patches.append(Patch((_LIN, _QUAD, _LIN), pts, wts, "conductor" if cond else "insulator",
                                     material if cond else "air", f"sector{layer}_{r}_{k}"))
    return MultipatchGeometry(patches)


HOLE_SITES = [(i, j) for j in (2, 4, 6) for i in (2, 4, 6)]


def plate_blocks(nholes: int) -> np.ndarray:
    """Boolean conductor mask over the 9x9x3 block grid of the N-hole plate."""
    if not 0 <= nholes <= len(HOLE_SITES):
        raise ValueError(f"number of holes must be in 0..{len(HOLE_SITES)}")
    mask = np.zeros((3, 9, 9), bool)  # [layer, j, i]
    mask[1, 1:8, 1:8] = True
    for i, j in HOLE_SITES[:nholes]:
        mask[1, j, i] = False
    return mask


def n_hole_plate(nholes: int, block=10e-3, thickness=5e-3, material="aluminium") -> MultipatchGeometry:
    """Plate with ``nholes`` square holes inside an insulating box.

    The mesh is fixed: a 9x9x3 grid of box patches.  The plate is the inner
    7x7 block of the middle layer and holes are created only by relabeling
    blocks as insulator, so patch layout and vertex numbering do not depend
    on ``nholes``.
    """
    mask = plate_blocks(nholes)
    xs = (np.arange(10) - 4.5) * block
    zs = np.array([-1.5, -0.5, 0.5, 1.5]) * thickness
    patches = []
    for k in range(3):
        for j in range(9):
            for i in range(9):
                cond = mask[k, j, i]
                patches.append(box_patch((xs[i], xs[j], zs[k]), (xs[i + 1], xs[j + 1], zs[k + 1]),
                                         "conductor" if cond else "insulator",
                                         material if cond else "air", f"b{i}_{j}_{k}"))
    return MultipatchGeometry(patches)


def relabel(geom: MultipatchGeometry, conductor_mask) -> MultipatchGeometry:
    """Same patches and discretization with new conductor/insulator tags."""
    mask = np.asarray(conductor_mask, bool).ravel()
    new = []
    for p, c in zip(geom.patches, mask):
        new.append(Patch(p.kvs, p.points, p.weights, "conductor" if c else "insulator",
                         p.material if p.is_conductor == c else ("aluminium" if c else "air"), p.name))
    return MultipatchGeometry(new, geom.kvs, geom.interfaces)


# problem files ---------------------------------------------------------------

WASHER_SIGMA = 3.256e7
MAINS_OMEGA = 2 * np.pi * 50


def _problem(geom, materials, source=None, degree=1, elements=1, holes=()):
    from .formulations import Material, PhysicalConfig
    from .problem import Discretization, ProblemFile
    from .sources import MU0

    mats = {name: Material(MU0, s) for name, s in materials}
    cfg = PhysicalConfig(MAINS_OMEGA, mats, source)
    return ProblemFile(geom, cfg, Discretization(degree, (elements,) * 3, 1.0), [list(h) for h in holes])


def fixture_problem(name: str, **kw):
    """:class:`ProblemFile` of a shipped configuration.

    Names: ``cube``, ``two_patch``, ``washer`` (square hole, polynomial),
    ``annulus_washer`` (circular hole, rational), ``quarter_annulus`` and
    ``plate`` (``plate`` takes ``nholes``; its hole list allows relabeling
    up to nine holes).
    """
    from .sources import CircularLoop

    loop = CircularLoop(0.05, 100.0, (0.0, 0.0, 0.0))
    if name == "cube":
        return _problem(unit_cube(), [("air", 0.0)])
    if name == "two_patch":
        return _problem(two_patch_cube(), [("air", 0.0)])
    if name == "washer":
        return _problem(square_washer(), [("air", 0.0), ("copper", WASHER_SIGMA)], loop, 2, 2)
    if name == "annulus_washer":
        return _problem(circular_washer(), [("air", 0.0), ("copper", WASHER_SIGMA)], loop, 2, 3)
    if name == "quarter_annulus":
        return _problem(quarter_annulus_geometry(), [("air", 0.0)], degree=2)
    if name == "plate":
        nholes = kw.get("nholes", 0)
        holes = [[f"b{i}_{j}_1"] for i, j in HOLE_SITES]
        return _problem(n_hole_plate(nholes), [("air", 0.0), ("aluminium", 3.526e7)],
                        CircularLoop(0.06, 100.0, (0.0, 0.0, 0.03)), 1, 1, holes[nholes:])
    raise KeyError(f"unknown fixture {name!r}")


SHIPPED = ("cube", "two_patch", "washer", "annulus_washer", "quarter_annulus", "plate")
