"""Evaluation of glued spline fields: quadrature-point values, point
location by inverse mapping, line sampling and reporting conventions."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .assembly import Assembler
from .derham import build_space, eval_geometry
from .formulations import EddyCurrentProblem, Solution


class PointNotFoundError(ValueError):
    def __init__(self, point):
        super().__init__(f"point {np.round(point, 12).tolist()} lies outside the geometry")
        self.point = point


# quadrature-point values -----------------------------------------------------

def scalar_field_at_quadrature(asm: Assembler, q: int, coeffs: np.ndarray) -> np.ndarray:
    """S^0 field of glued coefficients at the quadrature points of patch ``q``."""
    return asm.basis(q, 0)[0] @ (asm.cx.local_map(q, 0) @ coeffs)


def scalar_l2_error(asm: Assembler, coeffs: np.ndarray, exact) -> float:
    """``||u_h - u||_L2`` of an S^0 field against an analytic ``exact(x) -> (m,)``."""
    tot = 0.0
    for q in range(asm.num_patches):
        Q = asm.quad(q)
        e = scalar_field_at_quadrature(asm, q, coeffs) - exact(Q.x)
        tot += float(np.sum(Q.dV * np.abs(e) ** 2))
    return float(np.sqrt(tot))


def edge_field_at_quadrature(asm: Assembler, q: int, coeffs: np.ndarray) -> np.ndarray:
    """Covariant S^1 field of glued coefficients at the quadrature points of patch ``q``."""
    loc = asm.cx.local_map(q, 1) @ coeffs
    sp1 = asm.space(q, 1)
    E = asm.basis(q, 1)
    ref = np.stack([E[c] @ loc[sp1.offsets[c]: sp1.offsets[c + 1]] for c in range(3)], axis=1)
    return np.einsum("mji,mj->mi", asm.quad(q).jinv, ref)  # J^{-T} ref


def face_field_at_quadrature(asm: Assembler, q: int, coeffs: np.ndarray) -> np.ndarray:
    """Piola S^2 field of glued coefficients at the quadrature points of patch ``q``."""
    loc = asm.cx.local_map(q, 2) @ coeffs
    sp2 = asm.space(q, 2)
    E = asm.basis(q, 2)
    ref = np.stack([E[c] @ loc[sp2.offsets[c]: sp2.offsets[c + 1]] for c in range(3)], axis=1)
    Q = asm.quad(q)
    return np.einsum("mij,mj->mi", Q.jac, ref) / Q.det[:, None]


def current_at_quadrature(prob: EddyCurrentProblem, sol: Solution, q: int) -> np.ndarray:
    if sol.formulation == "aphi":
        return prob.sigma[q] * edge_field_at_quadrature(prob.asm, q, sol.e_field)
    return face_field_at_quadrature(prob.asm, q, sol.current_coefficients)


def conductor_l2(prob: EddyCurrentProblem, sol: Solution, other: Optional[Solution] = None,
                 other_prob: Optional[EddyCurrentProblem] = None) -> float:
    """``||J||_L2(Vc)``, or ``||J - J_other||`` when ``other`` is given."""
    tot = 0.0
    op = other_prob or prob
    for q in prob.asm.patches("Vc"):
        J = current_at_quadrature(prob, sol, q)
        if other is not None:
            J = J - current_at_quadrature(op, other, q)
        tot += float(np.sum(prob.asm.quad(q).dV * np.sum(np.abs(J) ** 2, axis=1)))
    return float(np.sqrt(tot))


def relative_difference(prob, a: Solution, b: Solution, prob_b=None) -> float:
    return conductor_l2(prob, a, b, prob_b) / conductor_l2(prob, a)


def joule_power(prob: EddyCurrentProblem, sol: Solution) -> float:
    """``Re int_Vc rho |J|^2``."""
    tot = 0.0
    for q in prob.asm.patches("Vc"):
        J = current_at_quadrature(prob, sol, q)
        tot += float(np.sum(prob.asm.quad(q).dV * np.sum(np.abs(J) ** 2, axis=1))) / prob.sigma[q]
    return tot


# point location ------------------------------------------------------------

def inverse_map(patch, x, tol: float = 1e-10, maxiter: int = 50) -> Optional[np.ndarray]:
    """Newton iteration for ``F(xi) = x``; ``None`` if no preimage in the closed cube."""
    x = np.asarray(x, float)
    P = patch.points
    lo, hi = P.min(axis=0), P.max(axis=0)
    scale = max(float(np.max(hi - lo)), 1e-300)
    if np.any(x < lo - 1e-9 * scale) or np.any(x > hi + 1e-9 * scale):
        return None
    xi = np.full(3, 0.5)
    for _ in range(maxiter):
        y, J, _ = patch.point_geometry(xi[None, :])
        step = np.linalg.solve(J[0], y[0] - x)
        xi = np.clip(xi - step, -0.05, 1.05)
        # iterate past the residual tolerance until the parametric step stalls
        if np.abs(step).max() <= 1e-14:
            break
    y, _, _ = patch.point_geometry(np.clip(xi, 0, 1)[None, :])
    if np.any(xi < -1e-9) or np.any(xi > 1 + 1e-9) or np.linalg.norm(y[0] - x) > 10 * tol * scale:
        return None
    return np.clip(xi, 0.0, 1.0)


def locate(geom, x, patches=None) -> tuple:
    """First patch (lowest id) containing ``x`` and the parametric preimage."""
    cand = range(geom.num_patches) if patches is None else patches
    for q in cand:
        xi = inverse_map(geom.patches[q], x)
        if xi is not None:
            return q, xi
    raise PointNotFoundError(np.asarray(x, float))


# point values ----------------------------------------------------------------

def _point_values(geom, cx, q, xi, coeffs, k):
    space = build_space(geom.kvs[q], k)
    loc = cx.local_map(q, k) @ coeffs
    xi2 = np.atleast_2d(xi)
    ref = [space.point_matrix(c, xi2) @ loc[space.offsets[c]: space.offsets[c + 1]] for c in range(space.ncomp)]
    _, J, det = eval_geometry(geom.patches[q], xi2)
    if k == 0:
        return ref[0]
    if k == 3:
        return ref[0] / det
    ref = np.stack(ref, axis=1)
    if k == 1:
        return np.einsum("mji,mj->mi", np.linalg.inv(J), ref)
    return np.einsum("mij,mj->mi", J, ref) / det[:, None]


def evaluate(prob: EddyCurrentProblem, sol: Solution, points, quantity: str = "J") -> np.ndarray:
    """Complex ``J``, ``H`` (total) or ``B`` at physical points, shape (m, 3)."""
    pts = np.atleast_2d(np.asarray(points, float))
    out = np.zeros((len(pts), 3), complex)
    geom, cx = prob.geom, prob.cx
    for i, x in enumerate(pts):
        q, xi = locate(geom, x)
        if quantity == "J":
            if not geom.patches[q].is_conductor:
                continue
            if sol.formulation == "aphi":
                out[i] = prob.sigma[q] * _point_values(geom, cx, q, xi, sol.e_field, 1)[0]
            else:
                out[i] = _point_values(geom, cx, q, xi, sol.current_coefficients, 2)[0]
        elif quantity in ("H", "B"):
            if sol.formulation == "aphi":
                Bv = _point_values(geom, cx, q, xi, prob.C @ sol.edge_field, 2)[0]
                out[i] = Bv if quantity == "B" else Bv / prob.mu[q]
            else:
                Hv = _point_values(geom, cx, q, xi, sol.edge_field, 1)[0] + prob.config.source_field(x)[0]
                out[i] = Hv if quantity == "H" else prob.mu[q] * Hv
        else:
            raise ValueError(f"unknown quantity {quantity!r}")
    return out


def line_points(x0, x1, n: int) -> np.ndarray:
    if n < 2:
        raise ValueError("a sampling line needs at least 2 points")
    t = np.linspace(0.0, 1.0, n)[:, None]
    return (1 - t) * np.asarray(x0, float) + t * np.asarray(x1, float)


def signed_magnitude(z) -> np.ndarray:
    """``sign(Re z) * |z|`` with ``sign(0) = +1``."""
    z = np.asarray(z, complex)
    return np.where(z.real < 0, -1.0, 1.0) * np.abs(z)


def at_time(z, omega: float, t: float):
    """Instantaneous value ``Re(z exp(i omega t))``."""
    return np.real(np.asarray(z) * np.exp(1j * omega * t))
