"""H-phi, T-Omega and A-phi eddy-current solvers."""
import numpy as np
import pytest
import scipy.sparse as sp

from igacohom import fixtures as F
from igacohom.cohomology import CohomologyBasis, Generator
from igacohom.assembly import Assembler
from igacohom.fields import conductor_l2, evaluate, joule_power, relative_difference, scalar_l2_error
from igacohom.formulations import (
    ConstraintConflictError,
    EddyCurrentProblem,
    Material,
    NoConductorError,
    PhysicalConfig,
    interface_coupling,
    solve,
    solve_poisson,
    t_gauge_tree,
    _cell_sets,
)
from igacohom.multipatch import MultipatchGeometry
from igacohom.sources import MU0, CircularLoop, UniformField

LOOP = CircularLoop(0.05, 100.0)
OMEGA = F.MAINS_OMEGA


def config(omega=OMEGA, source=LOOP, sigma=F.WASHER_SIGMA, **kw):
    mats = {"air": Material(MU0, 0.0), "copper": Material(MU0, sigma)}
    return PhysicalConfig(omega, mats, source, **kw)


def washer_problem(p=1, nel=1, circular=False, **kw):
    geom = (F.circular_washer() if circular else F.square_washer()).discretize(p, nel)
    return EddyCurrentProblem(geom, config(**kw))


def box_in_box(p=1):
    patches = []
    for k in range(3):
        for j in range(3):
            for i in range(3):
                c = (i, j, k) == (1, 1, 1)
                patches.append(F.box_patch(np.array((i, j, k)) * 1e-2, np.array((i + 1, j + 1, k + 1)) * 1e-2,
                                           "conductor" if c else "insulator", "copper" if c else "air"))
    return MultipatchGeometry(patches).discretize(p, 1)


@pytest.fixture(scope="module")
def washer():
    prob = washer_problem(2, 1)
    return prob, {f: solve(prob, f) for f in ("hphi", "tomega", "aphi")}


@pytest.fixture(scope="module")
def annulus():
    prob = washer_problem(2, 2, circular=True)
    return prob, {f: solve(prob, f) for f in ("hphi", "aphi")}


class TestNoConductor:
    def test_uniform_source_is_reproduced(self):
        geom = F.two_patch_cube().discretize(2, 2)
        prob = EddyCurrentProblem(geom, config(source=UniformField((0.0, 0.0, 1.0))))
        sol = solve(prob, "hphi")
        assert sol.blocks["H_c"].size == 0 and sol.blocks["c"].size == 0
        assert np.abs(sol.blocks["phi"]).max() < 1e-12
        assert np.abs(sol.current_coefficients).max() < 1e-15
        H = evaluate(prob, sol, [[0.3, 0.4, 0.5], [1.7, 0.2, 0.9]], "H")
        np.testing.assert_allclose(H, [[0, 0, 1], [0, 0, 1]], atol=1e-12)

    def test_other_formulations_need_a_conductor(self):
        prob = EddyCurrentProblem(F.unit_cube().discretize(1, 1), config())
        for f in ("tomega", "aphi"):
            with pytest.raises(NoConductorError, match="no conductor"):
                solve(prob, f)


class TestBasics:
    def test_t_omega_static_without_source(self):
        prob = washer_problem(1, 1, omega=0.0, source=None)
        sol = solve(prob, "tomega")
        assert not np.any(sol.edge_field)

    def test_t_omega_low_frequency(self):
        sol = solve(washer_problem(1, 1, omega=1e-6), "tomega")
        assert np.all(np.isfinite(sol.edge_field)) and sol.residual < 1e-8

    def test_a_phi_without_source(self):
        sol = solve(washer_problem(1, 1, source=None), "aphi")
        assert not np.any(sol.edge_field) and not np.any(sol.e_field)

    def test_invalid_options(self):
        with pytest.raises(ValueError):
            solve(washer_problem(1, 1, omega=0.0), "hphi")
        with pytest.raises(ValueError):
            solve(washer_problem(1, 1), "bogus")
        with pytest.raises(ValueError):
            solve(washer_problem(1, 1, gauge="none"), "aphi")
        with pytest.raises(ValueError):
            washer_problem(1, 1, omega=-1.0)
        with pytest.raises(ValueError, match="non-positive conductivity"):
            washer_problem(1, 1, sigma=0.0)

    def test_unknown_material(self):
        geom = F.square_washer().discretize(1, 1)
        with pytest.raises(ValueError, match="unknown material"):
            EddyCurrentProblem(geom, PhysicalConfig(OMEGA, {"air": Material()}, LOOP))

    def test_residuals(self, washer):
        for sol in washer[1].values():
            assert sol.residual <= 1e-8

    def test_joule_power_nonnegative(self, washer):
        prob, sols = washer
        for sol in sols.values():
            assert joule_power(prob, sol) > 0


class TestCrossFormulation:
    def test_h_phi_equals_t_omega(self, washer):
        prob, s = washer
        assert relative_difference(prob, s["hphi"], s["tomega"]) <= 1e-8

    def test_a_phi_close(self, annulus):
        prob, s = annulus
        assert relative_difference(prob, s["hphi"], s["aphi"]) <= 2e-2

    def test_gauges_agree(self):
        prob = washer_problem(2, 1, circular=True)
        tree = solve(prob, "aphi")
        reg = solve(EddyCurrentProblem(prob.geom, config(gauge="sigma_reg"), prob.cx), "aphi")
        assert relative_difference(prob, tree, reg) < 1e-3


class TestInvariances:
    def test_frequency_conductivity_scaling(self):
        a = washer_problem(1, 1)
        b = washer_problem(1, 1, omega=10 * OMEGA, sigma=F.WASHER_SIGMA / 10)
        for f in ("hphi", "tomega"):
            sa, sb = solve(a, f), solve(b, f)
            assert relative_difference(a, sa, sb, b) < 1e-10

    def test_generator_is_needed(self):
        with_gen = washer_problem(2, 1)
        without = EddyCurrentProblem(with_gen.geom, config(use_generators=False), with_gen.cx)
        sa, sb = solve(with_gen, "hphi"), solve(without, "hphi")
        assert sb.blocks["c"].size == 0
        assert relative_difference(with_gen, sa, sb, without) > 0.1

    def test_patch_permutation(self):
        geom = F.circular_washer()
        perm = MultipatchGeometry(geom.patches[::-1])
        pa = EddyCurrentProblem(geom.discretize(1, 1), config())
        pb = EddyCurrentProblem(perm.discretize(1, 1), config())
        r = np.linspace(6e-3, 9e-3, 4)
        ang = np.linspace(0.1, 6.0, 5)
        pts = np.array([[ri * np.cos(t), ri * np.sin(t), z] for ri in r for t in ang for z in (-2e-3, 3e-3)])
        for f in ("hphi", "aphi"):
            Ja = evaluate(pa, solve(pa, f), pts, "J")
            Jb = evaluate(pb, solve(pb, f), pts, "J")
            assert np.abs(Ja - Jb).max() <= 1e-12 * np.abs(Ja).max()

    def test_complex_symmetric(self, washer):
        for f in ("hphi", "aphi"):
            S = washer[1][f].system[0]
            assert abs(S - S.T).max() <= 1e-13 * abs(S).max()


class TestInterfaceCoupling:
    def test_washer_has_one_generator_column(self, washer):
        prob, s = washer
        plan = interface_coupling(prob.cx, prob.G, prob.basis)
        assert plan.P[:, plan.blocks["c"]].shape[1] == 1
        assert s["hphi"].blocks["c"].size == 1

    def test_contractible_conductor(self):
        prob = EddyCurrentProblem(box_in_box(2), config())
        plan = interface_coupling(prob.cx, prob.G, prob.basis)
        assert plan.blocks["c"].stop == plan.blocks["c"].start
        sets = _cell_sets(prob.cx)
        Pphi = plan.P[:, plan.blocks["phi"]]
        expect = prob.G[:, plan.index["phi"]].toarray() * sets["ins_e"][:, None]
        np.testing.assert_array_equal(Pphi.toarray(), expect)

    def test_interface_rows_sum_to_zero(self, washer):
        prob, _ = washer
        plan = interface_coupling(prob.cx, prob.G, prob.basis)
        gam = _cell_sets(prob.cx)["gam_e"]
        rows = np.asarray(plan.P[:, plan.blocks["phi"]].sum(axis=1)).ravel()
        assert not rows[gam].any()
        # interior conductor edges are free unknowns, interface edges are not
        assert not np.intersect1d(plan.index["H_c"], np.flatnonzero(gam)).size

    def test_generator_on_boundary_conflicts(self, washer):
        prob, _ = washer
        cx = prob.cx
        bad = np.zeros(len(cx.edges), np.int64)
        bad[np.flatnonzero(cx.boundary_cells[1])[0]] = 1
        basis = CohomologyBasis([Generator(bad, bad.astype(float), 0)], 1, 1)
        with pytest.raises(ConstraintConflictError):
            interface_coupling(cx, prob.G, basis)

    def test_t_gauge_tree(self, washer):
        prob, _ = washer
        tree = t_gauge_tree(prob.cx)
        s = _cell_sets(prob.cx)
        assert not np.any(tree & ~s["cint_e"])
        inner = s["cond_v"] & ~s["gam_v"] & ~s["bnd_v"]
        assert tree.sum() == inner.sum()


def section_current(prob, sol, r0, r1, z0, z1, n=16):
    """Current through the half-plane y=0 (normal +y) over x in [r0, r1], z in [z0, z1]."""
    xg, wg = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (r1 - r0) * (xg + 1) + r0
    z = 0.5 * (z1 - z0) * (xg + 1) + z0
    pts = np.array([[a, 0.0, c] for c in z for a in x])
    w = np.outer(wg, wg).ravel() * 0.25 * (r1 - r0) * (z1 - z0)
    return w @ evaluate(prob, sol, pts, "J")[:, 1]


def washer_breaks(nel):
    """Physical element breaks of the circular washer along x (radius) and z."""
    r = np.concatenate([np.linspace(a, b, nel + 1) for a, b in ((2.5e-3, 5e-3), (5e-3, 10e-3), (10e-3, 20e-3))])
    z = np.concatenate([np.linspace(a, a + 10e-3, nel + 1) for a in (-15e-3, -5e-3, 5e-3)])
    return {0: r, 2: z}


def conductor_current(prob, sol, nel):
    xs, zs = np.linspace(5e-3, 10e-3, nel + 1), np.linspace(-5e-3, 5e-3, nel + 1)
    return sum(section_current(prob, sol, a, b, c, d, 8)
               for a, b in zip(xs[:-1], xs[1:]) for c, d in zip(zs[:-1], zs[1:]))


def circulation(prob, sol, corners, breaks, n=8):
    """Line integral of H around an axis-aligned polygon, split at the element breaks."""
    xg, wg = np.polynomial.legendre.leggauss(n)
    tot = 0.0
    for a, b in zip(corners, np.roll(corners, -1, axis=0)):
        d = np.flatnonzero(b - a)[0]
        inner = [(c - a[d]) / (b[d] - a[d]) for c in breaks[d] if min(a[d], b[d]) < c < max(a[d], b[d])]
        s = np.unique(np.r_[0.0, 1.0, inner])
        t = np.concatenate([0.5 * (t1 - t0) * (xg + 1) + t0 for t0, t1 in zip(s[:-1], s[1:])])
        w = np.concatenate([0.5 * (t1 - t0) * wg for t0, t1 in zip(s[:-1], s[1:])])
        tot += w @ (evaluate(prob, sol, a + t[:, None] * (b - a), "H") @ (b - a))
    return tot


class TestAmpere:
    # rectangle right-handed about +y, enclosing the conductor section x in [5, 10] mm, |z| <= 5 mm
    CORNERS = np.array([[3e-3, 0, -8e-3], [3e-3, 0, 8e-3], [14e-3, 0, 8e-3], [14e-3, 0, -8e-3]])

    def test_h_phi_stokes(self, annulus):
        prob, s = annulus
        I = conductor_current(prob, s["hphi"], 2)
        circ = circulation(prob, s["hphi"], self.CORNERS, washer_breaks(2))
        assert abs(I) > 0
        assert abs(circ - I) <= 1e-6 * abs(I)

    def test_a_phi_current_matches_h_phi_circulation(self):
        prob = washer_problem(3, 2, circular=True)
        I = conductor_current(prob, solve(prob, "aphi"), 2)
        circ = circulation(prob, solve(prob, "hphi"), self.CORNERS, washer_breaks(2))
        assert abs(circ - I) <= 1e-2 * abs(circ)


class TestPoisson:
    @staticmethod
    def bubble(x):
        return x[:, 0] * (2 - x[:, 0]) * x[:, 1] * (1 - x[:, 1]) * x[:, 2] * (1 - x[:, 2])

    @staticmethod
    def minus_laplacian(x):
        a, b, c = x[:, 0] * (2 - x[:, 0]), x[:, 1] * (1 - x[:, 1]), x[:, 2] * (1 - x[:, 2])
        return 2 * (b * c + a * c + a * b)

    def test_polynomial_in_space_is_exact(self):
        geom = F.two_patch_cube().discretize(2, 2)
        u, asm = solve_poisson(geom, self.minus_laplacian)
        assert scalar_l2_error(asm, u, self.bubble) < 1e-13

    def test_error_decreases(self):
        errs = []
        for nel in (1, 2, 4):
            geom = F.two_patch_cube().discretize(1, nel)
            u, asm = solve_poisson(geom, self.minus_laplacian)
            errs.append(scalar_l2_error(Assembler(geom, asm.cx, npts=4), u, self.bubble))
        rates = np.log2(np.array(errs[:-1]) / errs[1:])
        assert np.all(rates > 1.5)
