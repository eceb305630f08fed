"""Command line interface: ``igacohom <command> PROBLEM [options]``.

Commands
--------
info        space dimensions, Euler characteristics and expected generators
cohomology  compute generators, write coefficients and support sizes
solve       solve the eddy-current problem, write coefficients and VTK
sample      signed-magnitude trace of a field component along a line (CSV)
scaling     cohomology timings for increasing hole counts on one mesh (CSV)
fixture     write a shipped problem file

Exit status: 0 on success, 1 for input errors, 2 for usage errors (argparse),
3 for solver or topology failures.
"""
from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import fixtures
from .cohomology import CochainError, PathologicalTreeError, compute_generators, expected_betti
from .fields import PointNotFoundError, evaluate, joule_power, line_points, signed_magnitude
from .formulations import (ConstraintConflictError, EddyCurrentProblem, NoConductorError, SolverError,
                           solve)
from .multipatch import GluingError, TopologyError, extract_interface, glue
from .problem import ProblemFile, ProblemSyntaxError, fixture_path, parse_problem, write_problem
from .vtk import cochain_cell_vectors, export_vtk, sample_cells

STAGES = ("mesh_io", "surface_cohomology", "step1", "step2", "step3", "total")


class CommandError(Exception):
    def __init__(self, msg: str, status: int = 1):
        super().__init__(msg)
        self.status = status


# helpers ---------------------------------------------------------------------

def _load(args) -> ProblemFile:
    src = args.problem
    path = fixture_path(src[len("fixture:"):]) if src.startswith("fixture:") else Path(src)
    if not path.exists():
        raise CommandError(f"problem file {src} not found")
    prob = parse_problem(path)
    d = prob.discretization
    if getattr(args, "degree", None) is not None:
        d.degree = args.degree
    if getattr(args, "elements", None) is not None:
        d.elements = (args.elements,) * 3
    if getattr(args, "omega", None) is not None:
        prob.config.omega = args.omega
    if getattr(args, "formulation", None) is not None:
        prob.config.formulation = args.formulation
    return prob


def _vector(text: str) -> np.ndarray:
    try:
        v = np.array([float(s) for s in text.split(",")])
    except ValueError:
        raise CommandError(f"bad point {text!r}, expected x,y,z") from None
    if v.size != 3:
        raise CommandError(f"bad point {text!r}, expected x,y,z")
    return v


def _parse_line(spec: str) -> tuple:
    parts = spec.split(":")
    if len(parts) != 3:
        raise CommandError(f"bad --line {spec!r}, expected x0,y0,z0:x1,y1,z1:n")
    try:
        n = int(parts[2])
    except ValueError:
        raise CommandError(f"bad sample count {parts[2]!r}") from None
    if n < 2:
        raise CommandError("a sampling line needs at least 2 points")
    return _vector(parts[0]), _vector(parts[1]), n


def _int_list(text: str) -> list:
    try:
        vals = [int(s) for s in text.split(",") if s]
    except ValueError:
        raise CommandError(f"bad list {text!r}, expected comma-separated integers") from None
    if not vals:
        raise CommandError("empty hole list")
    return vals


def _out(args, default: str) -> Path:
    return Path(args.output) if args.output else Path(default)


def _problem_with_conductor(prob: ProblemFile) -> EddyCurrentProblem:
    ep = EddyCurrentProblem(prob.discretized(), prob.config)
    if not ep.has_conductor:
        raise NoConductorError("no conductor: the geometry has no patch with region 'conductor', "
                               "there are no eddy currents to compute")
    return ep


# commands ----------------------------------------------------------------------

def cmd_info(args) -> int:
    prob = _load(args)
    geom = prob.discretized()
    cx = glue(geom)
    d = prob.discretization
    print(f"patches: {geom.num_patches} ({len(geom.conductor_patches)} conductor)")
    print(f"degree: {d.degree}  elements: {','.join(map(str, d.elements))}")
    names = ("S^0", "S^1", "S^2", "S^3")
    print("dimensions: " + "  ".join(f"{n}={c}" for n, c in zip(names, cx.counts)))
    print(f"euler characteristic (V): {cx.euler_characteristic}")
    if cx.hex_conductor.any() and not cx.hex_conductor.all():
        gamma = extract_interface(cx)
        chi = gamma.euler_characteristic
        print(f"interface: {len(gamma.vertices)} vertices, {len(gamma.edges)} edges, {len(gamma.quads)} quads, "
              f"euler characteristic {chi}")
        print(f"expected generators: {expected_betti(gamma)}")
    else:
        print("expected generators: 0 (no conductor/insulator interface)")
    return 0


def cmd_cohomology(args) -> int:
    prob = _load(args)
    cx = glue(prob.discretized())
    res = compute_generators(cx)
    basis = res.basis
    print(f"candidates: {basis.candidates}  selected: {len(basis)}  expected: {basis.expected}")
    for i, g in enumerate(basis.generators):
        print(f"generator {i}: support {g.support_size} edges, from surface generator {g.source}")
    print("timings [s]: " + "  ".join(f"{k}={v:.4f}" for k, v in res.timings.items()))
    out = _out(args, "generators.txt")
    with open(out, "w") as fh:
        for i, g in enumerate(basis.generators):
            nz = np.flatnonzero(g.coefficients)
            fh.write(f"# generator {i} support {g.support_size} source {g.source}\n")
            fh.writelines(f"{int(e)} {float(g.coefficients[e])!r}\n" for e in nz)
    print(f"wrote {out}")
    if args.vtk:
        cells = {f"generator{i}": cochain_cell_vectors(cx, g.cochain) for i, g in enumerate(basis.generators)}
        export_vtk(args.vtk, cx, cells, title="cohomology generators")
        print(f"wrote {args.vtk}")
    return 0


def cmd_solve(args) -> int:
    prob = _load(args)
    ep = _problem_with_conductor(prob)
    sol = solve(ep)
    print(f"formulation: {sol.formulation}  unknowns: {sol.stats['unknowns']}  nnz: {sol.stats['nnz']}")
    print(f"relative residual: {sol.residual:.3e}  solve time: {sol.stats['time']:.2f} s")
    print(f"joule power: {joule_power(ep, sol):.6e} W")
    out = _out(args, "solution.npz")
    arrays = {"edge_field": sol.edge_field, "omega": np.array(sol.omega)}
    if sol.e_field is not None:
        arrays["e_field"] = sol.e_field
    arrays.update({f"block_{k.lstrip('_')}": v for k, v in sol.blocks.items()})
    np.savez(out, **arrays)
    print(f"wrote {out}")
    vtk_path = args.vtk or str(out.with_suffix(".vtk"))
    export_vtk(vtk_path, ep.cx, sample_cells(ep, sol), title=f"{sol.formulation} solution")
    print(f"wrote {vtk_path}")
    return 0


def cmd_sample(args) -> int:
    prob = _load(args)
    x0, x1, n = _parse_line(args.line)
    ep = _problem_with_conductor(prob)
    sol = solve(ep)
    pts = line_points(x0, x1, n)
    vals = evaluate(ep, sol, pts, args.quantity)[:, "xyz".index(args.component)]
    out = _out(args, "sample.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "Re", "Im", "signed_magnitude"])
        for p, v, s in zip(pts, vals, signed_magnitude(vals)):
            w.writerow([repr(float(c)) for c in (*p, v.real, v.imag, s)])
    print(f"wrote {out} ({n} points, {args.quantity}_{args.component})")
    return 0


class ScalingRow(NamedTuple):
    mean: np.ndarray  # per stage, seconds, in STAGES order
    std: np.ndarray
    median: np.ndarray
    generators: int
    runs: np.ndarray  # (repeat, len(STAGES))


def scaling_study(prob: ProblemFile, holes: list, repeat: int, path=None, warmup: int = 1) -> dict:
    """Per-stage wall-time statistics for each hole count.

    Every run rebuilds the complex from the same problem (``mesh_io``
    covers relabeling, discretization and gluing) and recomputes the
    generators.  The hole counts are interleaved round-robin within each
    repeat, so slow drift of the machine load affects all counts alike,
    and ``warmup`` untimed rounds come first so that one-off caches are
    not charged to the first count.
    """
    runs = {n: [] for n in holes}
    gens = {}
    for r in range(-warmup, repeat):
        for n in holes:
            t0 = time.perf_counter()
            cx = glue(prob.with_holes(n).discretized())
            t1 = time.perf_counter()
            res = compute_generators(cx)
            t = dict(res.timings)
            t["mesh_io"] = t1 - t0
            t["total"] = time.perf_counter() - t0
            gens[n] = len(res.basis)
            if r >= 0:
                runs[n].append([t[s] for s in STAGES])
    out = {}
    for n in holes:
        arr = np.array(runs[n]).reshape(repeat, len(STAGES))
        out[n] = ScalingRow(arr.mean(axis=0), arr.std(axis=0), np.median(arr, axis=0), gens[n], arr)
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["holes", "generators", "repeats"] + [f"{s}_{m}" for s in STAGES for m in ("mean", "std")])
            for n, row in out.items():
                w.writerow([n, row.generators, repeat] + [f"{v:.6e}" for pair in zip(row.mean, row.std) for v in pair])
    return out


def cmd_scaling(args) -> int:
    prob = _load(args)
    holes = _int_list(args.holes)
    if args.repeat < 1:
        raise CommandError("--repeat must be at least 1")
    for n in holes:
        if not 0 <= n <= len(prob.holes):
            raise CommandError(f"the problem defines {len(prob.holes)} holes, {n} requested")
    out = _out(args, "scaling.csv")
    res = scaling_study(prob, holes, args.repeat, out)
    for n, row in res.items():
        alg = row.mean[2:5].sum()
        print(f"holes={n} generators={row.generators} steps1-3={alg * 1e3:.2f} ms total={row.mean[-1] * 1e3:.2f} ms")
    print(f"wrote {out}")
    return 0


def cmd_fixture(args) -> int:
    kw = {"nholes": args.holes} if args.name == "plate" else {}
    if args.name not in fixtures.SHIPPED:
        raise CommandError(f"unknown fixture {args.name!r}; available: {', '.join(fixtures.SHIPPED)}")
    out = _out(args, f"{args.name}.iga")
    write_problem(fixtures.fixture_problem(args.name, **kw), out)
    print(f"wrote {out}")
    return 0


# parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="igacohom", description="Spline de Rham complexes, cohomology "
                                 "generators and eddy-current solvers on multipatch geometries.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, solver=False):
        p.add_argument("problem", help="problem file, or fixture:<name> for a shipped one")
        p.add_argument("--degree", type=int, help="override the spline degree")
        p.add_argument("--elements", type=int, help="override the elements per patch and direction")
        p.add_argument("-o", "--output", help="output file")
        if solver:
            p.add_argument("--formulation", choices=("hphi", "tomega", "aphi"))
            p.add_argument("--omega", type=float, help="angular frequency [rad/s]")

    common(sub.add_parser("info", help="dimensions and topology"))
    p = sub.add_parser("cohomology", help="compute cohomology generators")
    common(p)
    p.add_argument("--vtk", help="also write generator fields as VTK")
    p = sub.add_parser("solve", help="solve the eddy-current problem")
    common(p, solver=True)
    p.add_argument("--vtk", help="VTK output (default: next to the solution)")
    p = sub.add_parser("sample", help="sample a field along a line")
    common(p, solver=True)
    p.add_argument("--line", required=True, help="x0,y0,z0:x1,y1,z1:n")
    p.add_argument("--quantity", choices=("J", "H", "B"), default="J")
    p.add_argument("--component", choices=("x", "y", "z"), default="y")
    p = sub.add_parser("scaling", help="timing study over hole counts")
    common(p)
    p.add_argument("--holes", required=True, help="comma-separated hole counts, e.g. 1,2,4,8")
    p.add_argument("--repeat", type=int, default=20)
    p = sub.add_parser("fixture", help="write a shipped problem file")
    p.add_argument("name")
    p.add_argument("--holes", type=int, default=0, help="holes of the plate fixture")
    p.add_argument("-o", "--output")
    return ap


COMMANDS = {"info": cmd_info, "cohomology": cmd_cohomology, "solve": cmd_solve, "sample": cmd_sample,
            "scaling": cmd_scaling, "fixture": cmd_fixture}


def run_command(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except CommandError as exc:
        status, msg = exc.status, str(exc)
    except (NoConductorError, SolverError, ConstraintConflictError, TopologyError, PathologicalTreeError,
            CochainError) as exc:
        status, msg = 3, str(exc)
    except (ProblemSyntaxError, FileNotFoundError, PointNotFoundError, GluingError, KeyError, ValueError,
            OSError) as exc:
        status, msg = 1, str(exc).strip("'\"")
    print(f"error: {msg}", file=sys.stderr)
    return status


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
