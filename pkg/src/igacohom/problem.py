"""Reading and writing of plain-text problem files.

The format (version 1) is line oriented.  ``#`` starts a comment; blank
lines are ignored.  Header keywords take ``key=value`` tokens::

    iga-problem 1
    discretization degree=2 elements=1,1,1 grading=1.0
    solver omega=314.159 formulation=hphi gauge=tree boundary=natural generators=yes
    material name=copper mu=1.2566e-06 sigma=58000000.0
    source loop radius=0.05 current=100.0 center=0.0,0.0,0.0
    source uniform H=0.0,0.0,1.0
    interface 0 u1 1 u0
    hole core_1_1_1
    patch name=p0 region=conductor material=copper
    degrees 1 1 1
    knots u 0.0 0.0 1.0 1.0
    knots v 0.0 0.0 1.0 1.0
    knots w 0.0 0.0 1.0 1.0
    points
    0.0,0.0,0.0 1.0,0.0,0.0
    ...
    weights
    1.0 1.0
    ...
    end

Control points are listed one u-row per line (``n_u`` comma-separated
triples), rows ordered with v fastest then w.  The optional ``weights``
block mirrors the ``points`` rows.  Floats are written with ``repr`` so
that a parse/serialize round trip is lossless.  See ``docs/formats.md``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .derham import Patch
from .formulations import Material, PhysicalConfig
from .multipatch import FACE_NAMES, MultipatchGeometry
from .sources import CircularLoop, Coil, UniformField
from .splinecore import KnotVector

MAGIC = "iga-problem"
VERSION = 1
DATA_DIR = Path(__file__).parent / "data"


class ProblemSyntaxError(ValueError):
    """Parse failure with 1-based line and column."""

    def __init__(self, msg: str, line: int, column: int = 1, path: str = "<string>"):
        super().__init__(f"{path}:{line}:{column}: {msg}")
        self.line = line
        self.column = column
        self.path = path


@dataclass
class Discretization:
    degree: int = 1
    elements: tuple = (1, 1, 1)
    grading: float = 1.0


@dataclass(eq=False)
class ProblemFile:
    geometry: MultipatchGeometry
    config: PhysicalConfig
    discretization: Discretization = field(default_factory=Discretization)
    holes: list = field(default_factory=list)  # patch names turned insulating per hole

    def discretized(self) -> MultipatchGeometry:
        d = self.discretization
        return self.geometry.discretize(d.degree, d.elements, d.grading)

    def with_holes(self, n: int) -> "ProblemFile":
        """Copy with the first ``n`` hole patches relabeled as insulator."""
        if not 0 <= n <= len(self.holes):
            raise ValueError(f"the problem defines {len(self.holes)} holes, {n} requested")
        drop = {name for hole in self.holes[:n] for name in hole}
        patches = [
            Patch(p.kvs, p.points, p.weights, "insulator", _insulator_material(self.config), p.name)
            if p.name in drop else p
            for p in self.geometry.patches
        ]
        geom = MultipatchGeometry(patches, self.geometry.kvs, self.geometry.interfaces)
        return ProblemFile(geom, self.config, self.discretization, self.holes)


def _insulator_material(config: PhysicalConfig) -> str:
    for name, m in config.materials.items():
        if m.sigma == 0:
            return name
    raise ValueError("relabeling holes needs a material with zero conductivity")


# tokenizer -----------------------------------------------------------------

_TOKEN = re.compile(r"\S+")


class _Line:
    def __init__(self, num: int, text: str, path: str):
        self.num = num
        self.path = path
        body = text.split("#", 1)[0]
        self.tokens = [(m.group(), m.start() + 1) for m in _TOKEN.finditer(body)]

    def error(self, msg: str, tok: int = 0) -> ProblemSyntaxError:
        col = self.tokens[tok][1] if tok < len(self.tokens) else 1
        return ProblemSyntaxError(msg, self.num, col, self.path)

    @property
    def head(self) -> str:
        return self.tokens[0][0]

    def words(self) -> list:
        return [t for t, _ in self.tokens]

    def number(self, i: int, kind=float):
        try:
            val = kind(self.tokens[i][0])
        except (ValueError, IndexError):
            raise self.error(f"expected a {'integer' if kind is int else 'number'}", i) from None
        if kind is float and not math.isfinite(val):
            raise self.error("non-finite number", i)
        return val

    def keyvals(self, start: int = 1, required=(), allowed=None) -> dict:
        out = {}
        for i in range(start, len(self.tokens)):
            tok = self.tokens[i][0]
            if "=" not in tok:
                raise self.error(f"expected key=value, got {tok!r}", i)
            k, v = tok.split("=", 1)
            if allowed is not None and k not in allowed:
                raise self.error(f"unknown key {k!r} for {self.head!r}", i)
            if k in out:
                raise self.error(f"duplicate key {k!r}", i)
            out[k] = (v, i)
        for k in required:
            if k not in out:
                raise self.error(f"{self.head!r} needs {k}=...")
        return out

    def parse_float(self, kv: dict, key: str, default=None) -> float:
        if key not in kv:
            return default
        v, i = kv[key]
        try:
            val = float(v)
        except ValueError:
            raise self.error(f"{key} must be a number", i) from None
        if not math.isfinite(val):
            raise self.error(f"{key} must be finite", i)
        return val

    def parse_vector(self, kv: dict, key: str, n: int = 3, default=None, kind=float) -> tuple:
        if key not in kv:
            return default
        v, i = kv[key]
        try:
            vals = tuple(kind(s) for s in v.split(","))
        except ValueError:
            raise self.error(f"{key} must be {n} comma-separated numbers", i) from None
        if len(vals) != n:
            raise self.error(f"{key} must have {n} components, got {len(vals)}", i)
        return vals


# parser --------------------------------------------------------------------

_BOOL = {"yes": True, "no": False}


def _parse_triple(line: _Line, tok: int) -> tuple:
    s = line.tokens[tok][0]
    try:
        vals = tuple(float(v) for v in s.split(","))
    except ValueError:
        raise line.error(f"bad control point {s!r}", tok) from None
    if len(vals) != 3 or not all(map(math.isfinite, vals)):
        raise line.error(f"control point {s!r} must be x,y,z", tok)
    return vals


def _parse_patch(lines: list, pos: int, header: _Line) -> tuple:
    kv = header.keyvals(required=("name", "region", "material"), allowed=("name", "region", "material"))
    region = kv["region"][0]
    if region not in ("conductor", "insulator"):
        raise header.error(f"region must be conductor or insulator, got {region!r}", kv["region"][1])
    degrees, knots, points, weights = None, {}, None, None
    while True:
        if pos >= len(lines):
            raise ProblemSyntaxError("patch block not closed with 'end'", header.num, 1, header.path)
        ln = lines[pos]
        pos += 1
        h = ln.head
        if h == "end":
            break
        if h == "degrees":
            if len(ln.tokens) != 4:
                raise ln.error("degrees needs three integers")
            degrees = tuple(ln.number(i, int) for i in (1, 2, 3))
        elif h == "knots":
            if len(ln.tokens) < 3 or ln.tokens[1][0] not in ("u", "v", "w"):
                raise ln.error("expected 'knots <u|v|w> t0 t1 ...'")
            d = "uvw".index(ln.tokens[1][0])
            knots[d] = (ln, np.array([ln.number(i) for i in range(2, len(ln.tokens))]))
        elif h in ("points", "weights"):
            if degrees is None or len(knots) != 3:
                raise ln.error(f"{h} block must follow degrees and all three knot vectors")
            kvs = []
            for d in range(3):
                kl, t = knots[d]
                try:
                    kvs.append(KnotVector(degrees[d], t))
                except ValueError as exc:
                    raise kl.error(str(exc), 2) from None
            n = [kv.n for kv in kvs]
            rows = []
            for _ in range(n[1] * n[2]):
                if pos >= len(lines):
                    raise ln.error(f"{h} block ended early, expected {n[1] * n[2]} rows")
                row = lines[pos]
                pos += 1
                if len(row.tokens) != n[0]:
                    what = "points" if h == "points" else "weights"
                    raise row.error(f"row has {len(row.tokens)} {what}, expected {n[0]}",
                                    min(len(row.tokens), n[0]) if len(row.tokens) > n[0] else 0)
                if h == "points":
                    rows.extend(_parse_triple(row, i) for i in range(n[0]))
                else:
                    rows.extend(row.number(i) for i in range(n[0]))
            if h == "points":
                points = np.array(rows)
            else:
                weights = np.array(rows)
                if np.any(weights <= 0):
                    raise ln.error("weights must be positive")
        else:
            raise ln.error(f"unknown patch keyword {h!r}")
    if points is None:
        raise header.error("patch has no points block")
    patch = Patch(tuple(kvs), points, weights, region, kv["material"][0], kv["name"][0])
    return patch, header, pos


def parse_text(text: str, path: str = "<string>") -> ProblemFile:
    """Parse problem-file text; raises :class:`ProblemSyntaxError` with line/column."""
    lines = [_Line(i + 1, t, path) for i, t in enumerate(text.splitlines())]
    lines = [ln for ln in lines if ln.tokens]
    if not lines or lines[0].words() != [MAGIC, str(VERSION)]:
        num = lines[0].num if lines else 1
        raise ProblemSyntaxError(f"file must start with '{MAGIC} {VERSION}'", num, 1, path)
    disc = Discretization()
    omega, formulation, gauge, boundary, use_gen, sreg = 0.0, "hphi", "tree", "natural", True, None
    materials, loops, uniform = {}, [], None
    interfaces, holes, patches, headers = [], [], [], []
    seen = set()
    pos = 1
    while pos < len(lines):
        ln = lines[pos]
        pos += 1
        h = ln.head
        if h in ("discretization", "solver") and h in seen:
            raise ln.error(f"duplicate {h!r} line")
        if h == "discretization":
            seen.add(h)
            kv = ln.keyvals(allowed=("degree", "elements", "grading"))
            if "degree" in kv:
                try:
                    disc.degree = int(kv["degree"][0])
                except ValueError:
                    raise ln.error("degree must be an integer", kv["degree"][1]) from None
                if disc.degree < 1:
                    raise ln.error("degree must be at least 1", kv["degree"][1])
            disc.elements = ln.parse_vector(kv, "elements", 3, disc.elements, int)
            disc.grading = ln.parse_float(kv, "grading", disc.grading)
        elif h == "solver":
            seen.add(h)
            kv = ln.keyvals(allowed=("omega", "formulation", "gauge", "boundary", "generators", "sigma_reg"))
            omega = ln.parse_float(kv, "omega", omega)
            formulation = kv.get("formulation", (formulation,))[0]
            if formulation not in ("hphi", "tomega", "aphi"):
                raise ln.error(f"unknown formulation {formulation!r}", kv["formulation"][1])
            gauge = kv.get("gauge", (gauge,))[0]
            if gauge not in ("tree", "sigma_reg"):
                raise ln.error(f"unknown gauge {gauge!r}", kv["gauge"][1])
            boundary = kv.get("boundary", (boundary,))[0]
            if boundary not in ("natural", "dirichlet"):
                raise ln.error(f"unknown boundary option {boundary!r}", kv["boundary"][1])
            if "generators" in kv:
                if kv["generators"][0] not in _BOOL:
                    raise ln.error("generators must be yes or no", kv["generators"][1])
                use_gen = _BOOL[kv["generators"][0]]
            sreg = ln.parse_float(kv, "sigma_reg", None)
        elif h == "material":
            kv = ln.keyvals(required=("name", "mu", "sigma"), allowed=("name", "mu", "sigma"))
            name = kv["name"][0]
            if name in materials:
                raise ln.error(f"material {name!r} defined twice", kv["name"][1])
            mu, sigma = ln.parse_float(kv, "mu"), ln.parse_float(kv, "sigma")
            if mu <= 0 or sigma < 0:
                raise ln.error(f"material {name!r}: need mu > 0 and sigma >= 0")
            materials[name] = Material(mu, sigma)
        elif h == "source":
            if len(ln.tokens) < 2 or ln.tokens[1][0] not in ("loop", "uniform"):
                raise ln.error("expected 'source loop ...' or 'source uniform ...'")
            if ln.tokens[1][0] == "loop":
                kv = ln.keyvals(2, required=("radius", "current"), allowed=("radius", "current", "center"))
                r = ln.parse_float(kv, "radius")
                if r <= 0:
                    raise ln.error("loop radius must be positive", kv["radius"][1])
                loops.append(CircularLoop(r, ln.parse_float(kv, "current"),
                                          ln.parse_vector(kv, "center", 3, (0.0, 0.0, 0.0))))
            else:
                if uniform is not None:
                    raise ln.error("only one uniform source allowed")
                kv = ln.keyvals(2, required=("H",), allowed=("H",))
                uniform = UniformField(ln.parse_vector(kv, "H"))
        elif h == "interface":
            w = ln.words()
            if len(w) != 5 or w[2] not in FACE_NAMES or w[4] not in FACE_NAMES:
                raise ln.error("expected 'interface <patch> <face> <patch> <face>' with faces u0..w1")
            interfaces.append((ln, (ln.number(1, int), w[2], ln.number(3, int), w[4])))
        elif h == "hole":
            if len(ln.tokens) < 2:
                raise ln.error("hole needs at least one patch name")
            holes.append((ln, ln.words()[1:]))
        elif h == "patch":
            patch, hdr, pos = _parse_patch(lines, pos, ln)
            patches.append(patch)
            headers.append(hdr)
        else:
            raise ln.error(f"unknown keyword {h!r}")

    if not patches:
        raise ProblemSyntaxError("no patches defined", lines[-1].num, 1, path)
    names = {}
    for p, hdr in zip(patches, headers):
        if p.material not in materials:
            raise hdr.error(f"unknown material label {p.material!r}", 3)
        if p.name in names:
            raise hdr.error(f"patch name {p.name!r} used twice", 1)
        names[p.name] = p
    for ln, hole in holes:
        for i, nm in enumerate(hole):
            if nm not in names:
                raise ln.error(f"hole refers to unknown patch {nm!r}", i + 1)
    for ln, (a, _, b, _) in interfaces:
        for i, q in ((1, a), (3, b)):
            if not 0 <= q < len(patches):
                raise ln.error(f"interface patch index {q} out of range", i)
    parts = list(loops) + ([uniform] if uniform is not None else [])
    source = None
    if len(parts) == 1:
        source = parts[0]
    elif parts:
        source = Coil(tuple(parts))
    geom = MultipatchGeometry(patches, [], [f for _, f in interfaces] or None)
    cfg = PhysicalConfig(omega, materials, source, formulation, gauge, sreg, boundary, use_gen)
    return ProblemFile(geom, cfg, disc, [h for _, h in holes])


def parse_problem(path) -> ProblemFile:
    """Read a problem file from disk."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ProblemSyntaxError(f"not UTF-8 text ({exc.reason})", 1, 1, str(path)) from None
    return parse_text(text, str(path))


# writer ----------------------------------------------------------------------

def _f(x) -> str:
    return repr(float(x))


def _source_lines(src) -> list:
    if src is None:
        return []
    parts = src.loops if isinstance(src, Coil) else (src,)
    out = []
    for s in parts:
        if isinstance(s, CircularLoop):
            c = ",".join(_f(v) for v in s.center)
            out.append(f"source loop radius={_f(s.radius)} current={_f(s.current)} center={c}")
        elif isinstance(s, UniformField):
            out.append("source uniform H=" + ",".join(_f(v) for v in s.H0))
        else:
            raise TypeError(f"source {type(s).__name__} cannot be serialized")
    return out


def serialize(prob: ProblemFile) -> str:
    """Text form of a problem; ``parse_text(serialize(p))`` reproduces ``p``."""
    cfg, d, geom = prob.config, prob.discretization, prob.geometry
    out = [f"{MAGIC} {VERSION}"]
    out.append(f"discretization degree={d.degree} elements={','.join(str(int(e)) for e in d.elements)} "
               f"grading={_f(d.grading)}")
    solver = (f"solver omega={_f(cfg.omega)} formulation={cfg.formulation} gauge={cfg.gauge} "
              f"boundary={cfg.a_boundary} generators={'yes' if cfg.use_generators else 'no'}")
    if cfg.sigma_reg is not None:
        solver += f" sigma_reg={_f(cfg.sigma_reg)}"
    out.append(solver)
    for name, m in cfg.materials.items():
        out.append(f"material name={name} mu={_f(m.mu)} sigma={_f(m.sigma)}")
    out.extend(_source_lines(cfg.source))
    for a, fa, b, fb in geom.interfaces or []:
        out.append(f"interface {a} {FACE_NAMES[fa]} {b} {FACE_NAMES[fb]}")
    for hole in prob.holes:
        out.append("hole " + " ".join(hole))
    for p in geom.patches:
        out.append(f"patch name={p.name} region={p.region} material={p.material}")
        out.append("degrees " + " ".join(str(kv.degree) for kv in p.kvs))
        for d_, kv in zip("uvw", p.kvs):
            out.append(f"knots {d_} " + " ".join(_f(t) for t in kv.knots))
        n0 = p.kvs[0].n
        out.append("points")
        for r in range(0, len(p.points), n0):
            out.append(" ".join(",".join(_f(v) for v in pt) for pt in p.points[r: r + n0]))
        if p.weights is not None:
            out.append("weights")
            for r in range(0, len(p.weights), n0):
                out.append(" ".join(_f(w) for w in p.weights[r: r + n0]))
        out.append("end")
    return "\n".join(out) + "\n"


def write_problem(prob: ProblemFile, path) -> None:
    Path(path).write_text(serialize(prob), encoding="utf-8")


def fixture_path(name: str) -> Path:
    """Path of a shipped problem file (``cube``, ``two_patch``, ``washer``, ...)."""
    p = DATA_DIR / f"{name}.iga"
    if not p.exists():
        avail = sorted(q.stem for q in DATA_DIR.glob("*.iga"))
        raise FileNotFoundError(f"no shipped fixture {name!r}; available: {', '.join(avail)}")
    return p
