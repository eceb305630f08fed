"""Problem-file parsing, validation and lossless round trips."""
import numpy as np
import pytest

from igacohom import fixtures as F
from igacohom.problem import (
    ProblemSyntaxError,
    fixture_path,
    parse_problem,
    parse_text,
    serialize,
    write_problem,
)

MINIMAL = fixture_path("cube").read_text()


def assert_same_problem(a, b):
    assert serialize(a) == serialize(b)
    assert a.discretization == b.discretization and a.holes == b.holes
    assert a.config.materials == b.config.materials
    for p, q in zip(a.geometry.patches, b.geometry.patches, strict=True):
        assert (p.name, p.region, p.material) == (q.name, q.region, q.material)
        np.testing.assert_array_equal(p.points, q.points)
        for u, v in zip(p.kvs, q.kvs):
            np.testing.assert_array_equal(u.knots, v.knots)
        assert (p.weights is None) == (q.weights is None)
        if p.weights is not None:
            np.testing.assert_array_equal(p.weights, q.weights)


@pytest.mark.parametrize("name", F.SHIPPED)
def test_round_trip(name, tmp_path):
    prob = parse_problem(fixture_path(name))
    write_problem(prob, tmp_path / "p.iga")
    assert_same_problem(prob, parse_problem(tmp_path / "p.iga"))
    assert (tmp_path / "p.iga").read_text() == fixture_path(name).read_text()


def test_shipped_files_match_fixture_writer():
    for name in F.SHIPPED:
        assert serialize(F.fixture_problem(name)) == fixture_path(name).read_text()


def test_minimal_cube():
    prob = parse_text(MINIMAL)
    geom = prob.geometry
    assert geom.num_patches == 1
    assert geom.patches[0].region == "insulator"
    assert not geom.conductor_patches
    assert prob.config.source is None


def test_washer_file():
    prob = parse_problem(fixture_path("washer"))
    assert len(prob.geometry.conductor_patches) == 4
    assert prob.geometry.num_patches == 27
    ins = [p for p in prob.geometry.patches if p.region == "insulator"]
    assert len(ins) == 23 and {p.material for p in ins} == {"air"}


def test_rational_weights_survive():
    prob = parse_problem(fixture_path("quarter_annulus"))
    w = prob.geometry.patches[0].weights
    assert w is not None and np.any(w != 1.0)


def test_short_weight_row():
    text = MINIMAL.replace("end", "weights\n1.0 1.0\n1.0 1.0 1.0\n1.0 1.0\n1.0 1.0\nend")
    with pytest.raises(ProblemSyntaxError, match="row has 3 weights, expected 2") as exc:
        parse_text(text)
    assert exc.value.line == MINIMAL.splitlines().index("end") + 3


def test_short_point_row():
    lines = MINIMAL.splitlines()
    i = lines.index("points") + 2
    lines[i] = "0.0,1.0,0.0"
    with pytest.raises(ProblemSyntaxError, match="row has 1 points, expected 2") as exc:
        parse_text("\n".join(lines))
    assert exc.value.line == i + 1


def test_unknown_material():
    text = MINIMAL.replace("material=air", "material=steel")
    with pytest.raises(ProblemSyntaxError, match="unknown material label 'steel'") as exc:
        parse_text(text)
    assert exc.value.line == 5


@pytest.mark.parametrize("bad, msg", [
    ("", "must start with"),
    ("iga-problem 2\n", "must start with"),
    (MINIMAL.replace("degrees 1 1 1", "degrees 1 1"), "three integers"),
    (MINIMAL.replace("\nend", ""), "not closed"),
    (MINIMAL + "bogus 1\n", "unknown keyword 'bogus'"),
    (MINIMAL.replace("region=insulator", "region=vacuum"), "region must be"),
    (MINIMAL.replace("knots u 0.0 0.0 1.0 1.0", "knots u 0.0 1.0 0.0 1.0"), "non-decreasing"),
    (MINIMAL.replace("0.0,0.0,0.0 1.0", "0.0,nan,0.0 1.0"), "must be x,y,z"),
    (MINIMAL.replace("formulation=hphi", "formulation=ephi"), "unknown formulation"),
], ids=["empty", "version", "degrees", "unclosed", "keyword", "region", "knots", "nan", "formulation"])
def test_syntax_errors(bad, msg):
    with pytest.raises(ProblemSyntaxError, match=msg):
        parse_text(bad)


def test_column_is_reported():
    text = MINIMAL.replace("formulation=hphi", "formulation=ephi")
    with pytest.raises(ProblemSyntaxError) as exc:
        parse_text(text, "f.iga")
    line = text.splitlines()[exc.value.line - 1]
    assert line[exc.value.column - 1:].startswith("formulation=ephi")
    assert str(exc.value).startswith(f"f.iga:{exc.value.line}:{exc.value.column}:")


def test_holes_relabel():
    prob = F.fixture_problem("plate", nholes=0)
    assert len(prob.holes) >= 8
    geom = prob.with_holes(3).geometry
    assert len(geom.conductor_patches) == len(prob.geometry.conductor_patches) - 3 * len(prob.holes[0])
    with pytest.raises(ValueError):
        prob.with_holes(len(prob.holes) + 1)


def test_missing_fixture():
    with pytest.raises(FileNotFoundError, match="available"):
        fixture_path("nope")
