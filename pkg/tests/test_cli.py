"""Command line interface: subcommands, artifacts and exit codes."""
import csv
import subprocess
import sys

import numpy as np
import pytest

from igacohom.cli import STAGES, run_command
from igacohom.problem import fixture_path


def run(capsys, *argv):
    status = run_command([str(a) for a in argv])
    out = capsys.readouterr()
    return status, out.out, out.err


class TestInfo:
    def test_washer_reports_one_generator(self, capsys):
        status, out, _ = run(capsys, "info", "fixture:washer", "--degree", "1", "--elements", "1")
        assert status == 0
        assert "expected generators: 1" in out
        assert "S^0=" in out and "euler characteristic (V): 1" in out

    def test_plate_holes(self, capsys, tmp_path):
        path = tmp_path / "plate.iga"
        assert run(capsys, "fixture", "plate", "--holes", "4", "-o", path)[0] == 0
        status, out, _ = run(capsys, "info", path)
        assert status == 0 and "expected generators: 4" in out

    def test_no_conductor(self, capsys):
        status, out, _ = run(capsys, "info", "fixture:cube")
        assert status == 0 and "expected generators: 0" in out


class TestCohomology:
    def test_writes_generators(self, capsys, tmp_path):
        out_txt, vtk = tmp_path / "g.txt", tmp_path / "g.vtk"
        status, out, _ = run(capsys, "cohomology", "fixture:washer", "--degree", "1", "--elements", "1",
                             "-o", out_txt, "--vtk", vtk)
        assert status == 0
        assert "selected: 1" in out and "expected: 1" in out
        lines = out_txt.read_text().splitlines()
        assert lines[0].startswith("# generator 0 support")
        support = int(lines[0].split()[4])
        assert support > 0
        rows = [ln.split() for ln in lines[1:]]
        assert all(len(r) == 2 and int(r[0]) >= 0 and float(r[1]) != 0 for r in rows)
        assert "VECTORS generator0 double" in vtk.read_text()


class TestSolve:
    @pytest.mark.parametrize("formulation", ["hphi", "tomega", "aphi"])
    def test_solve(self, capsys, tmp_path, formulation):
        out = tmp_path / "s.npz"
        status, text, _ = run(capsys, "solve", "fixture:washer", "--degree", "1", "--elements", "1",
                              "--formulation", formulation, "-o", out)
        assert status == 0
        assert f"formulation: {formulation}" in text
        data = np.load(out)
        assert np.iscomplexobj(data["edge_field"]) and float(data["omega"]) > 0
        assert (tmp_path / "s.vtk").read_text().startswith("# vtk DataFile Version 3.0")

    def test_no_conductor_exit_code(self, capsys, tmp_path):
        status, _, err = run(capsys, "solve", "fixture:cube", "--formulation", "hphi", "-o", tmp_path / "s.npz")
        assert status == 3
        assert "no conductor" in err


class TestSample:
    ARGS = ("sample", "fixture:washer", "--degree", "1", "--elements", "1",
            "--line", "0.006,0,0:0.009,0,0:5", "--quantity", "J", "--component", "y")

    def test_csv_columns(self, capsys, tmp_path):
        out = tmp_path / "a.csv"
        assert run(capsys, *self.ARGS, "-o", out)[0] == 0
        rows = list(csv.reader(out.open()))
        assert rows[0] == ["x", "y", "z", "Re", "Im", "signed_magnitude"]
        vals = np.array(rows[1:], float)
        assert vals.shape == (5, 6)
        np.testing.assert_allclose(vals[:, 0], np.linspace(0.006, 0.009, 5))
        mag = np.abs(vals[:, 3] + 1j * vals[:, 4])
        np.testing.assert_allclose(np.abs(vals[:, 5]), mag)
        assert np.all(np.sign(vals[:, 5]) == np.where(vals[:, 3] < 0, -1, 1))
        assert mag.max() > 0

    def test_deterministic(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        run(capsys, *self.ARGS, "-o", a)
        run(capsys, *self.ARGS, "-o", b)
        assert a.read_bytes() == b.read_bytes()

    @pytest.mark.parametrize("line", ["0,0,0:1,1,1", "0,0:1,1,1:4", "0,0,0:1,1,1:x", "0,0,0:1,1,1:1"])
    def test_bad_line(self, capsys, line):
        status, _, err = run(capsys, "sample", "fixture:washer", "--degree", "1", "--elements", "1",
                             "--line", line)
        assert status == 1 and err.startswith("error:")

    def test_point_outside(self, capsys, tmp_path):
        status, _, err = run(capsys, "sample", "fixture:washer", "--degree", "1", "--elements", "1",
                             "--line", "0,0,0:1,0,0:3", "-o", tmp_path / "x.csv")
        assert status == 1 and "error:" in err


class TestScaling:
    def test_csv_stages(self, capsys, tmp_path):
        plate = tmp_path / "plate.iga"
        run(capsys, "fixture", "plate", "-o", plate)
        out = tmp_path / "t.csv"
        status, text, _ = run(capsys, "scaling", plate, "--holes", "1,2", "--repeat", "2", "-o", out)
        assert status == 0 and "holes=2 generators=2" in text
        rows = list(csv.reader(out.open()))
        assert rows[0] == ["holes", "generators", "repeats"] + [f"{s}_{m}" for s in STAGES for m in ("mean", "std")]
        assert [r[:3] for r in rows[1:]] == [["1", "1", "2"], ["2", "2", "2"]]
        assert all(float(v) >= 0 for r in rows[1:] for v in r[3:])

    def test_too_many_holes(self, capsys, tmp_path):
        status, _, err = run(capsys, "scaling", "fixture:plate", "--holes", "99", "--repeat", "1",
                             "-o", tmp_path / "t.csv")
        assert status == 1 and "holes" in err

    def test_bad_repeat(self, capsys):
        assert run(capsys, "scaling", "fixture:plate", "--holes", "1", "--repeat", "0")[0] == 1


class TestErrors:
    def test_missing_file(self, capsys, tmp_path):
        status, _, err = run(capsys, "info", tmp_path / "none.iga")
        assert status == 1 and "not found" in err

    def test_syntax_error_location(self, capsys, tmp_path):
        bad = tmp_path / "bad.iga"
        bad.write_text(fixture_path("cube").read_text().replace("degrees 1 1 1", "degrees 1 1"))
        status, _, err = run(capsys, "info", bad)
        assert status == 1 and f"{bad}:6:1:" in err

    def test_unknown_fixture(self, capsys, tmp_path):
        assert run(capsys, "fixture", "nope", "-o", tmp_path / "x.iga")[0] == 1

    def test_usage_errors(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_command(["info", "fixture:cube", "--bogus"])
        assert exc.value.code == 2
        with pytest.raises(SystemExit):
            run_command(["frobnicate"])

    def test_fixture_round_trip(self, capsys, tmp_path):
        out = tmp_path / "w.iga"
        assert run(capsys, "fixture", "washer", "-o", out)[0] == 0
        assert out.read_text() == fixture_path("washer").read_text()

    def test_console_script(self, tmp_path):
        res = subprocess.run([sys.executable, "-m", "igacohom.cli", "info", "fixture:cube"],
                             capture_output=True, text=True, cwd=tmp_path)
        assert res.returncode == 0 and "patches: 1" in res.stdout
