import csv
import io
import math
import subprocess
import sys

import numpy as np
import pytest

from robust_selftest import cli
from robust_selftest import sdpcore as sc
from robust_selftest.scenarios import preset_strategy, table_of

CHSH_MAX = 2 * math.sqrt(2)

CHSH_CONFIG = """\
[run]
schema = 1
scenario = bell-assemblage
reference = bb84
level = {level}
output = out.csv
{extra}
[data]
functional = chsh
from = {lo}
to = {hi}
steps = {steps}
"""


def write(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def run_quiet(path):
    err = io.StringIO()
    code = cli.run(path, stream=err)
    return code, err.getvalue()


def chsh_line(i):
    return 0.75 + 0.25 * (i - 2) / (CHSH_MAX - 2)


# ---------------------------------------------------------------- run

def test_chsh_preset_curve(tmp_path):
    cfg = write(tmp_path, CHSH_CONFIG.format(level=3, lo=2, hi="2*sqrt(2)", steps=5, extra=""))
    code, _ = run_quiet(cfg)
    assert code == 0
    text = (tmp_path / "out.csv").read_text()
    assert text.splitlines()[0] == "functional_value,bound,status,solve_seconds,psd_residual,level"
    rows = read_rows(tmp_path / "out.csv")
    assert len(rows) == 5
    for row in rows:
        i, b = float(row["functional_value"]), float(row["bound"])
        assert abs(b - chsh_line(i)) <= 2e-3
        assert row["status"] in (sc.OPTIMAL, sc.NEAR_OPTIMAL)
        assert 0 <= b <= 1 + 1e-6
        assert row["level"] == "3"


def test_sweep_above_quantum_maximum(tmp_path):
    cfg = write(tmp_path, CHSH_CONFIG.format(level=3, lo=2.5, hi=3.0, steps=2, extra=""))
    code, err = run_quiet(cfg)
    assert code == 2
    rows = read_rows(tmp_path / "out.csv")
    assert rows[0]["status"] in (sc.OPTIMAL, sc.NEAR_OPTIMAL)
    assert rows[1]["status"] == sc.INFEASIBLE and rows[1]["bound"] == "nan"
    assert "infeasible" in err


@pytest.mark.parametrize("text,line,needle", [
    ("[run]\nschema = 1\nreference = bb84\n[data]\nfunctional = chsh\nfrom = 2\nto = 2.5\nsteps = 2\n",
     1, "scenario"),
    ("[run]\nschema = 1\nscenario = bell-assemblage\nreference = bb84\nlevel = two\n", 5, "level"),
    ("[run]\nschema = 2\nscenario = steering\nreference = phi_plus\n", 2, "schema"),
    ("[run]\nschema = 1\nscenario = prepare-measure\nreference = rac2\n[data]\nfunctional = rac2\n"
     "from = 0.8\nto = 0.7\nsteps = 2\n", 1, "dimension"),
    ("[run]\nschema = 1\nscenario = bell-assemblage\nreference = bb84\n[data]\nfunctional = chsh\n"
     "from = 2.5\nto = 2\nsteps = 2\n", 7, "from <= to"),
    ("[run]\nschema = 1\nscenario = steering\nreference = bb84\n", 4, "does not fit"),
    ("[run]\nschema = 1\nscenario = bell-assemblage\nreference = bb84\n[data]\nfunctional = chsh\n"
     "from = 2\nto = 2.5\nsteps = 0\n", 9, "steps"),
    ("[run]\nschema = 1\nschema = 1\n", 3, ""),
    ("schema = 1\n", 1, ""),
])
def test_malformed_configs_report_line(tmp_path, text, line, needle):
    cfg = write(tmp_path, text)
    code, err = run_quiet(cfg)
    assert code == 1
    assert err.startswith("config error: ")
    assert f"run.ini:{line}:" in err
    assert needle in err
    with pytest.raises(cli.ConfigError) as info:
        cli.load_config(cfg)
    assert info.value.line == line


def test_missing_config_file(tmp_path):
    code, err = run_quiet(tmp_path / "absent.ini")
    assert code == 1 and "config error" in err


def test_parse_number():
    assert cli.parse_number("2*sqrt(2)") == 2 * math.sqrt(2)
    assert cli.parse_number("-(1 + 2) / 4") == -0.75
    assert cli.parse_number("pi") == math.pi
    for bad in ("__import__('os')", "sqrt(2, 3)", "x + 1", "'a'"):
        with pytest.raises(ValueError):
            cli.parse_number(bad)


def test_run_is_deterministic_apart_from_timings(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.WORKERS_ENV, "2")
    text = CHSH_CONFIG.format(level=2, lo=2, hi=2.8, steps=4, extra="")
    outs = []
    for k in range(2):
        d = tmp_path / f"r{k}"
        d.mkdir()
        cfg = write(d, text)
        assert run_quiet(cfg)[0] == 0
        rows = read_rows(d / "out.csv")
        outs.append([{key: v for key, v in r.items() if key != "solve_seconds"} for r in rows])
    assert outs[0] == outs[1]
    assert [float(r["functional_value"]) for r in outs[0]] == list(np.linspace(2, 2.8, 4))


def test_sdpa_dumps(tmp_path):
    cfg = write(tmp_path, CHSH_CONFIG.format(level=1, lo=2, hi=2.5, steps=2, extra="dump_sdpa = dumps"))
    assert run_quiet(cfg)[0] == 0
    files = sorted(p.name for p in (tmp_path / "dumps").iterdir())
    assert files == ["point_000.dat-s", "point_001.dat-s"]
    assert (tmp_path / "dumps" / "point_000.dat-s").read_text().startswith('"')


def test_table_mode_single_point(tmp_path):
    np.save(tmp_path / "s1.npy", table_of(preset_strategy("S1")))
    text = ("[run]\nschema = 1\nscenario = bell-assemblage\nreference = bb84\nlevel = 2\noutput = out.csv\n"
            "[data]\ntable = s1.npy\nfunctional = chsh\n")
    assert run_quiet(write(tmp_path, text))[0] == 0
    (row,) = read_rows(tmp_path / "out.csv")
    assert abs(float(row["functional_value"]) - CHSH_MAX) < 1e-12
    assert float(row["bound"]) >= 0.999


def test_inline_references_match_presets(tmp_path):
    h = 0.5
    inline = {
        "bell-assemblage": ("bb84", "level = 2\n", "chsh", "2.6",
                            "sigma_0_0 = [[0.5, 0], [0, 0]]\nsigma_0_1 = [[0, 0], [0, 0.5]]\n"
                            f"sigma_1_0 = [[0.25, 0.25], [0.25, 0.25]]\nsigma_1_1 = [[0.25, -0.25], [-0.25, 0.25]]\n"),
        "steering": ("phi_plus", "", "steering", "1.8",
                     f"rho = [[{h}, 0, 0, {h}], [0, 0, 0, 0], [0, 0, 0, 0], [{h}, 0, 0, {h}]]\ndims = 2, 2\n"),
        "prepare-measure": ("rac2", "dimension = 2\n", "rac2", "0.8",
                            "rho_0 = [[1, 0], [0, 0]]\nrho_1 = [[0.5, 0.5], [0.5, 0.5]]\n"
                            "rho_2 = [[0.5, -0.5], [-0.5, 0.5]]\nrho_3 = [[0, 0], [0, 1]]\n"),
    }
    for scenario, (preset, extra, functional, value, section) in inline.items():
        bounds = []
        for ref in (preset, "inline"):
            d = tmp_path / f"{scenario}-{ref}"
            d.mkdir()
            text = (f"[run]\nschema = 1\nscenario = {scenario}\nreference = {ref}\n{extra}output = out.csv\n"
                    f"[data]\nfunctional = {functional}\nfrom = {value}\nto = {value}\nsteps = 1\n")
            if ref == "inline":
                text += "[reference]\n" + section
            assert run_quiet(write(d, text))[0] == 0, scenario
            bounds.append(float(read_rows(d / "out.csv")[0]["bound"]))
        assert abs(bounds[0] - bounds[1]) < 1e-9, scenario


def test_bad_inline_reference(tmp_path):
    text = ("[run]\nschema = 1\nscenario = prepare-measure\nreference = inline\ndimension = 2\n"
            "[data]\nfunctional = rac2\nfrom = 0.8\nto = 0.8\nsteps = 1\n[reference]\nrho_0 = [[1, 0], [0, 1]]\n")
    code, err = run_quiet(write(tmp_path, text))
    assert code == 1 and "run.ini:11:" in err


def test_emitted_bounds_pass_verify(tmp_path):
    cfg = cli.load_config(write(tmp_path, CHSH_CONFIG.format(level=2, lo=2, hi="2*sqrt(2)", steps=3, extra="")))
    pts = cli.bound_curve(cli.make_builder(cfg), cfg.sweep, sc.SolveSettings(tol=cfg.tol), keep_problems=True)
    rows = cli.curve_rows(cfg, pts)
    for pt, row in zip(pts, rows):
        assert sc.verify(pt.report, pt.problem, cfg.verify_tol)
        assert row[2] != cli.UNVERIFIED and row[4] <= cfg.verify_tol


def test_unverified_points_are_flagged(tmp_path):
    cfg = cli.load_config(write(tmp_path, CHSH_CONFIG.format(level=1, lo=2.5, hi=2.5, steps=1, extra="")))
    pts = cli.bound_curve(cli.make_builder(cfg), cfg.sweep, keep_problems=True)
    cfg.verify_tol = -1.0  # nothing can pass a negative tolerance
    (row,) = cli.curve_rows(cfg, pts)
    assert row[2] == cli.UNVERIFIED and math.isnan(row[1])


# ---------------------------------------------------------------- compare

def write_curve(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cli.CSV_HEADER)
        for v, b in rows:
            w.writerow([repr(v), repr(b), "optimal", "0.1", "0", "3"])
    return path


def test_compare_identical(tmp_path):
    a = write_curve(tmp_path / "a.csv", [(2.0, 0.75), (2.5, 0.9), (3.0, math.nan)])
    assert cli.compare(a, a, 1e-6, stream=io.StringIO()) == 0


def test_compare_offset_bound(tmp_path):
    a = write_curve(tmp_path / "a.csv", [(2.0, 0.75), (2.5, 0.9)])
    b = write_curve(tmp_path / "b.csv", [(2.0, 0.75), (2.5, 0.91)])
    assert cli.compare(a, b, 1e-3, stream=io.StringIO()) != 0
    assert cli.compare(a, b, 0.02, stream=io.StringIO()) == 0
    c = write_curve(tmp_path / "c.csv", [(2.0, 0.75), (2.5, math.nan)])
    assert cli.compare(a, c, 1e-3, stream=io.StringIO()) != 0


def test_compare_empty_files(tmp_path):
    (tmp_path / "a.csv").write_text("")
    (tmp_path / "b.csv").write_text("")
    assert cli.compare(tmp_path / "a.csv", tmp_path / "b.csv", 1e-6, stream=io.StringIO()) == 0


def test_compare_grid_mismatch(tmp_path):
    a = write_curve(tmp_path / "a.csv", [(2.0, 0.75), (2.5, 0.9)])
    b = write_curve(tmp_path / "b.csv", [(2.0, 0.75), (2.6, 0.9)])
    c = write_curve(tmp_path / "c.csv", [(2.0, 0.75)])
    assert cli.compare(a, b, 1e-6, stream=io.StringIO()) == 1
    assert cli.compare(a, c, 1e-6, stream=io.StringIO()) == 1
    assert cli.compare(a, tmp_path / "missing.csv", 1e-6, stream=io.StringIO()) == 1


def test_console_entry_point(tmp_path):
    cfg = write(tmp_path, CHSH_CONFIG.format(level=1, lo=2, hi=2, steps=1, extra=""))
    proc = subprocess.run([sys.executable, "-m", "robust_selftest", "run", str(cfg)], capture_output=True)
    assert proc.returncode == 0
    out = tmp_path / "out.csv"
    proc = subprocess.run([sys.executable, "-m", "robust_selftest", "compare", str(out), str(out), "--tol", "1e-9"])
    assert proc.returncode == 0
