import csv
import math

import numpy as np
import pytest

from radialmc.cli import main, read_dump, DumpError
from radialmc.config import ConfigError, load_config, parse_config
from radialmc.grid import build_grid

CROSSING = """
[grid]
m = {m}
fiber_resolution = {res}

[curvature]
profile = "power"
c = {c}
p = -2.0
"""

SPHERE = """
[grid]
m = 2
fiber_resolution = 32

[curvature]
profile = "rational"
numerator = [2.0, -1.0]
denominator = [0.0, 1.0]
annulus = [0.05, 1.9]
"""

ANISO = """
[grid]
m = 3
fiber_resolution = {res}

[curvature]
profile = "power"
c = 2.0
p = -2.0

[[curvature.modes]]
name = "z"
amplitude = {amp}

[output]
verify_tolerance = 1e-2
"""


def cfg(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(tmp_path, mode, text, *extra, out="out"):
    return main([mode, "--config", cfg(tmp_path, text), "--out", str(tmp_path / out), *extra])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def report(path):
    out = {}
    for line in path.read_text().splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out.setdefault(k, v)
    return out


def test_check_k_exit_codes(tmp_path, capsys):
    assert run(tmp_path, "check-k", SPHERE) == 0
    rep = report(tmp_path / "out" / "check_k.txt")
    assert float(rep["r1"]) == pytest.approx(1.0, abs=1e-12) and float(rep["r2"]) == pytest.approx(1.0, abs=1e-12)
    nonexist = SPHERE.replace('profile = "rational"\nnumerator = [2.0, -1.0]\ndenominator = [0.0, 1.0]', 'profile = "power"\nc = 0.5\np = -1.0')
    assert run(tmp_path, "check-k", nonexist) == 2
    constant = nonexist.replace("c = 0.5\np = -1.0", "c = 1.0\np = 0.0")
    assert run(tmp_path, "check-k", constant) == 1


def test_solve_crossing_and_verify(tmp_path):
    text = CROSSING.format(m=2, res=32, c=1.7)
    assert run(tmp_path, "solve", text) == 0
    rows = read_rows(tmp_path / "out" / "u.csv")
    assert list(rows[0]) == ["theta", "u", "v1", "v2", "M", "K"]
    u = np.array([float(r["u"]) for r in rows])
    assert np.abs(u - math.log(1.7)).max() <= 1e-8
    assert (tmp_path / "out" / "curve.csv").exists()
    assert run(tmp_path, "verify", text) == 0


def test_solve_anisotropic_writes_mesh_and_verifies(tmp_path):
    text = ANISO.format(res=16, amp=0.05)
    assert run(tmp_path, "solve", text) == 0
    rep = report(tmp_path / "out" / "report.txt")
    assert rep["status"] == "converged" and rep["flagged"] == "[]"
    assert (tmp_path / "out" / "surface.txt").exists()
    assert run(tmp_path, "verify", text) == 0


def test_report_is_deterministic(tmp_path):
    text = ANISO.format(res=8, amp=0.05)
    run(tmp_path, "solve", text, out="a")
    run(tmp_path, "solve", text, out="b")
    assert (tmp_path / "a" / "report.txt").read_bytes() == (tmp_path / "b" / "report.txt").read_bytes()
    assert (tmp_path / "a" / "u.csv").read_bytes() == (tmp_path / "b" / "u.csv").read_bytes()
    assert (tmp_path / "a" / "report.txt").read_text().startswith("# radialmc report v1\n")


def test_solve_exit_codes(tmp_path):
    nonexist = CROSSING.format(m=2, res=16, c=3.0).replace("p = -2.0", "p = -1.0")
    assert run(tmp_path, "solve", nonexist) == 3
    assert run(tmp_path, "solve", nonexist, "--force") == 3
    single = nonexist + "\n[solver]\nschedule_refinements = 1\n"
    assert run(tmp_path, "solve", single, "--force") == 5
    unreachable = ANISO.format(res=8, amp=0.1) + "\n[solver]\ntol_residual = 1e-30\nmax_newton = 3\n"
    assert run(tmp_path, "solve", unreachable) == 4
    constant = CROSSING.format(m=2, res=16, c=1.0).replace("p = -2.0", "p = 0.0")
    assert run(tmp_path, "solve", constant) == 1


def test_verify_failures(tmp_path):
    text = ANISO.format(res=8, amp=0.1)
    out = tmp_path / "out"
    out.mkdir()
    g = build_grid(3, 0, 8)
    # u = 0 against K != m-1: the deviation is |m - 1 - K|, far above tolerance
    lines = ["theta,phi,u,v1,v2,M,K"] + [
        f"{float(t)!r},{float(p)!r},0.0,0.0,0.0,2.0,0.0" for t, p in zip(g.coords["theta"], g.coords["phi"])
    ]
    (out / "u.csv").write_text("\n".join(lines) + "\n")
    assert run(tmp_path, "verify", text) == 1
    (out / "u.csv").write_text("\n".join(lines[:-7]) + "\n")
    assert run(tmp_path, "verify", text) == 65
    assert run(tmp_path, "verify", ANISO.format(res=16, amp=0.1)) == 65
    assert main(["verify", "--config", cfg(tmp_path, text), "--out", str(out), "--dump", str(tmp_path / "nope.csv")]) == 65


def test_read_dump_checks_coordinates(tmp_path):
    g = build_grid(2, 0, 8)
    lines = ["theta,u,v1,v2,M,K"] + [f"{t + 0.1!r},0,0,0,1,1" for t in g.coords["theta"]]
    (tmp_path / "d.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(DumpError):
        read_dump(tmp_path / "d.csv", g)


@pytest.mark.parametrize(
    "text",
    [
        SPHERE + "\n[grid.extra]\n",
        SPHERE.replace("m = 2", "m = 2\nfoo = 1"),
        SPHERE + "\n[solver]\nsteps = 10\nbogus = 1\n",
        SPHERE.replace("[grid]", "[grd]"),
        SPHERE + "\n[solver]\nsteps = 'ten'\n",
        SPHERE.replace("annulus = [0.05, 1.9]", ""),
        "not = [toml",
        'mode = "plot"\n' + SPHERE,
        SPHERE.replace("m = 2", "m = 5"),
    ],
)
def test_config_errors_exit_64(tmp_path, text):
    assert run(tmp_path, "solve", text) == 64


def test_conflicting_modes_and_missing_sweep(tmp_path):
    path = cfg(tmp_path, SPHERE)
    assert main(["solve", "--mode", "verify", "--config", path, "--out", str(tmp_path / "o")]) == 64
    assert main(["sweep", "--config", path, "--out", str(tmp_path / "o")]) == 64
    assert main(["--config", str(tmp_path / "missing.toml")]) == 64


def test_config_mode_key_and_flag_overrides(tmp_path):
    text = 'mode = "check-k"\n' + SPHERE
    assert main(["--config", cfg(tmp_path, text), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "check_k.txt").exists()
    c = load_config(cfg(tmp_path, SPHERE + "\n[output]\nrefine = 2\n"))
    assert c.output.refine == 2


def test_parse_config_defaults():
    c = parse_config({"grid": {"m": 3}, "curvature": {"profile": "power", "c": 2.0, "p": -2.0}})
    assert c.grid.fiber_resolution == 32 and c.solver.steps == 20 and c.sweep is None
    with pytest.raises(ConfigError):
        parse_config({"grid": {"m": 3}})
    with pytest.raises(ConfigError):
        parse_config({"grid": {"m": 3}, "curvature": {"profile": "rational", "c": 2.0}})


def test_refinement_study(tmp_path):
    text = ANISO.format(res=8, amp=0.1)
    assert run(tmp_path, "solve", text, "--refine", "2") == 0
    rows = read_rows(tmp_path / "out" / "refinement.csv")
    assert [int(r["resolution"]) for r in rows] == [8, 16, 32]
    assert float(rows[2]["direct_spectral_ratio"]) >= 3.5


SWEEP_AMP = ANISO.format(res=8, amp=0.05) + """
[sweep]
parameter = "amplitude"
values = [0.0, 0.05, 0.1]
"""


def test_sweep_amplitude(tmp_path):
    assert run(tmp_path, "sweep", SWEEP_AMP) == 0
    rows = read_rows(tmp_path / "out" / "sweep.csv")
    assert [r["value"] for r in rows] == ["0.0", "0.05", "0.1"]
    assert all(r["status"] == "converged" for r in rows)
    assert float(rows[0]["max_u_minus_radial"]) <= 1e-14
    assert float(rows[1]["max_u_minus_radial"]) < float(rows[2]["max_u_minus_radial"])


def test_sweep_is_order_deterministic_with_jobs(tmp_path):
    run(tmp_path, "sweep", SWEEP_AMP, out="serial")
    run(tmp_path, "sweep", SWEEP_AMP, "--jobs", "3", out="pool")
    assert (tmp_path / "serial" / "sweep.csv").read_bytes() == (tmp_path / "pool" / "sweep.csv").read_bytes()


def test_sweep_r_star(tmp_path):
    text = CROSSING.format(m=2, res=32, c=1.0) + '\n[sweep]\nparameter = "r_star"\nvalues = [0.8, 1.0, 1.5]\n'
    assert run(tmp_path, "sweep", text) == 0
    for r in read_rows(tmp_path / "out" / "sweep.csv"):
        assert float(r["max_u_minus_radial"]) <= 1e-8


def test_sweep_resolution_order(tmp_path):
    text = ANISO.format(res=8, amp=0.1) + '\n[sweep]\nparameter = "resolution"\nvalues = [16, 32, 64]\njobs = 3\n'
    assert run(tmp_path, "sweep", text) == 0
    dev = [float(r["deviation"]) for r in read_rows(tmp_path / "out" / "sweep.csv")]
    orders = [math.log2(a / b) for a, b in zip(dev, dev[1:])]
    assert all(1.8 <= o <= 2.2 for o in orders)


def test_sweep_records_point_failures(tmp_path):
    text = SPHERE + '\n[sweep]\nparameter = "r_star"\nvalues = [1.0]\n'
    assert run(tmp_path, "sweep", text) == 1
    rows = read_rows(tmp_path / "out" / "sweep.csv")
    assert rows[0]["status"] == "error" and "power profile" in rows[0]["message"]
