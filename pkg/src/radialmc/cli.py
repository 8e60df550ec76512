"""Command-line front end: ``radialmc {solve,verify,sweep,check-k} --config run.toml``.

Exit codes
    0   success (growth satisfied / converged / verified)
    1   generic failure (growth condition fails, verification above tolerance)
    2   check-k: nonexistence regime detected
    3   solve: nonexistence_suspected
    4   solve: budget_exhausted
    5   solve: annulus_escape
    64  unreadable or invalid configuration
    65  u dump missing, truncated or not matching the configured grid
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from radialmc import __version__
from radialmc.config import MODES, ConfigError, RunConfig, load_config
from radialmc.curvature import CurvatureSpecError, check_growth
from radialmc.grid import BundleGrid
from radialmc.monitor import nonexistence_check
from radialmc.operator import gradient_split
from radialmc.oracle import convergence_table, embed, k_on_graph, mean_curvature_direct, verify, write_mesh, write_polyline
from radialmc.solver import BUDGET, CONVERGED, ESCAPE, NONEXISTENCE, GrowthConditionError, continuation_solve

log = logging.getLogger("radialmc")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_NONEXISTENCE_REGIME = 2
EXIT_CONFIG = 64
EXIT_DATA = 65
STATUS_EXIT = {CONVERGED: 0, NONEXISTENCE: 3, BUDGET: 4, ESCAPE: 5}

REPORT_HEADER = "# radialmc report v1"


class DumpError(ValueError):
    pass


# -- formatting ----------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, bool) or value is None:
        return str(value).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)


def write_report(path: Path, sections: list[tuple[str, dict]]) -> None:
    """Line-oriented report: a versioned header, then ``[section]`` blocks of ``key = value``."""
    lines = [REPORT_HEADER]
    for name, items in sections:
        lines.append(f"[{name}]")
        lines.extend(f"{k} = {_fmt(v)}" for k, v in items.items())
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _growth_section(report) -> dict:
    out = {
        "satisfied": report.satisfied,
        "r1": report.r1,
        "r2": report.r2,
        "monotone_on_annulus": report.monotone_on_annulus,
        "alpha": report.alpha,
        "horizontal_gradient_null": report.horizontal_gradient_null,
        "max_horizontal_gradient": report.max_horizontal_gradient,
    }
    if report.diagnostic:
        out["diagnostic"] = report.diagnostic
    return out


def _verify_section(rep: dict) -> dict:
    out = {}
    for key in ("direct", "direct_spectral", "discrete"):
        if key in rep:
            out[f"{key}_max_abs"] = rep[key]["max_abs"]
            out[f"{key}_max_rel"] = rep[key]["max_rel"]
            out[f"{key}_mean_abs"] = rep[key]["mean_abs"]
    if "tolerance" in rep:
        out["tolerance"] = rep["tolerance"]
        out["flagged"] = rep["flagged"]
    return out


# -- u dumps -----------------------------------------------------------------------


def dump_columns(grid: BundleGrid) -> list[str]:
    cols = ["theta"] if grid.m == 2 else ["theta", "phi"]
    if grid.n == 1:
        cols.append("base")
    return cols + ["u", "v1", "v2", "M", "K"]


def _coordinates(grid: BundleGrid) -> np.ndarray:
    cols = [grid.coords["theta"]] if grid.m == 2 else [grid.coords["theta"], grid.coords["phi"]]
    if grid.n == 1:
        cols.append(grid.coords["x"])
    return np.column_stack(cols)


def write_dump(path: Path, grid: BundleGrid, u, spec) -> None:
    """CSV with columns :func:`dump_columns`: node coordinates, u, v1, v2, M, K on the graph."""
    graph = embed(grid, u)
    split = gradient_split(grid, graph.u)
    data = np.column_stack(
        [_coordinates(grid), graph.u, split.v1, split.v2, mean_curvature_direct(graph), k_on_graph(graph, spec)]
    )
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(dump_columns(grid))
        for row in data:
            writer.writerow([repr(float(x)) for x in row])


def read_dump(path: Path, grid: BundleGrid) -> np.ndarray:
    """Read u back from a dump, checking the header, node count and coordinates."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DumpError(f"cannot read dump: {exc}") from None
    cols = dump_columns(grid)
    if not rows or rows[0] != cols:
        raise DumpError(f"dump header does not match the grid (expected {','.join(cols)})")
    body = rows[1:]
    if len(body) != grid.size:
        raise DumpError(f"dump has {len(body)} rows, grid has {grid.size} nodes")
    try:
        data = np.array([[float(x) for x in r] for r in body])
    except ValueError as exc:
        raise DumpError(f"unparseable dump value: {exc}") from None
    if data.ndim != 2 or data.shape[1] != len(cols):
        raise DumpError("dump rows have the wrong number of columns")
    ncoord = len(cols) - 5
    if not np.allclose(data[:, :ncoord], _coordinates(grid), rtol=0.0, atol=1e-12):
        raise DumpError("dump node coordinates do not match the grid")
    u = data[:, ncoord]
    if not np.all(np.isfinite(u)):
        raise DumpError("dump contains non-finite u")
    return u


# -- workflows -------------------------------------------------------------------------


def run_check_k(cfg: RunConfig, out: Path) -> int:
    spec = cfg.spec()
    t0 = time.perf_counter()
    growth = check_growth(spec)
    verdict = nonexistence_check(spec)
    elapsed = time.perf_counter() - t0
    if verdict is not None:
        code = EXIT_NONEXISTENCE_REGIME
    else:
        code = EXIT_OK if growth.satisfied else EXIT_FAIL
    nonexist = {"regime": "none"} if verdict is None else {"regime": verdict[0], "constant": verdict[1]}
    write_report(
        out / "check_k.txt",
        [("run", {"mode": "check-k", "m": spec.m, "exit_code": code}), ("growth", _growth_section(growth)), ("nonexistence", nonexist)],
    )
    _write_timings(out, {"check_growth": elapsed})
    print(f"growth satisfied={growth.satisfied} r1={growth.r1:.12g} r2={growth.r2:.12g} monotone={growth.monotone_on_annulus}")
    if verdict is not None:
        print(f"nonexistence regime: K uniformly {verdict[0]} (m-1)/|xi| (constant {verdict[1]:.6g})")
    elif growth.diagnostic:
        print(growth.diagnostic)
    return code


def _solve_once(cfg: RunConfig, grid: BundleGrid, spec):
    growth = check_growth(spec)
    return continuation_solve(grid, spec, cfg.solver, growth=growth), growth


def run_solve(cfg: RunConfig, out: Path) -> int:
    spec = cfg.spec()
    grid = cfg.grid.build()
    timings = {}
    t0 = time.perf_counter()
    try:
        result, growth = _solve_once(cfg, grid, spec)
    except GrowthConditionError as exc:
        growth = check_growth(spec)
        write_report(
            out / "report.txt",
            [("run", {"mode": "solve", "status": "growth_failed", "exit_code": EXIT_FAIL}), ("growth", _growth_section(growth))],
        )
        print(f"growth condition fails: {exc} (use --force to solve anyway)", file=sys.stderr)
        return EXIT_FAIL
    timings["solve"] = time.perf_counter() - t0
    code = STATUS_EXIT[result.status]

    sections = [
        ("run", {"mode": "solve", "m": grid.m, "n": grid.n, "fiber_resolution": grid.fiber_resolution,
                 "base_resolution": grid.base_resolution, "nodes": grid.size, "exit_code": code}),
        ("growth", _growth_section(growth)),
        ("solve", {
            "status": result.status,
            "residual": result.residual_norm,
            "picard_iterations": result.picard_iterations,
            "newton_iterations": result.newton_iterations,
            "attempts": len(result.attempts),
            "attempt_steps": [a["steps"] for a in result.attempts],
            "attempt_residuals": [a["residual"] for a in result.attempts],
            "gamma_bound": result.gamma_bound,
            "message": result.message or "none",
        }),
    ]
    if result.barrier is not None:
        b = result.barrier
        sections.append(("barrier", {"passed": b.passed, "min_radius": b.min_radius, "max_radius": b.max_radius,
                                     "r1": b.lower, "r2": b.upper, "slack": b.slack}))
    monitored = [s.monitor for s in result.history if s.monitor is not None]
    if monitored:
        sections.append(("monitor", monitored[-1].as_dict()))
        sections.append(("monitor_extremes", {
            "min_ellipticity": min(m.min_ellipticity for m in monitored),
            "max_gamma1": max(m.gamma1 for m in monitored),
            "max_gamma2": max(m.gamma2 for m in monitored),
            "max_v2": max(m.max_v2 for m in monitored),
            "samples": len(monitored),
        }))

    if result.converged:
        t1 = time.perf_counter()
        rep = verify(embed(grid, result.u), spec, cfg.output.verify_tolerance)
        timings["verify"] = time.perf_counter() - t1
        sections.append(("verification", _verify_section(rep)))
        if cfg.output.dump:
            write_dump(out / "u.csv", grid, result.u, spec)
        if cfg.output.mesh:
            _export_geometry(out, grid, result.u)
        if cfg.output.refine > 0:
            t1 = time.perf_counter()
            rows = refinement_study(cfg, spec, cfg.output.refine)
            timings["refinement"] = time.perf_counter() - t1
            _write_rows(out / "refinement.csv", rows)
    write_report(out / "report.txt", sections)
    _write_timings(out, timings)
    print(f"status={result.status} residual={result.residual_norm:.3e} exit={code}")
    return code


def _export_geometry(out: Path, grid: BundleGrid, u) -> None:
    if grid.m == 3 and grid.n == 0:
        write_mesh(out / "surface.txt", grid, u)
    elif grid.m == 2:
        write_polyline(out / "curve.csv", grid, u)


def refinement_study(cfg: RunConfig, spec, levels: int) -> list[dict]:
    """Solve at resolution * 2**k for k = 0..levels and tabulate estimator deviations."""
    base = cfg.grid.fiber_resolution
    grids = [cfg.grid.build(base * 2**k) for k in range(levels + 1)]
    residuals = []

    def solve(grid):
        result = continuation_solve(grid, spec, replace(cfg.solver, force=True))
        residuals.append(result.residual_norm)
        if not result.converged:
            raise RuntimeError(f"refinement solve at resolution {grid.fiber_resolution} ended {result.status}")
        return result.u

    rows = convergence_table(solve, spec, grids)
    for row, res in zip(rows, residuals):
        row["residual"] = res
    return rows


def run_verify(cfg: RunConfig, dump: Path | None, out: Path) -> int:
    spec = cfg.spec()
    grid = cfg.grid.build()
    if dump is None:
        dump = out / "u.csv"
    try:
        u = read_dump(dump, grid)
    except DumpError as exc:
        print(f"bad dump {dump}: {exc}", file=sys.stderr)
        return EXIT_DATA
    t0 = time.perf_counter()
    try:
        rep = verify(embed(grid, u), spec, cfg.output.verify_tolerance)
    except (CurvatureSpecError, ValueError) as exc:
        print(f"cannot verify dump: {exc}", file=sys.stderr)
        return EXIT_DATA
    elapsed = time.perf_counter() - t0
    worst = max(v["max_rel"] for v in rep.values() if isinstance(v, dict))
    code = EXIT_OK if worst <= cfg.output.verify_tolerance else EXIT_FAIL
    write_report(
        out / "verify.txt",
        [("run", {"mode": "verify", "dump": dump.name, "exit_code": code, "max_rel": worst}), ("verification", _verify_section(rep))],
    )
    _write_timings(out, {"verify": elapsed})
    print(f"max relative deviation {worst:.3e} (tolerance {cfg.output.verify_tolerance:.1e}) exit={code}")
    return code


def _sweep_point(cfg: RunConfig, parameter: str, value) -> dict:
    row = {"parameter": parameter, "value": value}
    try:
        if parameter == "resolution":
            spec, grid = cfg.spec(), cfg.grid.build(int(value))
        elif parameter == "amplitude":
            spec, grid = cfg.spec(amplitude=value), cfg.grid.build()
        else:
            spec, grid = cfg.spec(r_star=value), cfg.grid.build()
        radial = cfg.spec(amplitude=0.0, r_star=value if parameter == "r_star" else None)
        rg = check_growth(radial)
        prediction = math.log(rg.r1) if rg.satisfied and abs(rg.r2 - rg.r1) <= 1e-9 * rg.r1 else float("nan")
        result, _ = _solve_once(cfg, grid, spec)
        row.update(status=result.status, residual=result.residual_norm)
        if result.converged:
            rep = verify(embed(grid, result.u), spec)
            row["max_u_minus_radial"] = float(np.max(np.abs(result.u - prediction)))
            row["deviation"] = rep["direct_spectral"]["max_abs"]
            row["discrete_deviation"] = rep["discrete"]["max_abs"] if "discrete" in rep else float("nan")
    except (GrowthConditionError, ConfigError, CurvatureSpecError, RuntimeError, ValueError) as exc:
        row.update(status="error", message=str(exc).replace(",", ";"))
    return row


SWEEP_COLUMNS = ["parameter", "value", "status", "residual", "max_u_minus_radial", "deviation", "discrete_deviation", "message"]


def run_sweep(cfg: RunConfig, out: Path, jobs: int | None = None) -> int:
    if cfg.sweep is None:
        raise ConfigError("mode sweep needs a [sweep] block")
    sw = cfg.sweep
    jobs = max(1, jobs or sw.jobs)
    t0 = time.perf_counter()
    args = [(cfg, sw.parameter, v) for v in sw.values]
    if jobs == 1:
        rows = [_sweep_point(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_point, *zip(*args)))
    _write_rows(out / "sweep.csv", rows, SWEEP_COLUMNS)
    _write_timings(out, {"sweep": time.perf_counter() - t0})
    failed = sum(r["status"] != CONVERGED for r in rows)
    print(f"sweep over {sw.parameter}: {len(rows) - failed}/{len(rows)} converged")
    return EXIT_OK if failed == 0 else EXIT_FAIL


def _write_rows(path: Path, rows: list[dict], columns: list[str] | None = None) -> None:
    if columns is None:
        columns = []
        for row in rows:
            columns += [k for k in row if k not in columns]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["" if row.get(c) is None else _fmt(row[c]) for c in columns])


def _write_timings(out: Path, timings: dict) -> None:
    lines = ["# radialmc timings v1"] + [f"{k} = {v:.6f}" for k, v in timings.items()]
    (out / "timings.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


# -- entry point ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="radialmc", description="Prescribed mean curvature radial graphs over sphere bundles.")
    p.add_argument("command", nargs="?", choices=MODES, help="workflow (same as --mode)")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out", type=Path, help="output directory (overrides [output] directory)")
    p.add_argument("--force", action="store_true", help="solve even if the growth check fails")
    p.add_argument("--refine", type=int, help="refinement-study doublings (overrides [output] refine)")
    p.add_argument("--jobs", type=int, help="concurrent sweep points (overrides [sweep] jobs)")
    p.add_argument("--dump", type=Path, help="u dump to verify (default: <out>/u.csv)")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--version", action="version", version=f"radialmc {__version__}")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command and args.mode and args.command != args.mode:
        print(f"conflicting modes {args.command!r} and {args.mode!r}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        mode = args.command or args.mode or cfg.mode or "solve"
        if args.force:
            cfg.solver.force = True
        if args.refine is not None:
            if args.refine < 0:
                raise ConfigError("--refine must be >= 0")
            cfg.output.refine = args.refine
        if mode == "sweep" and cfg.sweep is None:
            raise ConfigError("mode sweep needs a [sweep] block")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path(cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    if mode == "check-k":
        return run_check_k(cfg, out)
    if mode == "solve":
        return run_solve(cfg, out)
    if mode == "verify":
        return run_verify(cfg, args.dump, out)
    return run_sweep(cfg, out, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
