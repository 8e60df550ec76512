"""TOML run configuration with strict key checking.

Grammar (every key not listed here is rejected)::

    mode = "solve"                  # optional: solve | verify | sweep | check-k

    [grid]                          # required
    m = 3                           # fiber sphere S^{m-1}, m in {2, 3}
    n = 0                           # 0 (single fiber) or 1 (flat circle base)
    fiber_resolution = 32           # colatitude rows (m = 3) or circle nodes (m = 2)
    base_resolution = 16            # n = 1 only; defaults to fiber_resolution

    [curvature]                     # required
    profile = "power"               # power | rational | tabulated
    c = 2.0                         # power:     P(r) = c r^p
    p = -2.0
    numerator = [4.0, -2.0]         # rational:  ascending coefficients
    denominator = [0.0, 1.0]
    radii = [...]                   # tabulated: cubic spline through (radii, values)
    values = [...]
    annulus = [0.05, 20.0]          # optional

    [[curvature.modes]]             # optional, repeatable
    name = "z"
    amplitude = 0.05

    [solver]                        # optional; any SolverOptions field
    [output]                        # optional
    directory = "radialmc-out"
    dump = true                     # u-field CSV
    mesh = true                     # mesh (m = 3) or polyline (m = 2) export
    refine = 0                      # extra doublings for a refinement study
    verify_tolerance = 1e-6         # relative deviation gate for verify

    [sweep]                         # required for mode = "sweep"
    parameter = "amplitude"         # amplitude | r_star | resolution
    values = [0.0, 0.05, 0.1]
    jobs = 1
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from radialmc.curvature import DEFAULT_ANNULUS, CurvatureSpec, CurvatureSpecError
from radialmc.grid import BundleGrid, GridError, build_grid
from radialmc.solver import SolverOptions

MODES = ("solve", "verify", "sweep", "check-k")
SWEEP_PARAMETERS = ("amplitude", "r_star", "resolution")

_TOP_KEYS = {"mode", "grid", "curvature", "solver", "output", "sweep"}
_GRID_KEYS = {"m", "n", "fiber_resolution", "base_resolution"}
_CURV_KEYS = {
    "power": {"profile", "c", "p", "annulus", "modes"},
    "rational": {"profile", "numerator", "denominator", "annulus", "modes"},
    "tabulated": {"profile", "radii", "values", "annulus", "modes"},
}
_MODE_KEYS = {"name", "amplitude"}
_SOLVER_KEYS = {f.name for f in dataclasses.fields(SolverOptions)}
_OUTPUT_KEYS = {"directory", "dump", "mesh", "refine", "verify_tolerance"}
_SWEEP_KEYS = {"parameter", "values", "jobs"}


class ConfigError(ValueError):
    pass


@dataclass
class GridConfig:
    m: int
    n: int = 0
    fiber_resolution: int = 32
    base_resolution: int | None = None

    def build(self, fiber_resolution: int | None = None) -> BundleGrid:
        res = fiber_resolution or self.fiber_resolution
        base = self.base_resolution if fiber_resolution is None else None
        return build_grid(self.m, self.n, res, base)


@dataclass
class OutputConfig:
    directory: str = "radialmc-out"
    dump: bool = True
    mesh: bool = True
    refine: int = 0
    verify_tolerance: float = 1e-6


@dataclass
class SweepConfig:
    parameter: str
    values: list[float]
    jobs: int = 1


@dataclass
class RunConfig:
    grid: GridConfig
    curvature: dict
    solver: SolverOptions = field(default_factory=SolverOptions)
    output: OutputConfig = field(default_factory=OutputConfig)
    sweep: SweepConfig | None = None
    mode: str | None = None

    def spec(self, **overrides) -> CurvatureSpec:
        return spec_from_block(self.curvature, self.grid.m, **overrides)


def _reject_unknown(block: dict, allowed: set, where: str) -> None:
    extra = sorted(set(block) - allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(extra)}")


def _require(block: dict, keys, where: str) -> None:
    missing = [k for k in keys if k not in block]
    if missing:
        raise ConfigError(f"missing key(s) in {where}: {', '.join(missing)}")


def _table(raw: dict, name: str, required: bool) -> dict | None:
    if name not in raw:
        if required:
            raise ConfigError(f"missing required block [{name}]")
        return None
    block = raw[name]
    if not isinstance(block, dict):
        raise ConfigError(f"[{name}] must be a table")
    return block


def spec_from_block(block: dict, m: int, amplitude: float | None = None, r_star: float | None = None) -> CurvatureSpec:
    """Build a CurvatureSpec; ``amplitude`` replaces every mode amplitude,
    ``r_star`` replaces a power profile by (m-1) r*/r^2."""
    kind = block.get("profile")
    if kind not in _CURV_KEYS:
        raise ConfigError(f"[curvature] profile must be one of {sorted(_CURV_KEYS)}, got {kind!r}")
    _reject_unknown(block, _CURV_KEYS[kind], "[curvature]")
    if kind == "power":
        _require(block, ("c", "p"), "[curvature]")
        profile = ("power", block["c"], block["p"])
        if r_star is not None:
            profile = ("power", (m - 1.0) * r_star, -2.0)
    elif kind == "rational":
        _require(block, ("numerator", "denominator"), "[curvature]")
        profile = ("rational", block["numerator"], block["denominator"])
    else:
        _require(block, ("radii", "values"), "[curvature]")
        profile = ("tabulated", block["radii"], block["values"])
    if r_star is not None and kind != "power":
        raise ConfigError("an r_star sweep needs a power profile")
    modes = []
    for i, mode in enumerate(block.get("modes", [])):
        if not isinstance(mode, dict):
            raise ConfigError(f"[[curvature.modes]] entry {i} must be a table")
        _reject_unknown(mode, _MODE_KEYS, f"[[curvature.modes]] entry {i}")
        _require(mode, ("name", "amplitude"), f"[[curvature.modes]] entry {i}")
        amp = mode["amplitude"] if amplitude is None else amplitude
        modes.append((amp, mode["name"]))
    annulus = tuple(block.get("annulus", DEFAULT_ANNULUS))
    if len(annulus) != 2:
        raise ConfigError("[curvature] annulus must be [inner, outer]")
    try:
        return CurvatureSpec(m, profile, tuple(modes), annulus)
    except CurvatureSpecError as exc:
        raise ConfigError(f"[curvature] {exc}") from None


def _typed(value, kind, where: str):
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where} must be a boolean")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where} must be an integer")
        return value
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return float(value)
    if kind is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where} must be a string")
        return value
    return value


def _solver_options(block: dict) -> SolverOptions:
    _reject_unknown(block, _SOLVER_KEYS, "[solver]")
    defaults = SolverOptions()
    kwargs = {}
    for key, value in block.items():
        current = getattr(defaults, key)
        if key == "relaxation_bounds":
            if not isinstance(value, list) or len(value) != 2:
                raise ConfigError("[solver] relaxation_bounds must be [low, high]")
            kwargs[key] = (float(value[0]), float(value[1]))
        elif key == "gamma_exponent":
            kwargs[key] = _typed(value, float, "[solver] gamma_exponent")
        else:
            kwargs[key] = _typed(value, type(current), f"[solver] {key}")
    opts = SolverOptions(**kwargs)
    if opts.linear_solver not in ("direct", "iterative"):
        raise ConfigError("[solver] linear_solver must be 'direct' or 'iterative'")
    return opts


def parse_config(raw: dict) -> RunConfig:
    _reject_unknown(raw, _TOP_KEYS, "top level")
    mode = raw.get("mode")
    if mode is not None and mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")

    g = _table(raw, "grid", True)
    _reject_unknown(g, _GRID_KEYS, "[grid]")
    _require(g, ("m",), "[grid]")
    grid = GridConfig(
        m=_typed(g["m"], int, "[grid] m"),
        n=_typed(g.get("n", 0), int, "[grid] n"),
        fiber_resolution=_typed(g.get("fiber_resolution", 32), int, "[grid] fiber_resolution"),
        base_resolution=None if "base_resolution" not in g else _typed(g["base_resolution"], int, "[grid] base_resolution"),
    )
    try:
        grid.build()
    except GridError as exc:
        raise ConfigError(f"[grid] {exc}") from None

    curv = _table(raw, "curvature", True)
    spec_from_block(curv, grid.m)

    solver = _solver_options(_table(raw, "solver", False) or {})

    o = _table(raw, "output", False) or {}
    _reject_unknown(o, _OUTPUT_KEYS, "[output]")
    output = OutputConfig()
    for key, value in o.items():
        setattr(output, key, _typed(value, type(getattr(output, key)), f"[output] {key}"))
    if output.refine < 0:
        raise ConfigError("[output] refine must be >= 0")

    sweep = None
    s = _table(raw, "sweep", False)
    if s is not None:
        _reject_unknown(s, _SWEEP_KEYS, "[sweep]")
        _require(s, ("parameter", "values"), "[sweep]")
        if s["parameter"] not in SWEEP_PARAMETERS:
            raise ConfigError(f"[sweep] parameter must be one of {SWEEP_PARAMETERS}")
        values = s["values"]
        if not isinstance(values, list) or not values:
            raise ConfigError("[sweep] values must be a non-empty list")
        kind = int if s["parameter"] == "resolution" else float
        sweep = SweepConfig(
            s["parameter"],
            [_typed(v, kind, "[sweep] values") for v in values],
            _typed(s.get("jobs", 1), int, "[sweep] jobs"),
        )
    return RunConfig(grid, curv, solver, output, sweep, mode)


def load_config(path: str | Path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    return parse_config(raw)
