"""Homotopy continuation for the prescribed mean curvature equation.

For t in [0, 1] the Picard map T_t sends w to the solution u of

    L[w] u = t [-w + (m-1)(1 + v1(w)) - (1 + v1(w))^{3/2} e^w K(e^w xi)],

so T_0 = 0 and fixed points of T_1 solve the fiberwise equation. The solver
marches t from 0 to 1, converging the (relaxed) Picard iteration at each
step from the previous solution, then polishes the t = 1 fixed point with
damped Newton on the full residual R(u).
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

from radialmc.curvature import AnnulusError, CurvatureSpec, GrowthReport, check_growth
from radialmc.grid import BundleGrid
from radialmc.monitor import (
    BarrierReport,
    MonitorReport,
    barrier_check,
    default_gamma_exponent,
    monitor,
    nonexistence_check,
)
from radialmc.operator import (
    elliptic_coefficients,
    homotopy_residual,
    linear_operator,
    newton_jacobian,
    picard_rhs,
    residual,
)

log = logging.getLogger(__name__)

CONVERGED = "converged"
NONEXISTENCE = "nonexistence_suspected"
BUDGET = "budget_exhausted"
ESCAPE = "annulus_escape"
STATUSES = (CONVERGED, NONEXISTENCE, BUDGET, ESCAPE)


class LinearSolveError(RuntimeError):
    pass


class GrowthConditionError(RuntimeError):
    """Raised when the growth condition fails and the caller did not force the solve."""


@dataclass
class SolverOptions:
    steps: int = 20
    min_step: float = 1.0 / 320.0
    schedule_refinements: int = 3
    tol_picard: float = 1e-9
    tol_residual: float = 1e-10
    tol_linear: float = 1e-12
    max_picard: int = 200
    max_newton: int = 30
    min_damping: float = 1.0 / 1024.0
    relaxation_bounds: tuple[float, float] = (0.02, 2.0)
    barrier_slack: float = 1e-6
    stall_residual: float = 1e-3
    gamma_exponent: float | None = None
    linear_solver: str = "direct"
    force: bool = False


@dataclass
class SolveState:
    t: float
    residual_norm: float
    picard_defect: float
    picard_iterations: int = 0
    newton_iterations: int = 0
    monitor: MonitorReport | None = None

    def as_dict(self) -> dict:
        out = asdict(self)
        return out


@dataclass
class SolveResult:
    status: str
    u: np.ndarray
    residual_norm: float
    history: list[SolveState] = field(default_factory=list)
    barrier: BarrierReport | None = None
    growth: GrowthReport | None = None
    nonexistence: tuple[str, float] | None = None
    attempts: list[dict] = field(default_factory=list)
    newton_iterations: int = 0
    picard_iterations: int = 0
    gamma_bound: float | None = None
    message: str = ""

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


# -- linear solves ----------------------------------------------------------


def solve_linear(grid: BundleGrid, w, rhs, tol: float = 1e-12, method: str = "direct") -> np.ndarray:
    """Solve L[w] u = rhs.

    Accepts u when the residual is below ``tol`` times
    ``||L||_inf ||u||_inf + ||rhs||_inf`` (normwise backward error).
    """
    rhs = grid.field(rhs)
    if not np.any(rhs):
        return np.zeros(grid.size)
    L = linear_operator(grid, w).tocsc()
    if method == "direct":
        lu = spla.splu(L)
        u = lu.solve(rhs)
        for _ in range(3):
            r = rhs - L @ u
            if _backward_ok(L, u, rhs, r, tol):
                return u
            u = u + lu.solve(r)
    elif method == "iterative":
        ilu = spla.spilu(L, drop_tol=1e-5, fill_factor=20)
        prec = spla.LinearOperator(L.shape, ilu.solve)
        u, info = spla.gmres(L, rhs, M=prec, rtol=tol, atol=0.0, restart=60, maxiter=200)
        if info != 0:
            raise LinearSolveError(f"gmres did not converge (info={info})")
    else:
        raise ValueError(f"unknown linear solver {method!r}")
    r = rhs - L @ u
    if not _backward_ok(L, u, rhs, r, tol):
        raise LinearSolveError(f"linear residual {np.abs(r).max():.3e} above tolerance")
    return u


def _backward_ok(L, u, rhs, r, tol) -> bool:
    norm_L = float(np.abs(L).sum(axis=1).max())
    scale = norm_L * np.abs(u).max() + np.abs(rhs).max()
    return bool(np.abs(r).max() <= tol * scale)


def picard_step(grid: BundleGrid, w, t: float, spec: CurvatureSpec, options: SolverOptions | None = None) -> np.ndarray:
    """T_t w."""
    opts = options or SolverOptions()
    rhs = picard_rhs(grid, w, spec, t)
    return solve_linear(grid, w, rhs, opts.tol_linear, opts.linear_solver)


# -- continuation ------------------------------------------------------------


@dataclass
class _StepOutcome:
    ok: bool
    u: np.ndarray
    defect: float
    iterations: int
    escaped: bool = False


def _picard_converge(grid, spec, u0, t, opts: SolverOptions) -> _StepOutcome:
    """Relaxed Picard iteration u <- u + omega (T_t u - u), Aitken-updated omega."""
    lo, hi = opts.relaxation_bounds
    x = u0.copy()
    omega = 1.0
    prev_r = None
    first = None
    for k in range(opts.max_picard):
        try:
            r = picard_step(grid, x, t, spec, opts) - x
        except AnnulusError:
            return _StepOutcome(False, x, np.inf, k, escaped=True)
        defect = float(np.abs(r).max())
        if first is None:
            first = defect
        if defect <= opts.tol_picard:
            return _StepOutcome(True, x, defect, k + 1)
        if not np.isfinite(defect) or defect > 1e3 * max(first, 1e-3):
            return _StepOutcome(False, x, defect, k + 1)
        if prev_r is not None:
            dr = r - prev_r
            denom = float(dr @ dr)
            if denom > 0.0:
                omega = float(np.clip(-omega * float(prev_r @ dr) / denom, lo, hi))
        prev_r = r
        x = x + omega * r
    return _StepOutcome(False, x, defect, opts.max_picard)


def _snapshot(grid, spec, u, t, defect, l, hull, opts, picard_its=0, newton_its=0, res=None) -> SolveState:
    if res is None:
        res = float(np.abs(homotopy_residual(grid, u, spec, t)).max())
    mon = monitor(grid, u, l, barrier=hull, slack=opts.barrier_slack)
    return SolveState(t, res, defect, picard_its, newton_its, mon)


def _full_residual_norm(grid, spec, u) -> float:
    try:
        return float(np.abs(residual(grid, u, spec)).max())
    except AnnulusError:
        return float("inf")


def newton_refine(
    grid: BundleGrid,
    u0,
    spec: CurvatureSpec,
    options: SolverOptions | None = None,
    barrier: tuple[float, float] | None = None,
) -> SolveResult:
    """Damped Newton on R(u) with backtracking on the max-norm residual.

    A trial step is accepted only if K can be evaluated, the coefficient
    matrix stays elliptic, the barrier (when given) holds, and the residual
    does not increase.
    """
    opts = options or SolverOptions()
    u = grid.field(u0).copy()
    try:
        R = residual(grid, u, spec)
    except AnnulusError as exc:
        return SolveResult(ESCAPE, u, float("inf"), message=str(exc))
    norm = float(np.abs(R).max())
    history = [SolveState(1.0, norm, float("nan"), 0, 0)]
    for it in range(opts.max_newton + 1):
        if norm <= opts.tol_residual:
            return SolveResult(CONVERGED, u, norm, history, newton_iterations=it)
        if it == opts.max_newton:
            break
        J = newton_jacobian(grid, u, spec)
        step = spla.spsolve(J.tocsc(), -R)
        lam = 1.0
        accepted = False
        while lam >= opts.min_damping:
            trial = u + lam * step
            try:
                R_trial = residual(grid, trial, spec)
            except AnnulusError:
                lam *= 0.5
                continue
            n_trial = float(np.abs(R_trial).max())
            ell = elliptic_coefficients(grid, trial).min_eigenvalue()
            bar_ok = True
            if barrier is not None:
                bar_ok = barrier_check(grid, trial, barrier[0], barrier[1], opts.barrier_slack).passed
            if np.isfinite(n_trial) and n_trial <= norm and ell >= 1.0 - 1e-10 and bar_ok:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            return SolveResult(BUDGET, u, norm, history, newton_iterations=it, message="newton stagnated")
        u, R, norm = trial, R_trial, n_trial
        history.append(SolveState(1.0, norm, float("nan"), 0, it + 1))
    return SolveResult(BUDGET, u, norm, history, newton_iterations=opts.max_newton, message="newton budget exhausted")


def _attempt(grid, spec, opts: SolverOptions, steps: int, l: float, hull) -> SolveResult:
    u = np.zeros(grid.size)
    t = 0.0
    dt = base = 1.0 / steps
    history = [_snapshot(grid, spec, u, 0.0, 0.0, l, hull, opts)]
    total_picard = 0
    while t < 1.0 - 1e-14:
        t_new = min(1.0, t + dt)
        out = _picard_converge(grid, spec, u, t_new, opts)
        total_picard += out.iterations
        if out.escaped:
            return SolveResult(
                ESCAPE,
                u,
                _full_residual_norm(grid, spec, u),
                history,
                picard_iterations=total_picard,
                message=f"graph left the annulus at t={t_new:.6g}",
            )
        if not out.ok:
            dt *= 0.5
            log.debug("picard failed at t=%.6g (defect %.3e); step -> %.6g", t_new, out.defect, dt)
            if dt < opts.min_step * (1.0 - 1e-12):
                return SolveResult(
                    BUDGET,
                    u,
                    _full_residual_norm(grid, spec, u),
                    history,
                    picard_iterations=total_picard,
                    message=f"continuation step fell below {opts.min_step:.6g} at t={t:.6g}",
                )
            continue
        u, t = out.u, t_new
        history.append(_snapshot(grid, spec, u, t, out.defect, l, hull, opts, picard_its=out.iterations))
        dt = min(2.0 * dt, base)

    polished = newton_refine(grid, u, spec, opts, barrier=hull)
    history.append(
        _snapshot(
            grid, spec, polished.u, 1.0, history[-1].picard_defect, l, hull, opts,
            newton_its=polished.newton_iterations, res=polished.residual_norm,
        )
    )
    polished.history = history
    polished.picard_iterations = total_picard
    return polished


def continuation_solve(
    grid: BundleGrid,
    spec: CurvatureSpec,
    options: SolverOptions | None = None,
    growth: GrowthReport | None = None,
) -> SolveResult:
    """Solve R(u) = 0 by continuation from u = 0.

    Without ``options.force`` a K in the proven nonexistence regime returns
    ``nonexistence_suspected`` before any iteration, and a failed growth
    check raises :class:`GrowthConditionError`. Failed attempts are retried
    with the schedule doubled, ``schedule_refinements`` times in total; if
    every attempt fails with the full residual bounded below by
    ``stall_residual`` the verdict is ``nonexistence_suspected``.
    """
    opts = options or SolverOptions()
    if spec.m != grid.m:
        raise ValueError(f"spec is for m={spec.m} but grid has m={grid.m}")
    growth = growth if growth is not None else check_growth(spec)
    verdict = nonexistence_check(spec)
    if growth.satisfied:
        hull = growth.barrier_hull
        l = opts.gamma_exponent or default_gamma_exponent(spec, growth.r1, growth.r2)
    else:
        hull = None
        l = opts.gamma_exponent or default_gamma_exponent(spec, 1.0, 1.0)

    if verdict is not None and not opts.force:
        u = np.zeros(grid.size)
        return SolveResult(
            NONEXISTENCE,
            u,
            _full_residual_norm(grid, spec, u),
            growth=growth,
            nonexistence=verdict,
            message=f"K is uniformly {verdict[0]} (m-1)/|xi| (constant {verdict[1]:.6g}); no solution can exist",
        )
    if not growth.satisfied and not opts.force:
        raise GrowthConditionError(growth.diagnostic or "growth condition not satisfied")

    attempts = []
    result = None
    for k in range(max(1, opts.schedule_refinements)):
        steps = opts.steps * 2**k
        result = _attempt(grid, spec, opts, steps, l, hull)
        attempts.append(
            {"steps": steps, "status": result.status, "residual": result.residual_norm, "message": result.message}
        )
        if result.converged:
            break
        log.info("attempt with %d steps ended %s (residual %.3e)", steps, result.status, result.residual_norm)

    result.attempts = attempts
    result.growth = growth
    result.nonexistence = verdict
    if not result.converged and len(attempts) >= 3 and min(a["residual"] for a in attempts) >= opts.stall_residual:
        result.message = (
            f"{len(attempts)} schedules failed with residual bounded below by "
            f"{min(a['residual'] for a in attempts):.3e}; last: {result.message}"
        )
        result.status = NONEXISTENCE
    if growth.satisfied and result.converged:
        result.barrier = barrier_check(grid, result.u, growth.r1, growth.r2, opts.barrier_slack)
    gammas = [s.monitor.gamma1 for s in result.history if s.monitor is not None]
    result.gamma_bound = max(gammas) if gammas else None
    return result
