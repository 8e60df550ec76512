"""Runtime monitors for the a priori quantities of the problem.

None of these enforce anything; they evaluate barrier bounds, the two
gradient functionals (1+v)e^{-lu} and (1+v1)e^{lu}, horizontal gradient
nullity and ellipticity on a field, so a solve can record them per step.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from radialmc.curvature import CurvatureSpec, circle_directions, fibonacci_directions
from radialmc.grid import BundleGrid
from radialmc.operator import elliptic_coefficients, gradient_split


@dataclass
class BarrierReport:
    passed: bool
    min_radius: float
    max_radius: float
    argmin: int
    argmax: int
    lower: float
    upper: float
    slack: float


def barrier_check(grid: BundleGrid, u, r1: float, r2: float, slack: float = 1e-6) -> BarrierReport:
    """Pass iff r1 - slack <= e^u <= r2 + slack at every node."""
    if r1 > r2:
        raise ValueError(f"barrier needs r1 <= r2, got {r1} > {r2}")
    rho = np.exp(grid.field(u))
    i_min, i_max = int(np.argmin(rho)), int(np.argmax(rho))
    ok = rho[i_min] >= r1 - slack and rho[i_max] <= r2 + slack
    return BarrierReport(bool(ok), float(rho[i_min]), float(rho[i_max]), i_min, i_max, r1, r2, slack)


def default_gamma_exponent(spec: CurvatureSpec, r1: float, r2: float) -> float:
    """l0 = 4 + r2 * max K over the shell r1 <= |xi| <= r2."""
    dirs = circle_directions(128) if spec.m == 2 else fibonacci_directions(256)
    base = np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False) if spec.base_dependent else np.zeros(1)
    radii = np.linspace(r1, r2, 64) if r2 > r1 else np.array([r1])
    kmax = 0.0
    for b in base:
        ang = spec.angular(dirs, np.full(len(dirs), b))
        kmax = max(kmax, float(np.max(spec.profile_value(radii)[:, None] * ang[None, :])))
    return 4.0 + r2 * kmax


def gamma_functionals(grid: BundleGrid, u, l: float) -> dict:
    """Maxima of (1+v)e^{-lu} and (1+v1)e^{lu}, with the nodes attaining them."""
    if l <= 0:
        raise ValueError("gamma exponent l must be positive")
    u = grid.field(u)
    split = gradient_split(grid, u)
    g1 = (1.0 + split.v) * np.exp(-l * u)
    g2 = (1.0 + split.v1) * np.exp(l * u)
    i1, i2 = int(np.argmax(g1)), int(np.argmax(g2))
    return {"gamma1": float(g1[i1]), "gamma1_node": i1, "gamma2": float(g2[i2]), "gamma2_node": i2}


def horizontal_nullity(grid: BundleGrid, u) -> float:
    """Max over nodes of v2 (0 on grids without a base)."""
    if grid.n == 0:
        return 0.0
    return float(gradient_split(grid, u).v2.max())


def horizontal_laplacian_condition(grid: BundleGrid, u, alpha: float) -> bool | None:
    """Whether (mu_a + mu_b) Dt_aa u <= -alpha sqrt(v) wherever v >= 1.

    Reported only, never enforced. ``None`` on grids without a base.
    """
    if grid.n == 0:
        return None
    u = grid.field(u)
    split = gradient_split(grid, u)
    trace = np.zeros(grid.size)
    for a in grid.horizontal:
        trace += 2.0 * np.exp(2.0 * u) * (grid.hess_op(a, a) @ u)
    mask = split.v >= 1.0
    if not np.any(mask):
        return True
    return bool(np.all(trace[mask] <= -alpha * np.sqrt(split.v[mask])))


def nonexistence_check(spec: CurvatureSpec, samples: int = 512) -> tuple[str, float] | None:
    """('below', a) if |xi| K / (m-1) <= a < 1 on the annulus, ('above', b) if >= b > 1."""
    dirs = circle_directions(256) if spec.m == 2 else fibonacci_directions(400)
    base = np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False) if spec.base_dependent else np.zeros(1)
    radii = np.geomspace(*spec.annulus, samples)
    ratio = np.concatenate(
        [
            spec.rho_k(radii[:, None], dirs[None, :, :], np.full((1, len(dirs)), b)).ravel()
            for b in base
        ]
    ) / (spec.m - 1)
    a, b = float(ratio.max()), float(ratio.min())
    if a < 1.0:
        return ("below", a)
    if b > 1.0:
        return ("above", b)
    return None


@dataclass
class MonitorReport:
    min_radius: float
    max_radius: float
    barrier_passed: bool | None
    gamma_exponent: float
    gamma1: float
    gamma2: float
    max_v2: float
    min_ellipticity: float
    max_ellipticity_excess: float
    horizontal_condition: bool | None

    def as_dict(self) -> dict:
        return asdict(self)


def monitor(
    grid: BundleGrid,
    u,
    l: float,
    barrier: tuple[float, float] | None = None,
    slack: float = 1e-6,
    alpha: float = 0.0,
) -> MonitorReport:
    u = grid.field(u)
    rho = np.exp(u)
    passed = None
    if barrier is not None:
        passed = barrier_check(grid, u, barrier[0], barrier[1], slack).passed
    gam = gamma_functionals(grid, u, l)
    coeffs = elliptic_coefficients(grid, u)
    eig = coeffs.eigenvalues()
    v = gradient_split(grid, u).v
    return MonitorReport(
        min_radius=float(rho.min()),
        max_radius=float(rho.max()),
        barrier_passed=passed,
        gamma_exponent=l,
        gamma1=gam["gamma1"],
        gamma2=gam["gamma2"],
        max_v2=horizontal_nullity(grid, u),
        min_ellipticity=float(eig[:, 0].min()),
        max_ellipticity_excess=float(np.max(eig[:, -1] - (1.0 + v))),
        horizontal_condition=horizontal_laplacian_condition(grid, u, alpha),
    )
