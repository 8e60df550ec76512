"""Prescribed curvature functions K on the punctured bundle.

A :class:`CurvatureSpec` is a radial profile times an angular factor,

    K(xi) = P(|xi|) * (1 + sum_k a_k * g_k(xi / |xi|, x)),

where the modes g_k are Fourier modes on S^1, low-degree harmonic
polynomials on S^2, or Fourier modes in the base coordinate x.

The solver only ever needs the combination S(rho) = rho * K(rho * xi_hat)
and its radial derivative, so both are exposed directly.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

DEFAULT_ANNULUS = (0.05, 20.0)
PROFILE_KINDS = ("power", "rational", "tabulated")
SPHERE_MODES = ("x", "y", "z", "xy", "xz", "yz", "x2-y2", "3z2-1")

_FOURIER = re.compile(r"^(base_)?(cos|sin)(\d+)$")


class CurvatureSpecError(ValueError):
    """Malformed spec, or K not strictly positive on its annulus."""


class AnnulusError(ValueError):
    """A radius left the validated annulus [r_low, r_high]."""


def _fourier(kind: str, k: int, angle):
    return np.cos(k * angle) if kind == "cos" else np.sin(k * angle)


def _fourier_prime(kind: str, k: int, angle):
    return -k * np.sin(k * angle) if kind == "cos" else k * np.cos(k * angle)


def _sphere_mode(name: str, d: np.ndarray) -> np.ndarray:
    x, y, z = d[..., 0], d[..., 1], d[..., 2]
    return {
        "x": lambda: x,
        "y": lambda: y,
        "z": lambda: z,
        "xy": lambda: x * y,
        "xz": lambda: x * z,
        "yz": lambda: y * z,
        "x2-y2": lambda: x * x - y * y,
        "3z2-1": lambda: 3.0 * z * z - 1.0,
    }[name]()


def fibonacci_directions(count: int) -> np.ndarray:
    """Quasi-uniform unit vectors on S^2."""
    i = np.arange(count) + 0.5
    z = 1.0 - 2.0 * i / count
    r = np.sqrt(1.0 - z * z)
    golden = math.pi * (3.0 - math.sqrt(5.0))
    ang = golden * i
    return np.stack([r * np.cos(ang), r * np.sin(ang), z], axis=-1)


def circle_directions(count: int) -> np.ndarray:
    ang = 2.0 * np.pi * np.arange(count) / count
    return np.stack([np.cos(ang), np.sin(ang)], axis=-1)


@dataclass(frozen=True)
class CurvatureSpec:
    """Radial profile x angular perturbation.

    ``profile`` is one of

    * ``("power", c, p)``              P(r) = c * r**p
    * ``("rational", num, den)``       P(r) = num(r) / den(r), ascending coefficients
    * ``("tabulated", radii, values)`` cubic spline through the table

    ``modes`` is a tuple of ``(amplitude, name)`` pairs; valid names are
    ``cos<k>``/``sin<k>`` on S^1, one of :data:`SPHERE_MODES` on S^2, and
    ``base_cos<k>``/``base_sin<k>`` on the base circle.
    """

    m: int
    profile: tuple
    modes: tuple[tuple[float, str], ...] = ()
    annulus: tuple[float, float] = DEFAULT_ANNULUS
    _spline: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.m not in (2, 3):
            raise CurvatureSpecError(f"unsupported fiber rank m={self.m}")
        kind = self.profile[0] if self.profile else None
        if kind not in PROFILE_KINDS:
            raise CurvatureSpecError(f"unknown profile kind {kind!r}")
        try:
            if kind == "power":
                norm = (kind,) + tuple(float(c) for c in self.profile[1:])
            else:
                norm = (kind,) + tuple(tuple(float(c) for c in part) for part in self.profile[1:])
            modes = tuple((float(a), str(name)) for a, name in self.modes)
        except (TypeError, ValueError) as exc:
            raise CurvatureSpecError(f"malformed profile or modes: {exc}") from None
        object.__setattr__(self, "profile", norm)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "annulus", (float(self.annulus[0]), float(self.annulus[1])))
        lo, hi = self.annulus
        if not 0.0 < lo < hi:
            raise CurvatureSpecError(f"invalid annulus {self.annulus}")
        if kind == "power":
            if len(self.profile) != 3:
                raise CurvatureSpecError("power profile needs (c, p)")
        elif kind == "rational":
            if len(self.profile) != 3 or len(self.profile[1]) == 0 or len(self.profile[2]) == 0:
                raise CurvatureSpecError("rational profile needs non-empty numerator and denominator")
        else:
            radii = np.asarray(self.profile[1], dtype=float)
            values = np.asarray(self.profile[2], dtype=float)
            if radii.ndim != 1 or radii.shape != values.shape or radii.size < 4:
                raise CurvatureSpecError("tabulated profile needs >= 4 matching (radius, value) pairs")
            if np.any(np.diff(radii) <= 0):
                raise CurvatureSpecError("tabulated radii must be strictly increasing")
            if radii[0] > lo or radii[-1] < hi:
                raise CurvatureSpecError("table does not cover the annulus")
            object.__setattr__(self, "_spline", CubicSpline(radii, values))
        for amp, name in self.modes:
            if not np.isfinite(amp):
                raise CurvatureSpecError(f"non-finite amplitude for mode {name!r}")
            self._check_mode(name)
        self._validate_positive()

    # -- structure ---------------------------------------------------------

    def _check_mode(self, name: str) -> None:
        match = _FOURIER.match(name)
        if match:
            if match.group(1) is None and self.m != 2:
                raise CurvatureSpecError(f"fiber Fourier mode {name!r} requires m = 2")
            return
        if name in SPHERE_MODES and self.m == 3:
            return
        raise CurvatureSpecError(f"unknown mode {name!r} for m = {self.m}")

    @property
    def base_dependent(self) -> bool:
        return any(name.startswith("base_") and amp != 0.0 for amp, name in self.modes)

    @property
    def is_radial(self) -> bool:
        return all(amp == 0.0 for amp, _ in self.modes)

    def _validate_positive(self) -> None:
        dirs = circle_directions(256) if self.m == 2 else fibonacci_directions(400)
        radii = np.geomspace(*self.annulus, 256)
        base = np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False) if self.base_dependent else np.zeros(1)
        prof = self.profile_value(radii)
        ang = np.concatenate([self.angular(dirs, np.full(len(dirs), b)) for b in base])
        if np.min(prof) <= 0.0 or np.min(ang) <= 0.0 or not np.all(np.isfinite(prof)):
            raise CurvatureSpecError(f"K is not strictly positive on the annulus {self.annulus}")

    # -- radial profile ----------------------------------------------------

    def profile_value(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        kind = self.profile[0]
        if kind == "power":
            _, c, p = self.profile
            return c * r**p
        if kind == "rational":
            num = np.polynomial.polynomial.polyval(r, self.profile[1])
            den = np.polynomial.polynomial.polyval(r, self.profile[2])
            return num / den
        return self._spline(r)

    def profile_derivative(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        kind = self.profile[0]
        if kind == "power":
            _, c, p = self.profile
            return c * p * r ** (p - 1)
        if kind == "rational":
            P = np.polynomial.polynomial
            num, den = self.profile[1], self.profile[2]
            n0, d0 = P.polyval(r, num), P.polyval(r, den)
            n1, d1 = P.polyval(r, P.polyder(num)), P.polyval(r, P.polyder(den))
            return (n1 * d0 - n0 * d1) / d0**2
        # centered difference of the interpolant
        step = 1e-5 * r
        return (self._spline(r + step) - self._spline(r - step)) / (2.0 * step)

    # -- angular factor ----------------------------------------------------

    def angular(self, directions, base=None) -> np.ndarray:
        """1 + sum a_k g_k evaluated at unit directions (and base coordinates)."""
        d = np.asarray(directions, dtype=float)
        out = np.ones(d.shape[:-1])
        if not self.modes:
            return out
        angle = np.arctan2(d[..., 1], d[..., 0]) if self.m == 2 else None
        for amp, name in self.modes:
            match = _FOURIER.match(name)
            if match:
                kind, k = match.group(2), int(match.group(3))
                if match.group(1):
                    xb = np.zeros(d.shape[:-1]) if base is None else np.asarray(base, dtype=float)
                    out = out + amp * _fourier(kind, k, xb)
                else:
                    out = out + amp * _fourier(kind, k, angle)
            else:
                out = out + amp * _sphere_mode(name, d)
        return out

    def angular_base_derivative(self, directions, base) -> np.ndarray:
        """d/dx of the angular factor (only base modes contribute)."""
        d = np.asarray(directions, dtype=float)
        out = np.zeros(d.shape[:-1])
        xb = np.asarray(base, dtype=float)
        for amp, name in self.modes:
            match = _FOURIER.match(name)
            if match and match.group(1):
                out = out + amp * _fourier_prime(match.group(2), int(match.group(3)), xb)
        return out

    # -- evaluation ----------------------------------------------------------

    def _check_radius(self, r: np.ndarray) -> None:
        lo, hi = self.annulus
        if np.any(r < lo) or np.any(r > hi) or not np.all(np.isfinite(r)):
            bad = r[(r < lo) | (r > hi) | ~np.isfinite(r)]
            raise AnnulusError(f"radius {bad.flat[0]:.6g} outside validated annulus [{lo}, {hi}]")

    def rho_k(self, rho, directions, base=None) -> np.ndarray:
        """rho * K(rho * xi_hat): the scale-free combination entering the equation."""
        rho = np.asarray(rho, dtype=float)
        self._check_radius(rho)
        if self.profile[0] == "power":
            # c rho^(p+1) directly, so degree -1 profiles are exactly scale-free
            _, c, p = self.profile
            return c * rho ** (p + 1.0) * self.angular(directions, base)
        return rho * self.profile_value(rho) * self.angular(directions, base)

    def d_rho_k(self, rho, directions, base=None) -> np.ndarray:
        """d/d rho of rho * K(rho * xi_hat)."""
        rho = np.asarray(rho, dtype=float)
        self._check_radius(rho)
        if self.profile[0] == "power":
            _, c, p = self.profile
            return c * (p + 1.0) * rho**p * self.angular(directions, base)
        radial = self.profile_value(rho) + rho * self.profile_derivative(rho)
        return radial * self.angular(directions, base)


def eval_K(spec: CurvatureSpec, points, base=None) -> np.ndarray:
    """K at ambient fiber points (shape (..., m)), optionally over base coordinates."""
    pts = np.asarray(points, dtype=float)
    r = np.linalg.norm(pts, axis=-1)
    spec._check_radius(r)
    val = spec.profile_value(r) * spec.angular(pts / r[..., None], base)
    if np.any(val <= 0.0):
        raise CurvatureSpecError("K evaluated to a non-positive value")
    return val


def radial_derivative(spec: CurvatureSpec, direction, radius) -> np.ndarray:
    """d[rho K(rho xi_hat)]/d rho at ``radius`` along unit ``direction``."""
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d, axis=-1, keepdims=True)
    return spec.d_rho_k(radius, d)


# -- growth condition -------------------------------------------------------


@dataclass
class GrowthReport:
    satisfied: bool
    r1: float
    r2: float
    monotone_on_annulus: bool
    alpha: float
    horizontal_gradient_null: bool
    max_horizontal_gradient: float
    worst_violation: dict = field(default_factory=dict)
    diagnostic: str = ""

    @property
    def barrier_hull(self) -> tuple[float, float]:
        """(min(r1, 1), max(r2, 1)): the bracket holding every homotopy iterate."""
        return min(self.r1, 1.0), max(self.r2, 1.0)


def _alpha(spec: CurvatureSpec, radii, ray_dir, ray_base) -> float:
    """2 sup |rho d(rho K)/d rho| over the sampled rays and radii."""
    slope = spec.d_rho_k(radii[None, :], ray_dir[:, None, :], ray_base[:, None])
    return 2.0 * float(np.max(np.abs(radii[None, :] * slope)))


def default_directions(m: int) -> np.ndarray:
    return circle_directions(256) if m == 2 else fibonacci_directions(64)


def check_growth(
    spec: CurvatureSpec,
    directions=None,
    base_points=None,
    samples: int = 2048,
    horizontal_tol: float = 1e-10,
) -> GrowthReport:
    """Locate the crossing radii of rho*K - (m-1) and test monotonicity.

    r1 is the smallest (over directions) first crossing and r2 the largest
    last crossing, so rho*K > m-1 below r1 and rho*K < m-1 above r2 in every
    sampled direction. Without a crossing alpha is taken over the whole
    annulus instead of [r1, r2].
    """
    m = spec.m
    dirs = default_directions(m) if directions is None else np.asarray(directions, dtype=float)
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    if base_points is None:
        base_points = np.linspace(0.0, 2.0 * np.pi, 16, endpoint=False) if spec.base_dependent else np.zeros(1)
    base_points = np.atleast_1d(np.asarray(base_points, dtype=float))
    # every (direction, base point) pair is a sample ray
    ray_dir = np.repeat(dirs, len(base_points), axis=0)
    ray_base = np.tile(base_points, len(dirs))

    radii = np.geomspace(*spec.annulus, samples)
    F = spec.rho_k(radii[None, :], ray_dir[:, None, :], ray_base[:, None]) - (m - 1)

    def crossing(i_ray: int, a: float, b: float) -> float:
        d = ray_dir[i_ray]
        xb = ray_base[i_ray]
        f = lambda r: float(spec.rho_k(r, d, xb)) - (m - 1)  # noqa: E731
        fa, fb = f(a), f(b)
        if fa == 0.0:
            return a
        if fb == 0.0:
            return b
        return brentq(f, a, b, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)

    lows, highs = [], []
    for i in range(F.shape[0]):
        row = F[i]
        if row[0] <= 0.0 or row[-1] >= 0.0:
            which = "small" if row[0] <= 0.0 else "large"
            return GrowthReport(
                satisfied=False,
                r1=float("nan"),
                r2=float("nan"),
                monotone_on_annulus=False,
                alpha=_alpha(spec, radii[:: max(1, samples // 256)], ray_dir, ray_base),
                horizontal_gradient_null=False,
                max_horizontal_gradient=float("nan"),
                worst_violation={
                    "direction": ray_dir[i].tolist(),
                    "base": float(ray_base[i]),
                    "radius": float(radii[0] if which == "small" else radii[-1]),
                    "rho_K_minus_m1": float(row[0] if which == "small" else row[-1]),
                },
                diagnostic=f"no sign change of rho*K - (m-1) in the annulus ({which}-radius side violated)",
            )
        first = int(np.argmax(row <= 0.0))
        last = int(len(row) - 1 - np.argmax(row[::-1] >= 0.0))
        lows.append(crossing(i, radii[first - 1], radii[first]))
        highs.append(crossing(i, radii[last], radii[last + 1]))

    r1 = float(min(lows))
    r2 = float(max(highs))

    band = np.linspace(r1, r2, 256) if r2 > r1 else np.array([r1])
    slope = spec.d_rho_k(band[None, :], ray_dir[:, None, :], ray_base[:, None])
    scale = max(1.0, float(np.max(np.abs(slope))))
    monotone = bool(np.max(slope) <= 1e-12 * scale)
    alpha = 2.0 * float(np.max(np.abs(band[None, :] * slope)))  # same as _alpha on the band
    worst = {}
    if not monotone:
        i, j = np.unravel_index(int(np.argmax(slope)), slope.shape)
        worst = {
            "direction": ray_dir[i].tolist(),
            "base": float(ray_base[i]),
            "radius": float(band[j]),
            "d_rho_K": float(slope[i, j]),
        }

    if spec.base_dependent:
        dK = spec.profile_value(band)[None, :] * spec.angular_base_derivative(ray_dir, ray_base)[:, None]
        max_h = float(np.max(np.abs(dK)))
    else:
        max_h = 0.0

    return GrowthReport(
        satisfied=True,
        r1=r1,
        r2=r2,
        monotone_on_annulus=monotone,
        alpha=alpha,
        horizontal_gradient_null=max_h <= horizontal_tol,
        max_horizontal_gradient=max_h,
        worst_violation=worst,
    )


# -- catalogue of specs used by tests, docs and sample configs ---------------


def sphere_benchmark(m: int) -> CurvatureSpec:
    """K = (m-1)(2 - r)/r: the unit sphere solves it."""
    return CurvatureSpec(m, ("rational", [2.0 * (m - 1), -(m - 1.0)], [0.0, 1.0]), annulus=(0.05, 1.9))


def crossing_benchmark(m: int, r_star: float = 1.7) -> CurvatureSpec:
    """K = (m-1) r*/r^2: the sphere of radius r* solves it."""
    return CurvatureSpec(m, ("power", (m - 1.0) * r_star, -2.0))


def homogeneous(m: int, a: float) -> CurvatureSpec:
    """K = a(m-1)/r, homogeneous of degree -1."""
    return CurvatureSpec(m, ("power", a * (m - 1.0), -1.0))


def anisotropic_benchmark(amplitude: float = 0.1) -> CurvatureSpec:
    """m = 3, K = r^-2 (2 + amplitude * z)."""
    return CurvatureSpec(3, ("power", 2.0, -2.0), modes=((amplitude / 2.0, "z"),))
