"""Sphere-bundle grids and covariant finite differences.

The fiber is the unit sphere S^{m-1} (a circle for m = 2, the round 2-sphere
for m = 3); the optional base is a flat circle of length 2*pi carrying a
trivial bundle. Derivatives are expressed in an orthonormal frame

    m = 2:  e_1 = d/dtheta
    m = 3:  e_1 = d/dtheta,  e_2 = (1/sin theta) d/dphi
    n = 1:  e_last = d/dx   (horizontal)

and every frame-component operator is a sparse matrix acting on the
flattened node values (C order, fiber axes first, base axis last).

The 2-sphere uses a latitude-longitude grid whose colatitudes sit at
(j + 1/2) * pi / N, so no node falls on a pole. Stencils that reach past a
pole read the node on the opposite meridian (phi + pi) in the first row.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

SUPPORTED_M = (2, 3)
SUPPORTED_N = (0, 1)
MIN_RESOLUTION = 8


class GridError(ValueError):
    """Unsupported grid parameters or a field that does not fit its grid."""


def _periodic_first(n: int, h: float) -> sp.csr_matrix:
    off = np.ones(n - 1)
    d = sp.diags([off, -off], [1, -1], shape=(n, n), format="lil")
    d[n - 1, 0] = 1.0
    d[0, n - 1] = -1.0
    return (d.tocsr() / (2.0 * h)).tocsr()


def _periodic_second(n: int, h: float) -> sp.csr_matrix:
    off = np.ones(n - 1)
    d = sp.diags([off, -2.0 * np.ones(n), off], [1, 0, -1], shape=(n, n), format="lil")
    d[n - 1, 0] = 1.0
    d[0, n - 1] = 1.0
    return (d.tocsr() / h**2).tocsr()


def _sphere_operators(nt: int, h: float):
    """Coordinate difference operators on the (theta, phi) grid of S^2.

    Returns (d_theta, d_thetatheta, d_phi, d_phiphi) as sparse matrices on
    the nt x 2nt node array.
    """
    npf = 2 * nt
    size = nt * npf
    idx = np.arange(size).reshape(nt, npf)

    def neighbour(j: int, k: np.ndarray) -> np.ndarray:
        # row index past a pole folds back onto the antipodal meridian
        if j < 0:
            return idx[-1 - j, (k + nt) % npf]
        if j >= nt:
            return idx[2 * nt - 1 - j, (k + nt) % npf]
        return idx[j, k % npf]

    rows, cols1, cols2 = [], [], []
    k = np.arange(npf)
    for j in range(nt):
        rows.append(idx[j, k])
        cols1.append(neighbour(j + 1, k))
        cols2.append(neighbour(j - 1, k))
    rows = np.concatenate(rows)
    up = np.concatenate(cols1)
    down = np.concatenate(cols2)

    ones = np.ones(size)
    d_t = sp.coo_matrix(
        (np.concatenate([ones, -ones]) / (2.0 * h), (np.concatenate([rows, rows]), np.concatenate([up, down]))),
        shape=(size, size),
    ).tocsr()
    d_tt = sp.coo_matrix(
        (
            np.concatenate([ones, ones, -2.0 * ones]) / h**2,
            (np.concatenate([rows, rows, rows]), np.concatenate([up, down, rows])),
        ),
        shape=(size, size),
    ).tocsr()

    hp = 2.0 * np.pi / npf
    eye_t = sp.identity(nt, format="csr")
    d_p = sp.kron(eye_t, _periodic_first(npf, hp), format="csr")
    d_pp = sp.kron(eye_t, _periodic_second(npf, hp), format="csr")
    return d_t, d_tt, d_p, d_pp


@dataclass
class DerivativeBundle:
    """Frame components of the first and (optionally) second covariant derivatives.

    ``first`` has shape (size, d) and ``second`` shape (size, d, d), where d is
    the number of frame directions.
    """

    first: np.ndarray
    second: np.ndarray | None = None

    def asymmetry(self) -> float:
        if self.second is None:
            return 0.0
        return float(np.max(np.abs(self.second - np.swapaxes(self.second, 1, 2)), initial=0.0))


@dataclass(eq=False)
class BundleGrid:
    """Discretized unit-sphere bundle over a point (n = 0) or a flat circle (n = 1)."""

    m: int
    n: int
    fiber_resolution: int
    base_resolution: int
    shape: tuple[int, ...]
    coords: dict[str, np.ndarray]
    xi: np.ndarray
    mu: np.ndarray
    spacing: dict[str, float]
    metric: dict[str, np.ndarray]
    grad_ops: list[sp.csr_matrix] = field(repr=False)
    hess_ops: dict[tuple[int, int], sp.csr_matrix] = field(repr=False)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def dim(self) -> int:
        """Number of frame directions, m - 1 + n."""
        return self.m - 1 + self.n

    @property
    def vertical(self) -> list[int]:
        return [a for a in range(self.dim) if self.mu[a] == 0]

    @property
    def horizontal(self) -> list[int]:
        return [a for a in range(self.dim) if self.mu[a] == 1]

    @property
    def h(self) -> float:
        """Fiber grid spacing (angular)."""
        return self.spacing["theta"]

    def hess_op(self, a: int, b: int) -> sp.csr_matrix:
        return self.hess_ops[(min(a, b), max(a, b))]

    def field(self, u) -> np.ndarray:
        """Validate ``u`` against this grid and return it as a flat float array."""
        arr = np.asarray(getattr(u, "values", u), dtype=float)
        if arr.shape not in (self.shape, (self.size,)):
            raise GridError(f"field of shape {arr.shape} does not fit grid of shape {self.shape}")
        arr = arr.reshape(self.size)
        if not np.all(np.isfinite(arr)):
            raise GridError("field contains non-finite values")
        return arr

    def frame(self) -> np.ndarray:
        """Orthonormal vertical frame vectors in fiber ambient coordinates, shape (size, m-1, m)."""
        th = self.coords["theta"]
        if self.m == 2:
            return np.stack([-np.sin(th), np.cos(th)], axis=-1)[:, None, :]
        ph = self.coords["phi"]
        e_t = np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)], axis=-1)
        e_p = np.stack([-np.sin(ph), np.cos(ph), np.zeros_like(ph)], axis=-1)
        return np.stack([e_t, e_p], axis=1)

    def derivatives(self, u, second: bool = True) -> DerivativeBundle:
        u = self.field(u)
        # every stencil annihilates constants; shifting by one node value cuts round-off
        # on fine sphere grids and is exact under u -> u + c whenever u + c is exact
        u = u - u[0]
        first = np.stack([op @ u for op in self.grad_ops], axis=-1)
        if not second:
            return DerivativeBundle(first)
        d = self.dim
        hess = np.empty((self.size, d, d))
        for a in range(d):
            for b in range(a, d):
                hess[:, a, b] = self.hess_op(a, b) @ u
                hess[:, b, a] = hess[:, a, b]
        return DerivativeBundle(first, hess)


@dataclass
class ScalarField:
    """Node values on a grid (the unknown u or a derived quantity)."""

    grid: BundleGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = self.grid.field(self.values)

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)


def build_grid(m: int, n: int = 0, fiber_resolution: int = 64, base_resolution: int | None = None) -> BundleGrid:
    """Build the discretized bundle.

    For m = 3, ``fiber_resolution`` is the number of colatitude rows and the
    longitude count is twice that. ``base_resolution`` is required for n = 1.
    """
    if m not in SUPPORTED_M:
        raise GridError(f"fiber rank m={m} not supported (choose from {SUPPORTED_M})")
    if n not in SUPPORTED_N:
        raise GridError(f"base dimension n={n} not supported (choose from {SUPPORTED_N})")
    if fiber_resolution < MIN_RESOLUTION:
        raise GridError(f"fiber_resolution must be >= {MIN_RESOLUTION}")
    if n == 1:
        if base_resolution is None or base_resolution < MIN_RESOLUTION:
            raise GridError(f"base_resolution must be >= {MIN_RESOLUTION} when n = 1")
    else:
        base_resolution = 0

    nt = fiber_resolution
    coords: dict[str, np.ndarray] = {}
    spacing: dict[str, float] = {}
    metric: dict[str, np.ndarray] = {}

    if m == 2:
        h = 2.0 * np.pi / nt
        theta = h * np.arange(nt)
        fiber_shape: tuple[int, ...] = (nt,)
        fiber_coords = {"theta": theta}
        xi_f = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
        d1 = _periodic_first(nt, h)
        d2 = _periodic_second(nt, h)
        f_grad = [d1]
        f_hess = {(0, 0): d2}
        metric_f = {"g_thetatheta": np.ones(nt)}
        spacing["theta"] = h
    else:
        h = np.pi / nt
        hp = np.pi / nt
        theta_1d = (np.arange(nt) + 0.5) * h
        phi_1d = hp * np.arange(2 * nt)
        th, ph = np.meshgrid(theta_1d, phi_1d, indexing="ij")
        th, ph = th.ravel(), ph.ravel()
        fiber_shape = (nt, 2 * nt)
        fiber_coords = {"theta": th, "phi": ph}
        xi_f = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=-1)
        d_t, d_tt, d_p, d_pp = _sphere_operators(nt, h)
        s = np.sin(th)
        cot = np.cos(th) / s
        inv_s = sp.diags(1.0 / s)
        d_tp = (d_t @ d_p).tocsr()
        f_grad = [d_t, (inv_s @ d_p).tocsr()]
        f_hess = {
            (0, 0): d_tt,
            (0, 1): (inv_s @ (d_tp - sp.diags(cot) @ d_p)).tocsr(),
            (1, 1): (sp.diags(1.0 / s**2) @ d_pp + sp.diags(cot) @ d_t).tocsr(),
        }
        # round metric d theta^2 + sin^2 theta d phi^2 and its Christoffel symbols
        metric_f = {
            "g_thetatheta": np.ones_like(th),
            "g_phiphi": s**2,
            "christoffel_theta_phiphi": -s * np.cos(th),
            "christoffel_phi_thetaphi": cot,
        }
        spacing["theta"] = h
        spacing["phi"] = hp

    fsize = int(np.prod(fiber_shape))
    if n == 0:
        shape = fiber_shape
        coords.update(fiber_coords)
        xi = xi_f
        grad_ops = f_grad
        hess_ops = f_hess
        metric.update(metric_f)
    else:
        nb = base_resolution
        hb = 2.0 * np.pi / nb
        x = hb * np.arange(nb)
        spacing["x"] = hb
        shape = fiber_shape + (nb,)
        eye_b = sp.identity(nb, format="csr")
        eye_f = sp.identity(fsize, format="csr")
        for key, val in fiber_coords.items():
            coords[key] = np.repeat(val, nb)
        coords["x"] = np.tile(x, fsize)
        xi = np.repeat(xi_f, nb, axis=0)
        for key, val in metric_f.items():
            metric[key] = np.repeat(val, nb)
        db1 = _periodic_first(nb, hb)
        db2 = _periodic_second(nb, hb)
        d = m  # frame index of the base direction (m - 1 fiber directions first)
        xb = d - 1
        grad_ops = [sp.kron(op, eye_b, format="csr") for op in f_grad]
        grad_ops.append(sp.kron(eye_f, db1, format="csr"))
        hess_ops = {key: sp.kron(op, eye_b, format="csr") for key, op in f_hess.items()}
        for a, op in enumerate(f_grad):
            hess_ops[(a, xb)] = sp.kron(op, db1, format="csr")
        hess_ops[(xb, xb)] = sp.kron(eye_f, db2, format="csr")

    mu = np.array([0] * (m - 1) + [1] * n, dtype=int)
    return BundleGrid(
        m=m,
        n=n,
        fiber_resolution=fiber_resolution,
        base_resolution=base_resolution,
        shape=shape,
        coords=coords,
        xi=xi,
        mu=mu,
        spacing=spacing,
        metric=metric,
        grad_ops=grad_ops,
        hess_ops=hess_ops,
    )


def covariant_gradient(grid: BundleGrid, u) -> DerivativeBundle:
    """Frame components D_a u."""
    return grid.derivatives(u, second=False)


def covariant_hessian(grid: BundleGrid, u) -> DerivativeBundle:
    """Frame components D_a u and D_ab u, with round-sphere Christoffel terms."""
    return grid.derivatives(u, second=True)


def vertical_laplacian(grid: BundleGrid, u) -> np.ndarray:
    """Trace of the Hessian over fiber directions (Laplace-Beltrami of S^{m-1})."""
    u = grid.field(u)
    return sum(grid.hess_op(a, a) @ u for a in grid.vertical)
