"""Embedded radial graphs and two independent mean-curvature estimators.

The direct estimator evaluates the closed-form mean curvature of e^u xi from
the frame derivatives of u. The discrete estimator never looks at those
derivatives: for m = 2 it applies the polar curvature formula to spectral
derivatives of rho = e^u, and for m = 3 it triangulates the embedded surface
and uses the cotangent mean-curvature normal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from radialmc.curvature import CurvatureSpec
from radialmc.grid import BundleGrid, DerivativeBundle
from radialmc.spectral import periodic_derivative, spectral_derivatives


@dataclass
class RadialGraph:
    """The hypersurface xi -> e^{u(xi)} xi.

    Frame quantities are taken at the graph point, where the homogenized
    derivatives Dt_a u are the orthonormal-frame components, so
    H_ab = G_ab + Dt_a u Dt_b u and f = (1 + v)^{-1/2}.
    """

    grid: BundleGrid
    u: np.ndarray
    derivatives: DerivativeBundle
    positions: np.ndarray
    dtilde: np.ndarray
    hess_tilde: np.ndarray
    metric: np.ndarray
    metric_inverse: np.ndarray
    normal_factor: np.ndarray
    source: str = "stencil"
    extras: dict = field(default_factory=dict)


def embed(grid: BundleGrid, u, derivatives: str = "stencil") -> RadialGraph:
    """Build the radial graph; ``derivatives`` is ``"stencil"`` or ``"spectral"``."""
    u = grid.field(u).copy()
    if derivatives == "stencil":
        der = grid.derivatives(u)
    elif derivatives == "spectral":
        der = spectral_derivatives(grid, u)
    else:
        raise ValueError(f"unknown derivative source {derivatives!r}")
    w = np.exp(grid.mu[None, :] * u[:, None])
    p = w * der.first
    Q = w[:, :, None] * w[:, None, :] * der.second
    v = (p * p).sum(axis=1)
    f = 1.0 / np.sqrt(1.0 + v)
    eye = np.eye(grid.dim)[None]
    outer = p[:, :, None] * p[:, None, :]
    H = eye + outer
    H_inv = eye - (f**2)[:, None, None] * outer
    positions = np.exp(u)[:, None] * grid.xi
    return RadialGraph(grid, u, der, positions, p, Q, H, H_inv, f, derivatives)


def mean_curvature_direct(graph: RadialGraph) -> np.ndarray:
    """f e^{-u} H^{ab} [(1 - mu_a) H_ab - mu_b Dt_a u Dt_b u - Dt_ab u]."""
    mu = graph.grid.mu.astype(float)
    p = graph.dtilde
    bracket = (
        (1.0 - mu)[None, :, None] * graph.metric
        - mu[None, None, :] * p[:, :, None] * p[:, None, :]
        - graph.hess_tilde
    )
    trace = np.einsum("nab,nab->n", graph.metric_inverse, bracket)
    return graph.normal_factor * np.exp(-graph.u) * trace


def polar_curvature(rho, drho, ddrho) -> np.ndarray:
    """Signed curvature of the closed polar curve r = rho(theta)."""
    return (rho**2 + 2.0 * drho**2 - rho * ddrho) / (rho**2 + drho**2) ** 1.5


def polar_residual(rho, drho, ddrho, rho_k) -> np.ndarray:
    """(1 + u'^2)^{3/2} e^u (K - kappa) written in rho = e^u, with rho_k = rho K."""
    q = (rho**2 + drho**2) ** 1.5 / rho**2
    return q * rho_k / rho - (rho**2 + 2.0 * drho**2 - rho * ddrho) / rho**2


# -- discrete estimators ----------------------------------------------------


def sphere_mesh(grid: BundleGrid, u) -> tuple[np.ndarray, np.ndarray]:
    """Triangulate the m = 3 radial graph.

    Every lat-long quad is split along the same diagonal, so all interior
    vertices share one 1-ring pattern. Each polar cap is a fan around an
    added pole vertex whose log-radius is extrapolated from the first two
    ring means. Returns (vertices, faces); faces are outward oriented, grid
    nodes come first and the two pole vertices last.
    """
    if grid.m != 3 or grid.n != 0:
        raise ValueError("sphere_mesh needs an m = 3, n = 0 grid")
    nt, nphi = grid.shape
    U = grid.field(u).reshape(nt, nphi)
    verts = np.exp(U).ravel()[:, None] * grid.xi
    # ring k sits at colatitude (k + 1/2) h, so the pole is at -1/2 in ring units
    u_north = (9.0 * U[0].mean() - U[1].mean()) / 8.0
    u_south = (9.0 * U[-1].mean() - U[-2].mean()) / 8.0
    verts = np.vstack([verts, [0.0, 0.0, np.exp(u_north)], [0.0, 0.0, -np.exp(u_south)]])
    i_n, i_s = nt * nphi, nt * nphi + 1

    idx = np.arange(nt * nphi).reshape(nt, nphi)
    nxt = np.roll(idx, -1, axis=1)
    a, b = idx[:-1].ravel(), nxt[:-1].ravel()
    c, d = nxt[1:].ravel(), idx[1:].ravel()
    quads = np.concatenate([np.stack([a, d, c], 1), np.stack([a, c, b], 1)])
    north = np.stack([np.full(nphi, i_n), idx[0], nxt[0]], 1)
    south = np.stack([np.full(nphi, i_s), nxt[-1], idx[-1]], 1)
    faces = np.concatenate([north, south, quads])

    # orient outward: normal should point away from the origin
    tri = verts[faces]
    normal = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    flip = np.einsum("ij,ij->i", normal, tri.mean(axis=1)) < 0
    faces[flip] = faces[flip][:, [0, 2, 1]]
    return verts, faces


def cotan_mean_curvature(verts: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Vertex mean curvature (sum of principal curvatures) of a closed triangle mesh.

    Uses the cotangent mean-curvature normal with mixed Voronoi areas and
    projects onto the area-weighted vertex normal.
    """
    nv = len(verts)
    hn = np.zeros((nv, 3))
    area = np.zeros(nv)
    vnormal = np.zeros((nv, 3))
    tri = verts[faces]
    face_n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    double_area = np.linalg.norm(face_n, axis=1)
    if np.any(double_area <= 1e-300):
        raise ValueError("degenerate triangle in mesh")
    for corner in range(3):
        np.add.at(vnormal, faces[:, corner], face_n)

    cots = np.empty((len(faces), 3))
    for c in range(3):
        i, j, k = c, (c + 1) % 3, (c + 2) % 3
        e1 = tri[:, j] - tri[:, i]
        e2 = tri[:, k] - tri[:, i]
        cots[:, c] = np.einsum("ij,ij->i", e1, e2) / np.linalg.norm(np.cross(e1, e2), axis=1)

    for c in range(3):
        i, j, k = c, (c + 1) % 3, (c + 2) % 3
        # edge (j, k) is opposite corner i
        w = cots[:, c][:, None]
        vj, vk = faces[:, j], faces[:, k]
        diff = tri[:, j] - tri[:, k]
        np.add.at(hn, vj, w * diff)
        np.add.at(hn, vk, -w * diff)

    # mixed Voronoi areas
    sq = lambda a: np.einsum("ij,ij->i", a, a)  # noqa: E731
    obtuse = cots < 0.0
    any_obtuse = obtuse.any(axis=1)
    for c in range(3):
        i, j, k = c, (c + 1) % 3, (c + 2) % 3
        vor = (sq(tri[:, i] - tri[:, k]) * cots[:, j] + sq(tri[:, i] - tri[:, j]) * cots[:, k]) / 8.0
        tri_area = 0.5 * double_area
        a_i = np.where(any_obtuse, np.where(obtuse[:, c], tri_area / 2.0, tri_area / 4.0), vor)
        np.add.at(area, faces[:, c], a_i)

    hn = hn / (2.0 * area[:, None])
    vnormal /= np.linalg.norm(vnormal, axis=1, keepdims=True)
    return np.einsum("ij,ij->i", hn, vnormal)


def mean_curvature_discrete(graph: RadialGraph) -> np.ndarray:
    grid = graph.grid
    if grid.n != 0:
        raise ValueError("the discrete estimator is only defined for n = 0 grids")
    if grid.m == 2:
        rho = np.exp(graph.u)
        h = grid.spacing["theta"]
        d1 = periodic_derivative(rho, h, 1)
        d2 = periodic_derivative(rho, h, 2)
        return polar_curvature(rho, d1, d2)
    verts, faces = sphere_mesh(grid, graph.u)
    return cotan_mean_curvature(verts, faces)[: grid.size]


def k_on_graph(graph: RadialGraph, spec: CurvatureSpec) -> np.ndarray:
    rho = np.exp(graph.u)
    return spec.rho_k(rho, graph.grid.xi, graph.grid.coords.get("x")) / rho


# -- verification -------------------------------------------------------------


def _deviation(est: np.ndarray, target: np.ndarray) -> dict:
    dev = np.abs(est - target)
    rel = dev / np.abs(target)
    i = int(np.argmax(dev))
    return {
        "max_abs": float(dev.max()),
        "mean_abs": float(dev.mean()),
        "max_rel": float(rel.max()),
        "mean_rel": float(rel.mean()),
        "argmax": i,
    }


def verify(graph: RadialGraph, spec: CurvatureSpec, tolerance: float | None = None) -> dict:
    """Deviation of each curvature estimator from K on the graph.

    ``direct`` uses the grid stencils and so mirrors the discrete residual;
    ``direct_spectral`` evaluates the same formula on spectral derivatives of
    the grid function, which measures how well the interpolated surface
    itself has mean curvature K; ``discrete`` is the mesh/polar estimator
    (n = 0 only).
    """
    grid = graph.grid
    target = k_on_graph(graph, spec)
    stencil = graph if graph.source == "stencil" else embed(grid, graph.u, "stencil")
    spectral = graph if graph.source == "spectral" else embed(grid, graph.u, "spectral")
    report = {
        "direct": _deviation(mean_curvature_direct(stencil), target),
        "direct_spectral": _deviation(mean_curvature_direct(spectral), target),
    }
    if grid.n == 0:
        report["discrete"] = _deviation(mean_curvature_discrete(stencil), target)
    if tolerance is not None:
        report["tolerance"] = tolerance
        report["flagged"] = sorted(k for k, v in report.items() if isinstance(v, dict) and v["max_rel"] > tolerance)
    return report


def convergence_table(solve, spec: CurvatureSpec, grids: list[BundleGrid]) -> list[dict]:
    """Solve on each grid and tabulate estimator deviations with successive ratios.

    ``solve(grid)`` must return the solution array for that grid.
    """
    rows = []
    for grid in grids:
        u = solve(grid)
        rep = verify(embed(grid, u), spec)
        row = {"resolution": grid.fiber_resolution, "h": grid.h}
        for key in ("direct", "direct_spectral", "discrete"):
            if key in rep:
                row[key] = rep[key]["max_abs"]
        rows.append(row)
    for prev, row in zip(rows, rows[1:]):
        for key in ("direct_spectral", "discrete"):
            if key in row and row[key] > 0:
                row[f"{key}_ratio"] = prev[key] / row[key]
    return rows


# -- geometry export ----------------------------------------------------------


def write_mesh(path: Path, grid: BundleGrid, u) -> None:
    """m = 3, n = 0: plain-text 'v x y z' / 'f i j k' (1-based) mesh."""
    verts, faces = sphere_mesh(grid, u)
    lines = [f"v {x:.17g} {y:.17g} {z:.17g}" for x, y, z in verts]
    lines += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in faces]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_polyline(path: Path, grid: BundleGrid, u) -> None:
    """m = 2: closed polyline as CSV 'theta,x,y' (with a leading base column when n = 1)."""
    u = grid.field(u)
    pos = np.exp(u)[:, None] * grid.xi
    theta = grid.coords["theta"]
    if grid.n == 1:
        header = "base,theta,x,y"
        rows = zip(grid.coords["x"], theta, pos[:, 0], pos[:, 1])
    else:
        header = "theta,x,y"
        rows = zip(theta, pos[:, 0], pos[:, 1])
    body = "\n".join(",".join(f"{c:.17g}" for c in row) for row in rows)
    Path(path).write_text(header + "\n" + body + "\n", encoding="utf-8")
