"""The quasilinear prescribed-mean-curvature operator on the sphere bundle.

With homogenized derivatives Dt_a u = e^{mu_a u} D_a u and
Dt_ab u = e^{(mu_a + mu_b) u} D_ab u, the radial graph e^u xi has mean
curvature K exactly when

    R(u) = A^{ab} Dt_ab u + v2 - (m-1)(1+v) + (1+v)^{3/2} e^u K(e^u xi) = 0,

    A^{ab} = (1+v) G^{ab} - Dt^a u Dt^b u,   v = v1 + v2,

v1 and v2 being the squared vertical and horizontal parts of Dt u. Frames are
orthonormal, so G^{ab} is the identity.

Everything is assembled node-wise from the grid's sparse stencils, which
makes the analytic Newton Jacobian a sum of diagonally scaled stencil
matrices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from radialmc.curvature import CurvatureSpec
from radialmc.grid import BundleGrid


@dataclass
class GradientSplit:
    dtilde: np.ndarray  # (size, d) homogenized first derivatives
    v1: np.ndarray
    v2: np.ndarray

    @property
    def v(self) -> np.ndarray:
        return self.v1 + self.v2


@dataclass
class EllipticCoefficients:
    matrix: np.ndarray  # (size, d, d), symmetric

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)

    def min_eigenvalue(self) -> float:
        return float(self.eigenvalues()[:, 0].min())


@dataclass
class _Jet:
    """Everything R needs at every node, kept for the Jacobian."""

    u: np.ndarray
    weights: np.ndarray  # e^{mu_a u}, (size, d)
    p: np.ndarray  # Dt_a u
    Q: np.ndarray  # Dt_ab u
    v: np.ndarray
    v2: np.ndarray
    A: np.ndarray


def _jet(grid: BundleGrid, u) -> _Jet:
    u = grid.field(u)
    der = grid.derivatives(u)
    weights = np.exp(grid.mu[None, :] * u[:, None])
    p = weights * der.first
    Q = weights[:, :, None] * weights[:, None, :] * der.second
    sq = p * p
    v = sq.sum(axis=1)
    v2 = (sq * grid.mu[None, :]).sum(axis=1)
    A = (1.0 + v)[:, None, None] * np.eye(grid.dim)[None] - p[:, :, None] * p[:, None, :]
    return _Jet(u, weights, p, Q, v, v2, A)


def _base(grid: BundleGrid):
    return grid.coords.get("x")


def rho_k_on_graph(grid: BundleGrid, u, spec: CurvatureSpec) -> np.ndarray:
    """e^u K(e^u xi) at every node; raises AnnulusError if e^u leaves the annulus."""
    u = grid.field(u)
    return spec.rho_k(np.exp(u), grid.xi, _base(grid))


def gradient_split(grid: BundleGrid, u) -> GradientSplit:
    u = grid.field(u)
    first = grid.derivatives(u, second=False).first
    p = np.exp(grid.mu[None, :] * u[:, None]) * first
    sq = p * p
    v2 = (sq * grid.mu[None, :]).sum(axis=1)
    v1 = (sq * (1 - grid.mu[None, :])).sum(axis=1)
    return GradientSplit(p, v1, v2)


def elliptic_coefficients(grid: BundleGrid, u) -> EllipticCoefficients:
    split = gradient_split(grid, u)
    p = split.dtilde
    A = (1.0 + split.v)[:, None, None] * np.eye(grid.dim)[None] - p[:, :, None] * p[:, None, :]
    return EllipticCoefficients(A)


def residual(grid: BundleGrid, u, spec: CurvatureSpec) -> np.ndarray:
    """R(u) at every node; zero exactly when e^u xi has mean curvature K."""
    jet = _jet(grid, u)
    S = rho_k_on_graph(grid, jet.u, spec)
    return _residual_from_jet(grid, jet, S)


def _residual_from_jet(grid: BundleGrid, jet: _Jet, S: np.ndarray) -> np.ndarray:
    second = np.einsum("nab,nab->n", jet.A, jet.Q)
    onev = 1.0 + jet.v
    return second + jet.v2 - (grid.m - 1) * onev + onev**1.5 * S


def newton_jacobian(grid: BundleGrid, u, spec: CurvatureSpec) -> sp.csr_matrix:
    """Analytic derivative of :func:`residual` with respect to the node values."""
    jet = _jet(grid, u)
    rho = np.exp(jet.u)
    S = spec.rho_k(rho, grid.xi, _base(grid))
    dS = rho * spec.d_rho_k(rho, grid.xi, _base(grid))
    mu = grid.mu[None, :].astype(float)
    p, Q, A = jet.p, jet.Q, jet.A
    onev = 1.0 + jet.v

    trQ = np.einsum("naa->n", Q)
    Qp = np.einsum("nab,nb->na", Q, p)
    dR_dp = (
        2.0 * p * trQ[:, None]
        - 2.0 * Qp
        + 2.0 * mu * p
        - 2.0 * (grid.m - 1) * p
        + 3.0 * (np.sqrt(onev) * S)[:, None] * p
    )
    musum = mu[:, :, None] + mu[:, None, :]
    dR_du = (dR_dp * mu * p).sum(axis=1) + np.einsum("nab,nab->n", A * musum, Q) + onev**1.5 * dS

    J = sp.diags(dR_du)
    for a, op in enumerate(grid.grad_ops):
        J = J + sp.diags(dR_dp[:, a] * jet.weights[:, a]) @ op
    w = jet.weights
    for a in range(grid.dim):
        for b in range(a, grid.dim):
            coef = A[:, a, b] * w[:, a] * w[:, b]
            if a != b:
                coef = 2.0 * coef
            J = J + sp.diags(coef) @ grid.hess_op(a, b)
    return J.tocsr()


# -- fiberwise linear operator of the homotopy --------------------------------


def fiber_coefficients(grid: BundleGrid, w) -> np.ndarray:
    """B^{alpha beta}(w) = (1 + v1(w)) G - D w D w over vertical directions, (size, m-1, m-1)."""
    vert = grid.vertical
    g = grid.derivatives(w, second=False).first[:, vert]
    v1 = (g * g).sum(axis=1)
    k = len(vert)
    return (1.0 + v1)[:, None, None] * np.eye(k)[None] - g[:, :, None] * g[:, None, :]


def linear_operator(grid: BundleGrid, w) -> sp.csr_matrix:
    """Sparse matrix of L[w]u = B(w):D_v^2 u + G^{ij} D_ij u - u.

    The horizontal Laplacian is present only on n = 1 grids.
    """
    B = fiber_coefficients(grid, w)
    vert = grid.vertical
    L = -sp.identity(grid.size, format="csr")
    for i, a in enumerate(vert):
        for j in range(i, len(vert)):
            b = vert[j]
            coef = B[:, i, j] if i == j else 2.0 * B[:, i, j]
            L = L + sp.diags(coef) @ grid.hess_op(a, b)
    for a in grid.horizontal:
        L = L + grid.hess_op(a, a)
    return L.tocsr()


def linearized_apply(grid: BundleGrid, w, u) -> np.ndarray:
    return linear_operator(grid, w) @ grid.field(u)


def picard_rhs(grid: BundleGrid, w, spec: CurvatureSpec, t: float) -> np.ndarray:
    """t [-w + (m-1)(1+v1(w)) - (1+v1(w))^{3/2} e^w K(e^w xi)]."""
    w = grid.field(w)
    if t == 0.0:
        return np.zeros(grid.size)
    v1 = gradient_split(grid, w).v1
    S = rho_k_on_graph(grid, w, spec)
    return t * (-w + (grid.m - 1) * (1.0 + v1) - (1.0 + v1) ** 1.5 * S)


def homotopy_residual(grid: BundleGrid, u, spec: CurvatureSpec, t: float = 1.0) -> np.ndarray:
    """L[u]u - t * rhs(u); vanishes at fixed points of the Picard map T_t.

    At t = 1 this is the fiberwise equation (plus the horizontal Laplacian
    on n = 1 grids).
    """
    u = grid.field(u)
    return linear_operator(grid, u) @ u - picard_rhs(grid, u, spec, t)
