"""Spectral derivatives on bundle grids, used as an independent check on the stencils.

Periodic axes (the circle fiber, longitude, the base circle) are
differentiated with the FFT. Colatitude on S^2 uses the double Fourier
sphere trick: the staggered colatitude rows are continued through the poles
onto the opposite meridian, giving a smooth 2*pi-periodic function of theta.
"""

from __future__ import annotations

import numpy as np

from radialmc.grid import BundleGrid, DerivativeBundle


def _diff(arr: np.ndarray, axis: int, spacing: float, orders: int) -> np.ndarray:
    n = arr.shape[axis]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=spacing)
    if orders % 2 == 1 and n % 2 == 0:
        k[n // 2] = 0.0
    shape = [1] * arr.ndim
    shape[axis] = n
    mult = (1j * k) ** orders
    out = np.fft.ifft(np.fft.fft(arr, axis=axis) * mult.reshape(shape), axis=axis)
    return out.real


def _doubled(U: np.ndarray) -> np.ndarray:
    """Continue colatitude rows through both poles (axis 0 theta, axis 1 phi)."""
    nphi = U.shape[1]
    flipped = np.roll(U[::-1], -nphi // 2, axis=1)
    return np.concatenate([U, flipped], axis=0)


def spectral_derivatives(grid: BundleGrid, u) -> DerivativeBundle:
    """Frame components of Du and D^2u computed spectrally."""
    U = grid.field(u).reshape(grid.shape)
    d = grid.dim
    first = np.empty((grid.size, d))
    second = np.empty((grid.size, d, d))

    if grid.m == 2:
        h = grid.spacing["theta"]
        ut = _diff(U, 0, h, 1)
        utt = _diff(U, 0, h, 2)
        first[:, 0] = ut.ravel()
        second[:, 0, 0] = utt.ravel()
        fiber_first = [ut]
    else:
        nt = grid.fiber_resolution
        h, hp = grid.spacing["theta"], grid.spacing["phi"]
        E = _doubled(U)
        ut = _diff(E, 0, h, 1)[:nt]
        utt = _diff(E, 0, h, 2)[:nt]
        up = _diff(U, 1, hp, 1)
        upp = _diff(U, 1, hp, 2)
        utp = _diff(_diff(E, 1, hp, 1), 0, h, 1)[:nt]
        th = grid.coords["theta"].reshape(grid.shape)
        s, cot = np.sin(th), np.cos(th) / np.sin(th)
        first[:, 0] = ut.ravel()
        first[:, 1] = (up / s).ravel()
        second[:, 0, 0] = utt.ravel()
        second[:, 0, 1] = second[:, 1, 0] = ((utp - cot * up) / s).ravel()
        second[:, 1, 1] = (upp / s**2 + cot * ut).ravel()
        fiber_first = [ut, up / s]

    if grid.n == 1:
        hb = grid.spacing["x"]
        axis = U.ndim - 1
        xb = d - 1
        first[:, xb] = _diff(U, axis, hb, 1).ravel()
        second[:, xb, xb] = _diff(U, axis, hb, 2).ravel()
        for a, fa in enumerate(fiber_first):
            second[:, a, xb] = second[:, xb, a] = _diff(fa, axis, hb, 1).ravel()
    return DerivativeBundle(first, second)


def periodic_derivative(values: np.ndarray, spacing: float, order: int = 1) -> np.ndarray:
    """FFT derivative of samples of a periodic function along the first axis."""
    return _diff(np.asarray(values, dtype=float), 0, spacing, order)
