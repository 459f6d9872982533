"""Second-order finite-difference building blocks on uniform grids.

Shared by the energy diagnostics, the time integrator, and the stationary
solver so that every module differentiates and integrates the same way.
Electrode grids include both endpoints; periodic grids wrap.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solveh_banded

from .model import Grid


def gradient(arr: np.ndarray, grid: Grid) -> np.ndarray:
    """First derivative, O(dx^2) everywhere (one-sided at electrode walls)."""
    if grid.periodic:
        out = np.empty_like(arr)
        out[1:-1] = (arr[2:] - arr[:-2]) / (2.0 * grid.dx)
        out[0] = (arr[1] - arr[-1]) / (2.0 * grid.dx)
        out[-1] = (arr[0] - arr[-2]) / (2.0 * grid.dx)
        return out
    return np.gradient(arr, grid.dx, edge_order=2)


def second_derivative(arr: np.ndarray, grid: Grid, ghost: str = "mirror_linear") -> np.ndarray:
    """Three-point second derivative.

    For electrode grids the wall values depend on the ghost-node rule:
    "mirror_even" reflects evenly (ghost = a1), the discrete form of a
    homogeneous Neumann condition a_x = 0 and the variational closure of
    the face-difference gradient energy; "mirror_linear" extrapolates
    linearly (ghost = 2 a0 - a1), which encodes a zero second derivative
    at the wall; "onesided" uses the second-order one-sided stencil.
    """
    dx2 = grid.dx**2
    if grid.periodic:
        out = np.empty_like(arr)
        out[1:-1] = (arr[2:] - 2.0 * arr[1:-1] + arr[:-2]) / dx2
        out[0] = (arr[1] - 2.0 * arr[0] + arr[-1]) / dx2
        out[-1] = (arr[0] - 2.0 * arr[-1] + arr[-2]) / dx2
        return out
    out = np.empty_like(arr)
    out[1:-1] = (arr[2:] - 2.0 * arr[1:-1] + arr[:-2]) / dx2
    if ghost == "mirror_even":
        out[0] = 2.0 * (arr[1] - arr[0]) / dx2
        out[-1] = 2.0 * (arr[-2] - arr[-1]) / dx2
    elif ghost == "mirror_linear":
        out[0] = 0.0
        out[-1] = 0.0
    elif ghost == "onesided":
        out[0] = (2.0 * arr[0] - 5.0 * arr[1] + 4.0 * arr[2] - arr[3]) / dx2
        out[-1] = (2.0 * arr[-1] - 5.0 * arr[-2] + 4.0 * arr[-3] - arr[-4]) / dx2
    else:
        raise ValueError(f"unknown ghost rule {ghost!r}")
    return out


def solve_poisson_dirichlet(
    rhs: np.ndarray, grid: Grid, left: float, right: float
) -> np.ndarray:
    """Solve phi_xx = -rhs with phi(-L) = left, phi(L) = right.

    Standard tridiagonal solve; the system is symmetric positive definite.
    """
    n = grid.n
    dx2 = grid.dx**2
    m = n - 2
    if m <= 0:
        raise ValueError("grid too small for a Poisson solve")
    # -phi_{j-1} + 2 phi_j - phi_{j+1} = dx^2 rhs_j, interior rows only
    ab = np.zeros((2, m))
    ab[0, 1:] = -1.0
    ab[1, :] = 2.0
    b = dx2 * rhs[1:-1]
    b[0] += left
    b[-1] += right
    phi = np.empty(n)
    phi[0] = left
    phi[-1] = right
    phi[1:-1] = solveh_banded(ab, b)
    return phi


def solve_poisson_periodic(rhs: np.ndarray, grid: Grid) -> np.ndarray:
    """Solve phi_xx = -rhs on a periodic grid, zero-mean gauge.

    Uses the FFT diagonalization of the three-point Laplacian, so the answer
    is exact for the same discrete operator used elsewhere. The mean of rhs
    must vanish (net charge on a periodic cell); it is projected out to
    roundoff before solving.
    """
    n = grid.n
    dx2 = grid.dx**2
    f = rhs - rhs.mean()
    fh = np.fft.rfft(f)
    modes = np.arange(fh.size)
    sym = (2.0 - 2.0 * np.cos(2.0 * np.pi * modes / n)) / dx2
    sym[0] = 1.0  # zero mode handled by the gauge
    ph = fh / sym
    ph[0] = 0.0
    return np.fft.irfft(ph, n=n)


def trapz(arr: np.ndarray, grid: Grid) -> float:
    """Quadrature consistent with the grid (trapezoid / periodic rectangle)."""
    return float(grid.weights @ arr)
