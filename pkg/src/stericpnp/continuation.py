"""Stationary states on a finite interval and bifurcation-branch mapping.

Stationary states of the transport dynamics have spatially constant
chemical potentials. With the potential slaved to the charge through
Poisson and the total masses pinned to the bulk averages, the discrete
unknown vector on an n-node wall-to-wall grid is

    u = [c1_0, c2_0, phi_0, ..., c1_{n-1}, c2_{n-1}, phi_{n-1}, lam1, lam2]

(3n + 2 entries), and the residual stacks, per node,

    log c_i + (G c)_i + z_i phi - sigma c_i,xx - lam_i = 0   (i = 1, 2)
    (phi_{j-1} - 2 phi_j + phi_{j+1})/dx^2 + z . c_j + rho0 = 0

with Dirichlet rows phi_0 - phi_left and phi_{n-1} - phi_right replacing
the wall Poisson rows, plus two mass rows sum_j w_j c_{i,j} - 2 L cbar_i.
The c_xx stencil uses the same Neumann wall closure as the dynamics, so
converged states are exact fixed points of evolve.

The Jacobian is banded (l = u = 3 in the node-interleaved ordering)
bordered by dense columns for the multipliers and dense mass rows; each
Newton system is solved by block elimination: one banded factorization
with a handful of right-hand sides and a small Schur complement.

Branches in a model parameter (sigma, or the applied voltage amplitude)
are traced by pseudo-arclength continuation: secant tangent, predictor
w + ds * t, corrector Newton on the residual augmented with the
orthogonality row <t, w - w_pred> = 0. The inner product weighs the
state block by 1/dim and the parameter by 1/scale^2, so ds is measured
in fractions of the parameter range and folds are turned smoothly.

Stability is decided by the dynamics rather than eigenvalues:
stability_probe perturbs a converged state with seeded zero-mean noise,
relaxes it with evolve, and declares the state stable when it returns to
itself. When the probe escapes to a different attractor, the relaxed
profile is Newton-polished into a new stationary state. run_combined
chains the two: continue a branch, probe every accepted point, collect
escape targets that differ from the previous one, filter out targets
that land on already-known branches, and launch fresh continuations from
the genuinely new states until the pending list drains.

Diagrams live in the (parameter, weighted arc-length norm of c1) plane.
The weight 1 + (x + L)/(2L) breaks reflection symmetry, so a state and
its mirror image plot at different heights even though their L2 norms
are equal.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_banded

from ._fd import gradient, second_derivative, trapz
from .dynamics import BoundaryConditions, electrode_bc, evolve, solve_potential
from .errors import NumericsError, ParameterError
from .model import DomainSpec, Grid, ModelParams, Profile, make_grid, with_sigma

__all__ = [
    "StationaryState",
    "BranchPoint",
    "Branch",
    "BranchSet",
    "ProbeResult",
    "weighted_norm",
    "l2_norm",
    "stationary_residual",
    "newton_solve",
    "arclength_step",
    "trace_branch",
    "stability_probe",
    "run_combined",
    "states_at",
    "mirror_state",
    "save_branchset",
    "load_branchset",
]

_BAND = 3  # sub/super-diagonals of the core Jacobian in interleaved order


def weighted_norm(c1: np.ndarray, grid: Grid) -> float:
    """Weighted arc length of c1: int (1 + (x+L)/(2L)) sqrt(1 + |c1'|^2) dx.

    The linear weight makes the norm sensitive to WHERE structure sits,
    not just how much of it there is, which separates mirror images on
    the bifurcation diagram.
    """
    if grid.periodic:
        raise ParameterError("weighted_norm is defined on wall-to-wall grids")
    w = 1.0 + (grid.x + grid.L) / (2.0 * grid.L)
    slope = gradient(c1, grid)
    return float(trapz(w * np.sqrt(1.0 + slope * slope), grid))


def l2_norm(c1: np.ndarray, c2: np.ndarray, grid: Grid) -> float:
    """Reflection-invariant companion norm, sqrt(int c1^2 + c2^2 dx)."""
    return float(np.sqrt(trapz(c1 * c1 + c2 * c2, grid)))


@dataclass
class StationaryState:
    """A converged stationary solution with its multipliers."""

    c1: np.ndarray
    c2: np.ndarray
    phi: np.ndarray
    lam1: float
    lam2: float
    param_name: str
    param_value: float

    def pack(self) -> np.ndarray:
        n = self.c1.size
        u = np.empty(3 * n + 2)
        u[0 : 3 * n : 3] = self.c1
        u[1 : 3 * n : 3] = self.c2
        u[2 : 3 * n : 3] = self.phi
        u[-2] = self.lam1
        u[-1] = self.lam2
        return u

    def as_profile(self, grid: Grid) -> Profile:
        return Profile(
            c1=self.c1.copy(), c2=self.c2.copy(), phi=self.phi.copy(), grid=grid
        )

    def distance(self, other: "StationaryState") -> float:
        return max(
            float(np.max(np.abs(self.c1 - other.c1))),
            float(np.max(np.abs(self.c2 - other.c2))),
        )


def _unpack(u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, float, float]:
    m = u.size - 2
    return u[0:m:3], u[1:m:3], u[2:m:3], float(u[-2]), float(u[-1])


def _apply_param(
    p: ModelParams, d: DomainSpec, name: str, value: float
) -> tuple[ModelParams, BoundaryConditions]:
    """Materialize (params, boundary conditions) at a parameter value.

    "sigma" varies the gradient-energy coefficient at fixed wall
    potentials; "voltage" varies the antisymmetric applied voltage
    phi(-L) = -V, phi(L) = +V at fixed sigma.
    """
    if name == "sigma":
        return with_sigma(p, value), electrode_bc(d.phi_left, d.phi_right)
    if name == "voltage":
        return p, electrode_bc(-value, value)
    raise ParameterError(f"unknown continuation parameter {name!r}")


def _assemble(
    u: np.ndarray, p: ModelParams, grid: Grid, bc: BoundaryConditions
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Residual and Jacobian blocks at u.

    Returns (r, ab, C, D, E): full residual (3n + 2), the core band in
    solve_banded storage (2*_BAND + 1, 3n), the dense multiplier columns
    C (3n, 2), the mass rows D (2, 3n), and E = dD/dlam = 0 (2, 2).
    """
    n = grid.n
    dx2 = grid.dx**2
    c1, c2, phi, lam1, lam2 = _unpack(u)
    if np.any(c1 <= 0.0) or np.any(c2 <= 0.0):
        raise ParameterError("stationary residual needs positive concentrations")

    sig = p.sigma

    def lap(c: np.ndarray) -> np.ndarray:
        out = np.empty_like(c)
        out[1:-1] = (c[2:] - 2.0 * c[1:-1] + c[:-2]) / dx2
        out[0] = 2.0 * (c[1] - c[0]) / dx2
        out[-1] = 2.0 * (c[-2] - c[-1]) / dx2
        return out

    mu1 = np.log(c1) + p.g11 * c1 + p.g12 * c2 + p.z1 * phi - sig * lap(c1)
    mu2 = np.log(c2) + p.g12 * c1 + p.g22 * c2 + p.z2 * phi - sig * lap(c2)

    m = 3 * n
    r = np.empty(m + 2)
    r[0:m:3] = mu1 - lam1
    r[1:m:3] = mu2 - lam2
    pois = np.empty(n)
    pois[1:-1] = (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / dx2 + (
        p.z1 * c1[1:-1] + p.z2 * c2[1:-1] + p.rho0
    )
    pois[0] = phi[0] - bc.phi_left
    pois[-1] = phi[-1] - bc.phi_right
    r[2:m:3] = pois
    w = grid.weights
    r[m] = float(w @ c1) - 2.0 * grid.L * p.cbar1
    r[m + 1] = float(w @ c2) - 2.0 * grid.L * p.cbar2

    # Core band, ab[_BAND + row - col, col] = J[row, col].
    ab = np.zeros((2 * _BAND + 1, m))
    b = _BAND
    rows1 = np.arange(0, m, 3)
    rows2 = rows1 + 1
    rows3 = rows1 + 2

    # mu1 rows: d/dc1_j, d/dc2_j (+1), d/dphi_j (+2), d/dc1_{j+-1} (+-3)
    diag_sig = np.full(n, 2.0 * sig / dx2)
    off_sig = np.full(n - 1, -sig / dx2)
    ab[b, rows1] = 1.0 / c1 + p.g11 + diag_sig
    ab[b - 1, rows1 + 1] = p.g12
    ab[b - 2, rows1 + 2] = p.z1
    ab[b - 3, rows1[:-1] + 3] = off_sig  # col = row + 3 (c1_{j+1})
    ab[b + 3, rows1[1:] - 3] = off_sig  # col = row - 3 (c1_{j-1})
    ab[b - 3, 3] = -2.0 * sig / dx2  # wall rows use the mirrored stencil
    ab[b + 3, m - 6] = -2.0 * sig / dx2

    # mu2 rows: d/dc1_j (-1), d/dc2_j, d/dphi_j (+1), d/dc2_{j+-1} (+-3)
    ab[b + 1, rows2 - 1] = p.g12
    ab[b, rows2] = 1.0 / c2 + p.g22 + diag_sig
    ab[b - 1, rows2 + 1] = p.z2
    ab[b - 3, rows2[:-1] + 3] = off_sig
    ab[b + 3, rows2[1:] - 3] = off_sig
    ab[b - 3, 4] = -2.0 * sig / dx2
    ab[b + 3, m - 5] = -2.0 * sig / dx2

    # Poisson rows: d/dc1_j (-2), d/dc2_j (-1), d/dphi_j, d/dphi_{j+-1}
    ab[b + 2, rows3[1:-1] - 2] = p.z1
    ab[b + 1, rows3[1:-1] - 1] = p.z2
    ab[b, rows3[1:-1]] = -2.0 / dx2
    ab[b - 3, rows3[1:-1] + 3] = 1.0 / dx2
    ab[b + 3, rows3[1:-1] - 3] = 1.0 / dx2
    ab[b, rows3[0]] = 1.0  # Dirichlet walls
    ab[b, rows3[-1]] = 1.0

    C = np.zeros((m, 2))
    C[0:m:3, 0] = -1.0
    C[1:m:3, 1] = -1.0
    D = np.zeros((2, m))
    D[0, 0:m:3] = w
    D[1, 1:m:3] = w
    E = np.zeros((2, 2))
    return r, ab, C, D, E


def _solve_bordered(
    ab: np.ndarray,
    C: np.ndarray,
    D: np.ndarray,
    E: np.ndarray,
    f: np.ndarray,
    g: np.ndarray,
) -> np.ndarray:
    """Solve [[B, C], [D, E]] [x; y] = [f; g] with B banded.

    One banded factorization over k+1 right-hand sides, then a k x k
    Schur complement for the border unknowns.
    """
    rhs = np.column_stack([f, C])
    X = solve_banded((_BAND, _BAND), ab, rhs)
    xf = X[:, 0]
    XC = X[:, 1:]
    S = E - D @ XC
    y = np.linalg.solve(S, g - D @ xf)
    return np.concatenate([xf - XC @ y, y])


def stationary_residual(
    u: np.ndarray | StationaryState,
    p: ModelParams,
    grid: Grid,
    bc: BoundaryConditions,
) -> np.ndarray:
    """Residual of the stationary system at u (vector or state)."""
    vec = u.pack() if isinstance(u, StationaryState) else np.asarray(u, float)
    r, *_ = _assemble(vec, p, grid, bc)
    return r


def _as_profile(guess, grid: Grid) -> Profile:
    """Coerce a seed (state, packed vector, or profile-like) to a Profile."""
    if isinstance(guess, Profile):
        return guess
    if isinstance(guess, StationaryState):
        return Profile(grid, guess.c1.copy(), guess.c2.copy(), guess.phi.copy())
    if isinstance(guess, np.ndarray):
        n = grid.n
        if guess.size != 3 * n + 2:
            raise ParameterError("guess vector has the wrong length")
        return Profile(grid, guess[:n].copy(), guess[n : 2 * n].copy(), guess[2 * n : 3 * n].copy())
    phi = getattr(guess, "phi", None)
    return Profile(
        grid,
        np.asarray(guess.c1, float).copy(),
        np.asarray(guess.c2, float).copy(),
        None if phi is None else np.asarray(phi, float).copy(),
    )


def _initial_vector(
    guess, p: ModelParams, grid: Grid, bc: BoundaryConditions
) -> np.ndarray:
    if isinstance(guess, StationaryState):
        return guess.pack()
    if isinstance(guess, np.ndarray):
        if guess.size != 3 * grid.n + 2:
            raise ParameterError("guess vector has the wrong length")
        return guess.astype(float).copy()
    # Profile-like: c1/c2/phi attributes
    c1 = np.asarray(guess.c1, float)
    c2 = np.asarray(guess.c2, float)
    if getattr(guess, "phi", None) is None:
        phi = solve_potential(c1, c2, p, grid, bc)
    else:
        phi = np.asarray(guess.phi, float)
    mu1 = np.log(c1) + p.g11 * c1 + p.g12 * c2 + p.z1 * phi
    mu2 = np.log(c2) + p.g12 * c1 + p.g22 * c2 + p.z2 * phi
    if p.sigma > 0.0:
        mu1 -= p.sigma * second_derivative(c1, grid, ghost="mirror_even")
        mu2 -= p.sigma * second_derivative(c2, grid, ghost="mirror_even")
    n = grid.n
    u = np.empty(3 * n + 2)
    u[0 : 3 * n : 3] = c1
    u[1 : 3 * n : 3] = c2
    u[2 : 3 * n : 3] = phi
    u[-2] = float(np.mean(mu1))
    u[-1] = float(np.mean(mu2))
    return u


def newton_solve(
    guess,
    p: ModelParams,
    grid: Grid,
    bc: BoundaryConditions,
    param_name: str = "sigma",
    param_value: float | None = None,
    tol: float = 1e-10,
    max_iter: int = 40,
) -> StationaryState:
    """Damped Newton on the stationary system at fixed parameters.

    guess may be a StationaryState, a packed vector, or anything with
    c1/c2/phi arrays (multiplier seeds then come from the mean chemical
    potentials). Step lengths are backtracked until the concentrations
    stay positive and the residual norm drops; a step that cannot be
    damped into decrease raises NumericsError.
    """
    if param_value is None:
        param_value = p.sigma if param_name == "sigma" else bc.phi_right
    u = _initial_vector(guess, p, grid, bc)
    m = 3 * grid.n
    cmask = np.zeros(u.size, bool)
    cmask[0:m:3] = True
    cmask[1:m:3] = True
    r, ab, C, D, E = _assemble(u, p, grid, bc)
    rnorm = float(np.max(np.abs(r)))
    if not np.isfinite(rnorm):
        raise NumericsError("stationary residual is not finite at the initial guess")
    for _ in range(max_iter):
        if rnorm < tol:
            c1, c2, phi, lam1, lam2 = _unpack(u)
            return StationaryState(
                c1.copy(), c2.copy(), phi.copy(), lam1, lam2, param_name, param_value
            )
        step = _solve_bordered(ab, C, D, E, -r[:m], -r[m:])
        t = 1.0
        while True:
            u_try = u + t * step
            if np.all(u_try[cmask] > 0.0):
                r_try, ab_try, C_try, D_try, E_try = _assemble(u_try, p, grid, bc)
                rn_try = float(np.max(np.abs(r_try)))
                if not np.isfinite(rn_try):
                    rn_try = np.inf
                if rn_try < rnorm * (1.0 - 0.25 * t) or rn_try < tol:
                    u, r, ab, C, D, E = u_try, r_try, ab_try, C_try, D_try, E_try
                    rnorm = rn_try
                    break
            t *= 0.5
            if t < 1.0 / 1024.0:
                raise NumericsError(
                    f"Newton stalled at residual {rnorm:.3e} (no damped decrease)"
                )
    if rnorm < tol:
        c1, c2, phi, lam1, lam2 = _unpack(u)
        return StationaryState(
            c1.copy(), c2.copy(), phi.copy(), lam1, lam2, param_name, param_value
        )
    raise NumericsError(f"Newton did not converge: residual {rnorm:.3e}")


def _dresidual_dparam(
    u: np.ndarray, p: ModelParams, grid: Grid, param_name: str
) -> np.ndarray:
    """Analytic derivative of the residual with respect to the parameter."""
    n = grid.n
    m = 3 * n
    out = np.zeros(m + 2)
    if param_name == "sigma":
        dx2 = grid.dx**2
        c1, c2, _, _, _ = _unpack(u)

        def lap(c: np.ndarray) -> np.ndarray:
            v = np.empty_like(c)
            v[1:-1] = (c[2:] - 2.0 * c[1:-1] + c[:-2]) / dx2
            v[0] = 2.0 * (c[1] - c[0]) / dx2
            v[-1] = 2.0 * (c[-2] - c[-1]) / dx2
            return v

        out[0:m:3] = -lap(c1)
        out[1:m:3] = -lap(c2)
    elif param_name == "voltage":
        # Dirichlet rows phi_0 - (-V) and phi_{n-1} - V
        out[2] = 1.0
        out[m - 1] = -1.0
    else:
        raise ParameterError(f"unknown continuation parameter {param_name!r}")
    return out


@dataclass
class BranchPoint:
    """One accepted continuation point."""

    param: float
    state: StationaryState
    l2: float
    wnorm: float
    stable: bool | None = None
    tangent: np.ndarray | None = None


@dataclass
class Branch:
    points: list[BranchPoint] = field(default_factory=list)
    origin: str = "seed"
    truncated: bool = False

    def params(self) -> np.ndarray:
        return np.array([pt.param for pt in self.points])


@dataclass
class BranchSet:
    branches: list[Branch] = field(default_factory=list)
    pending: list[StationaryState] = field(default_factory=list)
    tol: float = 1e-4
    param_name: str = "sigma"


@dataclass
class ProbeResult:
    stable: bool
    target: StationaryState | None
    verdict: str
    distance: float


class _Arclength:
    """Weighted inner-product geometry for the extended vector (u, s)."""

    def __init__(self, dim: int, pscale: float):
        self.dim = dim
        self.pscale = pscale

    def dot(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(a[:-1] @ b[:-1]) / self.dim + (
            a[-1] * b[-1] / self.pscale**2
        )

    def normalize(self, a: np.ndarray) -> np.ndarray:
        return a / np.sqrt(self.dot(a, a))


def _corrector(
    w_pred: np.ndarray,
    tangent: np.ndarray,
    geom: _Arclength,
    p0: ModelParams,
    d: DomainSpec,
    grid: Grid,
    param_name: str,
    tol: float = 1e-10,
    max_iter: int = 12,
) -> tuple[np.ndarray, int]:
    """Newton on [stationary residual; <t, w - w_pred> = 0]. Returns (w, iters)."""
    w = w_pred.copy()
    m = 3 * grid.n
    cmask = np.zeros(w.size, bool)
    cmask[0:m:3] = True
    cmask[1:m:3] = True
    for it in range(max_iter):
        p, bc = _apply_param(p0, d, param_name, float(w[-1]))
        if np.any(w[cmask] <= 0.0):
            raise NumericsError("corrector left the positive cone")
        r, ab, C2, D2, E2 = _assemble(w[:-1], p, grid, bc)
        arc = geom.dot(tangent, w - w_pred)
        rnorm = max(float(np.max(np.abs(r))), abs(arc))
        if rnorm < tol:
            return w, it
        dps = _dresidual_dparam(w[:-1], p, grid, param_name)
        # Border: columns [lam1, lam2, s]; rows [mass1, mass2, arc]
        C = np.column_stack([C2, dps[:m]])
        D = np.vstack([D2, tangent[:m] / geom.dim])
        E = np.zeros((3, 3))
        E[0:2, 0:2] = E2
        E[0, 2] = dps[m]
        E[1, 2] = dps[m + 1]
        E[2, 0] = tangent[m] / geom.dim
        E[2, 1] = tangent[m + 1] / geom.dim
        E[2, 2] = tangent[-1] / geom.pscale**2
        f = -r[:m]
        g = -np.array([r[m], r[m + 1], arc])
        step = _solve_bordered(ab, C, D, E, f, g)
        t = 1.0
        while t >= 1.0 / 256.0:
            w_try = w + t * step
            if np.all(w_try[cmask] > 0.0):
                w = w_try
                break
            t *= 0.5
        else:
            raise NumericsError("corrector could not stay positive")
    raise NumericsError("arclength corrector did not converge")


def _make_point(
    w: np.ndarray, grid: Grid, param_name: str, tangent: np.ndarray | None
) -> BranchPoint:
    c1, c2, phi, lam1, lam2 = _unpack(w[:-1])
    s = float(w[-1])
    state = StationaryState(c1.copy(), c2.copy(), phi.copy(), lam1, lam2, param_name, s)
    return BranchPoint(
        param=s,
        state=state,
        l2=l2_norm(c1, c2, grid),
        wnorm=weighted_norm(c1, grid),
        tangent=tangent,
    )


def arclength_step(
    w_prev: np.ndarray,
    tangent: np.ndarray,
    ds: float,
    geom: _Arclength,
    p0: ModelParams,
    d: DomainSpec,
    grid: Grid,
    param_name: str,
) -> tuple[np.ndarray, int]:
    """One predictor/corrector move of weighted arclength ds."""
    w_pred = w_prev + ds * tangent
    return _corrector(w_pred, tangent, geom, p0, d, grid, param_name)


def trace_branch(
    seed: StationaryState,
    p0: ModelParams,
    d: DomainSpec,
    grid: Grid,
    param_name: str,
    param_range: tuple[float, float],
    ds0: float = 0.01,
    ds_max: float = 0.05,
    ds_min: float = 1e-6,
    max_points: int = 300,
    directions: tuple[int, ...] = (-1,),
    origin: str = "seed",
) -> Branch:
    """Pseudo-arclength trace of the branch through seed.

    Each direction starts with the parameter-direction tangent (Jacobian
    solve against dr/dparam), then switches to secants. ds doubles after
    correctors that need <= 3 iterations and halves after >= 8 or on
    failure, with a 1e-6 floor; a floor breach truncates the branch
    rather than aborting the run. Tracing stops when the parameter
    leaves param_range (the boundary-crossing point is kept, so later
    slicing at a range endpoint still brackets) or after max_points.
    """
    lo, hi = min(param_range), max(param_range)
    geom = _Arclength(dim=3 * grid.n + 2, pscale=hi - lo if hi > lo else 1.0)
    legs: list[list[BranchPoint]] = []
    truncated = False
    for direction in directions:
        w0 = np.concatenate([seed.pack(), [seed.param_value]])
        # Parameter-direction tangent at the seed.
        p, bc = _apply_param(p0, d, param_name, seed.param_value)
        _, ab, C, D, E = _assemble(w0[:-1], p, grid, bc)
        dps = _dresidual_dparam(w0[:-1], p, grid, param_name)
        du = _solve_bordered(ab, C, D, E, -dps[: 3 * grid.n], -dps[3 * grid.n :])
        tangent = geom.normalize(np.concatenate([du, [1.0]]))
        if np.sign(tangent[-1]) != direction:
            tangent = -tangent
        leg = [_make_point(w0, grid, param_name, tangent)]
        ds = ds0
        w = w0
        while len(leg) < max_points:
            try:
                w_new, iters = arclength_step(
                    w, tangent, ds, geom, p0, d, grid, param_name
                )
            except (NumericsError, ParameterError):
                # ParameterError: predictor left the parameter's admissible
                # set (e.g. sigma < 0); shrink the step like a failed solve.
                ds *= 0.5
                if ds < ds_min:
                    truncated = True
                    break
                continue
            tangent = geom.normalize(w_new - w)
            w = w_new
            leg.append(_make_point(w, grid, param_name, tangent))
            if iters <= 3:
                ds = min(2.0 * ds, ds_max)
            elif iters >= 8:
                ds = max(0.5 * ds, ds_min)
            s = float(w[-1])
            if s < lo or s > hi:
                break
        legs.append(leg)
    if len(legs) == 1:
        points = legs[0]
    else:
        points = list(reversed(legs[1]))[:-1] + legs[0]
    return Branch(points=points, origin=origin, truncated=truncated)


def stability_probe(
    state: StationaryState,
    p0: ModelParams,
    d: DomainSpec,
    grid: Grid,
    param_name: str,
    tol_scale: float = 1e-4,
    t_end: float = 200.0,
    noise: float = 1e-3,
    seed: int = 0,
    steady_tol: float = 1e-8,
) -> ProbeResult:
    """Dynamic stability of a stationary state.

    Perturbs the concentrations with seeded zero-mean noise (zero mean in
    the trapezoid sense, so the mass constraints stay put), relaxes with
    evolve, and compares the relaxed profile against the input in the
    max norm: stable iff the distance stays below
    tol_scale * (1 + ||state||). An escaped probe is Newton-polished at
    the same parameter value and handed back as the new target; a polish
    failure (or an aborted evolve) returns target None. A polish that
    lands back on the input state counts as stable: near-marginal modes
    (decay rates of order 1/t_end) leave a residual displacement that
    looks like an escape but is not one.
    """
    p, bc = _apply_param(p0, d, param_name, state.param_value)
    rng = np.random.default_rng(seed)
    prof = state.as_profile(grid)
    for arr in (prof.c1, prof.c2):
        delta = noise * rng.standard_normal(arr.size)
        delta -= trapz(delta, grid) / (2.0 * grid.L)
        arr += delta
    res = evolve(p, prof, bc, t_end=t_end, steady_tol=steady_tol)
    scale = 1.0 + max(float(np.max(np.abs(state.c1))), float(np.max(np.abs(state.c2))))
    dist = max(
        float(np.max(np.abs(res.profile.c1 - state.c1))),
        float(np.max(np.abs(res.profile.c2 - state.c2))),
    )
    if dist < tol_scale * scale and res.verdict != "Unstable":
        return ProbeResult(True, None, res.verdict, dist)
    if res.verdict == "Unstable":
        return ProbeResult(False, None, res.verdict, dist)
    try:
        target = newton_solve(
            res.profile, p, grid, bc, param_name, state.param_value
        )
    except NumericsError:
        target = None
    if target is not None and target.distance(state) < tol_scale * scale:
        return ProbeResult(True, None, res.verdict, dist)
    return ProbeResult(False, target, res.verdict, dist)


def mirror_state(state: StationaryState) -> StationaryState:
    """Spatial reflection x -> -x (a solution too when the walls match)."""
    return StationaryState(
        c1=state.c1[::-1].copy(),
        c2=state.c2[::-1].copy(),
        phi=state.phi[::-1].copy(),
        lam1=state.lam1,
        lam2=state.lam2,
        param_name=state.param_name,
        param_value=state.param_value,
    )


def _state_on_branches(
    state: StationaryState,
    branches: list[Branch],
    p0: ModelParams,
    d: DomainSpec,
    grid: Grid,
    param_name: str,
    tol_scale: float,
) -> bool:
    """Does state coincide with any known branch at its parameter value?

    Branch points near the state's parameter are re-converged at exactly
    that value and compared in state space, which is unambiguous where
    (param, norm) curve distance is not.
    """
    scale = 1.0 + max(float(np.max(np.abs(state.c1))), float(np.max(np.abs(state.c2))))
    for branch in branches:
        for cand in states_at([branch], state.param_value, p0, d, grid, param_name):
            if state.distance(cand) < tol_scale * scale:
                return True
    return False


def states_at(
    branches: list[Branch],
    param_value: float,
    p0: ModelParams,
    d: DomainSpec,
    grid: Grid,
    param_name: str,
    dedup_tol: float = 1e-4,
) -> list[StationaryState]:
    """All distinct branch states re-converged at an exact parameter value.

    Scans each branch for consecutive points whose parameters bracket the
    requested value (a folded branch can cross it several times), Newton
    solves from the nearer bracket end at the exact value, and deduplicates
    the results in state space.
    """
    p, bc = _apply_param(p0, d, param_name, param_value)
    found: list[StationaryState] = []
    for branch in branches:
        pts = branch.points
        if not pts:
            continue
        starts: list[StationaryState] = []
        if len(pts) == 1:
            starts.append(pts[0].state)
        for a, b in zip(pts[:-1], pts[1:]):
            lo, hi = min(a.param, b.param), max(a.param, b.param)
            if lo - 1e-12 <= param_value <= hi + 1e-12:
                starts.append(
                    a.state
                    if abs(a.param - param_value) <= abs(b.param - param_value)
                    else b.state
                )
        for guess in starts:
            try:
                st = newton_solve(guess, p, grid, bc, param_name, param_value)
            except NumericsError:
                continue
            scale = 1.0 + float(np.max(np.abs(st.c1)))
            if all(st.distance(prev) >= dedup_tol * scale for prev in found):
                found.append(st)
    return found


def run_combined(
    seeds,
    p0: ModelParams,
    d: DomainSpec,
    param_name: str,
    param_range: tuple[float, float],
    n: int,
    param_start: float | None = None,
    tol_scale: float = 1e-4,
    ds0: float = 0.01,
    max_points: int = 300,
    max_branches: int = 12,
    probe_stride: int = 1,
    probe_t_end: float = 200.0,
    probe_seed: int = 0,
    verbose: bool = False,
) -> BranchSet:
    """Combined continuation / dynamic-relaxation branch mapping.

    For each queued seed: converge it, skip it if it lies on a branch
    already traced, trace its branch across param_range, then walk the
    branch probing every probe_stride-th point with the dynamics. Probe
    escapes that differ from the previous escape target are collected;
    after the branch, targets that do not lie on any known branch are
    queued as fresh seeds (both continuation directions). The walk ends
    when the queue drains or max_branches is reached.

    Seeds may be StationaryState, Profile-like objects, or bare arrays;
    non-states are Newton-converged at param_start (default: the top of
    param_range for sigma, matching the decreasing-sigma reading of the
    diagrams; the bottom for voltage).
    """
    lo, hi = min(param_range), max(param_range)
    if param_start is None:
        param_start = hi if param_name == "sigma" else lo
    grid = make_grid(d, n)
    bs = BranchSet(tol=tol_scale, param_name=param_name)

    queue: list[tuple[StationaryState, tuple[int, ...], str]] = []
    first_dirs = (-1,) if param_start >= hi else (1,)
    for k, seed in enumerate(seeds):
        if isinstance(seed, StationaryState):
            st = seed
            if lo < st.param_value < hi:
                queue.append((st, (-1, 1), f"seed[{k}]"))
                continue
        else:
            p, bc = _apply_param(p0, d, param_name, param_start)
            try:
                st = newton_solve(seed, p, grid, bc, param_name, param_start)
            except NumericsError:
                # seed too far for Newton (e.g. a flat profile under applied
                # voltage, where boundary layers are an O(1) correction);
                # let the dynamics carry it into a basin first
                prof = _as_profile(seed, grid)
                res = evolve(p, prof, bc, t_end=probe_t_end)
                st = newton_solve(res.profile, p, grid, bc, param_name, param_start)
        queue.append((st, first_dirs, f"seed[{k}]"))

    mirror_ok = d.phi_left == d.phi_right and param_name != "voltage"

    while queue and len(bs.branches) < max_branches:
        state, dirs, origin = queue.pop(0)
        if _state_on_branches(state, bs.branches, p0, d, grid, param_name, tol_scale):
            continue
        if mirror_ok:
            # equal-wall problems are reflection equivariant, so the mirror
            # image of any solution is one as well; queueing it makes the
            # partner of an asymmetric state a first-class branch instead of
            # relying on the probe noise to stumble onto it
            queue.append((mirror_state(state), dirs, f"mirror of {origin}"))
        branch = trace_branch(
            state,
            p0,
            d,
            grid,
            param_name,
            (lo, hi),
            ds0=ds0,
            max_points=max_points,
            directions=dirs,
            origin=origin,
        )
        bs.branches.append(branch)
        if verbose:
            ps = branch.params()
            print(
                f"branch {len(bs.branches)} ({origin}): {len(branch.points)} points, "
                f"{param_name} in [{ps.min():.5g}, {ps.max():.5g}]"
                + (" truncated" if branch.truncated else "")
            )
        prev_target: StationaryState | None = None
        for idx, pt in enumerate(branch.points):
            if idx % probe_stride:
                continue
            probe = stability_probe(
                pt.state,
                p0,
                d,
                grid,
                param_name,
                tol_scale=tol_scale,
                t_end=probe_t_end,
                seed=probe_seed,
            )
            pt.stable = probe.stable
            relaxed = pt.state if probe.stable else probe.target
            if probe.stable or probe.target is None:
                prev_target = relaxed
                continue
            target = probe.target
            scale = 1.0 + float(np.max(np.abs(target.c1)))
            if prev_target is None or target.distance(prev_target) > tol_scale * scale:
                bs.pending.append(target)
                if verbose:
                    print(
                        f"  probe escape at {param_name}={pt.param:.5g} "
                        f"-> wnorm {weighted_norm(target.c1, grid):.5g}"
                    )
            prev_target = target
        for cand in bs.pending:
            if _state_on_branches(cand, bs.branches, p0, d, grid, param_name, tol_scale):
                continue
            # duplicates already in the queue are caught at pop time, once
            # their twin's branch exists
            queue.append((cand, (-1, 1), "probe"))
        bs.pending = []
    return bs


def save_branchset(bs: BranchSet, grid: Grid, out_dir: str | Path) -> Path:
    """Write the branch database: one JSON index plus per-point CSVs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = {
        "param_name": bs.param_name,
        "tol": bs.tol,
        "grid": {"L": grid.L, "n": grid.n},
        "branches": [],
    }
    for bi, branch in enumerate(bs.branches):
        entry = {"origin": branch.origin, "truncated": branch.truncated, "points": []}
        for pi, pt in enumerate(branch.points):
            fname = f"branch{bi:02d}_point{pi:04d}.csv"
            with open(out / fname, "w", newline="") as fh:
                wr = csv.writer(fh)
                wr.writerow(["x", "c1", "c2", "phi"])
                for row in zip(grid.x, pt.state.c1, pt.state.c2, pt.state.phi):
                    wr.writerow([f"{v:.17g}" for v in row])
            entry["points"].append(
                {
                    "param": pt.param,
                    "l2": pt.l2,
                    "wnorm": pt.wnorm,
                    "stable": pt.stable,
                    "lam1": pt.state.lam1,
                    "lam2": pt.state.lam2,
                    "csv": fname,
                }
            )
        index["branches"].append(entry)
    with open(out / "branches.json", "w") as fh:
        json.dump(index, fh, indent=1, sort_keys=True)
    return out / "branches.json"


def load_branchset(out_dir: str | Path) -> tuple[BranchSet, Grid]:
    """Reload a branch database written by save_branchset."""
    out = Path(out_dir)
    with open(out / "branches.json") as fh:
        index = json.load(fh)
    grid = make_grid(float(index["grid"]["L"]), int(index["grid"]["n"]))
    bs = BranchSet(tol=float(index["tol"]), param_name=index["param_name"])
    for bentry in index["branches"]:
        branch = Branch(origin=bentry["origin"], truncated=bentry["truncated"])
        for pentry in bentry["points"]:
            data = np.genfromtxt(out / pentry["csv"], delimiter=",", names=True)
            state = StationaryState(
                c1=np.atleast_1d(data["c1"]).astype(float),
                c2=np.atleast_1d(data["c2"]).astype(float),
                phi=np.atleast_1d(data["phi"]).astype(float),
                lam1=float(pentry["lam1"]),
                lam2=float(pentry["lam2"]),
                param_name=index["param_name"],
                param_value=float(pentry["param"]),
            )
            branch.points.append(
                BranchPoint(
                    param=float(pentry["param"]),
                    state=state,
                    l2=float(pentry["l2"]),
                    wnorm=float(pentry["wnorm"]),
                    stable=pentry["stable"],
                )
            )
        bs.branches.append(branch)
    return bs, grid
