"""Free energy of the steric electrolyte and its convexity structure.

The bulk free-energy density relative to the electroneutral reference
(cbar1, cbar2) is

    h(c) = sum_i c_i (ln(c_i / cbar_i) - 1) + 1/2 c.G c,

so its Hessian is

    Hess h = [[1/c1 + g11, g12], [g12, 1/c2 + g22]],

with determinant

    D(c) = 1/(c1 c2) + g11/c1 + g22/c2 + det G.

D controls everything downstream: the phase-plane flow of stationary
profiles is regular where D != 0, homogeneous states lose linear stability
where D(cbar) < 0, and the cross-interaction threshold

    g12_crit = sqrt((1/cbar1 + g11)(1/cbar2 + g22))

marks D(cbar) = 0. The full functional adds the electrostatic field energy
and, when sigma > 0, a gradient penalty:

    E[c] = int h(c) + 1/2 |phi_x|^2 + sigma/2 (|c1_x|^2 + |c2_x|^2) dx.

Entropy terms are evaluated with the xlogy limit c ln c -> 0 at c = 0, so
fully segregated profiles (exact zeros) have finite energy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from . import _fd
from .errors import ParameterError, RegimeError
from .model import Grid, ModelParams, Profile

_ArrayLike = float | np.ndarray


def free_energy_density(c1: _ArrayLike, c2: _ArrayLike, p: ModelParams) -> _ArrayLike:
    """Bulk density h(c); accepts scalars or arrays, c_i >= 0."""
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    if np.any(c1 < 0) or np.any(c2 < 0):
        raise ParameterError("free energy density needs nonnegative concentrations")
    ent = xlogy(c1, c1 / p.cbar1) - c1 + xlogy(c2, c2 / p.cbar2) - c2
    steric = 0.5 * (p.g11 * c1 * c1 + 2.0 * p.g12 * c1 * c2 + p.g22 * c2 * c2)
    out = ent + steric
    return float(out) if out.ndim == 0 else out


def hessian(c1: float, c2: float, p: ModelParams) -> np.ndarray:
    """Hessian of h at a strictly positive point."""
    if c1 <= 0 or c2 <= 0:
        raise ParameterError("Hessian needs strictly positive concentrations")
    return np.array(
        [[1.0 / c1 + p.g11, p.g12], [p.g12, 1.0 / c2 + p.g22]]
    )


def hessian_det(c1: _ArrayLike, c2: _ArrayLike, p: ModelParams) -> _ArrayLike:
    """D(c) = (1/c1 + g11)(1/c2 + g22) - g12^2.

    Expanded: 1/(c1 c2) + g22/c1 + g11/c2 + det G. Note the cross pairing
    (g22 with c1): it comes from the product of the two diagonal Hessian
    entries and matters whenever c1 != c2 and g11 != g22.
    """
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    if np.any(c1 <= 0) or np.any(c2 <= 0):
        raise ParameterError("D(c) needs strictly positive concentrations")
    det_g = p.g11 * p.g22 - p.g12**2
    out = 1.0 / (c1 * c2) + p.g22 / c1 + p.g11 / c2 + det_g
    return float(out) if out.ndim == 0 else out


def hessian_det_via_identity(c1: _ArrayLike, c2: _ArrayLike, p: ModelParams) -> _ArrayLike:
    """D(c) through det(I + diag(c) G) / (c1 c2); cross-check route."""
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    det_scaled = (1.0 + c1 * p.g11) * (1.0 + c2 * p.g22) - c1 * c2 * p.g12**2
    out = det_scaled / (c1 * c2)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ConvexityClass:
    """Spectral summary of the steric matrix G."""

    is_convex: bool
    eig_min: float
    eig_max: float


def convexity_class(p: ModelParams) -> ConvexityClass:
    """Classify G: positive semidefinite G keeps h convex for all c > 0."""
    tr = p.g11 + p.g22
    det = p.g11 * p.g22 - p.g12**2
    disc = np.sqrt(max(tr * tr - 4.0 * det, 0.0))
    lo, hi = (tr - disc) / 2.0, (tr + disc) / 2.0
    return ConvexityClass(is_convex=bool(lo >= 0.0), eig_min=float(lo), eig_max=float(hi))


def g12_critical(p: ModelParams) -> float:
    """Cross-interaction strength where D(cbar) crosses zero."""
    return float(np.sqrt((1.0 / p.cbar1 + p.g11) * (1.0 / p.cbar2 + p.g22)))


def concave_window_bounds(p: ModelParams) -> tuple[float, float]:
    """Box bounds below which D(c) > 0 is guaranteed.

    D(c) can only turn negative when BOTH c1 > g22/(g12^2 - g11 g22) and
    c2 > g11/(g12^2 - g11 g22). Requires det G < 0; the degenerate case
    g11 = g22 = 0 returns (0, 0), i.e. no guaranteed box.
    """
    gap = p.g12**2 - p.g11 * p.g22
    if gap <= 0:
        raise RegimeError(
            "D(c) > 0 for all positive c when det G >= 0; no concavity window exists"
        )
    return (p.g22 / gap, p.g11 / gap)


@dataclass(frozen=True)
class EnergyBreakdown:
    """Quadrature of the energy functional, split by physical origin."""

    entropy: float
    steric: float
    electrostatic: float
    gradient: float

    @property
    def total(self) -> float:
        return self.entropy + self.steric + self.electrostatic + self.gradient


def free_energy(profile: Profile, p: ModelParams) -> EnergyBreakdown:
    """Evaluate the functional on a sampled profile.

    The field term uses profile.E when present, otherwise the numerical
    gradient of phi. The gradient penalty enters only when sigma > 0.
    """
    grid = profile.grid
    ent = _fd.trapz(
        xlogy(profile.c1, profile.c1 / p.cbar1)
        - profile.c1
        + xlogy(profile.c2, profile.c2 / p.cbar2)
        - profile.c2,
        grid,
    )
    steric = _fd.trapz(
        0.5
        * (
            p.g11 * profile.c1**2
            + 2.0 * p.g12 * profile.c1 * profile.c2
            + p.g22 * profile.c2**2
        ),
        grid,
    )
    if profile.E is not None:
        field = profile.E
    elif profile.phi is not None:
        field = _fd.gradient(profile.phi, grid)
    else:
        raise ParameterError("free_energy needs E or phi on the profile")
    elec = _fd.trapz(0.5 * field**2, grid)
    grad = 0.0
    if p.sigma > 0:
        g1 = _fd.gradient(profile.c1, grid)
        g2 = _fd.gradient(profile.c2, grid)
        grad = 0.5 * p.sigma * _fd.trapz(g1**2 + g2**2, grid)
    return EnergyBreakdown(
        entropy=float(ent), steric=float(steric), electrostatic=float(elec), gradient=float(grad)
    )


def segregated_pattern(n_freq: int, cbar: float, grid: Grid) -> Profile:
    """Fully segregated alternating pattern with n_freq periods per unit length.

    The binary z = (1, -1) setting on [-1, 1]: c1 = 2*cbar on the first half
    of each cell of width 1/n_freq, c2 = 2*cbar on the second half, so
    c1 + c2 = 2*cbar everywhere, each species averages cbar, and c1*c2 = 0
    pointwise. phi solves the Poisson equation with zero-Dirichlet ends.
    """
    if n_freq < 1:
        raise ParameterError(f"pattern frequency must be >= 1, got {n_freq}")
    if cbar <= 0:
        raise ParameterError(f"cbar must be positive, got {cbar}")
    if grid.periodic or abs(grid.L - 1.0) > 1e-12:
        raise ParameterError("segregated patterns are defined on the electrode grid [-1, 1]")
    # Position within the unit cell; half-open cells keep c1*c2 = 0 at nodes.
    y = np.mod(grid.x, 1.0 / n_freq) * n_freq
    first_half = y < 0.5 - 1e-14
    c1 = np.where(first_half, 2.0 * cbar, 0.0)
    c2 = 2.0 * cbar - c1
    rho = c1 - c2  # z = (1, -1), rho0 = 0
    phi = _fd.solve_poisson_dirichlet(rho, grid, 0.0, 0.0)
    return Profile(grid=grid, c1=c1, c2=c2, phi=phi)


@dataclass(frozen=True)
class SegregatedComparison:
    """Energy contest between the segregated pattern and the uniform state.

    Uses the convention where the steric integral is int c.G c dx (no 1/2)
    with g11 = g22 = 0, i.e. steric = 2 g12 int c1 c2 dx; entropy and field
    terms are the same as in free_energy.
    """

    entropy_seg: float
    steric_seg: float
    electrostatic_seg: float
    entropy_hom: float
    steric_hom: float
    electrostatic_hom: float

    @property
    def total_seg(self) -> float:
        return self.entropy_seg + self.steric_seg + self.electrostatic_seg

    @property
    def total_hom(self) -> float:
        return self.entropy_hom + self.steric_hom + self.electrostatic_hom


def segregated_comparison(
    n_freq: int, cbar: float, g12: float, n_nodes: int = 2001
) -> SegregatedComparison:
    """Quadrature both sides of the segregation energy contest on [-1, 1]."""
    from .model import DomainSpec, make_grid

    grid = make_grid(DomainSpec(L=1.0), n_nodes)
    prof = segregated_pattern(n_freq, cbar, grid)
    ent_seg = _fd.trapz(
        xlogy(prof.c1, prof.c1 / cbar) - prof.c1 + xlogy(prof.c2, prof.c2 / cbar) - prof.c2,
        grid,
    )
    steric_seg = _fd.trapz(2.0 * g12 * prof.c1 * prof.c2, grid)
    e_field = _fd.gradient(prof.phi, grid)
    elec_seg = _fd.trapz(0.5 * e_field**2, grid)

    # Uniform state at the same average composition: c1 = c2 = cbar, phi = 0.
    length = 2.0
    ent_hom = 2.0 * cbar * (np.log(1.0) - 1.0) * length  # = -4 cbar
    steric_hom = 2.0 * g12 * cbar * cbar * length
    return SegregatedComparison(
        entropy_seg=float(ent_seg),
        steric_seg=float(steric_seg),
        electrostatic_seg=float(elec_seg),
        entropy_hom=float(ent_hom),
        steric_hom=float(steric_hom),
        electrostatic_hom=0.0,
    )
