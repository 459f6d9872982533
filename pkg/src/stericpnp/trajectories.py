"""Stationary profiles via phase-plane analysis.

Zero-flux stationary states carry constant chemical potentials mu_i =
log c_i + (G c)_i + z_i phi together with the Poisson equation.
Differentiating the constancy in x turns stationarity into an ODE system
in space. Writing E = phi_x and a1 = 1/c1 + g11, a2 = 1/c2 + g22,
D = a1 a2 - g12^2 (the Hessian determinant of the local free energy):

    c1_x  = -(z1 a2 - z2 g12) E / D,
    c2_x  = -(z2 a1 - z1 g12) E / D,
    E_x   = -(z1 (c1 - cbar1) + z2 (c2 - cbar2)),
    phi_x = E.

Dividing the concentration equations eliminates x and E entirely:

    dc1/dc2 = (z1 a2 - z2 g12) / (z2 a1 - z1 g12),

which is strictly negative for admissible valences (z1 > 0 > z2), so
orbits in the (c2, c1) plane are monotone decreasing graphs. Because the
line z . (c - cbar) = 0 has positive slope, each orbit meets it exactly
once; E is extremal there. Orbits are classified by how they sit relative
to the degenerate curve D = 0:

  type I   -- the orbit never meets D = 0;
  type II  -- it crosses D = 0 but the field extremum happens at D > 0;
  type III -- D < 0 at the field extremum, so the extremum lies inside
              the concavity window and the orbit crosses D = 0 at least
              twice.

Bounded periodic profiles are assembled from two half-excursions along
the orbit through (cbar1, cbar2): one to each side of the bulk point,
with the turning-point amplitudes matched so the field peak built up on
either side agrees. Both halves must stay inside the concavity region;
outside it the spatial flow runs away from the bulk point instead of
oscillating around it.

Solutions that reach D = 0 with E != 0 suffer gradient blow-up. The
exceptional solutions that pass through the degenerate curve do so at
points where E vanishes simultaneously, with the finite limit

    (E / D)^2 -> f(c*) = -[z . (c* - cbar)] c1^2 c2^2 / W(c*),
    W = [z1 (1 + c2 g22) - z2 c2 g12] (1 + g22 c2)
      + [z2 (1 + c1 g11) - z1 c1 g12] (1 + g11 c1),

valid where f > 0. `cross_d_zero` builds that regularized solution from a
short Taylor step and verifies the limit along the way.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .energy import hessian_det
from .errors import NumericsError, ParameterError, RegimeError
from .model import DomainSpec, ModelParams, Profile, make_grid

__all__ = [
    "trajectory_slope",
    "slope_bounds",
    "phi_of_c",
    "TrajectoryResult",
    "compute_trajectory",
    "classify_trajectory",
    "FieldSolution",
    "integrate_field_ivp",
    "PeriodicSolution",
    "build_periodic",
    "stationary_residual_fd",
    "crossing_f",
    "d_zero_c1",
    "CrossingSolution",
    "cross_d_zero",
    "ExtractedBvp",
    "extract_bvp",
]


# ---------------------------------------------------------------------------
# orbit geometry


def _brackets(c1, c2, p: ModelParams):
    """Coefficients br_i in c_i,x = -br_i E / D."""
    a1 = 1.0 / c1 + p.g11
    a2 = 1.0 / c2 + p.g22
    br1 = p.z1 * a2 - p.z2 * p.g12
    br2 = p.z2 * a1 - p.z1 * p.g12
    return br1, br2


def trajectory_slope(c1, c2, p: ModelParams):
    """dc1/dc2 along an orbit; finite and negative for c1, c2 > 0."""
    br1, br2 = _brackets(c1, c2, p)
    return br1 / br2


def slope_bounds(c1_0: float, c2_0: float, p: ModelParams) -> tuple[float, float]:
    """Exponential envelope rates for the orbit branch with c2 >= c2_0.

    Returns (m, M), both negative, with

        c1_0 exp(m (c2 - c2_0)) <= c1(c2) <= c1_0 exp(M (c2 - c2_0)).

    They bound d(log c1)/dc2 = P(c2)/N(c1) using that P = z1 a2 - z2 g12
    decreases in c2 toward z1 g22 - z2 g12 and N = z2 (1 + g11 c1)
    - z1 g12 c1 is negative, decreasing in c1, with N(0) = z2.
    """
    if c1_0 <= 0 or c2_0 <= 0:
        raise ParameterError("envelope rates need a positive starting point")
    m = (p.z1 / p.z2) * (1.0 / c2_0 + p.g22) - p.g12
    M = (p.z1 * p.g22 - p.z2 * p.g12) / (
        p.z2 * (1.0 + p.g11 * c1_0) - p.z1 * p.g12 * c1_0
    )
    return m, M


def phi_of_c(c1, c2, p: ModelParams, species: int = 1):
    """Potential from the conserved chemical potential, bulk gauged to 0.

    Along any stationary solution mu_i is the bulk value, which pins phi
    algebraically to the concentrations. Both species give the same
    answer on exact solutions; the redundancy is a useful consistency
    check on numerics.
    """
    if species == 1:
        return (
            np.log(p.cbar1 / np.asarray(c1))
            + p.g11 * (p.cbar1 - c1)
            + p.g12 * (p.cbar2 - c2)
        ) / p.z1
    if species == 2:
        return (
            np.log(p.cbar2 / np.asarray(c2))
            + p.g22 * (p.cbar2 - c2)
            + p.g12 * (p.cbar1 - c1)
        ) / p.z2
    raise ParameterError(f"species must be 1 or 2, got {species}")


def _neutral_deviation(c1, c2, p: ModelParams):
    return p.z1 * (c1 - p.cbar1) + p.z2 * (c2 - p.cbar2)


def _event(fn: Callable, terminal: bool, direction: float = 0.0) -> Callable:
    fn.terminal = terminal
    fn.direction = direction
    return fn


# ---------------------------------------------------------------------------
# orbits c1(c2)


@dataclass(eq=False)
class TrajectoryResult:
    """One orbit of the reduced phase plane, sampled along c2."""

    p: ModelParams
    c2: np.ndarray
    c1: np.ndarray
    neutral_points: np.ndarray  # (m, 2) rows (c1, c2) where z.(c - cbar) = 0
    d_zero_points: np.ndarray  # (k, 2) rows (c1, c2) on the degenerate curve
    d_at_neutral: float  # Hessian determinant at the field extremum (nan if none)
    start: tuple[float, float]  # seed (c1_0, c2_0)
    c2_span: tuple[float, float]  # realized span after terminal cutoffs

    @property
    def d_values(self) -> np.ndarray:
        return hessian_det(self.c1, self.c2, self.p)


def compute_trajectory(
    p: ModelParams,
    c1_0: float,
    c2_0: float,
    c2_span: tuple[float, float] = (1e-6, 1e6),
    rtol: float = 1e-10,
    atol: float = 1e-12,
    samples_per_leg: int = 800,
) -> TrajectoryResult:
    """Integrate the orbit through (c1_0, c2_0) across c2_span.

    The integration runs both directions from the seed and stops early if
    c1 leaves [1e-12, 1e12]. Crossings of the neutral line and of the
    degenerate curve are located by the integrator's event refinement
    (sign-change bracketing plus local root polish).
    """
    if c1_0 <= 0 or c2_0 <= 0:
        raise ParameterError("orbit seed must have positive concentrations")
    lo, hi = c2_span
    if not (0 < lo < c2_0 < hi):
        raise ParameterError(
            f"c2_span {c2_span} must straddle the seed ordinate {c2_0}"
        )

    def rhs(c2, y):
        return [trajectory_slope(y[0], c2, p)]

    ev_neutral = _event(lambda c2, y: _neutral_deviation(y[0], c2, p), False)
    ev_dzero = _event(lambda c2, y: hessian_det(y[0], c2, p), False)
    ev_small = _event(lambda c2, y: y[0] - 1e-12, True)
    ev_large = _event(lambda c2, y: y[0] - 1e12, True)
    events = [ev_neutral, ev_dzero, ev_small, ev_large]

    legs = []
    for target in (hi, lo):
        sol = solve_ivp(
            rhs,
            (c2_0, target),
            [c1_0],
            method="RK45",
            rtol=rtol,
            atol=atol,
            dense_output=True,
            events=events,
        )
        if sol.status == -1:
            raise NumericsError(f"orbit integration failed: {sol.message}")
        legs.append(sol)

    up, down = legs
    pieces_c2 = []
    pieces_c1 = []
    for sol, ascending in ((down, False), (up, True)):
        t0, t1 = sol.t[0], sol.t[-1]
        a, b = (min(t0, t1), max(t0, t1))
        ts = np.geomspace(a, b, samples_per_leg)
        cs = sol.sol(ts)[0]
        if not ascending:
            pass  # geomspace already ascending
        pieces_c2.append(ts)
        pieces_c1.append(cs)
    c2_all = np.concatenate([pieces_c2[0][:-1], pieces_c2[1]])
    c1_all = np.concatenate([pieces_c1[0][:-1], pieces_c1[1]])

    def gather(idx):
        pts = []
        for sol in legs:
            for t in sol.t_events[idx]:
                pts.append((float(sol.sol(t)[0]), float(t)))
        pts.sort(key=lambda q: q[1])
        return np.array(pts).reshape(-1, 2)

    neutral = gather(0)
    dzero = gather(1)
    d_at_neutral = (
        float(hessian_det(neutral[0, 0], neutral[0, 1], p))
        if neutral.shape[0]
        else float("nan")
    )
    return TrajectoryResult(
        p=p,
        c2=c2_all,
        c1=c1_all,
        neutral_points=neutral,
        d_zero_points=dzero,
        d_at_neutral=d_at_neutral,
        start=(c1_0, c2_0),
        c2_span=(float(min(down.t[-1], up.t[0])), float(max(up.t[-1], down.t[0]))),
    )


def classify_trajectory(res: TrajectoryResult) -> str:
    """Orbit type: "I", "II" or "III" (see module docstring)."""
    if res.d_zero_points.shape[0] == 0:
        return "I"
    if res.neutral_points.shape[0] == 0 or not np.isfinite(res.d_at_neutral):
        raise NumericsError(
            "orbit never met the neutral line within the integrated span; "
            "widen c2_span before classifying"
        )
    if res.d_at_neutral < 0:
        return "III"
    return "II"


# ---------------------------------------------------------------------------
# spatial flow


@dataclass(eq=False)
class FieldSolution:
    """Dense solution of the spatial system, state (c1, c2, E, phi)."""

    p: ModelParams
    sol: object  # scipy dense-output interpolant
    x_start: float
    x_end: float
    status: str  # "span" | "neutral" | "degenerate"
    blow_up: bool  # reached D ~ 0 while |E| stayed away from 0
    symmetric: bool  # launched from a turning point (E = 0)

    def at(self, x):
        """Evaluate (c1, c2, E, phi) at x; rows are the state components.

        Solutions launched from a turning point extend evenly in the
        concentrations and the potential and oddly in E, so queries on
        the un-integrated side of the start are answered by reflection.
        """
        x = np.atleast_1d(np.asarray(x, dtype=float))
        lo, hi = sorted((self.x_start, self.x_end))
        forward = self.x_end >= self.x_start
        xq = x.copy()
        sign = np.ones_like(x)
        if self.symmetric:
            if forward:
                mask = x < self.x_start
            else:
                mask = x > self.x_start
            xq[mask] = 2.0 * self.x_start - x[mask]
            sign[mask] = -1.0
        span = hi - lo
        if np.any(xq < lo - 1e-12 * span) or np.any(xq > hi + 1e-12 * span):
            raise ParameterError("query outside the computed span")
        out = self.sol(np.clip(xq, lo, hi))
        out[2] *= sign
        return out


def _field_rhs(p: ModelParams):
    z1, z2 = p.z1, p.z2

    def rhs(x, y):
        c1, c2, E, _phi = y
        br1, br2 = _brackets(c1, c2, p)
        D = hessian_det(c1, c2, p)
        r = E / D
        return [-br1 * r, -br2 * r, -_neutral_deviation(c1, c2, p), E]

    return rhs


def integrate_field_ivp(
    p: ModelParams,
    c0: tuple[float, float],
    E0: float = 0.0,
    phi0: float | None = None,
    x_span: tuple[float, float] = (0.0, 50.0),
    stop_at_neutral: bool = False,
    d_guard: float = 1e-8,
    rtol: float = 1e-10,
    atol: float = 1e-12,
) -> FieldSolution:
    """Integrate the spatial system from (c0, E0, phi0) across x_span.

    The run always terminates when the orbit comes within d_guard of the
    degenerate curve (the flow is singular there); the result is flagged
    blow_up when the field was not simultaneously small, since that is
    the gradient blow-up scenario rather than a regular crossing. With
    stop_at_neutral the run also stops where z . (c - cbar) changes
    sign, which is where |E| peaks.
    """
    c1_0, c2_0 = c0
    if c1_0 <= 0 or c2_0 <= 0:
        raise ParameterError("initial concentrations must be positive")
    if phi0 is None:
        phi0 = float(phi_of_c(c1_0, c2_0, p))
    ev_neutral = _event(
        lambda x, y: _neutral_deviation(y[0], y[1], p), stop_at_neutral
    )
    ev_shell = _event(
        lambda x, y: hessian_det(y[0], y[1], p) ** 2 - d_guard**2, True
    )
    ev_positive = _event(lambda x, y: min(y[0], y[1]) - 1e-12, True)
    sol = solve_ivp(
        _field_rhs(p),
        x_span,
        [c1_0, c2_0, E0, phi0],
        method="RK45",
        rtol=rtol,
        atol=atol,
        dense_output=True,
        events=[ev_neutral, ev_shell, ev_positive],
    )
    if sol.status == -1:
        raise NumericsError(f"spatial integration failed: {sol.message}")
    status = "span"
    blow_up = False
    if sol.t_events[1].size:
        status = "degenerate"
        E_here = sol.y_events[1][0][2]
        blow_up = abs(E_here) > 1e-8
    elif stop_at_neutral and sol.t_events[0].size:
        status = "neutral"
    return FieldSolution(
        p=p,
        sol=sol.sol,
        x_start=float(x_span[0]),
        x_end=float(sol.t[-1]),
        status=status,
        blow_up=blow_up,
        symmetric=(E0 == 0.0),
    )


# ---------------------------------------------------------------------------
# periodic profiles


@dataclass(eq=False)
class PeriodicSolution:
    """One period of a bounded stationary profile.

    The stored halves run from each turning point to the bulk crossing;
    evaluate() unfolds them using the reversibility of the spatial flow
    (concentrations and potential even, field odd about every turning
    point). x = 0 is the turning point with c2 above the bulk value.
    """

    p: ModelParams
    period: float
    x_a: float
    x_b: float
    amp_a: float
    amp_b: float
    e_peak: float
    turning_a: tuple[float, float]
    turning_b: tuple[float, float]
    _sol_a: object = field(repr=False)
    _sol_b: object = field(repr=False)

    def evaluate(self, x):
        """Sample (c1, c2, E, phi) at arbitrary x, periodically extended."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        T = self.period
        half = 0.5 * T
        xi = np.mod(x, T)
        sign = np.where(xi > half, -1.0, 1.0)
        xi = np.where(xi > half, T - xi, xi)
        out = np.empty((4, xi.size))
        in_a = xi <= self.x_a
        if np.any(in_a):
            out[:, in_a] = self._sol_a(xi[in_a])
        if np.any(~in_a):
            zeta = np.clip(self.x_b - (xi[~in_a] - self.x_a), 0.0, self.x_b)
            vals = self._sol_b(zeta)
            vals[2] *= -1.0
            out[:, ~in_a] = vals
        out[2] *= sign
        return out

    def sample(self, n_per_period: int = 1024, periods: int = 1):
        """Uniform samples over an integer number of periods.

        Returns (x, c1, c2, E, phi); the grid excludes the right endpoint
        so the arrays tile periodically without duplication.
        """
        n = n_per_period * periods
        x = np.linspace(0.0, periods * self.period, n, endpoint=False)
        c1, c2, E, phi = self.evaluate(x)
        return x, c1, c2, E, phi

    def mean_concentrations(self, n: int = 4096) -> tuple[float, float]:
        _, c1, c2, _, _ = self.sample(n_per_period=n)
        return float(c1.mean()), float(c2.mean())


def _orbit_through_bulk(p: ModelParams, reach: float, rtol: float, atol: float):
    """Dense orbit c1(c2) through the bulk point over [cbar2 - reach, cbar2 + reach]."""
    if reach >= p.cbar2:
        raise ParameterError(
            f"amplitude {reach} must stay below cbar2 = {p.cbar2} to keep c2 positive"
        )

    def rhs(c2, y):
        return [trajectory_slope(y[0], c2, p)]

    sols = {}
    for key, target in (("up", p.cbar2 + reach), ("down", p.cbar2 - reach)):
        sol = solve_ivp(
            rhs,
            (p.cbar2, target),
            [p.cbar1],
            method="RK45",
            rtol=rtol,
            atol=atol,
            dense_output=True,
        )
        if sol.status != 0:
            raise NumericsError(f"bulk orbit integration failed: {sol.message}")
        sols[key] = sol.sol
    up, down = sols["up"], sols["down"]

    def gamma(c2: float) -> float:
        s = up if c2 >= p.cbar2 else down
        return float(s(c2)[0])

    return gamma


def build_periodic(
    p: ModelParams,
    amplitude: float,
    x_max: float = 100.0,
    match_tol: float = 1e-10,
    rtol: float = 1e-12,
    atol: float = 1e-14,
) -> PeriodicSolution:
    """Construct a periodic stationary profile around the bulk point.

    amplitude sets the c2 half-excursion of the wider side; the other
    side's turning point is matched by a bracketed root solve so the
    field peak reached at the bulk crossing agrees from both directions
    to match_tol. Requires the orbit to stay inside the concavity region
    between the two turning points, which is where closed excursions
    around the bulk point exist.
    """
    if amplitude <= 0:
        raise ParameterError("amplitude must be positive")
    gamma = _orbit_through_bulk(p, amplitude, rtol, atol)

    def half(side: int, amp: float):
        """Integrate from the turning point on one side to the bulk crossing."""
        c2_0 = p.cbar2 + side * amp
        c1_0 = gamma(c2_0)
        fs = integrate_field_ivp(
            p,
            (c1_0, c2_0),
            E0=0.0,
            x_span=(0.0, x_max),
            stop_at_neutral=True,
            rtol=rtol,
            atol=atol,
        )
        if fs.status == "degenerate":
            raise NumericsError(
                "orbit left the concavity region; no periodic profile at this amplitude"
            )
        if fs.status != "neutral":
            raise NumericsError(
                f"no bulk crossing within x_max = {x_max}; increase x_max"
            )
        x_len = fs.x_end
        peak = float(abs(fs.at(x_len)[2, 0]))
        return x_len, peak, fs

    x_a, peak_a, fs_a = half(+1, amplitude)
    x_b, peak_b, fs_b = half(-1, amplitude)
    amp_a = amp_b = amplitude

    if abs(peak_a - peak_b) > match_tol:
        # Shrink the side that builds the larger peak until they agree.
        side, target = (+1, peak_b) if peak_a > peak_b else (-1, peak_a)

        def mismatch(amp: float) -> float:
            return half(side, amp)[1] - target

        lo = 1e-12 * amplitude
        a_match = brentq(
            mismatch, lo, amplitude, xtol=1e-15, rtol=4 * np.finfo(float).eps
        )
        if side > 0:
            amp_a = a_match
            x_a, peak_a, fs_a = half(+1, amp_a)
        else:
            amp_b = a_match
            x_b, peak_b, fs_b = half(-1, amp_b)
        if abs(peak_a - peak_b) > match_tol:
            raise NumericsError(
                f"field peaks differ by {abs(peak_a - peak_b):.3e} after matching; "
                "tighten integrator tolerances"
            )

    return PeriodicSolution(
        p=p,
        period=2.0 * (x_a + x_b),
        x_a=x_a,
        x_b=x_b,
        amp_a=amp_a,
        amp_b=amp_b,
        e_peak=0.5 * (peak_a + peak_b),
        turning_a=(gamma(p.cbar2 + amp_a), p.cbar2 + amp_a),
        turning_b=(gamma(p.cbar2 - amp_b), p.cbar2 - amp_b),
        _sol_a=fs_a.sol,
        _sol_b=fs_b.sol,
    )


def _fd4_first(arr: np.ndarray, h: float, periodic: bool) -> np.ndarray:
    """Fourth-order centered first derivative."""

    def shift(k):
        if periodic:
            return np.roll(arr, -k)
        return arr[2 + k : arr.size - 2 + k]

    return (shift(-2) - 8.0 * shift(-1) + 8.0 * shift(1) - shift(2)) / (12.0 * h)


def _fd4_second(arr: np.ndarray, h: float, periodic: bool) -> np.ndarray:
    def shift(k):
        if periodic:
            return np.roll(arr, -k)
        return arr[2 + k : arr.size - 2 + k]

    return (
        -shift(-2) + 16.0 * shift(-1) - 30.0 * shift(0) + 16.0 * shift(1) - shift(2)
    ) / (12.0 * h * h)


def stationary_residual_fd(
    x: np.ndarray,
    c1: np.ndarray,
    c2: np.ndarray,
    E: np.ndarray,
    phi: np.ndarray,
    p: ModelParams,
    periodic: bool = True,
) -> dict[str, float]:
    """Sup-norm residuals of the stationary system on uniform samples.

    Derivatives are formed with fourth-order centered differences; with
    periodic=True the samples must tile an integer number of periods
    (right endpoint excluded). Keys: "c1", "c2", "field" for the three
    flow equations, "potential_gradient" for phi_x = E, and "poisson"
    for phi_xx + z . c + rho0 = 0.
    """
    x = np.asarray(x, dtype=float)
    h = x[1] - x[0]
    if not np.allclose(np.diff(x), h, rtol=1e-9, atol=1e-12 * abs(h)):
        raise ParameterError("residual check needs a uniform sample grid")
    br1, br2 = _brackets(c1, c2, p)
    D = hessian_det(c1, c2, p)
    r = E / D
    rhs = {
        "c1": -br1 * r,
        "c2": -br2 * r,
        "field": -_neutral_deviation(c1, c2, p) - (p.rho0 + p.z1 * p.cbar1 + p.z2 * p.cbar2),
        "potential_gradient": E,
    }

    def trim(a):
        return a if periodic else a[2:-2]

    out = {}
    for key, arr in (("c1", c1), ("c2", c2), ("field", E), ("potential_gradient", phi)):
        out[key] = float(np.max(np.abs(_fd4_first(arr, h, periodic) - trim(rhs[key]))))
    poisson = _fd4_second(phi, h, periodic) + trim(p.z1 * c1 + p.z2 * c2 + p.rho0)
    out["poisson"] = float(np.max(np.abs(poisson)))
    return out


# ---------------------------------------------------------------------------
# regular crossings of the degenerate curve


def crossing_f(c1: float, c2: float, p: ModelParams) -> float:
    """Limit of (E/D)^2 for a regular crossing at (c1, c2) on D = 0."""
    num = -_neutral_deviation(c1, c2, p) * c1 * c1 * c2 * c2
    den = (p.z1 * (1.0 + c2 * p.g22) - p.z2 * c2 * p.g12) * (1.0 + p.g22 * c2) + (
        p.z2 * (1.0 + c1 * p.g11) - p.z1 * c1 * p.g12
    ) * (1.0 + p.g11 * c1)
    return num / den


def d_zero_c1(c2: float, p: ModelParams) -> float:
    """The c1 ordinate of the degenerate curve D = 0 at a given c2."""
    a2 = 1.0 / c2 + p.g22
    need = p.g12 * p.g12 / a2
    if need <= p.g11:
        raise RegimeError(
            f"degenerate curve does not reach c2 = {c2} for these interactions"
        )
    return 1.0 / (need - p.g11)


@dataclass(eq=False)
class CrossingSolution:
    """Regularized solution through a point of the degenerate curve.

    x = 0 sits on D = 0 with E = 0; the solution continues smoothly to
    both sides with c_i,x(0) = -br_i sqrt(f). ratio_x / ratio record
    E/D sampled on approach to 0 so the limit sqrt(f) can be checked.
    """

    p: ModelParams
    c_star: tuple[float, float]
    f_value: float
    sqrt_f: float
    branch: int
    x: np.ndarray
    c1: np.ndarray
    c2: np.ndarray
    E: np.ndarray
    phi: np.ndarray
    ratio_x: np.ndarray
    ratio: np.ndarray


def cross_d_zero(
    p: ModelParams,
    c_star: tuple[float, float],
    x_max: float = 0.5,
    h: float = 1e-6,
    branch: int = 1,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    n_side: int = 400,
) -> CrossingSolution:
    """Regularized solution through c_star on the degenerate curve.

    The point must satisfy D(c_star) = 0 (checked to 1e-10 relative) and
    f(c_star) > 0. A first-order Taylor step of size h seeds the regular
    flow on each side; branch = +1 or -1 picks the sign of sqrt(f) used
    for the concentration slopes at the crossing.
    """
    c1s, c2s = c_star
    a1 = 1.0 / c1s + p.g11
    a2 = 1.0 / c2s + p.g22
    D0 = a1 * a2 - p.g12 * p.g12
    if abs(D0) > 1e-10 * (a1 * a2 + p.g12 * p.g12):
        raise ParameterError(
            f"point {c_star} is not on the degenerate curve (D = {D0:.3e})"
        )
    if branch not in (1, -1):
        raise ParameterError("branch must be +1 or -1")
    f = crossing_f(c1s, c2s, p)
    if f <= 0:
        raise RegimeError(
            f"no regular crossing at {c_star}: the limit value f = {f:.3e} is not positive"
        )
    sq = branch * float(np.sqrt(f))
    br1, br2 = _brackets(c1s, c2s, p)
    c1_x0 = -br1 * sq
    c2_x0 = -br2 * sq
    E_x0 = -_neutral_deviation(c1s, c2s, p)
    phi_star = float(phi_of_c(c1s, c2s, p))

    sides = {}
    for s in (+1, -1):
        x0 = s * h
        c1_seed = c1s + x0 * c1_x0
        c2_seed = c2s + x0 * c2_x0
        E_seed = x0 * E_x0
        phi_seed = float(phi_of_c(c1_seed, c2_seed, p))
        fs = integrate_field_ivp(
            p,
            (c1_seed, c2_seed),
            E0=E_seed,
            phi0=phi_seed,
            x_span=(x0, s * x_max),
            rtol=rtol,
            atol=atol,
            d_guard=1e-13,
        )
        sides[s] = fs

    def side_samples(s):
        fs = sides[s]
        xs = s * np.geomspace(h, abs(fs.x_end), n_side)
        return xs, fs.at(xs)

    x_neg, y_neg = side_samples(-1)
    x_pos, y_pos = side_samples(+1)
    x_all = np.concatenate([x_neg[::-1], [0.0], x_pos])
    state0 = np.array([[c1s], [c2s], [0.0], [phi_star]])
    y_all = np.concatenate([y_neg[:, ::-1], state0, y_pos], axis=1)

    ratio_x = np.geomspace(h, min(x_max, 1e-2), 12)
    ry = sides[+1].at(ratio_x)
    ratio = ry[2] / hessian_det(ry[0], ry[1], p)

    return CrossingSolution(
        p=p,
        c_star=(float(c1s), float(c2s)),
        f_value=float(f),
        sqrt_f=sq,
        branch=branch,
        x=x_all,
        c1=y_all[0],
        c2=y_all[1],
        E=y_all[2],
        phi=y_all[3],
        ratio_x=ratio_x,
        ratio=ratio,
    )


# ---------------------------------------------------------------------------
# packaging a finite window as boundary-value data


@dataclass(frozen=True)
class ExtractedBvp:
    """A finite window of a stationary solution, ready for grid solvers."""

    profile: Profile
    domain: DomainSpec
    cbar1: float
    cbar2: float


def extract_bvp(
    source,
    x_left: float,
    x_right: float,
    n: int,
    p: ModelParams,
) -> ExtractedBvp:
    """Window [x_left, x_right] of a solution as a boundary-value profile.

    source must expose evaluate(x) or at(x) returning rows (c1, c2, E,
    phi). The window is recentered on [-L, L]; the realized means over
    the window (generally different from the nominal bulk values) are
    reported alongside.
    """
    if x_right <= x_left:
        raise ParameterError("window must have positive width")
    pull = getattr(source, "evaluate", None) or getattr(source, "at", None)
    if pull is None:
        raise ParameterError("source exposes neither evaluate(x) nor at(x)")
    L = 0.5 * (x_right - x_left)
    center = 0.5 * (x_left + x_right)
    grid = make_grid(L, n)
    c1, c2, E, phi = pull(grid.x + center)
    domain = DomainSpec(L=L, phi_left=float(phi[0]), phi_right=float(phi[-1]))
    profile = Profile(grid=grid, c1=c1, c2=c2, phi=phi, E=E)
    m1, m2 = profile.mass_means()
    return ExtractedBvp(profile=profile, domain=domain, cbar1=m1, cbar2=m2)
