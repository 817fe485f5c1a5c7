"""Radial ground state of -Delta w + m^2 w = Gamma w^3 and its nondegeneracy."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .radial import RadialFn, RadialGrid

log = logging.getLogger(__name__)

RTOL = 1e-12
FINAL_RTOL = 1e-13
ATOL = 1e-14
GRAFT_LEVEL = 1e-10
NONDEGENERACY_THRESHOLD = 1e-4


class ShootingError(RuntimeError):
    pass


def as_profile(gamma) -> Callable[[np.ndarray], np.ndarray]:
    """Coupling as a function of r; constants are broadcast."""
    if callable(gamma):
        return gamma
    g = float(gamma)
    return lambda r: np.full_like(np.asarray(r, dtype=float), g)


@dataclass(frozen=True, eq=False)
class GroundState:
    w0: RadialFn
    center_value: float
    decay_rate: float
    ode_residual: float
    m: float = 1.0
    gamma0: float = 1.0
    graft_radius: float = math.inf
    _sol: object = field(default=None, repr=False)
    _tail_amp: float = field(default=0.0, repr=False)
    _series: tuple = field(default=(0.0, 0.0), repr=False)

    def evaluate(self, r) -> np.ndarray:
        """w0 at arbitrary radii (integrator dense output, exponential tail beyond the graft)."""
        r = np.asarray(r, dtype=float)
        shape = r.shape
        r = r.ravel()
        out = np.zeros_like(r)
        if self._sol is None:
            return out.reshape(shape)
        inside = r <= self.graft_radius
        if inside.any():
            rr = np.maximum(r[inside], self._sol.t_min)
            b, c = self._series
            near = self.center_value + b * r[inside] ** 2 + c * r[inside] ** 4
            out[inside] = np.where(r[inside] < self._sol.t_min, near, self._sol(rr)[0])
        ro = r[~inside]
        out[~inside] = self._tail_amp * np.exp(-self.m * ro) / ro
        return out.reshape(shape)

    def resample(self, grid: RadialGrid) -> "GroundState":
        """Same state sampled on another grid."""
        w0 = RadialFn.from_values(grid, self.evaluate(grid.nodes))
        return GroundState(w0, self.center_value, self.decay_rate, self.ode_residual, self.m,
                           self.gamma0, self.graft_radius, self._sol, self._tail_amp, self._series)

    @classmethod
    def zero(cls, grid: RadialGrid, m: float) -> "GroundState":
        """The trivial state w0 = 0 (useful as a degenerate input)."""
        return cls(RadialFn.zeros(grid), 0.0, m, 0.0, m, 0.0)

    def summary(self) -> dict:
        return {
            "m": self.m,
            "gamma0": self.gamma0,
            "center_value": self.center_value,
            "decay_rate": self.decay_rate,
            "ode_residual": self.ode_residual,
        }

    def to_files(self, csv_path, json_path) -> None:
        self.w0.to_csv(csv_path)
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2)


def _rhs(m2: float, gamma):
    def f(r, y):
        w, p = y
        return [p, -2.0 / r * p + m2 * w - gamma(r) * w**3]
    return f


def _series_coefficients(a: float, m2: float, g0: float) -> tuple[float, float]:
    # w = a + b r^2 + c r^4 + ... for constant Gamma near the origin
    b = (m2 * a - g0 * a**3) / 6.0
    c = (m2 - 3 * g0 * a * a) * b / 20.0
    return b, c


def _series_start(a: float, m2: float, g0: float, r0: float) -> list[float]:
    b, c = _series_coefficients(a, m2, g0)
    return [a + b * r0**2 + c * r0**4, 2 * b * r0 + 4 * c * r0**3]


def _shoot(a: float, m: float, gamma, r_end: float, dense: bool = False, rtol: float = RTOL):
    m2 = m * m
    r0 = 1e-3 / m
    g0 = float(gamma(np.array(0.0)))

    def crosses(r, y):
        return y[0]
    crosses.terminal = True
    crosses.direction = -1

    def turns(r, y):
        return y[1]
    turns.terminal = True
    turns.direction = 1

    return solve_ivp(
        _rhs(m2, gamma), (r0, r_end), _series_start(a, m2, g0, r0), method="DOP853",
        rtol=rtol, atol=ATOL * max(a, 1.0), events=(crosses, turns), dense_output=dense,
    )


def _overshoots(a: float, m: float, gamma, r_end: float) -> bool:
    sol = _shoot(a, m, gamma, r_end)
    if len(sol.t_events[0]):
        return True
    return False


def shoot_ground_state(m: float, gamma0, grid: RadialGrid, tol: float = 1e-8,
                       a_max: float | None = None) -> GroundState:
    """Positive radial ground state by bisection on the central value.

    Trajectories from w(0) = a, w'(0) = 0 either cross zero (a too large) or
    turn back up (a too small); the ground state is the separatrix.  Beyond the
    radius where Gamma w^2 <= 1e-10 m^2 the profile is replaced by the exact
    linear tail A e^{-mr}/r matched in value.
    """
    if not m > 0:
        raise ValueError(f"mass must be positive, got {m}")
    gamma = as_profile(gamma0)
    g_origin = float(gamma(np.array(0.0)))
    if not callable(gamma0) and not float(gamma0) > 0:
        raise ShootingError("gamma0 must be positive: the linear equation has no positive decaying solution")
    if g_origin <= 0:
        raise ShootingError("Gamma(0) must be positive for a positive ground state")
    if callable(gamma0):
        log.warning("radial Gamma profile: nondegeneracy is only checked numerically")
    scale = m / math.sqrt(g_origin)
    r_end = 60.0 / m
    lo = 1e-6 * scale
    if _overshoots(lo, m, gamma, r_end):
        raise ShootingError("smallest trial amplitude already crosses zero")
    a_max = 1e3 * scale if a_max is None else a_max
    hi = 2.0 * scale
    while not _overshoots(hi, m, gamma, r_end):
        lo = hi
        hi *= 2.0
        if hi > a_max:
            raise ShootingError(f"no bisection bracket found in (0, {a_max}]")
    while hi - lo > 1e-13 * hi:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _overshoots(mid, m, gamma, r_end):
            hi = mid
        else:
            lo = mid
    return ground_state_from_center(m, gamma0, grid, 0.5 * (lo + hi), tol)


def ground_state_from_center(m: float, gamma0, grid: RadialGrid, a: float,
                             tol: float = 1e-8) -> GroundState:
    """Integrate from a known separatrix value a = w(0) and graft the linear tail."""
    gamma = as_profile(gamma0)
    g_origin = float(gamma(np.array(0.0)))
    r_end = 60.0 / m
    sol = _shoot(a, m, gamma, r_end, dense=True, rtol=FINAL_RTOL)
    dense = sol.sol

    # graft radius: first scan point with Gamma w^2 <= level * m^2, away from the departure
    r_stop = sol.t[-1]
    scan = np.linspace(dense.t_min, r_stop, 20001)
    w_scan = dense(scan)[0]
    small = np.flatnonzero(gamma(scan) * w_scan**2 <= GRAFT_LEVEL * m * m)
    if not len(small):
        raise ShootingError("trajectory left the separatrix before the tail became linear")
    r_g = float(scan[small[0]])
    w_g = float(dense(r_g)[0])
    tail_amp = w_g * r_g * math.exp(m * r_g)

    r = grid.nodes
    series = _series_coefficients(a, m * m, g_origin)
    probe = GroundState(RadialFn.zeros(grid), a, 0.0, 0.0, m, 0.0, r_g, dense, tail_amp, series)
    w0 = RadialFn.from_values(grid, probe.evaluate(r))

    # decay rate of log(r w) on the integrated part
    win = np.linspace(0.5 * r_g, r_g, 200)
    slope = np.polyfit(win, np.log(win * dense(win)[0]), 1)[0]

    resid = _integral_residual(dense, m, gamma, dense.t_min, r_g)
    tail_r = r[r > r_g]
    if len(tail_r):
        tail_w = tail_amp * np.exp(-m * tail_r) / tail_r
        resid = max(resid, float(np.max(np.abs(gamma(tail_r) * tail_w**3))))
    gs = GroundState(w0, a, float(-slope), float(resid), float(m),
                     float(g_origin) if callable(gamma0) else float(gamma0), r_g, dense, tail_amp, series)
    if resid > tol:
        raise ShootingError(f"ODE residual {resid:.3e} exceeds tolerance {tol:.1e}; refine the grid")
    return gs


def _integral_residual(dense, m: float, gamma, r_lo: float, r_hi: float, pieces: int = 1000) -> float:
    """Max over subintervals of |p(b) - p(a) - int_a^b (p' from the ODE)| / (b - a)."""
    edges = np.linspace(r_lo, r_hi, pieces + 1)
    xg, wg = np.polynomial.legendre.leggauss(8)
    a, b = edges[:-1], edges[1:]
    mid, half = (a + b) / 2, (b - a) / 2
    pts = mid[:, None] + half[:, None] * xg[None, :]
    w, p = dense(pts.ravel())
    w, p = w.reshape(pts.shape), p.reshape(pts.shape)
    rhs = -2.0 / pts * p + m * m * w - gamma(pts) * w**3
    integral = np.sum(rhs * wg[None, :], axis=1) * half
    pa, pb = dense(a)[1], dense(b)[1]
    return float(np.max(np.abs(pb - pa - integral) / (b - a)))


@dataclass(frozen=True)
class NondegeneracyReport:
    kernel_mismatch: float
    is_nondegenerate: bool
    details: dict

    def to_dict(self) -> dict:
        return {"kernel_mismatch": self.kernel_mismatch, "is_nondegenerate": self.is_nondegenerate,
                "details": self.details}


def check_nondegenerate(gs: GroundState, m: float, gamma0, potential_scale: float = 1.0,
                        matching_level: float = 1e-6) -> NondegeneracyReport:
    """Numerical test that -Delta q + m^2 q = 3 Gamma w0^2 q has no decaying radial solution.

    The regular solution (y = r q, y(0) = 0, y'(0) = 1) is integrated to the
    radius R where the potential drops below ``matching_level * m^2``; there
    y = a e^{mr} + b e^{-mr}, and the growing coefficient a e^{mR} relative to
    max |y| on [0, R] is the kernel mismatch.
    """
    gamma = as_profile(gamma0)
    m2 = m * m

    def potential(r):
        return potential_scale * 3.0 * gamma(r) * gs.evaluate(r) ** 2

    scan = np.linspace(1e-6, 60.0 / m, 60001)
    pot = potential(scan)
    below = np.flatnonzero(pot <= matching_level * m2)
    # the match must sit past the support of the potential, not inside a node of w0
    peak = int(np.argmax(pot))
    below = below[below >= peak]
    if not len(below):
        raise ValueError("tail fit ill-conditioned: potential never becomes negligible")
    R = max(float(scan[below[0]]), 2.0 / m)
    if m * R > 18:
        raise ValueError(f"tail fit ill-conditioned: matching radius {R:.2f} too large for m={m}")

    def rhs(r, y):
        return [y[1], (m2 - potential(np.asarray(r))) * y[0]]

    sol = solve_ivp(rhs, (0.0, R), [0.0, 1.0], method="DOP853", rtol=RTOL, atol=1e-15,
                    dense_output=True)
    y_r, dy_r = sol.y[0, -1], sol.y[1, -1]
    growing = (m * y_r + dy_r) / (2 * m)          # a e^{mR}
    decaying = (m * y_r - dy_r) / (2 * m)         # b e^{-mR}
    ymax = float(np.max(np.abs(sol.sol(np.linspace(0, R, 4001))[0])))
    mismatch = abs(growing) / ymax
    ok = bool(mismatch > NONDEGENERACY_THRESHOLD)
    return NondegeneracyReport(float(mismatch), ok, {
        "matching_radius": R,
        "growing_coefficient": float(growing),
        "decaying_coefficient": float(decaying),
        "max_abs_solution": ymax,
        "potential_scale": potential_scale,
        "threshold": NONDEGENERACY_THRESHOLD,
    })
