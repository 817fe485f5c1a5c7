"""Linearized Helmholtz modes q_k around the ground state and the phase plan."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp

from .helmholtz import far_field, phase_distance, resolvent_arr
from .radial import RadialFn, RadialGrid, norm_xq
from .stationary import GroundState, as_profile

PHASE_TOL = 1e-6
TAU_LOW, TAU_HIGH = np.pi / 4, 3 * np.pi / 4
# the potential 3 Gamma w0^2 is treated as zero once below this fraction of mu
POTENTIAL_CUTOFF = 1e-17
RTOL = 1e-12


class PhaseError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ModePhase:
    k: int
    mu_k: float
    sigma_k: float
    c_k: float
    q_k: RadialFn
    tau_k: float | None = None
    sigma_pruefer: float = math.nan
    fit_residual: float = 0.0
    amplitude_raw: float = math.nan
    ode_residual: float = 0.0

    def to_dict(self) -> dict:
        return {"k": self.k, "mu_k": self.mu_k, "sigma_k": self.sigma_k, "c_k": self.c_k,
                "tau_k": self.tau_k}


def potential_fn(gs: GroundState | None, gamma):
    """r -> 3 Gamma(r) w0(r)^2 (identically zero without a ground state)."""
    g = as_profile(gamma)
    if gs is None:
        return lambda r: np.zeros_like(np.asarray(r, dtype=float))
    return lambda r: 3.0 * g(np.asarray(r, dtype=float)) * gs.evaluate(r) ** 2


def _cutoff_radius(pot, mu: float, r_hi: float) -> float:
    scan = np.linspace(0.0, r_hi, 40001)
    v = np.abs(pot(scan))
    big = np.flatnonzero(v > POTENTIAL_CUTOFF * mu)
    if not len(big):
        return min(1.0, r_hi)
    return float(min(scan[min(big[-1] + 1, len(scan) - 1)], r_hi))


def regular_solution(grid: RadialGrid, mu: float, pot, r_cut: float | None = None):
    """Regular solution of -q'' - (2/r) q' - mu q = V q with q(0) = 1 on the grid.

    With y = r q this is y'' = -(mu + V) y, y(0) = 0, y'(0) = 1; beyond the
    radius where V is negligible y continues as an exact free sinusoid.
    Returns the samples, the free-region coefficients (A, B) of
    y = A sin(kr) + B cos(kr), the cutoff radius and the relative ODE defect.
    """
    k = math.sqrt(mu)
    R = _cutoff_radius(pot, mu, grid.r_max) if r_cut is None else r_cut

    def rhs(r, y):
        return [y[1], -(mu + float(pot(np.asarray(r)))) * y[0]]

    sol = solve_ivp(rhs, (0.0, R), [0.0, 1.0], method="DOP853", rtol=RTOL, atol=1e-14,
                    dense_output=True)
    yR, dyR = sol.y[0, -1], sol.y[1, -1]
    A = yR * math.sin(k * R) + dyR * math.cos(k * R) / k
    B = yR * math.cos(k * R) - dyR * math.sin(k * R) / k
    r = grid.nodes
    y = np.empty_like(r)
    inside = r <= R
    y[inside] = sol.sol(r[inside])[0]
    y[~inside] = A * np.sin(k * r[~inside]) + B * np.cos(k * r[~inside])
    q = np.empty_like(r)
    pos = r > 0
    q[pos] = y[pos] / r[pos]
    q[~pos] = 1.0
    return q, (A, B), R, _ode_defect(sol.sol, mu, pot, R)


def _ode_defect(dense, mu: float, pot, R: float, pieces: int = 2000) -> float:
    """Integral-form defect of y'' = -(mu + V) y over subintervals, relative to max |(mu + V) y|."""
    edges = np.linspace(0.0, R, pieces + 1)
    xg, wg = np.polynomial.legendre.leggauss(8)
    a, b = edges[:-1], edges[1:]
    half = (b - a) / 2
    pts = (a + b)[:, None] / 2 + half[:, None] * xg[None, :]
    y = dense(pts.ravel())[0].reshape(pts.shape)
    f = -(mu + pot(pts)) * y
    integral = np.sum(f * wg[None, :], axis=1) * half
    jump = dense(b)[1] - dense(a)[1] - integral
    return float(np.max(np.abs(jump) / (b - a)) / max(np.max(np.abs(f)), 1e-300))


def pruefer_phase(mu: float, pot, R: float) -> float:
    """Far-field phase from theta' = k + (V/k) sin^2(theta), theta(0) = 0, where r q = rho sin(theta)."""
    k = math.sqrt(mu)

    def rhs(r, th):
        return [k + float(pot(np.asarray(r))) / k * math.sin(th[0]) ** 2]

    sol = solve_ivp(rhs, (0.0, R), [0.0], method="DOP853", rtol=RTOL, atol=1e-13)
    return float((sol.y[0, -1] - k * R) % np.pi)


def compute_mode_phase(k: int, m: float, omega: float, gamma, gs: GroundState | None,
                       grid: RadialGrid, fit_tol: float = 1e-6) -> ModePhase:
    """Regular linearized solution at mode k, its far-field phase sigma_k and amplitude.

    q_k is scaled so its far-field amplitude has modulus one and q_k(0) > 0;
    c_k is then the signed amplitude (+1 or -1) and ``amplitude_raw`` the
    amplitude of the solution with q(0) = 1.
    """
    if k < 1:
        raise ValueError("mode index must be >= 1")
    if not omega > m:
        raise ValueError(f"requires omega > m (got omega={omega}, m={m})")
    mu = omega**2 * k * k - m * m
    pot = potential_fn(gs, gamma)
    q, (A, B), R, defect = regular_solution(grid, mu, pot)
    ff = far_field(mu, RadialFn.from_values(grid, q))
    scale = max(np.max(np.abs(grid.nodes * q)), 1e-300)
    if ff.fit_residual > fit_tol * scale:
        raise PhaseError(f"mode {k}: far-field fit residual {ff.fit_residual:.2e} too large")
    if abs(ff.c) < 1e-10:
        raise PhaseError(f"mode {k}: far-field amplitude {ff.c:.2e} vanishes")
    qn = RadialFn.from_values(grid, q / abs(ff.c))
    sig_p = pruefer_phase(mu, pot, R)
    return ModePhase(k, float(mu), ff.sigma, float(np.sign(ff.c)), qn, None, sig_p,
                     ff.fit_residual / abs(ff.c), float(ff.c), defect)


def convolution_defect(mp: ModePhase, tau: float, pot_grid: np.ndarray) -> float:
    """X_1-relative size of q - R^tau_mu [V q] for the stored regular solution."""
    q = mp.q_k.values
    res = q - resolvent_arr(mp.q_k.grid, mp.mu_k, tau, pot_grid * q)
    return norm_xq(RadialFn.from_values(mp.q_k.grid, res), 1) / norm_xq(mp.q_k, 1)


@dataclass(frozen=True, eq=False)
class PhasePlan:
    s: int
    K: int
    entries: tuple[ModePhase, ...]
    g_case: bool
    defects: dict = field(default_factory=dict)

    def entry(self, k: int) -> ModePhase:
        return self.entries[k - 1]

    def tau(self, k: int) -> float:
        return self.entries[abs(k) - 1].tau_k

    def to_dict(self) -> dict:
        return {"s": self.s, "K": self.K, "g_case": self.g_case,
                "modes": [e.to_dict() for e in self.entries]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def plan_phases(s: int, K: int, phases, phase_tol: float = PHASE_TOL,
                tau_overrides: dict | None = None) -> PhasePlan:
    """tau_s = sigma_s; other modes get pi/4, or 3pi/4 when sigma_k sits at pi/4."""
    phases = sorted(phases, key=lambda p: p.k)
    if [p.k for p in phases[:K]] != list(range(1, K + 1)):
        raise ValueError(f"phases must cover modes 1..{K}")
    if not 1 <= s <= K:
        raise ValueError(f"need 1 <= s <= K, got s={s}, K={K}")
    tau_overrides = tau_overrides or {}
    entries = []
    for p in phases[:K]:
        if p.k == s:
            tau = p.sigma_k
        elif phase_distance(p.sigma_k, TAU_LOW) <= phase_tol:
            tau = TAU_HIGH
        else:
            tau = TAU_LOW
        tau = float(tau_overrides.get(p.k, tau))
        entries.append(replace(p, tau_k=tau))
    g_case = phase_distance(phases[s - 1].sigma_k, 0.0) <= phase_tol
    return PhasePlan(s, K, tuple(entries), bool(g_case))


def nondegeneracy_defects(plan: PhasePlan, pot_grid: np.ndarray) -> dict:
    """Fixed-point defect of the regular solution against the planned tau_k, for k != s."""
    return {p.k: convolution_defect(p, p.tau_k, pot_grid) for p in plan.entries if p.k != plan.s}


def signed_phase(sigma: float) -> float:
    """Representative of sigma mod pi in [-pi/2, pi/2)."""
    return (sigma + np.pi / 2) % np.pi - np.pi / 2


def omega_for_zero_phase(k: int, m: float, gamma, gs: GroundState, grid: RadialGrid,
                         omega_lo: float, omega_hi: float, xtol: float = 1e-13) -> float:
    """Frequency in [omega_lo, omega_hi] at which sigma_k = 0 (the G-map configuration)."""
    from scipy.optimize import brentq

    def f(om):
        return signed_phase(compute_mode_phase(k, m, om, gamma, gs, grid).sigma_k)

    return float(brentq(f, omega_lo, omega_hi, xtol=xtol))
