"""Linear radial solvers for -Delta u -/+ mu u = f on R^3.

All operators are radial convolutions evaluated through the split
representation

    (G * f)(r) = 1/(2r) int_0^inf f(s) s [H(r+s) - H(|r-s|)] ds,   H' = g,

for a kernel G(x) = g(|x|)/(4 pi |x|).  For the three kernels used here
(cos, sin and exp(-k.)) the bracket factorizes into products of functions of
r and s, so each application is a pair of prefix/suffix quadrature sweeps.

The ``*_arr`` functions work on raw sample arrays (first axis = nodes,
optional trailing batch axis) and are what the bifurcation code calls in
its inner loops; the RadialFn-level functions wrap them.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import lfilter

from .radial import RadialFn, RadialGrid, fourier_profile

log = logging.getLogger(__name__)

FIT_WINDOW = (0.6, 0.9)
MIN_PERIODS = 8


def _check_mu(mu: float) -> float:
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    return math.sqrt(mu)


def _expand(x: np.ndarray, like: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape + (1,) * (like.ndim - 1))


def _divide_r(grid: RadialGrid, num: np.ndarray, origin) -> np.ndarray:
    r = grid.nodes
    out = np.empty_like(num)
    if r[0] == 0.0:
        out[1:] = num[1:] / _expand(r[1:], num[1:])
        out[0] = origin
    else:
        out[:] = num / _expand(r, num)
    return out


def _log_truncation(grid: RadialGrid, f: np.ndarray, k: float) -> None:
    if log.isEnabledFor(logging.DEBUG):
        est = float(np.max(np.abs(f[-1])) * grid.r_max / k)
        log.debug("suffix integrals truncated at r_max=%g, tail estimate %.3e", grid.r_max, est)


def psi_arr(grid: RadialGrid, mu: float, f: np.ndarray) -> np.ndarray:
    """Samples of Psi_mu * f, Psi_mu = cos(|x| sqrt(mu)) / (4 pi |x|)."""
    k = _check_mu(mu)
    r = _expand(grid.nodes, f)
    inner = grid.cumulative(np.sin(k * r) * f * r)
    outer = grid.tail(np.cos(k * r) * f * r)
    _log_truncation(grid, f, k)
    num = (np.cos(k * r) * inner + np.sin(k * r) * outer) / k
    return _divide_r(grid, num, outer[0])


def sine_moment(grid: RadialGrid, mu: float, f: np.ndarray) -> np.ndarray:
    """int_0^{r_max} sin(s sqrt(mu)) f(s) s ds (batched)."""
    k = math.sqrt(mu)
    return grid.integrate(np.sin(k * _expand(grid.nodes, f)) * f * _expand(grid.nodes, f))


def psi_tilde_profile(grid: RadialGrid, mu: float) -> np.ndarray:
    """Samples of sin(r sqrt(mu)) / (4 pi r), the smooth Herglotz wave."""
    k = _check_mu(mu)
    r = grid.nodes
    return k / (4 * np.pi) * np.sinc(k * r / np.pi)


def psi_tilde_arr(grid: RadialGrid, mu: float, f: np.ndarray) -> np.ndarray:
    """Samples of tilde-Psi_mu * f: a rank-one map onto the Herglotz wave."""
    k = _check_mu(mu)
    coeff = 4 * np.pi * sine_moment(grid, mu, f) / k       # = 4 pi sqrt(pi/2) fhat(k)
    prof = psi_tilde_profile(grid, mu)
    return np.multiply.outer(prof, coeff) if np.ndim(coeff) else prof * coeff


def resolvent_arr(grid: RadialGrid, mu: float, tau: float, f: np.ndarray) -> np.ndarray:
    """Samples of R_mu^tau f via the direct split representation with phase tau."""
    k = _check_mu(mu)
    if not 0 < tau < np.pi:
        raise ValueError(f"tau must lie in (0, pi), got {tau}")
    r = _expand(grid.nodes, f)
    st = math.sin(tau)
    inner = grid.cumulative(np.sin(k * r) * f * r)
    outer = grid.tail(np.sin(k * r + tau) * f * r)
    _log_truncation(grid, f, k)
    num = (np.sin(k * r + tau) * inner + np.sin(k * r) * outer) / (k * st)
    return _divide_r(grid, num, outer[0] / st)


def _linear_recurrence(decay: np.ndarray, b: np.ndarray, reverse: bool = False) -> np.ndarray:
    """y_0 = 0, y_{i+1} = decay_i y_i + b_i  (or the mirrored sweep)."""
    if reverse:
        return _linear_recurrence(decay[::-1], b[::-1])[::-1]
    n = len(b) + 1
    y = np.zeros((n,) + b.shape[1:])
    if np.ptp(decay) <= 1e-14 * decay.max():
        y[1:] = lfilter([1.0], [1.0, -decay[0]], b, axis=0)
    else:
        for i in range(n - 1):
            y[i + 1] = decay[i] * y[i] + b[i]
    return y


def schrodinger_arr(grid: RadialGrid, mass_sq: float, f: np.ndarray) -> np.ndarray:
    """Samples of exp(-|x| k)/(4 pi |x|) * f with k = sqrt(mass_sq)."""
    if not mass_sq > 0:
        raise ValueError(f"mass_sq must be positive, got {mass_sq}")
    k = math.sqrt(mass_sq)
    r = grid.nodes
    idx, iw = grid._idx, grid._iw
    lo, hi = r[:-1], r[1:]
    s = r[idx]
    decay = np.exp(-k * (hi - lo))
    fs = f * _expand(r, f)
    extra = (1,) * (f.ndim - 1)
    # inner: y(r) = int_0^r e^{-k(r-s)} (1 - e^{-2ks})/2 f s ds, swept outward
    w_in = iw * np.exp(-k * (hi[:, None] - s)) * (-np.expm1(-2 * k * s)) / 2
    b_in = np.sum(w_in.reshape(w_in.shape + extra) * fs[idx], axis=1)
    inner = _linear_recurrence(decay, b_in)
    # outer: z(r) = int_r^inf e^{-k(s-r)} f s ds, swept inward; sinh(kr) e^{-kr} applied after
    w_out = iw * np.exp(-k * (s - lo[:, None]))
    b_out = np.sum(w_out.reshape(w_out.shape + extra) * fs[idx], axis=1)
    outer = _linear_recurrence(decay, b_out, reverse=True)
    _log_truncation(grid, f, k)
    num = (inner + _expand(-np.expm1(-2 * k * r) / 2, outer) * outer) / k
    return _divide_r(grid, num, outer[0])


def convolve_psi(mu: float, f: RadialFn) -> RadialFn:
    """Psi_mu * f; solves -Delta w - mu w = f with cosine-type far field."""
    return RadialFn.from_values(f.grid, psi_arr(f.grid, mu, f.values))


def convolve_psi_tilde(mu: float, f: RadialFn) -> RadialFn:
    """tilde-Psi_mu * f = 4 pi sqrt(pi/2) fhat(sqrt(mu)) tilde-Psi_mu."""
    _check_mu(mu)
    coeff = 4 * np.pi * math.sqrt(np.pi / 2) * fourier_profile(f, math.sqrt(mu))
    return RadialFn.from_values(f.grid, coeff * psi_tilde_profile(f.grid, mu))


def helmholtz_resolve(mu: float, tau: float, f: RadialFn) -> RadialFn:
    """R_mu^tau f: the solution of -Delta u - mu u = f with far-field phase tau."""
    return RadialFn.from_values(f.grid, resolvent_arr(f.grid, mu, tau, f.values))


def schrodinger_resolve(mass_sq: float, f: RadialFn) -> RadialFn:
    """(-Delta + mass_sq)^{-1} f by convolution with the Yukawa kernel."""
    return RadialFn.from_values(f.grid, schrodinger_arr(f.grid, mass_sq, f.values))


@dataclass(frozen=True)
class FarFieldData:
    alpha: float
    beta: float
    c: float
    sigma: float
    fit_residual: float

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "FarFieldData":
        return cls(**json.loads(text))


@lru_cache(maxsize=64)
def _fit_operator(grid: RadialGrid, mu: float, window: tuple[float, float]):
    k = _check_mu(mu)
    lo, hi = window
    periods = (hi - lo) * grid.r_max * k / (2 * np.pi)
    if periods < MIN_PERIODS:
        raise ValueError(
            f"far-field window [{lo}, {hi}]*r_max holds {periods:.2f} periods of "
            f"2pi/sqrt(mu) (< {MIN_PERIODS}); increase r_max"
        )
    r = grid.nodes
    sel = np.flatnonzero((r >= lo * grid.r_max) & (r <= hi * grid.r_max))
    design = np.column_stack([np.sin(k * r[sel]), np.cos(k * r[sel])])
    pinv = np.linalg.pinv(design)
    return sel, design, pinv


def far_field_functionals(grid: RadialGrid, mu: float, window=FIT_WINDOW) -> np.ndarray:
    """Row vectors (2, n) mapping samples u to (alpha(u), beta(u)); linear in u."""
    sel, _, pinv = _fit_operator(grid, float(mu), tuple(window))
    rows = np.zeros((2, grid.n))
    rows[:, sel] = 4 * np.pi * pinv * grid.nodes[sel]
    return rows


def phase_from_coefficients(a: float, b: float) -> tuple[float, float]:
    """Write a sin(x) + b cos(x) = c sin(x + sigma) with sigma in [0, pi)."""
    sigma = math.atan2(b, a)
    c = math.hypot(a, b)
    if sigma < 0:
        sigma += np.pi
        c = -c
    if sigma >= np.pi:
        sigma -= np.pi
        c = -c
    return c, sigma


def far_field(mu: float, u: RadialFn, window=FIT_WINDOW) -> FarFieldData:
    """Least-squares fit r u(r) ~ A sin(r sqrt(mu)) + B cos(r sqrt(mu)) over the window."""
    sel, design, pinv = _fit_operator(u.grid, float(mu), tuple(window))
    y = u.r[sel] * u.values[sel]
    a, b = pinv @ y
    misfit = float(np.max(np.abs(design @ np.array([a, b]) - y))) if len(sel) else 0.0
    c, sigma = phase_from_coefficients(a, b)
    return FarFieldData(4 * np.pi * a, 4 * np.pi * b, c, sigma, misfit)


def phase_distance(a: float, b: float) -> float:
    """Distance between two phases modulo pi."""
    d = (a - b) % np.pi
    return min(d, np.pi - d)
