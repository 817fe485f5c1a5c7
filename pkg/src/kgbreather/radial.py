"""Radial grids, quadrature and radial differential operators on R^3.

Everything in the package represents a radially symmetric function
u(x) = u(|x|) by its samples on a graded grid 0 = r_0 < ... < r_{n-1} = r_max.
Integrals are computed with a piecewise interpolatory rule: each interval
[r_i, r_{i+1}] is integrated exactly for polynomials of degree < STENCIL
through the nearest STENCIL nodes.  The per-interval weights are what the
resolvents use for their prefix-sum sweeps.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

STENCIL = 12
INTERIOR_FRACTION = 0.8
TAIL_FRACTION = 0.1
TAIL_WARN = 1e-8

log = logging.getLogger(__name__)


def _interval_rule(nodes: np.ndarray, p: int = STENCIL) -> tuple[np.ndarray, np.ndarray]:
    """Stencil indices and weights integrating each interval exactly on P_{p-1}."""
    n = len(nodes)
    p = min(p, n)
    i = np.arange(n - 1)
    start = np.clip(i - (p // 2 - 1), 0, n - p)
    idx = start[:, None] + np.arange(p)[None, :]
    a, b = nodes[i], nodes[i + 1]
    h = b - a
    # local coordinate x = (r - a)/h keeps the Vandermonde systems well scaled
    x = (nodes[idx] - a[:, None]) / h[:, None]
    powers = np.arange(p)
    vt = x[:, None, :] ** powers[None, :, None]          # (n-1, p, p): row j is x^j
    moments = 1.0 / (powers + 1.0)                      # int_0^1 x^j dx
    w = np.linalg.solve(vt, np.broadcast_to(moments, (n - 1, p))[..., None])[..., 0]
    return idx, w * h[:, None]


@dataclass(frozen=True, eq=False)
class RadialGrid:
    nodes: np.ndarray
    r_max: float
    weights: np.ndarray
    grading: float = 1.0
    _idx: np.ndarray = field(repr=False, default=None)
    _iw: np.ndarray = field(repr=False, default=None)

    @classmethod
    def from_nodes(cls, nodes, grading: float = 1.0) -> "RadialGrid":
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 1 or len(nodes) < 8:
            raise ValueError("a radial grid needs at least 8 nodes")
        if nodes[0] < 0 or np.any(np.diff(nodes) <= 0):
            raise ValueError("grid nodes must be nonnegative and strictly increasing")
        idx, iw = _interval_rule(nodes)
        weights = np.zeros_like(nodes)
        np.add.at(weights, idx, iw)
        for arr in (nodes, weights, idx, iw):
            arr.setflags(write=False)
        return cls(nodes, float(nodes[-1]), weights, float(grading), idx, iw)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def spacing(self) -> float:
        """Largest node spacing."""
        return float(np.max(np.diff(self.nodes)))

    @property
    def is_uniform(self) -> bool:
        d = np.diff(self.nodes)
        return bool(np.ptp(d) <= 1e-9 * d.mean())

    def integrate(self, g) -> np.ndarray:
        """int_0^{r_max} g(r) dr for samples g (first axis = nodes)."""
        return np.tensordot(self.weights, np.asarray(g), axes=(0, 0))

    def interval_integrals(self, g) -> np.ndarray:
        g = np.asarray(g)
        gi = g[self._idx]                                # (n-1, p, ...)
        w = self._iw.reshape(self._iw.shape + (1,) * (g.ndim - 1))
        return np.sum(w * gi, axis=1)

    def cumulative(self, g) -> np.ndarray:
        """Prefix integrals int_0^{r_i} g dr at every node."""
        parts = self.interval_integrals(g)
        out = np.zeros((self.n,) + parts.shape[1:])
        np.cumsum(parts, axis=0, out=out[1:])
        return out

    def tail(self, g) -> np.ndarray:
        """Suffix integrals int_{r_i}^{r_max} g dr at every node."""
        parts = self.interval_integrals(g)
        out = np.zeros((self.n,) + parts.shape[1:])
        np.cumsum(parts[::-1], axis=0, out=out[-2::-1])
        return out

    def same_as(self, other: "RadialGrid") -> bool:
        return self is other or (self.n == other.n and np.array_equal(self.nodes, other.nodes))


def make_grid(r_max: float, n: int, grading: float = 1.0) -> RadialGrid:
    """Graded grid r_i = r_max (i/(n-1))**grading."""
    if not r_max > 0:
        raise ValueError(f"r_max must be positive, got {r_max}")
    if n < 16:
        raise ValueError(f"need n >= 16 nodes, got {n}")
    if grading < 1:
        raise ValueError(f"grading must be >= 1, got {grading}")
    t = np.arange(n) / (n - 1)
    nodes = r_max * t**grading
    nodes[-1] = r_max
    return RadialGrid.from_nodes(nodes, grading)


@dataclass(frozen=True, eq=False)
class RadialFn:
    """Samples u(r_i) of a radial function; origin_value is the limit u(0+)."""

    grid: RadialGrid
    values: np.ndarray
    origin_value: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} samples, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("RadialFn values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_values(cls, grid: RadialGrid, values) -> "RadialFn":
        values = np.array(values, dtype=float)
        if grid.nodes[0] == 0.0:
            origin = values[0]
        else:
            # quadratic-in-r^2 extrapolation of an even function
            r2 = grid.nodes[:3] ** 2
            origin = float(np.polyval(np.polyfit(r2, values[:3], 2), 0.0))
        return cls(grid, values, float(origin))

    @classmethod
    def from_callable(cls, grid: RadialGrid, fn) -> "RadialFn":
        return cls.from_values(grid, fn(grid.nodes))

    @classmethod
    def zeros(cls, grid: RadialGrid) -> "RadialFn":
        return cls(grid, np.zeros(grid.n), 0.0)

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def _check(self, other: "RadialFn"):
        if not self.grid.same_as(other.grid):
            raise ValueError("radial functions live on different grids")

    def __add__(self, other: "RadialFn") -> "RadialFn":
        self._check(other)
        return RadialFn.from_values(self.grid, self.values + other.values)

    def __sub__(self, other: "RadialFn") -> "RadialFn":
        self._check(other)
        return RadialFn.from_values(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "RadialFn":
        return RadialFn.from_values(self.grid, c * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "RadialFn":
        return self * -1.0

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "value"])
            for r, v in zip(self.grid.nodes, self.values):
                w.writerow([repr(float(r)), repr(float(v))])

    @classmethod
    def from_csv(cls, path, grid: RadialGrid | None = None) -> "RadialFn":
        data = np.loadtxt(Path(path), delimiter=",", skiprows=1, ndmin=2)
        if grid is None:
            grid = RadialGrid.from_nodes(data[:, 0])
        elif not np.array_equal(grid.nodes, data[:, 0]):
            raise ValueError(f"{path}: nodes do not match the supplied grid")
        return cls.from_values(grid, data[:, 1])


def norm_xq(f: RadialFn, q: float) -> float:
    """Grid supremum of (1 + r^2)^{q/2} |f(r)|."""
    if q < 0:
        raise ValueError("weight order must be nonnegative")
    return float(np.max((1.0 + f.r**2) ** (0.5 * q) * np.abs(f.values)))


def tail_weight(f: RadialFn, fraction: float = TAIL_FRACTION) -> float:
    """Share of the moment integral of |f| r^2 carried by the outer ``fraction`` of the domain.

    Quantities defined on all of R^3 are truncated at r_max; a large value
    means the truncation is not negligible for f.
    """
    w = np.abs(f.values) * f.r**2
    total = float(f.grid.integrate(w))
    if total == 0.0:
        return 0.0
    outer = np.where(f.r >= (1 - fraction) * f.grid.r_max, w, 0.0)
    return float(f.grid.integrate(outer)) / total


def fourier_profile(f: RadialFn, rho: float) -> float:
    """Unitary 3-D Fourier transform of a radial function, evaluated at |xi| = rho."""
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    tw = tail_weight(f)
    if tw > TAIL_WARN:
        log.warning("fourier_profile: %.1e of the moment mass lies near r_max; transform is truncated", tw)
    r = f.r
    return float(np.sqrt(2.0 / np.pi) / rho * f.grid.integrate(np.sin(rho * r) * f.values * r))


def _numerov_beta(theta: float, oscillatory: bool) -> float:
    # weight making the Numerov stencil exact on sin/cos (resp. sinh/cosh) of frequency theta/h
    if theta < 1e-2:
        t2 = theta * theta
        return 1 / 12 + t2 / 240 + t2 * t2 / 6048 if oscillatory else 1 / 12 - t2 / 240 + t2 * t2 / 6048
    if oscillatory:
        return 1.0 / (2.0 * (1.0 - np.cos(theta))) - 1.0 / theta**2
    return 1.0 / theta**2 - 1.0 / (2.0 * (np.cosh(theta) - 1.0))


def residual_profile(u: RadialFn, mu_signed: float, f: RadialFn) -> np.ndarray:
    """Pointwise defect of -u'' - (2/r)u' - mu_signed*u - f at every node.

    Works with y = r u, for which the operator is -(y'' + mu y)/r.  On uniform
    grids the stencil is Numerov with its weight fitted to the homogeneous
    solutions (reduces to plain Numerov as mu -> 0); graded grids use
    five-point centered weights on the even extension of u.  The last node carries no stencil
    and is reported as 0.
    """
    u._check(f)
    r = u.r
    y = r * u.values
    g = r * f.values
    mu = float(mu_signed)
    res = np.zeros(u.grid.n)
    if u.grid.is_uniform:
        h = r[1] - r[0]
        beta = _numerov_beta(np.sqrt(abs(mu)) * h, mu > 0)
        ypp = -mu * y - g
        d = (y[2:] - 2 * y[1:-1] + y[:-2]) - h * h * (beta * (ypp[2:] + ypp[:-2]) + (1 - 2 * beta) * ypp[1:-1])
        res[1:-1] = -d / (h * h * r[1:-1])
    else:
        # five-point centered weights on the even extension u(-r) = u(r)
        ext_r = np.concatenate([-r[4:0:-1], r])
        ext_u = np.concatenate([u.values[4:0:-1], u.values])
        i = np.arange(1, u.grid.n - 2) + 4
        idx = i[:, None] + np.arange(-2, 3)[None, :]
        dx = ext_r[idx] - ext_r[i][:, None]
        vt = dx[:, None, :] ** np.arange(5)[None, :, None]
        rhs = np.zeros((len(i), 5, 2))
        rhs[:, 1, 0] = 1.0                               # first derivative
        rhs[:, 2, 1] = 2.0                               # second derivative
        wts = np.linalg.solve(vt, rhs)
        d1 = np.einsum("ij,ij->i", wts[..., 0], ext_u[idx])
        d2 = np.einsum("ij,ij->i", wts[..., 1], ext_u[idx])
        ri = r[1:-2]
        res[1:-2] = -(d2 + 2 * d1 / ri) - mu * u.values[1:-2] - f.values[1:-2]
    if r[0] == 0.0:
        # u even: u = u0 + a r^2/2 + b r^4/24 through the next two nodes; -Delta u(0) = -3a
        h = u.grid.spacing * (1 - 1e-9)
        j1 = int(np.searchsorted(r, h))
        j2 = int(np.searchsorted(r, 2 * h))
        r1, r2 = r[j1], r[j2]
        m = np.array([[r1**2 / 2, r1**4 / 24], [r2**2 / 2, r2**4 / 24]])
        a, _ = np.linalg.solve(m, u.values[[j1, j2]] - u.values[0])
        res[0] = -3.0 * a - mu * u.values[0] - f.values[0]
    return res


def interior_mask(grid: RadialGrid, fraction: float = INTERIOR_FRACTION) -> np.ndarray:
    """Nodes where residuals are meaningful.

    Drops the outer buffer and, on graded grids, the cluster of nodes closer
    to the origin than the coarsest spacing (their stencils are dominated by
    roundoff; the origin limit form covers that region).
    """
    mask = grid.nodes <= fraction * grid.r_max
    mask[-1] = False
    if not grid.is_uniform:
        mask[1:] &= grid.nodes[1:] >= grid.spacing
    return mask


def radial_residual(u: RadialFn, mu_signed: float, f: RadialFn) -> float:
    """Max |-Delta u - mu_signed u - f| over nodes outside the outer 20% buffer."""
    res = residual_profile(u, mu_signed, f)
    return float(np.max(np.abs(res[interior_mask(u.grid)])))
