"""Space-time breathers U(t, r) = u_0 + sum_k 2 cos(omega k t) u_k and their verification."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .bifurcation import BifurcationContext, BranchPoint
from .helmholtz import far_field, phase_distance, resolvent_arr
from .modes import ModeSequence, mode_product
from .radial import RadialFn, interior_mask, norm_xq, residual_profile
from .stationary import GroundState, as_profile

FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    t_nodes: np.ndarray
    r_nodes: np.ndarray
    values: np.ndarray
    omega: float

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "r", "U"])
            for i, t in enumerate(self.t_nodes):
                for j, r in enumerate(self.r_nodes):
                    w.writerow([repr(float(t)), repr(float(r)), repr(float(self.values[i, j]))])


def _cos_weights(K: int, t_count: int) -> np.ndarray:
    """(t_count, K+1) table of 2 cos(2 pi k j/(t_count-1)), weight 1 at k = 0; endpoints identical."""
    j = np.arange(t_count)[:, None]
    k = np.arange(K + 1)[None, :]
    period = t_count - 1
    w = 2 * np.cos(2 * np.pi * ((j * k) % period) / period)
    w[:, 0] = 1.0
    return w


def full_modes(bp: BranchPoint, gs: GroundState) -> ModeSequence:
    """u = w + v: the ground state added to mode 0."""
    u = bp.v.values.copy()
    u[0] += gs.w0.values
    return ModeSequence(bp.v.grid, u)


def assemble_breather(bp: BranchPoint, gs: GroundState, omega: float, t_count: int = 33,
                      r_subsample: int = 1) -> SpaceTimeField:
    """Samples of U over one period [0, 2 pi/omega] (both ends included)."""
    if t_count < 2:
        raise ValueError("need at least two time samples")
    u = full_modes(bp, gs).values[:, ::r_subsample]
    t = np.linspace(0.0, 2 * np.pi / omega, t_count)
    U = _cos_weights(u.shape[0] - 1, t_count) @ u
    return SpaceTimeField(t, bp.v.grid.nodes[::r_subsample], U, float(omega))


def pde_residual_profile(u: ModeSequence, gamma, m: float, omega: float, t_count: int = 33) -> tuple[np.ndarray, np.ndarray]:
    """Space-time defect of U_tt - Delta U + m^2 U - Gamma U^3, and Gamma U^3, on (t, r) samples.

    Time derivatives are exact (cosine series); each mode uses the radial
    residual stencil.  The cubic term is taken with all modes up to 3K, so
    modes K+1..3K contribute their (untruncated) source as defect.
    """
    grid, K = u.grid, u.K
    g = as_profile(gamma)(grid.nodes)
    cube = g * mode_product(u.values, u.values, u.values, K_out=3 * K)
    per_mode = np.zeros_like(cube)
    for k in range(K + 1):
        mu = omega**2 * k * k - m * m
        per_mode[k] = residual_profile(u[k], mu, RadialFn.from_values(grid, cube[k]))
    per_mode[K + 1:] = -cube[K + 1:]
    w = _cos_weights(3 * K, t_count)
    return w @ per_mode, w @ cube


def pde_residual(U: SpaceTimeField, gamma, m: float, omega: float, modes: ModeSequence) -> float:
    """max |defect| / max |Gamma U^3| over the sampled period and the interior nodes."""
    if not np.allclose(U.r_nodes, modes.grid.nodes[::max(1, modes.grid.n // len(U.r_nodes))][:len(U.r_nodes)]):
        raise ValueError("field and modes use different radial nodes")
    if not math.isclose(U.omega, omega):
        raise ValueError("field frequency differs from omega")
    defect, cube = pde_residual_profile(modes, gamma, m, omega, len(U.t_nodes))
    mask = interior_mask(modes.grid)
    scale = np.max(np.abs(cube[:, mask]))
    return float(np.max(np.abs(defect[:, mask])) / scale)


@dataclass(frozen=True)
class ExcitationReport:
    alpha: float
    derivative_norms: list
    excited: list
    ratio: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def mode_excitation_report(branch, ctx: BifurcationContext, ratio: float = 1e3) -> ExcitationReport:
    """Central difference (v^a - v^-a)/(2a) at the smallest paired |a|; only mode s may be O(1)."""
    by_alpha = {p.alpha: p for p in branch}
    pairs = sorted(a for a in by_alpha if a > 0 and -a in by_alpha)
    if not pairs:
        raise ValueError("branch too short: needs points at +alpha and -alpha")
    a = pairs[0]
    d = (by_alpha[a].v - by_alpha[-a].v) * (1 / (2 * a))
    norms = d.mode_norms(1)
    top = max(norms)
    excited = [k for k, x in enumerate(norms) if x > max(FLOOR, top / ratio)]
    others = max([x for k, x in enumerate(norms) if k != ctx.s] or [0.0])
    rat = norms[ctx.s] / others if others > 0 else math.inf
    ok = norms[ctx.s] > FLOOR and rat >= ratio
    return ExcitationReport(a, [float(x) for x in norms], excited, float(rat), bool(ok))


@dataclass(frozen=True)
class CascadeReport:
    r: int
    predicted_norm: float
    identity_defect: float | None
    cubic_share: float | None
    chain: list
    depth: int
    nonzero_modes: list

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def cascade_check(bp: BranchPoint, ctx: BifurcationContext, floor: float = FLOOR,
                  r: int | None = None) -> CascadeReport:
    """Witness the mode cascade r -> 3r up to the truncation.

    r is the largest mode <= K/3 above the floor.  R^{tau_3r}[Gamma v_r^3] must
    be nonzero; when 3r <= K the stored v_3r is compared with its full
    convolution identity (identity_defect) and with the pure cubic term
    (cubic_share = |R[Gamma v_r^3]| / |v_3r|).  The chain s, 3s, 9s, ... is
    followed while modes stay above the floor.  Passing ``r`` fixes the
    source mode instead (e.g. r = s for the leading-order chain).
    """
    if not np.any(ctx.gamma_grid):
        raise ValueError("cascade check needs Gamma != 0 almost everywhere")
    v = bp.v.values
    norms = [norm_xq(RadialFn.from_values(ctx.grid, row), 1) for row in v]
    nonzero = [k for k in range(1, ctx.K + 1) if norms[k] > floor]
    if not nonzero:
        raise ValueError("stationary input: all modes at the floor")
    if r is None:
        cands = [k for k in nonzero if 3 * k <= max(ctx.K, 3)]
        r = max(cands) if cands else min(nonzero)
    elif r not in nonzero:
        raise ValueError(f"mode {r} is at the floor")
    k3 = 3 * r
    mu3 = ctx.omega**2 * k3 * k3 - ctx.m**2
    tau3 = ctx.tau(k3) if k3 <= ctx.K else np.pi / 4
    pred = resolvent_arr(ctx.grid, mu3, tau3, ctx.gamma_grid * v[r] ** 3)
    pred_norm = norm_xq(RadialFn.from_values(ctx.grid, pred), 1)
    if pred_norm <= floor * norms[r] ** 3:
        raise RuntimeError(f"R[Gamma v_{r}^3] vanishes: cascade broken")
    ident = share = None
    if k3 <= ctx.K:
        u = v.copy()
        u[0] += ctx.w0
        src = ctx.gamma_grid * mode_product(u, u, u, K_out=ctx.K)[k3]
        full = ctx.resolve(k3, src, bp.lam)
        ident = norm_xq(RadialFn.from_values(ctx.grid, v[k3] - full), 1) / norms[k3]
        share = pred_norm / norms[k3]
    chain = [ctx.s]
    while 3 * chain[-1] <= ctx.K and norms[3 * chain[-1]] > floor:
        chain.append(3 * chain[-1])
    return CascadeReport(r, float(pred_norm), ident, share, chain, len(chain) - 1, nonzero)


def phase_report(bp: BranchPoint, ctx: BifurcationContext, amp_floor: float = 1e-8) -> dict:
    """Far-field phase of each mode k != 0, s against tau_k (mod pi), above an amplitude floor."""
    out = {}
    for k in range(1, ctx.K + 1):
        if k == ctx.s:
            continue
        ff = far_field(ctx.mu[k], bp.v[k])
        if abs(ff.c) <= amp_floor:
            continue
        out[k] = {"sigma": ff.sigma, "tau": ctx.tau(k), "c": ff.c,
                  "distance": phase_distance(ff.sigma, ctx.tau(k))}
    return out


def save_report(report, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict() if hasattr(report, "to_dict") else report, fh, indent=2)
