"""Truncated bifurcation problem F(v, lambda) = 0 (or G) around the ground state.

Mode sequences are handled as arrays of shape (K+1, n): row k holds v_k on
the grid, negative modes are implicit.  The Newton unknown is the flat vector
(v_0, ..., v_K, lambda).
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, gmres

from .helmholtz import (far_field_functionals, psi_tilde_arr, psi_tilde_profile,
                        resolvent_arr, schrodinger_arr)
from .linearized import (PhasePlan, compute_mode_phase, plan_phases, potential_fn,
                         regular_solution)
from .modes import ModeSequence, mode_norm, mode_product
from .radial import RadialFn, RadialGrid, fourier_profile
from .stationary import GroundState, as_profile, check_nondegenerate, shoot_ground_state

log = logging.getLogger(__name__)

KERNEL_TOL = 1e-6
GAP_RATIO = 1e3
TRANSVERSAL_TOL = 1e-3
MAX_NEWTON = 25
DENSE_LIMIT = (512, 8)          # dense Newton solves up to this (n, K)


class KernelError(RuntimeError):
    pass


class NewtonError(RuntimeError):
    pass


def spacing_limit(omega: float, m: float, K: int) -> float:
    """Largest admissible node spacing: a sixteenth of the shortest wavelength."""
    return 2 * np.pi / math.sqrt(omega**2 * K * K - m * m) / 16


@dataclass(frozen=True, eq=False)
class BifurcationContext:
    m: float
    omega: float
    gamma: object
    gs: GroundState
    plan: PhasePlan
    grid: RadialGrid
    mu: np.ndarray = field(init=False)
    gamma_grid: np.ndarray = field(init=False, repr=False)
    w0: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.omega > self.m > 0:
            raise ValueError(f"requires omega > m > 0 (got omega={self.omega}, m={self.m})")
        if not self.gs.w0.grid.same_as(self.grid):
            raise ValueError("ground state lives on a different grid")
        limit = spacing_limit(self.omega, self.m, self.K)
        if self.grid.spacing > limit * (1 + 1e-9):
            raise ValueError(f"grid spacing {self.grid.spacing:.4g} exceeds {limit:.4g} "
                             f"(wavelength of mode K={self.K} over 16)")
        k = np.arange(self.K + 1)
        object.__setattr__(self, "mu", self.omega**2 * k * k - self.m**2)
        object.__setattr__(self, "gamma_grid", as_profile(self.gamma)(self.grid.nodes))
        object.__setattr__(self, "w0", self.gs.w0.values)

    @property
    def s(self) -> int:
        return self.plan.s

    @property
    def K(self) -> int:
        return self.plan.K

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def g_case(self) -> bool:
        return self.plan.g_case

    def tau(self, k: int) -> float:
        return self.plan.tau(k)

    @classmethod
    def build(cls, m: float = 1.0, omega: float = 2.0, gamma=1.0, grid: RadialGrid | None = None,
              s: int = 1, K: int = 8, gs: GroundState | None = None,
              tau_overrides: dict | None = None, check_ground_state: bool = True,
              phase_tol: float = 1e-6) -> "BifurcationContext":
        """Ground state, linearized phases and phase plan on one grid."""
        if grid is None:
            raise ValueError("a grid is required")
        if gs is None:
            gs = shoot_ground_state(m, gamma, grid)
        if check_ground_state:
            rep = check_nondegenerate(gs, m, gamma)
            if not rep.is_nondegenerate:
                raise KernelError(f"ground state is degenerate (kernel_mismatch={rep.kernel_mismatch:.3e})")
        phases = [compute_mode_phase(k, m, omega, gamma, gs, grid) for k in range(1, K + 1)]
        plan = plan_phases(s, K, phases, phase_tol=phase_tol, tau_overrides=tau_overrides)
        return cls(m, omega, gamma, gs, plan, grid)

    def with_grid(self, grid: RadialGrid, K: int | None = None) -> "BifurcationContext":
        """Same phases and taus on another grid (q_k resampled from the ODE, no far-field fit)."""
        K = self.K if K is None else K
        gs = self.gs.resample(grid)
        pot = potential_fn(gs, self.gamma)
        entries = []
        for e in self.plan.entries[:K]:
            q, *_ = regular_solution(grid, e.mu_k, pot)
            entries.append(replace(e, q_k=RadialFn.from_values(grid, q / abs(e.amplitude_raw))))
        plan = PhasePlan(self.plan.s, K, tuple(entries), self.plan.g_case)
        return BifurcationContext(self.m, self.omega, self.gamma, gs, plan, grid)

    # -- resolvent layer ------------------------------------------------------

    def resolve(self, k: int, src: np.ndarray, lam: float, factor: float = 1.0) -> np.ndarray:
        """The operator acting on Gamma*(...)_k in row k of F (without the G functional term)."""
        g, mu = self.grid, self.mu[k]
        if k == 0:
            return factor * schrodinger_arr(g, self.m**2, src)
        if k != self.s:
            return factor * resolvent_arr(g, mu, self.tau(k), src)
        out = resolvent_arr(g, mu, np.pi / 2, src)
        if not self.g_case:
            out = out + (1.0 / math.tan(self.tau(k)) - lam) * psi_tilde_arr(g, mu, src)
        return factor * out

    def functional_rows(self) -> np.ndarray:
        """alpha + beta far-field functional at mode s, as one row."""
        rows = far_field_functionals(self.grid, self.mu[self.s])
        return rows[0] + rows[1]

    def phase_row(self) -> np.ndarray:
        """ell(v) = <q_s, v_s>_{r^2} / <q_s, q_s>_{r^2} on the s row."""
        q = self.plan.entry(self.s).q_k.values
        w = self.grid.weights * self.grid.nodes**2
        return w * q / np.sum(w * q * q)


def _values(v) -> np.ndarray:
    return v.values if isinstance(v, ModeSequence) else np.asarray(v)


def _full(ctx: BifurcationContext, v: np.ndarray) -> np.ndarray:
    u = v.copy()
    u[0] = u[0] + ctx.w0
    return u


def _check(ctx: BifurcationContext, v: np.ndarray):
    if v.shape != (ctx.K + 1, ctx.n):
        raise ValueError(f"sequence shape {v.shape} does not match context ({ctx.K + 1}, {ctx.n})")


def _assemble(ctx: BifurcationContext, v: np.ndarray, lam: float, use_g: bool) -> np.ndarray:
    _check(ctx, v)
    u = _full(ctx, v)
    src = ctx.gamma_grid * mode_product(u, u, u, K_out=ctx.K)
    src[0] = src[0] - ctx.gamma_grid * ctx.w0**3
    out = np.empty_like(v)
    for k in range(ctx.K + 1):
        out[k] = v[k] - ctx.resolve(k, src[k], lam)
    if use_g:
        s = ctx.s
        out[s] -= (1 - lam) * float(ctx.functional_rows() @ v[s]) * psi_tilde_profile(ctx.grid, ctx.mu[s])
    return out


def assemble_F(v, lam: float, ctx: BifurcationContext) -> ModeSequence:
    """F(v, lambda)_k = v_k - (resolvent of Gamma (u*u*u)_k), u = w + v."""
    return ModeSequence(ctx.grid, _assemble(ctx, _values(v), lam, False))


def assemble_G(v, lam: float, ctx: BifurcationContext) -> ModeSequence:
    """Variant for sigma_s = 0: the s row carries (1 - lambda)(alpha + beta)(v_s) tilde-Psi."""
    if not ctx.g_case:
        raise ValueError("assemble_G requires sigma_s = 0 (g_case)")
    return ModeSequence(ctx.grid, _assemble(ctx, _values(v), lam, True))


def assemble_map(v, lam: float, ctx: BifurcationContext) -> ModeSequence:
    """F or G according to the phase plan."""
    return (assemble_G if ctx.g_case else assemble_F)(v, lam, ctx)


def lambda_derivative(v, lam: float, ctx: BifurcationContext) -> ModeSequence:
    """d/dlambda of the map at (v, lambda); nonzero only in row s."""
    v = _values(v)
    out = np.zeros_like(v)
    s, mu = ctx.s, ctx.mu[ctx.s]
    if ctx.g_case:
        out[s] = float(ctx.functional_rows() @ v[s]) * psi_tilde_profile(ctx.grid, mu)
    else:
        u = _full(ctx, v)
        src = ctx.gamma_grid * mode_product(u, u, u, K_out=ctx.K)[s]
        out[s] = psi_tilde_arr(ctx.grid, mu, src)
    return ModeSequence(ctx.grid, out)


class JacobianMap:
    """D_v F(v, lambda) (or D_v G) as a linear map on (K+1, n) arrays."""

    def __init__(self, ctx: BifurcationContext, v, lam: float):
        self.ctx, self.lam = ctx, float(lam)
        self.v = _values(v)
        _check(ctx, self.v)
        u = _full(ctx, self.v)
        self.uu = mode_product(u, u, K_out=2 * ctx.K)
        self.u = u
        self.use_g = ctx.g_case

    @property
    def shape(self) -> tuple[int, int]:
        N = (self.ctx.K + 1) * self.ctx.n
        return (N, N)

    def apply(self, q) -> np.ndarray:
        ctx = self.ctx
        q = _values(q).reshape(ctx.K + 1, ctx.n)
        src = ctx.gamma_grid * mode_product(q, self.u, self.u, K_out=ctx.K)
        out = np.empty_like(q)
        for k in range(ctx.K + 1):
            out[k] = q[k] - ctx.resolve(k, src[k], self.lam, 3.0)
        if self.use_g:
            s = ctx.s
            out[s] -= (1 - self.lam) * float(ctx.functional_rows() @ q[s]) * psi_tilde_profile(ctx.grid, ctx.mu[s])
        return out

    def coefficient(self, k: int, l: int) -> np.ndarray:
        """Multiplier of q_l in (q * u * u)_k under symmetric storage."""
        K2 = self.uu.shape[0] - 1
        c = self.uu[abs(k - l)].copy() if abs(k - l) <= K2 else np.zeros(self.ctx.n)
        if l > 0 and k + l <= K2:
            c += self.uu[k + l]
        return c

    def resolvent_matrix(self, k: int) -> np.ndarray:
        eye = np.eye(self.ctx.n)
        return self.ctx.resolve(k, eye, self.lam)

    def dense(self) -> np.ndarray:
        """Assembled matrix, built blockwise from resolvent matrices (independent of apply)."""
        ctx = self.ctx
        n, K = ctx.n, ctx.K
        J = np.eye((K + 1) * n)
        for k in range(K + 1):
            Rk = self.resolvent_matrix(k)
            for l in range(K + 1):
                coef = ctx.gamma_grid * self.coefficient(k, l)
                if not np.any(coef):
                    continue
                J[k * n:(k + 1) * n, l * n:(l + 1) * n] -= 3.0 * Rk * coef[None, :]
        if self.use_g:
            s = ctx.s
            J[s * n:(s + 1) * n, s * n:(s + 1) * n] -= (1 - self.lam) * np.outer(
                psi_tilde_profile(ctx.grid, ctx.mu[s]), ctx.functional_rows())
        return J

    def as_operator(self) -> LinearOperator:
        return LinearOperator(self.shape, matvec=lambda x: self.apply(x).ravel(), dtype=float)


def assemble_jacobian(v, lam: float, ctx: BifurcationContext) -> JacobianMap:
    return JacobianMap(ctx, v, lam)


def _x1_norm(ctx: BifurcationContext, arr: np.ndarray) -> float:
    return mode_norm(ModeSequence(ctx.grid, arr), 1)


# -- kernel and transversality ------------------------------------------------

@dataclass(frozen=True)
class KernelReport:
    defect: float
    singular_values: list | None
    gap_ratio: float | None
    block_minima: dict | None

    def to_dict(self) -> dict:
        return {"defect": self.defect, "gap_ratio": self.gap_ratio,
                "smallest_singular_values": None if self.singular_values is None else self.singular_values[:4],
                "block_minima": self.block_minima}


def jacobian_block(ctx: BifurcationContext, k: int, lam: float = 0.0) -> np.ndarray:
    """Dense diagonal block k of D_vF(0, lam); at v = 0 the Jacobian is block diagonal."""
    jm = JacobianMap(ctx, np.zeros((ctx.K + 1, ctx.n)), lam)
    n = ctx.n
    B = np.eye(n) - 3.0 * jm.resolvent_matrix(k) * (ctx.gamma_grid * ctx.w0**2)[None, :]
    if ctx.g_case and k == ctx.s:
        B -= (1 - lam) * np.outer(psi_tilde_profile(ctx.grid, ctx.mu[k]), ctx.functional_rows())
    return B


def singular_spectrum(ctx: BifurcationContext) -> tuple[np.ndarray, dict]:
    """All singular values of D_vF(0,0), block by block (sorted ascending), and per-block minima."""
    vals, minima = [], {}
    for k in range(ctx.K + 1):
        sv = sla.svdvals(jacobian_block(ctx, k))
        minima[k] = float(sv.min())
        vals.append(sv)
    return np.sort(np.concatenate(vals)), minima


def kernel_at_origin(ctx: BifurcationContext, tol: float = KERNEL_TOL, spectrum: bool = False,
                     gap: float = GAP_RATIO) -> tuple[ModeSequence, KernelReport]:
    """Tangent q with q_s the normalized linearized solution and all other modes zero."""
    q = ModeSequence.single(ctx.grid, ctx.K, ctx.s, ctx.plan.entry(ctx.s).q_k)
    jm = JacobianMap(ctx, np.zeros((ctx.K + 1, ctx.n)), 0.0)
    defect = _x1_norm(ctx, jm.apply(q)) / mode_norm(q, 1)
    sv = ratio = minima = None
    if spectrum:
        svals, minima = singular_spectrum(ctx)
        ratio = float(svals[1] / svals[0])
        sv = [float(x) for x in svals[:8]]
    report = KernelReport(float(defect), sv, ratio, minima)
    if defect > tol:
        raise KernelError(f"stage kernel: defect {defect:.3e} exceeds {tol:.1e}")
    if spectrum and ratio < gap:
        raise KernelError(f"stage kernel: singular-value gap {ratio:.3e} below {gap:.1e}")
    return q, report


def range_residual(block: np.ndarray, b: np.ndarray, rcond: float = 1e-4) -> float:
    """Relative least-squares residual of block p = b with singular values below rcond*max dropped."""
    U, S, Vt = np.linalg.svd(block)
    keep = S > rcond * S[0]
    coeff = U[:, keep].T @ b
    resid = b - U[:, keep] @ coeff
    return float(np.linalg.norm(resid) / np.linalg.norm(b))


@dataclass(frozen=True)
class TransversalityReport:
    transversal: bool
    lsq_residual: float
    fourier_value: float
    fourier_relative: float
    agree: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def transversality_check(ctx: BifurcationContext, q: ModeSequence,
                         block: np.ndarray | None = None, rcond: float = 1e-4) -> TransversalityReport:
    """d_lambda DF(0,0)[q] outside ran DF(0,0)?

    Decided by a truncated least-squares solve on the s block (the only
    nonzero row of the right-hand side); the Fourier profile of
    Gamma w0^2 q_s at sqrt(mu_s) (F case) or alpha(q_s) (G case) must agree.
    """
    s, mu = ctx.s, ctx.mu[ctx.s]
    qs = q.values[s]
    f = ctx.gamma_grid * ctx.w0**2 * qs
    if ctx.g_case:
        b = float(ctx.functional_rows() @ qs) * psi_tilde_profile(ctx.grid, mu)
        fval = float(far_field_functionals(ctx.grid, mu)[0] @ qs)
        frel = abs(fval)
    else:
        b = 3.0 * psi_tilde_arr(ctx.grid, mu, f)
        fval = fourier_profile(RadialFn.from_values(ctx.grid, f), math.sqrt(mu))
        r = ctx.grid.nodes
        frel = abs(ctx.grid.integrate(np.sin(math.sqrt(mu) * r) * f * r)) / ctx.grid.integrate(np.abs(f) * r)
    if not np.any(b):
        return TransversalityReport(False, 0.0, fval, frel, frel < TRANSVERSAL_TOL)
    B = jacobian_block(ctx, s) if block is None else block
    res = range_residual(B, b, rcond)
    verdict = res >= TRANSVERSAL_TOL
    return TransversalityReport(bool(verdict), res, float(fval), float(frel),
                                bool(verdict == (frel >= TRANSVERSAL_TOL)))


# -- continuation ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class BranchPoint:
    alpha: float
    lam: float
    v: ModeSequence
    newton_iters: int
    residual: float
    phase_defect: float = 0.0

    def to_record(self) -> dict:
        return {"alpha": self.alpha, "lambda": self.lam, "residual": self.residual,
                "newton_iters": self.newton_iters, "norms": self.v.mode_norms(1)}


def _block_preconditioner(ctx: BifurcationContext):
    """Exact inverse of blockdiag(I - 3 Res_k diag(Gamma w0^2)), s block shifted off the kernel.

    The potential is negligible beyond a radius r_V, so each block solve
    reduces to a dense system on the nodes r <= r_V.
    """
    V = 3.0 * ctx.gamma_grid * ctx.w0**2
    inside = np.flatnonzero(np.abs(V) > 1e-16 * np.abs(V).max())
    nv = inside[-1] + 1 if len(inside) else 1
    eye = np.zeros((ctx.n, nv))
    eye[np.arange(nv), np.arange(nv)] = 1.0
    blocks = []
    for k in range(ctx.K + 1):
        if k == 0:
            cols = schrodinger_arr(ctx.grid, ctx.m**2, eye)
        elif k == ctx.s:
            shift = np.pi / 2 if abs(ctx.tau(k) - np.pi / 2) > 0.3 else np.pi / 4
            cols = resolvent_arr(ctx.grid, ctx.mu[k], shift, eye)
        else:
            cols = resolvent_arr(ctx.grid, ctx.mu[k], ctx.tau(k), eye)
        cols = cols * V[None, :nv]
        lu = sla.lu_factor(np.eye(nv) - cols[:nv])
        blocks.append((cols, lu))

    def solve(x):
        x = x.reshape(ctx.K + 1, ctx.n)
        out = np.empty_like(x)
        for k, (cols, lu) in enumerate(blocks):
            z = sla.lu_solve(lu, x[k, :nv])
            out[k] = x[k] + cols @ z
        return out

    return solve


class _BorderedSystem:
    def __init__(self, ctx, v, lam, ell, precond):
        self.ctx = ctx
        self.jm = JacobianMap(ctx, v, lam)
        self.col = lambda_derivative(v, lam, ctx).values.ravel()
        self.scale = 1.0 / max(np.max(np.abs(self.col)), 1e-300)
        self.ell = ell
        self.precond = precond
        self.N = (ctx.K + 1) * ctx.n

    def matvec(self, x):
        dv, t = x[:-1], x[-1]
        top = self.jm.apply(dv).ravel() + self.col * (self.scale * t)
        return np.concatenate([top, [self.ell @ dv]])

    def solve(self, rhs, dense: bool):
        s, n = self.ctx.s, self.ctx.n
        if dense:
            A = np.zeros((self.N + 1, self.N + 1))
            A[:self.N, :self.N] = self.jm.dense()
            A[:self.N, -1] = self.col * self.scale
            A[-1, :self.N] = self.ell
            x = np.linalg.solve(A, rhs)
        else:
            op = LinearOperator((self.N + 1, self.N + 1), matvec=self.matvec, dtype=float)

            def pre(y):
                out = np.empty_like(y)
                out[:-1] = self.precond(y[:-1]).ravel()
                out[-1] = y[-1]
                return out

            M = LinearOperator((self.N + 1, self.N + 1), matvec=pre, dtype=float)
            x, info = gmres(op, rhs, M=M, rtol=1e-13, atol=0.0, restart=80, maxiter=20)
            if info != 0:
                log.warning("GMRES returned info=%d", info)
        x = x.copy()
        x[-1] *= self.scale
        return x


def newton_bordered(ctx: BifurcationContext, alpha: float, v0: np.ndarray, lam0: float,
                    tol: float = 1e-10, max_iter: int = MAX_NEWTON, precond=None,
                    dense: bool | None = None) -> BranchPoint:
    """Solve {F(v, lambda) = 0, ell(v) = alpha} by Newton's method on (v, lambda)."""
    ell_row = ctx.phase_row()
    N = (ctx.K + 1) * ctx.n
    ell = np.zeros(N)
    ell[ctx.s * ctx.n:(ctx.s + 1) * ctx.n] = ell_row
    if dense is None:
        dense = ctx.n <= DENSE_LIMIT[0] and ctx.K <= DENSE_LIMIT[1]
    if precond is None and not dense:
        precond = _block_preconditioner(ctx)
    v, lam = np.array(v0, dtype=float), float(lam0)
    history = []
    for it in range(max_iter + 1):
        Fv = _assemble(ctx, v, lam, ctx.g_case)
        g = float(ell @ v.ravel()) - alpha
        res = _x1_norm(ctx, Fv)
        history.append(res)
        if res <= tol and abs(g) <= tol:
            return BranchPoint(float(alpha), lam, ModeSequence(ctx.grid, v), it, res, abs(g))
        if it >= 3 and res > 0.5 * history[-2] and res < 1e3 * tol:
            raise NewtonError(f"stage branch: residual stagnates at {res:.3e} (grid/truncation floor)")
        system = _BorderedSystem(ctx, v, lam, ell, precond)
        rhs = -np.concatenate([Fv.ravel(), [g]])
        dx = system.solve(rhs, dense)
        v = v + dx[:-1].reshape(v.shape)
        lam += dx[-1]
    raise NewtonError(f"stage branch: Newton did not converge in {max_iter} iterations "
                      f"at alpha={alpha:g} (residual {history[-1]:.3e})")


def continue_branch(ctx: BifurcationContext, alphas, tol: float = 1e-10,
                    q: ModeSequence | None = None, dense: bool | None = None) -> list[BranchPoint]:
    """Branch points for each alpha; predictor alpha*q or a rescaled neighbour, Newton corrector."""
    if q is None:
        q = ModeSequence.single(ctx.grid, ctx.K, ctx.s, ctx.plan.entry(ctx.s).q_k)
    if dense is None:
        dense = ctx.n <= DENSE_LIMIT[0] and ctx.K <= DENSE_LIMIT[1]
    precond = None if dense else _block_preconditioner(ctx)
    alphas = [float(a) for a in alphas]
    solved: dict[float, BranchPoint] = {}
    for a in sorted(set(alphas), key=abs):
        if a == 0.0:
            solved[a] = BranchPoint(0.0, 0.0, ModeSequence.zeros(ctx.grid, ctx.K), 0, 0.0)
            continue
        same = [b for b in solved if b != 0.0 and np.sign(b) == np.sign(a)]
        if same:
            b = max(same, key=abs)
            prev = solved[b]
            v0 = prev.v.values * (a / b)
            lam0 = prev.lam * (a / b)
        else:
            v0, lam0 = a * q.values, 0.0
        solved[a] = newton_bordered(ctx, a, v0, lam0, tol, precond=precond, dense=dense)
    return [solved[a] for a in alphas]


def branch_to_jsonl(points, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in points:
            fh.write(json.dumps(p.to_record()) + "\n")
