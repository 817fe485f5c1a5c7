import json
import math

import numpy as np
import pytest

from kgbreather.bifurcation import (BifurcationContext, KernelError, assemble_F, assemble_G,
                                    assemble_jacobian, assemble_map, branch_to_jsonl,
                                    continue_branch, jacobian_block, kernel_at_origin,
                                    lambda_derivative, newton_bordered, singular_spectrum,
                                    spacing_limit, transversality_check)
from kgbreather.linearized import omega_for_zero_phase, signed_phase
from kgbreather.modes import ModeSequence, mode_norm
from kgbreather.radial import make_grid
from kgbreather.stationary import shoot_ground_state


@pytest.fixture(scope="module")
def small():
    """Single-mode context small enough for dense matrices (omega = 3, K = 1, n = 512)."""
    g = make_grid(60.0, 512)
    return BifurcationContext.build(m=1.0, omega=3.0, gamma=1.0, grid=g, s=1, K=1)


@pytest.fixture(scope="module")
def gctx(grid, gs):
    """Frequency tuned so that sigma_1 = 0: the G-map configuration."""
    om = omega_for_zero_phase(1, 1.0, 1.0, gs, grid, 2.05, 2.2)
    return BifurcationContext.build(omega=om, grid=grid, s=1, K=3, gs=gs)


def smooth_field(ctx, seed=0):
    rng = np.random.default_rng(seed)
    r = ctx.grid.nodes
    return rng.standard_normal((ctx.K + 1, 1)) * np.exp(-r**2 / 20) * np.cos(r)[None, :]


def test_trivial_family(ctx1):
    zero = np.zeros((ctx1.K + 1, ctx1.n))
    for lam in (-0.5, 0.0, 0.7):
        assert np.max(np.abs(assemble_F(zero, lam, ctx1).values)) < 1e-12


def test_lambda_only_in_excited_row(ctx1):
    v = 1e-2 * smooth_field(ctx1)
    a = assemble_F(v, 0.1, ctx1).values
    b = assemble_F(v, -0.4, ctx1).values
    for k in range(ctx1.K + 1):
        if k != ctx1.s:
            np.testing.assert_array_equal(a[k], b[k])
    assert np.max(np.abs(a[ctx1.s] - b[ctx1.s])) > 0


def test_lambda_derivative_matches_difference(ctx1):
    v = 1e-2 * smooth_field(ctx1)
    h = 1e-3
    fd = (assemble_F(v, 0.2 + h, ctx1).values - assemble_F(v, 0.2 - h, ctx1).values) / (2 * h)
    exact = lambda_derivative(v, 0.2, ctx1).values
    np.testing.assert_allclose(fd, exact, atol=1e-10 * np.max(np.abs(exact)))


def test_lambda_derivative_sign_at_origin(ctx1):
    # at v = alpha q the derivative is +3 alpha tilde-Psi * (Gamma w0^2 q_s) to first order
    from kgbreather.helmholtz import psi_tilde_arr
    q = ctx1.plan.entry(1).q_k.values
    alpha = 1e-6
    v = np.zeros((ctx1.K + 1, ctx1.n))
    v[1] = alpha * q
    d = lambda_derivative(v, 0.0, ctx1).values[1]
    lead = 3 * alpha * psi_tilde_arr(ctx1.grid, ctx1.mu[1], ctx1.gamma_grid * ctx1.w0**2 * q)
    assert np.max(np.abs(d - lead)) < 1e-4 * np.max(np.abs(lead))


@pytest.mark.parametrize("lam", [0.0, 0.3])
def test_jacobian_matches_central_difference(ctx1, lam):
    v = 1e-2 * smooth_field(ctx1, 1)
    q = smooth_field(ctx1, 2)
    J = assemble_jacobian(v, lam, ctx1)
    errs = []
    for eps in (1e-3, 1e-4):
        fd = (assemble_F(v + eps * q, lam, ctx1).values - assemble_F(v - eps * q, lam, ctx1).values) / (2 * eps)
        errs.append(np.max(np.abs(fd - J.apply(q))) / np.max(np.abs(fd)))
    assert errs[1] < 1e-6
    assert errs[0] / errs[1] > 50            # second-order consistency


def test_dense_matches_matrix_free(small):
    v = 1e-2 * smooth_field(small)
    J = assemble_jacobian(v, 0.2, small)
    x = np.random.default_rng(3).standard_normal(J.shape[1])
    np.testing.assert_allclose(J.dense() @ x, J.apply(x).ravel(), atol=1e-11 * np.linalg.norm(x))


def test_kernel_at_origin(ctx1):
    q, rep = kernel_at_origin(ctx1)
    assert rep.defect <= 1e-6
    assert q.mode_norms(1)[1] > 0 and all(x == 0 for k, x in enumerate(q.mode_norms(1)) if k != 1)


def test_kernel_fails_with_wrong_phase(ctx1):
    bad = BifurcationContext.build(grid=ctx1.grid, s=1, K=8, gs=ctx1.gs, tau_overrides={1: 1.0},
                                   check_ground_state=False)
    with pytest.raises(KernelError, match="stage kernel"):
        kernel_at_origin(bad)


def test_singular_spectrum_simple_kernel(coarse1):
    svals, minima = singular_spectrum(coarse1)
    assert svals[1] / svals[0] >= 1e3
    assert min(minima, key=minima.get) == coarse1.s


def test_transversality(coarse1):
    q, _ = kernel_at_origin(coarse1, tol=1e-5)
    rep = transversality_check(coarse1, q, jacobian_block(coarse1, coarse1.s))
    assert rep.transversal and rep.agree
    assert rep.lsq_residual >= 1e-3


def test_branch_newton(branch1, ctx1):
    ell = ctx1.phase_row()
    for p in branch1:
        assert p.newton_iters <= 8
        assert p.residual <= 1e-8
        assert ell @ p.v.values[ctx1.s] == pytest.approx(p.alpha, abs=1e-12)
        np.testing.assert_allclose(assemble_F(p.v, p.lam, ctx1).values, 0.0, atol=1e-8)


def test_branch_symmetry(branch1):
    # the half-period time shift maps v_k -> (-1)^k v_k and alpha -> -alpha at s = 1
    by = {p.alpha: p for p in branch1}
    a, b = by[1e-2], by[-1e-2]
    assert a.lam == pytest.approx(b.lam, rel=1e-9)
    signs = np.array([(-1) ** k for k in range(a.v.K + 1)])[:, None]
    np.testing.assert_allclose(b.v.values, signs * a.v.values, atol=1e-9 * np.max(np.abs(a.v.values)))


def test_branch_origin(ctx1):
    (p,) = continue_branch(ctx1, [0.0])
    assert p.lam == 0.0 and p.newton_iters == 0 and not np.any(p.v.values)


def test_tangency_second_order(branch1, ctx1):
    q = ModeSequence.single(ctx1.grid, ctx1.K, 1, ctx1.plan.entry(1).q_k)
    by = {p.alpha: p for p in branch1}
    err = {a: mode_norm(by[a].v - q * a, 1) for a in (1e-3, 2e-3)}
    assert 3.5 < err[2e-3] / err[1e-3] < 4.5


def test_dense_and_krylov_newton_agree(small):
    q = small.plan.entry(1).q_k.values
    v0 = np.zeros((2, small.n))
    v0[1] = 1e-3 * q
    a = newton_bordered(small, 1e-3, v0, 0.0, tol=1e-11, dense=True)
    b = newton_bordered(small, 1e-3, v0, 0.0, tol=1e-11, dense=False)
    assert a.lam == pytest.approx(b.lam, rel=1e-7)
    np.testing.assert_allclose(a.v.values, b.v.values, atol=1e-10)


def test_context_validation(ctx1, gs, grid):
    with pytest.raises(ValueError, match="omega > m"):
        BifurcationContext(1.0, 0.9, 1.0, gs, ctx1.plan, grid)
    with pytest.raises(ValueError, match="different grid"):
        BifurcationContext(1.0, 2.0, 1.0, gs, ctx1.plan, make_grid(100.0, 5000))
    coarse = make_grid(100.0, 1024)
    with pytest.raises(ValueError, match="spacing"):
        BifurcationContext(1.0, 2.0, 1.0, gs.resample(coarse), ctx1.plan, coarse)
    assert spacing_limit(2.0, 1.0, 8) == pytest.approx(2 * np.pi / math.sqrt(255) / 16)


def test_map_dispatch(ctx1):
    v = np.zeros((ctx1.K + 1, ctx1.n))
    with pytest.raises(ValueError, match="g_case"):
        assemble_G(v, 0.0, ctx1)
    np.testing.assert_array_equal(assemble_map(v, 0.1, ctx1).values, assemble_F(v, 0.1, ctx1).values)


def test_branch_jsonl(branch1, tmp_path):
    branch_to_jsonl(branch1, tmp_path / "b.jsonl")
    lines = (tmp_path / "b.jsonl").read_text(encoding="utf-8").splitlines()
    assert len(lines) == len(branch1)
    rec = json.loads(lines[0])
    assert list(rec) == ["alpha", "lambda", "residual", "newton_iters", "norms"]
    assert len(rec["norms"]) == 9


# -- sigma_s = 0: the G map --------------------------------------------------

def test_zero_phase_frequency(gctx):
    assert gctx.g_case
    assert abs(signed_phase(gctx.plan.entry(1).sigma_k)) < 1e-9
    assert gctx.omega == pytest.approx(2.1207333286, abs=1e-8)


def test_g_case_kernel_and_transversality(gctx):
    q, rep = kernel_at_origin(gctx)
    assert rep.defect <= 1e-6
    coarse = gctx.with_grid(make_grid(100.0, 2049), K=2)
    # the defect gate is the fine-grid one above; the coarse grid only supplies the spectrum
    qc, crep = kernel_at_origin(coarse, tol=1e-3, spectrum=True)
    assert crep.gap_ratio >= 1e3
    tr = transversality_check(coarse, qc)
    assert tr.transversal and tr.agree


def test_g_case_jacobian(gctx):
    v = 1e-2 * smooth_field(gctx, 4)
    q = smooth_field(gctx, 5)
    J = assemble_jacobian(v, 0.3, gctx)
    eps = 1e-4
    fd = (assemble_G(v + eps * q, 0.3, gctx).values - assemble_G(v - eps * q, 0.3, gctx).values) / (2 * eps)
    assert np.max(np.abs(fd - J.apply(q))) / np.max(np.abs(fd)) < 1e-6


def test_g_case_branch(gctx):
    pts = continue_branch(gctx, [1e-3, -1e-3])
    for p in pts:
        assert p.residual <= 1e-8 and p.newton_iters <= 8
        np.testing.assert_allclose(assemble_G(p.v, p.lam, gctx).values, 0.0, atol=1e-8)
