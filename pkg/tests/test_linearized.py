import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kgbreather.helmholtz import far_field, helmholtz_resolve, phase_distance
from kgbreather.linearized import (TAU_HIGH, TAU_LOW, ModePhase, PhaseError, compute_mode_phase,
                                   convolution_defect, nondegeneracy_defects, plan_phases,
                                   potential_fn, regular_solution, signed_phase)
from kgbreather.radial import RadialFn, make_grid, radial_residual
from kgbreather.stationary import shoot_ground_state


@pytest.mark.parametrize("k", range(1, 9))
def test_free_phase_is_zero(grid, k):
    mp = compute_mode_phase(k, 1.0, 2.0, 0.0, None, grid)
    assert phase_distance(mp.sigma_k, 0.0) < 1e-8
    assert phase_distance(mp.sigma_pruefer, 0.0) < 1e-8


def test_free_solution_is_sinc(grid):
    mu = 3.0
    q, (A, B), _, _ = regular_solution(grid, mu, potential_fn(None, 1.0))
    k = math.sqrt(mu)
    np.testing.assert_allclose(q, np.sinc(k * grid.nodes / np.pi), atol=1e-12)
    assert A == pytest.approx(1 / k) and B == pytest.approx(0.0, abs=1e-12)


def test_fit_and_pruefer_agree(ctx1):
    for e in ctx1.plan.entries:
        assert phase_distance(e.sigma_k, e.sigma_pruefer) < 1e-6, e.k


def test_far_field_identity(ctx1):
    for e in ctx1.plan.entries:
        ff = far_field(e.mu_k, e.q_k)
        assert math.cos(ff.sigma) * ff.beta == pytest.approx(math.sin(ff.sigma) * ff.alpha, abs=1e-6)


def test_normalization(ctx1):
    for e in ctx1.plan.entries:
        assert abs(e.c_k) == 1.0
        assert e.q_k.values[0] > 0
        assert e.q_k.values[0] == pytest.approx(1 / abs(e.amplitude_raw))
        assert far_field(e.mu_k, e.q_k).c == pytest.approx(e.c_k, rel=1e-9)


def test_ode_residual(ctx1):
    for e in ctx1.plan.entries:
        assert e.ode_residual <= 1e-6, e.k


def test_grid_residual_converges(gs):
    # the finite-difference check on the grid is fourth order; it is not the accuracy floor
    res = []
    for n in (2048, 4096):
        g = make_grid(50.0, n)
        pot = potential_fn(gs, 1.0)
        mu = 4.0 * 4 - 1
        q, *_ = regular_solution(g, mu, pot)
        u = RadialFn.from_values(g, q)
        res.append(radial_residual(u, mu, RadialFn.from_values(g, pot(g.nodes) * q)))
    assert res[0] / res[1] > 12


def test_convolution_identity_at_own_phase(ctx1):
    pot = potential_fn(ctx1.gs, 1.0)(ctx1.grid.nodes)
    for e in ctx1.plan.entries:
        assert convolution_defect(e, e.sigma_k, pot) <= 1e-4, e.k
        q = e.q_k.values
        pointwise = q - helmholtz_resolve(e.mu_k, e.sigma_k, RadialFn.from_values(ctx1.grid, pot * q)).values
        assert np.max(np.abs(pointwise)) <= 1e-4 * np.max(np.abs(q)), e.k


def test_regular_solution_unique_up_to_scale(gs, grid):
    # an independent implicit integration from y'(0) = 2 gives the same profile up to a scalar
    from scipy.integrate import solve_ivp
    mu = 15.0
    pot = potential_fn(gs, 1.0)
    q, *_ = regular_solution(grid, mu, pot, r_cut=20.0)
    sol = solve_ivp(lambda r, y: [y[1], -(mu + float(pot(np.asarray(r)))) * y[0]], (0.0, 20.0),
                    [0.0, 2.0], method="Radau", rtol=1e-12, atol=1e-14, dense_output=True)
    r = grid.nodes[(grid.nodes > 0) & (grid.nodes <= 20.0)]
    other = sol.sol(r)[0] / r
    mine = q[(grid.nodes > 0) & (grid.nodes <= 20.0)]
    c = (mine @ other) / (other @ other)
    assert np.linalg.norm(mine - c * other) / np.linalg.norm(mine) <= 1e-8


def test_other_phases_are_not_solutions(ctx1):
    pot = potential_fn(ctx1.gs, 1.0)(ctx1.grid.nodes)
    defects = nondegeneracy_defects(ctx1.plan, pot)
    assert set(defects) == set(range(2, 9))
    assert min(defects.values()) > 1e-3


def test_plan_rules(ctx1):
    plan = ctx1.plan
    assert plan.tau(1) == plan.entry(1).sigma_k
    for k in range(2, 9):
        assert plan.tau(k) in (TAU_LOW, TAU_HIGH)
    assert not plan.g_case
    assert plan.tau(-3) == plan.tau(3)


def _fake(k, sigma):
    g = make_grid(10.0, 64)
    return ModePhase(k, 1.0, sigma, 1.0, RadialFn.zeros(g))


def test_plan_switches_away_from_quarter_phase():
    phases = [_fake(1, 0.4), _fake(2, np.pi / 4 + 1e-9), _fake(3, 2.0)]
    plan = plan_phases(1, 3, phases)
    assert plan.tau(1) == 0.4
    assert plan.tau(2) == TAU_HIGH
    assert plan.tau(3) == TAU_LOW


def test_plan_detects_zero_phase():
    phases = [_fake(1, np.pi - 1e-8), _fake(2, 1.0), _fake(3, 2.0)]
    assert plan_phases(1, 3, phases).g_case
    assert not plan_phases(2, 3, phases).g_case


def test_plan_overrides_and_errors():
    phases = [_fake(1, 0.4), _fake(2, 1.0), _fake(3, 2.0)]
    assert plan_phases(1, 3, phases, tau_overrides={1: 1.3}).tau(1) == 1.3
    with pytest.raises(ValueError):
        plan_phases(4, 3, phases)
    with pytest.raises(ValueError):
        plan_phases(1, 3, phases[:2])


def test_plan_json(ctx1):
    d = json.loads(ctx1.plan.to_json())
    assert list(d) == ["s", "K", "g_case", "modes"]
    assert list(d["modes"][0]) == ["k", "mu_k", "sigma_k", "c_k", "tau_k"]
    assert [m["k"] for m in d["modes"]] == list(range(1, 9))


def test_compute_mode_phase_rejects_bad_input(grid):
    with pytest.raises(ValueError):
        compute_mode_phase(0, 1.0, 2.0, 1.0, None, grid)
    with pytest.raises(ValueError, match="requires omega > m"):
        compute_mode_phase(1, 1.0, 0.5, 1.0, None, grid)


def test_short_domain_fails_fit(gs):
    with pytest.raises((PhaseError, ValueError)):
        compute_mode_phase(1, 1.0, 2.0, 1.0, gs, make_grid(20.0, 1024))


@given(st.floats(-20, 20))
def test_signed_phase(x):
    y = signed_phase(x)
    assert -np.pi / 2 <= y < np.pi / 2
    assert phase_distance(x, y) < 1e-9


def test_phase_is_scaling_invariant(gs, grid):
    # (m, Gamma) -> (m, 4 Gamma) halves w0 and leaves 3 Gamma w0^2 and so every phase unchanged
    gs4 = shoot_ground_state(1.0, 4.0, grid)
    a = compute_mode_phase(2, 1.0, 2.0, 1.0, gs, grid)
    b = compute_mode_phase(2, 1.0, 2.0, 4.0, gs4, grid)
    assert phase_distance(a.sigma_k, b.sigma_k) < 1e-8
