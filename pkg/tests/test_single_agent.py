import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from impact_game.equilibrium_check import deviation_test, expected_cost
from impact_game.errors import AssumptionViolated, GridMismatch, OffGridError
from impact_game.model import AgentParams, TrajectorySet, make_grid
from impact_game.single_agent import (AbcSolution, a_bounds, optimal_trajectory, solve_A,
                                      solve_abc, solve_B, solve_C, value_function)

from conftest import ac_inventory, baseline_market
from helpers import tail_integral


def test_A_closed_form_without_risk():
    m = baseline_market(drift=0.0, vol=0.2)
    ag = AgentParams(1.0, 0.0, 1.0)
    g = make_grid(1.0, 1000)
    beta = 0.995
    exact = m.b * beta / (m.b + beta * (g.T - g.nodes))
    A = solve_A(ag, m, g)
    # steps near maturity are refined, so 1000 steps already give ~5e-9
    np.testing.assert_allclose(A, exact, rtol=1e-8)
    fine = solve_A(ag, m, make_grid(1.0, 8000))
    np.testing.assert_allclose(fine, m.b * beta / (m.b + beta * (1.0 - make_grid(1.0, 8000).nodes)), rtol=1e-9)
    assert A[0] == pytest.approx(0.0099005, abs=1e-7)
    # the oracle itself solves the ODE: A' = A^2/b
    slope = m.b * beta**2 / (m.b + beta * (g.T - g.nodes)) ** 2
    np.testing.assert_allclose(slope, exact**2 / m.b, rtol=1e-12)


def test_A_zero():
    m = baseline_market()
    A = solve_A(AgentParams(m.a / 2, 0.0, 1.0), m, make_grid(1.0, 100))
    np.testing.assert_array_equal(A, 0.0)


def test_A_within_bounds_baseline(market, grid):
    A = solve_A(AgentParams(1.0, 1.0, 1.0), market, grid)
    lo, hi = a_bounds(AgentParams(1.0, 1.0, 1.0), market, grid)
    assert A[-1] == pytest.approx(0.995)
    assert np.all(A >= lo - 1e-12) and np.all(A <= hi + 1e-12)


@settings(max_examples=40, deadline=None)
@given(alpha=st.floats(0.01, 5.0), lam=st.floats(0.0, 5.0), sigma=st.floats(0.0, 0.8),
       b=st.floats(0.005, 0.5), T=st.floats(0.2, 2.0))
def test_A_bounds_property(alpha, lam, sigma, b, T):
    m = baseline_market(b=b, T=T, vol=sigma)
    ag = AgentParams(alpha, lam, 1.0)
    # resolve the fastest time scale b/beta near maturity
    g = make_grid(T, max(400, int(np.ceil(10 * (alpha + lam * sigma**2 * T) * T / b))))
    A = solve_A(ag, m, g)        # raises BoundsViolation if outside the envelope
    lo, hi = a_bounds(ag, m, g)
    assert np.all(A >= lo - 1e-9 * max(1, hi[0])) and np.all(A <= hi + 1e-9 * max(1, hi[0]))


def test_A_rejects_negative_beta(market, grid):
    with pytest.raises(AssumptionViolated):
        solve_A(AgentParams(0.001, 1.0, 1.0), market, grid)


def test_A_rejects_factor_vol(grid):
    m = baseline_market(vol={"type": "factor", "kind": "mean_reverting", "x0": 0.2})
    with pytest.raises(AssumptionViolated):
        solve_A(AgentParams(1.0, 1.0, 1.0), m, grid)


def test_B_examples(grid):
    m0 = baseline_market(drift=0.0)
    ag = AgentParams(1.0, 1.0, 1.0)
    np.testing.assert_array_equal(solve_B(ag, m0, grid), 0.0)
    m = baseline_market(drift=0.03, vol=0.0)
    flat = AgentParams(m.a / 2, 0.0, 1.0)
    B = solve_B(flat, m, grid)
    np.testing.assert_allclose(B, -0.03 * (grid.T - grid.nodes), atol=1e-13)
    assert B[-1] == 0.0
    B_none = solve_B(ag, m, grid)
    B_zero = solve_B(ag, m, grid, opponents=np.zeros((2, grid.n_steps + 1)))
    np.testing.assert_array_equal(B_none, B_zero)
    with pytest.raises(GridMismatch):
        solve_B(ag, m, grid, opponents=np.zeros((1, 10)))


def test_C_examples():
    g = make_grid(1.0, 100)
    np.testing.assert_array_equal(solve_C(g, np.zeros(101), 1.0), 0.0)
    C = solve_C(g, np.full(101, 2.0), 1.0)
    assert C[0] == pytest.approx(-1.0) and C[-1] == 0.0
    rng = np.random.default_rng(3)
    C = solve_C(g, rng.normal(size=101), 0.3)
    assert np.all(np.diff(C) >= 0) and np.all(C <= 0)


def test_value_function_examples():
    g = make_grid(1.0, 4)
    abc = AbcSolution(g, np.ones(5), np.full(5, 2.0), np.full(5, 3.0), a=0.5)
    assert value_function(abc, 0.5, 2.0) == 11.0
    assert value_function(abc, 0.5, 0.0) == 3.0
    assert value_function(abc, 0.5, 2.0, full=True) == 12.0
    with pytest.raises(OffGridError):
        value_function(abc, 0.3, 1.0)


def test_value_equals_cost_of_optimum():
    m = baseline_market(drift=0.0)
    ag = AgentParams(1.0, 0.0, 1.5)
    g = make_grid(1.0, 2000)
    abc = solve_abc(ag, m, g)
    Q, q = optimal_trajectory(ag, m, g, abc=abc)
    beta = 0.995
    assert value_function(abc, 0.0, ag.q0) == pytest.approx(ag.q0**2 * m.b * beta / (m.b + beta), rel=1e-9)
    cost = expected_cost(0, TrajectorySet(g, Q[None], q[None], "single"), m, [ag])
    assert value_function(abc, 0.0, ag.q0, full=True) == pytest.approx(cost.total, abs=1e-6)


def test_optimal_trajectory_closed_form(grid):
    m = baseline_market(drift=0.0)
    ag = AgentParams(1.0, 0.0, 1.0)
    Q, q = optimal_trajectory(ag, m, grid)
    exact = ac_inventory(1.0, m.b, 0.995, 1.0, grid.nodes)
    np.testing.assert_allclose(Q, exact, rtol=0, atol=1e-9)
    # the oracle satisfies Q' = -(A Q)/b with the closed-form A
    A = m.b * 0.995 / (m.b + 0.995 * (1.0 - grid.nodes))
    np.testing.assert_allclose(q, -A * exact / m.b, atol=1e-6)


def test_optimal_trajectory_zero(grid):
    m = baseline_market(drift=0.0)
    Q, q = optimal_trajectory(AgentParams(1.0, 1.0, 0.0), m, grid, np.zeros((2, grid.n_steps + 1)))
    np.testing.assert_array_equal(Q, 0.0)
    np.testing.assert_array_equal(q, 0.0)


def test_heavy_terminal_penalty_liquidates(market):
    # beta/b = 1e5, a time scale of 1e-5 that only the refinement resolves
    Q, _ = optimal_trajectory(AgentParams(1e3, 1.0, 1.0), market, make_grid(1.0, 1000))
    assert abs(Q[-1]) <= 0.01


def test_stiff_penalty_on_default_grid(grid):
    # beta/b = 1e5: the last step alone needs thousands of substeps
    m = baseline_market(drift=0.0)
    ag = AgentParams(1e3, 0.0, 1.0)
    beta = 1e3 - m.a / 2
    Q, q = optimal_trajectory(ag, m, grid)
    np.testing.assert_allclose(Q, ac_inventory(1.0, m.b, beta, 1.0, grid.nodes), rtol=0, atol=1e-9)
    A = solve_A(ag, m, grid)
    np.testing.assert_allclose(A, m.b * beta / (m.b + beta * (1.0 - grid.nodes)), rtol=2e-8)


def test_optimum_survives_deviations(market, grid):
    ag = AgentParams(1.0, 1.0, 1.0)
    opp = 0.3 * np.sin(3 * grid.nodes)[None]
    Q, q = optimal_trajectory(ag, market, grid, opp)
    traj = TrajectorySet(grid, np.vstack([Q, np.zeros_like(Q)]), np.vstack([q, opp]), "br")
    other = AgentParams(1.0, 1.0, 0.0)
    rep = deviation_test(traj, market, [ag, other])
    assert rep.agents[0].passed
    assert rep.agents[0].min_delta >= -1e-8


def test_fbsde_residual_single_agent(market, grid):
    ag = AgentParams(1.0, 1.0, 1.0)
    opp = 0.5 * np.cos(2 * grid.nodes)
    Q, q = optimal_trajectory(ag, market, grid, opp[None])
    # opponent is a fixed path, so only agent 1's equation is checked
    t = grid.nodes
    f = (-ag.lam * 0.04 * Q + 0.5 * (0.02 + market.a * opp)) / market.b
    rhs = -(0.995 / market.b) * Q[-1] + tail_integral(f, t)
    assert np.max(np.abs(q - rhs)) <= 1e-6
