import numpy as np
import pytest

from impact_game import nash_closed_form
from impact_game.aggregation import (convergence_report, decompose, meanfield_individual,
                                     meanfield_limit, scaled_game, solve_aggregate)
from impact_game.errors import AssumptionViolated
from impact_game.model import AgentParams, make_grid
from impact_game.single_agent import optimal_trajectory

from conftest import ac_inventory, baseline_market

Q0 = [1.0, 1.0, 0.5]


def equal_agents(q0s, alpha=1.0, lam=1.0):
    return [AgentParams(alpha, lam, x) for x in q0s]


def test_single_agent_reduction(market, grid):
    agg = solve_aggregate(market, 1.0, 1.0, 1.0, 1, grid)
    Q, q = optimal_trajectory(AgentParams(1.0, 1.0, 1.0), market, grid)
    np.testing.assert_allclose(agg.Q_tilde, Q, atol=1e-8)
    np.testing.assert_allclose(agg.q_tilde, q, atol=1e-8)


def test_zero_data(grid):
    agg = solve_aggregate(baseline_market(drift=0.0), 1.0, 1.0, 0.0, 3, grid)
    np.testing.assert_array_equal(agg.Q_tilde, 0.0)
    np.testing.assert_array_equal(agg.q_tilde, 0.0)


def test_total_matches_closed_form(market, grid):
    agg = solve_aggregate(market, 1.0, 1.0, sum(Q0), 3, grid)
    cf = nash_closed_form.solve(market, equal_agents(Q0), grid)
    assert agg.Q_tilde[0] == sum(Q0)
    assert np.max(np.abs(agg.Q_tilde - cf.Q.sum(axis=0))) <= 1e-6
    assert np.max(np.abs(agg.q_tilde - cf.q.sum(axis=0))) <= 1e-6


def test_rate_is_derivative_of_total(market, grid):
    agg = solve_aggregate(market, 1.0, 1.0, sum(Q0), 3, grid)
    slope = np.gradient(agg.Q_tilde, grid.nodes, edge_order=2)
    np.testing.assert_allclose(slope, agg.q_tilde, atol=1e-3)


def test_decompose_sums_and_matches(market, grid):
    agg = solve_aggregate(market, 1.0, 1.0, sum(Q0), 3, grid)
    parts = decompose(agg, Q0, market, 1.0, 1.0, grid)
    assert np.max(np.abs(parts.Q.sum(axis=0) - agg.Q_tilde)) <= 1e-7
    assert np.max(np.abs(parts.q.sum(axis=0) - agg.q_tilde)) <= 1e-7
    cf = nash_closed_form.solve(market, equal_agents(Q0), grid)
    assert parts.sup_distance(cf) <= 1e-6


def test_decompose_symmetric(market, grid):
    agg = solve_aggregate(market, 1.0, 1.0, 2.4, 3, grid)
    parts = decompose(agg, [0.8] * 3, market, 1.0, 1.0, grid)
    for i in range(3):
        np.testing.assert_allclose(parts.Q[i], agg.Q_tilde / 3, atol=1e-9)


def test_flat_agent_trades_against_crowd(market, grid):
    q0s = [1.0, 1.0, 0.0]
    agg = solve_aggregate(market, 1.0, 1.0, sum(q0s), 3, grid)
    parts = decompose(agg, q0s, market, 1.0, 1.0, grid)
    assert np.max(np.abs(parts.Q[2])) > 1e-4
    cf = nash_closed_form.solve(market, equal_agents(q0s), grid)
    np.testing.assert_allclose(parts.Q[2], cf.Q[2], atol=1e-6)


def test_decompose_needs_one_q0_per_agent(market, grid):
    agg = solve_aggregate(market, 1.0, 1.0, 2.5, 3, grid)
    with pytest.raises(ValueError):
        decompose(agg, [1.0, 1.5], market, 1.0, 1.0, grid)


def test_rejects_negative_beta(market, grid):
    with pytest.raises(AssumptionViolated):
        solve_aggregate(market, 0.001, 1.0, 1.0, 2, grid)


def test_meanfield_zero(grid):
    lim = meanfield_limit(baseline_market(drift=0.0), 1.0, 1.0, 0.0, grid)
    np.testing.assert_array_equal(lim.Q_star, 0.0)


def test_meanfield_closed_form(grid):
    m = baseline_market(a=0.0, drift=0.0)
    lim = meanfield_limit(m, 1.0, 0.0, 1.5, grid)
    np.testing.assert_allclose(lim.Q_star, ac_inventory(1.5, m.b, 1.0, 1.0, grid.nodes), atol=2e-9)
    assert lim.Q_star[0] == 1.5
    fine = make_grid(1.0, 8000)
    lim8 = meanfield_limit(m, 1.0, 0.0, 1.5, fine)
    np.testing.assert_allclose(lim8.Q_star, ac_inventory(1.5, m.b, 1.0, 1.0, fine.nodes), atol=1e-9)


def test_meanfield_baseline_smooth(market, grid):
    lim = meanfield_limit(market, 1.0, 1.0, 1.0, grid)
    assert np.all(np.isfinite(lim.Q_star)) and np.all(np.isfinite(lim.q_star))
    assert np.max(np.abs(np.diff(lim.q_star))) < 0.05


def test_scaled_game_terminal_coefficient(market):
    m_n, ags = scaled_game(market, 1.0, 1.0, [1.0] * 4)
    assert m_n.a == pytest.approx(market.a / 4)
    assert ags[0].alpha - m_n.a / 2 == pytest.approx(1.0 - market.a / 8)


def test_convergence_identical_inventories(market, grid):
    rep = convergence_report(market, 1.0, 1.0, lambda i: 1.0, grid=grid)
    assert all(e1 > e2 for e1, e2 in zip(rep.average_errors, rep.average_errors[1:]))
    assert all(e1 >= e2 for e1, e2 in zip(rep.individual_errors, rep.individual_errors[1:]))
    assert -1.3 <= rep.slope <= -0.7
    assert set(rep.as_dict()) >= {"n", "average_error", "slope"}


def test_convergence_without_interaction_is_exact(grid):
    m = baseline_market(a=0.0)
    rep = convergence_report(m, 1.0, 1.0, lambda i: 1.0 + 0.5 * (i % 2), grid=grid,
                             Q0_star=1.25, backend="riccati")
    assert max(rep.average_errors) <= 1e-8
    assert max(rep.individual_errors) <= 1e-8


def test_individual_limit_path(market, grid):
    lim = meanfield_limit(market, 1.0, 1.0, 1.0, grid)
    Q, q = meanfield_individual(market, 1.0, 1.0, 1.0, lim, grid)
    # an agent holding the average inventory follows the representative path
    np.testing.assert_allclose(Q, lim.Q_star, atol=1e-6)


def test_riccati_backend_agrees(market, grid):
    a = convergence_report(market, 1.0, 1.0, lambda i: 1.0, n_list=(2, 4), grid=grid)
    b = convergence_report(market, 1.0, 1.0, lambda i: 1.0, n_list=(2, 4), grid=grid, backend="riccati")
    np.testing.assert_allclose(a.average_errors, b.average_errors, rtol=1e-4)
