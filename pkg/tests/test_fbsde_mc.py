import csv
from pathlib import Path

import numpy as np
import pytest

from impact_game import aggregation, config as cfg, fbsde_mc, nash_closed_form
from impact_game.errors import AssumptionViolated, DegenerateRegression, NoConvergence
from impact_game.fbsde_mc import FactorModel, PolyBasis, Regressor
from impact_game.model import AgentParams, make_grid
from impact_game.single_agent import optimal_trajectory

from conftest import baseline_market

MC_GRID = make_grid(1.0, 50)
FINE = make_grid(1.0, 1000)   # reference grid; every 20th node is an MC node


def rel_sup(a, b):
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


@pytest.fixture(scope="module")
def stochastic():
    return cfg.load(Path(__file__).parents[1] / "scenarios" / "stochastic_vol.json")


def test_constant_factor_paths():
    model = FactorModel(kind="constant", x0=0.2, level=0.2)
    paths = fbsde_mc.simulate_factors(model, MC_GRID, 10, seed=1)
    np.testing.assert_array_equal(paths.X, 0.2)
    np.testing.assert_array_equal(model.sigma(paths.X), 0.2)
    assert paths.dW.shape == (10, 50, 1)


def test_mean_reversion_without_noise():
    model = FactorModel(kind="mean_reverting", x0=0.4, level=0.2, speed=2.0, vol_of_vol=0.0)
    grid = make_grid(1.0, 2000)
    X = fbsde_mc.simulate_factors(model, grid, 3, seed=0).X
    k = np.arange(grid.n_steps + 1)
    np.testing.assert_allclose(X[0], 0.2 + 0.2 * (1 - 2.0 * grid.dt) ** k, rtol=1e-12)
    # Euler against the exact relaxation: first-order error in dt
    np.testing.assert_allclose(X[0], 0.2 + 0.2 * np.exp(-2.0 * grid.nodes), atol=2.0 * 0.2 * grid.dt)
    assert np.all(X == X[0])


def test_seeded_streams(stochastic):
    model = FactorModel.from_market(stochastic.market)
    a = fbsde_mc.simulate_factors(model, MC_GRID, 20, seed=4)
    b = fbsde_mc.simulate_factors(model, MC_GRID, 20, seed=4)
    c = fbsde_mc.simulate_factors(model, MC_GRID, 30, seed=4)
    d = fbsde_mc.simulate_factors(model, MC_GRID, 20, seed=5)
    assert a.X.tobytes() == b.X.tobytes() and a.dW.tobytes() == b.dW.tobytes()
    np.testing.assert_array_equal(c.dW[:20], a.dW)   # per-path streams
    assert not np.array_equal(a.dW, d.dW)


def test_factor_model_from_market(stochastic):
    model = FactorModel.from_market(stochastic.market)
    assert model.is_random and model.sigma_range() == (0.05, 0.5)
    assert model.mu_base == 0.02
    with pytest.raises(AssumptionViolated):
        FactorModel.from_market(baseline_market(vol={"type": "piecewise", "t": [0, 0.5], "v": [0.2, 0.4]}))


def test_single_agent_limit():
    m = baseline_market()
    ag = AgentParams(1.0, 1.0, 1.0)
    sol = fbsde_mc.picard_solve(m, [ag], MC_GRID, n_paths=10_000, seed=5)
    Q, q = optimal_trajectory(ag, m, FINE)
    mean = sol.mean_trajectories()
    assert rel_sup(mean.q[0], q[::20]) <= 0.02
    assert rel_sup(mean.Q[0], Q[::20]) <= 0.02


def test_nash_limit_and_invariants(market, agents):
    sol = fbsde_mc.picard_solve(market, agents, MC_GRID, n_paths=10_000, seed=11)
    ref = nash_closed_form.solve(market, agents, MC_GRID)
    mean = sol.mean_trajectories()
    assert mean.provenance == "mc"
    assert rel_sup(mean.Q, ref.Q) <= 0.02 and rel_sup(mean.q, ref.q) <= 0.02
    # Euler forward and the terminal condition hold exactly per path
    np.testing.assert_allclose(sol.Q[:, 1:], sol.Q[:, :-1] + sol.q[:, :-1] * MC_GRID.dt, atol=1e-14)
    np.testing.assert_allclose(sol.q[:, -1], -sol.Q[:, -1] * sol.system.g, atol=1e-14)
    assert max(r.p95 for r in fbsde_mc.fbsde_residual(sol)) <= 5e-3
    assert fbsde_mc.martingale_check(sol).passed


def test_zero_data():
    m = baseline_market(drift=0.0)
    ags = [AgentParams(1.0, 1.0, 0.0), AgentParams(0.5, 0.5, 0.0)]
    sol = fbsde_mc.picard_solve(m, ags, MC_GRID, n_paths=2000, seed=1)
    assert np.max(np.abs(sol.mean_trajectories().q)) < 1e-3
    # paths start from a cloud around zero, so the defect is at regression rounding level
    assert max(r.max for r in fbsde_mc.fbsde_residual(sol)) < 1e-6


def test_bitwise_reproducible(market, agents):
    a = fbsde_mc.picard_solve(market, agents, make_grid(1.0, 10), n_paths=1000, seed=3)
    b = fbsde_mc.picard_solve(market, agents, make_grid(1.0, 10), n_paths=1000, seed=3)
    for name in ("X", "Q", "q", "Z"):
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


def test_refinement_ladder(stochastic):
    p95 = []
    for steps, paths in [(5, 1000), (10, 4000), (20, 16_000)]:
        sol = fbsde_mc.picard_solve(stochastic.market, stochastic.agents, make_grid(1.0, steps),
                                    n_paths=paths, seed=3)
        assert fbsde_mc.martingale_check(sol).passed
        p95.append(max(r.p95 for r in fbsde_mc.fbsde_residual(sol)))
    assert p95[0] > p95[1] > p95[2]


def test_path_count_floor(market, agents):
    with pytest.raises(ValueError):
        fbsde_mc.picard_solve(market, agents, MC_GRID, n_paths=500)


def test_negative_beta_rejected(market):
    with pytest.raises(AssumptionViolated):
        fbsde_mc.picard_solve(market, [AgentParams(0.001, 1.0, 1.0)], MC_GRID, n_paths=1000)


def test_no_convergence_carries_history(market, agents):
    with pytest.raises(NoConvergence) as info:
        fbsde_mc.picard_solve(market, agents, make_grid(1.0, 10), n_paths=1000, max_picard=1)
    assert len(info.value.residuals) == 1


def test_rank_deficient_design():
    z = np.random.default_rng(0).standard_normal((200, 1))
    design = np.hstack([PolyBasis(1, 2).design(z), z])   # duplicated linear column
    with pytest.raises(DegenerateRegression):
        Regressor(design)


def test_regression_recovers_polynomial():
    z = np.random.default_rng(1).standard_normal((500, 2))
    basis = PolyBasis(2, 2)
    y = 1.0 + 2.0 * z[:, 0] - z[:, 1] + 0.5 * z[:, 0] * z[:, 1]
    np.testing.assert_allclose(Regressor(basis.design(z)).fit(y), y, atol=1e-8)


def test_aggregate_limit(market):
    sol = fbsde_mc.picard_solve_aggregate(market, 1.0, 1.0, 2.5, 3, MC_GRID, n_paths=10_000, seed=5)
    agg = aggregation.solve_aggregate(market, 1.0, 1.0, 2.5, 3, FINE)
    mean = sol.mean_trajectories()
    assert rel_sup(mean.q[0], agg.q_tilde[::20]) <= 0.02
    assert rel_sup(mean.Q[0], agg.Q_tilde[::20]) <= 0.02


def test_dump_csv(market, agents, tmp_path):
    sol = fbsde_mc.picard_solve(market, agents, make_grid(1.0, 4), n_paths=1000, seed=0)
    fbsde_mc.dump_csv(sol, tmp_path / "paths.csv", max_paths=2)
    rows = list(csv.reader(open(tmp_path / "paths.csv")))
    assert rows[0] == ["path", "k", "t", "X", "Q_1", "Q_2", "Q_3", "q_1", "q_2", "q_3"]
    assert len(rows) == 1 + 2 * 5
    assert float(rows[6][4]) == sol.Q[1, 0, 0]
