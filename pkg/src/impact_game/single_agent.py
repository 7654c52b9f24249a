"""Single-agent optimal execution against fixed deterministic opponents.

The value function of agent ``i`` (net of the ``a Q^2 / 2`` bookkeeping term)
is ``A(t) Q^2 + B(t) Q + C(t)`` with

    A' = A^2 / b - lambda sigma^2,                A(T) = beta
    B' = A B / b + mu + a * sum_{j != i} q^j,      B(T) = 0
    C' = B^2 / (4 b),                              C(T) = 0

and the optimal rate is the feedback ``q = -(A Q + B / 2) / b``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import AssumptionViolated, BoundsViolation
from .model import (AgentParams, MarketParams, TimeGrid, beta_of,
                    require_deterministic)
from .ode import (LEFT, RIGHT, SubGrid, coefficient_stages, hermite_stages, refine, riccati_rate, rk4,
                  spline_stages)

# relative slack on the a-priori A bounds, absorbs RK4 round-off
_BOUND_SLACK = 1e-9


@dataclass(frozen=True)
class AbcSolution:
    grid: TimeGrid
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    a: float = 0.0
    dA: Optional[np.ndarray] = None
    dB: Optional[np.ndarray] = None
    # the same solution on the refined grid it was computed on
    fine: Optional["AbcSolution"] = None


def a_bounds(agent: AgentParams, market: MarketParams, grid: TimeGrid):
    """Lower and upper envelopes for A along the grid.

    ``beta exp(-M (T - t) / b) <= A(t) <= beta + lambda ||sigma||^2 (T - t)``
    with ``M = beta + lambda ||sigma||^2 T``.
    """
    beta = beta_of(agent, market)
    s2 = market.sigma2_sup()
    tau = grid.T - grid.nodes
    M = beta + agent.lam * s2 * grid.T
    return beta * np.exp(-M * tau / market.b), beta + agent.lam * s2 * tau


def opponent_sum(opponents, grid: TimeGrid) -> np.ndarray:
    """Sum of opponents' rate paths on the nodes; empty or None gives zeros."""
    if opponents is None:
        return np.zeros(grid.n_steps + 1)
    opp = np.asarray(opponents, dtype=float)
    if opp.size == 0:
        return np.zeros(grid.n_steps + 1)
    opp = np.atleast_2d(opp)
    grid.check(opp)
    return opp.sum(axis=0)


def refined_grid(agent: AgentParams, market: MarketParams, grid: TimeGrid) -> SubGrid:
    """Refinement of ``grid`` that resolves the decay of A near maturity."""
    b = market.b
    return refine(grid, riccati_rate(max(beta_of(agent, market), 0.0) / b,
                                     agent.lam * market.sigma2_sup() / b))


def _solve_A_with_slope(agent, market, grid):
    require_deterministic(market)
    beta = beta_of(agent, market)
    if beta < 0:
        raise AssumptionViolated(f"beta = {beta:.6g} < 0; the single-agent problem is not well posed")
    _, s2 = coefficient_stages(market, grid)
    lam_s2 = agent.lam * s2
    b = market.b
    with np.errstate(over="ignore", invalid="ignore"):
        A, dA = rk4(lambda A, k, s: A * A / b - lam_s2[k, s], beta, grid, backward=True)
    lo, hi = a_bounds(agent, market, grid)
    slack = _BOUND_SLACK * max(1.0, beta + agent.lam * market.sigma2_sup() * grid.T)
    if np.any(A < lo - slack) or np.any(A > hi + slack):
        k = int(np.argmax(np.maximum(lo - A, A - hi)))
        raise BoundsViolation(f"A({grid.nodes[k]:.6g}) = {A[k]:.6g} outside [{lo[k]:.6g}, {hi[k]:.6g}]")
    return A, dA


def solve_A(agent: AgentParams, market: MarketParams, grid: TimeGrid) -> np.ndarray:
    fine = refined_grid(agent, market, grid)
    return fine.to_coarse(_solve_A_with_slope(agent, market, fine)[0])


def _solve_B_with_slope(market, grid, A, dA, source_rate, rate_grid):
    b, a = market.b, market.a
    mu, _ = coefficient_stages(market, grid)
    A_st = hermite_stages(A, dA, grid)
    source = mu + a * spline_stages(source_rate, rate_grid, grid)
    return rk4(lambda B, k, s: A_st[k, s] * B / b + source[k, s], 0.0, grid, backward=True)


def solve_B(agent: AgentParams, market: MarketParams, grid: TimeGrid,
            opponents=None, A: Optional[np.ndarray] = None) -> np.ndarray:
    """Backward linear equation for B; ``opponents`` is an (m, n_nodes) array of rates.

    A given ``A`` is used as is on ``grid``, without refinement.
    """
    if A is None:
        return solve_abc(agent, market, grid, opponents).B
    grid.check(A)
    _, s2 = coefficient_stages(market, grid)
    ends = np.stack([A[:-1], A[1:]], axis=1)
    dA = ends * ends / market.b - agent.lam * s2[:, [LEFT, RIGHT]]
    return _solve_B_with_slope(market, grid, A, dA, opponent_sum(opponents, grid), grid)[0]


def solve_C(grid: TimeGrid, B: np.ndarray, b: float) -> np.ndarray:
    """``C(t) = -int_t^T B^2 / (4 b) ds`` by the trapezoidal rule."""
    grid.check(B)
    integrand = np.square(B) / (4.0 * b)
    running = cumulative_trapezoid(integrand, grid.nodes, initial=0.0)
    return -(running[-1] - running)


def solve_abc(agent: AgentParams, market: MarketParams, grid: TimeGrid, opponents=None) -> AbcSolution:
    """A, B, C on a refined grid, reported on the nodes of ``grid``."""
    fine = refined_grid(agent, market, grid)
    A, dA = _solve_A_with_slope(agent, market, fine)
    B, dB = _solve_B_with_slope(market, fine, A, dA, opponent_sum(opponents, grid), grid)
    C = solve_C(fine, B, market.b)
    on_fine = AbcSolution(fine, A, B, C, a=market.a, dA=dA, dB=dB)
    return AbcSolution(grid, fine.to_coarse(A), fine.to_coarse(B), fine.to_coarse(C), a=market.a,
                       dA=fine.coarse_slopes(dA), dB=fine.coarse_slopes(dB), fine=on_fine)


def value_function(abc: AbcSolution, t: float, Q: float, full: bool = False) -> float:
    """``A Q^2 + B Q + C`` at node ``t``; ``full`` adds the ``a Q^2 / 2`` term."""
    k = abc.grid.index_of(t)
    value = abc.A[k] * Q * Q + abc.B[k] * Q + abc.C[k]
    if full:
        value += 0.5 * abc.a * Q * Q
    return float(value)


def optimal_trajectory(agent: AgentParams, market: MarketParams, grid: TimeGrid,
                       opponents=None, abc: Optional[AbcSolution] = None):
    """Optimal inventory and rate paths from the feedback ``q = -(A Q + B/2) / b``."""
    if abc is None:
        abc = solve_abc(agent, market, grid, opponents)
    sol = abc.fine if abc.fine is not None else abc
    b = market.b
    A_st = hermite_stages(sol.A, sol.dA, sol.grid)
    B_st = hermite_stages(sol.B, sol.dB, sol.grid)
    Q, _ = rk4(lambda Q, k, s: -(A_st[k, s] * Q + 0.5 * B_st[k, s]) / b, agent.q0, sol.grid)
    if abc.fine is not None:
        Q = abc.fine.grid.to_coarse(Q)
    q = -(abc.A * Q + 0.5 * abc.B) / b
    return Q, q


def best_response_path(agents: Sequence[AgentParams], i: int, market: MarketParams,
                       grid: TimeGrid, rates: np.ndarray):
    """Agent ``i``'s optimum when everyone else trades ``rates`` (an (n, nodes) array)."""
    rates = np.atleast_2d(rates)
    others = np.delete(rates, i, axis=0)
    return optimal_trajectory(agents[i], market, grid, others)
