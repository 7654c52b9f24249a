"""Deterministic-coefficient Nash equilibrium by Riccati decoupling.

Writing the equilibrium rate as ``q = P Q + p`` with ``K = (a/2b)(ones - I)``:

    P' = -A_hat(t) - K P - P^2,        P(T) = G
    p' = -(K + P) p - C_hat(t),        p(T) = 0
    Q' = P Q + p,                      Q(0) = Q0

P is not symmetric in general, so the matrix equation is integrated as is.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import AssumptionViolated, BlowUp
from .model import (AgentParams, MarketParams, TimeGrid, TrajectorySet,
                    initial_inventories, require_deterministic,
                    require_nonnegative_betas)
from .ode import coefficient_stages, hermite_stages, refine, riccati_rate, rk4

DEFAULT_GUARD = 1e3


@dataclass(frozen=True)
class RiccatiSolution:
    grid: TimeGrid
    P: np.ndarray   # (nodes, n, n)
    p: np.ndarray   # (nodes, n)
    dP: np.ndarray
    dp: np.ndarray
    # the same solution on the refined grid it was computed on
    fine: Optional["RiccatiSolution"] = None


def _interaction(market: MarketParams, n: int) -> np.ndarray:
    return (market.a / (2.0 * market.b)) * (np.ones((n, n)) - np.eye(n))


def solve_P(market: MarketParams, agents: Sequence[AgentParams], grid: TimeGrid,
            guard: float = DEFAULT_GUARD):
    """Backward matrix Riccati solve on ``grid`` as given; returns ``(P, dP)`` indexed by node."""
    require_deterministic(market)
    betas = require_nonnegative_betas(market, agents)
    n = len(agents)
    K = _interaction(market, n)
    lam = np.array([ag.lam for ag in agents])
    _, s2 = coefficient_stages(market, grid)
    a_hat_diag = -s2[..., None] * lam / market.b  # (steps, 3, n)
    nodes = grid.nodes

    def rhs(P, k, s):
        out = -K @ P - P @ P
        out[np.diag_indices(n)] -= a_hat_diag[k, s]
        return out

    def check(P, k):
        norm = float(np.max(np.abs(P).sum(axis=1)))
        if not np.isfinite(norm) or norm > guard:
            raise BlowUp("Riccati solution exceeded the guard", nodes[k], norm)

    G = np.diag(-betas / market.b)
    check(G, grid.n_steps)
    return rk4(rhs, G, grid, backward=True, guard=check)


def solve_p(market: MarketParams, agents: Sequence[AgentParams], grid: TimeGrid, P, dP):
    """Backward linear solve for the offset ``p``; returns ``(p, dp)``."""
    grid.check(np.moveaxis(P, 0, -1))
    n = len(agents)
    K = _interaction(market, n)
    mu, _ = coefficient_stages(market, grid)
    c_hat = mu / (2.0 * market.b)
    P_st = hermite_stages(P, dP, grid)
    return rk4(lambda p, k, s: -(K + P_st[k, s]) @ p - c_hat[k, s], np.zeros(n), grid, backward=True)


def refined_grid(market: MarketParams, agents: Sequence[AgentParams], grid: TimeGrid):
    """Refinement of ``grid`` that resolves the decay of P near maturity."""
    b = market.b
    g = [max(ag.alpha - market.a / 2.0, 0.0) / b for ag in agents]
    r = [ag.lam * market.sigma2_sup() / b for ag in agents]
    kappa = (len(agents) - 1) * market.a / (2.0 * b)
    return refine(grid, riccati_rate(g, r, kappa))


def solve_riccati(market: MarketParams, agents: Sequence[AgentParams], grid: TimeGrid,
                  guard: float = DEFAULT_GUARD) -> RiccatiSolution:
    """P and p on a refined grid, reported on the nodes of ``grid``."""
    fine = refined_grid(market, agents, grid)
    P, dP = solve_P(market, agents, fine, guard)
    p, dp = solve_p(market, agents, fine, P, dP)
    on_fine = RiccatiSolution(fine, P, p, dP, dp)
    return RiccatiSolution(grid, fine.to_coarse(P), fine.to_coarse(p), fine.coarse_slopes(dP),
                           fine.coarse_slopes(dp), fine=on_fine)


def forward_Q(Q0, sol: RiccatiSolution) -> TrajectorySet:
    run = sol.fine if sol.fine is not None else sol
    P_st = hermite_stages(run.P, run.dP, run.grid)
    p_st = hermite_stages(run.p, run.dp, run.grid)
    Q, _ = rk4(lambda Q, k, s: P_st[k, s] @ Q + p_st[k, s], np.asarray(Q0, dtype=float), run.grid)
    if sol.fine is not None:
        Q = sol.fine.grid.to_coarse(Q)
    q = np.einsum("kij,kj->ki", sol.P, Q) + sol.p
    return TrajectorySet(sol.grid, Q.T, q.T, "riccati")


def solve(market: MarketParams, agents: Sequence[AgentParams], grid: TimeGrid,
          guard: float = DEFAULT_GUARD) -> TrajectorySet:
    if not agents:
        raise AssumptionViolated("need at least one agent")
    sol = solve_riccati(market, agents, grid, guard)
    return forward_Q(initial_inventories(agents), sol)
