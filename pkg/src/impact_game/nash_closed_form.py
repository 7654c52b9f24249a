"""Constant-coefficient Nash equilibrium via a linear ODE and the matrix exponential.

With ``Lam = [Q'; Q]`` the equilibrium satisfies ``Lam' = M Lam + N`` where

    M = [[A_tilde, -A_hat], [I, 0]],   N = [-C_hat; 0],
    A_tilde = (a / 2b)(I - ones),  A_hat = diag(-lambda_i sigma^2 / b),
    C_hat = (mu / 2b) * 1,         G = diag(-beta_i / b),

with boundary conditions ``Q(0) = Q0`` and ``Q'(T) = G Q(T)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import AssumptionViolated, IllConditioned
from .linalg import exp_integral, mat_exp, solve_linear
from .model import (AgentParams, MarketParams, TimeGrid, TrajectorySet,
                    initial_inventories, require_nonnegative_betas)


@dataclass(frozen=True)
class OdeSystem:
    n: int
    T: float
    M: np.ndarray
    N: np.ndarray
    G: np.ndarray
    A_hat: np.ndarray
    B_hat: np.ndarray
    A_tilde: np.ndarray
    C_hat: np.ndarray


@dataclass(frozen=True)
class XiSolution:
    xi1: np.ndarray
    xi2: np.ndarray
    condition: float
    initial_residual: float
    terminal_residual: float


def build_system(market: MarketParams, agents: Sequence[AgentParams], n: Optional[int] = None) -> OdeSystem:
    n = len(agents) if n is None else n
    if len(agents) != n:
        raise ValueError("len(agents) must equal n")
    if not market.is_constant:
        raise AssumptionViolated("closed form needs constant drift and volatility; use the Riccati backend")
    betas = require_nonnegative_betas(market, agents)
    a, b = market.a, market.b
    mu, s2 = float(market.mu(0.0)), float(market.sigma2(0.0))
    lam = np.array([ag.lam for ag in agents])
    ident = np.eye(n)
    B_hat = np.ones((n, n))
    A_hat = np.diag(-lam * s2 / b)
    A_tilde = (a / (2.0 * b)) * (ident - B_hat)
    C_hat = np.full(n, mu / (2.0 * b))
    G = np.diag(-betas / b)
    M = np.block([[A_tilde, -A_hat], [ident, np.zeros((n, n))]])
    N = np.concatenate([-C_hat, np.zeros(n)])
    return OdeSystem(n, market.T, M, N, G, A_hat, B_hat, A_tilde, C_hat)


def solve_xi(system: OdeSystem, Q0, T: Optional[float] = None) -> XiSolution:
    """Initial rate vector ``xi1`` (with ``xi2 = Q0``) meeting both boundary conditions.

    Raises IllConditioned when ``E1 - G E3`` is numerically singular.
    """
    n = system.n
    T = system.T if T is None else T
    Q0 = np.asarray(Q0, dtype=float)
    E = mat_exp(system.M, T)
    E1, E2, E3, E4 = E[:n, :n], E[:n, n:], E[n:, :n], E[n:, n:]
    G = system.G
    inhom = exp_integral(system.M, system.N, T)
    rhs = -(inhom[:n] - G @ inhom[n:]) - (E2 - G @ E4) @ Q0
    try:
        xi1, cond = solve_linear(E1 - G @ E3, rhs)
    except IllConditioned as err:
        raise IllConditioned("boundary matrix E1 - G E3 is singular; parameters may be outside "
                             "the unique-equilibrium regime", err.condition) from None
    lam_T = E @ np.concatenate([xi1, Q0]) + inhom
    return XiSolution(
        xi1=xi1,
        xi2=Q0.copy(),
        condition=cond,
        initial_residual=0.0,
        terminal_residual=float(np.max(np.abs(lam_T[:n] - G @ lam_T[n:]), initial=0.0)),
    )


def equilibrium_trajectories(system: OdeSystem, xi: XiSolution, grid: TimeGrid) -> TrajectorySet:
    """Evaluate ``Lam(t_k)`` on the grid by stepping the augmented exponential."""
    n = system.n
    aug = np.zeros((2 * n + 1, 2 * n + 1))
    aug[:2 * n, :2 * n] = system.M
    aug[:2 * n, 2 * n] = system.N
    step = mat_exp(aug, grid.dt)
    states = np.empty((grid.n_steps + 1, 2 * n + 1))
    states[0] = np.concatenate([xi.xi1, xi.xi2, [1.0]])
    for k in range(grid.n_steps):
        states[k + 1] = step @ states[k]
    return TrajectorySet(grid, states[:, n:2 * n].T, states[:, :n].T, "closed_form",
                         meta={"condition": xi.condition, "terminal_residual": xi.terminal_residual})


def solve(market: MarketParams, agents: Sequence[AgentParams], grid: TimeGrid) -> TrajectorySet:
    system = build_system(market, agents)
    xi = solve_xi(system, initial_inventories(agents), market.T)
    return equilibrium_trajectories(system, xi, grid)
