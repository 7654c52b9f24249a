"""Similar-agent aggregation and the scaled-impact mean-field limit.

When every agent shares ``beta`` and ``lambda`` the total inventory solves a
scalar problem, and each agent's path follows from a scalar problem driven
by the total rate.  Scaling the permanent impact by ``1/n`` and letting
``n -> infinity`` yields a single representative-agent limit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import nash_closed_form, nash_riccati
from .errors import AssumptionViolated, BoundsViolation
from .model import AgentParams, MarketParams, TimeGrid, TrajectorySet
from .ode import coefficient_stages, scalar_decoupling, spline_stages


@dataclass(frozen=True)
class AggregateSolution:
    grid: TimeGrid
    Q_tilde: np.ndarray
    q_tilde: np.ndarray
    P: np.ndarray
    p: np.ndarray
    n: int


@dataclass(frozen=True)
class MeanFieldSolution:
    grid: TimeGrid
    Q_star: np.ndarray
    q_star: np.ndarray
    Q0_star: float


def aggregate_bounds(beta: float, lam: float, n: int, market: MarketParams, grid: TimeGrid):
    """Envelope ``lower <= P(t) <= upper(t)`` for the aggregate Riccati solution.

    ``lower = -e^{kT}(beta/b + lambda ||sigma||^2 T / b)`` with
    ``k = (n-1) a / 2b``, and ``upper = -(beta/b) exp(-|lower| (T - t))``.
    """
    k = (n - 1) * market.a / (2.0 * market.b)
    T = grid.T
    lower = -np.exp(k * T) * (beta / market.b + lam * market.sigma2_sup() * T / market.b)
    upper = -(beta / market.b) * np.exp(lower * (T - grid.nodes))
    return lower, upper


def solve_aggregate(market: MarketParams, alpha: float, lam: float, q0_total: float, n: int,
                    grid: TimeGrid, guard: float = 1e3) -> AggregateSolution:
    """Total inventory and rate of ``n`` agents sharing ``alpha`` and ``lambda``."""
    beta = alpha - market.a / 2.0
    if beta < 0 or lam < 0:
        raise AssumptionViolated("aggregation needs beta >= 0 and lambda >= 0")
    b = market.b
    sol = scalar_decoupling(grid, beta / b, lambda g: lam * coefficient_stages(market, g)[1] / b,
                            (n - 1) * market.a / (2.0 * b),
                            lambda g: n * coefficient_stages(market, g)[0] / (2.0 * b), q0_total, guard,
                            r_sup=lam * market.sigma2_sup() / b)
    lower, upper = aggregate_bounds(beta, lam, n, market, grid)
    slack = 1e-9 * max(1.0, abs(lower))
    if np.any(sol.P < lower - slack) or np.any(sol.P > upper + slack):
        raise BoundsViolation("aggregate Riccati solution outside its a-priori envelope")
    return AggregateSolution(grid, sol.Q, sol.q, sol.P, sol.p, n)


def _source(market: MarketParams, rate: np.ndarray, grid: TimeGrid):
    """Stages of ``mu / 2b + (a / 2b) rate`` on a refinement of ``grid``."""
    def of(fine):
        mu, _ = coefficient_stages(market, fine)
        return (mu + market.a * spline_stages(rate, grid, fine)) / (2.0 * market.b)
    return of


def decompose(aggregate: AggregateSolution, per_agent_q0: Sequence[float], market: MarketParams,
              alpha: float, lam: float, grid: TimeGrid, guard: float = 1e3) -> TrajectorySet:
    """Individual paths given the aggregate rate as an exogenous source."""
    beta = alpha - market.a / 2.0
    q0 = np.asarray(per_agent_q0, dtype=float)
    if q0.size != aggregate.n:
        raise ValueError("need one initial inventory per agent")
    b, a = market.b, market.a
    Q = np.empty((q0.size, grid.n_steps + 1))
    q = np.empty_like(Q)
    for i, x0 in enumerate(q0):
        sol = scalar_decoupling(grid, beta / b, lambda g: lam * coefficient_stages(market, g)[1] / b,
                                -a / (2.0 * b), _source(market, aggregate.q_tilde, grid), x0, guard,
                                r_sup=lam * market.sigma2_sup() / b)
        Q[i], q[i] = sol.Q, sol.q
    return TrajectorySet(grid, Q, q, "aggregation")


def meanfield_limit(market: MarketParams, alpha: float, lam: float, Q0_star: float,
                    grid: TimeGrid, guard: float = 1e3) -> MeanFieldSolution:
    """Representative path of the ``n -> infinity`` limit with impact ``a/n``.

    The terminal coefficient is the full ``alpha / b`` and the agent keeps an
    ``a q / 2`` self term.
    """
    if alpha <= 0 or lam < 0:
        raise AssumptionViolated("mean-field limit needs alpha > 0 and lambda >= 0")
    b = market.b
    sol = scalar_decoupling(grid, alpha / b, lambda g: lam * coefficient_stages(market, g)[1] / b,
                            market.a / (2.0 * b), lambda g: coefficient_stages(market, g)[0] / (2.0 * b),
                            Q0_star, guard, r_sup=lam * market.sigma2_sup() / b)
    return MeanFieldSolution(grid, sol.Q, sol.q, float(Q0_star))


def meanfield_individual(market: MarketParams, alpha: float, lam: float, q0: float,
                         limit: MeanFieldSolution, grid: TimeGrid, guard: float = 1e3):
    """One agent's limiting path, facing the limit rate ``q*`` as given flow."""
    b = market.b
    sol = scalar_decoupling(grid, alpha / b, lambda g: lam * coefficient_stages(market, g)[1] / b,
                            0.0, _source(market, limit.q_star, grid), q0, guard,
                            r_sup=lam * market.sigma2_sup() / b)
    return sol.Q, sol.q


@dataclass
class ConvergenceReport:
    n_list: list
    average_errors: list
    individual_errors: list
    slope: float
    individual_slope: float

    def as_dict(self) -> dict:
        return {
            "n": self.n_list,
            "average_error": self.average_errors,
            "individual_error": self.individual_errors,
            "slope": self.slope,
            "individual_slope": self.individual_slope,
        }


def scaled_game(market: MarketParams, alpha: float, lam: float, q0s: Sequence[float]):
    """Market and agents of the ``n``-player game with impact ``a/n``.

    Keeping ``alpha`` and dividing ``a`` makes the effective terminal penalty
    ``alpha - a/(2n)``.
    """
    n = len(q0s)
    return market.replace(a=market.a / n), [AgentParams(alpha, lam, float(x)) for x in q0s]


def _sup(x):
    return float(np.max(np.abs(x)))


def convergence_report(market: MarketParams, alpha: float, lam: float,
                       q0_sequence: Union[Sequence[float], Callable[[int], float]],
                       n_list: Sequence[int] = (2, 4, 8, 16, 32),
                       grid: Optional[TimeGrid] = None, Q0_star: Optional[float] = None,
                       backend: str = "closed_form") -> ConvergenceReport:
    """Distance between the ``n``-player scaled game and its mean-field limit.

    ``q0_sequence`` gives agent ``i``'s initial inventory (callable of the
    zero-based index, or a sequence at least ``max(n_list)`` long).
    The average error is ``sup|avg Q - Q*| + sup|avg q - q*|``; the individual
    error is the worst agent's analogous distance to its limiting path.
    The slopes are least-squares fits of log error against log n.
    """
    from .model import make_grid

    grid = grid or make_grid(market.T, 1000)
    pick = q0_sequence if callable(q0_sequence) else (lambda i: q0_sequence[i])
    if Q0_star is None:
        big = max(n_list)
        Q0_star = float(np.mean([pick(i) for i in range(big)]))
    limit = meanfield_limit(market, alpha, lam, Q0_star, grid)
    solver = nash_closed_form.solve if backend == "closed_form" else nash_riccati.solve
    avg_err, ind_err = [], []
    for n in n_list:
        q0s = [pick(i) for i in range(n)]
        m_n, agents = scaled_game(market, alpha, lam, q0s)
        traj = solver(m_n, agents, grid)
        avg_err.append(_sup(traj.Q.mean(axis=0) - limit.Q_star) + _sup(traj.q.mean(axis=0) - limit.q_star))
        worst = 0.0
        for i, x0 in enumerate(q0s):
            Qi, qi = meanfield_individual(market, alpha, lam, x0, limit, grid)
            worst = max(worst, _sup(traj.Q[i] - Qi) + _sup(traj.q[i] - qi))
        ind_err.append(worst)
    logn = np.log(np.asarray(n_list, dtype=float))

    def slope(errs):
        errs = np.asarray(errs)
        if np.any(errs <= 0):
            return float("nan")
        return float(np.polyfit(logn, np.log(errs), 1)[0])

    return ConvergenceReport(list(n_list), avg_err, ind_err, slope(avg_err), slope(ind_err))
