"""Expected-cost evaluation, best responses and unilateral-deviation tests."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .errors import NoConvergence
from .model import (AgentParams, MarketParams, TimeGrid, TrajectorySet,
                    beta_of, require_deterministic)
from .single_agent import optimal_trajectory


@dataclass(frozen=True)
class CostBreakdown:
    total: float
    impact_term: float
    slippage: float
    terminal: float
    running_risk: float
    constant: float


def cost_of_paths(i: int, Q_i: np.ndarray, q_i: np.ndarray, others_rate: np.ndarray,
                  market: MarketParams, agent: AgentParams, grid: TimeGrid) -> CostBreakdown:
    """Expected cost of agent ``i`` for own paths and the summed opponent rate."""
    t = grid.nodes
    mu = np.asarray(market.mu(t), dtype=float) * np.ones_like(t)
    s2 = np.asarray(market.sigma2(t), dtype=float) * np.ones_like(t)
    impact = -trapezoid(Q_i * (mu + market.a * others_rate), t)
    slippage = market.b * trapezoid(q_i * q_i, t)
    terminal = beta_of(agent, market) * Q_i[-1] ** 2
    risk = agent.lam * trapezoid(s2 * Q_i * Q_i, t)
    const = 0.5 * market.a * Q_i[0] ** 2
    total = impact + slippage + terminal + risk + const
    return CostBreakdown(float(total), float(impact), float(slippage), float(terminal),
                         float(risk), float(const))


def expected_cost(agent_index: int, trajectories: TrajectorySet, market: MarketParams,
                  agents: Sequence[AgentParams], include_own_impact: bool = False) -> CostBreakdown:
    """Expected implementation shortfall plus risk for one agent.

    Uses the integrated-by-parts form in which the agent's own permanent
    impact appears only through ``a Q_0^2 / 2`` and ``beta_i = alpha_i - a/2``;
    the opponents enter the impact integral.  ``include_own_impact=True``
    also puts the agent's own rate in that integral, which double counts the
    own impact already folded into ``beta_i``.  Quadrature is trapezoidal.
    """
    require_deterministic(market)
    i = agent_index
    rates = trajectories.q if include_own_impact else np.delete(trajectories.q, i, axis=0)
    others = rates.sum(axis=0)
    return cost_of_paths(i, trajectories.Q[i], trajectories.q[i], others, market, agents[i],
                         trajectories.grid)


def best_response(agent_index: int, opponents, market: MarketParams,
                  agents: Sequence[AgentParams], grid: TimeGrid):
    """Optimal ``(Q, q)`` of one agent against fixed opponent rate paths."""
    return optimal_trajectory(agents[agent_index], market, grid, opponents)


@dataclass(frozen=True)
class FixedPointResult:
    trajectories: TrajectorySet
    iterations: int
    residual: float
    residuals: list


def fixed_point_iterate(market: MarketParams, agents: Sequence[AgentParams], grid: TimeGrid,
                        max_iter: int = 200, tol: float = 1e-8,
                        initial: Optional[np.ndarray] = None) -> FixedPointResult:
    """Simultaneous (Jacobi) best-response iteration.

    The starting point is every agent's best response to ``initial``
    (default: idle opponents); each later sweep counts as one iteration.
    Stops when the sup-norm change in the rate paths drops below ``tol``.
    """
    n = len(agents)
    rates = np.zeros((n, grid.n_steps + 1)) if initial is None else np.array(initial, dtype=float)

    def sweep(rates):
        Q_new = np.empty_like(rates)
        q_new = np.empty_like(rates)
        for i in range(n):
            Q_new[i], q_new[i] = best_response(i, np.delete(rates, i, axis=0), market, agents, grid)
        return Q_new, q_new

    Q, q = sweep(rates)
    residuals = []
    for it in range(1, max_iter + 1):
        Q_next, q_next = sweep(q)
        residuals.append(float(np.max(np.abs(q_next - q))))
        Q, q = Q_next, q_next
        if not np.isfinite(residuals[-1]):
            break
        if residuals[-1] < tol:
            traj = TrajectorySet(grid, Q, q, "fixed_point",
                                 meta={"iterations": it, "residual": residuals[-1]})
            return FixedPointResult(traj, it, residuals[-1], residuals)
    raise NoConvergence(f"best-response iteration did not settle in {max_iter} sweeps", residuals)


# ---------------------------------------------------------------------------
# Deviation test
# ---------------------------------------------------------------------------


def tent_basis(grid: TimeGrid, basis_size: int = 10) -> np.ndarray:
    """Unit-height hat functions centred at equally spaced interior nodes.

    Centres and support ends are grid nodes, so trapezoidal integration of
    each hat is exact.
    """
    N = grid.n_steps
    width = max(1, N // (basis_size + 1))
    centres = [int(round((k + 1) * N / (basis_size + 1))) for k in range(basis_size)]
    idx = np.arange(N + 1)
    return np.array([np.clip(1.0 - np.abs(idx - c) / width, 0.0, None) for c in centres])


@dataclass
class AgentDeviation:
    agent: int
    min_delta: float
    curvatures: list
    min_curvature: float
    passed: bool


@dataclass
class DeviationReport:
    agents: list = field(default_factory=list)
    epsilons: tuple = ()
    basis_size: int = 0
    tolerance: float = 0.0

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.agents)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "epsilons": list(self.epsilons),
            "basis_size": self.basis_size,
            "tolerance": self.tolerance,
            "agents": [asdict(a) for a in self.agents],
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def deviation_test(trajectories: TrajectorySet, market: MarketParams, agents: Sequence[AgentParams],
                   epsilons: Sequence[float] = (1e-2, -1e-2), basis_size: int = 10,
                   tolerance: float = 1e-8) -> DeviationReport:
    """Perturb each agent's rate by ``eps * phi_k`` with opponents held fixed.

    An agent passes when every cost change is at least ``-tolerance`` and the
    fitted curvature ``c`` in ``delta ~ c eps^2`` is nonnegative.  Failures
    are reported, never raised.
    """
    grid = trajectories.grid
    basis = tent_basis(grid, basis_size)
    shifts = cumulative_trapezoid(basis, grid.nodes, axis=1, initial=0.0)
    eps = np.asarray(epsilons, dtype=float)
    report = DeviationReport(epsilons=tuple(eps.tolist()), basis_size=basis_size, tolerance=tolerance)
    for i, agent in enumerate(agents):
        others = np.delete(trajectories.q, i, axis=0).sum(axis=0)
        Q_i, q_i = trajectories.Q[i], trajectories.q[i]
        base = cost_of_paths(i, Q_i, q_i, others, market, agent, grid).total
        min_delta = np.inf
        curvatures = []
        for phi, shift in zip(basis, shifts):
            deltas = np.array([
                cost_of_paths(i, Q_i + e * shift, q_i + e * phi, others, market, agent, grid).total - base
                for e in eps
            ])
            min_delta = min(min_delta, float(deltas.min()))
            denom = float(np.sum(eps**4))
            curvatures.append(float(np.sum(deltas * eps**2) / denom) if denom > 0 else 0.0)
        min_curv = min(curvatures) if curvatures else 0.0
        if not eps.any():
            ok = min_delta >= -tolerance
        else:
            ok = min_delta >= -tolerance and min_curv >= 0.0
        report.agents.append(AgentDeviation(i, min_delta, curvatures, min_curv, bool(ok)))
    return report
