"""Fixed-step RK4 on a time grid, with local step refinement.

Time-dependent inputs are passed as *stage arrays* of shape ``(N, 3, ...)``:
for step ``k`` over ``[t_k, t_{k+1}]`` entry 0 is the value at ``t_k`` seen
from inside the step (right limit), entry 1 the midpoint value and entry 2
the value at ``t_{k+1}`` seen from inside the step (left limit).  These are
exactly the points where the RK4 stages sit, and the one-sided limits keep
fourth order when a coefficient jumps at a node.  Node-only paths are lifted
either by cubic Hermite interpolation (when step-end slopes are known,
fourth-order accurate) or by a not-a-knot cubic spline.

The Riccati equations are stiff close to maturity when the terminal penalty
is large against ``b``.  ``refine`` splits each step of a uniform grid into
enough substeps to keep ``h * rate`` small, where ``rate`` is an a-priori
bound on the local linearised decay rate; away from maturity the split is
usually trivial.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import BlowUp
from .model import MarketParams, TimeGrid

LEFT, MID, RIGHT = 0, 1, 2

# largest h * rate accepted per RK4 step, and a cap on substeps per step
STEP_TARGET = 0.05
MAX_SUBSTEPS = 10_000


@dataclass(frozen=True)
class SubGrid:
    """Nonuniform refinement of a grid; ``coarse`` indexes the original nodes."""
    nodes: np.ndarray
    coarse: np.ndarray
    T: float

    @property
    def n_steps(self) -> int:
        return len(self.nodes) - 1

    @property
    def trivial(self) -> bool:
        return len(self.coarse) == len(self.nodes)

    def check(self, arr) -> None:
        if np.shape(arr)[-1] != len(self.nodes):
            raise ValueError(f"expected {len(self.nodes)} nodes on the last axis, got {np.shape(arr)[-1]}")

    def to_coarse(self, values: np.ndarray) -> np.ndarray:
        """Node values (axis 0 is time) on the original nodes."""
        return np.asarray(values)[self.coarse]

    def coarse_slopes(self, slopes: np.ndarray) -> np.ndarray:
        """Step-end slopes ``(N, 2, ...)`` of the original steps."""
        slopes = np.asarray(slopes)
        return np.stack([slopes[self.coarse[:-1], 0], slopes[self.coarse[1:] - 1, 1]], axis=1)


def riccati_rate(g, r, kappa: float = 0.0) -> Callable:
    """Bound on the decay rate of ``P' = r - kappa P - P^2`` with ``P_T = -g``.

    ``|P| <= g / (1 + g tau) + r tau`` at time to maturity ``tau`` when
    ``kappa = 0``; ``g`` and ``r`` may be arrays (one entry per agent), the
    largest is used.
    """
    g = np.atleast_1d(np.asarray(g, dtype=float))[:, None]
    r = np.atleast_1d(np.asarray(r, dtype=float))[:, None]

    def rate(tau):
        tau = np.asarray(tau, dtype=float)[None, :]
        return 2.0 * np.max(g / (1.0 + g * tau) + r * tau, axis=0) + abs(kappa)

    return rate


def refine(grid: TimeGrid, rate: Callable, target: float = STEP_TARGET) -> SubGrid:
    """Split each step so that ``h * rate <= target`` on it."""
    t = grid.nodes
    h = np.diff(t)
    r = rate(grid.T - t)
    step_rate = np.maximum(r[:-1], r[1:])
    m = np.clip(np.ceil(h * step_rate / target), 1, MAX_SUBSTEPS).astype(int)
    frac = np.arange(m.sum()) - np.repeat(np.cumsum(m) - m, m)
    starts = np.repeat(t[:-1], m) + np.repeat(h / m, m) * frac
    nodes = np.append(starts, t[-1])
    coarse = np.append(0, np.cumsum(m))
    # exact original nodes, free of the round-off in the fractions
    nodes[coarse] = t
    return SubGrid(nodes, coarse, grid.T)


def midpoints(grid) -> np.ndarray:
    t = grid.nodes
    return 0.5 * (t[:-1] + t[1:])


def node_stages(values: np.ndarray, mids: np.ndarray) -> np.ndarray:
    """Stage array from node values (axis 0 is time) and step midpoint values."""
    values = np.asarray(values, dtype=float)
    return np.stack([values[:-1], np.asarray(mids, dtype=float), values[1:]], axis=1)


def hermite_stages(values: np.ndarray, slopes: np.ndarray, grid) -> np.ndarray:
    """Lift node values to stages using step-end slopes of shape ``(N, 2, ...)``."""
    values = np.asarray(values, dtype=float)
    slopes = np.asarray(slopes, dtype=float)
    h = np.diff(grid.nodes).reshape((-1,) + (1,) * (values.ndim - 1))
    mid = 0.5 * (values[:-1] + values[1:]) + (h / 8.0) * (slopes[:, 0] - slopes[:, 1])
    return node_stages(values, mid)


def spline_stages(values: np.ndarray, grid, target=None) -> np.ndarray:
    """Lift node values (axis 0 is time) to stages with a cubic spline.

    With ``target`` given, the stages are those of the ``target`` grid.
    """
    values = np.asarray(values, dtype=float)
    if target is None or target is grid:
        if values.shape[0] >= 4:
            mid = CubicSpline(grid.nodes, values, axis=0)(midpoints(grid))
        else:
            mid = 0.5 * (values[:-1] + values[1:])
        return node_stages(values, mid)
    if values.shape[0] >= 4:
        spline = CubicSpline(grid.nodes, values, axis=0)
        return node_stages(spline(target.nodes), spline(midpoints(target)))
    on_nodes = np.interp(target.nodes, grid.nodes, values)
    return node_stages(on_nodes, 0.5 * (on_nodes[:-1] + on_nodes[1:]))


def rk4(rhs: Callable, y_start, grid, backward: bool = False,
        guard: Optional[Callable] = None):
    """Integrate ``y' = rhs(y, k, s)`` over the grid, ``(k, s)`` indexing a stage.

    Forward runs start at ``t_0``; backward runs start at ``t_N`` with the
    terminal value.  Returns ``(path, slopes)``: node values, and for each
    step the right-hand side at its two ends evaluated from inside the step,
    shape ``(N, 2, ...)``.  ``guard(y, k)`` is called after every step and may
    raise.
    """
    y = np.array(y_start, dtype=float)
    N = grid.n_steps
    steps = np.diff(grid.nodes)
    path = np.empty((N + 1,) + y.shape)
    slopes = np.empty((N, 2) + y.shape)
    if backward:
        path[N] = y
        for k in range(N - 1, -1, -1):
            h = steps[k]
            k1 = rhs(y, k, RIGHT)
            k2 = rhs(y - 0.5 * h * k1, k, MID)
            k3 = rhs(y - 0.5 * h * k2, k, MID)
            k4 = rhs(y - h * k3, k, LEFT)
            y = y - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            path[k] = y
            if guard is not None:
                guard(y, k)
            slopes[k, 1] = k1
            slopes[k, 0] = rhs(y, k, LEFT)
    else:
        path[0] = y
        for k in range(N):
            h = steps[k]
            k1 = rhs(y, k, LEFT)
            k2 = rhs(y + 0.5 * h * k1, k, MID)
            k3 = rhs(y + 0.5 * h * k2, k, MID)
            k4 = rhs(y + h * k3, k, RIGHT)
            y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            path[k + 1] = y
            if guard is not None:
                guard(y, k + 1)
            slopes[k, 0] = k1
            slopes[k, 1] = rhs(y, k, RIGHT)
    return path, slopes


def coefficient_stages(market: MarketParams, grid: TimeGrid):
    """Drift and squared volatility as stage arrays, one-sided at the step ends."""
    t = grid.nodes
    mid = midpoints(grid)

    def stages(f):
        return np.stack([np.broadcast_to(f(t[:-1], "right"), mid.shape),
                         np.broadcast_to(f(mid, "left"), mid.shape),
                         np.broadcast_to(f(t[1:], "left"), mid.shape)], axis=1).astype(float)

    return stages(market.mu_limit), stages(market.sigma2_limit)


@dataclass(frozen=True)
class ScalarDecoupling:
    """Solution of a scalar linear forward-backward system by decoupling.

    The system is ``Q' = q``, ``q' = r(t) Q - kappa q - h(t)``, ``q_T = -g Q_T``.
    With ``q = P Q + p`` this gives ``P' = r - kappa P - P^2``, ``P_T = -g``,
    ``p' = -(kappa + P) p - h``, ``p_T = 0``.
    """

    P: np.ndarray
    p: np.ndarray
    Q: np.ndarray
    q: np.ndarray


def scalar_decoupling(grid: TimeGrid, g: float, r_of: Callable, kappa: float, h_of: Callable,
                      Q0: float, guard: float = 1e3, r_sup: float = 0.0) -> ScalarDecoupling:
    """Solve on a refined grid and return node values on ``grid``.

    ``r_of`` and ``h_of`` map a grid to the stage arrays of ``r`` and ``h``;
    ``r_sup`` bounds ``r`` and only steers the refinement.
    """
    fine = refine(grid, riccati_rate(g, r_sup, kappa))
    r_stages = np.broadcast_to(np.asarray(r_of(fine), dtype=float), (fine.n_steps, 3))
    h_stages = np.broadcast_to(np.asarray(h_of(fine), dtype=float), (fine.n_steps, 3))
    nodes = fine.nodes

    def check(y, k):
        if not np.isfinite(y) or abs(y) > guard:
            raise BlowUp("scalar Riccati solution left the guard", nodes[k], abs(float(y)))

    check(-g, fine.n_steps)
    P, dP = rk4(lambda P, k, s: r_stages[k, s] - kappa * P - P * P, -g, fine, backward=True,
                guard=check)
    P_st = hermite_stages(P, dP, fine)
    p, dp = rk4(lambda p, k, s: -(kappa + P_st[k, s]) * p - h_stages[k, s], 0.0, fine, backward=True)
    p_st = hermite_stages(p, dp, fine)
    Q, _ = rk4(lambda Q, k, s: P_st[k, s] * Q + p_st[k, s], Q0, fine)
    q = P * Q + p
    return ScalarDecoupling(*(fine.to_coarse(x) for x in (P, p, Q, q)))
