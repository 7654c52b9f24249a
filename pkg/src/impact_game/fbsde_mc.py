"""Regression Monte Carlo for the Nash system with a Markovian volatility factor.

The equilibrium system is linear,

    Q_{k+1} = Q_k + q_k dt,                       q_N = -g * Q_N,
    q_k     = E_k[q_{k+1}] + dt * (D_k Q_{k+1} + K q_k + c_k),

with ``D_k = -diag(lambda_i) sigma(X_k)^2 / b``, ``K`` the interaction matrix
and ``c_k = w mu(X_k) / 2b``.  The rate is represented by a decoupling field
``q_k = u_k(X_k, Q_k)``, a polynomial in the factor and the inventories fitted
by least squares.  Each Picard iteration rolls the inventories forward with
the current field, then refits the field backward.  The one-step coupling
through ``Q_{k+1}`` is solved implicitly (the field's Q-Jacobian is
regressed alongside its value); an explicit lag would be unstable whenever
``dt * beta / b`` exceeds one.

Inventories start from an antithetic cloud around ``Q_0`` so the regression
sees spread in every inventory direction; the field is affine in ``Q`` so the
cloud average follows the path started at ``Q_0``.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (AssumptionViolated, DegenerateRegression, NoConvergence)
from .model import (AgentParams, Constant, FactorDriven, MarketParams,
                    TimeGrid, TrajectorySet, Verdict, beta_of,
                    initial_inventories, validate)

RIDGE = 1e-10


# ---------------------------------------------------------------------------
# Factor model
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FactorModel:
    """One-factor model: ``dX = speed (level - X) dt + vol_of_vol dW^1``.

    ``sigma(x) = clip(x, floor, cap)`` and
    ``mu(x) = mu_base + mu_slope (sigma(x) - level)``.  ``kind="constant"``
    freezes ``X`` at ``x0``.
    """

    kind: str = "constant"
    x0: float = 0.2
    level: float = 0.2
    speed: float = 0.0
    vol_of_vol: float = 0.0
    floor: float = 0.0
    cap: float = np.inf
    mu_base: float = 0.0
    mu_slope: float = 0.0
    brownian_dims: int = 1

    def __post_init__(self):
        if self.kind not in ("constant", "mean_reverting"):
            raise ValueError(f"unknown factor kind {self.kind!r}")
        if self.floor < 0 or self.cap < self.floor:
            raise ValueError("need 0 <= floor <= cap")
        if self.brownian_dims < 1:
            raise ValueError("need at least one Brownian dimension")

    @property
    def is_random(self) -> bool:
        return self.kind == "mean_reverting" and self.vol_of_vol > 0

    def sigma(self, x):
        return np.clip(x, self.floor, self.cap)

    def mu(self, x):
        return self.mu_base + self.mu_slope * (self.sigma(x) - self.level)

    def sigma_range(self):
        if self.kind == "constant":
            s = float(self.sigma(self.x0))
            return s, s
        return self.floor, self.cap

    @classmethod
    def from_market(cls, market: MarketParams) -> "FactorModel":
        vol, drift = market.vol, market.drift
        if isinstance(vol, Constant):
            kw = dict(kind="constant", x0=vol.value, level=vol.value)
        elif isinstance(vol, FactorDriven):
            p = vol.p
            kind = p.get("kind", "mean_reverting")
            x0 = float(p["x0"])
            kw = dict(kind=kind, x0=x0, level=float(p.get("level", x0)),
                      speed=float(p.get("speed", 0.0)), vol_of_vol=float(p.get("vol_of_vol", 0.0)),
                      floor=float(p.get("floor", 0.0)), cap=float(p.get("cap", np.inf)),
                      brownian_dims=int(p.get("brownian_dims", 1)))
        else:
            raise AssumptionViolated("Monte Carlo backend supports constant or factor-driven volatility")
        if isinstance(drift, Constant):
            kw.update(mu_base=drift.value)
        elif isinstance(drift, FactorDriven):
            p = drift.p
            kw.update(mu_base=float(p.get("base", 0.0)), mu_slope=float(p.get("slope", 0.0)))
        else:
            raise AssumptionViolated("Monte Carlo backend supports constant or factor-driven drift")
        return cls(**kw)


@dataclass(frozen=True)
class FactorPaths:
    X: np.ndarray    # (paths, nodes)
    dW: np.ndarray   # (paths, steps, d)


def simulate_factors(model: FactorModel, grid: TimeGrid, n_paths: int, seed: int) -> FactorPaths:
    """Euler-Maruyama factor paths; path ``j`` draws from the stream seeded by ``(seed, j)``."""
    if n_paths < 1:
        raise ValueError("need at least one path")
    N, dt, d = grid.n_steps, grid.dt, model.brownian_dims
    dW = np.empty((n_paths, N, d))
    for j in range(n_paths):
        dW[j] = np.random.default_rng([seed, j]).standard_normal((N, d))
    dW *= np.sqrt(dt)
    X = np.empty((n_paths, N + 1))
    X[:, 0] = model.x0
    if model.kind == "constant":
        X[:, 1:] = model.x0
    else:
        for k in range(N):
            X[:, k + 1] = (X[:, k] + model.speed * (model.level - X[:, k]) * dt
                           + model.vol_of_vol * dW[:, k, 0])
    return FactorPaths(X, dW)


# ---------------------------------------------------------------------------
# Polynomial regression
# ---------------------------------------------------------------------------


class PolyBasis:
    """Monomials of total degree <= ``degree`` in standardised variables."""

    def __init__(self, n_vars: int, degree: int):
        exps = [e for e in itertools.product(range(degree + 1), repeat=n_vars) if sum(e) <= degree]
        exps.sort(key=lambda e: (sum(e), tuple(-x for x in e)))
        self.exponents = np.array(exps, dtype=int).reshape(len(exps), n_vars)
        self.degree = degree

    def __len__(self):
        return self.exponents.shape[0]

    def _powers(self, z):
        # (samples, vars, degree+1)
        return z[:, :, None] ** np.arange(self.degree + 1)

    def design(self, z: np.ndarray) -> np.ndarray:
        pw = self._powers(z)
        cols = np.ones((z.shape[0], len(self)))
        for v in range(z.shape[1]):
            cols *= pw[:, v, self.exponents[:, v]]
        return cols

    def gradient(self, z: np.ndarray, var: int) -> np.ndarray:
        """Derivative of every basis function with respect to ``z[:, var]``."""
        pw = self._powers(z)
        e = self.exponents
        cols = np.ones((z.shape[0], len(self)))
        for v in range(z.shape[1]):
            if v == var:
                cols *= e[:, v] * pw[:, v, np.maximum(e[:, v] - 1, 0)]
            else:
                cols *= pw[:, v, e[:, v]]
        return cols


class Regressor:
    """Least squares on a fixed design with ridge ``RIDGE``; raises on rank deficiency."""

    def __init__(self, design: np.ndarray, ridge: float = RIDGE, rank_tol: float = 1e-12):
        m = design.shape[0]
        gram = design.T @ design / m
        eig = np.linalg.eigvalsh(gram)
        if eig[0] <= rank_tol * eig[-1]:
            raise DegenerateRegression(
                f"basis is rank deficient (eigenvalue ratio {eig[0] / eig[-1]:.2e}); "
                "lower basis_degree or increase inventory dispersion")
        self.design = design
        self._factor = np.linalg.cholesky(gram + ridge * np.eye(gram.shape[0]))
        self._m = m

    def coefficients(self, y: np.ndarray) -> np.ndarray:
        rhs = self.design.T @ y / self._m
        tmp = np.linalg.solve(self._factor, rhs)
        return np.linalg.solve(self._factor.T, tmp)

    def fit(self, y: np.ndarray) -> np.ndarray:
        return self.design @ self.coefficients(y)


@dataclass
class FieldStep:
    """Fitted decoupling field at one time step."""

    shift: np.ndarray
    scale: np.ndarray
    coef: np.ndarray       # (basis, dim)
    basis: PolyBasis
    use_factor: bool

    def _z(self, x, Q):
        return (_variables(x, Q, self.use_factor) - self.shift) / self.scale

    def value(self, x, Q):
        return self.basis.design(self._z(x, Q)) @ self.coef

    def jacobian(self, x, Q):
        z = self._z(x, Q)
        off = 1 if self.use_factor else 0
        dim = Q.shape[1]
        jac = np.empty((Q.shape[0], self.coef.shape[1], dim))
        for j in range(dim):
            jac[:, :, j] = (self.basis.gradient(z, off + j) @ self.coef) / self.scale[off + j]
        return jac


def _variables(x, Q, use_factor):
    return np.column_stack([x, Q]) if use_factor else Q


class _StepDesign:
    """Standardised regression design at one step.

    The factor is dropped where it has no spread across paths (always at
    ``t = 0``, and everywhere for a frozen factor).
    """

    def __init__(self, x, Q, bases, random_factor, ridge):
        self.use_factor = bool(random_factor and np.ptp(x) > 0)
        v = _variables(x, Q, self.use_factor)
        self.shift = v.mean(axis=0)
        scale = v.std(axis=0)
        scale[scale == 0] = 1.0
        self.scale = scale
        self.basis = bases[self.use_factor]
        self.reg = Regressor(self.basis.design((v - self.shift) / self.scale), ridge)

    def field(self, y) -> FieldStep:
        return FieldStep(self.shift, self.scale, self.reg.coefficients(y), self.basis, self.use_factor)


# ---------------------------------------------------------------------------
# Linear FBSDE description
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearSystem:
    """``q = -g Q_T + int (D Q + K q + c) ds + int Z dW`` with
    ``D = -diag(risk) sigma^2`` and ``c = weight * mu / 2b``."""

    g: np.ndarray
    risk: np.ndarray
    K: np.ndarray
    weight: np.ndarray
    b: float

    @property
    def dim(self) -> int:
        return self.g.size

    def driver(self, s2, mu, Q_next, q):
        """Scheme driver ``D Q_{k+1} + K q_k + c``; ``s2``, ``mu`` per path."""
        return (-(s2[:, None] * self.risk) * Q_next + q @ self.K.T
                + (mu[:, None] / (2.0 * self.b)) * self.weight)


def nash_system(market: MarketParams, agents: Sequence[AgentParams]) -> LinearSystem:
    n = len(agents)
    b = market.b
    betas = np.array([beta_of(ag, market) for ag in agents])
    lam = np.array([ag.lam for ag in agents])
    K = (market.a / (2.0 * b)) * (np.ones((n, n)) - np.eye(n))
    return LinearSystem(betas / b, lam / b, K, np.ones(n), b)


def aggregate_system(market: MarketParams, alpha: float, lam: float, n: int) -> LinearSystem:
    b = market.b
    beta = alpha - market.a / 2.0
    return LinearSystem(np.array([beta / b]), np.array([lam / b]),
                        np.array([[(n - 1) * market.a / (2.0 * b)]]), np.array([float(n)]), b)


# ---------------------------------------------------------------------------
# Solver
# ---------------------------------------------------------------------------


@dataclass
class McFbsdeSolution:
    grid: TimeGrid
    X: np.ndarray            # (paths, nodes)
    dW: np.ndarray           # (paths, steps, d)
    Q: np.ndarray            # (paths, nodes, dim)
    q: np.ndarray            # (paths, nodes, dim)
    Z: np.ndarray            # (paths, steps, dim, d)
    picard_iterations: int
    final_residual: float
    residual_history: list
    system: LinearSystem
    model: FactorModel
    seed: int
    meta: dict = field(default_factory=dict)

    def sigma2(self):
        return self.model.sigma(self.X) ** 2

    def mu(self):
        return self.model.mu(self.X)

    def mean_trajectories(self, provenance: str = "mc") -> TrajectorySet:
        return TrajectorySet(self.grid, self.Q.mean(axis=0).T, self.q.mean(axis=0).T, provenance,
                             meta={"picard_iterations": self.picard_iterations,
                                   "final_residual": self.final_residual,
                                   "n_paths": self.Q.shape[0], "seed": self.seed})


def _forward(fields, system, x, Q0, grid):
    paths, N = x.shape[0], grid.n_steps
    Q = np.empty((paths, N + 1, system.dim))
    q = np.empty_like(Q)
    Q[:, 0] = Q0
    for k in range(N):
        q[:, k] = 0.0 if fields is None else fields[k].value(x[:, k], Q[:, k])
        Q[:, k + 1] = Q[:, k] + q[:, k] * grid.dt
    q[:, N] = -system.g * Q[:, N]
    return Q, q


def _backward(Q, x, s2, mu, bases, system, grid, random_factor, ridge):
    paths, N, dim = Q.shape[0], grid.n_steps, system.dim
    dt = grid.dt
    eye = np.eye(dim)
    fields = [None] * N
    for k in range(N - 1, -1, -1):
        Qk = Q[:, k]
        design = _StepDesign(x[:, k], Qk, bases, random_factor, ridge)
        # next-step field evaluated at (X_{k+1}, Q_k), and its Q-Jacobian
        if k == N - 1:
            cond_val = -system.g * Qk
            cond_jac = np.broadcast_to(-np.diag(system.g), (paths, dim, dim))
        else:
            nxt = fields[k + 1]
            val = nxt.value(x[:, k + 1], Qk)
            jac = nxt.jacobian(x[:, k + 1], Qk)
            stacked = design.reg.fit(np.concatenate([val, jac.reshape(paths, dim * dim)], axis=1))
            cond_val = stacked[:, :dim]
            cond_jac = stacked[:, dim:].reshape(paths, dim, dim)
        risk = s2[:, k, None] * system.risk            # -(D_k) diagonal
        lhs = eye - dt * cond_jac - dt * system.K
        lhs = lhs + (dt * dt) * risk[:, :, None] * eye
        rhs = cond_val - dt * risk * Qk + dt * (mu[:, k, None] / (2.0 * system.b)) * system.weight
        qk = np.linalg.solve(lhs, rhs[:, :, None])[:, :, 0]
        fields[k] = design.field(qk)
    return fields


def _recover_z(Q, q, x, dW, grid, bases, random_factor, ridge):
    """``Z_k = -E_k[dM_k dW_k] / dt`` with ``dM_k = q_{k+1} - E_k q_{k+1}``."""
    paths, N, dim = Q.shape[0], grid.n_steps, Q.shape[2]
    d = dW.shape[2]
    Z = np.empty((paths, N, dim, d))
    for k in range(N):
        reg = _StepDesign(x[:, k], Q[:, k], bases, random_factor, ridge).reg
        q_next = q[:, k + 1]
        dM = q_next - reg.fit(q_next)
        prod = (dM[:, :, None] * dW[:, k, None, :]).reshape(paths, dim * d)
        Z[:, k] = -(reg.fit(prod) / grid.dt).reshape(paths, dim, d)
    return Z


def solve_linear_system(system: LinearSystem, Q0, model: FactorModel, grid: TimeGrid,
                        n_paths: int = 10_000, seed: int = 0, basis_degree: int = 2,
                        max_picard: int = 50, tol: float = 1e-4,
                        dispersion: Optional[float] = None, ridge: float = RIDGE) -> McFbsdeSolution:
    """Picard iteration on the decoupling field for a generic linear system."""
    if n_paths < 2:
        raise ValueError("need at least two paths")
    Q0 = np.atleast_1d(np.asarray(Q0, dtype=float))
    dim = system.dim
    paths = simulate_factors(model, grid, n_paths, seed)
    x = paths.X
    s2, mu = model.sigma(x) ** 2, model.mu(x)
    random_factor = model.is_random
    bases = {False: PolyBasis(dim, basis_degree), True: PolyBasis(dim + 1, basis_degree)}

    spread = 0.1 * max(1.0, float(np.max(np.abs(Q0)))) if dispersion is None else dispersion
    xi = np.random.default_rng([seed, 2**31 - 1]).standard_normal((n_paths // 2, dim)) * spread
    cloud = np.zeros((n_paths, dim))
    cloud[0:2 * (n_paths // 2):2] = xi
    cloud[1:2 * (n_paths // 2):2] = -xi
    start = Q0 + cloud

    fields = None
    Q, q = _forward(fields, system, x, start, grid)
    history = []
    for it in range(1, max_picard + 1):
        fields = _backward(Q, x, s2, mu, bases, system, grid, random_factor, ridge)
        Q_new, q_new = _forward(fields, system, x, start, grid)
        diff = np.sqrt(np.mean((q_new - q) ** 2, axis=0)).max()
        size = np.sqrt(np.mean(q_new ** 2, axis=0)).max()
        history.append(float(diff / size) if size > 1e-12 else float(diff))
        Q, q = Q_new, q_new
        if history[-1] < tol:
            break
    else:
        raise NoConvergence(f"Picard iteration did not settle in {max_picard} sweeps", history)
    Z = _recover_z(Q, q, x, paths.dW, grid, bases, random_factor, ridge)
    return McFbsdeSolution(grid, x, paths.dW, Q, q, Z, it, history[-1], history, system, model, seed,
                           meta={"basis_degree": basis_degree, "dispersion": spread})


def picard_solve(market: MarketParams, agents: Sequence[AgentParams], grid: TimeGrid,
                 model: Optional[FactorModel] = None, n_paths: int = 10_000, seed: int = 0,
                 basis_degree: int = 2, max_picard: int = 50, tol: float = 1e-4,
                 dispersion: Optional[float] = None, min_paths: int = 1000) -> McFbsdeSolution:
    """Monte Carlo solution of the n-agent equilibrium system."""
    if n_paths < min_paths:
        raise ValueError(f"need at least {min_paths} paths")
    if validate(market, agents).verdict is Verdict.ASSUMPTION_VIOLATED:
        raise AssumptionViolated("some agent has beta = alpha - a/2 < 0")
    model = model or FactorModel.from_market(market)
    return solve_linear_system(nash_system(market, agents), initial_inventories(agents), model, grid,
                               n_paths, seed, basis_degree, max_picard, tol, dispersion)


def picard_solve_aggregate(market: MarketParams, alpha: float, lam: float, q0_total: float, n: int,
                           grid: TimeGrid, model: Optional[FactorModel] = None,
                           n_paths: int = 10_000, seed: int = 0, basis_degree: int = 2,
                           max_picard: int = 50, tol: float = 1e-4,
                           dispersion: Optional[float] = None) -> McFbsdeSolution:
    """Monte Carlo solution of the scalar system for the total of similar agents."""
    if alpha - market.a / 2.0 < 0 or lam < 0:
        raise AssumptionViolated("aggregation needs beta >= 0 and lambda >= 0")
    model = model or FactorModel.from_market(market)
    return solve_linear_system(aggregate_system(market, alpha, lam, n), [q0_total], model, grid,
                               n_paths, seed, basis_degree, max_picard, tol, dispersion)


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ResidualStats:
    mean: float
    p95: float
    max: float


def representation_defect(solution: McFbsdeSolution) -> np.ndarray:
    """Per path, step and component: ``q_k`` minus terminal + driver sum + ``sum Z dW``."""
    sysm, grid = solution.system, solution.grid
    Q, q, Z, dW = solution.Q, solution.q, solution.Z, solution.dW
    paths, N, dim = Q.shape[0], grid.n_steps, sysm.dim
    s2, mu = solution.sigma2(), solution.mu()
    incr = np.empty((paths, N, dim))
    for k in range(N):
        f = sysm.driver(s2[:, k], mu[:, k], Q[:, k + 1], q[:, k])
        incr[:, k] = grid.dt * f + np.einsum("pid,pd->pi", Z[:, k], dW[:, k])
    tail = np.cumsum(incr[:, ::-1], axis=1)[:, ::-1]      # sum over l >= k
    terminal = -sysm.g * Q[:, N]
    return q[:, :N] - (terminal[:, None, :] + tail)


def fbsde_residual(solution: McFbsdeSolution, market=None, agents=None) -> list:
    """Mean, 95th percentile and max of the absolute defect, one entry per component."""
    defect = np.abs(representation_defect(solution))
    return [ResidualStats(float(defect[..., i].mean()), float(np.percentile(defect[..., i], 95)),
                          float(defect[..., i].max())) for i in range(defect.shape[2])]


@dataclass(frozen=True)
class MartingaleCheck:
    step_means: np.ndarray    # (steps, dim)
    step_errors: np.ndarray   # standard errors, same shape
    total_mean: np.ndarray    # (dim,) for sum_k Z_k dW_k
    total_error: np.ndarray
    passed: bool


def martingale_check(solution: McFbsdeSolution, n_se: float = 3.0, atol: float = 1e-10) -> MartingaleCheck:
    """Is the represented increment ``Z_k dW_k`` centred?

    Passes when the summed increment's sample mean is within ``n_se``
    standard errors (plus ``atol`` for runs where everything is at rounding
    level) for every component.  Per-step statistics are reported as well.
    """
    incr = np.einsum("pkid,pkd->pki", solution.Z, solution.dW)
    m = incr.shape[0]
    step_means = incr.mean(axis=0)
    step_errors = incr.std(axis=0, ddof=1) / np.sqrt(m)
    total = incr.sum(axis=1)
    total_mean = total.mean(axis=0)
    total_error = total.std(axis=0, ddof=1) / np.sqrt(m)
    ok = bool(np.all(np.abs(total_mean) <= n_se * total_error + atol))
    return MartingaleCheck(step_means, step_errors, total_mean, total_error, ok)


def dump_csv(solution: McFbsdeSolution, path, max_paths: Optional[int] = None) -> None:
    """Long-format per-path dump: ``path, k, t, X, Q_i..., q_i...``."""
    paths = solution.Q.shape[0] if max_paths is None else min(max_paths, solution.Q.shape[0])
    dim = solution.system.dim
    t = solution.grid.nodes
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "k", "t", "X"] + [f"Q_{i + 1}" for i in range(dim)]
                   + [f"q_{i + 1}" for i in range(dim)])
        for j in range(paths):
            for k in range(t.size):
                w.writerow([j, k, repr(float(t[k])), repr(float(solution.X[j, k]))]
                           + [repr(float(v)) for v in solution.Q[j, k]]
                           + [repr(float(v)) for v in solution.q[j, k]])
