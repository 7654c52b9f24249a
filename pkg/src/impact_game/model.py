"""Model parameters, time grids, trajectory containers and assumption checks."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import AssumptionViolated, GridMismatch


# ---------------------------------------------------------------------------
# Coefficient specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    value: float

    is_deterministic = True
    is_constant = True

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("coefficient value must be finite")

    def at(self, t):
        return np.full(np.shape(t), float(self.value)) if np.ndim(t) else float(self.value)

    def limit(self, t, side: str):
        return self.at(t)

    def sup_abs(self) -> float:
        return abs(self.value)

    def inf_abs(self) -> float:
        return abs(self.value)


@dataclass(frozen=True)
class PiecewiseTime:
    """Piecewise-constant in time.

    ``breakpoints[k]`` is the left end of piece ``k``; the first piece also
    covers ``t = breakpoints[0]`` and each later piece is open on the left,
    so ``t=[0, 0.5], v=[0.2, 0.4]`` means 0.2 on [0, 0.5] and 0.4 on (0.5, T].
    """

    breakpoints: tuple
    values: tuple

    is_deterministic = True
    is_constant = False

    def __post_init__(self):
        t = np.asarray(self.breakpoints, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise ValueError("piecewise spec needs equally long, nonempty t and v")
        if np.any(np.diff(t) <= 0):
            raise ValueError("piecewise breakpoints must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("piecewise values must be finite")
        object.__setattr__(self, "breakpoints", tuple(t.tolist()))
        object.__setattr__(self, "values", tuple(v.tolist()))

    def at(self, t):
        idx = np.searchsorted(self.breakpoints, t, side="left") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        out = np.asarray(self.values)[idx]
        return out if np.ndim(t) else float(out)

    def limit(self, t, side: str):
        """One-sided limit at ``t``; ``side`` is ``"left"`` or ``"right"``."""
        if side == "left":
            return self.at(t)
        idx = np.searchsorted(self.breakpoints, t, side="right") - 1
        idx = np.clip(idx, 0, len(self.values) - 1)
        out = np.asarray(self.values)[idx]
        return out if np.ndim(t) else float(out)

    def sup_abs(self) -> float:
        return float(np.max(np.abs(self.values)))

    def inf_abs(self) -> float:
        return float(np.min(np.abs(self.values)))


FACTOR_KINDS = ("constant", "mean_reverting")


@dataclass(frozen=True)
class FactorDriven:
    """Coefficient driven by a one-dimensional Markov factor ``X``.

    On the volatility slot the parameters describe the factor itself
    (``kind``, ``x0``, ``level``, ``speed``, ``vol_of_vol``, ``floor``, ``cap``)
    and ``sigma = clip(X, floor, cap)``.  On the drift slot the parameters are
    ``base`` and ``slope`` with ``mu = base + slope * (clip(X) - level)``.
    """

    params: tuple  # sorted (key, value) pairs; kept hashable

    is_deterministic = False
    is_constant = False

    @classmethod
    def from_mapping(cls, params: Mapping) -> "FactorDriven":
        return cls(tuple(sorted(params.items())))

    @property
    def p(self) -> dict:
        return dict(self.params)

    def at(self, t):
        raise AssumptionViolated("factor-driven coefficients have no deterministic path")

    def limit(self, t, side: str):
        return self.at(t)

    def sup_abs(self) -> float:
        p = self.p
        if "cap" in p:
            return max(abs(p["cap"]), abs(p.get("floor", 0.0)))
        return abs(p.get("base", 0.0)) + abs(p.get("slope", 0.0))

    def inf_abs(self) -> float:
        p = self.p
        if p.get("kind") == "constant":
            return abs(p["x0"])
        return max(p.get("floor", 0.0), 0.0)


CoefficientSpec = Union[Constant, PiecewiseTime, FactorDriven]


def as_coefficient(spec) -> CoefficientSpec:
    """Parse a number or a ``{"type": ...}`` mapping into a coefficient spec."""
    if isinstance(spec, (Constant, PiecewiseTime, FactorDriven)):
        return spec
    if isinstance(spec, (int, float)):
        return Constant(float(spec))
    if isinstance(spec, Mapping):
        kind = spec.get("type")
        if kind == "constant":
            return Constant(float(spec["value"]))
        if kind == "piecewise":
            return PiecewiseTime(tuple(spec["t"]), tuple(spec["v"]))
        if kind == "factor":
            params = {k: v for k, v in spec.items() if k != "type"}
            return FactorDriven.from_mapping(params)
    raise ValueError(f"cannot interpret coefficient spec {spec!r}")


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MarketParams:
    """Global market coefficients.

    ``s0`` is carried for completeness only: the expected cost does not
    depend on the initial price, so no solver reads it.
    """

    a: float
    b: float
    T: float
    drift: CoefficientSpec = Constant(0.0)
    vol: CoefficientSpec = Constant(0.0)
    s0: float = 0.0

    def __post_init__(self):
        if not (self.a >= 0 and self.b > 0 and self.T > 0):
            raise ValueError(f"need a >= 0, b > 0, T > 0 (got a={self.a}, b={self.b}, T={self.T})")
        object.__setattr__(self, "drift", as_coefficient(self.drift))
        object.__setattr__(self, "vol", as_coefficient(self.vol))
        if isinstance(self.vol, Constant) and self.vol.value < 0:
            raise ValueError("volatility must be nonnegative")
        if isinstance(self.vol, PiecewiseTime) and min(self.vol.values) < 0:
            raise ValueError("volatility must be nonnegative")

    @property
    def is_deterministic(self) -> bool:
        return self.drift.is_deterministic and self.vol.is_deterministic

    @property
    def is_constant(self) -> bool:
        return self.drift.is_constant and self.vol.is_constant

    def mu(self, t):
        return self.drift.at(t)

    def sigma2(self, t):
        return np.square(self.vol.at(t))

    def mu_limit(self, t, side: str):
        return self.drift.limit(t, side)

    def sigma2_limit(self, t, side: str):
        return np.square(self.vol.limit(t, side))

    def sigma2_sup(self) -> float:
        return self.vol.sup_abs() ** 2

    def sigma2_inf(self) -> float:
        return self.vol.inf_abs() ** 2

    def replace(self, **changes) -> "MarketParams":
        fields = dict(a=self.a, b=self.b, T=self.T, drift=self.drift, vol=self.vol, s0=self.s0)
        fields.update(changes)
        return MarketParams(**fields)


@dataclass(frozen=True)
class AgentParams:
    alpha: float
    lam: float
    q0: float

    def __post_init__(self):
        if self.alpha < 0 or self.lam < 0:
            raise ValueError("alpha and lambda must be nonnegative")
        if not np.isfinite(self.q0):
            raise ValueError("initial inventory must be finite")

    def beta(self, market: MarketParams) -> float:
        return beta_of(self, market)


def beta_of(agent: AgentParams, market: MarketParams) -> float:
    """Effective terminal penalty ``alpha_i - a/2``."""
    return agent.alpha - market.a / 2.0


def initial_inventories(agents: Sequence[AgentParams]) -> np.ndarray:
    return np.array([ag.q0 for ag in agents], dtype=float)


# ---------------------------------------------------------------------------
# Grids and trajectories
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n_steps: int

    @cached_property
    def nodes(self) -> np.ndarray:
        nodes = np.linspace(0.0, self.T, self.n_steps + 1)
        nodes.setflags(write=False)
        return nodes

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    def __len__(self) -> int:
        return self.n_steps + 1

    def index_of(self, t: float) -> int:
        """Index of the node equal to ``t``; raises if ``t`` is not a node."""
        from .errors import OffGridError

        k = int(round(t / self.dt))
        if 0 <= k <= self.n_steps and abs(self.nodes[k] - t) <= 1e-12 * max(1.0, self.T):
            return k
        raise OffGridError(f"t={t!r} is not a node of the grid")

    def check(self, *arrays) -> None:
        """Raise GridMismatch unless every array's last axis has one entry per node."""
        for arr in arrays:
            if arr is not None and np.shape(arr)[-1] != self.n_steps + 1:
                raise GridMismatch(
                    f"path of length {np.shape(arr)[-1]} on a grid with {self.n_steps + 1} nodes"
                )


def make_grid(T: float, n_steps: int = 1000) -> TimeGrid:
    if n_steps < 2:
        raise ValueError("a grid needs at least 2 steps")
    if not T > 0:
        raise ValueError("horizon must be positive")
    return TimeGrid(float(T), int(n_steps))


@dataclass(frozen=True)
class TrajectorySet:
    """Inventories ``Q`` and rates ``q``, each of shape (n_agents, n_nodes)."""

    grid: TimeGrid
    Q: np.ndarray
    q: np.ndarray
    provenance: str
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        q = np.atleast_2d(np.asarray(self.q, dtype=float))
        if Q.shape != q.shape:
            raise ValueError("Q and q must have the same shape")
        self.grid.check(Q)
        Q.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "q", q)

    @property
    def n_agents(self) -> int:
        return self.Q.shape[0]

    def sup_distance(self, other: "TrajectorySet") -> float:
        """Largest absolute deviation over both Q and q."""
        return float(max(np.max(np.abs(self.Q - other.Q)), np.max(np.abs(self.q - other.q))))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


class Verdict(str, enum.Enum):
    UNIQUE = "Unique"
    EXISTS_MAYBE_NON_UNIQUE = "ExistsMaybeNonUnique"
    ASSUMPTION_VIOLATED = "AssumptionViolated"


@dataclass(frozen=True)
class ValidationReport:
    betas: tuple
    beta_nonnegative: tuple
    beta_and_lambda_positive: tuple
    min_lambda_sigma2: tuple
    threshold: float
    uniqueness: tuple
    verdict: Verdict

    def as_dict(self) -> dict:
        return {
            "betas": list(self.betas),
            "beta_nonnegative": list(self.beta_nonnegative),
            "beta_and_lambda_positive": list(self.beta_and_lambda_positive),
            "min_lambda_sigma2": list(self.min_lambda_sigma2),
            "threshold": self.threshold,
            "uniqueness": list(self.uniqueness),
            "verdict": self.verdict.value,
        }


def validate(market: MarketParams, agents: Sequence[AgentParams], n: int | None = None) -> ValidationReport:
    """Check the standing assumptions and the sufficient uniqueness condition.

    The uniqueness condition is read uniformly in time:
    ``inf_t lambda_i sigma_t^2 > a^2 b (n-1) / 16`` for every agent.
    Never raises on bad parameters; the verdict carries the outcome.
    """
    n = len(agents) if n is None else n
    if n < 1 or len(agents) != n:
        raise ValueError("need n >= 1 agents and len(agents) == n")
    betas = tuple(beta_of(ag, market) for ag in agents)
    nonneg = tuple(b >= 0 for b in betas)
    positive = tuple(b > 0 and ag.lam > 0 for b, ag in zip(betas, agents))
    s2_inf = market.sigma2_inf()
    lam_s2 = tuple(ag.lam * s2_inf for ag in agents)
    threshold = market.a**2 * market.b * (n - 1) / 16.0
    unique = tuple(v > threshold for v in lam_s2)
    if not all(nonneg):
        verdict = Verdict.ASSUMPTION_VIOLATED
    elif all(positive) and all(unique):
        verdict = Verdict.UNIQUE
    else:
        verdict = Verdict.EXISTS_MAYBE_NON_UNIQUE
    return ValidationReport(betas, nonneg, positive, lam_s2, threshold, unique, verdict)


def require_nonnegative_betas(market: MarketParams, agents: Sequence[AgentParams]) -> np.ndarray:
    betas = np.array([beta_of(ag, market) for ag in agents])
    bad = np.flatnonzero(betas < 0)
    if bad.size:
        i = int(bad[0])
        raise AssumptionViolated(
            f"agent {i + 1}: beta = alpha - a/2 = {betas[i]:.6g} < 0 (alpha={agents[i].alpha}, a={market.a})"
        )
    return betas


def require_deterministic(market: MarketParams) -> None:
    if not market.is_deterministic:
        raise AssumptionViolated("this solver needs deterministic drift and volatility")
