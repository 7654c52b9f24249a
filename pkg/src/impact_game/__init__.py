"""Open-loop Nash equilibria of an n-agent liquidation game with Almgren-Chriss impact."""

from .errors import (AssumptionViolated, BlowUp, BoundsViolation, DegenerateRegression,
                     GridMismatch, IllConditioned, ImpactGameError, NoConvergence, OffGridError)
from .model import (AgentParams, Constant, FactorDriven, MarketParams, PiecewiseTime, TimeGrid,
                    TrajectorySet, ValidationReport, Verdict, make_grid, validate)

__all__ = [
    "AgentParams", "AssumptionViolated", "BlowUp", "BoundsViolation", "Constant",
    "DegenerateRegression", "FactorDriven", "GridMismatch", "IllConditioned", "ImpactGameError",
    "MarketParams", "NoConvergence", "OffGridError", "PiecewiseTime", "TimeGrid", "TrajectorySet",
    "ValidationReport", "Verdict", "make_grid", "validate",
]

__version__ = "0.1.0"
