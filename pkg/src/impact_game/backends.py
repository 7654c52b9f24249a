"""Uniform entry point over the four equilibrium backends."""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Optional

from . import equilibrium_check, fbsde_mc, nash_closed_form, nash_riccati
from .config import Scenario
from .model import TrajectorySet

BACKENDS = ("closed_form", "riccati", "fixed_point", "mc")


def thread_cap() -> int:
    """Worker count: ``IMPACT_GAME_THREADS`` if set, else the CPU count."""
    raw = os.environ.get("IMPACT_GAME_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


@dataclass
class BackendResult:
    trajectories: TrajectorySet
    mc: Optional[fbsde_mc.McFbsdeSolution] = None
    iterations: Optional[int] = None


def run_backend(scenario: Scenario, backend: str, n_steps: Optional[int] = None,
                seed: Optional[int] = None) -> BackendResult:
    market, agents = scenario.market, scenario.agents
    if backend == "closed_form":
        return BackendResult(nash_closed_form.solve(market, agents, scenario.grid(n_steps)))
    if backend == "riccati":
        return BackendResult(nash_riccati.solve(market, agents, scenario.grid(n_steps)))
    if backend == "fixed_point":
        res = equilibrium_check.fixed_point_iterate(market, agents, scenario.grid(n_steps))
        return BackendResult(res.trajectories, iterations=res.iterations)
    if backend == "mc":
        mc = scenario.mc
        grid = scenario.grid(n_steps or int(mc["n_steps"]))
        sol = fbsde_mc.picard_solve(market, agents, grid, n_paths=int(mc["n_paths"]),
                                    seed=scenario.seed if seed is None else seed,
                                    basis_degree=int(mc["basis_degree"]),
                                    max_picard=int(mc["max_picard"]), tol=float(mc["tol"]))
        return BackendResult(sol.mean_trajectories(), mc=sol, iterations=sol.picard_iterations)
    raise ValueError(f"unknown backend {backend!r}; choose from {', '.join(BACKENDS)}")
