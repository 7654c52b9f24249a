"""Scenario files.

A scenario is JSON of the form::

    {
      "market": {"a": 0.01, "b": 0.01, "T": 1.0, "mu": 0.02, "sigma": 0.2, "s0": 100.0},
      "agents": [{"alpha": 1.0, "lambda": 1.0, "q0": 1.0}, ...],
      "grid": {"n_steps": 1000},
      "seed": 0,
      "mc": {"n_paths": 10000, "n_steps": 50, "basis_degree": 2}
    }

``mu`` and ``sigma`` take a number or a coefficient mapping
(``{"type": "piecewise", "t": [...], "v": [...]}`` or
``{"type": "factor", ...}``).
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .model import AgentParams, MarketParams, TimeGrid, make_grid

DEFAULT_STEPS = 1000
DEFAULT_MC = {"n_paths": 10_000, "n_steps": 50, "basis_degree": 2, "max_picard": 50, "tol": 1e-4}


class ConfigError(ValueError):
    pass


@dataclass
class Scenario:
    market: MarketParams
    agents: list
    n_steps: int = DEFAULT_STEPS
    seed: int = 0
    mc: dict = field(default_factory=lambda: dict(DEFAULT_MC))
    raw: dict = field(default_factory=dict, repr=False)

    def grid(self, n_steps: int | None = None) -> TimeGrid:
        return make_grid(self.market.T, n_steps or self.n_steps)


BASELINE = {
    "market": {"a": 0.01, "b": 0.01, "T": 1.0, "mu": 0.02, "sigma": 0.2, "s0": 100.0},
    "agents": [
        {"alpha": 1.0, "lambda": 1.0, "q0": 1.0},
        {"alpha": 0.5, "lambda": 0.5, "q0": 1.0},
        {"alpha": 0.25, "lambda": 0.25, "q0": 0.5},
    ],
    "grid": {"n_steps": DEFAULT_STEPS},
    "seed": 0,
}


def baseline_dict() -> dict:
    return copy.deepcopy(BASELINE)


def _require(mapping, key, where):
    if key not in mapping:
        raise ConfigError(f"missing {where}.{key}")
    return mapping[key]


def from_dict(data: dict) -> Scenario:
    try:
        m = _require(data, "market", "config")
        market = MarketParams(
            a=float(_require(m, "a", "market")), b=float(_require(m, "b", "market")),
            T=float(_require(m, "T", "market")), drift=m.get("mu", 0.0), vol=m.get("sigma", 0.0),
            s0=float(m.get("s0", 0.0)))
        raw_agents = _require(data, "agents", "config")
        if not raw_agents:
            raise ConfigError("need at least one agent")
        agents = [AgentParams(float(_require(ag, "alpha", f"agents[{i}]")),
                              float(_require(ag, "lambda", f"agents[{i}]")),
                              float(_require(ag, "q0", f"agents[{i}]")))
                  for i, ag in enumerate(raw_agents)]
        n_steps = int(data.get("grid", {}).get("n_steps", DEFAULT_STEPS))
        mc = dict(DEFAULT_MC)
        mc.update(data.get("mc", {}))
        return Scenario(market, agents, n_steps, int(data.get("seed", 0)), mc, copy.deepcopy(data))
    except (TypeError, KeyError) as exc:
        raise ConfigError(f"malformed config: {exc}") from exc


def load(path) -> Scenario:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return from_dict(data)


# ---------------------------------------------------------------------------
# Parameter paths: "market.mu", "agents[0].alpha", "agents[*].lambda"
# ---------------------------------------------------------------------------

_STEP = re.compile(r"([A-Za-z_][A-Za-z0-9_]*)(?:\[(\*|\d+)\])?")


def _parse_path(path: str):
    steps = []
    for part in path.split("."):
        m = _STEP.fullmatch(part)
        if not m:
            raise ConfigError(f"cannot parse parameter path {path!r}")
        steps.append((m.group(1), m.group(2)))
    return steps


def set_path(data: dict, path: str, value: Any) -> dict:
    """Copy of ``data`` with ``path`` set to ``value``; ``[*]`` hits every element."""
    out = copy.deepcopy(data)
    targets = [out]
    steps = _parse_path(path)
    for depth, (key, index) in enumerate(steps):
        last = depth == len(steps) - 1
        nxt = []
        for node in targets:
            if not isinstance(node, dict) or (key not in node and (index is not None or not last)):
                raise ConfigError(f"parameter path {path!r} does not resolve")
            if index is None:
                if last:
                    node[key] = value
                else:
                    nxt.append(node[key])
                continue
            seq = node[key]
            if not isinstance(seq, list):
                raise ConfigError(f"{key} in {path!r} is not a list")
            picked = range(len(seq)) if index == "*" else [int(index)]
            for j in picked:
                if j >= len(seq):
                    raise ConfigError(f"index {j} out of range in {path!r}")
                if last:
                    seq[j] = value
                else:
                    nxt.append(seq[j])
        targets = nxt
    return out
