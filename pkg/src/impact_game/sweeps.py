"""One-parameter sweeps around the baseline scenario, with qualitative checks.

The ten presets vary drift, volatility, permanent impact, slippage, the
terminal and running risk aversions (jointly and for agent 1 alone), and
agent 1's initial inventory (also against two arbitrageurs starting flat).
The value grids are our own choices bracketing the baseline; only orderings
and sign patterns are asserted, never point values.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import config as cfg
from .backends import run_backend, thread_cap
from .model import TrajectorySet


@dataclass(frozen=True)
class Assertion:
    name: str
    statement: str
    check: Callable[[list, list], tuple]   # (values, trajectories) -> (passed, detail)


@dataclass
class SweepSpec:
    name: str
    base: dict
    parameter: str
    values: list
    backend: str = "closed_form"
    assertions: list = field(default_factory=list)
    out: Optional[Path] = None

    def __post_init__(self):
        if not self.values:
            raise cfg.ConfigError("sweep needs at least one value")
        cfg.set_path(self.base, self.parameter, self.values[0])  # resolvability


# ---------------------------------------------------------------------------
# helpers for the checks
# ---------------------------------------------------------------------------


def _at(tr: TrajectorySet, frac: float) -> np.ndarray:
    k = int(round(frac * tr.grid.n_steps))
    return tr.Q[:, k]


def _monotone(seq, increasing: bool, tol: float = 1e-12) -> bool:
    d = np.diff(np.asarray(seq, dtype=float))
    return bool(np.all(d >= -tol) if increasing else np.all(d <= tol))


def _sign_changes(x) -> int:
    s = np.sign(x[np.abs(x) > 1e-12])
    return int(np.count_nonzero(s[1:] != s[:-1]))


def _ordering(agent_slice, frac, increasing):
    def check(values, trajs):
        series = np.array([_at(tr, frac)[agent_slice] for tr in trajs])
        series = series.reshape(len(trajs), -1)
        ok = all(_monotone(series[:, i], increasing) for i in range(series.shape[1]))
        return ok, {"Q_at_%g_T" % frac: series.tolist()}
    return check


def _fig1_buying(values, trajs):
    last = trajs[int(np.argmax(values))]
    ok = bool(np.any(last.q[:, 0] > 0))
    return ok, {"q_at_0_for_largest_mu": last.q[:, 0].tolist()}


def _fig3_faster(values, trajs):
    rates = np.array([tr.q[:, 0] for tr in trajs])
    ok = all(_monotone(rates[:, i], increasing=False) for i in range(rates.shape[1]))
    return ok, {"q_at_0": rates.tolist()}


def _fig3_short(values, trajs):
    last = trajs[int(np.argmax(values))]
    q0 = last.Q[:, 0]
    small = int(np.argmin(q0))
    mins = last.Q.min(axis=1)
    ok = bool(mins[small] < 0 and int(np.argmin(mins)) == small)
    return ok, {"min_Q_for_largest_a": mins.tolist(), "smallest_agent": small + 1}


def _fig4_switch(values, trajs):
    first = trajs[int(np.argmin(values))]
    small = int(np.argmin(first.Q[:, 0]))
    changes = _sign_changes(first.q[small])
    return changes >= 1, {"smallest_agent": small + 1, "rate_sign_changes_at_smallest_b": changes}


def _fig10_small(values, trajs):
    tr = trajs[int(np.argmin(values))]
    arb = tr.q[1:]
    ok = bool(np.all(arb[:, 0] > 0) and all(_sign_changes(r) >= 1 for r in arb))
    return ok, {"arbitrageur_q_at_0": arb[:, 0].tolist(),
                "arbitrageur_rate_sign_changes": [_sign_changes(r) for r in arb]}


def _fig10_large(values, trajs):
    tr = trajs[int(np.argmax(values))]
    arbQ, arbq = tr.Q[1:], tr.q[1:]
    ok = bool(np.all(arbq[:, 0] < 0) and np.all(arbQ.min(axis=1) < 0)
              and all(_sign_changes(r) >= 1 for r in arbq))
    return ok, {"arbitrageur_q_at_0": arbq[:, 0].tolist(), "arbitrageur_min_Q": arbQ.min(axis=1).tolist()}


def _fig10_mild(values, trajs):
    i = int(np.argmax(values))
    tr = trajs[i]
    peak = float(np.max(np.abs(tr.Q[1:])))
    return peak < 0.1 * abs(values[i]), {"arbitrageur_peak_abs_Q": peak, "agent1_q0": values[i]}


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def _arbitrage_base():
    base = cfg.baseline_dict()
    base["agents"][1]["q0"] = 0.0
    base["agents"][2]["q0"] = 0.0
    return base


_PRESETS = {
    "sweep-fig1": ("market.mu", [0.0, 0.02, 0.05, 0.1], cfg.baseline_dict, [
        Assertion("slower_liquidation_with_drift",
                  "Q_i(T/2) is nondecreasing in mu for every agent: higher drift, slower liquidation",
                  _ordering(slice(None), 0.5, increasing=True)),
        Assertion("buying_at_high_drift",
                  "at the largest mu some agent starts by buying (q_i(0) > 0)", _fig1_buying),
    ]),
    "sweep-fig2": ("market.sigma", [0.1, 0.2, 0.4, 0.8], cfg.baseline_dict, [
        Assertion("faster_liquidation_with_volatility",
                  "Q_i(T/2) is nonincreasing in sigma for every agent",
                  _ordering(slice(None), 0.5, increasing=False)),
    ]),
    "sweep-fig3": ("market.a", [0.001, 0.01, 0.1, 0.3], cfg.baseline_dict, [
        Assertion("faster_start_with_impact",
                  "initial selling rate grows with a: q_i(0) nonincreasing in a for every agent",
                  _fig3_faster),
        Assertion("small_agent_shorts_at_high_impact",
                  "at the largest a the smallest-inventory agent goes short, and is the one going shortest",
                  _fig3_short),
    ]),
    "sweep-fig4": ("market.b", [0.001, 0.005, 0.01, 0.05], cfg.baseline_dict, [
        Assertion("small_agent_switches_at_low_slippage",
                  "at the smallest b the smallest-inventory agent's rate changes sign",
                  _fig4_switch),
    ]),
    "sweep-fig5": ("agents[*].alpha", [0.25, 0.5, 1.0, 2.0], cfg.baseline_dict, []),
    "sweep-fig6": ("agents[0].alpha", [0.1, 0.5, 1.0, 5.0], cfg.baseline_dict, []),
    "sweep-fig7": ("agents[*].lambda", [0.1, 0.5, 1.0, 2.0], cfg.baseline_dict, []),
    "sweep-fig8": ("agents[0].lambda", [0.1, 0.5, 1.0, 5.0], cfg.baseline_dict, []),
    "sweep-fig9": ("agents[0].q0", [0.5, 1.0, 2.0, 5.0], cfg.baseline_dict, []),
    "sweep-fig10": ("agents[0].q0", [0.1, 1.0, 5.0], _arbitrage_base, [
        Assertion("arbitrageurs_buy_first_when_small",
                  "for the smallest Q0_1 both arbitrageurs buy first (q(0) > 0) and later reverse",
                  _fig10_small),
        Assertion("arbitrageurs_short_first_when_large",
                  "for the largest Q0_1 both arbitrageurs sell first, go short, and later buy back",
                  _fig10_large),
        Assertion("arbitrageurs_not_aggressive",
                  "for the largest Q0_1 arbitrageur positions stay below 10% of agent 1's initial inventory",
                  _fig10_mild),
    ]),
}

PRESET_NAMES = tuple(_PRESETS)


def preset(name: str, backend: str = "closed_form") -> SweepSpec:
    if name not in _PRESETS:
        raise cfg.ConfigError(f"unknown sweep preset {name!r}")
    path, values, base, assertions = _PRESETS[name]
    return SweepSpec(name, base(), path, list(values), backend, list(assertions))


def load_spec(path) -> SweepSpec:
    """Sweep file: ``{"name", "base" (inline config or path), "parameter", "values", "backend"}``."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise cfg.ConfigError(f"cannot read sweep spec {path}: {exc}") from exc
    base = data.get("base", cfg.baseline_dict())
    if isinstance(base, str):
        base = json.loads((Path(path).parent / base).read_text())
    try:
        return SweepSpec(data.get("name", Path(path).stem), base, data["parameter"], list(data["values"]),
                         data.get("backend", "closed_form"))
    except KeyError as exc:
        raise cfg.ConfigError(f"sweep spec missing {exc}") from exc


@dataclass
class SweepResult:
    spec: SweepSpec
    trajectories: list
    assertions: list

    @property
    def passed(self) -> bool:
        return all(a["passed"] for a in self.assertions)

    def report(self) -> dict:
        return {
            "sweep": self.spec.name,
            "parameter": self.spec.parameter,
            "values": self.spec.values,
            "values_source": "preset choice bracketing the baseline scenario",
            "backend": self.spec.backend,
            "assertions": self.assertions,
            "all_passed": self.passed,
        }


def run_sweep(spec: SweepSpec, n_steps: Optional[int] = None, seed: Optional[int] = None) -> SweepResult:
    scenarios = [cfg.from_dict(cfg.set_path(spec.base, spec.parameter, v)) for v in spec.values]

    def solve(sc):
        return run_backend(sc, spec.backend, n_steps, seed).trajectories

    with ThreadPoolExecutor(max_workers=min(thread_cap(), len(scenarios))) as pool:
        trajs = list(pool.map(solve, scenarios))
    results = []
    for a in spec.assertions:
        ok, detail = a.check(spec.values, trajs)
        results.append({"name": a.name, "statement": a.statement, "passed": bool(ok), "detail": detail})
    result = SweepResult(spec, trajs, results)
    if spec.out is not None:
        write_sweep(result, spec.out)
    return result


def write_sweep(result: SweepResult, out) -> None:
    from .export import export_csv

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    spec = result.spec
    for i, tr in enumerate(result.trajectories):
        export_csv(tr, out / f"{spec.name}_value{i}.csv")
    with open(out / f"{spec.name}_long.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "agent", "t", "Q", "q"])
        for v, tr in zip(spec.values, result.trajectories):
            for i in range(tr.n_agents):
                for t, Q, q in zip(tr.grid.nodes, tr.Q[i], tr.q[i]):
                    w.writerow([repr(float(v)), i + 1, "%.17g" % t, "%.17g" % Q, "%.17g" % q])
    (out / f"{spec.name}_assertions.json").write_text(json.dumps(result.report(), indent=2) + "\n")
