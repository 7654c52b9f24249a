"""Command-line front end.

Exit codes: 0 success, 1 bad input or solver error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as cfg
from . import fbsde_mc, nash_closed_form, sweeps
from .backends import BACKENDS, run_backend
from .equilibrium_check import deviation_test
from .errors import ImpactGameError
from .export import export_csv, write_json
from .model import Verdict, validate

EXIT_OK, EXIT_ERROR, EXIT_VERIFY = 0, 1, 2

MC_REL_TOL = 0.02
MC_RESIDUAL_TOL = 5e-3


def _rel_sup(a, b) -> float:
    scale = max(float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b))) / scale


def mc_diagnostics(scenario: cfg.Scenario, sol: fbsde_mc.McFbsdeSolution) -> dict:
    res = fbsde_mc.fbsde_residual(sol)
    mart = fbsde_mc.martingale_check(sol)
    out = {
        "n_paths": int(sol.Q.shape[0]),
        "n_steps": sol.grid.n_steps,
        "seed": sol.seed,
        "picard_iterations": sol.picard_iterations,
        "picard_history": sol.residual_history,
        "residual": [{"agent": i + 1, "mean": r.mean, "p95": r.p95, "max": r.max} for i, r in enumerate(res)],
        "martingale": {"total_mean": mart.total_mean, "total_standard_error": mart.total_error,
                       "passed": mart.passed},
    }
    checks = [mart.passed]
    if scenario.market.is_constant:
        ref = nash_closed_form.solve(scenario.market, scenario.agents, sol.grid)
        mean = sol.mean_trajectories()
        err_Q, err_q = _rel_sup(mean.Q, ref.Q), _rel_sup(mean.q, ref.q)
        p95 = max(r.p95 for r in res)
        out["deterministic_comparison"] = {
            "reference": "closed_form", "relative_sup_error_Q": err_Q, "relative_sup_error_q": err_q,
            "tolerance": MC_REL_TOL, "residual_p95_tolerance": MC_RESIDUAL_TOL,
        }
        checks += [err_Q <= MC_REL_TOL, err_q <= MC_REL_TOL, p95 <= MC_RESIDUAL_TOL]
    out["passed"] = bool(all(checks))
    return out


def run(config_path, backend: str, verify: bool, out: Path, seed=None, steps=None) -> int:
    scenario = cfg.load(config_path)
    if seed is not None:
        scenario.seed = seed
    out.mkdir(parents=True, exist_ok=True)
    report = validate(scenario.market, scenario.agents)
    write_json(report.as_dict(), out / "validation.json")
    if report.verdict is Verdict.ASSUMPTION_VIOLATED:
        bad = [i + 1 for i, ok in enumerate(report.beta_nonnegative) if not ok]
        print(f"AssumptionViolated: beta = alpha - a/2 < 0 for agent(s) {bad}", file=sys.stderr)
        return EXIT_ERROR
    result = run_backend(scenario, backend, steps, seed)
    export_csv(result.trajectories, out / "trajectories.csv")
    if not verify:
        return EXIT_OK
    if result.mc is not None:
        diag = mc_diagnostics(scenario, result.mc)
        write_json(diag, out / "mc_diagnostics.json")
        return EXIT_OK if diag["passed"] else EXIT_VERIFY
    dev = deviation_test(result.trajectories, scenario.market, scenario.agents)
    write_json(dev.as_dict(), out / "deviation.json")
    return EXIT_OK if dev.passed else EXIT_VERIFY


def sweep(which: str, backend, out: Path, seed=None, steps=None) -> int:
    """Run a preset, every preset (``all``) or a sweep file; ``backend=None`` keeps the default."""
    if which == "all":
        return max(sweep(name, backend, out, seed, steps) for name in sweeps.PRESET_NAMES)
    if which in sweeps.PRESET_NAMES:
        spec = sweeps.preset(which, backend or "closed_form")
    else:
        spec = sweeps.load_spec(which)
        spec.backend = backend or spec.backend
    spec.out = out
    result = sweeps.run_sweep(spec, steps, seed)
    for a in result.assertions:
        print(f"{spec.name}: {a['name']}: {'PASS' if a['passed'] else 'FAIL'}")
    return EXIT_OK if result.passed else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="impact-game",
                                description="Nash equilibria of the n-agent optimal liquidation game.")
    p.add_argument("--config", help="scenario JSON")
    p.add_argument("--backend", choices=BACKENDS, help="default closed_form")
    p.add_argument("--verify", action="store_true", help="run the deviation test or MC diagnostics")
    p.add_argument("--sweep", metavar="PRESET|SPECFILE",
                   help=f"one of {', '.join(sweeps.PRESET_NAMES)}, 'all', or a sweep JSON file")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int, help="override the number of time steps")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        if args.sweep:
            return sweep(args.sweep, args.backend, out, args.seed, args.steps)
        if not args.config:
            print("error: --config or --sweep is required", file=sys.stderr)
            return EXIT_ERROR
        return run(args.config, args.backend or "closed_form", args.verify, out, args.seed, args.steps)
    except (ImpactGameError, ValueError, OSError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
