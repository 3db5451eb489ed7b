"""Command-line entry points: synthesize, analyze, simulate, demo.

Exit codes: 0 on success, 2 when inputs fail validation, 3 when a solver
cannot deliver a certified answer.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

from . import __version__, _backend
from .channels import MarkovChannel, validate_channel
from .closedloop import check_separation, moment_comparison, simulate
from .control_care import optimal_control_cost, solve_control_care
from .errors import (DimensionMismatch, InvalidInitialMode, SolverError,
                     ValidationError)
from .filter_care import (optimal_filter_cost, solve_filter_care,
                          verify_lmi_feasibility)
from .model import MjlsModel, validate_model

log = logging.getLogger("jumpctl")

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER = 0, 2, 3
MOMENT_CHECK_TRIALS = 100
BURN_IN = 0.1


@dataclass
class RunConfig:
    model: MjlsModel
    ch_act: MarkovChannel
    ch_sens: MarkovChannel
    x0: np.ndarray
    xhat0: np.ndarray
    theta0: int | None
    eta0: int | None
    tol: float
    max_iter: int
    steps: int
    trials: int
    seed: int
    noise_on: bool
    raw: dict

    @property
    def digest(self):
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _mode(value, n, name):
    if value is None or value == "stationary":
        return None
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < n:
        raise InvalidInitialMode(f"{name} must be 'stationary' or an integer in [0, {n}), got {value!r}")
    return value


def parse_config(raw: dict) -> RunConfig:
    """Build and validate a run configuration from its JSON object."""
    try:
        model = MjlsModel.from_dict(raw["model"])
        ch_act = MarkovChannel.from_dict(raw["actuation_channel"])
        ch_sens = MarkovChannel.from_dict(raw["sensing_channel"])
    except KeyError as exc:
        raise ValidationError(f"config is missing {exc.args[0]!r}") from None
    problems = validate_model(model)
    problems += [f"actuation channel: {p}" for p in validate_channel(ch_act)]
    problems += [f"sensing channel: {p}" for p in validate_channel(ch_sens)]
    if problems:
        raise ValidationError("; ".join(problems))
    init = raw.get("initial", {})
    x0 = np.asarray(init.get("x0", np.zeros(model.n_x)), dtype=float)
    xhat0 = np.asarray(init.get("xhat0", np.zeros(model.n_x)), dtype=float)
    if x0.shape != (model.n_x,) or xhat0.shape != (model.n_x,):
        raise DimensionMismatch(f"x0 and xhat0 must have length {model.n_x}")
    solver = raw.get("solver", {})
    sim = raw.get("sim", {})
    return RunConfig(
        model, ch_act, ch_sens, x0, xhat0,
        _mode(init.get("theta0"), ch_act.n_modes, "theta0"),
        _mode(init.get("eta0"), ch_sens.n_modes, "eta0"),
        float(solver.get("tol", 1e-10)), int(solver.get("max_iter", 100_000)),
        int(sim.get("steps", 100)), int(sim.get("trials", 1)), int(sim.get("seed", 0)),
        bool(sim.get("noise_on", True)), raw)


def load_config(path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from None
    return parse_config(raw)


def _provenance(cfg: RunConfig, seed=None):
    return {"config_sha256": cfg.digest, "seed": cfg.seed if seed is None else seed,
            "versions": {"jumpctl": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "backend": _backend.name}}


def _write_json(path, obj):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def synthesize(cfg: RunConfig) -> dict:
    """Solve both Riccati equations independently and assemble the report."""
    csol = solve_control_care(cfg.model, cfg.ch_act, tol=cfg.tol, max_iter=cfg.max_iter)
    fsol = solve_filter_care(cfg.model, cfg.ch_sens, tol=cfg.tol,
                             max_iter=min(cfg.max_iter, 10_000), seed=cfg.seed)
    lmi = verify_lmi_feasibility(cfg.model, cfg.ch_sens, fsol.Y)
    sep = check_separation(cfg.model, cfg.ch_act, cfg.ch_sens, csol.F, fsol.M)
    return {
        "control": {"residual": csol.residual, "rho": csol.rho_control, "cost": csol.cost,
                    "iterations": csol.iterations, "stabilizing": csol.stabilizing},
        "filter": {"residual": fsol.residual, "rho": fsol.rho_filter, "cost": fsol.cost,
                   "iterations": fsol.iterations, "trace_history": fsol.trace_history,
                   "lmi_feasible": lmi.feasible},
        "separation": sep.to_dict(),
        "gains": {"F": csol.F.tolist(), "M": fsol.M.tolist(),
                  "X": csol.X.tolist(), "Y": fsol.Y.tolist()},
        "provenance": _provenance(cfg),
    }


def load_gains(path, cfg: RunConfig):
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read gains {path}: {exc}") from None
    g = raw.get("gains", raw)
    if "F" not in g or "M" not in g:
        raise ValidationError("gains file needs F and M")
    F = np.asarray(g["F"], dtype=float)
    M = np.asarray(g["M"], dtype=float)
    m = cfg.model
    if F.shape != (cfg.ch_act.n_modes, m.n_u, m.n_x):
        raise DimensionMismatch(f"F has shape {F.shape}, expected "
                                f"{(cfg.ch_act.n_modes, m.n_u, m.n_x)}")
    if M.shape != (cfg.ch_sens.n_modes, m.n_x, m.n_y):
        raise DimensionMismatch(f"M has shape {M.shape}, expected "
                                f"{(cfg.ch_sens.n_modes, m.n_x, m.n_y)}")
    X = np.asarray(g["X"], dtype=float) if "X" in g else None
    Y = np.asarray(g["Y"], dtype=float) if "Y" in g else None
    return F, M, X, Y


def analyze(cfg: RunConfig, F, M, X=None, Y=None) -> dict:
    sep = check_separation(cfg.model, cfg.ch_act, cfg.ch_sens, F, M)
    report = {
        "control": {"rho": sep.rho_control, "ms_stabilizing": sep.rho_control < 1},
        "filter": {"rho": sep.rho_filter, "ms_detectable": sep.rho_filter < 1},
        "separation": sep.to_dict(),
        "provenance": _provenance(cfg),
    }
    if X is not None:
        report["control"]["cost"] = optimal_control_cost(cfg.ch_act, cfg.model, X)
    if Y is not None:
        report["filter"]["cost"] = optimal_filter_cost(cfg.ch_sens, Y)
        report["filter"]["lmi"] = verify_lmi_feasibility(cfg.model, cfg.ch_sens, Y).to_dict()
    return report


def run_simulation(cfg: RunConfig, F, M, traces_path, trials=None, steps=None,
                   seed=None, noise_on=None) -> dict:
    trials = cfg.trials if trials is None else trials
    steps = cfg.steps if steps is None else steps
    seed = cfg.seed if seed is None else seed
    noise_on = cfg.noise_on if noise_on is None else noise_on
    trace = simulate(cfg.model, cfg.ch_act, cfg.ch_sens, F, M, cfg.x0, cfg.xhat0, steps,
                     trials=trials, seed=seed, noise_on=noise_on,
                     theta0=cfg.theta0, eta0=cfg.eta0)
    trace.write_csv(traces_path)
    burn = int(BURN_IN * steps)
    xn = np.linalg.norm(trace.x, axis=2)
    en = np.linalg.norm(trace.e, axis=2)
    summary = {
        "trials": trials, "steps": steps, "seed": seed, "noise_on": bool(noise_on),
        "avg_control_cost": float(trace.z2[:, burn:].mean()),
        "avg_error_sq": float((en[:, burn:] ** 2).mean()),
        "final_state_norm_max": float(xn[:, -1].max()),
        "final_error_norm_max": float(en[:, -1].max()),
        "provenance": _provenance(cfg, seed),
    }
    if trials >= MOMENT_CHECK_TRIALS:
        summary["moment_check"] = moment_comparison(trace, cfg.model, cfg.ch_sens, M,
                                                    eta0=cfg.eta0)
    return summary


def cmd_synthesize(args):
    cfg = load_config(args.config)
    report = synthesize(cfg)
    _write_json(args.out, report)
    sep = report["separation"]
    print(f"{sep['verdict']}: rho_control={sep['rho_control']:.6g} "
          f"rho_filter={sep['rho_filter']:.6g}")


def cmd_analyze(args):
    cfg = load_config(args.config)
    report = analyze(cfg, *load_gains(args.gains, cfg))
    _write_json(args.out, report)
    print(report["separation"]["verdict"])


def cmd_simulate(args):
    cfg = load_config(args.config)
    F, M, _, _ = load_gains(args.gains, cfg)
    noise = None if args.noise is None else args.noise == "on"
    summary = run_simulation(cfg, F, M, args.traces, args.trials, args.steps,
                             args.seed, noise)
    _write_json(args.summary, summary)
    if "moment_check" in summary:
        print(summary["moment_check"]["flag"])


def cmd_demo(args):
    from .pendulum import pendulum_config, unstable_eigenvalue

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    print(f"max |eig(A)| = {unstable_eigenvalue():.4f}")
    raw = pendulum_config()
    _write_json(out / "pendulum_config.json", raw)
    cfg = parse_config(raw)
    report = synthesize(cfg)
    _write_json(out / "pendulum_gains.json", report)
    F = np.asarray(report["gains"]["F"])
    M = np.asarray(report["gains"]["M"])
    runs = {}
    for label, noise in (("noise", True), ("noiseless", False)):
        runs[label] = run_simulation(cfg, F, M, out / f"pendulum_traces_{label}.csv",
                                     trials=cfg.trials if noise else 1, noise_on=noise)
    _write_json(out / "pendulum_summary.json",
                {"synthesis": {k: v for k, v in report.items() if k != "gains"},
                 "simulations": runs})
    sep = report["separation"]
    print(f"{sep['verdict']}: rho_control={sep['rho_control']:.6g} "
          f"rho_filter={sep['rho_filter']:.6g}")


def build_parser():
    p = argparse.ArgumentParser(prog="jumpctl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synthesize", help="solve both Riccati equations")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synthesize)

    a = sub.add_parser("analyze", help="stability checks for given gains")
    a.add_argument("--config", required=True)
    a.add_argument("--gains", required=True)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_analyze)

    m = sub.add_parser("simulate", help="Monte Carlo runs of the closed loop")
    m.add_argument("--config", required=True)
    m.add_argument("--gains", required=True)
    m.add_argument("--traces", required=True)
    m.add_argument("--summary", required=True)
    m.add_argument("--trials", type=int)
    m.add_argument("--steps", type=int)
    m.add_argument("--seed", type=int)
    m.add_argument("--noise", choices=["on", "off"])
    m.set_defaults(func=cmd_simulate)

    d = sub.add_parser("demo", help="bundled examples")
    d.add_argument("name", choices=["pendulum"])
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
