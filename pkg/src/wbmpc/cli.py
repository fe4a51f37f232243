"""Command line: run a scenario under one controller, compare controllers on
the same scenario, or check a model's dynamics invariants.

All emitted files (trajectory.csv, summary.json, compare.json) are
byte-deterministic for fixed inputs: floats are written with 12 significant
digits and wall-clock fields are zeroed unless --timing is given.

Exit codes: run/compare return 0 on success, 2 on scenario or model
validation errors (the message carries the field path), 3 on a runtime abort
(infeasible subproblem, numerical failure). check returns 0 when every
invariant passes, 1 on an invariant failure, 2 on a validation error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .dynamics import constrained_forward_dynamics, eval_dynamics
from .model import ModelError, load_model
from .models import BUILTIN_MODELS
from .nominal import NominalError
from .qcqp import QcqpError
from .scenario import (
    Scenario,
    ScenarioError,
    build_references,
    controller_config,
    initial_state,
    load_scenario,
    scenario_to_dict,
)
from .simulation import (
    MpcError,
    SimulationError,
    TrajectoryLog,
    metrics,
    mpc_run,
    wbc_run,
)
from .transcription import TranscriptionError

__all__ = ["main"]

log = logging.getLogger("wbmpc")

CONTROLLERS = ("wbc", "mpc")
ORDERING_TOL = 1e-3

# Accumulated error norms reported for the full-scale arm experiment that the
# bundled desk-scale scenario mirrors; the direction of the ratio (< 1), not
# its value, is the reproducible claim, so compare.json carries these for
# context next to the measured ratio.
REFERENCE_ACCUMULATED = {"wbc": 15.7235, "mpc": 11.5531}


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _round12(obj):
    """Floats rounded to 12 significant digits, recursively (fixed formatting
    keeps the JSON files byte-identical across runs)."""
    if isinstance(obj, float):
        return float(_fmt(obj))
    if isinstance(obj, dict):
        return {k: _round12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round12(v) for v in obj]
    return obj


def _write_json(path: str, obj: dict) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(_round12(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _scenario_hash(scenario: Scenario) -> str:
    blob = json.dumps(_round12(scenario_to_dict(scenario)), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _csv_columns(traj: TrajectoryLog, n: int, m: int, nc: int) -> list[str]:
    cols = ["t"]
    cols += [f"q_{i}" for i in range(n)]
    cols += [f"qd_{i}" for i in range(n)]
    cols += [f"tau_{i}" for i in range(m)]
    cols += [f"fc_{i}" for i in range(nc)]
    for k, dim in enumerate(traj.task_dims, start=1):
        cols += [f"task{k}_x{j}" for j in range(dim)]
        cols += [f"task{k}_xdes{j}" for j in range(dim)]
        cols += [f"task{k}_err{j}" for j in range(dim)]
        cols.append(f"task{k}_errnorm")
    cols += ["solver_status", "solver_iters", "solve_ms"]
    return cols


def _write_csv(path: str, traj: TrajectoryLog, timing: bool) -> None:
    n = traj.q.shape[1]
    m = traj.torque.shape[1]
    nc = traj.fc.shape[1]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(_csv_columns(traj, n, m, nc)) + "\n")
        for i in range(traj.n_rows):
            vals = [traj.t[i], *traj.q[i], *traj.qd[i], *traj.torque[i], *traj.fc[i]]
            for k in range(len(traj.task_names)):
                vals += [*traj.task_pos[k][i], *traj.task_des[k][i],
                         *traj.task_err[k][i], traj.task_errnorm[i, k]]
            row = [_fmt(v) for v in vals]
            row.append(traj.solver_status[i])
            row.append(str(int(traj.solver_iters[i])))
            row.append(_fmt(traj.solve_wall[i] * 1e3 if timing else 0.0))
            fh.write(",".join(row) + "\n")


def _hierarchy_pairs(traj: TrajectoryLog) -> list[dict]:
    """Ordering statistics for each adjacent priority pair (empty when the
    scenario has a single task)."""
    pairs = []
    for k in range(len(traj.task_names) - 1):
        hi = traj.task_errnorm[:, k]
        lo = traj.task_errnorm[:, k + 1]
        pairs.append({
            "high": traj.task_names[k],
            "low": traj.task_names[k + 1],
            "tolerance": ORDERING_TOL,
            "fraction_ordered": float(np.mean(hi <= lo + ORDERING_TOL)),
            "worst_margin": float((hi - lo).max()),
        })
    return pairs


def _run_summary(scenario: Scenario, controller: str, traj: TrajectoryLog,
                 timing: bool) -> dict:
    stats = metrics(traj)
    if not timing:
        stats["wall_s"] = 0.0
        stats["solves"]["wall_s_total"] = 0.0
        stats["solves"]["wall_s_max"] = 0.0
    solves = [
        {**rec, "wall_s": rec["wall_s"] if timing else 0.0}
        for rec in traj.solves
    ]
    return {
        "artifact": {"name": "wbmpc", "version": __version__},
        "scenario": {"name": scenario.name, "hash": _scenario_hash(scenario)},
        "controller": controller,
        "timing_enabled": timing,
        "steps": traj.n_rows - 1,
        "metrics": stats,
        "hierarchy": {"pairs": _hierarchy_pairs(traj)},
        "solves": solves,
    }


def _simulate(scenario: Scenario, controller: str) -> TrajectoryLog:
    refs = build_references(scenario)
    config = controller_config(scenario)
    x0 = initial_state(scenario)
    tasks = [tr.task for tr in refs]
    log.info("running %s on %r (N=%d, tasks=%s)", controller, scenario.name,
             scenario.horizon.N, [t.name for t in tasks])
    if controller == "wbc":
        return wbc_run(scenario.model, tasks, refs, x0, config)
    _, _, traj = mpc_run(scenario.model, tasks, refs, x0, config)
    return traj


def _cmd_run(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    os.makedirs(args.out, exist_ok=True)
    traj = _simulate(scenario, args.controller)
    _write_csv(os.path.join(args.out, "trajectory.csv"), traj, args.timing)
    summary = _run_summary(scenario, args.controller, traj, args.timing)
    _write_json(os.path.join(args.out, "summary.json"), summary)
    acc = summary["metrics"]["accumulated_total"]
    print(f"{args.controller}: {traj.n_rows - 1} steps, "
          f"accumulated error norm {acc:.6f}")
    if args.timing:
        print(f"wall time {traj.wall_s:.2f} s")
    log.info("wrote %s", args.out)
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    names = [c.strip() for c in args.controllers.split(",")]
    if len(names) != 2 or any(c not in CONTROLLERS for c in names):
        raise ScenarioError(
            f"controllers: expected two of {'/'.join(CONTROLLERS)} separated "
            f"by a comma, got {args.controllers!r}"
        )
    scenario = load_scenario(args.scenario)
    os.makedirs(args.out, exist_ok=True)
    labels = names if names[0] != names[1] else [f"{names[0]}-1", f"{names[1]}-2"]

    runs = {}
    for name, label in zip(names, labels):
        traj = _simulate(scenario, name)
        subdir = os.path.join(args.out, label)
        os.makedirs(subdir, exist_ok=True)
        _write_csv(os.path.join(subdir, "trajectory.csv"), traj, args.timing)
        summary = _run_summary(scenario, name, traj, args.timing)
        _write_json(os.path.join(subdir, "summary.json"), summary)
        runs[label] = summary

    acc = {lb: runs[lb]["metrics"]["accumulated_total"] for lb in labels}
    ratio = acc[labels[1]] / acc[labels[0]]
    compare = {
        "artifact": {"name": "wbmpc", "version": __version__},
        "scenario": {"name": scenario.name, "hash": _scenario_hash(scenario)},
        "timing_enabled": args.timing,
        "controllers": dict(zip(labels, names)),
        "accumulated": {**acc, "ratio": ratio,
                        "ratio_of": f"{labels[1]}/{labels[0]}"},
        "per_task_max_abs_error": {
            t.name: {
                lb: runs[lb]["metrics"]["per_task"][t.name]["max_abs_error"]
                for lb in labels
            }
            for t in scenario.tasks
        },
        "hierarchy": {lb: runs[lb]["hierarchy"] for lb in labels},
        "reference": {
            "accumulated": dict(REFERENCE_ACCUMULATED),
            "ratio": REFERENCE_ACCUMULATED["mpc"] / REFERENCE_ACCUMULATED["wbc"],
            "ratio_of": "mpc/wbc",
        },
    }
    _write_json(os.path.join(args.out, "compare.json"), compare)
    print(f"{labels[0]}: accumulated error norm {acc[labels[0]]:.6f}")
    print(f"{labels[1]}: accumulated error norm {acc[labels[1]]:.6f}")
    print(f"ratio {labels[1]}/{labels[0]}: {ratio:.6f} "
          f"(full-scale reference {compare['reference']['ratio']:.3f})")
    return 0


def _resolve_check_model(ref: str):
    if ref in BUILTIN_MODELS:
        return BUILTIN_MODELS[ref]()
    if not os.path.exists(ref):
        raise ModelError(
            f"model: {ref!r} is neither a builtin "
            f"({', '.join(sorted(BUILTIN_MODELS))}) nor an existing file"
        )
    return load_model(ref)


CHECK_STATES = 200
CHECK_TOL = 1e-10
CHECK_ACCEL_TOL = 1e-8


def _cmd_check(args: argparse.Namespace) -> int:
    model = _resolve_check_model(args.model)
    rng = np.random.default_rng(0)
    q_ref = np.asarray(model.q_ref) if model.q_ref else np.zeros(model.n)

    # Worst residual per identity over random states; the identities are
    # pointwise algebraic, so the states need not satisfy the constraints.
    worst = {"projector-idempotent": 0.0, "constraint-null": 0.0,
             "weighted-inverse-symmetry": 0.0, "mass-matrix-symmetric": 0.0,
             "constrained-acceleration": 0.0}
    min_eig = np.inf
    for _ in range(CHECK_STATES):
        q = q_ref + 0.7 * rng.standard_normal(model.n)
        qd = rng.standard_normal(model.n)
        tau = rng.standard_normal(model.m)
        terms = eval_dynamics(model, q, qd)
        worst["mass-matrix-symmetric"] = max(
            worst["mass-matrix-symmetric"], np.abs(terms.M - terms.M.T).max()
        )
        min_eig = min(min_eig, float(np.linalg.eigvalsh(terms.M).min()))
        if model.nc:
            worst["projector-idempotent"] = max(
                worst["projector-idempotent"],
                np.abs(terms.Nc @ terms.Nc - terms.Nc).max(),
            )
            worst["constraint-null"] = max(
                worst["constraint-null"], np.abs(terms.Jc @ terms.Nc).max()
            )
            worst["weighted-inverse-symmetry"] = max(
                worst["weighted-inverse-symmetry"],
                np.abs(terms.Nc @ terms.Minv - terms.Minv @ terms.Nc.T).max(),
            )
        qdd = constrained_forward_dynamics(terms, tau)
        rhs_top = terms.U.T @ tau - terms.b
        if model.nc:
            kkt = np.block([
                [terms.M, terms.Jc.T],
                [terms.Jc, np.zeros((model.nc, model.nc))],
            ])
            rhs = np.concatenate([rhs_top, -terms.Jc_dot @ qd])
            qdd_ref = np.linalg.solve(kkt, rhs)[: model.n]
        else:
            qdd_ref = np.linalg.solve(terms.M, rhs_top)
        worst["constrained-acceleration"] = max(
            worst["constrained-acceleration"], np.abs(qdd - qdd_ref).max()
        )

    print(f"model {model.name}: n={model.n}, m={model.m}, nc={model.nc}, "
          f"states={CHECK_STATES}")
    failures = 0

    def report(name: str, value: float, tol: float, skip: bool = False) -> None:
        nonlocal failures
        if skip:
            print(f"  skip  {name:28s} no constraints (nc = 0)")
            return
        ok = value <= tol
        failures += 0 if ok else 1
        print(f"  {'pass' if ok else 'FAIL'}  {name:28s} "
              f"worst {value:.3e}  (tol {tol:.0e})")

    report("mass-matrix-symmetric", worst["mass-matrix-symmetric"], CHECK_TOL)
    ok = min_eig > 0.0
    failures += 0 if ok else 1
    print(f"  {'pass' if ok else 'FAIL'}  {'mass-matrix-positive':28s} "
          f"min eigenvalue {min_eig:.3e}")
    for name in ("projector-idempotent", "constraint-null",
                 "weighted-inverse-symmetry"):
        report(name, worst[name], CHECK_TOL, skip=model.nc == 0)
    report("constrained-acceleration", worst["constrained-acceleration"],
           CHECK_ACCEL_TOL)

    if failures:
        print(f"{failures} invariant(s) failed")
        return 1
    print("all invariants pass")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wbmpc",
        description="Closed-loop control experiments: projection controller "
                    "vs. receding-horizon optimization.",
    )
    parser.add_argument("--log-level", default="warning",
                        choices=("debug", "info", "warning", "error"))
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one controller on a scenario")
    run.add_argument("--scenario", required=True)
    run.add_argument("--controller", required=True, choices=CONTROLLERS)
    run.add_argument("--out", required=True)
    run.add_argument("--timing", action="store_true",
                     help="record wall-clock times (off by default so "
                          "outputs are byte-reproducible)")
    run.set_defaults(func=_cmd_run)

    cmp_ = sub.add_parser("compare",
                          help="run two controllers on the same scenario")
    cmp_.add_argument("--scenario", required=True)
    cmp_.add_argument("--out", required=True)
    cmp_.add_argument("--controllers", default="wbc,mpc",
                      help="comma-separated pair (default: wbc,mpc)")
    cmp_.add_argument("--timing", action="store_true")
    cmp_.set_defaults(func=_cmd_compare)

    check = sub.add_parser("check", help="verify model dynamics invariants")
    check.add_argument("--model", required=True,
                       help="builtin model name or model file path")
    check.set_defaults(func=_cmd_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper()),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ScenarioError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MpcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.diagnostics:
            print(f"diagnostics: {exc.diagnostics}", file=sys.stderr)
        return 3
    except (SimulationError, NominalError, TranscriptionError, QcqpError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
