"""Closed-loop simulation: nonlinear plant integration, the projection
controller loop, the receding-horizon loop, and tracking-error metrics.

The plant integrates the constrained dynamics with RK4 under zero-order-hold
torque; Baumgarte feedback keeps the holonomic constraint drift bounded. Both
controller loops share one log schema so their runs compare row for row.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import constraint_force, constrained_forward_dynamics, eval_dynamics
from .kinematics import constraint_jacobian, constraint_value
from .linalg import pinv
from .model import PlantState, RobotModel
from .nominal import TaskTrajectory, build_nominal
from .qcqp import SolverSettings, solve
from .transcription import HierarchySpec, HorizonSpec, transcribe
from .wbc import TaskDef, ordered_tasks, pd_task_accel, wbc_hierarchy

__all__ = [
    "SimulationError",
    "MpcError",
    "SimConfig",
    "MpcConfig",
    "TrajectoryLog",
    "simulate_step",
    "project_to_manifold",
    "wbc_run",
    "mpc_run",
    "metrics",
]

# Gauss-Newton iterations for the configuration-manifold projection; the
# constraint residual is quadratic-contraction small after a few.
PROJECT_MAX_ITERS = 50
PROJECT_TOL = 1e-12


class SimulationError(RuntimeError):
    """Plant integration produced a non-finite state."""


class MpcError(RuntimeError):
    """A receding-horizon subproblem could not be solved.

    Carries the failing window index and the solver diagnostics.
    """

    def __init__(self, message: str, step: int, diagnostics: dict | None = None):
        super().__init__(message)
        self.step = step
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class SimConfig:
    """Plant-integration parameters.

    ``dt_sim`` is the integrator step [s]; torque is held zero-order over each
    control period, which must be an (approximate) multiple of ``dt_sim``.
    ``baumgarte_alpha``/``baumgarte_beta`` [1/s] weight the velocity- and
    position-level constraint feedback.
    """

    dt_sim: float = 1e-3
    baumgarte_alpha: float = 20.0
    baumgarte_beta: float = 20.0

    def __post_init__(self) -> None:
        if self.dt_sim <= 0.0:
            raise SimulationError("dt_sim must be positive")
        if self.baumgarte_alpha < 0.0 or self.baumgarte_beta < 0.0:
            raise SimulationError("Baumgarte gains must be nonnegative")


@dataclass(frozen=True)
class MpcConfig:
    """Receding-horizon controller configuration (also drives wbc_run, which
    uses the horizon/sim fields only).

    ``feedback_mode`` selects the state fed back between subproblems:
    "measured" closes the loop on the simulated plant state; "predicted"
    advances on the optimizer's own predicted state, which is open-loop with
    respect to the plant.
    """

    horizon: HorizonSpec
    hierarchy: HierarchySpec
    feedback_mode: str = "measured"
    solver: SolverSettings = field(default_factory=SolverSettings)
    w_c: object = None
    sim: SimConfig = field(default_factory=SimConfig)
    repair: str = "psd"

    def __post_init__(self) -> None:
        if self.feedback_mode not in ("measured", "predicted"):
            raise MpcError(
                f"unknown feedback_mode {self.feedback_mode!r} "
                "(expected 'measured' or 'predicted')",
                step=-1,
            )
        if self.sim.dt_sim > self.horizon.dt + 1e-15:
            raise SimulationError(
                f"dt_sim={self.sim.dt_sim} must not exceed the control "
                f"period dt={self.horizon.dt}"
            )


def _rate(model: RobotModel, q: np.ndarray, qd: np.ndarray, torque: np.ndarray,
          alpha: float, beta: float) -> np.ndarray:
    """State derivative [qd; qdd] of the constrained plant under held torque,
    with Baumgarte constraint feedback on the acceleration."""
    terms = eval_dynamics(model, q, qd)
    qdd = constrained_forward_dynamics(terms, torque)
    if model.nc:
        jc_pinv = pinv(terms.Jc)
        drift = terms.fc_value - model.constraint_targets()
        qdd = qdd - 2.0 * alpha * (jc_pinv @ (terms.Jc @ qd)) - beta**2 * (
            jc_pinv @ drift
        )
    return np.concatenate([qd, qdd])


def simulate_step(
    model: RobotModel,
    state: PlantState,
    torque: np.ndarray,
    dt_sim: float,
    alpha: float = 20.0,
    beta: float = 20.0,
) -> PlantState:
    """Advance the plant one integrator step under zero-order-hold torque.

    Parameters
    ----------
    model : RobotModel
    state : PlantState at time t.
    torque : (m,) actuated torques, held constant over the step.
    dt_sim : step length [s].
    alpha, beta : Baumgarte gains [1/s]; the acceleration gains the feedback
        -2 alpha Jc^+ (Jc qd) - beta^2 Jc^+ (f_c(q) - c).

    Returns
    -------
    PlantState at t + dt_sim, via classical 4th-order integration.

    Raises
    ------
    SimulationError
        If the new state contains non-finite entries (time-stamped).
    """
    torque = np.asarray(torque, dtype=float)
    x = np.concatenate([state.q, state.qd])
    n = model.n

    def f(xx: np.ndarray) -> np.ndarray:
        return _rate(model, xx[:n], xx[n:], torque, alpha, beta)

    k1 = f(x)
    k2 = f(x + 0.5 * dt_sim * k1)
    k3 = f(x + 0.5 * dt_sim * k2)
    k4 = f(x + dt_sim * k3)
    x_new = x + (dt_sim / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_new)):
        raise SimulationError(
            f"non-finite state after integrating from t={state.t:.6f}"
        )
    return PlantState(t=state.t + dt_sim, q=x_new[:n], qd=x_new[n:])


def project_to_manifold(model: RobotModel, state: PlantState) -> PlantState:
    """Project a state onto the holonomic-constraint manifold.

    The configuration moves by Gauss-Newton steps until f_c(q) = c to
    tolerance; the velocity is projected onto null(Jc) at the corrected
    configuration. With Baumgarte stabilization active the correction is an
    O(drift) touch-up, but the discretized subproblems need it exactly: their
    first-step equality rows are unsatisfiable from an off-manifold state.
    """
    if model.nc == 0:
        return state.copy()
    q = np.asarray(state.q, dtype=float).copy()
    targets = model.constraint_targets()
    for _ in range(PROJECT_MAX_ITERS):
        res = constraint_value(model, q) - targets
        if np.abs(res).max() <= PROJECT_TOL:
            break
        jc = constraint_jacobian(model, q)
        step, *_ = np.linalg.lstsq(jc, res, rcond=None)
        q = q - step
    jc = constraint_jacobian(model, q)
    qd = np.asarray(state.qd, dtype=float)
    lam, *_ = np.linalg.lstsq(jc @ jc.T, jc @ qd, rcond=None)
    return PlantState(t=state.t, q=q, qd=qd - jc.T @ lam)


def _hold_steps(dt: float, dt_sim: float) -> tuple[int, float]:
    """Number of integrator substeps per control period and their exact
    length (the period is divided evenly; dt_sim is a target, not a quantum)."""
    count = max(1, int(round(dt / dt_sim)))
    return count, dt / count


@dataclass
class TrajectoryLog:
    """Per-control-step log of one closed-loop run.

    Rows cover grid times t_i = t0 + i dt for i in [0, N]. Row i describes
    the state at t_i and the input applied over [t_i, t_{i+1}); the final row
    repeats the last applied input so every row is complete. ``solves`` keeps
    one record per QCQP subproblem (empty for projection-controller runs);
    per-row solver columns repeat their window's record.
    """

    dt: float
    task_names: list[str]
    task_dims: list[int]
    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    torque: np.ndarray
    fc: np.ndarray
    task_pos: list[np.ndarray]
    task_des: list[np.ndarray]
    task_err: list[np.ndarray]
    task_errnorm: np.ndarray
    solver_status: list[str]
    solver_iters: np.ndarray
    solve_wall: np.ndarray
    solves: list[dict] = field(default_factory=list)
    wall_s: float = 0.0

    @classmethod
    def allocate(cls, n_rows: int, dt: float, n: int, m: int, nc: int,
                 tasks: list[TaskDef]) -> "TrajectoryLog":
        return cls(
            dt=dt,
            task_names=[t.name for t in tasks],
            task_dims=[t.dim for t in tasks],
            t=np.zeros(n_rows),
            q=np.zeros((n_rows, n)),
            qd=np.zeros((n_rows, n)),
            torque=np.zeros((n_rows, m)),
            fc=np.zeros((n_rows, nc)),
            task_pos=[np.zeros((n_rows, t.dim)) for t in tasks],
            task_des=[np.zeros((n_rows, t.dim)) for t in tasks],
            task_err=[np.zeros((n_rows, t.dim)) for t in tasks],
            task_errnorm=np.zeros((n_rows, len(tasks))),
            solver_status=["none"] * n_rows,
            solver_iters=np.zeros(n_rows, dtype=int),
            solve_wall=np.zeros(n_rows),
        )

    @property
    def n_rows(self) -> int:
        return self.t.shape[0]

    def validate(self) -> None:
        steps = np.diff(self.t)
        if steps.size and not np.allclose(steps, self.dt, rtol=0.0, atol=1e-9):
            raise SimulationError("log times are not uniform at the control step")

    def set_row(self, i: int, t: float, q: np.ndarray, qd: np.ndarray,
                torque: np.ndarray, fc: np.ndarray,
                pos: list[np.ndarray], des: list[np.ndarray],
                status: str = "none", iters: int = 0, wall: float = 0.0) -> None:
        self.t[i] = t
        self.q[i] = q
        self.qd[i] = qd
        self.torque[i] = torque
        self.fc[i] = fc
        for k, (p, d) in enumerate(zip(pos, des)):
            self.task_pos[k][i] = p
            self.task_des[k][i] = d
            err = d - p
            self.task_err[k][i] = err
            self.task_errnorm[i, k] = float(np.linalg.norm(err))
        self.solver_status[i] = status
        self.solver_iters[i] = iters
        self.solve_wall[i] = wall


def _align_refs(model: RobotModel, tasks, trajectories) -> list[TaskTrajectory]:
    """Priority-order the task list and return its reference trajectories in
    the same order."""
    defs = ordered_tasks(model, list(tasks) if tasks else
                         [tr.task for tr in trajectories])
    by_def = {id(tr.task): tr for tr in trajectories}
    try:
        return [by_def[id(d)] for d in defs]
    except KeyError:
        raise ValueError(
            "every task needs exactly one reference trajectory (match by "
            "TaskDef identity)"
        ) from None


def _task_state(model: RobotModel, refs: list[TaskTrajectory], q: np.ndarray,
                idx: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Current task positions and their references at grid index idx."""
    pos = [tr.task.value(model, q) for tr in refs]
    des = [tr.value(idx) for tr in refs]
    return pos, des


def wbc_run(
    model: RobotModel,
    tasks,
    trajectories,
    x0: PlantState,
    config: MpcConfig,
) -> TrajectoryLog:
    """Closed-loop run of the projection controller.

    Per control step: evaluate the dynamics at the measured state, command
    each task's PD acceleration toward its reference, form the prioritized
    torque, and hold it over the period while the nonlinear plant integrates.
    """
    started = time.monotonic()
    refs = _align_refs(model, tasks, trajectories)
    defs = [tr.task for tr in refs]
    horizon = config.horizon
    n_steps, h = _hold_steps(horizon.dt, config.sim.dt_sim)
    alpha, beta = config.sim.baumgarte_alpha, config.sim.baumgarte_beta
    log = TrajectoryLog.allocate(
        horizon.N + 1, horizon.dt, model.n, model.m, model.nc, defs
    )
    state = PlantState(t=horizon.t0, q=np.asarray(x0.q, dtype=float).copy(),
                       qd=np.asarray(x0.qd, dtype=float).copy())
    torque = np.zeros(model.m)
    for i in range(horizon.N + 1):
        terms = eval_dynamics(model, state.q, state.qd)
        if i < horizon.N:
            xdd = []
            for tr in refs:
                jac = tr.task.jacobian(model, state.q)
                xdd.append(pd_task_accel(
                    tr.task.value(model, state.q), jac @ state.qd,
                    tr.value(i), tr.velocity(i),
                    tr.task.kp_vec(), tr.task.kv_vec(),
                ))
            torque = wbc_hierarchy(model, terms, defs, xdd).torque
        pos, des = _task_state(model, refs, state.q, i)
        log.set_row(i, state.t, state.q, state.qd, torque,
                    constraint_force(terms, torque), pos, des)
        if i < horizon.N:
            for _ in range(n_steps):
                state = simulate_step(model, state, torque, h, alpha, beta)
    log.wall_s = time.monotonic() - started
    log.validate()
    return log


def _shift_refs(refs: list[TaskTrajectory], k0: int,
                length: int) -> list[TaskTrajectory]:
    """Reference trajectories re-indexed to start at grid index k0, exactly
    ``length`` samples long (samples past the end hold their final value)."""
    out = []
    for tr in refs:
        idx = np.minimum(np.arange(k0, k0 + length), tr.n_samples - 1)
        out.append(TaskTrajectory(
            task=tr.task,
            samples=tr.samples[idx],
            velocities=None if tr.velocities is None else tr.velocities[idx],
            dt=tr.dt,
        ))
    return out


def mpc_run(
    model: RobotModel,
    tasks,
    trajectories,
    x0: PlantState,
    config: MpcConfig,
) -> tuple[np.ndarray, np.ndarray, TrajectoryLog]:
    """Receding-horizon run: per window, rebuild the nominal from the
    fed-back state, transcribe, solve, and commit the first Ne inputs.

    Returns (states, inputs, log) where ``states`` stacks the optimizer's
    committed states ((N+1) rows) and ``inputs`` the committed inputs (N
    rows); the log records the simulated plant alongside.

    The fed-back state is projected onto the constraint manifold before each
    window is transcribed (see project_to_manifold); "measured" mode feeds
    back the simulated plant state, "predicted" the optimizer's own state.
    """
    started = time.monotonic()
    refs = _align_refs(model, tasks, trajectories)
    defs = [tr.task for tr in refs]
    horizon = config.horizon
    n_x, n_u = 2 * model.n, model.m + model.nc
    n_steps, h = _hold_steps(horizon.dt, config.sim.dt_sim)
    alpha, beta = config.sim.baumgarte_alpha, config.sim.baumgarte_beta
    log = TrajectoryLog.allocate(
        horizon.N + 1, horizon.dt, model.n, model.m, model.nc, defs
    )
    window_hor = HorizonSpec(
        t0=0.0, tf=horizon.Np * horizon.dt, N=horizon.Np,
        Np=horizon.Np, Ne=horizon.Np,
    )
    plant = PlantState(t=horizon.t0, q=np.asarray(x0.q, dtype=float).copy(),
                       qd=np.asarray(x0.qd, dtype=float).copy())
    fed_back = plant.copy()
    committed_x = np.zeros((horizon.N + 1, n_x))
    committed_u = np.zeros((horizon.N, n_u))
    warm = None
    torque = np.zeros(model.m)
    for s in range(horizon.n_segments):
        k0 = s * horizon.Ne
        t_s = horizon.t0 + k0 * horizon.dt
        x_tilde = project_to_manifold(
            model, PlantState(t=t_s, q=fed_back.q, qd=fed_back.qd)
        )
        window_refs = _shift_refs(refs, k0, horizon.Np + 1)
        nominal = build_nominal(model, x_tilde, window_refs, window_hor)
        problem = transcribe(
            model, window_refs, nominal, config.hierarchy, window_hor,
            x_tilde.vector(), start=0, w_c=config.w_c, repair=config.repair,
        )
        t_solve = time.monotonic()
        sol = solve(problem, config.solver, start=warm)
        wall = time.monotonic() - t_solve
        if sol.status in ("infeasible", "numerical-failure"):
            raise MpcError(
                f"window {s} (grid step {k0}): solver status "
                f"{sol.status}; kkt={sol.kkt_residuals}",
                step=s,
                diagnostics=sol.diagnostics,
            )
        log.solves.append({
            "window": s,
            "status": sol.status,
            "iterations": int(sol.iterations),
            "wall_s": wall,
            "objective": float(sol.objective),
            "relaxation": float(sol.diagnostics.get("relaxation", 0.0)),
        })
        u_blocks = sol.u_stack.reshape(horizon.Np, n_u)
        x_blocks = sol.x_stack.reshape(horizon.Np + 1, n_x)
        for j in range(horizon.Ne):
            i = k0 + j
            torque = u_blocks[j, : model.m]
            committed_x[i] = x_blocks[j]
            committed_u[i] = u_blocks[j]
            terms = eval_dynamics(model, plant.q, plant.qd)
            pos, des = _task_state(model, refs, plant.q, i)
            log.set_row(i, plant.t, plant.q, plant.qd, torque,
                        constraint_force(terms, torque), pos, des,
                        status=sol.status, iters=int(sol.iterations),
                        wall=wall)
            for _ in range(n_steps):
                plant = simulate_step(model, plant, torque, h, alpha, beta)
        fed_back = (plant.copy() if config.feedback_mode == "measured"
                    else PlantState(
                        t=plant.t,
                        q=x_blocks[horizon.Ne, : model.n],
                        qd=x_blocks[horizon.Ne, model.n :],
                    ))
        warm = np.concatenate([
            sol.u_stack[horizon.Ne * n_u :],
            np.tile(u_blocks[-1], horizon.Ne),
        ])
        if s == horizon.n_segments - 1:
            committed_x[horizon.N] = x_blocks[horizon.Ne]
    terms = eval_dynamics(model, plant.q, plant.qd)
    pos, des = _task_state(model, refs, plant.q, horizon.N)
    last = log.solves[-1]
    log.set_row(horizon.N, plant.t, plant.q, plant.qd, torque,
                constraint_force(terms, torque), pos, des,
                status=last["status"], iters=last["iterations"],
                wall=last["wall_s"])
    log.wall_s = time.monotonic() - started
    log.validate()
    return committed_x, committed_u, log


def metrics(log: TrajectoryLog) -> dict:
    """Tracking and solver summary of one run.

    Per task: max |error| per axis, the per-step error-norm series, and the
    accumulated error norm sum_i ||e_k(t_i)||. ``accumulated_total`` sums the
    accumulated norms across tasks; solver stats aggregate the per-window
    records.
    """
    per_task = {}
    total = 0.0
    for k, name in enumerate(log.task_names):
        norms = log.task_errnorm[:, k]
        acc = float(norms.sum())
        total += acc
        per_task[name] = {
            "max_abs_error": np.abs(log.task_err[k]).max(axis=0).tolist(),
            "errnorm_series": norms.tolist(),
            "accumulated_norm": acc,
        }
    out = {
        "per_task": per_task,
        "accumulated_total": total,
        "wall_s": log.wall_s,
        "solves": {
            "count": len(log.solves),
            "iterations_total": int(sum(s["iterations"] for s in log.solves)),
            "wall_s_total": float(sum(s["wall_s"] for s in log.solves)),
            "wall_s_max": float(max((s["wall_s"] for s in log.solves),
                                    default=0.0)),
            "statuses": sorted({s["status"] for s in log.solves}),
        },
    }
    return out
