"""Nominal joint-space trajectories from prioritized task trajectories.

Task position references x_k^d(t_i) are converted into a joint-space nominal
by one first-order prioritized IK step per grid interval,

    Q_i = J_1^+ dx_1 + sum_{k>=2} (J_k P_{k-1})^+ (dx_k - J_k Q_acc),
    P_k = P_{k-1} - (J_k P_{k-1})^+ (J_k P_{k-1}),   P_0 = I,

followed by q_{i+1}^d = q_i^d + Q_i and qd_{i+1}^d = Q_i / dt.  Holonomic
constraints ride along as an implicit top-priority task with delta
c - f_c(q_i^d), which keeps the nominal on the constraint manifold.  Nominal
inputs u_i^d = [torque; constraint force] come from the projection controller
evaluated along the nominal states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import constraint_force, eval_dynamics
from .kinematics import constraint_jacobian, constraint_value
from .linalg import PINV_RCOND, pinv
from .model import PlantState, RobotModel
from .wbc import TaskDef, ordered_tasks, pd_task_accel, wbc_hierarchy

__all__ = [
    "NominalError",
    "TaskTrajectory",
    "NominalTrajectory",
    "prioritized_ik_step",
    "build_nominal",
]

# Damped least squares kicks in below this smallest retained singular value.
IK_DAMPING_TRIGGER = 1e-6
IK_DAMPING = 1e-4
# One IK step larger than this (rad) means the targets are not reachable
# first-order and the nominal would be garbage.
IK_MAX_STEP = 1.0


class NominalError(ValueError):
    """Nominal trajectory generation failed (unreachable task targets)."""


@dataclass
class TaskTrajectory:
    """Sampled reference x_k^d(t_i), i in [0, N], for one task.

    ``velocities`` is optional; when absent, velocity references fall back to
    the forward difference of ``samples`` (last interval repeated).
    """

    task: TaskDef
    samples: np.ndarray
    velocities: np.ndarray | None = None
    dt: float = 0.0

    def __post_init__(self) -> None:
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if self.velocities is not None:
            self.velocities = np.atleast_2d(np.asarray(self.velocities, dtype=float))
            if self.velocities.shape != self.samples.shape:
                raise ValueError("velocity samples must match position samples")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError(f"task {self.task.name!r}: non-finite samples")
        if self.samples.shape[1] != self.task.dim:
            raise ValueError(
                f"task {self.task.name!r}: samples must have {self.task.dim} columns"
            )

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    def value(self, i: int) -> np.ndarray:
        """x_k^d at grid index i (clamped to the sampled range)."""
        return self.samples[min(max(i, 0), self.n_samples - 1)]

    def velocity(self, i: int) -> np.ndarray:
        """xd_k^d at grid index i (clamped; forward difference fallback)."""
        i = min(max(i, 0), self.n_samples - 1)
        if self.velocities is not None:
            return self.velocities[i]
        if self.dt <= 0.0 or self.n_samples < 2:
            return np.zeros(self.samples.shape[1])
        j = min(i, self.n_samples - 2)
        return (self.samples[j + 1] - self.samples[j]) / self.dt


@dataclass
class NominalTrajectory:
    """States x_i^d = [q; qd] for i in [0, N] and inputs u_i^d = [torque; F_c]
    for i in [0, N-1], anchored at the measured initial state."""

    states: np.ndarray
    inputs: np.ndarray
    dt: float

    @property
    def n_steps(self) -> int:
        return self.inputs.shape[0]

    @property
    def n(self) -> int:
        return self.states.shape[1] // 2

    def x(self, i: int) -> np.ndarray:
        """State sample, held at the final state past the end (receding
        prediction windows may look beyond the planned horizon)."""
        return self.states[min(i, self.states.shape[0] - 1)]

    def u(self, i: int) -> np.ndarray:
        """Input sample, held at the final input past the end."""
        return self.inputs[min(i, self.n_steps - 1)]

    def q(self, i: int) -> np.ndarray:
        return self.x(i)[: self.n]

    def qd(self, i: int) -> np.ndarray:
        return self.x(i)[self.n :]


def _dls(a: np.ndarray, rhs: np.ndarray, lam: float) -> np.ndarray:
    """Damped least squares a^T (a a^T + lam^2 I)^-1 rhs."""
    gram = a @ a.T + lam**2 * np.eye(a.shape[0])
    return a.T @ np.linalg.solve(gram, rhs)


def prioritized_ik_step(
    model: RobotModel,
    q: np.ndarray,
    jacobians: list[np.ndarray],
    deltas: list[np.ndarray],
) -> np.ndarray:
    """One prioritized first-order IK increment.

    Parameters
    ----------
    model : RobotModel
    q : (n,) evaluation point of the supplied Jacobians (dimension check only).
    jacobians : task Jacobians J_k at q, highest priority first.
    deltas : desired task-space increments dx_k, aligned with `jacobians`.

    Returns
    -------
    (n,) joint increment Q such that J_1 Q ~= dx_1 with minimal norm, and each
    later task is matched as well as the remaining null space allows.

    Notes
    -----
    Lower-priority increments live in the null space of every higher-priority
    projected Jacobian (J_j P_l = 0 for l >= j), so appending a task never
    perturbs the residual of a higher one.  Near-singular projected Jacobians
    (smallest retained singular value below 1e-6) fall back to damped least
    squares; the projector update always uses the truncated pseudo-inverse so
    P_k stays an orthogonal projector.
    """
    if len(jacobians) != len(deltas):
        raise ValueError("one delta per Jacobian is required")
    n = model.n
    q = np.asarray(q, dtype=float)
    if q.shape != (n,):
        raise ValueError(f"q must have shape ({n},)")
    proj = np.eye(n)
    acc = np.zeros(n)
    for jk, dx in zip(jacobians, deltas):
        jk = np.atleast_2d(np.asarray(jk, dtype=float))
        dx = np.atleast_1d(np.asarray(dx, dtype=float))
        jp = jk @ proj
        scale = float(np.linalg.norm(jk, 2)) if jk.size else 0.0
        jp_pinv = pinv(jp, scale=scale)
        rhs = dx - jk @ acc
        sing = np.linalg.svd(jp, compute_uv=False) if jp.size else np.zeros(0)
        cutoff = PINV_RCOND * max(float(sing[0]) if sing.size else 0.0, scale)
        retained = sing[sing > cutoff]
        if retained.size and retained.min() < IK_DAMPING_TRIGGER:
            acc = acc + _dls(jp, rhs, IK_DAMPING)
        else:
            acc = acc + jp_pinv @ rhs
        proj = proj - jp_pinv @ jp
    return acc


def build_nominal(
    model: RobotModel,
    x0: PlantState,
    trajectories: list[TaskTrajectory],
    horizon,
    max_step: float = IK_MAX_STEP,
) -> NominalTrajectory:
    """Integrate the prioritized IK over the horizon grid and attach inputs.

    The state recursion starts at the measured (q0, qd0).  Constraints are an
    implicit top-priority IK task with feedback delta c - f_c(q_i^d); user
    task deltas use the matching feedback form x_k^d(t_{i+1}) - f_k(q_i^d).
    Inputs are the projection-controller torque at each nominal state with PD
    task accelerations, paired with the induced constraint force.

    Raises
    ------
    NominalError
        If any single IK increment exceeds ``max_step`` (rad), naming the step.
    """
    n = model.n
    n_steps = int(horizon.N)
    dt = float(horizon.dt)
    tasks = ordered_tasks(model, [tt.task for tt in trajectories])
    by_name = {tt.task.name: tt for tt in trajectories}
    trajs = [by_name[t.name] for t in tasks]
    for tt in trajs:
        if tt.n_samples != n_steps + 1:
            raise ValueError(
                f"task {tt.task.name!r}: expected {n_steps + 1} samples, got {tt.n_samples}"
            )
        if tt.dt <= 0.0:
            tt.dt = dt
    targets = model.constraint_targets()

    states = np.zeros((n_steps + 1, 2 * n))
    q = np.asarray(x0.q, dtype=float).copy()
    qd = np.asarray(x0.qd, dtype=float).copy()
    states[0] = np.concatenate([q, qd])
    for i in range(n_steps):
        jacobians = []
        deltas = []
        if model.nc:
            jacobians.append(constraint_jacobian(model, q))
            deltas.append(targets - constraint_value(model, q))
        for tt in trajs:
            jacobians.append(tt.task.jacobian(model, q))
            deltas.append(tt.value(i + 1) - tt.task.value(model, q))
        step = prioritized_ik_step(model, q, jacobians, deltas)
        norm = float(np.linalg.norm(step))
        if norm > max_step:
            raise NominalError(
                f"nominal infeasible at step {i}: IK increment {norm:.3g} rad "
                f"exceeds {max_step:.3g} rad"
            )
        q = q + step
        states[i + 1] = np.concatenate([q, step / dt])

    n_u = model.m + model.nc
    inputs = np.zeros((n_steps, n_u))
    for i in range(n_steps):
        qi = states[i, :n]
        qdi = states[i, n:]
        terms = eval_dynamics(model, qi, qdi)
        xdd_des = []
        for tt in trajs:
            x_now = tt.task.value(model, qi)
            xd_now = tt.task.jacobian(model, qi) @ qdi
            xdd_des.append(
                pd_task_accel(
                    x_now, xd_now, tt.value(i), tt.velocity(i),
                    tt.task.kp_vec(), tt.task.kv_vec(),
                )
            )
        cmd = wbc_hierarchy(model, terms, tasks, xdd_des)
        fc = constraint_force(terms, cmd.torque)
        inputs[i] = np.concatenate([cmd.torque, fc])

    if not np.all(np.isfinite(states)) or not np.all(np.isfinite(inputs)):
        raise NominalError("nominal trajectory contains non-finite values")
    return NominalTrajectory(states=states, inputs=inputs, dt=dt)
