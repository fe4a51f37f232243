"""Projection-based whole-body control with strict task priorities.

For a constrained model (projector N_c, see dynamics.py) a task with
Jacobian J_1 obeys

    xdd_1 = J_1|c M^-1 U^T tau + Jdot_1|c qd - J_1 M^-1 b_c,   J_1|c = J_1 N_c

and the torque that realizes a commanded xdd_1^d while minimizing the
kinetic-metric norm tau^T Phi^-1 tau, Phi^-1 = U N_c M^-1 (U N_c)^T, is

    tau* = UNbar_c^T J_1|c^T Lambda_1 bvec
    bvec = xdd_1^d - Jdot_1|c qd + J_1 M^-1 b_c
    UNbar_c = M^-1 N_c^T U^T Phi,   Lambda_1 = (Mcal Phi Mcal^T)^+,
    Mcal = J_1|c M^-1 U^T.

Lower-priority tasks act through recursively projected Jacobians
J_prec(k) = J_k N_{k-1}, N_k = N_{k-1} - Jbar_prec(k) J_prec(k), N_0 = I,
so task k can never disturb tasks 1..k-1:

    tau* = UNbar_c^T N_c^T sum_k J_prec(k)^T F_k
    F_k = Lambda_prec(k)|c bvec_k
    bvec_k = xdd_k^d - Jdot_k|c qd + J_k M^-1 b_c
             - J_k N_c M^-1 sum_{j<k} J_prec(j)^T F_j.

The last term cancels the task-k acceleration induced by higher-priority
forces, so every task whose projected Jacobian keeps full row rank is
tracked exactly, not just the first.

When the actuation condition UNbar_c U N_c = N_c holds, Lambda reduces to
the projected task inertia (J N_c M^-1 J^T)^+; otherwise the general
pseudo-inverse form above is used.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import DynamicsTerms, mass_matrix
from .kinematics import constraint_jacobian, point_jacobian, point_world
from .linalg import directional_derivative, pinv, sym
from .model import RobotModel

__all__ = [
    "TaskDef",
    "HierarchicalCommand",
    "ordered_tasks",
    "pd_task_accel",
    "actuation_condition",
    "task_inertia",
    "wbc_single_task",
    "wbc_hierarchy",
]

# Residual threshold under which the actuation condition counts as satisfied
# and the projected-inertia simplification is valid.
ACTUATION_CONDITION_TOL = 1e-6

_AXIS_NAMES = {"x": 0, "y": 1, "z": 2}


@dataclass(frozen=True)
class TaskDef:
    """One prioritized operational task.

    kind "point": selected world coordinates (``axes``) of ``point_xyz`` on
    link ``link``. kind "joint": selected joint coordinates.
    Gains are diagonal, one entry per task dimension. Priority 1 is highest.
    """

    name: str
    priority: int
    kind: str = "point"
    link: int = -1
    point_xyz: tuple[float, float, float] = (0.0, 0.0, 0.0)
    axes: tuple[str, ...] = ("x", "y")
    joints: tuple[int, ...] = ()
    kp: tuple[float, ...] = ()
    kv: tuple[float, ...] = ()

    @property
    def dim(self) -> int:
        return len(self.joints) if self.kind == "joint" else len(self.axes)

    @property
    def axis_indices(self) -> tuple[int, ...]:
        return tuple(_AXIS_NAMES[a] for a in self.axes)

    def kp_vec(self) -> np.ndarray:
        return np.asarray(self.kp if self.kp else (0.0,) * self.dim, dtype=float)

    def kv_vec(self) -> np.ndarray:
        return np.asarray(self.kv if self.kv else (0.0,) * self.dim, dtype=float)

    def value(self, model: RobotModel, q: np.ndarray) -> np.ndarray:
        if self.kind == "joint":
            return np.asarray(q)[list(self.joints)]
        p = point_world(model, q, self.link, self.point_xyz)
        return p[list(self.axis_indices)]

    def jacobian(self, model: RobotModel, q: np.ndarray) -> np.ndarray:
        if self.kind == "joint":
            jac = np.zeros((self.dim, model.n))
            for row, j in enumerate(self.joints):
                jac[row, j] = 1.0
            return jac
        full = point_jacobian(model, q, self.link, self.point_xyz)
        return full[list(self.axis_indices), :]

    def validate(self, model: RobotModel) -> None:
        if self.priority < 1:
            raise ValueError(f"task {self.name!r}: priority must be >= 1")
        if self.kind == "point":
            if not 0 <= self.link < model.n:
                raise ValueError(f"task {self.name!r}: link {self.link} out of range")
            if not self.axes or any(a not in _AXIS_NAMES for a in self.axes):
                raise ValueError(f"task {self.name!r}: axes must be a subset of x/y/z")
        elif self.kind == "joint":
            if not self.joints or any(not 0 <= j < model.n for j in self.joints):
                raise ValueError(f"task {self.name!r}: joint indices out of range")
        else:
            raise ValueError(f"task {self.name!r}: unknown kind {self.kind!r}")
        for gains, label in ((self.kp, "kp"), (self.kv, "kv")):
            if gains and len(gains) != self.dim:
                raise ValueError(
                    f"task {self.name!r}: {label} must have {self.dim} entries"
                )
            if any(g < 0 for g in gains):
                raise ValueError(f"task {self.name!r}: {label} entries must be >= 0")


def ordered_tasks(model: RobotModel, tasks) -> list[TaskDef]:
    """Validate and return tasks sorted by priority (1 = highest)."""
    tasks = list(tasks)
    if not tasks:
        raise ValueError("at least one task is required")
    for t in tasks:
        t.validate(model)
    tasks.sort(key=lambda t: t.priority)
    priorities = [t.priority for t in tasks]
    if priorities != list(range(1, len(tasks) + 1)):
        raise ValueError(
            f"task priorities must be distinct and contiguous from 1, got {priorities}"
        )
    return tasks


def pd_task_accel(
    x: np.ndarray,
    xdot: np.ndarray,
    x_des: np.ndarray,
    xdot_des: np.ndarray,
    kp: np.ndarray,
    kv: np.ndarray,
) -> np.ndarray:
    """Diagonal PD law xdd^d = Kp (x^d - x) + Kv (xd^d - xd)."""
    return np.asarray(kp) * (x_des - x) + np.asarray(kv) * (xdot_des - xdot)


def _phi(terms: DynamicsTerms) -> np.ndarray:
    """Phi = (U N_c M^-1 N_c^T U^T)^+ (actuated-subspace inverse inertia)."""
    unc = terms.U @ terms.Nc
    return sym(pinv(unc @ terms.Minv @ unc.T))


def _ubar_nbar_c(terms: DynamicsTerms) -> np.ndarray:
    """UNbar_c = M^-1 N_c^T U^T Phi (n x m)."""
    return terms.Minv @ terms.Nc.T @ terms.U.T @ _phi(terms)


def actuation_condition(terms: DynamicsTerms) -> float:
    """Residual of UNbar_c U N_c = N_c (0 when underactuation is benign)."""
    lhs = _ubar_nbar_c(terms) @ terms.U @ terms.Nc
    return float(np.abs(lhs - terms.Nc).max())


def task_inertia(terms: DynamicsTerms, j_task: np.ndarray) -> np.ndarray:
    """Task-space inertia of a (possibly pre-projected) task Jacobian.

    Uses the projected-inertia simplification (J N_c M^-1 J^T)^+ when the
    actuation condition holds, the general (Mcal Phi Mcal^T)^+ otherwise.
    """
    j_task = np.atleast_2d(np.asarray(j_task, dtype=float))
    if actuation_condition(terms) <= ACTUATION_CONDITION_TOL:
        return sym(pinv(j_task @ terms.Nc @ terms.Minv @ j_task.T))
    mcal = j_task @ terms.Nc @ terms.Minv @ terms.U.T
    return sym(pinv(mcal @ _phi(terms) @ mcal.T))


def _task_scale(j_task: np.ndarray, w: np.ndarray) -> float:
    """Truncation yardstick: the task's unprojected inertia-inverse norm.

    Projection by higher priorities can only shrink J W J^T; anything that
    falls below PINV_RCOND of this scale is a fully consumed direction, not
    a small one, and must truncate to zero.
    """
    if j_task.size == 0:
        return 0.0
    return float(np.linalg.norm(j_task @ w @ j_task.T, 2))


def _constraint_projector(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """N_c(q) as a pure function of q (for directional derivatives)."""
    minv = np.linalg.inv(mass_matrix(model, q))
    jc = constraint_jacobian(model, q)
    if jc.shape[0] == 0:
        return np.eye(model.n)
    lam = pinv(jc @ minv @ jc.T)
    return np.eye(model.n) - minv @ jc.T @ lam @ jc


def _task_jacobians_c(model: RobotModel, tasks: list[TaskDef], q: np.ndarray) -> np.ndarray:
    """Stacked J_k|c = J_k N_c for all tasks, as a pure map of q."""
    nc = _constraint_projector(model, q)
    return np.vstack([task.jacobian(model, q) @ nc for task in tasks])


@dataclass
class HierarchicalCommand:
    """Torque command plus per-priority diagnostics."""

    torque: np.ndarray
    task_forces: list[np.ndarray] = field(default_factory=list)
    task_inertias: list[np.ndarray] = field(default_factory=list)
    prec_jacobians: list[np.ndarray] = field(default_factory=list)
    projectors: list[np.ndarray] = field(default_factory=list)
    condition_residual: float = 0.0
    simplified: bool = True

    @property
    def projector_ranks(self) -> list[int]:
        return [int(np.linalg.matrix_rank(n_k)) for n_k in self.projectors]


def wbc_hierarchy(
    model: RobotModel,
    terms: DynamicsTerms,
    tasks: list[TaskDef],
    xdd_des: list[np.ndarray],
) -> HierarchicalCommand:
    """Prioritized torque for an ordered task list with commanded accelerations."""
    if len(tasks) != len(xdd_des):
        raise ValueError("one commanded acceleration per task is required")
    n = terms.n
    cond = actuation_condition(terms)
    simplified = cond <= ACTUATION_CONDITION_TOL
    phi = _phi(terms)
    unbar = terms.Minv @ terms.Nc.T @ terms.U.T @ phi

    # directional derivative of every J_k|c along qd in one pass
    stacked_dot = directional_derivative(
        lambda qq: _task_jacobians_c(model, tasks, qq), terms.q, terms.qd
    )

    n_prev = np.eye(n)
    gen_force = np.zeros(n)
    cmd = HierarchicalCommand(
        torque=np.zeros(terms.U.shape[0]),
        condition_residual=cond,
        simplified=simplified,
    )
    # IMPORTANT: the inter-priority pseudo-inverses are weighted by the
    # constrained inverse inertia W = N_c M^-1 (symmetric); the plain M^-1
    # metric does not decouple priorities once constraints are present.
    w = terms.Nc @ terms.Minv
    row0 = 0
    for task, xdd in zip(tasks, xdd_des):
        jk = task.jacobian(model, terms.q)
        j_prec = jk @ n_prev
        jdot_qd = stacked_dot[row0 : row0 + task.dim] @ terms.qd
        row0 += task.dim
        scale = _task_scale(jk, w)
        lam_w = sym(pinv(j_prec @ w @ j_prec.T, scale=scale))
        if simplified:
            lam = lam_w
        else:
            mcal = j_prec @ terms.Nc @ terms.Minv @ terms.U.T
            mref = jk @ terms.Nc @ terms.Minv @ terms.U.T
            ref = float(np.linalg.norm(mref @ phi @ mref.T, 2)) if mref.size else 0.0
            lam = sym(pinv(mcal @ phi @ mcal.T, scale=ref))
        bvec = (
            np.asarray(xdd, dtype=float)
            - jdot_qd
            + jk @ terms.Minv @ terms.bc
            - jk @ w @ gen_force
        )
        force = lam @ bvec
        gen_force = gen_force + j_prec.T @ force
        n_prev = n_prev - w @ j_prec.T @ lam_w @ j_prec
        cmd.task_forces.append(force)
        cmd.task_inertias.append(lam)
        cmd.prec_jacobians.append(j_prec)
        cmd.projectors.append(n_prev.copy())
    cmd.torque = unbar.T @ terms.Nc.T @ gen_force
    return cmd


def wbc_single_task(
    model: RobotModel,
    terms: DynamicsTerms,
    task: TaskDef,
    xdd_des: np.ndarray,
) -> HierarchicalCommand:
    """Minimum-weighted-norm torque for one task, in closed form."""
    task.validate(model)
    cond = actuation_condition(terms)
    simplified = cond <= ACTUATION_CONDITION_TOL
    phi = _phi(terms)
    unbar = terms.Minv @ terms.Nc.T @ terms.U.T @ phi

    jk = task.jacobian(model, terms.q)
    j_c = jk @ terms.Nc
    jdot_qd = (
        directional_derivative(
            lambda qq: task.jacobian(model, qq) @ _constraint_projector(model, qq),
            terms.q,
            terms.qd,
        )
        @ terms.qd
    )
    w = terms.Nc @ terms.Minv
    scale = _task_scale(jk, w)
    if simplified:
        lam = sym(pinv(j_c @ terms.Minv @ j_c.T, scale=scale))
    else:
        mcal = j_c @ terms.Minv @ terms.U.T
        ref = float(np.linalg.norm(mcal @ phi @ mcal.T, 2)) if mcal.size else 0.0
        lam = sym(pinv(mcal @ phi @ mcal.T, scale=ref))
    bvec = np.asarray(xdd_des, dtype=float) - jdot_qd + jk @ terms.Minv @ terms.bc
    force = lam @ bvec
    torque = unbar.T @ terms.Nc.T @ jk.T @ force
    return HierarchicalCommand(
        torque=torque,
        task_forces=[force],
        task_inertias=[lam],
        prec_jacobians=[jk],
        projectors=[np.eye(terms.n) - w @ jk.T @ sym(pinv(jk @ w @ jk.T, scale=scale)) @ jk],
        condition_residual=cond,
        simplified=simplified,
    )
