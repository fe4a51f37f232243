"""Finite-horizon QCQP assembly along a nominal trajectory.

Linearizes the constrained dynamics in normalized time, discretizes them with
an explicit Euler step, stacks the prediction over the window, and shapes the
quadratic tracking cost, the quadratic task-hierarchy inequalities, and the
linearized kinematic equalities into a single immutable problem description.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .dynamics import bias_forces, eval_dynamics, mass_matrix
from .kinematics import constraint_jacobian, constraint_value
from .linalg import psd_project, sym
from .model import RobotModel
from .nominal import NominalTrajectory, TaskTrajectory
from .wbc import TaskDef, ordered_tasks, task_inertia

# Complex-step size for the dynamics Jacobian; exact to roundoff, no
# subtractive cancellation, so it can sit far below any finite-difference step.
CS_STEP = 1e-30

# Default constraint-force weight (PSD, small: constraint forces are cheap
# relative to task tracking but not free).
W_C_DEFAULT = 1e-2


class TranscriptionError(ValueError):
    """Raised when a subproblem cannot be assembled from the given pieces."""


@dataclass(frozen=True)
class HorizonSpec:
    """Receding-horizon timing.

    Parameters
    ----------
    t0, tf : float
        Plan start and end times [s].
    N : int
        Total grid steps over [t0, tf]; the grid spacing is dt = (tf - t0)/N.
    Np : int
        Prediction steps per subproblem.
    Ne : int
        Executed steps per subproblem; N must be divisible by Ne so the
        receding loop tiles the horizon exactly.
    """

    t0: float
    tf: float
    N: int
    Np: int
    Ne: int

    def __post_init__(self) -> None:
        if not self.tf > self.t0:
            raise TranscriptionError(f"horizon end {self.tf} must exceed start {self.t0}")
        if not 0 < self.Ne <= self.Np <= self.N:
            raise TranscriptionError(
                f"step counts must satisfy 0 < Ne <= Np <= N, got "
                f"Ne={self.Ne}, Np={self.Np}, N={self.N}"
            )
        if self.N % self.Ne != 0:
            raise TranscriptionError(
                f"N={self.N} must be a multiple of Ne={self.Ne} "
                "(the receding loop executes Ne steps per subproblem)"
            )

    @property
    def dt(self) -> float:
        """Grid spacing [s]."""
        return (self.tf - self.t0) / self.N

    @property
    def sigma(self) -> float:
        """Dilation coefficient [s]: the real duration of one prediction
        window, mapping normalized time tau in [0, 1] onto it."""
        return self.Np * self.dt

    @property
    def dtau(self) -> float:
        """Normalized-time step, 1/Np."""
        return 1.0 / self.Np

    @property
    def n_segments(self) -> int:
        """Number of receding-horizon subproblems, N/Ne."""
        return self.N // self.Ne


@dataclass(frozen=True)
class LinearizedStep:
    """One discrete step x_{i+1} = A x_i + B u_i + r of the linearized model."""

    A: np.ndarray
    B: np.ndarray
    r: np.ndarray


class QuadraticCost(NamedTuple):
    """Stacked objective (W_xx, W_x, W_uu, W_u) over (X, U).

    The scalar objective is X^T W_xx X + W_x X + U^T W_uu U + W_u U with
    X in R^{(Np+1) n_x} and U in R^{Np n_u}; constant terms are dropped.
    """

    W_xx: np.ndarray
    W_x: np.ndarray
    W_uu: np.ndarray
    W_u: np.ndarray

    def value(self, x_stack: np.ndarray, u_stack: np.ndarray) -> float:
        x = np.asarray(x_stack, dtype=float)
        u = np.asarray(u_stack, dtype=float)
        return float(
            x @ self.W_xx @ x + self.W_x @ x + u @ self.W_uu @ u + self.W_u @ u
        )


@dataclass(frozen=True)
class QuadIneq:
    """One quadratic inequality v^T J v + Z v + E <= 0, tagged with the
    priority pair and grid step that produced it."""

    J: np.ndarray
    Z: np.ndarray
    E: float
    pair: tuple[int, int]
    step: int

    def value(self, v: np.ndarray) -> float:
        v = np.asarray(v, dtype=float)
        return float(v @ self.J @ v + self.Z @ v + self.E)


@dataclass(frozen=True)
class HierarchySpec:
    """Task-priority ordering expressed as tracking-error tolerances.

    ``eps`` holds one tolerance per task, nondecreasing with eps[0] >= 0 (a
    virtual eps_0 = 0 precedes the first task). The derived pairwise margins
    are eps_k - eps_{k+1} <= 0. ``weak`` mode requires all margins to be 0:
    adjacent tasks may track equally well. ``strong`` mode requires strictly
    negative margins: each task must out-track its successor by the gap, which
    makes the constraints strict at the nominal itself.
    """

    mode: str
    eps: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.mode not in ("weak", "strong"):
            raise TranscriptionError(f"unknown hierarchy mode {self.mode!r}")
        object.__setattr__(self, "eps", tuple(float(e) for e in self.eps))
        if len(self.eps) == 0:
            raise TranscriptionError("hierarchy needs at least one task tolerance")
        if self.eps[0] < 0.0 or any(
            hi < lo for lo, hi in zip(self.eps, self.eps[1:])
        ):
            raise TranscriptionError(
                "task tolerances must be nonnegative and nondecreasing"
            )
        margins = self.margins
        if self.mode == "weak" and any(m != 0.0 for m in margins):
            raise TranscriptionError("weak hierarchy requires all pair margins = 0")
        if self.mode == "strong" and any(m >= 0.0 for m in margins):
            raise TranscriptionError("strong hierarchy requires all pair margins < 0")

    @property
    def margins(self) -> tuple[float, ...]:
        """Pairwise margins eps_k - eps_{k+1} for adjacent task pairs."""
        return tuple(a - b for a, b in zip(self.eps, self.eps[1:]))

    @classmethod
    def weak(cls, n_tasks: int) -> "HierarchySpec":
        return cls(mode="weak", eps=(0.0,) * n_tasks)

    @classmethod
    def strong(cls, n_tasks: int, gap: float = 1e-4) -> "HierarchySpec":
        if gap <= 0.0:
            raise TranscriptionError("strong hierarchy gap must be positive")
        return cls(mode="strong", eps=tuple(k * gap for k in range(n_tasks)))


@dataclass(frozen=True)
class StackedPrediction:
    """Whole-window linear prediction X = A x0 + B U + R 1.

    ``A`` is ((Np+1) n_x, n_x), ``B`` is ((Np+1) n_x, Np n_u) and block
    lower-triangular, ``R`` holds one affine column per step so the total
    offset is R @ ones(Np). The first block row is the identity map of x0.
    """

    A: np.ndarray
    B: np.ndarray
    R: np.ndarray
    n_x: int
    n_u: int
    n_steps: int

    def offset(self) -> np.ndarray:
        """Accumulated affine term R 1."""
        return self.R @ np.ones(self.n_steps)

    def predict(self, x0: np.ndarray, u_stack: np.ndarray) -> np.ndarray:
        """Stacked states over the window for initial state x0 and stacked
        inputs u_stack."""
        return self.A @ np.asarray(x0, dtype=float) + self.B @ np.asarray(
            u_stack, dtype=float
        ) + self.offset()


def state_rate(model: RobotModel, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Time derivative of x = [q; qd] under input u = [torque; F_c].

    Implements dx/dt = f(x) + g(x) u with f = [qd; -M^-1 b] and
    g = [[0, 0], [M^-1 U^T, -M^-1 Jc^T]]; the constraint force enters as a
    commanded input here, not as the force the constraint actually exerts.
    Complex-safe in x for derivative extraction.
    """
    x = np.asarray(x)
    u = np.asarray(u)
    n = model.n
    q, qd = x[:n], x[n:]
    torque, f_c = u[: model.m], u[model.m :]
    gen = model.actuation_matrix().T @ torque - bias_forces(model, q, qd)
    jc = constraint_jacobian(model, q)
    if jc.shape[0]:
        gen = gen - jc.T @ f_c
    qdd = np.linalg.solve(mass_matrix(model, q), gen)
    return np.concatenate([qd, qdd])


def linearize_step(
    model: RobotModel,
    x_nom: np.ndarray,
    u_nom: np.ndarray,
    sigma: float,
    step: int | None = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Linearize the normalized-time dynamics about one nominal point.

    Parameters
    ----------
    model : RobotModel
    x_nom : (2n,) nominal state.
    u_nom : (m + n_c,) nominal input.
    sigma : dilation coefficient [s] mapping normalized time to real time.
    step : optional grid index, only used to label numerical failures.

    Returns
    -------
    (A_tau, B_tau, r_tau) with A_tau = sigma * d(f + g u)/dx at the nominal,
    B_tau = sigma * g(x_nom) (exact), and r_tau the affine remainder chosen so
    that sigma * (f + g u)|nom = A_tau x_nom + B_tau u_nom + r_tau exactly.
    """
    x_nom = np.asarray(x_nom, dtype=float)
    u_nom = np.asarray(u_nom, dtype=float)
    n = model.n
    n_x = 2 * n
    a_tau = np.empty((n_x, n_x))
    for j in range(n_x):
        xc = x_nom.astype(complex)
        xc[j] += 1j * CS_STEP
        a_tau[:, j] = state_rate(model, xc, u_nom).imag / CS_STEP
    a_tau *= sigma

    q = x_nom[:n]
    jc = constraint_jacobian(model, q)
    gen_maps = np.hstack([model.actuation_matrix().T, -jc.T])
    b_tau = sigma * np.vstack(
        [np.zeros((n, gen_maps.shape[1])), np.linalg.solve(mass_matrix(model, q), gen_maps)]
    )
    r_tau = sigma * state_rate(model, x_nom, u_nom) - a_tau @ x_nom - b_tau @ u_nom

    if not (
        np.all(np.isfinite(a_tau))
        and np.all(np.isfinite(b_tau))
        and np.all(np.isfinite(r_tau))
    ):
        where = "" if step is None else f" at step {step}"
        raise TranscriptionError(f"linearization produced non-finite entries{where}")
    return a_tau, b_tau, r_tau


def discretize(
    a_tau: np.ndarray, b_tau: np.ndarray, r_tau: np.ndarray, dtau: float
) -> LinearizedStep:
    """Explicit-Euler step of the normalized-time linear model:
    A = A_tau dtau + I, B = B_tau dtau, r = r_tau dtau."""
    a_tau = np.asarray(a_tau, dtype=float)
    return LinearizedStep(
        A=a_tau * dtau + np.eye(a_tau.shape[0]),
        B=np.asarray(b_tau, dtype=float) * dtau,
        r=np.asarray(r_tau, dtype=float) * dtau,
    )


def stack_prediction(steps: list[LinearizedStep], x0: np.ndarray) -> StackedPrediction:
    """Concatenate per-step models into the whole-window prediction.

    Block row i of the result expresses x_i as a linear map of x0, the first
    i inputs, and the first i affine residuals; row 0 is x0 itself.
    """
    if not steps:
        raise TranscriptionError("prediction needs at least one step")
    n_x = steps[0].A.shape[0]
    n_u = steps[0].B.shape[1]
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (n_x,):
        raise TranscriptionError(
            f"initial state has shape {x0.shape}, expected ({n_x},)"
        )
    n_steps = len(steps)
    a_stack = np.zeros(((n_steps + 1) * n_x, n_x))
    b_stack = np.zeros(((n_steps + 1) * n_x, n_steps * n_u))
    r_stack = np.zeros(((n_steps + 1) * n_x, n_steps))
    a_stack[:n_x] = np.eye(n_x)
    for i, st in enumerate(steps, start=1):
        if st.A.shape != (n_x, n_x) or st.B.shape != (n_x, n_u):
            raise TranscriptionError(f"step {i - 1} has inconsistent dimensions")
        row = slice(i * n_x, (i + 1) * n_x)
        prev = slice((i - 1) * n_x, i * n_x)
        a_stack[row] = st.A @ a_stack[prev]
        b_stack[row] = st.A @ b_stack[prev]
        b_stack[row, (i - 1) * n_u : i * n_u] = st.B
        r_stack[row] = st.A @ r_stack[prev]
        r_stack[row, i - 1] = st.r
    return StackedPrediction(
        A=a_stack, B=b_stack, R=r_stack, n_x=n_x, n_u=n_u, n_steps=n_steps
    )


def _window_tasks(tasks) -> list[TaskDef]:
    """Pull TaskDefs out of a list of TaskDef or TaskTrajectory entries."""
    return [t.task if isinstance(t, TaskTrajectory) else t for t in tasks]


def hierarchy_constraints(
    model: RobotModel,
    tasks,
    nominal: NominalTrajectory,
    hierarchy: HierarchySpec,
    horizon: HorizonSpec,
    repair: str = "psd",
    start: int = 0,
) -> list[QuadIneq]:
    """Quadratic priority-ordering constraints over the stacked state.

    For each adjacent priority pair (k, k+1) and each predicted step
    i in [1, Np], emits (q_i^d - q_i)^T (J_k^T J_k - J_{k+1}^T J_{k+1})
    (q_i^d - q_i) + strictness <= 0 embedded at step i's position slot, where
    strictness is 0 in weak mode and the positive pair gap in strong mode (so
    the nominal point itself sits on the boundary / strictly violates it,
    respectively, and any feasible point must out-track the nominal ordering).

    ``repair="psd"`` (default) clips each difference block onto the positive
    semi-definite cone before the linear/constant terms are formed, keeping
    every emitted constraint truly convex; ``repair="raw"`` keeps the
    indefinite difference for nonconvex solver paths.
    """
    if repair not in ("psd", "raw"):
        raise TranscriptionError(f"unknown repair mode {repair!r}")
    defs = ordered_tasks(model, _window_tasks(tasks))
    if len(hierarchy.eps) != len(defs):
        raise TranscriptionError(
            f"hierarchy lists {len(hierarchy.eps)} task tolerances "
            f"for {len(defs)} tasks"
        )
    if nominal.states.shape[0] < 2:
        raise TranscriptionError("nominal trajectory is empty")
    n = model.n
    n_x = 2 * n
    n_big = (horizon.Np + 1) * n_x
    out: list[QuadIneq] = []
    for i in range(1, horizon.Np + 1):
        q_nom = nominal.q(start + i)
        jacs = [t.jacobian(model, q_nom) for t in defs]
        for k in range(len(defs) - 1):
            block = sym(jacs[k].T @ jacs[k] - jacs[k + 1].T @ jacs[k + 1])
            if repair == "psd":
                block = psd_project(block)
            strictness = -hierarchy.margins[k]
            j_full = np.zeros((n_big, n_big))
            z_full = np.zeros(n_big)
            col = i * n_x
            j_full[col : col + n, col : col + n] = block
            z_full[col : col + n] = -2.0 * block @ q_nom
            e_const = float(q_nom @ block @ q_nom) + strictness
            out.append(
                QuadIneq(J=j_full, Z=z_full, E=e_const, pair=(k + 1, k + 2), step=i)
            )
    return out


def kinematic_equalities(
    model: RobotModel,
    nominal: NominalTrajectory,
    horizon: HorizonSpec,
    start: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """First-order holonomic-constraint rows over the stacked state.

    Per predicted step i in [1, Np]: -Jc(q_i^d) q_i + [Jc(q_i^d) q_i^d +
    f_c(q_i^d) - c] = 0, embedded at step i's position slot. Returns
    (map, offset) with map X + offset = 0 and Np * n_c rows.
    """
    n = model.n
    n_x = 2 * n
    n_c = model.nc
    n_big = (horizon.Np + 1) * n_x
    e_map = np.zeros((horizon.Np * n_c, n_big))
    e_off = np.zeros(horizon.Np * n_c)
    if n_c == 0:
        return e_map, e_off
    targets = model.constraint_targets()
    for i in range(1, horizon.Np + 1):
        q_nom = nominal.q(start + i)
        jc = constraint_jacobian(model, q_nom)
        rows = slice((i - 1) * n_c, i * n_c)
        e_map[rows, i * n_x : i * n_x + n] = -jc
        e_off[rows] = jc @ q_nom + constraint_value(model, q_nom) - targets
    return e_map, e_off


def quadratic_cost(
    model: RobotModel,
    tasks: list[TaskTrajectory],
    nominal: NominalTrajectory,
    gains,
    w_c,
    horizon: HorizonSpec,
    start: int = 0,
) -> QuadraticCost:
    """Quadratic tracking objective along the nominal window.

    The exact per-step cost u^T W_uu u - 2 b^T W_bu u + b^T Lambda b is made
    quadratic by modeling the stacked feedback acceleration b as the PD law
    linearized through the stacked task Jacobian: b_i ~ C_i x_i + c_i with
    C_i = [-Kp J, -Kv J] and c_i = Kp J q_i^d + Kv psi_i^d (psi stacks the
    reference task velocities). Weights per step:
    W_uu = bdiag(Mcal^T Lambda Mcal, W_c), W_xx = C^T Lambda C,
    W_u = -2 b^d^T [Lambda Mcal, 0], W_x = 2 c^T Lambda C, all evaluated at
    the nominal state; the terminal step contributes state terms only.

    Parameters
    ----------
    model : RobotModel
    tasks : priority-ordered task reference trajectories.
    nominal : NominalTrajectory the window is shaped around.
    gains : optional (kp_stack, kv_stack) diagonal-gain override; None takes
        each task's own gains.
    w_c : optional constraint-force weight (scalar or (n_c, n_c)); None means
        W_C_DEFAULT * I.
    horizon : HorizonSpec
    start : first grid index of the window.
    """
    defs = ordered_tasks(model, _window_tasks(tasks))
    by_def = {id(t.task): t for t in tasks}
    refs = [by_def[id(d)] for d in defs]
    dim_b = sum(d.dim for d in defs)
    if gains is None:
        kp_stack = np.concatenate([d.kp_vec() for d in defs])
        kv_stack = np.concatenate([d.kv_vec() for d in defs])
    else:
        kp_stack = np.asarray(gains[0], dtype=float)
        kv_stack = np.asarray(gains[1], dtype=float)
        if kp_stack.shape != (dim_b,) or kv_stack.shape != (dim_b,):
            raise TranscriptionError(
                f"gain stacks must have shape ({dim_b},) to match the task stack"
            )
    n_c = model.nc
    if w_c is None:
        w_c_mat = W_C_DEFAULT * np.eye(n_c)
    else:
        w_c_mat = np.asarray(w_c, dtype=float)
        if w_c_mat.ndim == 0:
            w_c_mat = float(w_c_mat) * np.eye(n_c)
        if w_c_mat.shape != (n_c, n_c):
            raise TranscriptionError(
                f"constraint-force weight has shape {w_c_mat.shape}, "
                f"expected ({n_c}, {n_c})"
            )

    n_x = 2 * model.n
    n_u = model.m + n_c
    n_p = horizon.Np
    w_xx = np.zeros(((n_p + 1) * n_x, (n_p + 1) * n_x))
    w_x = np.zeros((n_p + 1) * n_x)
    w_uu = np.zeros((n_p * n_u, n_p * n_u))
    w_u = np.zeros(n_p * n_u)
    for i in range(n_p + 1):
        idx = start + i
        q_nom = nominal.q(idx)
        qd_nom = nominal.qd(idx)
        terms = eval_dynamics(model, q_nom, qd_nom)
        j_stack = np.vstack([d.jacobian(model, q_nom) for d in defs])
        lam = task_inertia(terms, j_stack)
        c_map = np.hstack([-kp_stack[:, None] * j_stack, -kv_stack[:, None] * j_stack])
        psi = np.concatenate([ref.velocity(idx) for ref in refs])
        c_vec = kp_stack * (j_stack @ q_nom) + kv_stack * psi
        lam_c = lam @ c_map
        xs = slice(i * n_x, (i + 1) * n_x)
        w_xx[xs, xs] = sym(c_map.T @ lam_c)
        w_x[xs] = 2.0 * c_vec @ lam_c
        if i == n_p:
            break
        mcal = j_stack @ terms.Nc @ terms.Minv @ terms.U.T
        b_nom = c_map @ np.concatenate([q_nom, qd_nom]) + c_vec
        us = slice(i * n_u, (i + 1) * n_u)
        w_uu_i = np.zeros((n_u, n_u))
        w_uu_i[: model.m, : model.m] = sym(mcal.T @ lam @ mcal)
        w_uu_i[model.m :, model.m :] = sym(w_c_mat)
        w_uu[us, us] = w_uu_i
        w_u[us] = np.concatenate([-2.0 * mcal.T @ (lam @ b_nom), np.zeros(n_c)])
    return QuadraticCost(W_xx=w_xx, W_x=w_x, W_uu=w_uu, W_u=w_u)


@dataclass(frozen=True)
class CondensedQcqp:
    """The same program with states eliminated through the prediction.

    Objective U^T P U + p U + const over the stacked inputs alone; equalities
    map U + offset = 0; quadratic inequalities as QuadIneq over U. ``const``
    keeps the eliminated-state contribution so objective values match the
    expanded form exactly.
    """

    P: np.ndarray
    p: np.ndarray
    const: float
    eq_map: np.ndarray
    eq_off: np.ndarray
    quad_ineqs: list[QuadIneq]

    def objective(self, u_stack: np.ndarray) -> float:
        u = np.asarray(u_stack, dtype=float)
        return float(u @ self.P @ u + self.p @ u + self.const)


@dataclass(frozen=True)
class QcqpProblem:
    """One finite-horizon subproblem: quadratic objective over (X, U),
    linear prediction coupling, linear kinematic equalities in X, and
    quadratic hierarchy inequalities in X."""

    objective: QuadraticCost
    equalities: tuple[np.ndarray, np.ndarray]
    quad_ineqs: list[QuadIneq]
    prediction: StackedPrediction
    x0: np.ndarray

    @property
    def n_x(self) -> int:
        return self.prediction.n_x

    @property
    def n_u(self) -> int:
        return self.prediction.n_u

    @property
    def n_steps(self) -> int:
        return self.prediction.n_steps

    @property
    def n_variables(self) -> int:
        """Stacked decision size over both views: (Np+1) n_x + Np n_u."""
        return (self.n_steps + 1) * self.n_x + self.n_steps * self.n_u

    @property
    def n_equalities(self) -> int:
        """Kinematic rows plus prediction rows."""
        return self.equalities[0].shape[0] + (self.n_steps + 1) * self.n_x

    def full_objective(self, x_stack: np.ndarray, u_stack: np.ndarray) -> float:
        return self.objective.value(x_stack, u_stack)

    def full_equalities(self) -> tuple[np.ndarray, np.ndarray]:
        """All equality rows over z = [X; U]: prediction coupling first,
        kinematic rows after, as (map, offset) with map z + offset = 0."""
        n_big = (self.n_steps + 1) * self.n_x
        n_in = self.n_steps * self.n_u
        e_map, e_off = self.equalities
        rows = n_big + e_map.shape[0]
        full_map = np.zeros((rows, n_big + n_in))
        full_off = np.zeros(rows)
        full_map[:n_big, :n_big] = np.eye(n_big)
        full_map[:n_big, n_big:] = -self.prediction.B
        full_off[:n_big] = -(self.prediction.A @ self.x0 + self.prediction.offset())
        full_map[n_big:, :n_big] = e_map
        full_off[n_big:] = e_off
        return full_map, full_off

    def condensed(self) -> CondensedQcqp:
        """Eliminate X = A x0 + B U + R 1 and restate everything over U."""
        s_map = self.prediction.B
        s_off = self.prediction.A @ self.x0 + self.prediction.offset()
        w_xx, w_x, w_uu, w_u = self.objective
        xx_s = w_xx @ s_map
        p_mat = sym(w_uu + s_map.T @ xx_s)
        p_vec = w_u + (2.0 * s_off @ xx_s + w_x @ s_map)
        const = float(s_off @ w_xx @ s_off + w_x @ s_off)
        e_map, e_off = self.equalities
        ineqs = []
        for c in self.quad_ineqs:
            j_s = c.J @ s_map
            ineqs.append(
                QuadIneq(
                    J=sym(s_map.T @ j_s),
                    Z=2.0 * s_off @ j_s + c.Z @ s_map,
                    E=float(s_off @ c.J @ s_off + c.Z @ s_off + c.E),
                    pair=c.pair,
                    step=c.step,
                )
            )
        return CondensedQcqp(
            P=p_mat,
            p=p_vec,
            const=const,
            eq_map=e_map @ s_map,
            eq_off=e_map @ s_off + e_off,
            quad_ineqs=ineqs,
        )


def assemble_qcqp(
    prediction: StackedPrediction,
    cost: QuadraticCost,
    equalities: tuple[np.ndarray, np.ndarray],
    quad_ineqs: list[QuadIneq],
    x0: np.ndarray,
) -> QcqpProblem:
    """Validate dimensions and freeze the subproblem."""
    n_big = (prediction.n_steps + 1) * prediction.n_x
    n_in = prediction.n_steps * prediction.n_u
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (prediction.n_x,):
        raise TranscriptionError(
            f"initial-state block: shape {x0.shape}, expected ({prediction.n_x},)"
        )
    if cost.W_xx.shape != (n_big, n_big) or cost.W_x.shape != (n_big,):
        raise TranscriptionError(
            f"state-cost block: shapes {cost.W_xx.shape}/{cost.W_x.shape}, "
            f"expected ({n_big}, {n_big})/({n_big},)"
        )
    if cost.W_uu.shape != (n_in, n_in) or cost.W_u.shape != (n_in,):
        raise TranscriptionError(
            f"input-cost block: shapes {cost.W_uu.shape}/{cost.W_u.shape}, "
            f"expected ({n_in}, {n_in})/({n_in},)"
        )
    e_map, e_off = equalities
    if e_map.ndim != 2 or e_map.shape[1] != n_big or e_off.shape != (e_map.shape[0],):
        raise TranscriptionError(
            f"equality block: map {e_map.shape} / offset {e_off.shape} "
            f"inconsistent with stacked state size {n_big}"
        )
    for idx, c in enumerate(quad_ineqs):
        if c.J.shape != (n_big, n_big) or c.Z.shape != (n_big,):
            raise TranscriptionError(
                f"quadratic-inequality block {idx}: shapes {c.J.shape}/{c.Z.shape} "
                f"inconsistent with stacked state size {n_big}"
            )
    return QcqpProblem(
        objective=cost,
        equalities=(e_map, e_off),
        quad_ineqs=list(quad_ineqs),
        prediction=prediction,
        x0=x0,
    )


def transcribe(
    model: RobotModel,
    tasks: list[TaskTrajectory],
    nominal: NominalTrajectory,
    hierarchy: HierarchySpec,
    horizon: HorizonSpec,
    x0: np.ndarray,
    start: int = 0,
    gains=None,
    w_c=None,
    repair: str = "psd",
) -> QcqpProblem:
    """Build the complete subproblem for one prediction window.

    Linearizes the dynamics at nominal points start..start+Np-1, stacks the
    prediction from the measured x0, and assembles cost, hierarchy
    inequalities, and kinematic equalities over the same window.
    """
    steps = []
    for i in range(horizon.Np):
        idx = start + i
        a_tau, b_tau, r_tau = linearize_step(
            model, nominal.x(idx), nominal.u(idx), horizon.sigma, step=idx
        )
        steps.append(discretize(a_tau, b_tau, r_tau, horizon.dtau))
    prediction = stack_prediction(steps, x0)
    cost = quadratic_cost(model, tasks, nominal, gains, w_c, horizon, start=start)
    ineqs = hierarchy_constraints(
        model, tasks, nominal, hierarchy, horizon, repair=repair, start=start
    )
    eqs = kinematic_equalities(model, nominal, horizon, start=start)
    return assemble_qcqp(prediction, cost, eqs, ineqs, x0)
