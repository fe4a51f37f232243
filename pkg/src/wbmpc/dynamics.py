"""Constrained rigid-body dynamics and null-space projection terms.

The unconstrained equation of motion is

    M(q) qdd + b(q, qd) + J_c^T F_c = U^T tau

with M from a unit-acceleration sweep of a recursive Newton-Euler pass and
b = rnea(q, qd, 0). Holonomic constraints f_c(q) = c are eliminated with the
dynamically consistent projector

    Lambda_c = (J_c M^-1 J_c^T)^+        Jc_bar = M^-1 J_c^T Lambda_c
    N_c = I - Jc_bar J_c                 b_c = N_c^T b + J_c^T Lambda_c Jcdot qd

which yields the reaction force and the projected forward dynamics

    F_c  = Jc_bar^T (U^T tau - b) + Lambda_c Jcdot qd
    qdd  = M^-1 (N_c^T U^T tau - b_c).

All evaluators are complex-safe in (q, qd) up to and including M, b, and J_c
so callers can complex-step through the state-space vector field; the
projection terms use pseudo-inverses and are real-only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinematics import (
    constraint_jacobian,
    constraint_jacobian_dot,
    constraint_value,
    link_frames,
)
from .linalg import cross3, pinv, sym
from .model import RobotModel

__all__ = [
    "DynamicsTerms",
    "rnea",
    "mass_matrix",
    "bias_forces",
    "eval_dynamics",
    "constraint_force",
    "constrained_forward_dynamics",
]


def rnea(
    model: RobotModel,
    q: np.ndarray,
    qd: np.ndarray,
    qdd: np.ndarray,
    gravity: bool = True,
) -> np.ndarray:
    """Inverse dynamics: generalized forces for the motion (q, qd, qdd)."""
    n = model.n
    rs, ps, axes = link_frames(model, q)
    dtype = rs.dtype
    w = np.zeros((n, 3), dtype=dtype)
    wd = np.zeros((n, 3), dtype=dtype)
    a = np.zeros((n, 3), dtype=dtype)
    a_com = np.zeros((n, 3), dtype=dtype)
    r_com = np.zeros((n, 3), dtype=dtype)
    g_vec = model.gravity_vector() if gravity else np.zeros(3)

    for i, joint in enumerate(model.joints):
        pa = joint.parent
        if pa < 0:
            w_p = np.zeros(3, dtype=dtype)
            wd_p = np.zeros(3, dtype=dtype)
            a_p = np.zeros(3, dtype=dtype)
            p_p = np.zeros(3, dtype=dtype)
        else:
            w_p, wd_p, a_p, p_p = w[pa], wd[pa], a[pa], ps[pa]
        rel = ps[i] - p_p
        a_origin = a_p + cross3(wd_p, rel) + cross3(w_p, cross3(w_p, rel))
        z = axes[i]
        if joint.kind == "revolute":
            w[i] = w_p + z * qd[i]
            wd[i] = wd_p + z * qdd[i] + cross3(w_p, z * qd[i])
            a[i] = a_origin
        else:
            w[i] = w_p
            wd[i] = wd_p
            a[i] = a_origin + z * qdd[i] + 2.0 * cross3(w_p, z * qd[i])
        r_com[i] = rs[i] @ np.asarray(model.links[i].com_xyz, dtype=float)
        a_com[i] = a[i] + cross3(wd[i], r_com[i]) + cross3(w[i], cross3(w[i], r_com[i]))

    f = np.zeros((n, 3), dtype=dtype)
    mom = np.zeros((n, 3), dtype=dtype)
    tau = np.zeros(n, dtype=dtype)
    children: list[list[int]] = [[] for _ in range(n)]
    for i, joint in enumerate(model.joints):
        if joint.parent >= 0:
            children[joint.parent].append(i)
    for i in range(n - 1, -1, -1):
        link = model.links[i]
        force = link.mass * (a_com[i] - g_vec)
        inertia_w = rs[i] @ link.inertia_matrix() @ rs[i].T
        torque = inertia_w @ wd[i] + cross3(w[i], inertia_w @ w[i])
        f_i = force.copy()
        n_i = torque + cross3(r_com[i], force)
        for c in children[i]:
            f_i = f_i + f[c]
            n_i = n_i + mom[c] + cross3(ps[c] - ps[i], f[c])
        f[i] = f_i
        mom[i] = n_i
        if model.joints[i].kind == "revolute":
            tau[i] = axes[i] @ n_i
        else:
            tau[i] = axes[i] @ f_i
    return tau


def mass_matrix(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """Joint-space inertia via unit accelerations at zero velocity/gravity."""
    n = model.n
    dtype = np.result_type(np.asarray(q).dtype, float)
    zero = np.zeros(n)
    m = np.zeros((n, n), dtype=dtype)
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        m[:, j] = rnea(model, q, zero, e, gravity=False)
    if dtype == np.float64:
        m = sym(m)
    else:
        m = 0.5 * (m + m.T)
    return m


def bias_forces(model: RobotModel, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
    """Coriolis/centrifugal plus gravity generalized forces b(q, qd)."""
    return rnea(model, q, qd, np.zeros(model.n), gravity=True)


@dataclass
class DynamicsTerms:
    """All configuration-dependent terms needed by the controllers.

    Carries the evaluation point (q, qd) so downstream operators can form
    task Jacobians and directional derivatives at the same state.
    """

    q: np.ndarray
    qd: np.ndarray
    M: np.ndarray
    Minv: np.ndarray
    b: np.ndarray
    U: np.ndarray
    fc_value: np.ndarray
    Jc: np.ndarray
    Jc_dot: np.ndarray
    Lambda_c: np.ndarray
    Jc_bar: np.ndarray
    Nc: np.ndarray
    bc: np.ndarray

    @property
    def n(self) -> int:
        return self.M.shape[0]

    @property
    def nc(self) -> int:
        return self.Jc.shape[0]


def eval_dynamics(model: RobotModel, q: np.ndarray, qd: np.ndarray) -> DynamicsTerms:
    """Evaluate every dynamics/projection term at one state."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    if q.shape != (model.n,) or qd.shape != (model.n,):
        raise ValueError(f"state must have shape ({model.n},), got {q.shape}/{qd.shape}")
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
        raise ValueError("state contains non-finite entries")
    m_mat = mass_matrix(model, q)
    minv = sym(np.linalg.inv(m_mat))
    b = bias_forces(model, q, qd)
    jc = constraint_jacobian(model, q)
    jc_dot = constraint_jacobian_dot(model, q, qd)
    if model.nc:
        lam_c = sym(pinv(jc @ minv @ jc.T))
        jbar_c = minv @ jc.T @ lam_c
        nc_mat = np.eye(model.n) - jbar_c @ jc
        bc = nc_mat.T @ b + jc.T @ lam_c @ (jc_dot @ qd)
    else:
        lam_c = np.zeros((0, 0))
        jbar_c = np.zeros((model.n, 0))
        nc_mat = np.eye(model.n)
        bc = b.copy()
    return DynamicsTerms(
        q=q,
        qd=qd,
        M=m_mat,
        Minv=minv,
        b=b,
        U=model.actuation_matrix(),
        fc_value=constraint_value(model, q),
        Jc=jc,
        Jc_dot=jc_dot,
        Lambda_c=lam_c,
        Jc_bar=jbar_c,
        Nc=nc_mat,
        bc=bc,
    )


def constraint_force(terms: DynamicsTerms, tau: np.ndarray) -> np.ndarray:
    """Constraint reaction F_c for applied actuated torques tau."""
    if terms.nc == 0:
        return np.zeros(0)
    gen = terms.U.T @ tau - terms.b
    return terms.Jc_bar.T @ gen + terms.Lambda_c @ (terms.Jc_dot @ terms.qd)


def constrained_forward_dynamics(terms: DynamicsTerms, tau: np.ndarray) -> np.ndarray:
    """Projected forward dynamics qdd = M^-1 (N_c^T U^T tau - b_c)."""
    return terms.Minv @ (terms.Nc.T @ (terms.U.T @ tau) - terms.bc)
