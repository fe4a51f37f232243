"""Forward kinematics, geometric Jacobians, and holonomic constraint maps.

All evaluators accept complex joint vectors so that callers can differentiate
through them with the complex-step trick; every operation below is analytic
(no branches on values, no absolute values, no decompositions).
"""

from __future__ import annotations

import numpy as np

from .linalg import cross3, directional_derivative
from .model import RobotModel

__all__ = [
    "link_frames",
    "point_world",
    "point_jacobian",
    "constraint_value",
    "constraint_jacobian",
    "constraint_jacobian_dot",
]

_UNIT = {0: np.array([1.0, 0, 0]), 1: np.array([0, 1.0, 0]), 2: np.array([0, 0, 1.0])}


def _rpy_matrix(rpy) -> np.ndarray:
    """Fixed-frame roll-pitch-yaw rotation Rz(y) @ Ry(p) @ Rx(r)."""
    r, p, y = rpy
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    return np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )


def _axis_rotation(axis: np.ndarray, angle) -> np.ndarray:
    """Rodrigues rotation about a unit axis; analytic in the angle."""
    c = np.cos(angle)
    s = np.sin(angle)
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    eye = np.eye(3)
    return eye + s * k + (1.0 - c) * (k @ k)


def link_frames(model: RobotModel, q: np.ndarray):
    """World pose of every link frame plus per-joint world axes.

    Returns
    -------
    R : (n, 3, 3) rotation of each link frame
    p : (n, 3) origin of each link frame
    axes : (n, 3) joint axis in world coordinates
    """
    n = model.n
    dtype = np.result_type(np.asarray(q).dtype, float)
    rs = np.zeros((n, 3, 3), dtype=dtype)
    ps = np.zeros((n, 3), dtype=dtype)
    axes = np.zeros((n, 3), dtype=dtype)
    for i, joint in enumerate(model.joints):
        if joint.parent < 0:
            r_parent = np.eye(3, dtype=dtype)
            p_parent = np.zeros(3, dtype=dtype)
        else:
            r_parent = rs[joint.parent]
            p_parent = ps[joint.parent]
        r_j = r_parent @ _rpy_matrix(joint.offset_rpy)
        p_j = p_parent + r_parent @ np.asarray(joint.offset_xyz, dtype=float)
        unit = _UNIT[joint.axis_index]
        axes[i] = r_j @ unit
        if joint.kind == "revolute":
            rs[i] = r_j @ _axis_rotation(unit, q[i])
            ps[i] = p_j
        else:
            rs[i] = r_j
            ps[i] = p_j + axes[i] * q[i]
    return rs, ps, axes


def _chain(model: RobotModel, link: int) -> list[int]:
    """Joint indices from the base to ``link`` inclusive."""
    out = []
    i = link
    while i >= 0:
        out.append(i)
        i = model.joints[i].parent
    return out[::-1]


def point_world(model: RobotModel, q: np.ndarray, link: int, point_xyz) -> np.ndarray:
    rs, ps, _ = link_frames(model, q)
    return ps[link] + rs[link] @ np.asarray(point_xyz, dtype=float)


def point_jacobian(model: RobotModel, q: np.ndarray, link: int, point_xyz) -> np.ndarray:
    """Translational geometric Jacobian (3 x n) of a point fixed to a link."""
    rs, ps, axes = link_frames(model, q)
    target = ps[link] + rs[link] @ np.asarray(point_xyz, dtype=float)
    jac = np.zeros((3, model.n), dtype=target.dtype)
    for j in _chain(model, link):
        if model.joints[j].kind == "revolute":
            jac[:, j] = cross3(axes[j], target - ps[j])
        else:
            jac[:, j] = axes[j]
    return jac


def constraint_value(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """Stacked f_c(q) for all constraint blocks (targets not subtracted)."""
    if model.nc == 0:
        return np.zeros(0, dtype=np.result_type(np.asarray(q).dtype, float))
    rows = []
    for c in model.constraints:
        if c.type == "joint_linear":
            rows.append(np.atleast_1d(np.asarray(c.coeffs) @ q))
        else:
            p = point_world(model, q, c.link, c.point_xyz)
            rows.append(p[list(c.axis_indices)])
    return np.concatenate(rows)


def constraint_jacobian(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """Stacked Jacobian J_c(q) (nc x n) of the constraint map."""
    dtype = np.result_type(np.asarray(q).dtype, float)
    if model.nc == 0:
        return np.zeros((0, model.n), dtype=dtype)
    blocks = []
    for c in model.constraints:
        if c.type == "joint_linear":
            blocks.append(np.asarray(c.coeffs, dtype=float).reshape(1, -1).astype(dtype))
        else:
            jac = point_jacobian(model, q, c.link, c.point_xyz)
            blocks.append(jac[list(c.axis_indices), :])
    return np.vstack(blocks)


def constraint_jacobian_dot(model: RobotModel, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
    """Time derivative of J_c along qd.

    Exact zero when every constraint row is linear in q; otherwise a central
    finite difference of J_c along the velocity direction.
    """
    if model.nc == 0:
        return np.zeros((0, model.n))
    if all(c.type == "joint_linear" for c in model.constraints):
        return np.zeros((model.nc, model.n))
    return directional_derivative(lambda qq: constraint_jacobian(model, qq), q, qd)
