"""Benchmark models.

All models are planar chains living in the world x-y plane: every joint
rotates about +z, gravity points along -y, and the zero pose of a chain lies
along +x unless a base offset says otherwise. The pendulum's base offset
rotates its zero pose to hang straight down so its joint angle is measured
from the vertical.
"""

from __future__ import annotations

import math

import numpy as np

from .kinematics import point_world
from .model import ConstraintDef, JointDef, LinkDef, RobotModel

__all__ = [
    "pendulum",
    "two_link_arm",
    "mini_scorpio",
    "mini_scorpio_nl",
    "BUILTIN_MODELS",
]

_GRAVITY = (0.0, -9.81, 0.0)


def _rod_link(mass: float, length: float) -> LinkDef:
    izz = mass * length * length / 12.0
    return LinkDef(mass=mass, com_xyz=(length / 2.0, 0.0, 0.0), inertia_6=(0.0, izz, izz, 0.0, 0.0, 0.0))


def pendulum() -> RobotModel:
    """Single rod (1 kg, 1 m, COM at 0.5 m) with the angle zero straight down."""
    model = RobotModel(
        name="pendulum",
        joints=(JointDef(axis="rz", parent=-1, offset_rpy=(0.0, 0.0, -math.pi / 2.0)),),
        links=(_rod_link(1.0, 1.0),),
        actuated=(0,),
        gravity=_GRAVITY,
    )
    model.validate()
    return model


def two_link_arm() -> RobotModel:
    """Fully actuated planar 2R arm, no constraints."""
    model = RobotModel(
        name="two-link-arm",
        joints=(
            JointDef(axis="rz", parent=-1),
            JointDef(axis="rz", parent=0, offset_xyz=(0.5, 0.0, 0.0)),
        ),
        links=(_rod_link(1.0, 0.5), _rod_link(0.8, 0.4)),
        actuated=(0, 1),
        gravity=_GRAVITY,
    )
    model.validate()
    return model


_SCORPIO_LENGTHS = (0.3, 0.3, 0.3, 0.1)
_SCORPIO_QREF = (-math.pi / 2.0, math.pi / 6.0, -math.pi / 6.0, math.pi / 6.0)


def _scorpio_chain() -> tuple[tuple[JointDef, ...], tuple[LinkDef, ...]]:
    joints = []
    links = []
    for i, length in enumerate(_SCORPIO_LENGTHS):
        offset = (0.0, 0.0, 0.0) if i == 0 else (_SCORPIO_LENGTHS[i - 1], 0.0, 0.0)
        joints.append(JointDef(axis="rz", parent=i - 1, offset_xyz=offset))
        links.append(_rod_link(1.0, length))
    return tuple(joints), tuple(links)


def mini_scorpio() -> RobotModel:
    """Planar 4R chain, joints 1-2 actuated, parallelogram-style couplings.

    The two joint-space constraints q2 + q3 = 0 and q3 + q4 = 0 (1-indexed)
    leave two degrees of freedom driven by the two actuated joints.
    """
    joints, links = _scorpio_chain()
    model = RobotModel(
        name="mini-scorpio",
        joints=joints,
        links=links,
        actuated=(0, 1),
        constraints=(
            ConstraintDef(type="joint_linear", coeffs=(0.0, 1.0, 1.0, 0.0), target=(0.0,)),
            ConstraintDef(type="joint_linear", coeffs=(0.0, 0.0, 1.0, 1.0), target=(0.0,)),
        ),
        gravity=_GRAVITY,
        q_ref=_SCORPIO_QREF,
    )
    model.validate()
    return model


def mini_scorpio_nl() -> RobotModel:
    """Same chain with a curved constraint: the third link's tip point is
    pinned in world x and y, giving a configuration-dependent J_c and a
    nonzero Jcdot."""
    joints, links = _scorpio_chain()
    base = RobotModel(
        name="mini-scorpio-nl",
        joints=joints,
        links=links,
        actuated=(0, 1),
        gravity=_GRAVITY,
        q_ref=_SCORPIO_QREF,
    )
    pin = point_world(base, np.asarray(_SCORPIO_QREF), 2, (_SCORPIO_LENGTHS[2], 0.0, 0.0))
    model = RobotModel(
        name="mini-scorpio-nl",
        joints=joints,
        links=links,
        actuated=(0, 1),
        constraints=(
            ConstraintDef(
                type="frame_point",
                link=2,
                point_xyz=(_SCORPIO_LENGTHS[2], 0.0, 0.0),
                axes=("x", "y"),
                target=(float(pin[0]), float(pin[1])),
            ),
        ),
        gravity=_GRAVITY,
        q_ref=_SCORPIO_QREF,
    )
    model.validate()
    return model


BUILTIN_MODELS = {
    "pendulum": pendulum,
    "two-link-arm": two_link_arm,
    "mini-scorpio": mini_scorpio,
    "mini-scorpio-nl": mini_scorpio_nl,
}
