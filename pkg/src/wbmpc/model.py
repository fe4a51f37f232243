"""Robot model description and structured-text (YAML) model files.

A model is a fixed-base kinematic tree of revolute/prismatic joints with one
rigid body per joint, a selection of actuated joints, and a list of holonomic
constraints f_c(q) = c. Constraints are either linear in the joint coordinates
(one row, constant Jacobian) or hold selected world coordinates of a body
point fixed (curved rows, configuration-dependent Jacobian).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
import yaml

__all__ = [
    "ModelError",
    "JointDef",
    "LinkDef",
    "ConstraintDef",
    "RobotModel",
    "PlantState",
    "load_model",
    "save_model",
]

_AXES = ("rx", "ry", "rz", "px", "py", "pz")
_AXIS_NAMES = {"x": 0, "y": 1, "z": 2}


class ModelError(ValueError):
    """Raised for structurally invalid model definitions or files."""


@dataclass(frozen=True)
class JointDef:
    """Single-dof joint: axis code, parent joint index, fixed parent offset."""

    axis: str
    parent: int
    offset_xyz: tuple[float, float, float] = (0.0, 0.0, 0.0)
    offset_rpy: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def kind(self) -> str:
        return "revolute" if self.axis.startswith("r") else "prismatic"

    @property
    def axis_index(self) -> int:
        return _AXIS_NAMES[self.axis[1]]


@dataclass(frozen=True)
class LinkDef:
    """Rigid body attached to a joint frame.

    ``inertia_6`` is (Ixx, Iyy, Izz, Ixy, Ixz, Iyz) about the COM, expressed
    in the link frame.
    """

    mass: float
    com_xyz: tuple[float, float, float]
    inertia_6: tuple[float, float, float, float, float, float]

    def inertia_matrix(self) -> np.ndarray:
        ixx, iyy, izz, ixy, ixz, iyz = self.inertia_6
        return np.array([[ixx, ixy, ixz], [ixy, iyy, iyz], [ixz, iyz, izz]])


@dataclass(frozen=True)
class ConstraintDef:
    """One holonomic constraint block.

    type "joint_linear": coeffs @ q = target (a single row).
    type "frame_point":  world coordinates ``axes`` of ``point`` on link
    ``link`` equal ``target`` (len(axes) rows).
    """

    type: str
    coeffs: tuple[float, ...] = ()
    target: tuple[float, ...] = ()
    link: int = -1
    point_xyz: tuple[float, float, float] = (0.0, 0.0, 0.0)
    axes: tuple[str, ...] = ()

    @property
    def rows(self) -> int:
        return 1 if self.type == "joint_linear" else len(self.axes)

    @property
    def axis_indices(self) -> tuple[int, ...]:
        return tuple(_AXIS_NAMES[a] for a in self.axes)


@dataclass(frozen=True)
class RobotModel:
    """Fixed-base articulated model with actuation selection and constraints."""

    name: str
    joints: tuple[JointDef, ...]
    links: tuple[LinkDef, ...]
    actuated: tuple[int, ...]
    constraints: tuple[ConstraintDef, ...] = ()
    gravity: tuple[float, float, float] = (0.0, -9.81, 0.0)
    q_ref: tuple[float, ...] = ()

    @property
    def n(self) -> int:
        return len(self.joints)

    @property
    def m(self) -> int:
        return len(self.actuated)

    @property
    def nc(self) -> int:
        return sum(c.rows for c in self.constraints)

    def actuation_matrix(self) -> np.ndarray:
        """Selection U (m x n) with U^T tau scattering actuated torques."""
        u = np.zeros((self.m, self.n))
        for row, j in enumerate(self.actuated):
            u[row, j] = 1.0
        return u

    def gravity_vector(self) -> np.ndarray:
        return np.asarray(self.gravity, dtype=float)

    def reference_q(self) -> np.ndarray:
        if self.q_ref:
            return np.asarray(self.q_ref, dtype=float)
        return np.zeros(self.n)

    def constraint_targets(self) -> np.ndarray:
        """Stacked right-hand side c of f_c(q) = c."""
        vals: list[float] = []
        for c in self.constraints:
            vals.extend(c.target)
        return np.asarray(vals, dtype=float)

    def validate(self) -> None:
        """Raise ModelError with a field path for any structural defect."""
        if self.n < 1:
            raise ModelError("joints: at least one joint is required")
        if len(self.links) != self.n:
            raise ModelError(
                f"links: expected {self.n} links (one per joint), got {len(self.links)}"
            )
        for i, j in enumerate(self.joints):
            if j.axis not in _AXES:
                raise ModelError(f"joints[{i}].axis: {j.axis!r} not in {_AXES}")
            if not -1 <= j.parent < i:
                raise ModelError(
                    f"joints[{i}].parent: {j.parent} must be -1 or a previous joint index"
                )
        for i, link in enumerate(self.links):
            if not link.mass > 0.0:
                raise ModelError(f"links[{i}].mass: must be > 0, got {link.mass}")
            eigs = np.linalg.eigvalsh(link.inertia_matrix())
            if eigs[0] < -1e-12:
                raise ModelError(
                    f"links[{i}].inertia_6: inertia matrix must be PSD, min eig {eigs[0]:.3e}"
                )
        if len(set(self.actuated)) != len(self.actuated):
            raise ModelError("actuated: indices must be unique")
        for k, idx in enumerate(self.actuated):
            if not 0 <= idx < self.n:
                raise ModelError(f"actuated[{k}]: joint index {idx} out of range")
        if self.q_ref and len(self.q_ref) != self.n:
            raise ModelError(f"q_ref: expected {self.n} entries, got {len(self.q_ref)}")
        for k, c in enumerate(self.constraints):
            if c.type not in ("joint_linear", "frame_point"):
                raise ModelError(f"constraints[{k}].type: unknown type {c.type!r}")
            if c.type == "joint_linear":
                if len(c.coeffs) != self.n:
                    raise ModelError(
                        f"constraints[{k}].coeffs: expected {self.n} entries, got {len(c.coeffs)}"
                    )
                if len(c.target) != 1:
                    raise ModelError(f"constraints[{k}].target: expected 1 entry")
            else:
                if not 0 <= c.link < self.n:
                    raise ModelError(f"constraints[{k}].link: index {c.link} out of range")
                if not c.axes or any(a not in _AXIS_NAMES for a in c.axes):
                    raise ModelError(
                        f"constraints[{k}].rows: axes must be a non-empty subset of x/y/z"
                    )
                if len(c.target) != len(c.axes):
                    raise ModelError(
                        f"constraints[{k}].target: expected {len(c.axes)} entries"
                    )
        if self.nc > self.n:
            raise ModelError(
                f"constraints: total rows {self.nc} exceed dof count {self.n}"
            )
        if self.nc > 0:
            # defer to kinematics for the Jacobian; imported here to keep the
            # module dependency one-way everywhere else
            from .kinematics import constraint_jacobian

            jc = constraint_jacobian(self, self.reference_q())
            sv = np.linalg.svd(jc, compute_uv=False)
            if sv[-1] <= 1e-8 * max(sv[0], 1.0):
                raise ModelError(
                    "constraints: Jacobian is row-rank deficient at the reference "
                    f"configuration (singular values {np.array2string(sv, precision=3)})"
                )


@dataclass
class PlantState:
    """Joint-space state (t, q, qd)."""

    t: float
    q: np.ndarray
    qd: np.ndarray

    def copy(self) -> "PlantState":
        return PlantState(self.t, self.q.copy(), self.qd.copy())

    def vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.qd])


def _floats(seq, path: str, length: int | None = None) -> tuple[float, ...]:
    if not isinstance(seq, (list, tuple)):
        raise ModelError(f"{path}: expected a list")
    try:
        out = tuple(float(v) for v in seq)
    except (TypeError, ValueError) as exc:
        raise ModelError(f"{path}: non-numeric entry ({exc})") from exc
    if length is not None and len(out) != length:
        raise ModelError(f"{path}: expected {length} entries, got {len(out)}")
    return out


def model_from_dict(data: dict, source: str = "<dict>") -> RobotModel:
    """Build and validate a RobotModel from parsed structured text."""
    if not isinstance(data, dict):
        raise ModelError(f"{source}: top level must be a mapping")
    for key in ("joints", "links", "actuated"):
        if key not in data:
            raise ModelError(f"{key}: missing required section")
    joints = []
    for i, jd in enumerate(data["joints"]):
        if not isinstance(jd, dict) or "axis" not in jd:
            raise ModelError(f"joints[{i}]: expected a mapping with an 'axis' key")
        joints.append(
            JointDef(
                axis=str(jd["axis"]),
                parent=int(jd.get("parent", i - 1)),
                offset_xyz=_floats(jd.get("offset_xyz", (0, 0, 0)), f"joints[{i}].offset_xyz", 3),
                offset_rpy=_floats(jd.get("offset_rpy", (0, 0, 0)), f"joints[{i}].offset_rpy", 3),
            )
        )
    links = []
    for i, ld in enumerate(data["links"]):
        if not isinstance(ld, dict) or "mass" not in ld:
            raise ModelError(f"links[{i}]: expected a mapping with a 'mass' key")
        links.append(
            LinkDef(
                mass=float(ld["mass"]),
                com_xyz=_floats(ld.get("com_xyz", (0, 0, 0)), f"links[{i}].com_xyz", 3),
                inertia_6=_floats(ld.get("inertia_6", (0,) * 6), f"links[{i}].inertia_6", 6),
            )
        )
    constraints = []
    for k, cd in enumerate(data.get("constraints", []) or []):
        ctype = cd.get("type")
        if ctype == "joint_linear":
            target = cd.get("target", 0.0)
            if isinstance(target, (int, float)):
                target = (float(target),)
            constraints.append(
                ConstraintDef(
                    type="joint_linear",
                    coeffs=_floats(cd.get("coeffs", ()), f"constraints[{k}].coeffs"),
                    target=_floats(target, f"constraints[{k}].target"),
                )
            )
        elif ctype == "frame_point":
            frame = cd.get("frame", {})
            if not isinstance(frame, dict):
                raise ModelError(f"constraints[{k}].frame: expected a mapping")
            rows = cd.get("rows", ())
            if not isinstance(rows, (list, tuple)):
                raise ModelError(f"constraints[{k}].rows: expected a list of axis names")
            constraints.append(
                ConstraintDef(
                    type="frame_point",
                    link=int(frame.get("link", -1)),
                    point_xyz=_floats(frame.get("point", (0, 0, 0)), f"constraints[{k}].frame.point", 3),
                    axes=tuple(str(a) for a in rows),
                    target=_floats(cd.get("target", ()), f"constraints[{k}].target"),
                )
            )
        else:
            raise ModelError(f"constraints[{k}].type: unknown type {ctype!r}")
    model = RobotModel(
        name=str(data.get("name", source)),
        joints=tuple(joints),
        links=tuple(links),
        actuated=tuple(int(a) for a in data["actuated"]),
        constraints=tuple(constraints),
        gravity=_floats(data.get("gravity", (0.0, -9.81, 0.0)), "gravity", 3),
        q_ref=_floats(data.get("q_ref", ()), "q_ref") if data.get("q_ref") else (),
    )
    if "n" in data and int(data["n"]) != model.n:
        raise ModelError(f"n: declared {data['n']} but {model.n} joints are defined")
    model.validate()
    return model


def model_to_dict(model: RobotModel) -> dict:
    out: dict = {
        "name": model.name,
        "n": model.n,
        "gravity": list(model.gravity),
        "joints": [
            {
                "axis": j.axis,
                "parent": j.parent,
                "offset_xyz": list(j.offset_xyz),
                "offset_rpy": list(j.offset_rpy),
            }
            for j in model.joints
        ],
        "links": [
            {
                "mass": l.mass,
                "com_xyz": list(l.com_xyz),
                "inertia_6": list(l.inertia_6),
            }
            for l in model.links
        ],
        "actuated": list(model.actuated),
    }
    if model.q_ref:
        out["q_ref"] = list(model.q_ref)
    cons = []
    for c in model.constraints:
        if c.type == "joint_linear":
            cons.append({"type": "joint_linear", "coeffs": list(c.coeffs), "target": c.target[0]})
        else:
            cons.append(
                {
                    "type": "frame_point",
                    "frame": {"link": c.link, "point": list(c.point_xyz)},
                    "rows": list(c.axes),
                    "target": list(c.target),
                }
            )
    if cons:
        out["constraints"] = cons
    return out


def load_model(path: str) -> RobotModel:
    """Load and validate a YAML model file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ModelError(f"{path}: YAML parse error: {exc}") from exc
    return model_from_dict(data, source=path)


def save_model(model: RobotModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(model_to_dict(model), fh, sort_keys=False)


# keep dataclasses import referenced for consumers doing replace()
_ = dataclasses.replace
