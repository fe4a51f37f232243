"""Scenario files: the experiment description consumed by the command line.

A scenario names a robot model (builtin or a model file next to the scenario),
a prioritized set of point tasks with linearly interpolated references, the
horizon/hierarchy, and the plant/solver settings. Parsing validates eagerly
and reports the offending field path; serialize -> parse is the identity.
Angles accept a unit suffix ("deg" or "rad"); bare numbers are radians.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np
import yaml

from .model import ModelError, PlantState, RobotModel, load_model
from .models import BUILTIN_MODELS
from .nominal import TaskTrajectory
from .qcqp import QcqpError, SolverSettings
from .simulation import MpcConfig, SimConfig, SimulationError
from .transcription import HierarchySpec, HorizonSpec, TranscriptionError
from .wbc import TaskDef

__all__ = [
    "ScenarioError",
    "TaskSpec",
    "Scenario",
    "load_scenario",
    "save_scenario",
    "scenario_from_dict",
    "scenario_to_dict",
    "build_references",
    "initial_state",
    "controller_config",
]

_INTERPOLATIONS = ("linear",)


class ScenarioError(ValueError):
    """Raised for invalid scenario files; the message starts with the field path."""


def _require(data: dict, key: str, path: str):
    if key not in data:
        raise ScenarioError(f"{path}{key}: missing required field")
    return data[key]


def _mapping(value, path: str) -> dict:
    if not isinstance(value, dict):
        raise ScenarioError(f"{path}: expected a mapping")
    return value


def _floats(seq, path: str, length: int | None = None) -> tuple[float, ...]:
    if not isinstance(seq, (list, tuple)):
        raise ScenarioError(f"{path}: expected a list")
    try:
        out = tuple(float(v) for v in seq)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{path}: non-numeric entry ({exc})") from exc
    if length is not None and len(out) != length:
        raise ScenarioError(f"{path}: expected {length} entries, got {len(out)}")
    return out


def _angle(value, path: str) -> float:
    """One angle in radians; strings carry a 'deg' or 'rad' unit suffix."""
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if isinstance(value, str):
        parts = value.split()
        if len(parts) == 2 and parts[1] in ("deg", "rad"):
            try:
                number = float(parts[0])
            except ValueError as exc:
                raise ScenarioError(f"{path}: non-numeric angle {value!r}") from exc
            return math.radians(number) if parts[1] == "deg" else number
        raise ScenarioError(
            f"{path}: expected '<number> deg' or '<number> rad', got {value!r}"
        )
    raise ScenarioError(f"{path}: expected a number or unit-tagged string")


def _angles(seq, path: str, length: int | None = None) -> tuple[float, ...]:
    if not isinstance(seq, (list, tuple)):
        raise ScenarioError(f"{path}: expected a list")
    out = tuple(_angle(v, f"{path}[{i}]") for i, v in enumerate(seq))
    if length is not None and len(out) != length:
        raise ScenarioError(f"{path}: expected {length} entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class TaskSpec:
    """One prioritized point task with a linearly interpolated reference."""

    name: str
    priority: int
    link: int
    point_xyz: tuple[float, float, float]
    axes: tuple[str, ...]
    x_start: tuple[float, ...]
    x_end: tuple[float, ...]
    kp: tuple[float, ...]
    kv: tuple[float, ...]
    interpolation: str = "linear"

    def __post_init__(self) -> None:
        dim = len(self.axes)
        if self.interpolation not in _INTERPOLATIONS:
            raise ScenarioError(
                f"tasks[{self.name}].interpolation: unknown mode "
                f"{self.interpolation!r} (expected one of {_INTERPOLATIONS})"
            )
        for fname in ("x_start", "x_end", "kp", "kv"):
            if len(getattr(self, fname)) != dim:
                raise ScenarioError(
                    f"tasks[{self.name}].{fname}: expected {dim} entries "
                    f"(one per axis), got {len(getattr(self, fname))}"
                )

    def to_task(self) -> TaskDef:
        return TaskDef(
            name=self.name,
            priority=self.priority,
            kind="point",
            link=self.link,
            point_xyz=self.point_xyz,
            axes=self.axes,
            kp=self.kp,
            kv=self.kv,
        )

    def reference(self, task: TaskDef, horizon: HorizonSpec) -> TaskTrajectory:
        """Reference samples on the horizon grid (N+1 rows)."""
        theta = np.linspace(0.0, 1.0, horizon.N + 1)[:, None]
        start = np.asarray(self.x_start, dtype=float)
        end = np.asarray(self.x_end, dtype=float)
        return TaskTrajectory(
            task=task,
            samples=(1.0 - theta) * start + theta * end,
            dt=horizon.dt,
        )


@dataclass(frozen=True)
class Scenario:
    """Validated experiment description (everything a run needs)."""

    name: str
    model_ref: str
    model: RobotModel
    tasks: tuple[TaskSpec, ...]
    horizon: HorizonSpec
    hierarchy: HierarchySpec
    q0: tuple[float, ...]
    qd0: tuple[float, ...]
    sim: SimConfig
    solver: SolverSettings
    feedback_mode: str = "measured"
    w_c: float | None = None


def _resolve_model(ref: str, base_dir: str) -> RobotModel:
    if ref in BUILTIN_MODELS:
        return BUILTIN_MODELS[ref]()
    path = ref if os.path.isabs(ref) else os.path.join(base_dir, ref)
    if not os.path.exists(path):
        raise ScenarioError(
            f"model: {ref!r} is neither a builtin "
            f"({', '.join(sorted(BUILTIN_MODELS))}) nor an existing file"
        )
    try:
        return load_model(path)
    except ModelError as exc:
        raise ScenarioError(f"model: {exc}") from exc


def _task_from_dict(td, index: int) -> TaskSpec:
    path = f"tasks[{index}]"
    td = _mapping(td, path)
    frame = _mapping(_require(td, "frame", f"{path}."), f"{path}.frame")
    axes = _require(td, "axes", f"{path}.")
    if not isinstance(axes, (list, tuple)) or not axes:
        raise ScenarioError(f"{path}.axes: expected a non-empty list of axis names")
    return TaskSpec(
        name=str(_require(td, "name", f"{path}.")),
        priority=int(_require(td, "priority", f"{path}.")),
        link=int(_require(frame, "link", f"{path}.frame.")),
        point_xyz=_floats(frame.get("point", (0.0, 0.0, 0.0)), f"{path}.frame.point", 3),
        axes=tuple(str(a) for a in axes),
        x_start=_floats(_require(td, "x_start", f"{path}."), f"{path}.x_start"),
        x_end=_floats(_require(td, "x_end", f"{path}."), f"{path}.x_end"),
        kp=_floats(_require(td, "kp", f"{path}."), f"{path}.kp"),
        kv=_floats(_require(td, "kv", f"{path}."), f"{path}.kv"),
        interpolation=str(td.get("interpolation", "linear")),
    )


def _horizon_from_dict(hd: dict) -> HorizonSpec:
    hd = _mapping(hd, "horizon")
    t0 = float(hd.get("t0", 0.0))
    tf = float(_require(hd, "tf", "horizon."))
    dt = float(_require(hd, "dt", "horizon."))
    if dt <= 0.0:
        raise ScenarioError("horizon.dt: must be positive")
    steps = (tf - t0) / dt
    n = int(round(steps))
    if n < 1 or abs(steps - n) > 1e-9 * max(1.0, abs(steps)):
        raise ScenarioError(
            f"horizon.dt: (tf - t0)/dt = {steps:.12g} must be a positive integer"
        )
    try:
        return HorizonSpec(
            t0=t0, tf=tf, N=n,
            Np=int(_require(hd, "Np", "horizon.")),
            Ne=int(_require(hd, "Ne", "horizon.")),
        )
    except TranscriptionError as exc:
        raise ScenarioError(f"horizon: {exc}") from exc


def _settings_from_dict(sd, defaults, path: str, error):
    """Dataclass ``defaults`` updated with the overrides in mapping ``sd``."""
    sd = _mapping(sd or {}, path)
    known = {f.name for f in fields(defaults)}
    unknown = sorted(set(sd) - known)
    if unknown:
        raise ScenarioError(
            f"{path}.{unknown[0]}: unknown field (expected one of {sorted(known)})"
        )
    try:
        return replace(defaults, **sd)
    except (error, TypeError, ValueError) as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def scenario_from_dict(data: dict, source: str = "<dict>",
                       base_dir: str = ".") -> Scenario:
    """Build and validate a Scenario from parsed structured text."""
    data = _mapping(data, source)
    model_ref = str(_require(data, "model", ""))
    model = _resolve_model(model_ref, base_dir)

    raw_tasks = _require(data, "tasks", "")
    if not isinstance(raw_tasks, (list, tuple)) or not raw_tasks:
        raise ScenarioError("tasks: expected a non-empty list")
    tasks = tuple(_task_from_dict(td, i) for i, td in enumerate(raw_tasks))
    for spec in tasks:
        try:
            spec.to_task().validate(model)
        except ValueError as exc:
            raise ScenarioError(f"tasks[{spec.name}]: {exc}") from exc

    horizon = _horizon_from_dict(_require(data, "horizon", ""))

    hd = _mapping(data.get("hierarchy", {"mode": "weak"}), "hierarchy")
    mode = str(hd.get("mode", "weak"))
    try:
        if "epsilons" in hd:
            hierarchy = HierarchySpec(
                mode=mode, eps=_floats(hd["epsilons"], "hierarchy.epsilons")
            )
        elif mode == "weak":
            hierarchy = HierarchySpec.weak(len(tasks))
        else:
            hierarchy = HierarchySpec.strong(len(tasks))
        if len(hierarchy.eps) != len(tasks):
            raise ScenarioError(
                f"hierarchy.epsilons: expected {len(tasks)} entries "
                f"(one per task), got {len(hierarchy.eps)}"
            )
    except TranscriptionError as exc:
        raise ScenarioError(f"hierarchy: {exc}") from exc

    q0 = _angles(_require(data, "initial_q", ""), "initial_q", model.n)
    qd0 = _floats(data.get("initial_qd", (0.0,) * model.n), "initial_qd", model.n)

    cd = _mapping(data.get("controller", {}), "controller")
    unknown = sorted(set(cd) - {"feedback_mode", "w_c"})
    if unknown:
        raise ScenarioError(f"controller.{unknown[0]}: unknown field")
    feedback_mode = str(cd.get("feedback_mode", "measured"))
    if feedback_mode not in ("measured", "predicted"):
        raise ScenarioError(
            f"controller.feedback_mode: expected 'measured' or 'predicted', "
            f"got {feedback_mode!r}"
        )
    w_c = cd.get("w_c")
    w_c = None if w_c is None else float(w_c)

    sim = _settings_from_dict(data.get("sim"), SimConfig(), "sim", SimulationError)
    solver = _settings_from_dict(
        data.get("solver"), SolverSettings(), "solver", QcqpError
    )
    if sim.dt_sim > horizon.dt + 1e-15:
        raise ScenarioError(
            f"sim.dt_sim: {sim.dt_sim} must not exceed the control period "
            f"dt={horizon.dt}"
        )
    return Scenario(
        name=str(data.get("name", source)),
        model_ref=model_ref,
        model=model,
        tasks=tasks,
        horizon=horizon,
        hierarchy=hierarchy,
        q0=q0,
        qd0=qd0,
        sim=sim,
        solver=solver,
        feedback_mode=feedback_mode,
        w_c=w_c,
    )


def scenario_to_dict(scenario: Scenario) -> dict:
    """Plain-data form of a scenario; angles are emitted in radians."""
    return {
        "name": scenario.name,
        "model": scenario.model_ref,
        "tasks": [
            {
                "name": t.name,
                "priority": t.priority,
                "frame": {"link": t.link, "point": list(t.point_xyz)},
                "axes": list(t.axes),
                "x_start": list(t.x_start),
                "x_end": list(t.x_end),
                "interpolation": t.interpolation,
                "kp": list(t.kp),
                "kv": list(t.kv),
            }
            for t in scenario.tasks
        ],
        "horizon": {
            "t0": scenario.horizon.t0,
            "tf": scenario.horizon.tf,
            "dt": scenario.horizon.dt,
            "Np": scenario.horizon.Np,
            "Ne": scenario.horizon.Ne,
        },
        "hierarchy": {
            "mode": scenario.hierarchy.mode,
            "epsilons": list(scenario.hierarchy.eps),
        },
        "initial_q": list(scenario.q0),
        "initial_qd": list(scenario.qd0),
        "controller": {
            "feedback_mode": scenario.feedback_mode,
            **({} if scenario.w_c is None else {"w_c": scenario.w_c}),
        },
        "sim": {
            "dt_sim": scenario.sim.dt_sim,
            "baumgarte_alpha": scenario.sim.baumgarte_alpha,
            "baumgarte_beta": scenario.sim.baumgarte_beta,
        },
        "solver": {
            f.name: getattr(scenario.solver, f.name)
            for f in fields(SolverSettings)
            if getattr(scenario.solver, f.name) != getattr(SolverSettings, f.name)
        },
    }


def load_scenario(path: str) -> Scenario:
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ScenarioError(f"{path}: malformed file ({exc})") from exc
    return scenario_from_dict(
        data, source=os.path.basename(path), base_dir=os.path.dirname(path) or "."
    )


def save_scenario(scenario: Scenario, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(scenario_to_dict(scenario), fh, sort_keys=False)


def build_references(scenario: Scenario) -> list[TaskTrajectory]:
    """Task references on the scenario grid, in file order."""
    return [t.reference(t.to_task(), scenario.horizon) for t in scenario.tasks]


def initial_state(scenario: Scenario) -> PlantState:
    return PlantState(
        t=scenario.horizon.t0,
        q=np.asarray(scenario.q0, dtype=float),
        qd=np.asarray(scenario.qd0, dtype=float),
    )


def controller_config(scenario: Scenario) -> MpcConfig:
    return MpcConfig(
        horizon=scenario.horizon,
        hierarchy=scenario.hierarchy,
        feedback_mode=scenario.feedback_mode,
        solver=scenario.solver,
        w_c=scenario.w_c,
        sim=scenario.sim,
    )
