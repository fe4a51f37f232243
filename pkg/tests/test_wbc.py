"""Hierarchical whole-body controller vs. generic equality-QP oracles."""

import numpy as np
import pytest

import oracles
from wbmpc.dynamics import DynamicsTerms, constrained_forward_dynamics, eval_dynamics
from wbmpc.wbc import (
    ACTUATION_CONDITION_TOL,
    TaskDef,
    actuation_condition,
    ordered_tasks,
    pd_task_accel,
    task_inertia,
    wbc_hierarchy,
    wbc_single_task,
)

WRIST_XY = TaskDef(
    name="wrist", priority=1, kind="point", link=3, point_xyz=(0.1, 0.0, 0.0), axes=("x", "y")
)
WRIST_Y = TaskDef(
    name="wrist-y", priority=1, kind="point", link=3, point_xyz=(0.1, 0.0, 0.0), axes=("y",)
)


def scalar_terms(mass: float) -> DynamicsTerms:
    """Hand-built terms for a fully actuated, unconstrained scalar system."""
    return DynamicsTerms(
        q=np.zeros(1),
        qd=np.zeros(1),
        M=np.array([[mass]]),
        Minv=np.array([[1.0 / mass]]),
        b=np.zeros(1),
        U=np.eye(1),
        fc_value=np.zeros(0),
        Jc=np.zeros((0, 1)),
        Jc_dot=np.zeros((0, 1)),
        Lambda_c=np.zeros((0, 0)),
        Jc_bar=np.zeros((1, 0)),
        Nc=np.eye(1),
        bc=np.zeros(1),
    )


def projected_jac(model, task, q):
    terms = eval_dynamics(model, q, np.zeros(model.n))
    return task.jacobian(model, q) @ terms.Nc


def fd_jdot_qd(model, task, q, qd, h=1e-6):
    """Central-difference d/dt (J N_c) qd, written out independently."""
    plus = projected_jac(model, task, q + h * qd)
    minus = projected_jac(model, task, q - h * qd)
    return ((plus - minus) / (2.0 * h)) @ qd


def oracle_bvec(model, task, terms, xdd_des):
    j = task.jacobian(model, terms.q)
    return (
        np.atleast_1d(np.asarray(xdd_des, dtype=float))
        - fd_jdot_qd(model, task, terms.q, terms.qd)
        + j @ terms.Minv @ terms.bc
    )


# ---------------------------------------------------------------------------
# PD law


def test_pd_accel_fixed_point_is_zero():
    out = pd_task_accel(
        np.ones(2), np.zeros(2), np.ones(2), np.zeros(2), np.array([40.0, 40.0]), np.array([2.0, 2.0])
    )
    assert np.all(out == 0.0)


def test_pd_accel_reference_gains():
    out = pd_task_accel(
        np.zeros(2),
        np.zeros(2),
        np.array([0.1, 0.0]),
        np.zeros(2),
        np.array([40.0, 40.0]),
        np.array([2.0, 2.0]),
    )
    assert np.abs(out - np.array([4.0, 0.0])).max() <= 1e-12


def test_pd_accel_zero_kp_keeps_velocity_term_only():
    rng = np.random.default_rng(3)
    xd = rng.standard_normal(3)
    xd_des = rng.standard_normal(3)
    kv = np.array([2.0, 3.0, 4.0])
    out = pd_task_accel(rng.standard_normal(3), xd, rng.standard_normal(3), xd_des, np.zeros(3), kv)
    assert np.array_equal(out, kv * (xd_des - xd))


# ---------------------------------------------------------------------------
# task-space inertia


def test_task_inertia_scalar_unconstrained():
    lam = task_inertia(scalar_terms(2.0), np.array([[1.0]]))
    assert np.abs(lam - np.array([[2.0]])).max() <= 1e-12


def test_task_inertia_zero_jacobian_truncates_to_zero(arm):
    terms = eval_dynamics(arm, np.array([0.3, 1.1]), np.zeros(2))
    lam = task_inertia(terms, np.zeros((2, arm.n)))
    assert np.all(lam == 0.0)


def test_task_inertia_simplification_matches_general_form(scorpio):
    """With benign underactuation the projected inertia (J Nc Minv J')^+
    equals the general (Mcal Phi Mcal')^+ form."""
    rng = np.random.default_rng(11)
    q_ref = np.asarray(scorpio.reference_q())
    for _ in range(10):
        q = q_ref + 0.4 * rng.standard_normal(scorpio.n)
        terms = eval_dynamics(scorpio, q, rng.standard_normal(scorpio.n))
        assert actuation_condition(terms) <= ACTUATION_CONDITION_TOL
        j = WRIST_XY.jacobian(scorpio, q)
        lam = task_inertia(terms, j)
        u_nc = terms.U @ terms.Nc
        phi = np.linalg.pinv(u_nc @ terms.Minv @ u_nc.T)
        mcal = j @ terms.Nc @ terms.Minv @ terms.U.T
        general = np.linalg.pinv(mcal @ phi @ mcal.T)
        assert np.abs(lam - general).max() <= 1e-8


# ---------------------------------------------------------------------------
# single-task torque law


def test_single_task_unconstrained_reduction(arm):
    """With U = I and no constraints the law collapses to J' (J Minv J')^-1 bvec."""
    rng = np.random.default_rng(5)
    task = TaskDef(
        name="ee", priority=1, kind="point", link=1, point_xyz=(0.3, 0.0, 0.0), axes=("x", "y")
    )
    for _ in range(10):
        q = rng.uniform(0.4, 2.4, size=2)
        terms = eval_dynamics(arm, q, np.zeros(2))
        xdd = rng.standard_normal(2)
        cmd = wbc_single_task(arm, terms, task, xdd)
        j = task.jacobian(arm, q)
        bvec = xdd + j @ terms.Minv @ terms.b
        expected = j.T @ np.linalg.solve(j @ terms.Minv @ j.T, bvec)
        assert np.abs(cmd.torque - expected).max() <= 1e-9


def test_single_task_zero_target_zero_torque(scorpio):
    q = np.asarray(scorpio.reference_q())
    terms = eval_dynamics(scorpio, q, np.zeros(scorpio.n))
    j = WRIST_XY.jacobian(scorpio, q)
    xdd = -j @ terms.Minv @ terms.bc  # makes bvec vanish
    cmd = wbc_single_task(scorpio, terms, WRIST_XY, xdd)
    assert np.abs(cmd.torque).max() <= 1e-12
    assert np.abs(cmd.task_forces[0]).max() <= 1e-12


@pytest.mark.parametrize("key", ["pendulum", "two-link-arm", "mini-scorpio"])
def test_single_task_matches_equality_qp(all_models, key):
    """Closed-form torque equals the generic KKT solve of

        min G' Phi^-1 G   s.t.  (J Nc Minv U') G = bvec

    wherever the actuation condition holds."""
    model = all_models[key]
    rng = np.random.default_rng(17)
    if key == "pendulum":
        tasks = [TaskDef(name="tip", priority=1, kind="point", link=0, point_xyz=(0.5, 0.0, 0.0), axes=("y",))]
    elif key == "two-link-arm":
        tasks = [TaskDef(name="ee", priority=1, kind="point", link=1, point_xyz=(0.3, 0.0, 0.0), axes=("x", "y"))]
    else:
        tasks = [WRIST_XY, WRIST_Y]
    q_ref = np.asarray(model.reference_q())
    for i in range(25):
        q = q_ref + 0.5 * rng.standard_normal(model.n)
        qd = 0.5 * rng.standard_normal(model.n) if i % 2 else np.zeros(model.n)
        terms = eval_dynamics(model, q, qd)
        assert actuation_condition(terms) <= ACTUATION_CONDITION_TOL
        task = tasks[i % len(tasks)]
        xdd = rng.standard_normal(task.dim)
        cmd = wbc_single_task(model, terms, task, xdd)
        bvec = oracle_bvec(model, task, terms, xdd)
        gamma = oracles.torque_equality_qp(terms, task.jacobian(model, q), bvec)
        assert np.abs(cmd.torque - gamma).max() <= 1e-8


def test_single_task_achieves_consistent_targets(scorpio):
    rng = np.random.default_rng(23)
    q_ref = np.asarray(scorpio.reference_q())
    for _ in range(10):
        q = q_ref + 0.4 * rng.standard_normal(4)
        qd = 0.5 * rng.standard_normal(4)
        terms = eval_dynamics(scorpio, q, qd)
        xdd = rng.standard_normal(2)
        cmd = wbc_single_task(scorpio, terms, WRIST_XY, xdd)
        bvec = oracle_bvec(scorpio, WRIST_XY, terms, xdd)
        mcal = WRIST_XY.jacobian(scorpio, q) @ terms.Nc @ terms.Minv @ terms.U.T
        assert np.abs(mcal @ cmd.torque - bvec).max() <= 1e-8


def test_single_task_torque_is_weighted_minimum(scorpio):
    """Any other torque meeting a redundant task costs at least as much."""
    rng = np.random.default_rng(29)
    q_ref = np.asarray(scorpio.reference_q())
    for _ in range(10):
        q = q_ref + 0.4 * rng.standard_normal(4)
        terms = eval_dynamics(scorpio, q, 0.5 * rng.standard_normal(4))
        xdd = rng.standard_normal(1)
        cmd = wbc_single_task(scorpio, terms, WRIST_Y, xdd)
        bvec = oracle_bvec(scorpio, WRIST_Y, terms, xdd)
        mcal = WRIST_Y.jacobian(scorpio, q) @ terms.Nc @ terms.Minv @ terms.U.T
        basis = oracles.null_basis(mcal)
        assert basis.shape[1] >= 1
        best = oracles.effort_norm(terms, cmd.torque)
        for _ in range(5):
            alt = cmd.torque + basis @ rng.standard_normal(basis.shape[1])
            assert np.abs(mcal @ alt - bvec).max() <= 1e-8
            assert best <= oracles.effort_norm(terms, alt) + 1e-8


# ---------------------------------------------------------------------------
# hierarchy


def test_hierarchy_single_task_matches_closed_form(all_models):
    rng = np.random.default_rng(31)
    for key, model in all_models.items():
        q = np.asarray(model.reference_q()) + 0.3 * rng.standard_normal(model.n)
        terms = eval_dynamics(model, q, 0.5 * rng.standard_normal(model.n))
        task = TaskDef(name="j", priority=1, kind="joint", joints=(0,))
        xdd = rng.standard_normal(1)
        one = wbc_single_task(model, terms, task, xdd)
        hier = wbc_hierarchy(model, terms, [task], [xdd])
        assert np.abs(one.torque - hier.torque).max() <= 1e-12, key


def test_hierarchy_orthogonal_tasks_match_stacked(arm):
    rng = np.random.default_rng(37)
    t1 = TaskDef(name="j0", priority=1, kind="joint", joints=(0,))
    t2 = TaskDef(name="j1", priority=2, kind="joint", joints=(1,))
    both = TaskDef(name="j01", priority=1, kind="joint", joints=(0, 1))
    for _ in range(5):
        q = rng.uniform(0.4, 2.4, size=2)
        terms = eval_dynamics(arm, q, rng.standard_normal(2))
        xdd = rng.standard_normal(2)
        hier = wbc_hierarchy(arm, terms, [t1, t2], [xdd[:1], xdd[1:]])
        stacked = wbc_single_task(arm, terms, both, xdd)
        assert np.abs(hier.torque - stacked.torque).max() <= 1e-8


def test_hierarchy_conflicting_tasks_exhaust_null_space(pend):
    terms = eval_dynamics(pend, np.array([0.4]), np.array([0.2]))
    t1 = TaskDef(name="a", priority=1, kind="joint", joints=(0,))
    t2 = TaskDef(name="b", priority=2, kind="joint", joints=(0,))
    xdd1, xdd2 = np.array([1.5]), np.array([-7.0])
    cmd = wbc_hierarchy(pend, terms, [t1, t2], [xdd1, xdd2])
    assert np.abs(cmd.projectors[0]).max() <= 1e-10  # N_1 = 0
    assert np.abs(cmd.task_forces[1]).max() <= 1e-10  # task 2 silenced
    alone = wbc_hierarchy(pend, terms, [t1], [xdd1])
    assert np.abs(cmd.torque - alone.torque).max() <= 1e-10
    qdd = constrained_forward_dynamics(terms, cmd.torque)
    assert np.abs(qdd - xdd1).max() <= 1e-6


@pytest.mark.parametrize("key", ["mini-scorpio", "mini-scorpio-nl"])
def test_hierarchy_projector_identities_and_decoupling(all_models, key):
    """N_k idempotent, J_prec(k) N_k = 0, and lower-priority forces never
    accelerate higher-priority tasks."""
    model = all_models[key]
    rng = np.random.default_rng(41)
    q_ref = np.asarray(model.reference_q())
    t1 = WRIST_Y
    t2 = TaskDef(name="j0", priority=2, kind="joint", joints=(0,))
    for _ in range(10):
        q = q_ref + 0.4 * rng.standard_normal(4)
        terms = eval_dynamics(model, q, 0.5 * rng.standard_normal(4))
        cmd = wbc_hierarchy(model, terms, [t1, t2], [rng.standard_normal(1), rng.standard_normal(1)])
        for n_k, j_prec in zip(cmd.projectors, cmd.prec_jacobians):
            assert np.abs(n_k @ n_k - n_k).max() <= 1e-10
            assert np.abs(j_prec @ n_k).max() <= 1e-10
        coupling = (
            t1.jacobian(model, q)
            @ terms.Minv
            @ terms.Nc.T
            @ cmd.prec_jacobians[1].T
            @ cmd.task_forces[1]
        )
        assert np.abs(coupling).max() <= 1e-8


def test_hierarchy_reproduces_commanded_accelerations(scorpio):
    """Feeding the command back through the constrained task dynamics returns
    the commanded accelerations for every full-rank task."""
    rng = np.random.default_rng(43)
    q_ref = np.asarray(scorpio.reference_q())
    t1 = WRIST_Y
    t2 = TaskDef(name="j0", priority=2, kind="joint", joints=(0,))
    for _ in range(8):
        q = q_ref + 0.4 * rng.standard_normal(4)
        qd_raw = 0.5 * rng.standard_normal(4)
        probe = eval_dynamics(scorpio, q, np.zeros(4))
        qd = qd_raw - np.linalg.pinv(probe.Jc) @ (probe.Jc @ qd_raw)
        terms = eval_dynamics(scorpio, q, qd)
        xdds = [rng.standard_normal(1), rng.standard_normal(1)]
        cmd = wbc_hierarchy(scorpio, terms, [t1, t2], xdds)
        qdd = constrained_forward_dynamics(terms, cmd.torque)
        h = 1e-6
        for task, xdd in zip((t1, t2), xdds):
            # operational route: J_k|c Minv U' G + d/dt(J_k Nc) qd - J_k Minv bc
            jd = fd_jdot_qd(scorpio, task, q, qd)
            realized = (
                projected_jac(scorpio, task, q) @ terms.Minv @ terms.U.T @ cmd.torque
                + jd
                - task.jacobian(scorpio, q) @ terms.Minv @ terms.bc
            )
            assert np.abs(realized - xdd).max() <= 1e-6
            # physical route (constant Jc): task accel of the integrated plant
            jdot = (
                (task.jacobian(scorpio, q + h * qd) - task.jacobian(scorpio, q - h * qd)) / (2 * h)
            ) @ qd
            physical = task.jacobian(scorpio, q) @ qdd + jdot
            assert np.abs(physical - xdd).max() <= 1e-6


# ---------------------------------------------------------------------------
# task validation


def test_ordered_tasks_rejects_bad_priorities(arm):
    t1 = TaskDef(name="a", priority=1, kind="joint", joints=(0,))
    t_dup = TaskDef(name="b", priority=1, kind="joint", joints=(1,))
    t_gap = TaskDef(name="c", priority=3, kind="joint", joints=(1,))
    with pytest.raises(ValueError, match="contiguous"):
        ordered_tasks(arm, [t1, t_dup])
    with pytest.raises(ValueError, match="contiguous"):
        ordered_tasks(arm, [t1, t_gap])
    with pytest.raises(ValueError, match="at least one task"):
        ordered_tasks(arm, [])
    t2 = TaskDef(name="c", priority=2, kind="joint", joints=(1,))
    assert [t.name for t in ordered_tasks(arm, [t2, t1])] == ["a", "c"]


def test_task_validation_messages(arm):
    with pytest.raises(ValueError, match="axes"):
        TaskDef(name="bad", priority=1, kind="point", link=0, axes=("w",)).validate(arm)
    with pytest.raises(ValueError, match="link"):
        TaskDef(name="bad", priority=1, kind="point", link=5, axes=("x",)).validate(arm)
    with pytest.raises(ValueError, match="joint indices"):
        TaskDef(name="bad", priority=1, kind="joint", joints=(9,)).validate(arm)
    with pytest.raises(ValueError, match="kp"):
        TaskDef(name="bad", priority=1, kind="joint", joints=(0,), kp=(1.0, 2.0)).validate(arm)
    with pytest.raises(ValueError, match="kind"):
        TaskDef(name="bad", priority=1, kind="wrench", joints=(0,)).validate(arm)


def test_hierarchy_requires_matching_target_count(pend):
    terms = eval_dynamics(pend, np.zeros(1), np.zeros(1))
    task = TaskDef(name="a", priority=1, kind="joint", joints=(0,))
    with pytest.raises(ValueError, match="one commanded acceleration per task"):
        wbc_hierarchy(pend, terms, [task], [])
