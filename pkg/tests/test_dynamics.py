import dataclasses

import numpy as np
import pytest

import oracles
from wbmpc.dynamics import (
    bias_forces,
    constrained_forward_dynamics,
    constraint_force,
    eval_dynamics,
    mass_matrix,
)
from wbmpc.kinematics import constraint_jacobian
from wbmpc.model import PlantState
from wbmpc.simulation import simulate_step


def test_pendulum_equilibrium_bias(pend):
    terms = eval_dynamics(pend, np.zeros(1), np.zeros(1))
    assert abs(terms.b[0]) <= 1e-12


def test_pendulum_lagrangian_oracle(pend):
    rng = np.random.default_rng(0)
    for _ in range(20):
        q = rng.uniform(-np.pi, np.pi, size=1)
        qd = rng.standard_normal(1)
        m_ref, b_ref = oracles.pendulum_mass_bias(pend, q)
        assert abs(mass_matrix(pend, q)[0, 0] - m_ref) <= 1e-10
        assert abs(bias_forces(pend, q, qd)[0] - b_ref) <= 1e-10


def test_pendulum_equilibrium_accel(pend):
    terms = eval_dynamics(pend, np.zeros(1), np.zeros(1))
    assert abs(constrained_forward_dynamics(terms, np.zeros(1))[0]) <= 1e-12


def test_pendulum_horizontal_accel(pend):
    q = np.array([np.pi / 2.0])
    terms = eval_dynamics(pend, q, np.zeros(1))
    m_ref, b_ref = oracles.pendulum_mass_bias(pend, q)
    qdd = constrained_forward_dynamics(terms, np.zeros(1))
    assert abs(qdd[0] - (-b_ref / m_ref)) <= 1e-10


def test_constraint_force_empty_without_constraints(arm):
    terms = eval_dynamics(arm, np.zeros(2), np.zeros(2))
    assert constraint_force(terms, np.zeros(2)).shape == (0,)


def test_constraint_force_kkt_at_rest(scorpio):
    terms = eval_dynamics(scorpio, scorpio.reference_q(), np.zeros(4))
    qdd_ref, fc_ref = oracles.kkt_dae(terms, np.zeros(2))
    assert np.abs(constraint_force(terms, np.zeros(2)) - fc_ref).max() <= 1e-8
    assert np.abs(constrained_forward_dynamics(terms, np.zeros(2)) - qdd_ref).max() <= 1e-8


@pytest.mark.parametrize("key", ["mini-scorpio", "mini-scorpio-nl"])
def test_constrained_dynamics_kkt_random(all_models, key):
    model = all_models[key]
    rng = np.random.default_rng(42)
    for _ in range(100):
        q = model.reference_q() + 0.7 * rng.standard_normal(model.n)
        qd = rng.standard_normal(model.n)
        tau = rng.standard_normal(model.m)
        terms = eval_dynamics(model, q, qd)
        qdd_ref, fc_ref = oracles.kkt_dae(terms, tau)
        assert np.abs(constraint_force(terms, tau) - fc_ref).max() <= 1e-8
        qdd = constrained_forward_dynamics(terms, tau)
        assert np.abs(qdd - qdd_ref).max() <= 1e-8
        # acceleration-level constraint satisfaction
        assert np.abs(terms.Jc @ qdd + terms.Jc_dot @ qd).max() <= 1e-8


def test_projector_identities(all_models):
    rng = np.random.default_rng(7)
    for model in all_models.values():
        for _ in range(25):
            q = model.reference_q() + 0.7 * rng.standard_normal(model.n)
            terms = eval_dynamics(model, q, rng.standard_normal(model.n))
            if model.nc == 0:
                assert np.array_equal(terms.Nc, np.eye(model.n))
                continue
            assert np.abs(terms.Nc @ terms.Nc - terms.Nc).max() <= 1e-10
            assert np.abs(terms.Jc @ terms.Nc).max() <= 1e-10
            assert np.abs(terms.Nc @ terms.Minv - terms.Minv @ terms.Nc.T).max() <= 1e-10


def test_jc_dot_matches_finer_difference(scorpio_nl):
    rng = np.random.default_rng(9)
    for _ in range(10):
        q = scorpio_nl.reference_q() + 0.3 * rng.standard_normal(4)
        qd = rng.standard_normal(4)
        terms = eval_dynamics(scorpio_nl, q, qd)
        h = 1e-7
        ref = (constraint_jacobian(scorpio_nl, q + h * qd)
               - constraint_jacobian(scorpio_nl, q - h * qd)) / (2.0 * h)
        assert np.abs(terms.Jc_dot - ref).max() <= 5e-7


def test_kinetic_energy_conserved_without_gravity(arm):
    model = dataclasses.replace(arm, gravity=(0.0, 0.0, 0.0))
    state = PlantState(t=0.0, q=np.array([0.3, -0.5]), qd=np.array([1.0, -2.0]))
    e0 = oracles.mechanical_energy(model, state.q, state.qd)
    for _ in range(1000):
        state = simulate_step(model, state, np.zeros(2), 1e-3)
    e1 = oracles.mechanical_energy(model, state.q, state.qd)
    assert abs(e1 - e0) / max(1.0, abs(e0)) <= 1e-6
