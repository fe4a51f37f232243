import math
from pathlib import Path

import numpy as np
import pytest

import wbmpc
from wbmpc.dynamics import eval_dynamics
from wbmpc.kinematics import constraint_jacobian, constraint_value
from wbmpc.model import ModelError, load_model, model_from_dict, model_to_dict, save_model

DATA = Path(wbmpc.__file__).parent / "data"


def test_builtin_dimensions(all_models):
    pend = all_models["pendulum"]
    assert (pend.n, pend.m, pend.nc) == (1, 1, 0)
    arm = all_models["two-link-arm"]
    assert (arm.n, arm.m, arm.nc) == (2, 2, 0)
    sc = all_models["mini-scorpio"]
    assert (sc.n, sc.m, sc.nc) == (4, 2, 2)
    assert sc.actuated == (0, 1)
    assert np.allclose(
        sc.reference_q(), [-math.pi / 2, math.pi / 6, -math.pi / 6, math.pi / 6]
    )
    nl = all_models["mini-scorpio-nl"]
    assert (nl.n, nl.m, nl.nc) == (4, 2, 2)


def test_builtin_link_parameters(scorpio):
    lengths = (0.3, 0.3, 0.3, 0.1)
    for link, length in zip(scorpio.links, lengths):
        assert link.mass == 1.0
        assert link.com_xyz == (length / 2.0, 0.0, 0.0)
        assert link.inertia_6[2] == pytest.approx(length * length / 12.0)


def test_data_files_match_factories(all_models):
    for key, model in all_models.items():
        path = DATA / f"{key.replace('-', '_')}.yaml"
        assert model_to_dict(load_model(str(path))) == model_to_dict(model)


def test_save_load_round_trip(tmp_path, scorpio_nl):
    path = tmp_path / "m.yaml"
    save_model(scorpio_nl, str(path))
    assert model_to_dict(load_model(str(path))) == model_to_dict(scorpio_nl)


@pytest.mark.parametrize(
    "edit, pattern",
    [
        (lambda d: d["links"][0].__setitem__("mass", -1.0), r"links\[0\]\.mass"),
        (
            lambda d: d["links"][0].__setitem__("inertia_6", [-1.0, 0, 0, 0, 0, 0]),
            r"links\[0\]\.inertia_6",
        ),
        (lambda d: d["joints"][1].__setitem__("axis", "q"), r"joints\[1\]\.axis"),
        (lambda d: d.__setitem__("actuated", [0, 0]), r"actuated"),
        (lambda d: d.__setitem__("q_ref", [0.0]), r"q_ref"),
        (
            lambda d: d["constraints"][0].__setitem__("coeffs", [1.0]),
            r"constraints\[0\]\.coeffs",
        ),
        (
            lambda d: d["constraints"][0].__setitem__("type", "bogus"),
            r"constraints\[0\]\.type",
        ),
    ],
)
def test_validation_errors_name_the_field(scorpio, edit, pattern):
    data = model_to_dict(scorpio)
    edit(data)
    with pytest.raises(ModelError, match=pattern):
        model_from_dict(data)


def test_scorpio_linear_constraints(scorpio):
    rng = np.random.default_rng(3)
    expected = np.array([[0.0, 1.0, 1.0, 0.0], [0.0, 0.0, 1.0, 1.0]])
    for _ in range(5):
        q = scorpio.reference_q() + rng.standard_normal(4)
        assert np.array_equal(constraint_jacobian(scorpio, q), expected)
        assert np.allclose(constraint_value(scorpio, q), expected @ q)
        terms = eval_dynamics(scorpio, q, rng.standard_normal(4))
        assert np.abs(terms.Jc_dot).max() == 0.0
    # the reference pose satisfies both couplings
    assert np.allclose(constraint_value(scorpio, scorpio.reference_q()), 0.0)


def test_scorpio_nl_pin(scorpio_nl):
    # the Cartesian pin targets are computed at the reference pose
    val = constraint_value(scorpio_nl, scorpio_nl.reference_q())
    assert np.allclose(val, scorpio_nl.constraint_targets(), atol=1e-12)
    # curved constraint: the Jacobian depends on q, so Jc_dot is nonzero
    rng = np.random.default_rng(5)
    q = scorpio_nl.reference_q() + 0.3 * rng.standard_normal(4)
    terms = eval_dynamics(scorpio_nl, q, rng.standard_normal(4))
    assert np.abs(terms.Jc_dot).max() > 1e-6


def test_mass_matrix_spd_everywhere(all_models):
    rng = np.random.default_rng(11)
    for model in all_models.values():
        for _ in range(10):
            q = model.reference_q() + rng.standard_normal(model.n)
            terms = eval_dynamics(model, q, np.zeros(model.n))
            assert np.abs(terms.M - terms.M.T).max() <= 1e-12
            assert np.linalg.eigvalsh(terms.M)[0] > 0.0
