import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exitgame.dynamics import (ControlSet, ControlSystem, Dynamics, DynamicsError, RunningCost, check_isaacs,
                               hamiltonian_H, hamiltonian_script, lower_minmax, p0, p0_index, q0, q0_index,
                               upper_maxmin)


def system(model="relative-pursuit", P=None, Q=None, dim=1, cost=None, params=None):
    P = ControlSet(np.asarray(P if P is not None else [[-1.0], [1.0]]), "P")
    Q = ControlSet(np.asarray(Q if Q is not None else [[-0.5], [0.5]]), "Q")
    dyn = Dynamics.from_model(model, dim, params, P.dim, Q.dim)
    return ControlSystem(dyn, P, Q, cost or RunningCost("constant", {"value": 1.0}, 1.0))


def test_lower_hamiltonian_table_value():
    # min over p of max over q of (p - q) * 1, plus g (1 - z) with z = 0
    s = system()
    assert hamiltonian_H(s, [0.0], [1.0], 0.0) == pytest.approx(0.5)
    assert hamiltonian_script(s, [0.0], [1.0]) == pytest.approx(0.5)


def test_hamiltonian_z_term():
    s = system()
    assert hamiltonian_H(s, [0.0], [0.0], 0.25) == pytest.approx(0.75)


def test_isaacs_holds_for_separable_dynamics():
    s = system(dim=2, P=[[1, 0], [0, 1], [-1, 0], [0, -1]], Q=[[0.5, 0], [0, 0.5], [-0.5, 0], [0, -0.5]])
    rng = np.random.default_rng(0)
    rep = check_isaacs(s, rng.normal(size=(5, 2)), rng.normal(size=(20, 2)))
    assert rep.passed and rep.max_gap <= 1e-12


def test_isaacs_holds_for_any_affine_model():
    # f = B p + C q splits the table into a p-part plus a q-part, so both orders agree
    P = ControlSet(np.array([[1.0], [-1.0]]), "P")
    Q = ControlSet(np.array([[1.0], [-1.0]]), "Q")
    dyn = Dynamics.from_model("control-affine", 1, {"A": [[0.0]], "B": [[1.0]], "C": [[1.0]]}, 1, 1)
    s = ControlSystem(dyn, P, Q, RunningCost("constant", {"value": 1.0}, 1.0))
    assert check_isaacs(s, [[0.0]], [[1.0]]).passed


@settings(max_examples=60, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2), st.floats(-2, 2))
def test_extremal_shift_matches_brute_force(s0, s1, x0, x1):
    angles = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    P = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    Q = 0.5 * P[:5]
    sysm = system(dim=2, P=P, Q=Q)
    x, s = np.array([x0, x1]), np.array([s0, s1])
    table = np.array([[s @ (p - q) for q in Q] for p in P])
    assert table[p0_index(sysm, x, s)].max() == pytest.approx(table.max(axis=1).min(), abs=1e-9)
    assert table[:, q0_index(sysm, x, s)].min() == pytest.approx(table.min(axis=0).max(), abs=1e-9)
    # lower and upper games bracket each other
    assert upper_maxmin(sysm, x, s) <= lower_minmax(sysm, x, s) + 1e-12


def test_extremal_shift_ties_go_to_first_control():
    sysm = system()
    assert p0_index(sysm, [0.0], [0.0]) == 0
    assert q0_index(sysm, [0.0], [0.0]) == 0
    np.testing.assert_array_equal(p0(sysm, [0.0], [0.0]), [-1.0])
    np.testing.assert_array_equal(q0(sysm, [0.0], [0.0]), [-0.5])


def test_models_and_lambda():
    rot = Dynamics.from_model("rotating", 2)
    assert rot.state_lipschitz() == pytest.approx(1.0)
    cost = RunningCost("radial", {"value": 1.0, "slope": 0.5, "center": [0.0, 0.0]}, 1.0)
    P = ControlSet(np.eye(2), "P")
    s = ControlSystem(rot, P, P, cost)
    assert s.lam == pytest.approx(1.5)
    assert s.estimate_lipschitz([-1, -1], [1, 1]) <= s.lam + 1e-6
    assert Dynamics.from_model("simple-motion", 2, lam=4.0).lam_supplied == 4.0


def test_running_cost_needs_positive_lower_bound():
    with pytest.raises(DynamicsError, match="b must be > 0"):
        RunningCost("constant", {"value": 1.0}, 0.0)
    with pytest.raises(DynamicsError, match="below b"):
        RunningCost("constant", {"value": 0.5}, 1.0)
    clamped = RunningCost("affine-clamped", {"slope": [1.0], "value": -5.0}, 0.2)
    assert clamped(np.array([[0.0]]))[0] == pytest.approx(0.2)


def test_bad_models_and_controls():
    with pytest.raises(DynamicsError, match="unknown model"):
        Dynamics.from_model("warp", 1)
    with pytest.raises(DynamicsError):
        ControlSet(np.empty((0, 1)), "P")
    with pytest.raises(DynamicsError, match="non-finite"):
        ControlSet(np.array([[np.nan]]), "P")
    with pytest.raises(DynamicsError, match="dimension"):
        Dynamics.from_model("simple-motion", 2, p_dim=1)
