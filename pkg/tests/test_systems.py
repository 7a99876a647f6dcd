import json
import math

import numpy as np
import pytest

from vnc.cli import validate_config
from vnc.control import closed_loop_field, reference_control, solve_control
from vnc.distributions import check_transversality, inputs_annihilate_distribution
from vnc.errors import InvalidSystem
from vnc.geometry import metric_at
from vnc.kernels import FORMULATIONS, compile_system
from vnc.state import TangentState
from vnc.systems import (
    BUILTINS,
    TRANSVERSAL_BUILTINS,
    chaplygin_sleigh,
    from_config,
    get_builtin,
    integrable_demo,
    nonexistence_demo,
    offset_sleigh,
    rolling_disk,
    se2_damped,
    se2_knife,
    sleigh_observables,
    sleigh_reduced_rhs,
)


def test_knife_basics():
    s = se2_knife(m=2.0, I=3.0)
    np.testing.assert_array_equal(metric_at(s.metric, [1, 2, 3]), np.diag([2.0, 2.0, 3.0]))
    for th in np.linspace(-math.pi, math.pi, 30):
        assert check_transversality(s.constraints, s.inputs, [0, 0, th])
    assert reference_control(s, TangentState([1, 2, 3], [0, 0, 0])) == pytest.approx([0.0])
    assert (s.n, s.m, s.k) == (3, 1, 1)


def test_damped_drift_force():
    s = se2_damped(m=1.0, gamma=2.0)
    np.testing.assert_allclose(s.drift_force([0, 0, 0.3], [1, 1, 0]), [-2.0, -2.0, 0.0])


def test_damped_without_damping_is_knife():
    rng = np.random.default_rng(0)
    undamped, knife = se2_damped(m=1.3, I=0.7, gamma=0.0), se2_knife(m=1.3, I=0.7)
    for _ in range(20):
        st = TangentState(rng.normal(size=3), rng.normal(size=3))
        np.testing.assert_allclose(closed_loop_field(undamped, st)[1], closed_loop_field(knife, st)[1], atol=1e-15)


def test_disk_shape_and_zero_rolling_rate():
    s = rolling_disk()
    assert (s.n, s.m, s.k) == (4, 2, 2)
    st = TangentState([0.1, 0.2, 0.3, 0.4], [0.5, -0.5, 0.0, 2.0])
    assert reference_control(s, st) == pytest.approx([0.0, 0.0])
    np.testing.assert_allclose(solve_control(s, st).tau, [0.0, 0.0], atol=1e-15)


def test_chaplygin_inputs_are_the_constraints():
    s = chaplygin_sleigh()
    assert s.inputs.forms == s.constraints.forms
    for q in np.random.default_rng(1).uniform(-3, 3, (10, 3)):
        assert inputs_annihilate_distribution(s.constraints, s.inputs, q)
    # the printed law has no I in it
    assert "I" not in str(s.reference_control)


def reduced_rates_from_full_model(system, q, v):
    """(omega_dot, v_dot) from the full-coordinate nonholonomic acceleration."""
    acc, _ = compile_system(system).acceleration(np.asarray(q, float), np.asarray(v, float), FORMULATIONS["nonholonomic"])
    th = q[2]
    v_dot = math.cos(th) * acc[0] + math.sin(th) * acc[1] + v[2] * (-math.sin(th) * v[0] + math.cos(th) * v[1])
    return acc[2], v_dot


def test_offset_sleigh_reduced_formulas():
    # (m, I, a, v, omega) = (1, 1, 1, 1, 1): omega_dot = -0.5, v_dot = 1
    assert sleigh_reduced_rhs(1.0, 1.0, 1.0)(0.0, [1.0, 1.0]).tolist() == [-0.5, 1.0]
    s = offset_sleigh(m=1.0, I=1.0, a=1.0)
    for th in (0.0, 0.7, -2.0):
        q, qd = [0.3, -0.1, th], [math.cos(th), math.sin(th), 1.0]
        w_dot, v_dot = reduced_rates_from_full_model(s, q, qd)
        assert w_dot == pytest.approx(-0.5, abs=1e-12)
        assert v_dot == pytest.approx(1.0, abs=1e-12)


def test_offset_sleigh_without_offset_is_stationary_in_reduced_variables():
    assert sleigh_reduced_rhs(1.0, 1.0, 0.0)(0.0, [0.7, 1.3]).tolist() == [0.0, 0.0]
    s = offset_sleigh(a=0.0)
    w_dot, v_dot = reduced_rates_from_full_model(s, [0, 0, 0.4], [1.3 * math.cos(0.4), 1.3 * math.sin(0.4), 0.7])
    assert abs(w_dot) < 1e-14 and abs(v_dot) < 1e-14


def test_offset_must_be_nonnegative():
    with pytest.raises(InvalidSystem):
        offset_sleigh(a=-0.1)


def test_nonexistence_rhs_vanishes_on_degenerate_set():
    s = nonexistence_demo()
    # on D, cos(theta) xdot + sin(theta) ydot = 0 forces xdot = ydot = 0
    assert solve_control(s, TangentState([0, 0, 1.1], [0, 0, 2.0])).b == pytest.approx([0.0], abs=1e-15)
    th = 1.1
    assert abs(solve_control(s, TangentState([0, 0, th], [math.cos(th), math.sin(th), 2.0])).b[0]) > 1.0


def test_sleigh_observables():
    v, w = sleigh_observables(np.array([[0, 0, math.pi / 2]]), np.array([[0.0, 2.0, 0.5]]))
    assert v[0] == pytest.approx(2.0) and w[0] == 0.5


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_config_round_trip(name):
    s = get_builtin(name)
    cfg = json.loads(json.dumps(s.to_config()))
    validate_config({"version": 1, "custom": cfg})
    s2 = from_config(cfg)
    assert s2.to_config() == s.to_config()
    rng = np.random.default_rng(2)
    for _ in range(5):
        st = TangentState(rng.uniform(-2, 2, s.n), rng.normal(size=s.n))
        np.testing.assert_array_equal(metric_at(s2.metric, st.q), metric_at(s.metric, st.q))
        sol, sol2 = solve_control(s, st), solve_control(s2, st)
        assert sol.status == sol2.status
        np.testing.assert_array_equal(sol.tau, sol2.tau)


def test_get_builtin_errors():
    with pytest.raises(KeyError):
        get_builtin("nope")
    with pytest.raises(InvalidSystem):
        get_builtin("se2_knife", J=1.0)
    assert get_builtin("rolling_disk", J=2.0).parameters["J"] == 2.0


def test_transversal_builtins_listed_correctly():
    rng = np.random.default_rng(3)
    for name in BUILTINS:
        s = get_builtin(name)
        ok = all(check_transversality(s.constraints, s.inputs, q) for q in rng.uniform(-3, 3, (10, s.n)))
        assert ok == (name in TRANSVERSAL_BUILTINS or name == "integrable_demo")


def test_integrable_demo_shape():
    s = integrable_demo()
    assert (s.n, s.m, s.k) == (3, 1, 1)
