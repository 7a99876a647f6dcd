import math

import numpy as np
import pytest

from vnc.connections import (
    christoffel_fd,
    christoffel_of,
    constrained_connection_apply,
    covariant_derivative,
    geodesic_invariance_check,
    levi_civita_apply,
    lie_bracket,
    nonholonomic_connection_apply,
    random_polynomial_field,
    random_section,
    torsion_constrained,
)
from vnc.distributions import oblique_projectors
from vnc.errors import NotTransversal
from vnc.geometry import ConnectionKind, christoffel_lc, vector_field
from vnc.state import TangentState
from vnc.systems import (
    chaplygin_sleigh,
    integrable_demo,
    nonexistence_demo,
    rolling_disk,
    se2_knife,
)

KNIFE = se2_knife()


def knife_frame(system):
    X1 = vector_field(system.chart, ["cos(theta)", "sin(theta)", "0"])
    X2 = vector_field(system.chart, ["0", "0", "1"])
    return X1, X2


def printed_knife_table(theta, m, I):
    """The six nonzero constrained Christoffels of the knife edge, gamma[k, i, j]
    with i the differentiating direction (x=0, y=1, theta=2)."""
    s, c = math.sin(theta), math.cos(theta)
    g = np.zeros((3, 3, 3))
    g[0, 2, 0] = 2 * s * c
    g[0, 2, 1] = s * s - c * c
    g[1, 2, 0] = s * s - c * c
    g[1, 2, 1] = -2 * s * c
    g[2, 2, 0] = m * c / I
    g[2, 2, 1] = m * s / I
    return g


# --------------------------------------------------------- basic operations


def test_covariant_derivative_flat_constant_fields():
    q = np.array([0.3, 0.1, -2.0])
    out = covariant_derivative(christoffel_lc(KNIFE.metric, q), [1.0, 2.0, 3.0], [4.0, -1.0, 0.5], q)
    assert np.all(out == 0.0)


def test_levi_civita_symmetry_with_random_fields():
    rng = np.random.default_rng(0)
    s = rolling_disk(m=1.3, I=0.4, J=2.0)
    for _ in range(20):
        q = rng.uniform(-2, 2, 4)
        X, Y = random_polynomial_field(s.chart, rng), random_polynomial_field(s.chart, rng)
        lhs = levi_civita_apply(s.metric, X, Y, q) - levi_civita_apply(s.metric, Y, X, q)
        np.testing.assert_allclose(lhs, lie_bracket(X, Y, q), atol=1e-8)


def test_lie_bracket_examples():
    X1, X2 = knife_frame(KNIFE)
    rng = np.random.default_rng(1)
    for th in rng.uniform(-3, 3, 10):
        q = np.array([0.2, -0.4, th])
        br = lie_bracket(X1, X2, q)
        np.testing.assert_allclose(br, [math.sin(th), -math.cos(th), 0.0], atol=1e-15)
        # the bracket leaves the distribution: mu([X1, X2]) = 1
        assert KNIFE.constraints.matrix(q) @ br == pytest.approx([1.0])
        np.testing.assert_array_equal(lie_bracket(X1, X1, q), 0.0)
        np.testing.assert_array_equal(lie_bracket([1, 0, 0], [0, 0, 1], q), 0.0)


def test_lie_bracket_antisymmetric():
    rng = np.random.default_rng(2)
    s = rolling_disk()
    for _ in range(10):
        q = rng.uniform(-1, 1, 4)
        X, Y = random_polynomial_field(s.chart, rng), random_polynomial_field(s.chart, rng)
        np.testing.assert_allclose(lie_bracket(X, Y, q), -lie_bracket(Y, X, q), atol=1e-14)


# --------------------------------------------------- nonholonomic connection


def test_nonholonomic_constant_section_in_constant_distribution():
    s = integrable_demo()
    rng = np.random.default_rng(3)
    X = random_polynomial_field(s.chart, rng)
    out = nonholonomic_connection_apply(s.metric, s.constraints, X, [1.0, 0.5, 0.0], [0.1, 0.2, 0.3])
    np.testing.assert_allclose(out, 0.0, atol=1e-15)


def test_nonholonomic_sleigh_straight_line_is_geodesic():
    s = chaplygin_sleigh(m=1.5, I=0.3)
    X1, _ = knife_frame(s)
    for th in np.linspace(-3, 3, 7):
        out = nonholonomic_connection_apply(s.metric, s.constraints, X1, X1, [0.0, 0.0, th])
        np.testing.assert_allclose(out, 0.0, atol=1e-14)


def test_nonholonomic_knife_example_at_zero():
    X1, X2 = knife_frame(KNIFE)
    out = nonholonomic_connection_apply(KNIFE.metric, KNIFE.constraints, X2, X1, [0.0, 0.0, 0.0])
    np.testing.assert_allclose(out, 0.0, atol=1e-15)


# ---------------------------------------------------- constrained connection


def test_chaplygin_constrained_equals_nonholonomic():
    s = chaplygin_sleigh(m=2.0, I=0.5)
    rng = np.random.default_rng(4)
    for _ in range(50):
        q = rng.uniform(-3, 3, 3)
        X, Y = random_polynomial_field(s.chart, rng), random_polynomial_field(s.chart, rng)
        a = constrained_connection_apply(s.metric, s.constraints, s.inputs, X, Y, q)
        b = nonholonomic_connection_apply(s.metric, s.constraints, X, Y, q)
        np.testing.assert_allclose(a, b, atol=1e-9)


def test_constrained_connection_preserves_distribution():
    for s in (KNIFE, rolling_disk(m=2, I=0.5, J=1.5)):
        rng = np.random.default_rng(5)
        for _ in range(20):
            q = rng.uniform(-3, 3, s.n)
            X = random_section(s.metric, s.constraints, rng)
            Y = random_section(s.metric, s.constraints, rng)
            out = constrained_connection_apply(s.metric, s.constraints, s.inputs, X, Y, q)
            np.testing.assert_allclose(s.constraints.matrix(q) @ out, 0.0, atol=1e-9)


def test_knife_gamma_theta_theta_x():
    s = se2_knife(m=2, I=3)
    out = constrained_connection_apply(s.metric, s.constraints, s.inputs, [0, 0, 1], [1, 0, 0], [0, 0, 0])
    assert out[2] == pytest.approx(2 / 3, abs=1e-14)


def test_constrained_requires_transversality():
    s = nonexistence_demo()
    with pytest.raises(NotTransversal):
        christoffel_of(s.metric, s.constraints, s.inputs, [0, 0, 0.4], "constrained")


# ------------------------------------------------------------ Christoffels


@pytest.mark.parametrize("m, I", [(1.0, 1.0), (2.0, 3.0), (0.7, 1.9)])
def test_knife_christoffel_table(m, I):
    s = se2_knife(m=m, I=I)
    for th in np.random.default_rng(6).uniform(-math.pi, math.pi, 20):
        g = christoffel_of(s.metric, s.constraints, s.inputs, [0.5, -0.5, th], "constrained").gamma
        np.testing.assert_allclose(g, printed_knife_table(th, m, I), atol=1e-10)


def test_christoffel_matches_connection_on_coordinate_fields():
    s = rolling_disk(m=1.2, I=0.8, J=2.5)
    q = np.array([0.1, 0.2, 0.3, 0.9])
    g = christoffel_of(s.metric, s.constraints, s.inputs, q, "constrained").gamma
    eye = np.eye(4)
    for i in range(4):
        for j in range(4):
            out = constrained_connection_apply(s.metric, s.constraints, s.inputs, eye[i], eye[j], q)
            np.testing.assert_allclose(g[:, i, j], out, atol=1e-13)


def test_levicivita_kind_on_flat_metric():
    g = christoffel_of(KNIFE.metric, KNIFE.constraints, None, [0, 0, 1.0], "levicivita")
    assert g.kind is ConnectionKind.LEVI_CIVITA
    assert g.nonzero() == []


@pytest.mark.parametrize("kind", ["constrained", "nonholonomic", "levicivita"])
@pytest.mark.parametrize("phi", [0.3, -1.2, 2.5])
def test_disk_christoffels_match_finite_differences(kind, phi):
    s = rolling_disk(m=1.0, I=2.0, J=3.0)
    q = np.array([0.4, -0.2, 1.1, phi])
    inputs = s.inputs if kind == "constrained" else None
    ad = christoffel_of(s.metric, s.constraints, inputs, q, kind).gamma
    fd = christoffel_fd(s.metric, s.constraints, inputs, q, kind).gamma
    assert np.max(np.abs(ad - fd)) < 1e-4


def test_constrained_christoffels_not_symmetric_for_nonintegrable():
    g = christoffel_of(KNIFE.metric, KNIFE.constraints, KNIFE.inputs, [0, 0, 0.3], "constrained").gamma
    assert np.max(np.abs(g - g.transpose(0, 2, 1))) > 0.1


# ------------------------------------------------------------------ torsion


def test_torsion_antisymmetric_and_zero_on_diagonal():
    rng = np.random.default_rng(8)
    X = random_section(KNIFE.metric, KNIFE.constraints, rng)
    q = np.array([0.1, 0.2, 0.3])
    np.testing.assert_allclose(torsion_constrained(KNIFE.metric, KNIFE.constraints, KNIFE.inputs, X, X, q), 0.0, atol=1e-14)


def test_torsion_knife_frame_golden():
    # -P_F([X1, X2]) at theta = 0 with m = I = 1: [X1, X2] = (0, -1, 0),
    # Y = (0, -1, 1), mu = (0, -1, 0), so P_F(0, 1, 0) = (0, 1, -1).
    X1, X2 = knife_frame(KNIFE)
    q = np.zeros(3)
    T = torsion_constrained(KNIFE.metric, KNIFE.constraints, KNIFE.inputs, X1, X2, q)
    np.testing.assert_allclose(T, [0.0, 1.0, -1.0], atol=1e-14)
    PF = oblique_projectors(KNIFE.constraints, KNIFE.inputs, q).complement
    np.testing.assert_allclose(T, -PF @ lie_bracket(X1, X2, q), atol=1e-14)


def test_torsion_vanishes_on_integrable_distribution():
    s = integrable_demo()
    rng = np.random.default_rng(9)
    for _ in range(20):
        q = rng.uniform(-2, 2, 3)
        X = random_section(s.metric, s.constraints, rng)
        Y = random_section(s.metric, s.constraints, rng)
        assert np.max(np.abs(torsion_constrained(s.metric, s.constraints, s.inputs, X, Y, q))) < 1e-9


@pytest.mark.parametrize("system", [se2_knife(m=1.4, I=0.6), rolling_disk(m=0.8, I=1.7, J=0.9)], ids=["knife", "disk"])
def test_lemma_and_torsion_identities(system):
    s = system
    rng = np.random.default_rng(10)
    for _ in range(100):
        q = rng.uniform(-3, 3, s.n)
        X = random_section(s.metric, s.constraints, rng)
        Y = random_section(s.metric, s.constraints, rng)
        P = oblique_projectors(s.constraints, s.inputs, q)
        nab_c = constrained_connection_apply(s.metric, s.constraints, s.inputs, X, Y, q)
        nab_g = levi_civita_apply(s.metric, X, Y, q)
        assert np.max(np.abs(nab_c - P.onto_d @ nab_g)) < 1e-9
        T = torsion_constrained(s.metric, s.constraints, s.inputs, X, Y, q)
        assert np.max(np.abs(T + P.complement @ lie_bracket(X, Y, q))) < 1e-9


def test_difference_tensor_is_tensorial():
    """D(X, Y) = nabla^c_X Y - nabla^nh_X Y depends only on the point values."""
    s = KNIFE
    rng = np.random.default_rng(11)
    for _ in range(20):
        q0 = rng.uniform(-2, 2, 3)
        X = random_polynomial_field(s.chart, rng)
        Y = random_polynomial_field(s.chart, rng)
        R1, R2 = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
        Xb = lambda q, X=X, R=R1, q0=q0: X(q) + R @ (q - q0)  # noqa: E731
        Yb = lambda q, Y=Y, R=R2, q0=q0: Y(q) + R @ ((q - q0) * (q - q0) + (q - q0))  # noqa: E731

        def D(A, B):
            return (constrained_connection_apply(s.metric, s.constraints, s.inputs, A, B, q0)
                    - nonholonomic_connection_apply(s.metric, s.constraints, A, B, q0))

        np.testing.assert_allclose(D(X, Y), D(Xb, Yb), atol=1e-9)


# ------------------------------------------------------ geodesic invariance


def test_geodesic_invariance_constrained_knife():
    rep = geodesic_invariance_check(KNIFE, "constrained", samples=20, horizon=10.0, dt=1e-3)
    assert rep.passed and rep.value < 1e-6


def test_geodesic_invariance_levicivita_negative_control():
    rep = geodesic_invariance_check(KNIFE, "levicivita", samples=5, horizon=10.0, dt=1e-3)
    assert not rep.passed and rep.value > 0.1


def test_geodesic_invariance_zero_velocity():
    rep = geodesic_invariance_check(KNIFE, "constrained", states=[TangentState([0.1, 0.2, 0.3], [0, 0, 0])])
    assert rep.passed and rep.value == 0.0
