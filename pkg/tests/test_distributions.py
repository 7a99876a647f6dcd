import math

import numpy as np
import pytest

from vnc.distributions import (
    Distribution,
    basis_D,
    basis_F,
    check_transversality,
    constraint_residuals,
    inputs_annihilate_distribution,
    oblique_projectors,
    orthogonal_projectors,
)
from vnc.errors import NotTransversal, RankDeficientConstraints
from vnc.geometry import ChartSpec, metric_at
from vnc.state import TangentState
from vnc.systems import (
    build_system,
    chaplygin_sleigh,
    get_builtin,
    nonexistence_demo,
    nonuniqueness_demo,
    rolling_disk,
    se2_knife,
    TRANSVERSAL_BUILTINS,
)


def numeric_system(rng, n=4, m=2):
    """Constant random metric, constraints and inputs written as literals."""
    L = rng.normal(size=(n, n))
    M = L @ L.T + n * np.eye(n)
    C = rng.normal(size=(m, n))
    F = rng.normal(size=(m, n))
    fmt = lambda a: [[repr(float(x)) for x in row] for row in a]  # noqa: E731
    return build_system("random", [f"q{i + 1}" for i in range(n)], {}, fmt(M), fmt(C), fmt(F)), M, C, F


def test_residual_knife_on_distribution():
    s = se2_knife()
    assert constraint_residuals(s.constraints, TangentState([0, 0, 0], [1, 0, 2])).tolist() == [0.0]


def test_residual_zero_velocity():
    s = rolling_disk()
    assert np.all(constraint_residuals(s.constraints, TangentState([1, 2, 3, 4], [0, 0, 0, 0])) == 0.0)


def test_residual_disk_rolling_state():
    s = rolling_disk()
    r = constraint_residuals(s.constraints, TangentState([0, 0, 0, 0], [1, 0, 1, 0]))
    np.testing.assert_array_equal(r, [0.0, 0.0])


def test_knife_bases_at_zero():
    s = se2_knife()
    BD = basis_D(s.constraints, [0, 0, 0])
    assert BD.shape == (3, 2)
    # span{(1,0,0), (0,0,1)}: the y component vanishes and the columns are orthonormal
    np.testing.assert_allclose(BD[1], 0.0, atol=1e-15)
    np.testing.assert_allclose(BD.T @ BD, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(basis_F(s.inputs, [0, 0, 0])[:, 0], [0.0, -1.0, 1.0], atol=1e-15)


def test_basis_sign_convention_is_deterministic():
    s = rolling_disk()
    for q in np.random.default_rng(0).uniform(-3, 3, (10, 4)):
        B = basis_D(s.constraints, q)
        for col in B.T:
            first = col[np.flatnonzero(np.abs(col) > 1e-12)[0]]
            assert first > 0


def test_unconstrained_case():
    chart = ChartSpec(3)
    d = Distribution(chart, [])
    np.testing.assert_allclose(basis_D(d, [0, 0, 0]), np.eye(3))
    assert constraint_residuals(d, TangentState([0, 0, 0], [1, 2, 3])).size == 0


def test_rank_deficient_constraints():
    chart = ChartSpec(2)
    d = Distribution(chart, [["q1", "0"]])
    with pytest.raises(RankDeficientConstraints):
        basis_D(d, [0.0, 0.0])


def test_transversality_of_knife_at_sampled_angles():
    s = se2_knife()
    for th in np.linspace(-math.pi, math.pi, 25):
        assert check_transversality(s.constraints, s.inputs, [0, 0, th])


def test_nonexistence_inputs_inside_distribution():
    s = nonexistence_demo()
    rep = check_transversality(s.constraints, s.inputs, [0, 0, 0.7])
    assert not rep
    assert rep.overlap_dim == 1
    assert not rep.spans


def test_nonuniqueness_spans_but_overlaps():
    s = nonuniqueness_demo()
    rep = check_transversality(s.constraints, s.inputs, [0, 0, 0.7])
    assert not rep
    assert rep.spans and rep.overlap_dim == 1


def test_oblique_knife_example():
    # at theta = pi/2, P_F(d/dx) = (1, 0, m/I) with m = I = 1
    s = se2_knife()
    P = oblique_projectors(s.constraints, s.inputs, [0, 0, math.pi / 2])
    np.testing.assert_allclose(P.complement @ [1, 0, 0], [1, 0, 1], atol=1e-15)
    s2 = se2_knife(m=2, I=3)
    P2 = oblique_projectors(s2.constraints, s2.inputs, [0, 0, math.pi / 2])
    np.testing.assert_allclose(P2.complement @ [1, 0, 0], [1, 0, 2 / 3], atol=1e-15)


def test_oblique_fixes_distribution_basis():
    for name in TRANSVERSAL_BUILTINS:
        s = get_builtin(name)
        q = np.random.default_rng(1).uniform(-2, 2, s.n)
        P = oblique_projectors(s.constraints, s.inputs, q)
        B = basis_D(s.constraints, q)
        np.testing.assert_allclose(P.onto_d @ B, B, atol=1e-12)


def test_oblique_two_constructions_agree():
    rng = np.random.default_rng(7)
    for _ in range(20):
        s, M, C, F = numeric_system(rng)
        q = np.zeros(4)
        P = oblique_projectors(s.constraints, s.inputs, q)
        # construction 1: block solve in the basis [B_D | Y]
        BD = basis_D(s.constraints, q)
        Y = np.linalg.solve(M, F.T)
        block = np.hstack([BD, Y])
        coeffs = np.linalg.solve(block, np.eye(4))
        PD_block = BD @ coeffs[:2]
        # construction 2: closed formula
        PD_formula = np.eye(4) - Y @ np.linalg.solve(C @ Y, C)
        np.testing.assert_allclose(P.onto_d, PD_block, atol=1e-10)
        np.testing.assert_allclose(P.onto_d, PD_formula, atol=1e-10)
        # kernel of P_D is F, image is D
        np.testing.assert_allclose(P.onto_d @ Y, 0.0, atol=1e-10)
        np.testing.assert_allclose(C @ P.onto_d, 0.0, atol=1e-10)


def test_oblique_requires_transversality():
    s = nonexistence_demo()
    with pytest.raises(NotTransversal):
        oblique_projectors(s.constraints, s.inputs, [0, 0, 0.3])


def test_chaplygin_projectors_coincide():
    s = chaplygin_sleigh(m=2, I=0.7)
    for q in np.random.default_rng(2).uniform(-3, 3, (50, 3)):
        ob = oblique_projectors(s.constraints, s.inputs, q)
        orth = orthogonal_projectors(s.metric, s.constraints, q)
        np.testing.assert_allclose(ob.onto_d, orth.onto_d, atol=1e-10)
        np.testing.assert_allclose(ob.complement, orth.complement, atol=1e-10)


def test_orthogonal_identity_metric():
    chart = ChartSpec(3)
    s = build_system("e1", ["a", "b", "c"], {}, [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]],
                     [["0", "1", "0"], ["0", "0", "1"]], [["0", "1", "0"], ["0", "0", "1"]])
    P = orthogonal_projectors(s.metric, s.constraints, [0, 0, 0])
    np.testing.assert_allclose(P.onto_d, np.diag([1.0, 0.0, 0.0]), atol=1e-15)


def test_orthogonal_knife_at_zero():
    s = se2_knife(m=2, I=5)
    P = orthogonal_projectors(s.metric, s.constraints, [0, 0, 0])
    expected = np.zeros((3, 3))
    expected[1, 1] = 1.0
    np.testing.assert_allclose(P.complement, expected, atol=1e-15)


def test_input_orthogonality_detection():
    q = [0.1, 0.2, 0.3]
    assert inputs_annihilate_distribution(chaplygin_sleigh().constraints, chaplygin_sleigh().inputs, q)
    assert not inputs_annihilate_distribution(se2_knife().constraints, se2_knife().inputs, q)
    # the two projector pairs differ for the knife
    s = se2_knife()
    ob = oblique_projectors(s.constraints, s.inputs, q)
    orth = orthogonal_projectors(s.metric, s.constraints, q)
    assert np.max(np.abs(ob.onto_d - orth.onto_d)) > 1e-3


@pytest.mark.parametrize("name", TRANSVERSAL_BUILTINS)
def test_projector_properties(name):
    s = get_builtin(name, **({"m": 1.7, "I": 0.6} if name != "integrable_demo" else {}))
    rng = np.random.default_rng(4)
    for _ in range(30):
        q = rng.uniform(-3, 3, s.n)
        M = metric_at(s.metric, q)
        C = s.constraints.matrix(q)
        for P in (oblique_projectors(s.constraints, s.inputs, q), orthogonal_projectors(s.metric, s.constraints, q)):
            assert max(P.defects().values()) < 1e-10
            np.testing.assert_allclose(C @ P.onto_d, 0.0, atol=1e-10)
            v = basis_D(s.constraints, q) @ rng.normal(size=s.n - s.m)
            np.testing.assert_allclose(P.onto_d @ v, v, atol=1e-10)
        orth = orthogonal_projectors(s.metric, s.constraints, q)
        np.testing.assert_allclose(M @ orth.onto_d, orth.onto_d.T @ M, atol=1e-10)
        for _ in range(4):
            X, Y = rng.normal(size=s.n), rng.normal(size=s.n)
            assert abs((orth.onto_d @ X) @ M @ (orth.complement @ Y)) < 1e-9
