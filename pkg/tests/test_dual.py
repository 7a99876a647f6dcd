import numpy as np
import pytest

from vnc.dual import Dual, DomainError, solve, stack, value_of


def fd_jacobian(f, x, h=1e-6):
    x = np.asarray(x, float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2 * h))
    return np.stack(cols)  # derivative index first


def test_variables_seed_identity():
    d = Dual.variables([1.0, 2.0])
    assert d.value.tolist() == [1.0, 2.0]
    np.testing.assert_array_equal(d.partials, np.eye(2))


@pytest.mark.parametrize(
    "name, f",
    [
        ("sin", lambda x: x.sin() if isinstance(x, Dual) else np.sin(x)),
        ("cos", lambda x: x.cos() if isinstance(x, Dual) else np.cos(x)),
        ("tan", lambda x: x.tan() if isinstance(x, Dual) else np.tan(x)),
        ("exp", lambda x: x.exp() if isinstance(x, Dual) else np.exp(x)),
        ("log", lambda x: x.log() if isinstance(x, Dual) else np.log(x)),
        ("sqrt", lambda x: x.sqrt() if isinstance(x, Dual) else np.sqrt(x)),
        ("abs", lambda x: abs(x)),
        ("pow", lambda x: x**2.5),
        ("rpow", lambda x: 2.0**x),
        ("div", lambda x: 1.0 / (1.0 + x)),
    ],
)
def test_chain_rule_against_finite_differences(name, f):
    x0 = 0.7
    d = f(Dual(x0, np.array([1.0])))
    fd = (f(x0 + 1e-6) - f(x0 - 1e-6)) / 2e-6
    assert d.value == pytest.approx(f(x0), rel=1e-15)
    assert d.partials[0] == pytest.approx(fd, rel=1e-8)


def test_product_rule_two_seeds():
    x = Dual.variables([3.0, 5.0])
    p = x[0] * x[1]
    assert p.value == 15.0
    assert p.partials.tolist() == [5.0, 3.0]


def test_domain_errors():
    with pytest.raises(DomainError):
        Dual(-1.0, np.array([1.0])).log()
    with pytest.raises(DomainError):
        Dual(-1.0, np.array([1.0])).sqrt()


def test_matrix_vector_product_regression():
    """``Dual matrix @ Dual vector`` must orient the partials of the vector
    operand correctly (an earlier version transposed them)."""

    def matrix(q):
        return stack([stack([q[0] * q[1], q[1].sin()]), stack([q[0].cos(), q[0] + 2 * q[1]])])

    def vector(q):
        return stack([q[0] ** 2, q[1] * 3.0 + q[0]])

    x0 = np.array([0.4, -1.3])
    q = Dual.variables(x0)
    out = matrix(q) @ vector(q)

    def plain(x):
        a = np.array([[x[0] * x[1], np.sin(x[1])], [np.cos(x[0]), x[0] + 2 * x[1]]])
        return a @ np.array([x[0] ** 2, 3 * x[1] + x[0]])

    np.testing.assert_allclose(out.value, plain(x0), rtol=1e-15)
    np.testing.assert_allclose(out.partials, fd_jacobian(plain, x0), rtol=1e-7, atol=1e-9)
    # constant matrix on the left, Dual vector on the right
    c = np.array([[1.0, 2.0], [3.0, 4.0]])
    left = c @ vector(q)
    np.testing.assert_allclose(
        left.partials, fd_jacobian(lambda x: c @ np.array([x[0] ** 2, 3 * x[1] + x[0]]), x0), atol=1e-8
    )


def test_solve_derivative_matches_finite_differences():
    def A(x):
        return [[2 + np.sin(x[0]), x[1]], [x[1], 3 + x[0] ** 2]]

    def b(x):
        return [np.cos(x[1]), x[0] * x[1]]

    x0 = np.array([0.3, 0.8])
    q = Dual.variables(x0)
    Ad = stack([stack([2 + q[0].sin(), q[1]]), stack([q[1], 3 + q[0] ** 2])])
    bd = stack([q[1].cos(), q[0] * q[1]])
    out = solve(Ad, bd)
    plain = lambda x: np.linalg.solve(np.array(A(x)), np.array(b(x)))  # noqa: E731
    np.testing.assert_allclose(value_of(out), plain(x0), rtol=1e-14)
    np.testing.assert_allclose(out.partials, fd_jacobian(plain, x0), rtol=1e-7, atol=1e-9)
