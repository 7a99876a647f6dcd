"""Covariant derivatives for the Levi-Civita, nonholonomic and induced
constrained connections, torsion, and Christoffel symbol extraction.

Vector fields are callables ``X(q)``: with a plain array they return the field
value, with a :class:`~vnc.dual.Dual` point they return value and Jacobian.
:class:`~vnc.geometry.VectorFieldExpr` satisfies this, as does any composition
built from the projector helpers here.  Derivatives of projector-valued maps
``T`` are always expanded as ``(nabla_X T)(Y) = nabla_X (T Y) - T (nabla_X Y)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from vnc.distributions import (
    Distribution,
    InputDistribution,
    check_transversality,
    oblique_parts,
    orthogonal_parts,
)
from vnc.dual import Dual, value_of
from vnc.errors import NotTransversal
from vnc.geometry import (
    ChartSpec,
    ConnectionCoefficients,
    ConnectionKind,
    MetricField,
    VectorFieldExpr,
    christoffel_lc,
    metric_at,
)

__all__ = [
    "ConnectionCoefficients",
    "ConnectionKind",
    "ProjectedField",
    "VectorFieldExpr",
    "christoffel_fd",
    "christoffel_of",
    "constrained_connection_apply",
    "covariant_derivative",
    "geodesic_invariance_check",
    "lie_bracket",
    "levi_civita_apply",
    "nonholonomic_connection_apply",
    "random_polynomial_field",
    "torsion_constrained",
]


def _jet(field, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Value and Jacobian ``J[i, k] = d_i X^k`` of a field at ``q``."""
    if not callable(field):
        v = np.asarray(field, dtype=float)
        return v, np.zeros((q.size, q.size))
    out = field(Dual.variables(q))
    if isinstance(out, Dual):
        return out.value, out.partials
    return np.asarray(out, dtype=float), np.zeros((q.size, q.size))


def _value(field, q: np.ndarray) -> np.ndarray:
    if not callable(field):
        return np.asarray(field, dtype=float)
    return value_of(field(q))


def covariant_derivative(coefficients, X, Y, q) -> np.ndarray:
    """``(nabla_X Y)^k = X^i d_i Y^k + gamma[k, i, j] X^i Y^j``.

    ``coefficients`` is a :class:`ConnectionCoefficients`, a raw ``gamma``
    array, or a callable returning either at ``q``.
    """
    q = np.asarray(value_of(q), dtype=float)
    if callable(coefficients):
        coefficients = coefficients(q)
    gamma = coefficients.gamma if isinstance(coefficients, ConnectionCoefficients) else coefficients
    x = _value(X, q)
    y, dy = _jet(Y, q)
    return x @ dy + np.einsum("kij,i,j->k", gamma, x, y)


def lie_bracket(X, Y, q) -> np.ndarray:
    q = np.asarray(value_of(q), dtype=float)
    x, dx = _jet(X, q)
    y, dy = _jet(Y, q)
    return x @ dy - y @ dx


def levi_civita_apply(metric: MetricField, X, Y, q) -> np.ndarray:
    return covariant_derivative(christoffel_lc(metric, q), X, Y, q)


@dataclass(frozen=True)
class ProjectedField:
    """The field ``q -> T(q) Y(q)`` for a projector-valued map ``T``."""

    projector: Callable
    base: Callable

    def __call__(self, q):
        y = self.base(q) if callable(self.base) else np.asarray(self.base, dtype=float)
        return self.projector(q) @ y


def nonholonomic_projector(metric: MetricField, dist: Distribution) -> Callable:
    return lambda q: orthogonal_parts(metric, dist, q)[1]


def orthogonal_projector_onto_d(metric: MetricField, dist: Distribution) -> Callable:
    return lambda q: orthogonal_parts(metric, dist, q)[0]


def input_projector(metric: MetricField, dist: Distribution, inputs: InputDistribution) -> Callable:
    return lambda q: oblique_parts(metric, dist, inputs, q)[1]


def oblique_projector_onto_d(metric: MetricField, dist: Distribution, inputs: InputDistribution) -> Callable:
    return lambda q: oblique_parts(metric, dist, inputs, q)[0]


def _corrected(metric: MetricField, projector: Callable, X, Y, q) -> np.ndarray:
    # nabla_X Y + nabla_X (T Y) - T (nabla_X Y)
    q = np.asarray(value_of(q), dtype=float)
    gamma = christoffel_lc(metric, q)
    nabla_xy = covariant_derivative(gamma, X, Y, q)
    nabla_x_ty = covariant_derivative(gamma, X, ProjectedField(projector, Y), q)
    return nabla_xy + nabla_x_ty - projector(q) @ nabla_xy


def nonholonomic_connection_apply(metric: MetricField, dist: Distribution, X, Y, q) -> np.ndarray:
    return _corrected(metric, nonholonomic_projector(metric, dist), X, Y, q)


def _require_transversal(dist, inputs, q):
    report = check_transversality(dist, inputs, q)
    if not report:
        raise NotTransversal(np.asarray(value_of(q), dtype=float), report)


def constrained_connection_apply(
    metric: MetricField, dist: Distribution, inputs: InputDistribution, X, Y, q
) -> np.ndarray:
    _require_transversal(dist, inputs, q)
    return _corrected(metric, input_projector(metric, dist, inputs), X, Y, q)


def _corrected_christoffel(gamma_lc: np.ndarray, onto_d: np.ndarray, complement: Dual) -> np.ndarray:
    # gamma[k,i,j] = (P_D gamma_lc[:, i, j])_k + d_i T[k, j] + gamma_lc[k, i, l] T[l, j]
    T = complement.value
    return (
        np.einsum("kl,lij->kij", onto_d, gamma_lc)
        + complement.partials.transpose(1, 0, 2)
        + np.einsum("kil,lj->kij", gamma_lc, T)
    )


def christoffel_of(
    metric: MetricField,
    dist: Distribution,
    inputs: InputDistribution | None,
    q,
    kind: ConnectionKind | str = ConnectionKind.CONSTRAINED,
) -> ConnectionCoefficients:
    """Christoffel symbols of the chosen connection at ``q``."""
    kind = ConnectionKind(kind)
    q = np.asarray(value_of(q), dtype=float)
    lc = christoffel_lc(metric, q)
    if kind is ConnectionKind.LEVI_CIVITA:
        return lc
    qd = Dual.variables(q)
    if kind is ConnectionKind.CONSTRAINED:
        _require_transversal(dist, inputs, q)
        onto_d, complement, _, _ = oblique_parts(metric, dist, inputs, qd)
    else:
        onto_d, complement = orthogonal_parts(metric, dist, qd)
    gamma = _corrected_christoffel(lc.gamma, onto_d.value, complement)
    return ConnectionCoefficients(gamma, kind)


def christoffel_fd(
    metric: MetricField,
    dist: Distribution,
    inputs: InputDistribution | None,
    q,
    kind: ConnectionKind | str = ConnectionKind.CONSTRAINED,
    step: float = 1e-5,
) -> ConnectionCoefficients:
    """Finite-difference oracle: every derivative by central differences of
    plain float evaluations (no dual numbers)."""
    kind = ConnectionKind(kind)
    q = np.asarray(value_of(q), dtype=float)
    n = q.size

    def complement_at(p):
        if kind is ConnectionKind.CONSTRAINED:
            return oblique_parts(metric, dist, inputs, p)[1]
        return orthogonal_parts(metric, dist, p)[1]

    dM = np.empty((n, n, n))
    dT = np.empty((n, n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = step
        dM[i] = (metric_at(metric, q + e) - metric_at(metric, q - e)) / (2 * step)
        if kind is not ConnectionKind.LEVI_CIVITA:
            dT[i] = (complement_at(q + e) - complement_at(q - e)) / (2 * step)
    M = metric_at(metric, q)
    lowered = 0.5 * (dM + dM.transpose(1, 0, 2) - dM.transpose(1, 2, 0))
    gamma_lc = np.einsum("kl,ijl->kij", np.linalg.inv(M), lowered)
    if kind is ConnectionKind.LEVI_CIVITA:
        return ConnectionCoefficients(gamma_lc, kind)
    T = complement_at(q)
    gamma = (
        np.einsum("kl,lij->kij", np.eye(n) - T, gamma_lc)
        + dT.transpose(1, 0, 2)
        + np.einsum("kil,lj->kij", gamma_lc, T)
    )
    return ConnectionCoefficients(gamma, kind)


def torsion_constrained(
    metric: MetricField, dist: Distribution, inputs: InputDistribution, X, Y, q
) -> np.ndarray:
    return (
        constrained_connection_apply(metric, dist, inputs, X, Y, q)
        - constrained_connection_apply(metric, dist, inputs, Y, X, q)
        - lie_bracket(X, Y, q)
    )


def random_polynomial_field(chart: ChartSpec, rng: np.random.Generator, degree: int = 2, scale: float = 0.5):
    """A random polynomial vector field written in the expression language."""
    n = chart.n
    comps = []
    for _ in range(n):
        terms = [f"{rng.normal():.6f}"]
        for i in range(n):
            terms.append(f"{scale * rng.normal():.6f}*q{i + 1}")
        if degree >= 2:
            for i in range(n):
                for j in range(i, n):
                    terms.append(f"{scale * scale * rng.normal():.6f}*q{i + 1}*q{j + 1}")
        comps.append(" + ".join(terms).replace("+ -", "- "))
    return VectorFieldExpr(chart, tuple(comps))


def random_section(metric: MetricField, dist: Distribution, rng: np.random.Generator, degree: int = 2):
    """A random section of the distribution: a polynomial field projected
    orthogonally onto it."""
    return ProjectedField(orthogonal_projector_onto_d(metric, dist), random_polynomial_field(metric.chart, rng, degree))


def geodesic_invariance_check(system, kind: str = "constrained", **kw):
    """Integrate geodesics of the chosen connection from random states on the
    distribution and report the largest constraint violation (defaults: 20
    samples, horizon 10, RK4 with dt 1e-3, tolerance 1e-6).

    Implemented alongside the integrators in :mod:`vnc.dynamics`.
    """
    from vnc.dynamics import geodesic_invariance_check as impl

    return impl(system, kind, **kw)
