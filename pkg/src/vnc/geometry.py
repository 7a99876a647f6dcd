"""Chart-level Riemannian machinery: metric, musical maps, Levi-Civita symbols."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from vnc import exprlang
from vnc.dual import Dual, solve, stack, value_of
from vnc.errors import InvalidSystem, NotPositiveDefinite, NotSymmetric
from vnc.exprlang import Expr


@dataclass(frozen=True)
class ChartSpec:
    """Dimension, coordinate names and parameter bindings of a chart."""

    n: int
    coordinates: tuple[str, ...] = ()
    parameters: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        coords = tuple(self.coordinates) or tuple(f"q{i + 1}" for i in range(self.n))
        object.__setattr__(self, "coordinates", coords)
        object.__setattr__(self, "parameters", dict(self.parameters))
        # validates n and name uniqueness
        object.__setattr__(self, "_symbols", self._make_symbols())

    def _make_symbols(self) -> exprlang.SymbolTable:
        aliases = self.coordinates
        if aliases == tuple(f"q{i + 1}" for i in range(self.n)):
            aliases = ()
        return exprlang.SymbolTable(self.n, aliases, self.parameters)

    @property
    def symbols(self) -> exprlang.SymbolTable:
        return self._symbols

    def parse(self, source: str) -> Expr:
        return exprlang.parse(source, self.symbols)

    def parse_configuration(self, source: str) -> Expr:
        """Parse an expression that must not involve velocities."""
        e = self.parse(source)
        if any(s >= self.n for s in exprlang.slots_used(e)):
            raise InvalidSystem(f"expression {source!r} depends on velocities")
        return e


def _as_expr(chart: ChartSpec, item) -> Expr:
    return item if isinstance(item, Expr) else chart.parse_configuration(str(item))


def evaluate_array(exprs, q, qdot=None):
    """Evaluate a nested list of expressions.

    With a plain ``q`` returns a float array; with a :class:`Dual` ``q`` returns
    a Dual array carrying the same seeds.
    """
    if isinstance(q, Dual):
        env = list(q)
        n = len(env)
        k = q.nseeds
    else:
        env = [float(x) for x in np.asarray(q, dtype=float)]
        n = len(env)
        k = None
    if qdot is None:
        env += [0.0] * n
    else:
        env += [float(x) for x in value_of(qdot)]

    def walk(node):
        if isinstance(node, Expr):
            return exprlang.evaluate_with(node, env)
        return [walk(x) for x in node]

    out = walk(exprs)
    if k is None:
        return np.asarray(out, dtype=float)
    return _stack_nested(out, k)


def _stack_nested(items, k: int):
    if isinstance(items, list):
        if not items:
            return Dual(np.zeros((0,)), np.zeros((k, 0)))
        return stack([_stack_nested(x, k) for x in items], nseeds=k)
    return items if isinstance(items, Dual) else Dual.constant(items, k)


@dataclass(frozen=True)
class MetricField:
    """Kinetic-energy metric (mass matrix) entries over a chart."""

    chart: ChartSpec
    entries: tuple[tuple[Expr, ...], ...]

    def __post_init__(self):
        n = self.chart.n
        rows = tuple(tuple(_as_expr(self.chart, e) for e in row) for row in self.entries)
        if len(rows) != n or any(len(r) != n for r in rows):
            raise InvalidSystem(f"metric must be {n}x{n}")
        object.__setattr__(self, "entries", rows)

    @property
    def n(self) -> int:
        return self.chart.n


@dataclass(frozen=True)
class PotentialField:
    chart: ChartSpec
    expr: Expr

    def __post_init__(self):
        object.__setattr__(self, "expr", _as_expr(self.chart, self.expr))

    @property
    def is_zero(self) -> bool:
        return isinstance(self.expr, exprlang.Num) and self.expr.value == 0.0


class ConnectionKind(enum.Enum):
    LEVI_CIVITA = "levicivita"
    NONHOLONOMIC = "nonholonomic"
    CONSTRAINED = "constrained"


@dataclass(frozen=True)
class ConnectionCoefficients:
    """Christoffel symbols at a point, ``gamma[k, i, j]`` with
    ``nabla_{d_i} d_j = gamma[k, i, j] d_k``."""

    gamma: np.ndarray
    kind: ConnectionKind

    def contract(self, x, y) -> np.ndarray:
        return np.einsum("kij,i,j->k", self.gamma, x, y)

    def nonzero(self, tol: float = 1e-12):
        return [
            (int(k), int(i), int(j), float(self.gamma[k, i, j]))
            for k, i, j in zip(*np.nonzero(np.abs(self.gamma) > tol))
        ]


def _check_metric(M: np.ndarray, q) -> None:
    if not np.array_equal(M, M.T):
        raise NotSymmetric(f"metric is not symmetric at q={np.asarray(q, float).tolist()}")
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(
            f"metric is not positive definite at q={np.asarray(q, float).tolist()}"
        ) from exc


def metric_at(metric: MetricField, q) -> np.ndarray:
    M = evaluate_array(metric.entries, value_of(q))
    _check_metric(M, value_of(q))
    return M


def metric_dual(metric: MetricField, q: Dual) -> Dual:
    M = evaluate_array(metric.entries, q)
    _check_metric(M.value, q.value)
    return M


def sharp(metric: MetricField, q, covector) -> np.ndarray:
    return np.linalg.solve(metric_at(metric, q), np.asarray(covector, dtype=float))


def flat(metric: MetricField, q, vector) -> np.ndarray:
    return metric_at(metric, q) @ np.asarray(vector, dtype=float)


def levi_civita_from_derivatives(M: np.ndarray, dM: np.ndarray) -> np.ndarray:
    """``dM[l, i, j] = d_l M_ij``; returns ``gamma[k, i, j]``."""
    lowered = 0.5 * (dM + dM.transpose(1, 0, 2) - dM.transpose(1, 2, 0))
    return np.einsum("kl,ijl->kij", np.linalg.inv(M), lowered)


def christoffel_lc(metric: MetricField, q) -> ConnectionCoefficients:
    q = np.asarray(value_of(q), dtype=float)
    M = metric_dual(metric, Dual.variables(q))
    gamma = levi_civita_from_derivatives(M.value, M.partials)
    return ConnectionCoefficients(gamma, ConnectionKind.LEVI_CIVITA)


def grad_potential(metric: MetricField, potential: PotentialField, q) -> np.ndarray:
    q = np.asarray(value_of(q), dtype=float)
    if potential.is_zero:
        return np.zeros(metric.n)
    dV = exprlang.eval_dual(potential.expr, np.concatenate([q, np.zeros_like(q)]), range(len(q)))
    return np.linalg.solve(metric_at(metric, q), dV.partials)


def vector_field(chart: ChartSpec, components: Sequence) -> "VectorFieldExpr":
    return VectorFieldExpr(chart, tuple(components))


@dataclass(frozen=True)
class VectorFieldExpr:
    """Vector field with expression components over the chart's coordinates.

    Calling it with a Dual point returns the field value with derivatives.
    """

    chart: ChartSpec
    components: tuple[Expr, ...]

    def __post_init__(self):
        comps = tuple(_as_expr(self.chart, c) for c in self.components)
        if len(comps) != self.chart.n:
            raise InvalidSystem(f"vector field needs {self.chart.n} components")
        object.__setattr__(self, "components", comps)

    def __call__(self, q):
        return evaluate_array(list(self.components), q)
