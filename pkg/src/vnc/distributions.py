"""Constraint and input distributions, transversality, and projector pairs."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from vnc.dual import Dual, eye_like, solve, value_of
from vnc.errors import InvalidSystem, NotTransversal, RankDeficientConstraints
from vnc.exprlang import Expr
from vnc.geometry import ChartSpec, MetricField, _as_expr, evaluate_array, metric_at
from vnc.state import as_state

TRANSVERSALITY_TOL = 1e-8
RANK_TOL = 1e-10


def _forms(chart: ChartSpec, forms) -> tuple[tuple[Expr, ...], ...]:
    rows = tuple(tuple(_as_expr(chart, c) for c in row) for row in forms)
    if any(len(r) != chart.n for r in rows):
        raise InvalidSystem(f"one-forms need {chart.n} coefficients")
    return rows


@dataclass(frozen=True)
class Distribution:
    """Distribution given as the common kernel of ``m`` one-forms."""

    chart: ChartSpec
    forms: tuple[tuple[Expr, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "forms", _forms(self.chart, self.forms))

    @property
    def m(self) -> int:
        return len(self.forms)

    @property
    def rank(self) -> int:
        return self.chart.n - self.m

    def matrix(self, q):
        """The ``m x n`` coefficient matrix (Dual if ``q`` is Dual)."""
        if self.m == 0:
            n = self.chart.n
            return Dual.constant(np.zeros((0, n)), q.nseeds) if isinstance(q, Dual) else np.zeros((0, n))
        return evaluate_array(self.forms, q)


@dataclass(frozen=True)
class InputDistribution:
    """Control one-forms ``f^a``; the input vector fields are ``Y^a = sharp(f^a)``."""

    chart: ChartSpec
    forms: tuple[tuple[Expr, ...], ...]
    metric: MetricField

    def __post_init__(self):
        object.__setattr__(self, "forms", _forms(self.chart, self.forms))

    @property
    def k(self) -> int:
        return len(self.forms)

    def matrix(self, q):
        if self.k == 0:
            n = self.chart.n
            return Dual.constant(np.zeros((0, n)), q.nseeds) if isinstance(q, Dual) else np.zeros((0, n))
        return evaluate_array(self.forms, q)

    def vector_fields(self, q):
        """Columns ``Y^a``, an ``n x k`` array (Dual if ``q`` is Dual)."""
        M = evaluate_array(self.metric.entries, q)
        return solve(M, self.matrix(q).T)


class ProjectorKind(enum.Enum):
    OBLIQUE = "oblique"  # D (+) F
    ORTHOGONAL = "orthogonal"  # D (+) D-perp


@dataclass(frozen=True)
class ProjectorPair:
    """``onto_d + complement = Id``; ``onto_d`` maps onto the distribution."""

    onto_d: np.ndarray
    complement: np.ndarray
    kind: ProjectorKind

    def defects(self) -> dict[str, float]:
        a, b = self.onto_d, self.complement
        n = a.shape[0]
        return {
            "sum": float(np.max(np.abs(a + b - np.eye(n)))),
            "idempotent_d": float(np.max(np.abs(a @ a - a))),
            "idempotent_complement": float(np.max(np.abs(b @ b - b))),
            "product": float(np.max(np.abs(a @ b))),
        }


@dataclass(frozen=True)
class TransversalityReport:
    transversal: bool
    rank: int
    overlap_dim: int
    sigma_min: float
    spans: bool

    def __bool__(self):
        return self.transversal


def constraint_residuals(dist: Distribution, state) -> np.ndarray:
    s = as_state(state)
    return dist.matrix(s.q) @ s.qdot


def _orient(columns: np.ndarray) -> np.ndarray:
    # first entry with non-negligible magnitude is made positive
    out = columns.copy()
    for j in range(out.shape[1]):
        col = out[:, j]
        idx = np.flatnonzero(np.abs(col) > 1e-12)
        if idx.size and col[idx[0]] < 0:
            out[:, j] = -col
    return out


def basis_D(dist: Distribution, q) -> np.ndarray:
    """Orthonormal basis of the distribution at ``q`` (columns)."""
    n = dist.chart.n
    q = value_of(q)
    if dist.m == 0:
        return np.eye(n)
    C = dist.matrix(q)
    _, s, vt = np.linalg.svd(C)
    rank = int(np.sum(s > RANK_TOL * max(1.0, s[0])))
    if rank < dist.m:
        raise RankDeficientConstraints(q, rank, dist.m)
    return _orient(vt[dist.m :].T)


def basis_F(inputs: InputDistribution, q) -> np.ndarray:
    return inputs.vector_fields(value_of(q))


def check_transversality(
    dist: Distribution, inputs: InputDistribution, q, tol: float = TRANSVERSALITY_TOL
) -> TransversalityReport:
    """Decide whether ``TQ = D (+) F`` at ``q``.

    Input columns are normalized so the singular-value test is scale-free.
    """
    n = dist.chart.n
    BD = basis_D(dist, q)
    Y = basis_F(inputs, q)
    norms = np.linalg.norm(Y, axis=0)
    Yn = Y / np.where(norms > 0, norms, 1.0)
    rank_f = int(np.linalg.matrix_rank(Yn, tol)) if Yn.size else 0
    stacked = np.hstack([BD, Yn])
    s = np.linalg.svd(stacked, compute_uv=False)
    rank = int(np.sum(s > tol))
    sigma_min = float(s[-1]) if stacked.shape[1] <= n else 0.0
    overlap = BD.shape[1] + rank_f - rank
    transversal = stacked.shape[1] == n and rank == n
    return TransversalityReport(transversal, rank, overlap, sigma_min, rank == n)


def oblique_parts(metric: MetricField, dist: Distribution, inputs: InputDistribution, q):
    """``(P_D, P_F, Y, A)`` for plain or Dual ``q``.

    ``P_F = Y (C Y)^-1 C`` with ``C`` the constraint matrix and ``Y`` the
    input fields; ``A = C Y`` is the control matrix.
    """
    n = metric.n
    M = evaluate_array(metric.entries, q)
    C = dist.matrix(q)
    Y = solve(M, inputs.matrix(q).T)
    A = C @ Y
    if dist.m == 0:
        return eye_like(q, n), eye_like(q, n) * 0.0, Y, A
    PF = Y @ solve(A, C)
    PD = eye_like(q, n) - PF
    return PD, PF, Y, A


def orthogonal_parts(metric: MetricField, dist: Distribution, q):
    """``(P, Q)`` metric-orthogonal projectors, plain or Dual."""
    n = metric.n
    if dist.m == 0:
        return eye_like(q, n), eye_like(q, n) * 0.0
    M = evaluate_array(metric.entries, q)
    C = dist.matrix(q)
    W = solve(M, C.T)  # sharp of the constraint forms
    Qp = W @ solve(C @ W, C)
    return eye_like(q, n) - Qp, Qp


def oblique_projectors(
    dist: Distribution, inputs: InputDistribution, q, tol: float = TRANSVERSALITY_TOL
) -> ProjectorPair:
    q = value_of(q)
    report = check_transversality(dist, inputs, q, tol)
    if not report:
        raise NotTransversal(q, report)
    metric_at(inputs.metric, q)
    PD, PF, _, _ = oblique_parts(inputs.metric, dist, inputs, q)
    return ProjectorPair(PD, PF, ProjectorKind.OBLIQUE)


def orthogonal_projectors(metric: MetricField, dist: Distribution, q) -> ProjectorPair:
    q = value_of(q)
    basis_D(dist, q)  # rank check
    metric_at(metric, q)
    P, Qp = orthogonal_parts(metric, dist, q)
    return ProjectorPair(P, Qp, ProjectorKind.ORTHOGONAL)


def inputs_annihilate_distribution(dist: Distribution, inputs: InputDistribution, q, tol=1e-10) -> bool:
    """True when every input form lies in the span of the constraint forms,
    i.e. the input distribution is metric-orthogonal to the constraints."""
    C = dist.matrix(value_of(q))
    F = inputs.matrix(value_of(q))
    if F.size == 0:
        return True
    if C.size == 0:
        return False
    coeffs, *_ = np.linalg.lstsq(C.T, F.T, rcond=None)
    return bool(np.max(np.abs(C.T @ coeffs - F.T)) <= tol * max(1.0, np.max(np.abs(F))))
