"""Synthesis of the feedback law that renders a distribution invariant.

Along the uncontrolled flow the constraint functions ``phi^b = mu^b(q) qdot``
change at rate ``-b``; each input ``u_a`` adds ``A[b, a] = mu^b(Y^a)``.  The
invariance-enforcing control solves ``A tau = b``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from vnc import exprlang
from vnc.distributions import Distribution, InputDistribution
from vnc.dual import Dual
from vnc.errors import ControlUnavailable, InvalidSystem
from vnc.exprlang import Expr
from vnc.geometry import ChartSpec, christoffel_lc, grad_potential, metric_at
from vnc.state import as_state

SINGULAR_RTOL = 1e-10
RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class ForceField:
    """Uncontrolled force vector field ``Y0(q, qdot)`` (already raised by the
    metric); may depend on velocities."""

    chart: ChartSpec
    components: tuple[Expr, ...]

    def __post_init__(self):
        comps = tuple(
            c if isinstance(c, Expr) else self.chart.parse(str(c)) for c in self.components
        )
        if len(comps) != self.chart.n:
            raise InvalidSystem(f"force field needs {self.chart.n} components")
        object.__setattr__(self, "components", comps)

    @classmethod
    def zero(cls, chart: ChartSpec) -> "ForceField":
        return cls(chart, tuple(exprlang.Num(0.0) for _ in range(chart.n)))

    @property
    def is_zero(self) -> bool:
        return all(isinstance(c, exprlang.Num) and c.value == 0.0 for c in self.components)

    def __call__(self, q, qdot) -> np.ndarray:
        point = np.concatenate([np.asarray(q, float), np.asarray(qdot, float)])
        return np.array([exprlang.evaluate(c, point) for c in self.components])


class ControlStatus(enum.Enum):
    UNIQUE = "unique"
    NONEXISTENT = "nonexistent"
    NONUNIQUE = "nonunique"


@dataclass(frozen=True)
class ControlSolution:
    status: ControlStatus
    tau: np.ndarray
    condition: float
    residual: float
    A: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)

    @property
    def unique(self) -> bool:
        return self.status is ControlStatus.UNIQUE


def control_matrix(dist: Distribution, inputs: InputDistribution, q) -> np.ndarray:
    """``A[b, a] = mu^b(Y^a)``, shape ``(m, k)``."""
    q = np.asarray(q, dtype=float)
    return dist.matrix(q) @ inputs.vector_fields(q)


def drift_acceleration(system, state) -> np.ndarray:
    """Uncontrolled acceleration: geodesic spray plus forces (potential included
    as ``-grad V``)."""
    s = as_state(state)
    gamma = christoffel_lc(system.metric, s.q)
    acc = -gamma.contract(s.qdot, s.qdot)
    if not system.drift_force.is_zero:
        acc = acc + system.drift_force(s.q, s.qdot)
    if not system.potential.is_zero:
        acc = acc - grad_potential(system.metric, system.potential, s.q)
    return acc


def constraint_rate_quadratic(dist: Distribution, state) -> np.ndarray:
    """``(d_j mu^b_i) qdot^j qdot^i``, the part of ``d phi/dt`` not involving
    the acceleration."""
    s = as_state(state)
    C = dist.matrix(Dual.variables(s.q))
    return np.einsum("jbi,j,i->b", C.partials, s.qdot, s.qdot)


def control_rhs(system, state) -> np.ndarray:
    s = as_state(state)
    C = system.constraints.matrix(s.q)
    return -(constraint_rate_quadratic(system.constraints, s) + C @ drift_acceleration(system, s))


def classify(A: np.ndarray, b: np.ndarray, scale: float = 1.0) -> ControlSolution:
    """Solve ``A tau = b`` and diagnose uniqueness/existence.

    Singular values at or below ``1e-10 * max(sigma_max, scale)`` count as zero;
    ``scale`` guards the case where ``A`` vanishes up to round-off.
    """
    m, k = A.shape
    if k == 0:
        res = float(np.linalg.norm(b))
        status = ControlStatus.UNIQUE if res <= RESIDUAL_TOL * (1 + res) else ControlStatus.NONEXISTENT
        return ControlSolution(status, np.zeros(0), np.inf, res, A, b)
    u, s, vt = np.linalg.svd(A)
    cutoff = SINGULAR_RTOL * max(s[0] if s.size else 0.0, scale)
    rank = int(np.sum(s > cutoff))
    if rank == m == k:
        tau = np.linalg.solve(A, b)
    else:
        inv = np.array([1.0 / x if x > cutoff else 0.0 for x in s])
        tau = vt[: s.size].T @ (inv * (u[:, : s.size].T @ b))
    residual = float(np.linalg.norm(A @ tau - b))
    condition = float(s[0] / s[-1]) if s.size and s[-1] > 0 else np.inf
    if residual > RESIDUAL_TOL * (1.0 + float(np.linalg.norm(b))):
        status = ControlStatus.NONEXISTENT
    elif rank < k:
        status = ControlStatus.NONUNIQUE
    else:
        status = ControlStatus.UNIQUE
    return ControlSolution(status, tau, condition, residual, A, b)


def solve_control(system, state, stabilize: float = 0.0) -> ControlSolution:
    """Invariance-enforcing control at ``state``.

    ``stabilize > 0`` adds the optional extension ``d phi/dt = -k phi`` (off by
    default: the plain law holds every level set of ``phi`` invariant).
    """
    s = as_state(state)
    C = system.constraints.matrix(s.q)
    Y = system.inputs.vector_fields(s.q)
    A = C @ Y
    b = control_rhs(system, s)
    if stabilize:
        b = b - stabilize * (C @ s.qdot)
    scale = float(np.linalg.norm(C, 2) * np.linalg.norm(Y, 2)) if A.size else 1.0
    return classify(A, b, scale)


def closed_loop_field(system, state, allow_nonunique: bool = False, stabilize: float = 0.0):
    """``(qdot, qddot)`` of the closed-loop second-order field."""
    s = as_state(state)
    sol = solve_control(system, s, stabilize)
    if sol.status is ControlStatus.NONEXISTENT or (
        sol.status is ControlStatus.NONUNIQUE and not allow_nonunique
    ):
        raise ControlUnavailable(f"control is {sol.status.value} at q={s.q.tolist()}", sol)
    metric_at(system.metric, s.q)
    Y = system.inputs.vector_fields(s.q)
    return s.qdot.copy(), drift_acceleration(system, s) + Y @ sol.tau


def reference_control(system, state) -> np.ndarray:
    """Closed-form control attached to a builtin, evaluated at ``state``."""
    if system.reference_control is None:
        raise ValueError(f"system {system.name!r} has no closed-form control")
    s = as_state(state)
    return np.array([exprlang.evaluate(e, s.point) for e in system.reference_control])
