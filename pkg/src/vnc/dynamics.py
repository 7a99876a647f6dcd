"""Trajectory integration for the four formulations, drift and energy
monitoring, and trajectory comparison.

The formulations are

* ``uncontrolled``: ``qddot = -Gamma(qdot, qdot) + Y0 - grad V``
* ``closedloop``: the uncontrolled field plus the invariance control
* ``constrained``: geodesics of the induced constrained connection, forced by
  the projected external forces
* ``nonholonomic``: the same with the metric-orthogonal projector, i.e. the
  physical constrained motion

Fixed-step RK4 runs inside the compiled kernel; RK45 goes through
:func:`scipy.integrate.solve_ivp` with the kernel supplying the field.
"""

from __future__ import annotations

import io
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from vnc import kernels
from vnc._kernels_py import KernelError as _PyKernelError
from vnc.connections import random_section
from vnc.control import ControlStatus, ForceField, solve_control
from vnc.distributions import (
    basis_D,
    check_transversality,
    oblique_parts,
    orthogonal_parts,
)
from vnc.errors import (
    ControlUnavailable,
    DomainError,
    GridMismatch,
    NotPositiveDefinite,
    NotTransversal,
    StepFailure,
)
from vnc.geometry import PotentialField, christoffel_lc
from vnc.state import TangentState, as_state

__all__ = [
    "ComparisonReport",
    "OffDistributionWarning",
    "TangentState",
    "Trajectory",
    "closed_loop_trajectory",
    "compare_trajectories",
    "constrained_geodesic_trajectory",
    "integrate",
    "nonholonomic_trajectory",
    "random_on_distribution_states",
    "simulate",
    "uncontrolled_trajectory",
]

FORMULATIONS = tuple(kernels.FORMULATIONS)
ON_DISTRIBUTION_TOL = 1e-10
# speed of randomly sampled on-distribution states; see random_on_distribution_states
DEFAULT_SAMPLE_SPEED = 0.5


class OffDistributionWarning(UserWarning):
    """Raised (as a warning) when an initial velocity is projected onto the
    constraint distribution."""


@dataclass
class Trajectory:
    """Sampled solution with per-sample diagnostics.

    ``u`` holds the applied controls (closed loop and constrained), the
    constraint multipliers (nonholonomic) or zeros (uncontrolled).
    """

    t: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    u: np.ndarray
    phi: np.ndarray
    energy: np.ndarray
    formulation: str = "custom"
    system: str = ""
    method: str = "rk4"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        if self.t.size > 1 and not np.all(np.diff(self.t) > 0):
            raise ValueError("trajectory times must be strictly increasing")

    def __len__(self) -> int:
        return self.t.size

    @property
    def n(self) -> int:
        return self.q.shape[1]

    def state(self, i: int) -> TangentState:
        return TangentState(self.q[i], self.qdot[i], self.t[i])

    @property
    def states(self) -> list[TangentState]:
        return [self.state(i) for i in range(len(self))]

    @property
    def final(self) -> TangentState:
        return self.state(len(self) - 1)

    @property
    def max_drift(self) -> float:
        return float(np.max(np.abs(self.phi))) if self.phi.size else 0.0

    @property
    def max_abs_u(self) -> float:
        return float(np.max(np.abs(self.u))) if self.u.size else 0.0

    @property
    def energy_span(self) -> float:
        return float(np.ptp(self.energy)) if self.energy.size else 0.0

    def columns(self) -> list[str]:
        n, nu, m = self.q.shape[1], self.u.shape[1], self.phi.shape[1]
        return (
            ["t"]
            + [f"q{i + 1}" for i in range(n)]
            + [f"v{i + 1}" for i in range(n)]
            + [f"u{i + 1}" for i in range(nu)]
            + [f"phi{i + 1}" for i in range(m)]
            + ["energy"]
        )

    def table(self) -> np.ndarray:
        return np.column_stack([self.t, self.q, self.qdot, self.u, self.phi, self.energy])

    def to_csv(self, path=None) -> str:
        """CSV text (17 significant digits); also written to ``path`` if given."""
        buf = io.StringIO()
        buf.write(",".join(self.columns()) + "\n")
        np.savetxt(buf, self.table(), fmt="%.17g", delimiter=",")
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "formulation": self.formulation,
            "method": self.method,
            "columns": self.columns(),
            "data": self.table().tolist(),
            "summary": self.summary(),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text: str, m: int | None = None) -> "Trajectory":
        lines = text.strip().splitlines()
        header = lines[0].split(",")
        data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
        n = sum(1 for h in header if h.startswith("q"))
        nu = sum(1 for h in header if h.startswith("u"))
        m = sum(1 for h in header if h.startswith("phi"))
        j = 1
        q = data[:, j : j + n]
        j += n
        qdot = data[:, j : j + n]
        j += n
        u = data[:, j : j + nu]
        j += nu
        phi = data[:, j : j + m]
        return cls(data[:, 0], q, qdot, u, phi, data[:, -1])

    def summary(self) -> dict:
        fin = self.final
        return {
            "samples": len(self),
            "t_final": float(fin.t),
            "q_final": fin.q.tolist(),
            "qdot_final": fin.qdot.tolist(),
            "max_drift": self.max_drift,
            "max_abs_u": self.max_abs_u,
            "energy_span": self.energy_span,
        }


# ---------------------------------------------------------------------------
# generic integration


def _grid(dt: float, T: float) -> tuple[int, float]:
    if not (dt > 0 and math.isfinite(dt)):
        raise ValueError("dt must be positive")
    if not (T >= 0 and math.isfinite(T)):
        raise ValueError("T must be non-negative")
    if T == 0:
        return 0, dt
    nsteps = max(1, math.ceil(T / dt - 1e-9))
    return nsteps, T / nsteps


def integrate(
    field_fn: Callable,
    initial,
    dt: float,
    T: float,
    method: str = "rk4",
    atol: float = 1e-9,
    rtol: float = 1e-9,
) -> Trajectory:
    """Integrate a second-order field ``qddot = field_fn(q, qdot)``.

    ``dt`` is the RK4 step and the output spacing for RK45.  When ``T`` is not
    a multiple of ``dt`` the step is shrunk so the grid ends exactly at ``T``.
    """
    s = as_state(initial)
    n = s.n
    nsteps, h = _grid(dt, T)
    t = s.t + h * np.arange(nsteps + 1)
    if nsteps:
        t[-1] = s.t + T

    def f(y):
        a = np.asarray(field_fn(y[:n], y[n:]), dtype=float)
        return np.concatenate([y[n:], a])

    ys = np.empty((nsteps + 1, 2 * n))
    ys[0] = s.point
    if method == "rk4":
        y = s.point.copy()
        for i in range(nsteps):
            k1 = f(y)
            k2 = f(y + 0.5 * h * k1)
            k3 = f(y + 0.5 * h * k2)
            k4 = f(y + h * k3)
            y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(y)):
                raise StepFailure(f"non-finite state at t={t[i + 1]:.6g}")
            ys[i + 1] = y
    elif method == "rk45":
        if nsteps:
            ys[:] = _rk45(lambda _t, y: f(y), s.point, t, atol, rtol)
    else:
        raise ValueError(f"unknown method {method!r}")
    zeros = np.zeros((nsteps + 1, 0))
    return Trajectory(t, ys[:, :n], ys[:, n:], zeros, zeros, np.zeros(nsteps + 1), method=method)


def _rk45(fun, y0, t, atol, rtol):
    sol = solve_ivp(fun, (t[0], t[-1]), y0, method="RK45", t_eval=t, atol=atol, rtol=rtol)
    if sol.status != 0 or sol.y.shape[1] != t.size:
        raise StepFailure(f"RK45 failed: {sol.message}")
    out = sol.y.T
    if not np.all(np.isfinite(out)):
        raise StepFailure("non-finite state")
    return out


# ---------------------------------------------------------------------------
# system integration


def _kernel_errors():
    errs = [_PyKernelError]
    try:
        from vnc import _kernels

        errs.append(_kernels.KernelError)
    except ImportError:
        pass
    return tuple(errs)


def _project_initial(system, s: TangentState, formulation: str) -> TangentState:
    if system.m == 0 or formulation == "uncontrolled":
        return s
    phi = system.constraints.matrix(s.q) @ s.qdot
    if np.max(np.abs(phi)) <= ON_DISTRIBUTION_TOL:
        return s
    if formulation != "nonholonomic" and check_transversality(system.constraints, system.inputs, s.q):
        PD = oblique_parts(system.metric, system.constraints, system.inputs, s.q)[0]
    else:
        PD = orthogonal_parts(system.metric, system.constraints, s.q)[0]
    warnings.warn(
        f"initial velocity violates the constraints by {np.max(np.abs(phi)):.3g}; projecting onto D",
        OffDistributionWarning,
        stacklevel=3,
    )
    return TangentState(s.q, PD @ s.qdot, s.t)


def _raise_for(code: int, system, formulation: str, state: TangentState):
    if code == kernels.DOMAIN:
        raise DomainError(f"expression domain error near t={state.t:.6g}")
    if code == kernels.NONFINITE:
        raise StepFailure(f"non-finite state near t={state.t:.6g}")
    if code == kernels.NOT_PD:
        raise NotPositiveDefinite(f"metric lost positive definiteness near q={state.q.tolist()}")
    if code == kernels.SINGULAR:
        if formulation == "constrained":
            raise NotTransversal(state.q, check_transversality(system.constraints, system.inputs, state.q))
        sol = solve_control(system, state)
        raise ControlUnavailable(
            f"control is {sol.status.value} near t={state.t:.6g}, q={state.q.tolist()}", sol
        )
    raise StepFailure(f"kernel status {code}")


def _precheck(system, s: TangentState, formulation: str, stabilize: float):
    if formulation == "closedloop":
        sol = solve_control(system, s, stabilize)
        if sol.status is not ControlStatus.UNIQUE:
            raise ControlUnavailable(f"control is {sol.status.value} at the initial state", sol)
    elif formulation == "constrained":
        report = check_transversality(system.constraints, system.inputs, s.q)
        if not report:
            raise NotTransversal(s.q, report)
    elif formulation == "nonholonomic" and system.m:
        basis_D(system.constraints, s.q)


def simulate(
    system,
    initial,
    formulation: str = "closedloop",
    dt: float = 1e-3,
    T: float = 10.0,
    method: str = "rk4",
    atol: float = 1e-9,
    rtol: float = 1e-9,
    stabilize: float = 0.0,
    backend: str | None = None,
    project: bool = True,
) -> Trajectory:
    """Integrate ``system`` under one of the four formulations."""
    if formulation not in kernels.FORMULATIONS:
        raise ValueError(f"unknown formulation {formulation!r}; choose from {FORMULATIONS}")
    code = kernels.FORMULATIONS[formulation]
    s = as_state(initial)
    if s.n != system.n:
        raise ValueError(f"initial state has dimension {s.n}, system has {system.n}")
    if project:
        s = _project_initial(system, s, formulation)
    _precheck(system, s, formulation, stabilize)
    kernel = kernels.compile_system(system, backend)
    nsteps, h = _grid(dt, T)
    t = s.t + h * np.arange(nsteps + 1)
    if nsteps:
        t[-1] = s.t + T
    if method == "rk4":
        Q, V, U, PHI, E, status, filled = kernel.integrate_rk4(s.q, s.qdot, h, nsteps, code, stabilize)
        if status != kernels.OK:
            i = max(filled - 1, 0)
            at = TangentState(Q[i], V[i], t[i]) if filled else s
            _raise_for(status, system, formulation, at)
    elif method == "rk45":
        errors = _kernel_errors()
        n = system.n

        def fun(_t, y):
            try:
                a, _ = kernel.acceleration(y[:n], y[n:], code, stabilize)
            except errors as exc:
                _raise_for(exc.code, system, formulation, TangentState(y[:n], y[n:], _t))
            return np.concatenate([y[n:], a])

        ys = _rk45(fun, s.point, t, atol, rtol) if nsteps else s.point[None, :]
        Q, V = ys[:, :n], ys[:, n:]
        nu = system.m if code == kernels.FORMULATIONS["nonholonomic"] else system.k
        U = np.zeros((t.size, nu))
        PHI = np.zeros((t.size, system.m))
        E = np.zeros(t.size)
        for i in range(t.size):
            try:
                U[i] = kernel.acceleration(Q[i], V[i], code, stabilize)[1]
            except errors as exc:
                _raise_for(exc.code, system, formulation, TangentState(Q[i], V[i], t[i]))
            PHI[i] = kernel.constraint_values(Q[i], V[i])
            E[i] = kernel.energy(Q[i], V[i])
    else:
        raise ValueError(f"unknown method {method!r}")
    return Trajectory(
        t, Q, V, U, PHI, E,
        formulation=formulation,
        system=system.name,
        method=method,
        meta={"dt": h, "T": float(T), "stabilize": stabilize, "backend": kernel.backend},
    )


def closed_loop_trajectory(system, initial, dt: float = 1e-3, T: float = 10.0, **kw) -> Trajectory:
    return simulate(system, initial, "closedloop", dt, T, **kw)


def constrained_geodesic_trajectory(system, initial, dt: float = 1e-3, T: float = 10.0, **kw) -> Trajectory:
    return simulate(system, initial, "constrained", dt, T, **kw)


def nonholonomic_trajectory(system, initial, dt: float = 1e-3, T: float = 10.0, **kw) -> Trajectory:
    return simulate(system, initial, "nonholonomic", dt, T, **kw)


def uncontrolled_trajectory(system, initial, dt: float = 1e-3, T: float = 10.0, **kw) -> Trajectory:
    return simulate(system, initial, "uncontrolled", dt, T, **kw)


def unforced(system):
    """Copy of ``system`` with zero potential and zero drift force, so the
    formulations integrate pure geodesics."""
    return replace(
        system,
        potential=PotentialField(system.chart, "0"),
        drift_force=ForceField.zero(system.chart),
    )


# ---------------------------------------------------------------------------
# comparison


@dataclass(frozen=True)
class ComparisonReport:
    max_distance: float
    q_distance: float
    qdot_distance: float
    times: np.ndarray = field(repr=False)
    per_time: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "max_distance": self.max_distance,
            "q_distance": self.q_distance,
            "qdot_distance": self.qdot_distance,
            "samples": int(self.times.size),
        }


def _interp(t_src, values, t_dst):
    return np.column_stack([np.interp(t_dst, t_src, values[:, j]) for j in range(values.shape[1])])


def compare_trajectories(a: Trajectory, b: Trajectory) -> ComparisonReport:
    """Sup-norm distance on ``q`` and ``qdot`` over the common time range,
    interpolating linearly onto the coarser of the two grids."""
    if a.n != b.n:
        raise GridMismatch(f"dimension mismatch: {a.n} vs {b.n}")
    lo = max(a.t[0], b.t[0])
    hi = min(a.t[-1], b.t[-1])
    if hi < lo:
        raise GridMismatch("time ranges do not overlap")
    coarse = a if len(a) <= len(b) else b
    grid = coarse.t[(coarse.t >= lo - 1e-12) & (coarse.t <= hi + 1e-12)]
    if grid.size == 0:
        grid = np.array([lo])

    def on_grid(tr, arr):
        if tr.t.size == 1:
            return np.repeat(arr, grid.size, axis=0)
        return _interp(tr.t, arr, grid)

    dq = np.abs(on_grid(a, a.q) - on_grid(b, b.q))
    dv = np.abs(on_grid(a, a.qdot) - on_grid(b, b.qdot))
    per = np.maximum(dq.max(axis=1, initial=0.0), dv.max(axis=1, initial=0.0))
    return ComparisonReport(
        float(per.max(initial=0.0)),
        float(dq.max(initial=0.0)),
        float(dv.max(initial=0.0)),
        grid,
        per,
    )


# ---------------------------------------------------------------------------
# sampling and structural checks


def random_on_distribution_states(
    system, rng: np.random.Generator, count: int, speed: float = DEFAULT_SAMPLE_SPEED, spread: float = math.pi
):
    """Random ``(q, qdot)`` with ``q`` uniform in ``[-spread, spread]^n`` and
    ``qdot`` a Gaussian combination of an orthonormal basis of the
    distribution, scaled to norm ``speed``.

    The default speed is moderate on purpose: under the knife-edge control law
    the turn rate grows like ``exp((m/I)|v| t)`` when the forward speed ``v``
    is negative, and at unit speed a fixed RK4 step no longer resolves the
    motion over ten time units.
    """
    out = []
    for _ in range(count):
        q = rng.uniform(-spread, spread, size=system.n)
        B = basis_D(system.constraints, q)
        v = B @ rng.normal(size=B.shape[1])
        nv = np.linalg.norm(v)
        v = v * (speed / nv) if nv > 0 else v
        out.append(TangentState(q, v))
    return out


@dataclass(frozen=True)
class CheckReport:
    name: str
    passed: bool
    value: float
    tol: float
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "value": self.value, "tol": self.tol, **self.detail}


def _levi_civita_self(system, X, q):
    from vnc.connections import covariant_derivative

    return covariant_derivative(christoffel_lc(system.metric, q), X, X, q)


def check_modified_potential_condition(system, samples: int = 50, seed: int = 0, tol: float = 1e-8, fields=None) -> CheckReport:
    """Evaluate ``|(Q - P_F)(nabla_X X)|`` for random sections ``X`` of the
    distribution; the condition holds when the maximum is below ``tol``."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for i in range(samples):
        q = rng.uniform(-math.pi, math.pi, size=system.n)
        report = check_transversality(system.constraints, system.inputs, q)
        if not report:
            raise NotTransversal(q, report)
        X = fields[i % len(fields)] if fields else random_section(system.metric, system.constraints, rng)
        nab = _levi_civita_self(system, X, q)
        _, Qp = orthogonal_parts(system.metric, system.constraints, q)
        _, PF, _, _ = oblique_parts(system.metric, system.constraints, system.inputs, q)
        worst = max(worst, float(np.max(np.abs((Qp - PF) @ nab))))
    return CheckReport("modified_potential_condition", worst < tol, worst, tol, {"samples": samples})


def geodesic_field_tangency_check(
    system,
    samples: int = 50,
    seed: int = 0,
    tol: float = 1e-8,
    trajectories: int = 5,
    T: float = 5.0,
    dt: float = 1e-3,
    agreement_tol: float = 1e-6,
) -> CheckReport:
    """Is the Levi-Civita geodesic spray tangent to the distribution?

    Evaluates ``max |mu^a(nabla_X X)|`` over random sections.  When it
    vanishes, free, nonholonomic and constrained geodesics must coincide; that
    is then checked on sampled initial conditions.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(samples):
        q = rng.uniform(-math.pi, math.pi, size=system.n)
        X = random_section(system.metric, system.constraints, rng)
        nab = _levi_civita_self(system, X, q)
        worst = max(worst, float(np.max(np.abs(system.constraints.matrix(q) @ nab), initial=0.0)))
    detail: dict = {"samples": samples}
    passed = worst < tol
    if passed:
        free = unforced(system)
        gap = 0.0
        for s in random_on_distribution_states(free, rng, trajectories):
            runs = [simulate(free, s, f, dt, T) for f in ("uncontrolled", "nonholonomic", "constrained")]
            gap = max(gap, compare_trajectories(runs[0], runs[1]).max_distance)
            gap = max(gap, compare_trajectories(runs[0], runs[2]).max_distance)
        detail["trajectory_gap"] = gap
        passed = gap < agreement_tol
    return CheckReport("geodesic_field_tangency", passed, worst, tol, detail)


def geodesic_invariance_check(
    system,
    kind: str = "constrained",
    samples: int = 20,
    horizon: float = 10.0,
    dt: float = 1e-3,
    tol: float = 1e-6,
    seed: int = 0,
    states=None,
) -> CheckReport:
    """Integrate geodesics of the chosen connection from on-distribution
    states and report the largest constraint violation."""
    formulation = {"constrained": "constrained", "nonholonomic": "nonholonomic", "levicivita": "uncontrolled"}[kind]
    free = unforced(system)
    rng = np.random.default_rng(seed)
    if states is None:
        states = random_on_distribution_states(free, rng, samples)
    worst = 0.0
    failures = []
    for s in states:
        try:
            tr = simulate(free, s, formulation, dt, horizon)
            worst = max(worst, tr.max_drift)
        except (StepFailure, DomainError, NotTransversal, ControlUnavailable) as exc:
            failures.append(str(exc))
    return CheckReport(
        f"geodesic_invariance[{kind}]",
        worst < tol and not failures,
        worst,
        tol,
        {"samples": len(states), "failures": failures},
    )
