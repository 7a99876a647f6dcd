"""The bundle of numerical checks behind ``vnc check``.

Identity checks must hold for every transversal system and decide the exit
status.  Property checks (orthogonality of the inputs, the modified potential
condition, tangency of the geodesic spray) describe the system and are
reported without affecting it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from vnc.connections import (
    christoffel_fd,
    christoffel_of,
    constrained_connection_apply,
    covariant_derivative,
    lie_bracket,
    random_section,
    torsion_constrained,
)
from vnc.control import (
    ControlStatus,
    closed_loop_field,
    constraint_rate_quadratic,
    reference_control,
    solve_control,
)
from vnc.distributions import (
    basis_D,
    check_transversality,
    inputs_annihilate_distribution,
    oblique_projectors,
    orthogonal_projectors,
)
from vnc.dynamics import (
    check_modified_potential_condition,
    geodesic_field_tangency_check,
    geodesic_invariance_check,
    random_on_distribution_states,
)
from vnc.geometry import christoffel_lc, metric_at

IDENTITY_TOL = 1e-9
PROJECTOR_TOL = 1e-10
FD_TOL = 1e-4
CONTROL_TOL = 1e-12


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float | None = None
    tol: float | None = None
    identity: bool = True
    message: str = ""
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"name": self.name, "passed": self.passed, "identity": self.identity}
        if self.value is not None:
            out["value"] = self.value
        if self.tol is not None:
            out["tol"] = self.tol
        if self.message:
            out["message"] = self.message
        out.update(self.detail)
        return out

    def line(self) -> str:
        tag = ("PASS" if self.passed else "FAIL") if self.identity else "INFO"
        text = f"[{tag}] {self.name}"
        if self.value is not None:
            text += f": {self.value:.3e}"
            if self.tol is not None:
                text += f" (tol {self.tol:g})"
        if self.message:
            text += f"  {self.message}"
        return text


def validate_system(system, rng: np.random.Generator, points: int = 5) -> None:
    """Evaluate the metric (symmetry and positive definiteness) and the
    constraint rank at the origin and a few random configurations."""
    qs = [np.zeros(system.n)] + [rng.uniform(-math.pi, math.pi, system.n) for _ in range(points)]
    for q in qs:
        metric_at(system.metric, q)
        if system.m:
            basis_D(system.constraints, q)


def _max(values) -> float:
    return float(max(values, default=0.0))


def run_checks(system, seed: int = 0, samples: int = 20, geodesics: int = 20, horizon: float = 10.0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    validate_system(system, rng)
    results: list[CheckResult] = []
    points = [rng.uniform(-math.pi, math.pi, system.n) for _ in range(samples)]
    reports = [check_transversality(system.constraints, system.inputs, q) for q in points]
    transversal = all(reports)
    results.append(
        CheckResult(
            "transversality",
            transversal,
            min(r.sigma_min for r in reports),
            None,
            message="TQ = D (+) F at all sampled points" if transversal else "D and F are not complementary",
            detail={"overlap_dims": sorted({r.overlap_dim for r in reports})},
        )
    )

    orth = [orthogonal_projectors(system.metric, system.constraints, q).defects() for q in points]
    results.append(CheckResult("orthogonal_projectors", _max(max(d.values()) for d in orth) < PROJECTOR_TOL,
                               _max(max(d.values()) for d in orth), PROJECTOR_TOL))
    lc_gap = _max(
        float(np.max(np.abs(christoffel_lc(system.metric, q).gamma
                            - christoffel_fd(system.metric, system.constraints, None, q, "levicivita").gamma)))
        for q in points
    )
    results.append(CheckResult("christoffel_levicivita_vs_fd", lc_gap < FD_TOL, lc_gap, FD_TOL))

    if not transversal:
        results.append(CheckResult("constrained_connection", False, message="skipped: not transversal"))
        _control_status(system, rng, results)
        return results

    obl = [oblique_projectors(system.constraints, system.inputs, q).defects() for q in points]
    obl_gap = _max(max(d.values()) for d in obl)
    results.append(CheckResult("oblique_projectors", obl_gap < PROJECTOR_TOL, obl_gap, PROJECTOR_TOL))

    fd_gap = _max(
        float(np.max(np.abs(
            christoffel_of(system.metric, system.constraints, system.inputs, q, "constrained").gamma
            - christoffel_fd(system.metric, system.constraints, system.inputs, q, "constrained").gamma
        )))
        for q in points
    )
    results.append(CheckResult("christoffel_constrained_vs_fd", fd_gap < FD_TOL, fd_gap, FD_TOL))

    lemma, torsion = [], []
    for q in points:
        X = random_section(system.metric, system.constraints, rng)
        Y = random_section(system.metric, system.constraints, rng)
        PD = oblique_projectors(system.constraints, system.inputs, q)
        nab_c = constrained_connection_apply(system.metric, system.constraints, system.inputs, X, Y, q)
        nab_g = covariant_derivative(christoffel_lc(system.metric, q), X, Y, q)
        lemma.append(float(np.max(np.abs(nab_c - PD.onto_d @ nab_g))))
        T = torsion_constrained(system.metric, system.constraints, system.inputs, X, Y, q)
        torsion.append(float(np.max(np.abs(T + PD.complement @ lie_bracket(X, Y, q)))))
    results.append(CheckResult("lemma_identity", _max(lemma) < IDENTITY_TOL, _max(lemma), IDENTITY_TOL))
    results.append(CheckResult("torsion_identity", _max(torsion) < IDENTITY_TOL, _max(torsion), IDENTITY_TOL))

    rates = []
    for s in random_on_distribution_states(system, rng, samples):
        qd, qdd = closed_loop_field(system, s)
        C = system.constraints.matrix(s.q)
        rates.append(float(np.max(np.abs(constraint_rate_quadratic(system.constraints, s) + C @ qdd))))
    results.append(CheckResult("control_defining_identity", _max(rates) < 1e-10, _max(rates), 1e-10))

    if system.reference_control is not None:
        gaps = []
        for s in random_on_distribution_states(system, rng, samples, speed=2.0):
            gaps.append(float(np.max(np.abs(solve_control(system, s).tau - reference_control(system, s)))))
        results.append(CheckResult("closed_form_control", _max(gaps) < CONTROL_TOL, _max(gaps), CONTROL_TOL))

    gi = geodesic_invariance_check(system, "constrained", samples=geodesics, horizon=horizon, seed=seed)
    results.append(CheckResult("geodesic_invariance_constrained", gi.passed, gi.value, gi.tol))

    # properties
    orthogonal = all(inputs_annihilate_distribution(system.constraints, system.inputs, q) for q in points)
    results.append(
        CheckResult(
            "input_orthogonality",
            orthogonal,
            identity=False,
            message="ℱ = 𝒟ᴖ: constrained ≡ nonholonomic" if orthogonal else "ℱ ⊄ 𝒟°",
        )
    )
    mp = check_modified_potential_condition(system, samples=samples, seed=seed)
    results.append(CheckResult("modified_potential_condition", mp.passed, mp.value, mp.tol, identity=False))
    tg = geodesic_field_tangency_check(system, samples=samples, seed=seed, trajectories=3)
    results.append(CheckResult("geodesic_field_tangency", tg.passed, tg.value, tg.tol, identity=False))
    return results


def _control_status(system, rng, results):
    statuses = {}
    for s in random_on_distribution_states(system, rng, 20):
        st = solve_control(system, s).status
        statuses[st.value] = statuses.get(st.value, 0) + 1
    unique = statuses.get(ControlStatus.UNIQUE.value, 0) == 20
    results.append(
        CheckResult("control_solvability", unique, identity=True,
                    message=", ".join(f"{k}: {v}" for k, v in sorted(statuses.items())))
    )
