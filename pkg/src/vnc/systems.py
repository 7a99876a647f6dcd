"""System descriptions and the builtin example systems.

Every builtin is written in the expression language, so it serializes to the
same JSON form a user would write by hand.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from vnc import exprlang
from vnc.control import ForceField
from vnc.distributions import Distribution, InputDistribution
from vnc.errors import InvalidSystem
from vnc.exprlang import Expr
from vnc.geometry import ChartSpec, MetricField, PotentialField

DEFAULT_PARAMETERS = {"m": 1.0, "I": 1.0, "J": 1.0, "gamma": 0.5, "a": 0.3}


@dataclass(frozen=True)
class SystemSpec:
    """Mechanical control system ``(G, V, D, F, Y0)`` on one chart."""

    name: str
    chart: ChartSpec
    metric: MetricField
    potential: PotentialField
    constraints: Distribution
    inputs: InputDistribution
    drift_force: ForceField
    reference_control: tuple[Expr, ...] | None = None

    def __post_init__(self):
        m, k = self.constraints.m, self.inputs.k
        if not m < self.n:
            raise InvalidSystem("need fewer constraints than coordinates")
        if k > self.n:
            raise InvalidSystem("more inputs than coordinates")
        if self.reference_control is not None and len(self.reference_control) != k:
            raise InvalidSystem("reference control needs one expression per input")

    @property
    def n(self) -> int:
        return self.chart.n

    @property
    def m(self) -> int:
        return self.constraints.m

    @property
    def k(self) -> int:
        return self.inputs.k

    @property
    def parameters(self) -> dict[str, float]:
        return dict(self.chart.parameters)

    def to_config(self) -> dict:
        """The ``custom`` block of the JSON system format."""
        src = exprlang.to_source
        out = {
            "name": self.name,
            "dim": self.n,
            "coordinates": list(self.chart.coordinates),
            "parameters": dict(self.chart.parameters),
            "metric": [[src(e) for e in row] for row in self.metric.entries],
            "potential": src(self.potential.expr),
            "constraints": [[src(e) for e in row] for row in self.constraints.forms],
            "inputs": [[src(e) for e in row] for row in self.inputs.forms],
            "drift_force": [src(e) for e in self.drift_force.components],
        }
        if self.reference_control is not None:
            out["reference_control"] = [src(e) for e in self.reference_control]
        return out


def build_system(
    name: str,
    coordinates: Sequence[str],
    parameters: Mapping[str, float],
    metric: Sequence[Sequence[str]],
    constraints: Sequence[Sequence[str]],
    inputs: Sequence[Sequence[str]],
    potential: str = "0",
    drift_force: Sequence[str] | None = None,
    reference_control: Sequence[str] | None = None,
) -> SystemSpec:
    chart = ChartSpec(len(coordinates), tuple(coordinates), dict(parameters))
    g = MetricField(chart, metric)
    force = ForceField(chart, tuple(drift_force)) if drift_force is not None else ForceField.zero(chart)
    ref = None
    if reference_control is not None:
        ref = tuple(chart.parse(s) for s in reference_control)
    return SystemSpec(
        name=name,
        chart=chart,
        metric=g,
        potential=PotentialField(chart, potential),
        constraints=Distribution(chart, constraints),
        inputs=InputDistribution(chart, inputs, g),
        drift_force=force,
        reference_control=ref,
    )


def from_config(cfg: Mapping) -> SystemSpec:
    """Build from the ``custom`` block of a JSON config."""
    coords = cfg.get("coordinates") or [f"q{i + 1}" for i in range(int(cfg["dim"]))]
    if "dim" in cfg and len(coords) != int(cfg["dim"]):
        raise InvalidSystem("coordinates do not match dim")
    return build_system(
        name=cfg.get("name", "custom"),
        coordinates=coords,
        parameters=cfg.get("parameters", {}),
        metric=cfg["metric"],
        constraints=cfg.get("constraints", []),
        inputs=cfg.get("inputs", []),
        potential=cfg.get("potential", "0"),
        drift_force=cfg.get("drift_force"),
        reference_control=cfg.get("reference_control"),
    )


# ---------------------------------------------------------------------------
# builtins

_SE2 = ("x", "y", "theta")
_SE2_METRIC = [["m", "0", "0"], ["0", "m", "0"], ["0", "0", "I"]]
_KNIFE = ["sin(theta)", "-cos(theta)", "0"]
_KNIFE_LAW = "-m*thetadot*(cos(theta)*xdot + sin(theta)*ydot)"


def se2_knife(m: float = 1.0, I: float = 1.0) -> SystemSpec:
    """Knife edge on SE(2) actuated along ``sin dx - cos dy + dtheta``."""
    return build_system(
        "se2_knife",
        _SE2,
        {"m": m, "I": I},
        _SE2_METRIC,
        [_KNIFE],
        [["sin(theta)", "-cos(theta)", "1"]],
        reference_control=[_KNIFE_LAW],
    )


def se2_damped(m: float = 1.0, I: float = 1.0, gamma: float = 0.5) -> SystemSpec:
    return build_system(
        "se2_damped",
        _SE2,
        {"m": m, "I": I, "gamma": gamma},
        _SE2_METRIC,
        [_KNIFE],
        [["sin(theta)", "-cos(theta)", "1"]],
        drift_force=["-gamma/m*xdot", "-gamma/m*ydot", "0"],
        reference_control=[_KNIFE_LAW],
    )


def rolling_disk(m: float = 1.0, I: float = 1.0, J: float = 1.0) -> SystemSpec:
    """Vertical rolling disk on ``(x, y, theta, phi)``: ``theta`` is the
    rolling angle, ``phi`` the heading."""
    return build_system(
        "rolling_disk",
        ("x", "y", "theta", "phi"),
        {"m": m, "I": I, "J": J},
        [["m", "0", "0", "0"], ["0", "m", "0", "0"], ["0", "0", "I", "0"], ["0", "0", "0", "J"]],
        [["1", "0", "-cos(phi)", "0"], ["0", "1", "-sin(phi)", "0"]],
        [["1", "0", "-cos(phi)", "1"], ["0", "1", "-sin(phi)", "1"]],
        reference_control=[
            "-m*thetadot*phidot*sin(phi)",
            "m*thetadot*phidot*cos(phi)",
        ],
    )


def chaplygin_sleigh(m: float = 1.0, I: float = 1.0) -> SystemSpec:
    """Sleigh with the blade under the mass center; inputs annihilate the
    constraint distribution."""
    return build_system(
        "chaplygin",
        _SE2,
        {"m": m, "I": I},
        _SE2_METRIC,
        [_KNIFE],
        [_KNIFE],
        reference_control=[_KNIFE_LAW],
    )


def offset_sleigh(m: float = 1.0, I: float = 1.0, a: float = 0.3) -> SystemSpec:
    """Sleigh whose mass center sits a distance ``a`` ahead of the blade.

    ``(x, y)`` is the blade contact point and ``I`` the inertia about the mass
    center, so the kinetic energy is that of a body at
    ``(x + a cos theta, y + a sin theta)``.
    """
    if a < 0:
        raise InvalidSystem("offset must be nonnegative")
    return build_system(
        "offset_sleigh",
        _SE2,
        {"m": m, "I": I, "a": a},
        [
            ["m", "0", "-m*a*sin(theta)"],
            ["0", "m", "m*a*cos(theta)"],
            ["-m*a*sin(theta)", "m*a*cos(theta)", "I + m*a^2"],
        ],
        [_KNIFE],
        [_KNIFE],
    )


def nonexistence_demo(m: float = 1.0, I: float = 1.0) -> SystemSpec:
    """Input field tangent to the constraint distribution: no invariance
    control exists off ``theta' (cos theta x' + sin theta y') = 0``."""
    return build_system(
        "nonexistence_demo",
        _SE2,
        {"m": m, "I": I},
        _SE2_METRIC,
        [_KNIFE],
        [["cos(theta)", "sin(theta)", "0"]],
    )


def nonuniqueness_demo(m: float = 1.0, I: float = 1.0) -> SystemSpec:
    """Two inputs spanning a complement of the constraints but meeting them
    along ``d/dtheta``."""
    return build_system(
        "nonuniqueness_demo",
        _SE2,
        {"m": m, "I": I},
        _SE2_METRIC,
        [_KNIFE],
        [["sin(theta)", "-cos(theta)", "1"], ["sin(theta)", "-cos(theta)", "0"]],
    )


# the two laws printed for the nonuniqueness example
NONUNIQUENESS_LAWS = ((_KNIFE_LAW, "0"), ("0", _KNIFE_LAW))


def integrable_demo() -> SystemSpec:
    """Flat R^3 with the integrable distribution ``span{dx, dy}`` and input
    ``dz``; the constrained connection is torsion-free on it."""
    return build_system(
        "integrable_demo",
        ("x", "y", "z"),
        {},
        [["1", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]],
        [["0", "0", "1"]],
        [["0", "0", "1"]],
    )


BUILTINS: dict[str, Callable[..., SystemSpec]] = {
    "se2_knife": se2_knife,
    "se2_damped": se2_damped,
    "rolling_disk": rolling_disk,
    "chaplygin": chaplygin_sleigh,
    "offset_sleigh": offset_sleigh,
    "nonexistence_demo": nonexistence_demo,
    "nonuniqueness_demo": nonuniqueness_demo,
    "integrable_demo": integrable_demo,
}

TRANSVERSAL_BUILTINS = ("se2_knife", "se2_damped", "rolling_disk", "chaplygin", "offset_sleigh")


def get_builtin(name: str, **parameters) -> SystemSpec:
    try:
        ctor = BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown system {name!r}; choose from {sorted(BUILTINS)}") from None
    import inspect

    accepted = inspect.signature(ctor).parameters
    unknown = set(parameters) - set(accepted)
    if unknown:
        raise InvalidSystem(f"system {name!r} has no parameters {sorted(unknown)}")
    return ctor(**parameters)


# ---------------------------------------------------------------------------
# sleigh observables


def sleigh_observables(q: np.ndarray, qdot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Forward speed ``v = cos(theta) x' + sin(theta) y'`` and turn rate
    ``omega = theta'`` for SE(2) charts (arrays of samples accepted)."""
    q = np.asarray(q, dtype=float)
    qdot = np.asarray(qdot, dtype=float)
    theta = q[..., 2]
    v = np.cos(theta) * qdot[..., 0] + np.sin(theta) * qdot[..., 1]
    return v, qdot[..., 2]


def sleigh_reduced_rhs(m: float, I: float, a: float):
    """Right-hand side of the reduced sleigh equations in ``(omega, v)``."""
    k = m * a / (I + m * a * a)

    def rhs(t, y):
        omega, v = y
        return np.array([-k * v * omega, a * omega * omega])

    return rhs


# ---------------------------------------------------------------------------
# printed closed forms for the rolling disk's constrained Christoffel symbols,
# transcribed with L and its phi-derivative substituted.  Keys are
# (upper, lower_1, lower_2) coordinate names; the first lower index is the
# differentiating direction.  Used only for the diff report.

_S, _C = "sin(phi)", "cos(phi)"
_L = f"(-I + J*m*{_C}^2 - m*{_S}^2 + m*{_S}*{_C})"
_LP = f"(-2*J*m*{_S}*{_C} - 2*m*{_S}*{_C} + m*({_C}^2 - {_S}^2))"


def _appendix_entries() -> dict[tuple[str, str, str], str]:
    s, c, L, Lp = _S, _C, _L, _LP
    L2 = f"{L}^2"
    return {
        ("x", "phi", "x"): f"2*J*m*{s}*{c}/{L} - (I*J + J*m*{s}^2)*{Lp}/{L2}",
        ("y", "phi", "x"): f"J*m*({s}^2 - {c}^2)/{L} + J*m*{s}*{c}*{Lp}/{L2}",
        ("theta", "phi", "x"): f"J*m*{s}/{L} + J*m*{c}*{Lp}/{L2}",
        ("phi", "phi", "x"): f"m^2*(2*{s}*{c} + {s}^2 - {c}^2)/{L} - m*(I + m*{s}^2 - m*{s}*{c})*{Lp}/{L2}",
        ("x", "phi", "y"): f"J*m*({s}^2 - {c}^2)/{L} + (I - J*m*{s}*{c})*{Lp}/{L2}",
        ("y", "phi", "y"): f"-2*J*m*{s}*{c}/{L} + (-I + J*m*{c}^2)*{Lp}/{L2}",
        ("theta", "phi", "y"): (
            f"2*J*m^2*{s}^2*{c}/(I*{L}) - (-I*m + J*m^2*{c}^2)*{c}/(I*{L})"
            f" - (-I*m + J*m^2*{c}^2)*{Lp}*{s}/(I*{L2}) + (I*m - J*m^2*{s}*{c})*{s}/(I*{L})"
            f" - (I*m - J*m^2*{s}*{c})*{Lp}*{c}/(I*{L2}) - (J*m^2*{s}^2 - J*m^2*{c}^2)*{c}/(I*{L})"
        ),
        ("phi", "phi", "y"): f"(J*m^2*{c}^2 - J*m^2*{s}*{c})*{Lp}/(J*{L2}) + m^2*({s}^2 - {c}^2 - 2*{s}*{c})/{L}",
        ("x", "phi", "theta"): f"(I*J*{s} - I*{c})/{L} + (-I*J*{c} - I*{s})*{Lp}/{L2}",
        ("y", "phi", "theta"): f"I*{c}/{L} + I*{Lp}*{s}/{L2}",
        ("theta", "phi", "theta"): (
            f"-(2 + 2*J)*m*{s}*{c}/{L} - m*{Lp}*{s}^2/{L2} + m*({c}^2 - {s}^2)/{L}"
            f" + (J*m*{c} + m*{s})*{Lp}*{c}/{L2}"
        ),
        ("phi", "phi", "theta"): (
            f"I*m*{c}/(J*{L}) + I*m*{Lp}*{s}/(J*{L2}) + (I*J*m*{s} - I*m*{c})/(J*{L})"
            f" + (-I*J*m*{c} - I*m*{s})*{Lp}/(J*{L2})"
        ),
        ("x", "phi", "phi"): f"-2*J*{s}*{c}/{L} + (-I*J - J*m*{s}^2)*{Lp}/(m*{L2})",
        ("y", "phi", "phi"): f"J*({c}^2 - {s}^2)/{L} + J*{Lp}*{s}*{c}/{L2}",
        ("theta", "phi", "phi"): (
            f"J*m*{s}^3/(I*{L}) - J*m*{Lp}*{s}^2*{c}/(I*{L2})"
            f" + (-I*J - J*m*{s}^2)*{s}/(I*{L}) - (-I*J - J*m*{s}^2)*{Lp}*{c}/(I*{L2})"
        ),
        ("phi", "phi", "phi"): (
            f"-m*{s}^2/{L} - 2*m*{s}*{c}/{L} + m*{c}^2/{L} + m*{Lp}*{s}*{c}/{L2}"
            f" + (-I*J - J*m*{s}^2)*{Lp}/(J*{L2})"
        ),
    }


ROLLING_DISK_APPENDIX = _appendix_entries()
ROLLING_DISK_APPENDIX_L = _L
