"""Virtual nonholonomic constraints for mechanical control systems.

The package computes the feedback that makes a distribution of velocities
invariant, the induced constrained connection, and trajectories of the
resulting closed loop.  Systems are described by expression strings over a
single chart (see :mod:`vnc.exprlang`).
"""

from vnc.connections import (
    christoffel_fd,
    christoffel_of,
    constrained_connection_apply,
    geodesic_invariance_check,
    nonholonomic_connection_apply,
)
from vnc.control import ControlSolution, ControlStatus, closed_loop_field, solve_control
from vnc.distributions import (
    Distribution,
    InputDistribution,
    check_transversality,
    oblique_projectors,
    orthogonal_projectors,
)
from vnc.dynamics import (
    Trajectory,
    closed_loop_trajectory,
    compare_trajectories,
    constrained_geodesic_trajectory,
    nonholonomic_trajectory,
    random_on_distribution_states,
    simulate,
    uncontrolled_trajectory,
)
from vnc.errors import (
    ControlUnavailable,
    DomainError,
    GridMismatch,
    InvalidSystem,
    NotPositiveDefinite,
    NotSymmetric,
    NotTransversal,
    RankDeficientConstraints,
    StepFailure,
)
from vnc.geometry import ChartSpec, ConnectionCoefficients, ConnectionKind, MetricField, christoffel_lc
from vnc.kernels import BACKEND
from vnc.state import TangentState
from vnc.systems import BUILTINS, SystemSpec, build_system, from_config, get_builtin

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "BUILTINS",
    "ChartSpec",
    "ConnectionCoefficients",
    "ConnectionKind",
    "ControlSolution",
    "ControlStatus",
    "ControlUnavailable",
    "Distribution",
    "DomainError",
    "GridMismatch",
    "InputDistribution",
    "InvalidSystem",
    "MetricField",
    "NotPositiveDefinite",
    "NotSymmetric",
    "NotTransversal",
    "RankDeficientConstraints",
    "StepFailure",
    "SystemSpec",
    "TangentState",
    "Trajectory",
    "build_system",
    "check_transversality",
    "christoffel_fd",
    "christoffel_lc",
    "christoffel_of",
    "closed_loop_field",
    "closed_loop_trajectory",
    "compare_trajectories",
    "constrained_connection_apply",
    "constrained_geodesic_trajectory",
    "from_config",
    "geodesic_invariance_check",
    "get_builtin",
    "nonholonomic_connection_apply",
    "nonholonomic_trajectory",
    "oblique_projectors",
    "orthogonal_projectors",
    "random_on_distribution_states",
    "simulate",
    "solve_control",
    "uncontrolled_trajectory",
]
