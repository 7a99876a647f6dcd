"""Exception types shared across the package."""

import numpy as np

from vnc.dual import DomainError


class InvalidSystem(ValueError):
    """The user-supplied system violates a structural requirement."""


class NotPositiveDefinite(InvalidSystem):
    pass


class NotSymmetric(InvalidSystem):
    pass


class RankDeficientConstraints(ValueError):
    def __init__(self, q, rank: int, expected: int):
        super().__init__(f"constraint one-forms have rank {rank} < {expected} at q={np.asarray(q, float).tolist()}")
        self.q = q
        self.rank = rank


class NotTransversal(ValueError):
    def __init__(self, q, diagnosis=None):
        super().__init__(f"constraint and input distributions are not transversal at q={np.asarray(q, float).tolist()}")
        self.q = q
        self.diagnosis = diagnosis


class ControlUnavailable(RuntimeError):
    """No unique invariance-enforcing control exists at a state."""

    def __init__(self, message: str, solution=None):
        super().__init__(message)
        self.solution = solution


class StepFailure(RuntimeError):
    """Integration produced a non-finite state."""


class GridMismatch(ValueError):
    pass


__all__ = [
    "ControlUnavailable",
    "DomainError",
    "GridMismatch",
    "InvalidSystem",
    "NotPositiveDefinite",
    "NotSymmetric",
    "NotTransversal",
    "RankDeficientConstraints",
    "StepFailure",
]
