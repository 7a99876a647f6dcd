from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TangentState:
    """A point of the tangent bundle: configuration plus velocity."""

    q: np.ndarray
    qdot: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        q = np.array(self.q, dtype=float).ravel()
        qdot = np.array(self.qdot, dtype=float).ravel()
        if q.shape != qdot.shape:
            raise ValueError("q and qdot must have the same length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qdot)) and np.isfinite(self.t)):
            raise ValueError("tangent state entries must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qdot", qdot)
        object.__setattr__(self, "t", float(self.t))

    @property
    def n(self) -> int:
        return self.q.size

    @property
    def point(self) -> np.ndarray:
        """Coordinates followed by velocities, the layout expressions use."""
        return np.concatenate([self.q, self.qdot])


def as_state(state) -> TangentState:
    if isinstance(state, TangentState):
        return state
    q, qdot = state
    return TangentState(q, qdot)
