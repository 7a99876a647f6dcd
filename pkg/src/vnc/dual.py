"""Forward-mode dual numbers over NumPy arrays.

A :class:`Dual` carries a value array of any shape together with a stack of
partial derivatives, one slice per seeded direction.  Scalars and matrices use
the same type, so linear solves and matrix products propagate first
derivatives exactly (``d(A^-1 B) = A^-1 (dB - dA A^-1 B)``).
"""

from __future__ import annotations

import numpy as np


class DomainError(ArithmeticError):
    """Raised when an operation leaves its real domain (log of a nonpositive
    number, division by zero, ...)."""


class Dual:
    __slots__ = ("value", "partials")

    # make numpy defer to our reflected operators
    __array_ufunc__ = None

    def __init__(self, value, partials):
        self.value = np.asarray(value, dtype=float)
        self.partials = np.asarray(partials, dtype=float)
        if self.partials.shape[1:] != self.value.shape:
            raise ValueError(
                f"partials shape {self.partials.shape} does not match value shape {self.value.shape}"
            )

    @classmethod
    def constant(cls, value, nseeds: int) -> "Dual":
        value = np.asarray(value, dtype=float)
        return cls(value, np.zeros((nseeds,) + value.shape))

    @classmethod
    def variables(cls, point) -> "Dual":
        """Seed every component of a 1-d point with its own direction."""
        point = np.asarray(point, dtype=float)
        return cls(point, np.eye(point.size))

    @property
    def nseeds(self) -> int:
        return self.partials.shape[0]

    @property
    def shape(self):
        return self.value.shape

    @property
    def T(self) -> "Dual":
        return Dual(self.value.T, np.swapaxes(self.partials, -1, -2))

    def __len__(self):
        return len(self.value)

    def __getitem__(self, idx) -> "Dual":
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Dual(self.value[idx], self.partials[(slice(None),) + idx])

    def __iter__(self):
        for i in range(len(self.value)):
            yield self[i]

    def __repr__(self):
        return f"Dual(value={self.value!r}, partials={self.partials!r})"

    def _lift(self, other) -> "Dual":
        if isinstance(other, Dual):
            return other
        return Dual.constant(other, self.nseeds)

    def _partials_for(self, ndim: int):
        # left-pad value axes so partials broadcast against an ndim-d result
        pad = (1,) * (ndim - self.value.ndim)
        return self.partials.reshape((self.nseeds,) + pad + self.value.shape)

    def __add__(self, other):
        if isinstance(other, Dual):
            nd = max(self.value.ndim, other.value.ndim)
            return Dual(
                self.value + other.value,
                self._partials_for(nd) + other._partials_for(nd),
            )
        other = np.asarray(other, dtype=float)
        nd = max(self.value.ndim, other.ndim)
        return Dual(self.value + other, self._partials_for(nd) + np.zeros(other.shape))

    __radd__ = __add__

    def __neg__(self):
        return Dual(-self.value, -self.partials)

    def __pos__(self):
        return self

    def __sub__(self, other):
        return self + (-other if isinstance(other, Dual) else -np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            nd = max(self.value.ndim, other.value.ndim)
            return Dual(
                self.value * other.value,
                self._partials_for(nd) * other.value + self.value * other._partials_for(nd),
            )
        other = np.asarray(other, dtype=float)
        nd = max(self.value.ndim, other.ndim)
        return Dual(self.value * other, self._partials_for(nd) * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other)
        if np.any(other.value == 0.0):
            raise DomainError("division by zero")
        inv = 1.0 / other.value
        value = self.value * inv
        nd = value.ndim
        return Dual(value, (self._partials_for(nd) - value * other._partials_for(nd)) * inv)

    def __rtruediv__(self, other):
        return self._lift(other) / self

    def __pow__(self, other):
        if isinstance(other, Dual) and np.any(other.partials != 0.0):
            if np.any(self.value <= 0.0):
                raise DomainError("variable exponent requires a positive base")
            return (self.log() * other).exp()
        exponent = other.value if isinstance(other, Dual) else np.asarray(other, dtype=float)
        base = self.value
        if np.any((base == 0.0) & (exponent < 0.0)):
            raise DomainError("zero raised to a negative power")
        if np.any((base < 0.0) & (exponent != np.round(exponent))):
            raise DomainError("negative base with non-integer exponent")
        value = base**exponent
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(exponent == 0.0, 0.0, exponent * base ** (exponent - 1.0))
        return Dual(value, self.partials * slope)

    def __rpow__(self, other):
        return self._lift(other) ** self

    def __matmul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.value @ other.value,
                self.partials @ other.value + _left_times(self.value, other.partials),
            )
        other = np.asarray(other, dtype=float)
        return Dual(self.value @ other, self.partials @ other)

    def __rmatmul__(self, other):
        other = np.asarray(other, dtype=float)
        return Dual(other @ self.value, _left_times(other, self.partials))

    # elementary functions

    def sin(self):
        return Dual(np.sin(self.value), self.partials * np.cos(self.value))

    def cos(self):
        return Dual(np.cos(self.value), -self.partials * np.sin(self.value))

    def tan(self):
        c = np.cos(self.value)
        if np.any(c == 0.0):
            raise DomainError("tan at a pole")
        return Dual(np.tan(self.value), self.partials / (c * c))

    def exp(self):
        with np.errstate(over="raise"):
            try:
                e = np.exp(self.value)
            except FloatingPointError as exc:
                raise DomainError("exp overflow") from exc
        return Dual(e, self.partials * e)

    def log(self):
        if np.any(self.value <= 0.0):
            raise DomainError("log of a nonpositive number")
        return Dual(np.log(self.value), self.partials / self.value)

    def sqrt(self):
        if np.any(self.value < 0.0):
            raise DomainError("sqrt of a negative number")
        r = np.sqrt(self.value)
        if np.any((r == 0.0) & np.any(self.partials != 0.0, axis=0)):
            raise DomainError("sqrt is not differentiable at 0")
        with np.errstate(divide="ignore", invalid="ignore"):
            return Dual(r, np.where(r == 0.0, 0.0, self.partials / (2.0 * r)))

    def __abs__(self):
        return Dual(np.abs(self.value), self.partials * np.sign(self.value))

    abs = __abs__


def value_of(x):
    """Strip derivative information, leaving a float array."""
    return x.value if isinstance(x, Dual) else np.asarray(x, dtype=float)


def stack(items, nseeds: int | None = None) -> Dual:
    """Stack scalars or arrays (Dual or plain) into one Dual array."""
    items = list(items)
    if nseeds is None:
        nseeds = next((x.nseeds for x in items if isinstance(x, Dual)), 0)
    lifted = [x if isinstance(x, Dual) else Dual.constant(x, nseeds) for x in items]
    return Dual(
        np.stack([x.value for x in lifted]),
        np.stack([x.partials for x in lifted], axis=1),
    )


def _left_times(a: np.ndarray, partials: np.ndarray) -> np.ndarray:
    """Seed-wise ``a @ partials[s]``; a vector right operand carries its seed
    axis first, so the product has to be taken against its transpose."""
    if partials.ndim == 2:
        return partials @ a.T
    return a @ partials


def solve(a, b):
    """Solve ``a x = b`` for plain arrays or Dual arrays."""
    if not isinstance(a, Dual) and not isinstance(b, Dual):
        return np.linalg.solve(a, b)
    av = value_of(a)
    x = np.linalg.solve(av, value_of(b))
    nseeds = a.nseeds if isinstance(a, Dual) else b.nseeds
    rhs = b.partials if isinstance(b, Dual) else np.zeros((nseeds,) + np.shape(x))
    if isinstance(a, Dual):
        rhs = rhs - a.partials @ x
    vec = x.ndim == 1
    if vec:
        dx = np.linalg.solve(av, rhs.T).T
    else:
        dx = np.linalg.solve(av[None, :, :], rhs)
    return Dual(x, dx)


def eye_like(x, n: int):
    if isinstance(x, Dual):
        return Dual.constant(np.eye(n), x.nseeds)
    return np.eye(n)
