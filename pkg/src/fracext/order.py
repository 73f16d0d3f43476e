"""The fractional order and the integers and exponents derived from it."""

from __future__ import annotations

import math
from dataclasses import dataclass

_INTEGER_TOL = 1e-12


@dataclass(frozen=True)
class FractionalOrder:
    """A non-integer order ``gamma > 0`` in dimension ``n``.

    Attributes
    ----------
    gamma : float
    n : int
        Number of tangential dimensions.
    m : int
        Integer part of ``gamma``.
    s : float
        Fractional part ``gamma - m`` in ``(0, 1)``.
    b : float
        Weight exponent ``1 - 2 gamma + 2 m = 1 - 2 s`` in ``(-1, 1)``.
    """

    gamma: float
    n: int = 1

    def __post_init__(self) -> None:
        g = float(self.gamma)
        if not math.isfinite(g) or g <= 0:
            raise ValueError(f"order must be positive, got {self.gamma!r}")
        if abs(g - round(g)) < _INTEGER_TOL:
            raise ValueError(f"order must be non-integer, got {self.gamma!r}")
        if self.n < 1:
            raise ValueError("dimension n must be >= 1")
        object.__setattr__(self, "gamma", g)

    @property
    def m(self) -> int:
        return int(math.floor(self.gamma))

    @property
    def s(self) -> float:
        return self.gamma - self.m

    @property
    def b(self) -> float:
        return 1.0 - 2.0 * self.gamma + 2.0 * self.m


def as_order(order, n: int = 1) -> FractionalOrder:
    if isinstance(order, FractionalOrder):
        return order
    return FractionalOrder(float(order), n)
