"""Exact phases: rational multiples of pi, reduced into [0, 2pi)."""

from __future__ import annotations

from fractions import Fraction


class Phase:
    """An angle (num/den)*pi with 0 <= num/den < 2, stored in lowest terms.

    Phases form the group R/2piZ; addition and negation wrap around.
    """

    __slots__ = ("_frac",)

    def __init__(self, num: int | Fraction = 0, den: int = 1) -> None:
        if isinstance(num, Fraction):
            frac = num
            if den != 1:
                raise ValueError("denominator must be omitted with a Fraction")
        else:
            frac = Fraction(num, den)
        self._frac = frac % 2

    @property
    def num(self) -> int:
        return self._frac.numerator

    @property
    def den(self) -> int:
        return self._frac.denominator

    @property
    def frac(self) -> Fraction:
        """The multiple of pi, in [0, 2)."""
        return self._frac

    def is_zero(self) -> bool:
        return self._frac == 0

    def is_dyadic(self) -> bool:
        """True if the denominator is a power of two (exact-arithmetic fragment)."""
        den = self._frac.denominator
        return den & (den - 1) == 0

    def is_multiple_of(self, other: Phase) -> bool:
        if other._frac == 0:
            return self._frac == 0
        return (self._frac / other._frac).denominator == 1

    def __add__(self, other: Phase) -> Phase:
        return Phase(self._frac + other._frac)

    def __sub__(self, other: Phase) -> Phase:
        return Phase(self._frac - other._frac)

    def __neg__(self) -> Phase:
        return Phase(-self._frac)

    def __mul__(self, scalar: int) -> Phase:
        return Phase(self._frac * scalar)

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Phase) and self._frac == other._frac

    def __lt__(self, other: Phase) -> bool:
        return self._frac < other._frac

    def __le__(self, other: Phase) -> bool:
        return self._frac <= other._frac

    def __hash__(self) -> int:
        return hash(("Phase", self._frac))

    def __repr__(self) -> str:
        return f"Phase({self.num}, {self.den})"

    def __str__(self) -> str:
        if self._frac == 0:
            return "0"
        if self._frac == 1:
            return "pi"
        if self._frac.numerator == 1:
            return f"pi/{self._frac.denominator}"
        return f"{self._frac.numerator}pi/{self._frac.denominator}"

    def to_float(self) -> float:
        """The angle in radians."""
        import math

        return float(self._frac) * math.pi

    @classmethod
    def parse(cls, text: str) -> Phase:
        """Parse 'p/q' (or 'p') meaning (p/q)*pi."""
        text = text.strip()
        if "/" in text:
            p, q = text.split("/", 1)
            return cls(int(p), int(q))
        return cls(int(text))


PI = Phase(1)
ZERO = Phase(0)
