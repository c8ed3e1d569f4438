"""Exact complex scalars for dyadic-phase diagrams.

A CycloNumber lives in the ring Z[zeta]/(zeta^(2^(k-1)) + 1) with rational
coefficients, where zeta = e^(i*pi/2^(k-1)) is a primitive 2^k-th root of
unity.  With k >= 3 the ring contains sqrt(2) = zeta_8 + zeta_8^(-1), so any
(1/sqrt2)^s prefactor can be folded into the coefficients; equality of
normalized values is therefore plain componentwise equality.
"""

from __future__ import annotations

import cmath
import math
from fractions import Fraction

from .phase import Phase

MIN_ORDER_EXP = 3  # smallest ring always contains sqrt(2)


class NonDyadicPhaseError(ValueError):
    """Raised when exact arithmetic is asked for a non-dyadic phase."""


class CycloNumber:
    """Exact element of the 2^k-th cyclotomic ring with rational coefficients.

    The canonical form has the (1/sqrt2)^s prefactor folded in (s = 0) and
    the order exponent k reduced to the smallest value (>= 3) that supports
    the coefficients.
    """

    __slots__ = ("k", "coeffs")

    def __init__(self, k: int, coeffs: list[Fraction] | tuple[Fraction, ...],
                 sqrt2_exp: int = 0) -> None:
        if k < MIN_ORDER_EXP:
            raise ValueError(f"order exponent must be >= {MIN_ORDER_EXP}")
        m = 1 << (k - 1)
        if len(coeffs) != m:
            raise ValueError(f"expected {m} coefficients, got {len(coeffs)}")
        cs = [Fraction(c) for c in coeffs]
        if sqrt2_exp:
            cs = _mul_sqrt2_pow(k, cs, -sqrt2_exp)
        k, cs = _reduce_order(k, cs)
        self.k = k
        self.coeffs = tuple(cs)

    # -- constructors ------------------------------------------------------

    @classmethod
    def zero(cls) -> CycloNumber:
        return cls.from_fraction(0)

    @classmethod
    def one(cls) -> CycloNumber:
        return cls.from_fraction(1)

    @classmethod
    def from_fraction(cls, x: Fraction | int) -> CycloNumber:
        m = 1 << (MIN_ORDER_EXP - 1)
        coeffs = [Fraction(0)] * m
        coeffs[0] = Fraction(x)
        return cls(MIN_ORDER_EXP, coeffs)

    @classmethod
    def from_phase(cls, p: Phase) -> CycloNumber:
        """The exact value e^(i*p) for a dyadic phase p."""
        if not p.is_dyadic():
            raise NonDyadicPhaseError(
                f"phase {p} is not a dyadic multiple of pi; use float mode")
        den = p.den
        k = max(MIN_ORDER_EXP, den.bit_length() - 1 + 2)
        # ensure 2^(k-1) >= den, i.e. zeta^j hits e^(i*pi*num/den) exactly
        while (1 << (k - 1)) < den:
            k += 1
        m = 1 << (k - 1)
        j = p.num * (m // den)
        coeffs = [Fraction(0)] * m
        if j < m:
            coeffs[j] = Fraction(1)
        else:
            coeffs[j - m] = Fraction(-1)
        return cls(k, coeffs)

    @classmethod
    def sqrt2_power(cls, n: int) -> CycloNumber:
        """The exact value sqrt(2)^n (n may be negative)."""
        m = 1 << (MIN_ORDER_EXP - 1)
        coeffs = [Fraction(0)] * m
        coeffs[0] = Fraction(1)
        return cls(MIN_ORDER_EXP, _mul_sqrt2_pow(MIN_ORDER_EXP, coeffs, n))

    # -- ring operations ---------------------------------------------------

    def _embedded(self, k: int) -> list[Fraction]:
        if k < self.k:
            raise ValueError("cannot embed into a smaller ring")
        f = 1 << (k - self.k)
        m = 1 << (k - 1)
        out = [Fraction(0)] * m
        for j, c in enumerate(self.coeffs):
            out[j * f] = c
        return out

    def __add__(self, other: CycloNumber) -> CycloNumber:
        other = _coerce(other)
        k = max(self.k, other.k)
        a = self._embedded(k)
        b = other._embedded(k)
        return CycloNumber(k, [x + y for x, y in zip(a, b)])

    def __sub__(self, other: CycloNumber) -> CycloNumber:
        return self + (-_coerce(other))

    def __neg__(self) -> CycloNumber:
        return CycloNumber(self.k, [-c for c in self.coeffs])

    def __mul__(self, other: CycloNumber | int | Fraction) -> CycloNumber:
        if isinstance(other, (int, Fraction)):
            return CycloNumber(self.k, [c * other for c in self.coeffs])
        k = max(self.k, other.k)
        a = self._embedded(k)
        b = other._embedded(k)
        m = 1 << (k - 1)
        out = [Fraction(0)] * m
        for i, ca in enumerate(a):
            if not ca:
                continue
            for j, cb in enumerate(b):
                if not cb:
                    continue
                idx = i + j
                if idx < m:
                    out[idx] += ca * cb
                else:
                    out[idx - m] -= ca * cb
        return CycloNumber(k, out)

    __rmul__ = __mul__

    def conj(self) -> CycloNumber:
        m = 1 << (self.k - 1)
        out = [Fraction(0)] * m
        out[0] = self.coeffs[0]
        for j in range(1, m):
            out[m - j] = -self.coeffs[j]
        return CycloNumber(self.k, out)

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.coeffs)

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, Fraction)):
            other = CycloNumber.from_fraction(other)
        if not isinstance(other, CycloNumber):
            return NotImplemented
        return self.k == other.k and self.coeffs == other.coeffs

    def __hash__(self) -> int:
        return hash((self.k, self.coeffs))

    # -- conversions -------------------------------------------------------

    def to_complex(self) -> complex:
        """Double-precision embedding of the exact value."""
        m = 1 << (self.k - 1)
        total = 0j
        for j, c in enumerate(self.coeffs):
            if c:
                total += float(c) * cmath.exp(1j * math.pi * j / m)
        return total

    def __repr__(self) -> str:
        return f"CycloNumber(k={self.k}, {self.coeffs})"

    def __str__(self) -> str:
        return _pretty(self)


def _coerce(x: CycloNumber | int | Fraction) -> CycloNumber:
    if isinstance(x, CycloNumber):
        return x
    return CycloNumber.from_fraction(x)


def _mul_sqrt2_pow(k: int, coeffs: list[Fraction], n: int) -> list[Fraction]:
    """Multiply a coefficient vector by sqrt(2)^n inside the 2^k ring."""
    if n == 0:
        return list(coeffs)
    m = 1 << (k - 1)
    e = m // 4  # zeta^e = zeta_8
    out = list(coeffs)
    steps = abs(n)
    for _ in range(steps):
        # sqrt2 = zeta_8 - zeta_8^3;  1/sqrt2 = (zeta_8 - zeta_8^3)/2
        nxt = [Fraction(0)] * m
        for j, c in enumerate(out):
            if not c:
                continue
            for off, sign in ((e, 1), (3 * e, -1)):
                idx = j + off
                s = sign
                while idx >= m:
                    idx -= m
                    s = -s
                nxt[idx] += s * c
        if n < 0:
            nxt = [c / 2 for c in nxt]
        out = nxt
    return out


def _reduce_order(k: int, coeffs: list[Fraction]) -> tuple[int, list[Fraction]]:
    while k > MIN_ORDER_EXP:
        if any(coeffs[j] for j in range(1, len(coeffs), 2)):
            break
        coeffs = coeffs[0::2]
        k -= 1
    return k, coeffs


def _pretty(x: CycloNumber) -> str:
    """Render as '(c0 + c1*z + ...)*(1/sqrt2)^s' with integer c_j when possible."""
    m = 1 << (x.k - 1)
    coeffs = list(x.coeffs)
    s = 0
    while s <= 2 * x.k and any(c.denominator != 1 for c in coeffs):
        coeffs = _mul_sqrt2_pow(x.k, coeffs, 1)
        s += 1
    if any(c.denominator != 1 for c in coeffs):
        coeffs, s = list(x.coeffs), 0
    sym = f"z{1 << x.k}"
    terms = []
    for j, c in enumerate(coeffs):
        if not c:
            continue
        if j == 0:
            terms.append(str(c))
        else:
            mag = "" if abs(c) == 1 else f"{abs(c)}*"
            t = f"{mag}{sym}" if j == 1 else f"{mag}{sym}^{j}"
            terms.append(t if c > 0 else "-" + t)
    if not terms:
        return "0"
    body = terms[0]
    for t in terms[1:]:
        body += " - " + t[1:] if t.startswith("-") else " + " + t
    if s:
        return f"({body})*(1/sqrt2)^{s}"
    return f"({body})" if len(terms) > 1 else body
