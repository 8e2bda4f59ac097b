"""Arbitrary-precision decimals with a naive aligning addition.

A value is ``sign * coefficient * 10**exp`` with the coefficient held as a
digit array. Adding two values with different exponents first rescales the
operand with the larger exponent by ``10**gap`` so both share the smaller
exponent, which materializes ``gap`` extra digits. With exponents near the
clamp a single addition touches tens of millions of digits.
"""
from __future__ import annotations

from ..measure import probe
from ..values import I32, I64, STRING, Ref
from .base import REGISTRY

EXP_CAP = 10**7
CHUNK = 4096


def _clamp_exp(e: int) -> int:
    return max(-EXP_CAP, min(EXP_CAP, int(e)))


class Decimal:
    __slots__ = ("sign", "digits", "exp")

    @probe
    def __init__(self, sign: int, digits: bytearray, exp: int):
        self.sign = sign
        self.digits = digits  # most significant first, values 0..9
        self.exp = exp

    @classmethod
    def parse(cls, coeff: str, exp: int) -> "Decimal":
        sign = 1
        body = coeff
        if body.startswith("-"):
            sign, body = -1, body[1:]
        if not body or not body.isascii() or not body.isdigit():
            raise ValueError(f"coefficient is not a digit string: {coeff[:40]!r}")
        return cls(sign, _strip(bytearray(ord(c) - 48 for c in body)), _clamp_exp(exp))

    @classmethod
    def from_long(cls, unscaled: int, exp: int) -> "Decimal":
        sign = -1 if unscaled < 0 else 1
        return cls(sign, bytearray(int(c) for c in str(abs(unscaled))), _clamp_exp(exp))

    def is_zero(self) -> bool:
        return not any(self.digits)

    def coefficient(self) -> int:
        return self.sign * int("".join(map(str, self.digits)) or "0")

    def to_fraction(self):
        from fractions import Fraction
        return Fraction(self.coefficient()) * Fraction(10) ** self.exp

    def __repr__(self):
        head = "".join(map(str, self.digits[:12]))
        more = f"...({len(self.digits)} digits)" if len(self.digits) > 12 else ""
        return f"Decimal({'-' if self.sign < 0 else ''}{head}{more}e{self.exp})"


def _strip(d: bytearray) -> bytearray:
    i = 0
    while i < len(d) - 1 and d[i] == 0:
        i += 1
    return d[i:] if i else d


@probe
def _shift_chunk(out: bytearray, k: int) -> None:
    for _ in range(k):
        out.append(0)


@probe
def _multiply_power_ten(digits: bytearray, n: int) -> bytearray:
    """``digits * 10**n``, appending zeros one chunk at a time."""
    out = bytearray(digits)
    while n > 0:
        k = min(n, CHUNK)
        _shift_chunk(out, k)
        n -= k
    return out


def _add_mag(a: bytearray, b: bytearray) -> bytearray:
    if len(a) < len(b):
        a, b = b, a
    out = bytearray(len(a) + 1)
    carry = 0
    off = len(a) - len(b)
    for i in range(len(a) - 1, -1, -1):
        s = a[i] + (b[i - off] if i >= off else 0) + carry
        carry = 1 if s >= 10 else 0
        out[i + 1] = s - 10 if carry else s
    out[0] = carry
    return _strip(out)


def _cmp_mag(a: bytearray, b: bytearray) -> int:
    if len(a) != len(b):
        return -1 if len(a) < len(b) else 1
    return (a > b) - (a < b)


def _sub_mag(a: bytearray, b: bytearray) -> bytearray:
    """|a| - |b| for |a| >= |b|."""
    out = bytearray(len(a))
    borrow = 0
    off = len(a) - len(b)
    for i in range(len(a) - 1, -1, -1):
        s = a[i] - (b[i - off] if i >= off else 0) - borrow
        borrow = 1 if s < 0 else 0
        out[i] = s + 10 if borrow else s
    return _strip(out)


REGISTRY.composite("Decimal", [
    ([STRING, I32], Decimal.parse),
    ([I64, I32], Decimal.from_long),
])


@REGISTRY.target("ac/decimal_add", [Ref("Decimal"), Ref("Decimal")],
                 notes="exact sum; aligns exponents by rescaling the larger one")
def decimal_add(a: Decimal, b: Decimal) -> Decimal:
    if a.exp < b.exp:
        a, b = b, a
    gap = a.exp - b.exp
    da = _multiply_power_ten(a.digits, gap) if gap else a.digits
    db = b.digits
    if a.sign == b.sign:
        return Decimal(a.sign, _add_mag(da, db), b.exp)
    c = _cmp_mag(_strip(bytearray(da)), db)
    if c == 0:
        return Decimal(1, bytearray(1), b.exp)
    if c > 0:
        return Decimal(a.sign, _sub_mag(_strip(bytearray(da)), db), b.exp)
    return Decimal(b.sign, _sub_mag(db, _strip(bytearray(da))), b.exp)
