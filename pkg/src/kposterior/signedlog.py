"""Signed log-scale scalars.

A value is stored as ``sign * exp(log_magnitude)``. Products of large
Gamma-function ratios stay finite and alternating sums are accumulated
with positive and negative parts kept apart until the final subtraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

_EPS = 2.0**-52


@dataclass(frozen=True)
class SignedLogValue:
    """``sign * exp(log_magnitude)``; ``sign == 0`` is exact zero."""

    sign: int
    log_magnitude: float = -math.inf

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or +1, got {self.sign!r}")
        if math.isnan(self.log_magnitude):
            raise ValueError("log_magnitude is NaN")
        if self.sign != 0 and self.log_magnitude == -math.inf:
            object.__setattr__(self, "sign", 0)
        if self.sign == 0:
            object.__setattr__(self, "log_magnitude", -math.inf)

    @classmethod
    def from_float(cls, x: float) -> SignedLogValue:
        if x == 0:
            return ZERO
        if math.isnan(x):
            raise ValueError("cannot represent NaN")
        return cls(1 if x > 0 else -1, math.log(abs(x)))

    @classmethod
    def from_log(cls, log_magnitude: float, sign: int = 1) -> SignedLogValue:
        return cls(sign, log_magnitude)

    @property
    def is_zero(self) -> bool:
        return self.sign == 0

    def __float__(self) -> float:
        if self.sign == 0:
            return 0.0
        try:
            return self.sign * math.exp(self.log_magnitude)
        except OverflowError:
            return self.sign * math.inf

    def __neg__(self) -> SignedLogValue:
        return SignedLogValue(-self.sign, self.log_magnitude)

    def __mul__(self, other: SignedLogValue) -> SignedLogValue:
        return sl_mul(self, other)

    def __add__(self, other: SignedLogValue) -> SignedLogValue:
        return sl_add(self, other)

    def __sub__(self, other: SignedLogValue) -> SignedLogValue:
        return sl_add(self, -other)

    def __repr__(self) -> str:
        if self.sign == 0:
            return "SignedLogValue(0)"
        s = "+" if self.sign > 0 else "-"
        return f"SignedLogValue({s}, {self.log_magnitude!r})"


ZERO = SignedLogValue(0)
ONE = SignedLogValue(1, 0.0)


class SignedSum(NamedTuple):
    value: SignedLogValue
    # (sum of |terms|) / |result|; inf when the result is zero
    condition: float


def sl_mul(a: SignedLogValue, b: SignedLogValue) -> SignedLogValue:
    if a.sign == 0 or b.sign == 0:
        return ZERO
    return SignedLogValue(a.sign * b.sign, a.log_magnitude + b.log_magnitude)


def sl_add(a: SignedLogValue, b: SignedLogValue) -> SignedLogValue:
    if a.sign == 0:
        return b
    if b.sign == 0:
        return a
    hi, lo = (a, b) if a.log_magnitude >= b.log_magnitude else (b, a)
    d = lo.log_magnitude - hi.log_magnitude
    if hi.sign == lo.sign:
        return SignedLogValue(hi.sign, hi.log_magnitude + math.log1p(math.exp(d)))
    if d == 0.0 or math.expm1(d) == 0.0:
        return ZERO
    return SignedLogValue(hi.sign, hi.log_magnitude + math.log(-math.expm1(d)))


def sl_sum(terms: Iterable[SignedLogValue]) -> SignedSum:
    """Sum signed-log terms with separate positive/negative accumulation.

    Each part is pivoted on its own largest magnitude and summed with
    ``math.fsum``; the two parts are subtracted last. A difference that
    falls below the rounding floor of the accumulation is returned as exact
    zero (condition ``inf``).

    Returns
    -------
    SignedSum
        ``(value, condition)`` where ``condition`` is
        ``sum(|t|) / |value|``.
    """
    pos = []
    neg = []
    for t in terms:
        if t.sign > 0:
            pos.append(t.log_magnitude)
        elif t.sign < 0:
            neg.append(t.log_magnitude)
    m = len(pos) + len(neg)
    if m == 0:
        return SignedSum(ZERO, math.inf)

    pivot = max(pos + neg)
    if pivot == math.inf:
        raise OverflowError("infinite term in signed sum")
    scaled_pos = [math.exp(x - pivot) for x in pos]
    scaled_neg = [math.exp(x - pivot) for x in neg]
    p = math.fsum(scaled_pos)
    q = math.fsum(scaled_neg)
    total = p + q
    diff = p - q
    # a log magnitude x carries ~eps*|x| absolute error, i.e. that much
    # relative error in exp(x); differences below this floor are noise
    floor = 4.0 * _EPS * math.fsum(
        t * (1.0 + abs(x) + (pivot - x))
        for t, x in zip(scaled_pos + scaled_neg, pos + neg)
    )
    if abs(diff) <= floor:
        return SignedSum(ZERO, math.inf)
    value = SignedLogValue(1 if diff > 0 else -1, pivot + math.log(abs(diff)))
    return SignedSum(value, total / abs(diff))
