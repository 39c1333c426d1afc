"""Signed log-magnitude numbers.

Values of the partial Bell polynomials met in practice span thousands of
orders of magnitude (``exp(-4447)`` at n = 800), so every production path
carries them as a sign plus the natural log of the absolute value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = ["ScaledValue", "log_fraction", "logsumexp"]

NEG_INF = float("-inf")


def log_fraction(q):
    """Natural log of a positive rational, exact up to the final rounding."""
    q = Fraction(q)
    if q <= 0:
        raise ValueError("log of a non-positive rational")
    return math.log(q.numerator) - math.log(q.denominator)


def logsumexp(a, axis=None):
    """``log(sum(exp(a)))`` that tolerates rows made only of ``-inf``."""
    a = np.asarray(a)
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - amax), axis=axis, keepdims=True)) + amax
    if axis is None:
        return out.reshape(())[()]
    return np.squeeze(out, axis=axis)


@dataclass(frozen=True)
class ScaledValue:
    """A real number stored as ``sign * exp(log)``.

    ``sign`` is -1, 0 or +1; a zero value has ``log == -inf``.
    """

    sign: int
    log: float

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise ValueError(f"sign must be -1, 0 or 1, got {self.sign!r}")
        if self.sign == 0 and self.log != NEG_INF:
            object.__setattr__(self, "log", NEG_INF)
        if self.sign != 0 and self.log == NEG_INF:
            object.__setattr__(self, "sign", 0)

    # construction -----------------------------------------------------
    @classmethod
    def zero(cls):
        return cls(0, NEG_INF)

    @classmethod
    def one(cls):
        return cls(1, 0.0)

    @classmethod
    def from_log(cls, log, sign=1):
        log = float(log)
        if log == NEG_INF:
            return cls.zero()
        return cls(int(sign), log)

    @classmethod
    def from_float(cls, value):
        value = float(value)
        if value == 0.0:
            return cls.zero()
        return cls(1 if value > 0 else -1, math.log(abs(value)))

    @classmethod
    def from_fraction(cls, value):
        value = Fraction(value)
        if value == 0:
            return cls.zero()
        return cls(1 if value > 0 else -1, log_fraction(abs(value)))

    # conversion -------------------------------------------------------
    def __float__(self):
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log)

    def to_json(self):
        return {"sign": self.sign, "log": self.log if self.sign else None}

    @classmethod
    def from_json(cls, obj):
        if obj["sign"] == 0:
            return cls.zero()
        return cls(int(obj["sign"]), float(obj["log"]))

    # arithmetic -------------------------------------------------------
    def __neg__(self):
        return ScaledValue(-self.sign, self.log)

    def __abs__(self):
        return ScaledValue(abs(self.sign), self.log)

    def __mul__(self, other):
        other = _coerce(other)
        if self.sign == 0 or other.sign == 0:
            return ScaledValue.zero()
        return ScaledValue(self.sign * other.sign, self.log + other.log)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _coerce(other)
        if other.sign == 0:
            raise ZeroDivisionError("division by a zero ScaledValue")
        if self.sign == 0:
            return ScaledValue.zero()
        return ScaledValue(self.sign * other.sign, self.log - other.log)

    def __rtruediv__(self, other):
        return _coerce(other) / self

    def __add__(self, other):
        other = _coerce(other)
        if self.sign == 0:
            return other
        if other.sign == 0:
            return self
        hi, lo = (self, other) if self.log >= other.log else (other, self)
        gap = lo.log - hi.log
        if hi.sign == lo.sign:
            return ScaledValue(hi.sign, hi.log + math.log1p(math.exp(gap)))
        if gap == 0.0:
            return ScaledValue.zero()
        return ScaledValue(hi.sign, hi.log + math.log1p(-math.exp(gap)))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-_coerce(other))

    def __rsub__(self, other):
        return _coerce(other) - self

    def __pow__(self, p):
        if self.sign == 0:
            return ScaledValue.zero() if p > 0 else ScaledValue.one()
        if self.sign < 0 and p != int(p):
            raise ValueError("fractional power of a negative value")
        sign = self.sign if int(p) % 2 else 1
        return ScaledValue(sign, self.log * p)

    def isclose(self, other, rel=1e-12):
        """Relative comparison done on the log scale."""
        other = _coerce(other)
        if self.sign != other.sign:
            return False
        if self.sign == 0:
            return True
        return abs(self.log - other.log) <= rel

    def __repr__(self):
        return f"ScaledValue(sign={self.sign}, log={self.log!r})"


def _coerce(value):
    if isinstance(value, ScaledValue):
        return value
    if isinstance(value, Fraction) or isinstance(value, int):
        return ScaledValue.from_fraction(value)
    return ScaledValue.from_float(value)
