"""Partial Bell polynomials by recurrence, Gauss-Manin vectors, factorial moments.

The workhorse is the triangular table

    Z_{N,j} = (1/N) sum_{i>=1} i x_i Z_{N-i,j-1},     Z_{N,0} = delta_{N,0},

which is the Bell-polynomial recurrence ``B_{n+1,k} = sum_i C(n,i) w_{i+1}
B_{n-i,k-1}`` rewritten for ``Z = B/n!``.  Every entry with ``N - j <= n - k``
is kept, so one table answers all the sub-index lookups that moments, the
Fisher metric and the exact sampler need.  All summands are non-negative, so
the table is kept in log space without cancellation.  Cost O((n-k)^2 k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DomainError
from .partitions import ProblemSpec, _as_spec
from .scaled import ScaledValue, logsumexp

__all__ = [
    "ZTable",
    "GaussManinVector",
    "resolve_log_x",
    "recurrence_Z",
    "recurrence_Z_exact",
    "gauss_manin",
    "factorial_moment",
]


def _log_nonneg(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(~np.isfinite(x)):
        raise DomainError("indeterminates must be finite and non-negative")
    with np.errstate(divide="ignore"):
        return np.log(x)


def resolve_log_x(spec, x=None, log_x=None):
    """Validated ``log x`` of length ``n - k + 1`` (``-inf`` marks a zero entry)."""
    spec = _as_spec(spec)
    if (x is None) == (log_x is None):
        raise TypeError("pass exactly one of x or log_x")
    lx = _log_nonneg(x) if log_x is None else np.asarray(log_x, dtype=float)
    if lx.ndim != 1 or len(lx) < spec.width:
        raise DomainError(f"indeterminates must have length {spec.width}")
    return lx[: spec.width].copy()


class ZTable:
    """``log Z_{N,j}(x)`` for ``0 <= j <= k`` and ``0 <= N - j <= n - k``.

    Part sizes are limited to ``[r_min, r_max]`` of the given spec; a lower
    bound is handled by the shift ``Z_{n,k,(r)}(x) = Z_{n-(r-1)k,k}(x_{.+r-1})``.
    """

    def __init__(self, spec, x=None, *, log_x=None):
        spec = _as_spec(spec)
        lx = resolve_log_x(spec, x, log_x)
        self.spec = spec
        shift = spec.r_min - 1
        self.shift = shift
        # shifted problem: parts 1..hi-shift, size n - shift*k
        self.n = spec.n - shift * spec.k
        self.k = spec.k
        self.dim = self.n - self.k
        hi = spec.hi - shift
        lxs = np.full(self.dim + 1, -np.inf)
        avail = lx[shift : shift + self.dim + 1]
        lxs[: len(avail)] = avail
        lxs[hi:] = -np.inf
        self.log_x = lxs
        self.table = _build_table(self.k, self.dim, lxs)

    def log_z(self, n, k):
        """``log Z_{n,k}`` of the (shifted) problem; ``-inf`` outside the monoid."""
        d = n - k
        if k < 0 or d < 0:
            return -np.inf
        if k > self.k or d > self.dim:
            raise DomainError(f"Z_{{{n},{k}}} is outside this table")
        return float(self.table[k, d])

    def value(self, n=None, k=None):
        n = self.n if n is None else n
        k = self.k if k is None else k
        return ScaledValue.from_log(self.log_z(n, k))


def _build_table(k, dim, lx):
    width = dim + 1
    table = np.full((k + 1, width), -np.inf)
    table[0, 0] = 0.0
    j = np.arange(1, width + 1)
    d = np.arange(width)
    idx = d[:, None] - j[None, :] + 1
    mask = idx >= 0
    idx = np.where(mask, idx, 0)
    with np.errstate(divide="ignore"):
        base = np.log(j) + lx[:width]
    for kk in range(1, k + 1):
        terms = np.where(mask, base[None, :] + table[kk - 1][idx], -np.inf)
        table[kk] = logsumexp(terms, axis=1) - np.log(d + kk)
    return table


def recurrence_Z(spec, x=None, *, log_x=None):
    """``Z_{n,k}(x)`` (possibly part-size restricted) as a ScaledValue.

    A zero result (sign 0) flags ``b`` outside the monoid spanned by the
    active columns, following the convention ``Z := 0``.
    """
    return ZTable(spec, x, log_x=log_x).value()


def recurrence_Z_exact(spec, x):
    """Same recurrence in exact rational arithmetic (for small problems)."""
    spec = _as_spec(spec)
    x = [Fraction(v) for v in x]
    if len(x) < spec.width:
        raise DomainError(f"indeterminates must have length {spec.width}")
    shift = spec.r_min - 1
    n, k = spec.n - shift * spec.k, spec.k
    dim, hi = n - k, spec.hi - shift
    xs = [x[shift + i] if shift + i < len(x) and i < hi else Fraction(0) for i in range(dim + 1)]
    prev = [Fraction(1)] + [Fraction(0)] * dim
    for kk in range(1, k + 1):
        row = []
        for d in range(dim + 1):
            acc = Fraction(0)
            for i in range(1, d + 2):
                if xs[i - 1]:
                    acc += i * xs[i - 1] * prev[d - i + 1]
            row.append(acc / (d + kk))
        prev = row
    return prev[dim]


@dataclass
class GaussManinVector:
    """``Q = exp(log_scale) * direction``.

    For the polynomial solution ``Q = (Z_{n,k}, x_3 Z_{n-3,k-1}, ...,
    x_{n-k+1} Z_{k-1,k-1})``.  ``direction`` is kept at unit max-norm.
    """

    direction: np.ndarray
    log_scale: float

    @classmethod
    def from_logs(cls, logs, signs=None):
        logs = np.asarray(logs, dtype=float)
        signs = np.ones_like(logs) if signs is None else np.asarray(signs, dtype=float)
        finite = np.isfinite(logs)
        if not finite.any():
            return cls(np.zeros(len(logs)), 0.0)
        top = logs[finite].max()
        direction = np.where(finite, signs * np.exp(np.where(finite, logs - top, 0.0)), 0.0)
        return cls(direction, float(top))

    @classmethod
    def from_array(cls, values, log_scale=0.0, dtype=np.longdouble):
        values = np.asarray(values, dtype=dtype)
        return cls(values, float(log_scale)).normalized()

    def normalized(self):
        top = np.max(np.abs(self.direction))
        if top == 0 or not np.isfinite(top):
            return GaussManinVector(self.direction.copy(), self.log_scale)
        return GaussManinVector(self.direction / top, self.log_scale + float(np.log(top)))

    def __len__(self):
        return len(self.direction)

    def component(self, i):
        """Component ``i`` (0-based) as a ScaledValue."""
        v = self.direction[i]
        if v == 0:
            return ScaledValue.zero()
        return ScaledValue(1 if v > 0 else -1, float(np.log(abs(v))) + self.log_scale)

    def components(self):
        return [self.component(i) for i in range(len(self))]

    @property
    def z(self):
        return self.component(0)

    @property
    def log_z(self):
        return self.z.log

    def ratios(self):
        """``Q_i / Q_1``; for the polynomial solution these are the moments eta_{i+1}."""
        return np.asarray(self.direction[1:] / self.direction[0], dtype=float)

    def to_json(self):
        return [c.to_json() for c in self.components()]


def gauss_manin(spec, x=None, *, log_x=None, table=None):
    """Gauss-Manin vector of ``Z_{n,k}`` read off the recurrence table."""
    spec = _as_spec(spec)
    if spec.r_min > 1:
        raise DomainError("Gauss-Manin vectors are defined for r_min = 1")
    if spec.dim < 2:
        raise DomainError("Gauss-Manin vector needs n >= k + 2")
    if table is None:
        table = ZTable(spec, x, log_x=log_x)
    n, k, lx = spec.n, spec.k, table.log_x
    logs = [table.log_z(n, k)]
    for i in range(3, spec.width + 1):
        logs.append(lx[i - 1] + table.log_z(n - i, k - 1))
    return GaussManinVector.from_logs(logs)


def factorial_moment(spec, x=None, r=None, *, log_x=None, table=None):
    """``E[prod_i [S_i]_{r_i}] = x^r Z_{n - sum i r_i, k - sum r_i} / Z_{n,k}``."""
    spec = _as_spec(spec)
    if r is None:
        raise TypeError("orders r are required")
    r = [int(v) for v in r]
    if any(v < 0 for v in r):
        raise DomainError("orders must be non-negative")
    if table is None:
        table = ZTable(spec, x, log_x=log_x)
    lx = table.log_x
    used = sum((i + 1) * v for i, v in enumerate(r))
    parts = sum(r)
    if parts > spec.k or used - parts > spec.dim:
        return ScaledValue.zero()
    if any(v and (i >= len(lx) or lx[i] == -np.inf) for i, v in enumerate(r)):
        return ScaledValue.zero()
    log_xr = sum(v * lx[i] for i, v in enumerate(r) if v)
    num = table.log_z(table.n - used, table.k - parts)
    return ScaledValue.from_log(log_xr + num - table.log_z(table.n, table.k))
