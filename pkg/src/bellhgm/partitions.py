"""Integer-partition supports, the exact rational oracle and Newton-polytope geometry.

Size indices are tuples ``s`` of length ``n - k + 1`` where ``s[i-1]`` counts
blocks of size ``i``.  The A-hypergeometric polynomial of the rational normal
curve is

    Z_{n,k}(x) = sum_{s in S_{n,k}} x^s / s!,

which equals the partial Bell polynomial ``B_{n,k}(w) / n!`` with
``x_i = w_i / i!``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.optimize import linprog

from .errors import CapacityError, DomainError
from .scaled import ScaledValue

__all__ = [
    "ENUMERATION_CAP",
    "ProblemSpec",
    "count_support",
    "enumerate_support",
    "oracle_Z",
    "special_value",
    "special_point_x",
    "gfc_log_x",
    "gfc_x",
    "log_stirling_first",
    "log_stirling_second",
    "odds_from_x",
    "canonical_x",
    "torus_action",
    "polytope_membership",
    "polytope_vertices",
    "affine_dimension",
]

ENUMERATION_CAP = 10**7


@dataclass(frozen=True)
class ProblemSpec:
    """Sizes ``(n, k)`` and optional part-size bounds ``r_min <= i <= r_max``."""

    n: int
    k: int
    r_min: int = 1
    r_max: Optional[int] = None

    def __post_init__(self):
        n, k = self.n, self.k
        if int(n) != n or int(k) != k:
            raise DomainError("n and k must be integers")
        if n < 1 or k < 1:
            raise DomainError(f"need n >= 1 and k >= 1, got n={n}, k={k}")
        if k > n:
            raise DomainError(f"need k <= n, got n={n}, k={k}")
        if self.r_min < 1:
            raise DomainError("r_min must be >= 1")
        if self.r_max is not None:
            if self.r_max < self.r_min:
                raise DomainError("r_max must be >= r_min")
            if self.r_max < self.width and n > self.r_max * k:
                raise DomainError(f"empty support: n={n} > r_max*k={self.r_max * k}")
        if self.r_min > 1 and n < self.r_min * k:
            raise DomainError(f"empty support: n={n} < r_min*k={self.r_min * k}")

    @property
    def dim(self):
        """``n - k``: number of Gauss-Manin components, holonomic rank."""
        return self.n - self.k

    @property
    def width(self):
        """Length ``n - k + 1`` of size-index and indeterminate vectors."""
        return self.n - self.k + 1

    @property
    def hi(self):
        """Largest admissible part size."""
        top = self.n - (self.k - 1) * self.r_min
        return top if self.r_max is None else min(self.r_max, top)

    @property
    def restricted(self):
        return self.r_min > 1 or self.hi < self.width

    def b(self):
        """Right-hand side ``(n - k, k)`` of ``A s = b``."""
        return np.array([self.n - self.k, self.k])


def _as_spec(spec):
    if isinstance(spec, ProblemSpec):
        return spec
    return ProblemSpec(*spec)


# --------------------------------------------------------------------------
# enumeration
# --------------------------------------------------------------------------


def count_support(spec):
    """Number of partitions in the support (floating point; exact below 2**53)."""
    spec = _as_spec(spec)
    lo, hi, k = spec.r_min, spec.hi, spec.k
    excess = spec.n - lo * k
    top = hi - lo
    if excess < 0:
        return 0
    if excess == 0:
        return 1
    if top <= 0:
        return 0
    parts = min(k, excess)
    # dp[c, t]: multisets of c positive excesses (each <= top) summing to t
    dp = np.zeros((parts + 1, excess + 1))
    dp[0, 0] = 1.0
    for j in range(1, min(top, excess) + 1):
        for c in range(1, parts + 1):
            dp[c, j:] += dp[c - 1, : excess + 1 - j]
    return int(round(dp[:, excess].sum()))


def enumerate_support(spec, cap=ENUMERATION_CAP):
    """All size indices of the (possibly restricted) support, lexicographically sorted."""
    spec = _as_spec(spec)
    total = count_support(spec)
    if total > cap:
        raise CapacityError(f"support of {spec} has {total} partitions (cap {cap})")
    width = spec.width
    out = []
    counts = [0] * width

    def rec(remaining, parts_left, largest):
        if parts_left == 0:
            if remaining == 0:
                out.append(tuple(counts))
            return
        lo = max(spec.r_min, -(-remaining // parts_left))
        for part in range(min(largest, remaining - spec.r_min * (parts_left - 1)), lo - 1, -1):
            counts[part - 1] += 1
            rec(remaining - part, parts_left - 1, part)
            counts[part - 1] -= 1

    rec(spec.n, spec.k, spec.hi)
    out.sort()
    return out


def _monomial(x, s):
    val = Fraction(1)
    for xi, si in zip(x, s):
        if si:
            val *= Fraction(xi) ** si / math.factorial(si)
    return val


def oracle_Z(spec, x, cap=ENUMERATION_CAP):
    """Brute-force ``sum x^s / s!`` over the support in exact rational arithmetic."""
    spec = _as_spec(spec)
    x = [Fraction(v) for v in x]
    if len(x) < spec.width:
        raise DomainError(f"x must have length {spec.width}")
    return sum((_monomial(x, s) for s in enumerate_support(spec, cap)), Fraction(0))


# --------------------------------------------------------------------------
# closed-form special values
# --------------------------------------------------------------------------


def gfc_log_x(alpha, width):
    """``log x_i`` for the generalized-factorial-coefficient family ``(1-alpha)_{i-1}/i!``."""
    if alpha >= 1:
        raise DomainError("gfc family needs alpha < 1")
    i = np.arange(1, width + 1, dtype=float)
    lg = np.array([math.lgamma(v) for v in (i - alpha)])
    return lg - math.lgamma(1 - alpha) - np.array([math.lgamma(v) for v in i + 1])


def gfc_x(alpha, width):
    """``x_i = (1 - alpha)_{i-1} / i!``; exact rationals when ``alpha`` is a Fraction."""
    if isinstance(alpha, (Fraction, int)):
        alpha = Fraction(alpha)
        out, rising = [], Fraction(1)
        for i in range(1, width + 1):
            out.append(rising / math.factorial(i))
            rising *= i - alpha
        return out
    return np.exp(gfc_log_x(alpha, width))


def special_point_x(point, width):
    """Indeterminates of a named special point as exact rationals."""
    if point == "ones":
        return [Fraction(1)] * width
    if point == "half_rising":
        return gfc_x(Fraction(1, 2), width)
    if point == "inv":
        return [Fraction(1, i) for i in range(1, width + 1)]
    if point == "inv_factorial":
        return [Fraction(1, math.factorial(i)) for i in range(1, width + 1)]
    raise DomainError(f"unknown special point {point!r}")


def _stirling_rows(n, k, weight):
    row = np.full(k + 1, -np.inf)
    row[0] = 0.0
    j = np.arange(k + 1, dtype=float)
    with np.errstate(divide="ignore"):
        for m in range(n):
            w = np.log(weight(m, j))
            shifted = np.concatenate(([-np.inf], row[:-1]))
            row = np.logaddexp(w + row, shifted)
    return row[k]


def log_stirling_first(n, k):
    """``log |s(n, k)|`` from ``c(m+1, j) = m c(m, j) + c(m, j-1)``."""
    return _stirling_rows(n, k, lambda m, j: np.full_like(j, float(m)))


def log_stirling_second(n, k):
    """``log S(n, k)`` from ``S(m+1, j) = j S(m, j) + S(m, j-1)``."""
    return _stirling_rows(n, k, lambda m, j: j)


def special_value(point, spec):
    """Closed-form ``Z_{n,k}`` at a special point, as a ScaledValue.

    ``point`` is one of ``"ones"``, ``"half_rising"``, ``"inv"``,
    ``"inv_factorial"`` or a tuple ``("gfc", alpha)`` with alpha -1 or 1/2.
    """
    spec = _as_spec(spec)
    if spec.restricted:
        raise DomainError("closed forms hold only for the unrestricted support")
    n, k = spec.n, spec.k
    lg = math.lgamma
    if isinstance(point, tuple):
        kind, alpha = point
        if kind != "gfc":
            raise DomainError(f"unknown special point {point!r}")
        if alpha == -1:
            point = "ones"
        elif alpha == 0.5:
            point = "half_rising"
        else:
            raise DomainError("no closed form for the gfc family at this alpha")
    if point == "ones":
        log = lg(n) - lg(k) - lg(n - k + 1) - lg(k + 1)
    elif point == "half_rising":
        log = lg(2 * n - k) - 2 * (n - k) * math.log(2) - lg(n + 1) - lg(n - k + 1) - lg(k)
    elif point == "inv":
        log = log_stirling_first(n, k) - lg(n + 1)
    elif point == "inv_factorial":
        log = log_stirling_second(n, k) - lg(n + 1)
    else:
        raise DomainError(f"unknown special point {point!r}")
    return ScaledValue.from_log(log)


# --------------------------------------------------------------------------
# torus action and generalized odds ratios
# --------------------------------------------------------------------------


def odds_from_x(x):
    """Generalized odds ratios ``y_i = x_1^i x_{i+2} / x_2^{i+1}``, i = 1..len(x)-2."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("odds ratios need strictly positive indeterminates")
    lx = np.log(x)
    i = np.arange(1, len(x) - 1)
    return np.exp(i * lx[0] + lx[2:] - (i + 1) * lx[1])


def canonical_x(y):
    """Gauge representative ``x = (1, 1, y_1, ..., y_{n-k-1})`` of an odds vector."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise DomainError("odds ratios must be positive")
    return np.concatenate(([1.0, 1.0], y))


def torus_action(x, s1, s2):
    """``x_i -> x_i s1^{i-1} s2``; Z picks up the factor ``s1^{n-k} s2^k``."""
    x = np.asarray(x, dtype=float)
    return x * np.power(float(s1), np.arange(len(x))) * s2


# --------------------------------------------------------------------------
# Newton polytope
# --------------------------------------------------------------------------


def _support_matrix(spec, cap):
    return np.array(enumerate_support(spec, cap), dtype=float)


def _max_min_weight(V, point):
    """Maximise the smallest convex weight expressing ``point`` over rows of ``V``."""
    m = V.shape[0]
    c = np.zeros(m + 1)
    c[-1] = -1.0
    a_eq = np.vstack([np.hstack([V.T, np.zeros((V.shape[1], 1))]), np.append(np.ones(m), 0.0)])
    b_eq = np.append(point, 1.0)
    a_ub = np.hstack([-np.eye(m), np.ones((m, 1))])
    b_ub = np.zeros(m)
    bounds = [(0, None)] * m + [(None, 1.0)]
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status == 2:
        return None
    if res.status != 0:
        raise RuntimeError(f"LP failed: {res.message}")
    return -res.fun


def polytope_membership(sbar, spec, tol=1e-9, cap=ENUMERATION_CAP):
    """Position of ``sbar`` relative to New(Z_{n,k}): interior, boundary or exterior.

    "interior" means the relative interior within the affine hull of the support.
    """
    spec = _as_spec(spec)
    sbar = np.asarray(sbar, dtype=float)
    if sbar.shape != (spec.width,):
        raise DomainError(f"sbar must have length {spec.width}")
    i = np.arange(1, spec.width + 1)
    scale = max(1.0, spec.n)
    if (
        abs(sbar.sum() - spec.k) > 1e-8 * scale
        or abs(i @ sbar - spec.n) > 1e-8 * scale
        or np.any(sbar < -tol)
    ):
        return "exterior"
    V = _support_matrix(spec, cap)
    if len(V) == 1:
        return "boundary" if np.allclose(V[0], sbar, atol=tol) else "exterior"
    t = _max_min_weight(V, sbar)
    if t is None:
        return "exterior"
    return "interior" if t > tol else "boundary"


def polytope_vertices(spec, cap=ENUMERATION_CAP):
    """Support points that are vertices of the Newton polytope."""
    spec = _as_spec(spec)
    V = _support_matrix(spec, cap)
    verts = []
    for j in range(len(V)):
        others = np.delete(V, j, axis=0)
        if len(others) == 0 or _max_min_weight_feasible(others, V[j]) is False:
            verts.append(tuple(int(v) for v in V[j]))
    return verts


def _max_min_weight_feasible(V, point):
    m = V.shape[0]
    res = linprog(
        np.zeros(m),
        A_eq=np.vstack([V.T, np.ones(m)]),
        b_eq=np.append(point, 1.0),
        bounds=[(0, None)] * m,
        method="highs",
    )
    return res.status == 0


def affine_dimension(spec, cap=ENUMERATION_CAP):
    """Affine dimension of New(Z_{n,k}) as the rank of the centred support."""
    V = _support_matrix(_as_spec(spec), cap)
    if len(V) <= 1:
        return 0
    return int(np.linalg.matrix_rank(V[1:] - V[0]))
