"""Pfaffian system of the rational-normal-curve polynomial, HGM and difference HGM.

Notation: ``D = n - k`` is the rank of the system and ``Q`` the Gauss-Manin
vector of length ``D``.  ``theta_i Q = P_i Q`` for ``i = 1..D+1``.

The upper-triangular blocks ``Pt_i`` that carry the non-trivial rows factor as

    Pt_i = diag(x_{i+l+1} / ((n-i-l-1) x_i)) . T . diag(1 / x_{m+2}),

with ``T`` the upper-triangular Toeplitz matrix built from ``t_j = j x_j``.
``T`` does not depend on ``i``, so a whole linear combination ``sum c_i P_i Q``
needs a single triangular solve.  The HGM integrator uses that shortcut;
``pfaffian_matrices`` assembles every ``P_i`` entry by entry and is kept as
the reference implementation.
"""

from __future__ import annotations

import csv
import decimal
import functools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DomainError, SingularityError, StepSizeError
from .partitions import _as_spec
from .recurrence import GaussManinVector, gauss_manin

__all__ = [
    "PfaffianSet",
    "IntegrationPath",
    "ptilde",
    "back_substitute_inverse",
    "first_rows",
    "pfaffian_matrices",
    "pfaffian_combination",
    "pfaffian_combination_matrix",
    "gfc_ptilde_inverse",
    "gfc_path_x",
    "gfc_tangent",
    "exact_z",
    "fraction_to_dtype",
    "exact_gauss_manin",
    "hgm_integrate",
    "p1_inverse_apply",
    "dhgm",
]

PIVOT_FLOOR = 1e-30
MAX_STEP_GROWTH = 1e3
MAX_ADAPTIVE_STEPS = 1_000_000
# path points per vectorized batch of Pfaffian matrices
BATCH = 256


def _scalar(dtype, number=None):
    """Converter for exact integer coefficients into the working number type."""
    if np.dtype(dtype) == np.dtype(object):
        return number or Fraction
    return np.dtype(dtype).type


def _vector(x, dtype, number=None):
    conv = _scalar(dtype, number)
    return np.array([conv(v) for v in x], dtype=dtype)


def _check_spec(spec):
    spec = _as_spec(spec)
    if spec.restricted:
        raise DomainError("the Pfaffian system is implemented for the unrestricted support")
    if spec.dim < 2:
        raise DomainError("the Pfaffian system needs n >= k + 2")
    if spec.k < 2:
        # n - i - l - 1 reaches zero at l = n - k - i when k = 1
        raise SingularityError("Pt denominators vanish for k = 1 (n - i - l - 1 = 0 at l = n - k - i)")
    return spec


# --------------------------------------------------------------------------
# literal assembly
# --------------------------------------------------------------------------


def ptilde(n, i, size, x, dtype=np.longdouble, number=None):
    """The upper-triangular ``Pt_i^{(n)}`` of the given size, entry by entry.

    ``(Pt_i)_{l,m} = (m-l+1)/(n-i-l-1) * x_{m-l+1} x_{i+l+1} / (x_{m+2} x_i)``
    for ``1 <= l <= m <= size``; ``x`` is 1-based in the formula, 0-based here.
    """
    conv = _scalar(dtype, number)
    out = np.zeros((size, size), dtype=dtype)
    for l in range(1, size + 1):
        den = n - i - l - 1
        if den == 0:
            raise SingularityError(f"Pt_{i}^({n}) denominator n-i-l-1 vanishes at l={l}")
        for m in range(l, size + 1):
            coef = conv(m - l + 1) / conv(den)
            out[l - 1, m - 1] = coef * x[m - l] * x[i + l] / (x[m + 1] * x[i - 1])
    return out


def back_substitute_inverse(U, pivot_floor=PIVOT_FLOOR):
    """Inverse of an upper-triangular matrix by back-substitution.

    Works for any numpy dtype, including ``object`` arrays of Fractions.
    """
    size = U.shape[0]
    inv = np.zeros_like(U)
    for r in range(size):
        row_scale = max(abs(v) for v in U[r, r:]) if size else 0
        if U[r, r] == 0 or abs(U[r, r]) < pivot_floor * row_scale:
            raise SingularityError(f"zero pivot at row {r + 1} of an upper-triangular block")
    one = U.dtype.type(1) if U.dtype != object else Fraction(1)
    for c in range(size):
        inv[c, c] = one / U[c, c]
        for r in range(c - 1, -1, -1):
            acc = U[r, r + 1 : c + 1] @ inv[r + 1 : c + 1, c]
            inv[r, c] = -acc / U[r, r]
    return inv


@dataclass
class PfaffianSet:
    """``P_1, ..., P_{D+1}`` at one point; ``matrices[i-1]`` is ``P_i``."""

    n: int
    k: int
    matrices: np.ndarray

    def __getitem__(self, i):
        return self.matrices[i - 1]

    def __len__(self):
        return len(self.matrices)

    def combination(self, coeffs):
        """``sum_i coeffs[i-1] P_i``."""
        coeffs = np.asarray(coeffs, dtype=self.matrices.dtype)
        return np.tensordot(coeffs, self.matrices, axes=1)

    def ptilde_inverse(self, i):
        """``Pt_i^{-1}`` read back from rows 2.. and columns i+1.. of ``P_i``."""
        D = self.n - self.k
        return self.matrices[i - 1][1 : D - i + 1, i:D]


def first_rows(n, k, dtype=np.longdouble, number=None):
    """First rows of ``P_1..P_{D+1}`` from the annihilators of the system."""
    conv = _scalar(dtype, number)
    D = n - k
    rows = np.zeros((D + 1, D), dtype=dtype)
    rows[0, 0] = conv(2 * k - n)
    rows[1, 0] = conv(D)
    for j in range(2, D + 1):
        rows[0, j - 1] = conv(j - 1)
        rows[1, j - 1] = conv(-j)
    for i in range(3, D + 2):
        rows[i - 1, i - 2] = conv(1)
    return rows


def pfaffian_matrices(spec, x, dtype=np.longdouble, number=None):
    """All Pfaffian matrices at ``x``, each ``Pt_i`` inverted by back-substitution."""
    spec = _check_spec(spec)
    n, k, D = spec.n, spec.k, spec.dim
    xv = _vector(x, dtype, number)
    if len(xv) < D + 1:
        raise DomainError(f"indeterminates must have length {D + 1}")
    if np.any(xv[: D + 1] <= 0):
        raise DomainError("the Pfaffian system needs strictly positive indeterminates")
    conv = _scalar(dtype, number)
    mats = np.zeros((D + 1, D, D), dtype=dtype)
    rows = first_rows(n, k, dtype, number)
    for i in range(1, D + 2):
        P = mats[i - 1]
        P[0, :] = rows[i - 1]
        if i >= 3:
            P[i - 2, i - 2] += conv(1)
        size = D - i
        if size >= 1:
            inv = back_substitute_inverse(ptilde(n, i, size, xv, dtype, number))
            P[1 : size + 1, i:D] += inv
    return PfaffianSet(n, k, mats)


# --------------------------------------------------------------------------
# Toeplitz fast path
# --------------------------------------------------------------------------


def _toeplitz_solve(t, w):
    """Solve ``T v = w`` for upper-triangular Toeplitz ``T_{l,m} = t[m-l]``."""
    size = len(w)
    v = np.zeros_like(w)
    for r in range(size - 1, -1, -1):
        v[r] = (w[r] - t[1 : size - r] @ v[r + 1 :]) / t[0]
    return v


@functools.lru_cache(maxsize=64)
def _combination_grid(n, k):
    """Index grids for ``W_b = sum_i c_i (n-i-b-1) x_i Q_{b+i} / x_{i+b+1}``."""
    D = n - k
    i = np.arange(1, D)[:, None]
    b = np.arange(1, D)[None, :]
    mask = i + b <= D
    den = np.where(mask, n - i - b - 1, 0)
    idx = np.where(mask, i + b, 0)
    return mask, den, idx


@functools.lru_cache(maxsize=64)
def _first_row_weights(n, k, dtype):
    return first_rows(n, k, dtype)


def pfaffian_combination(n, k, x, coeffs, Q):
    """``sum_i coeffs[i-1] (P_i Q)`` without forming the matrices.

    ``x``, ``coeffs`` and ``Q`` share one floating dtype.  Cost O(D^2).
    """
    D = n - k
    dt = Q.dtype
    x = x[: D + 1]
    out = np.empty(D, dtype=dt)
    rows = _first_row_weights(n, k, dt.type)
    out[0] = (coeffs @ rows) @ Q
    # delta term on the diagonal of P_i, i >= 3
    out[1:] = coeffs[2:] * Q[1:]
    mask, den, idx = _combination_grid(n, k)
    # Q_{i+b} sits at position i+b-1, x_{i+b+1} at position i+b
    lead = (coeffs[: D - 1] * x[: D - 1])[:, None]
    terms = lead * den.astype(dt) * Q[idx - 1] / x[idx]
    W = np.where(mask, terms, dt.type(0)).sum(axis=0)
    t = np.arange(1, D, dtype=dt) * x[: D - 1]
    v = _toeplitz_solve(t, W)
    out[1:] += x[2 : D + 1] * v
    return out


def _toeplitz_inverse_row(t):
    """First row ``u`` of ``T^{-1}`` for upper-triangular Toeplitz ``T_{l,m} = t[..., m-l]``.

    Batched over leading axes.
    """
    size = t.shape[-1]
    u = np.zeros_like(t)
    u[..., 0] = 1 / t[..., 0]
    for j in range(1, size):
        u[..., j] = -np.einsum("...i,...i->...", t[..., 1 : j + 1], u[..., j - 1 :: -1]) / t[..., 0]
    return u


@functools.lru_cache(maxsize=64)
def _matrix_grid(n, k):
    """Scatter indices for ``pfaffian_combination_matrix``."""
    D = n - k
    mask, den, idx = _combination_grid(n, k)
    i_pos, b_pos = np.nonzero(mask)
    lag = np.subtract.outer(np.arange(D - 1), np.arange(D - 1))
    return i_pos, b_pos, den[mask], idx[mask], np.clip(-lag, 0, None), lag <= 0


def pfaffian_combination_matrix(n, k, x, coeffs):
    """The matrix ``sum_i coeffs[i-1] P_i``.

    Same result as stacking ``pfaffian_combination`` over unit vectors, at
    the cost of one series inversion and one matrix product.  ``x`` and
    ``coeffs`` may carry leading batch axes; the result then has shape
    ``batch + (D, D)``.
    """
    D = n - k
    x = np.asarray(x)[..., : D + 1]
    coeffs = np.asarray(coeffs, dtype=x.dtype)
    x, coeffs = np.broadcast_arrays(x, coeffs)
    dt = x.dtype
    batch = x.shape[:-1]
    M = np.zeros(batch + (D, D), dtype=dt)
    M[..., 0, :] = coeffs @ _first_row_weights(n, k, dt.type)
    M[..., np.arange(1, D), np.arange(1, D)] = coeffs[..., 2:]
    i_pos, b_pos, den, idx, lag, upper = _matrix_grid(n, k)
    # W = B Q with B[b-1, i+b-1] = c_i (n-i-b-1) x_i / x_{i+b+1}
    B = np.zeros(batch + (D - 1, D), dtype=dt)
    B[..., b_pos, idx - 1] = coeffs[..., i_pos] * x[..., i_pos] * den.astype(dt) / x[..., idx]
    t = np.arange(1, D, dtype=dt) * x[..., : D - 1]
    u = _toeplitz_inverse_row(t)
    Tinv = np.where(upper, u[..., lag], dt.type(0))
    M[..., 1:, :] += x[..., 2 : D + 1, None] * (Tinv @ B)
    return M


# --------------------------------------------------------------------------
# generalized factorial coefficient family
# --------------------------------------------------------------------------


def gfc_path_x(alpha, width, dtype=np.longdouble):
    """``x_i = (1-alpha)_{i-1} / i!`` in the working precision (alpha may be an array)."""
    a = np.asarray(alpha, dtype=dtype)[..., None]
    i = np.arange(1, width, dtype=dtype)
    factors = (i - a) / (i + 1)
    ones = np.ones(a.shape, dtype=dtype)
    return np.concatenate([ones, np.cumprod(factors, axis=-1)], axis=-1)


def gfc_tangent(alpha, width, dtype=np.longdouble):
    """``d xi^i / d alpha = sum_{j<i} 1/(alpha - j)``, with ``d xi^1 = 0``."""
    a = np.asarray(alpha, dtype=dtype)[..., None]
    terms = 1 / (a - np.arange(1, width, dtype=dtype))
    zeros = np.zeros(a.shape, dtype=dtype)
    return np.concatenate([zeros, np.cumsum(terms, axis=-1)], axis=-1)


def gfc_ptilde_inverse(n, i, size, alpha):
    """Closed form of ``Pt_i^{-1}`` along the gfc family, rows/cols 1..size.

    Entry ``(l-1, m-i)`` equals ``(-1)^l (n-m-1) [m+1]_{l+i} / ((l+1)! i!)
    * (alpha-1)/(m-alpha) * (alpha-l)_{m-i} / (i-alpha)_{m-i}``.
    """

    def rising(a, j):
        return math.prod(a + r for r in range(j))

    def falling(a, j):
        return math.prod(a - r for r in range(j))

    out = np.zeros((size, size))
    for l in range(2, size + 2):
        for m in range(i + l - 1, i + size + 1):
            val = (-1) ** l * (n - m - 1) * falling(m + 1, l + i)
            val /= math.factorial(l + 1) * math.factorial(i)
            val *= (alpha - 1) / (m - alpha)
            val *= rising(alpha - l, m - i) / rising(i - alpha, m - i)
            out[l - 2, m - i - 1] = val
    return out


def exact_z(point, n, k):
    """Closed-form ``Z_{n,k}`` at a special point as an exact rational."""
    f = math.factorial
    if n == k == 0:
        return Fraction(1)
    if k <= 0 or n < k:
        return Fraction(0)
    if point == "ones":
        return Fraction(math.comb(n - 1, k - 1), f(k))
    if point == "half_rising":
        return Fraction(f(2 * n - k - 1), 4 ** (n - k) * f(n) * f(n - k) * f(k - 1))
    if point in ("inv", "inv_factorial"):
        row = [1] + [0] * k
        for m in range(n):
            for j in range(min(m + 1, k), 0, -1):
                row[j] = row[j - 1] + (m if point == "inv" else j) * row[j]
            row[0] = 0
        return Fraction(row[k], f(n))
    raise DomainError(f"unknown special point {point!r}")


def fraction_to_dtype(q, dtype=np.longdouble):
    """Round a rational once into ``dtype`` (no detour through binary64)."""
    if np.dtype(dtype) == np.dtype(object):
        return Fraction(q)
    with decimal.localcontext() as ctx:
        ctx.prec = 40
        text = str(decimal.Decimal(q.numerator) / decimal.Decimal(q.denominator))
    return np.dtype(dtype).type(text)


def exact_gauss_manin(point, spec, dtype=np.longdouble):
    """Gauss-Manin vector at a point where every ``Z`` has a closed form.

    The components are formed as exact rationals and the direction is
    rounded once into ``dtype``.  The HGM is sensitive to the start vector:
    the Pfaffian system also carries solutions other than the polynomial one
    and some of them grow along the gfc path, so a start rounded to binary64
    visibly biases the end value once ``n - k`` is around 30.
    """
    from .partitions import special_point_x
    from .scaled import log_fraction

    spec = _as_spec(spec)
    n, k = spec.n, spec.k
    name = _point_name(point)
    x = special_point_x(name, spec.width)
    comps = [exact_z(name, n, k)]
    for i in range(3, spec.width + 1):
        comps.append(x[i - 1] * exact_z(name, n - i, k - 1))
    top = max(comps)
    direction = np.array([fraction_to_dtype(c / top, dtype) for c in comps], dtype=dtype)
    return GaussManinVector(direction, log_fraction(top))


def _point_name(point):
    if isinstance(point, tuple):
        if point[0] != "gfc" or point[1] not in (-1, 0.5):
            raise DomainError(f"no closed form at {point!r}")
        return {-1: "ones", 0.5: "half_rising"}[point[1]]
    return point


# --------------------------------------------------------------------------
# HGM
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class IntegrationPath:
    """Path for the HGM.

    ``kind="gfc"``: ``start``/``end`` are alpha values, ``x = (1-alpha)_{i-1}/i!``.
    ``kind="log_linear"``: ``start``/``end`` are ``log x`` vectors joined by a
    straight segment.

    ``steps`` is the number of fixed RK4 steps, or ``"auto"`` for RK4 with
    step doubling and a local relative tolerance ``tol``.
    """

    kind: str
    start: object
    end: object
    steps: object = 500
    scheme: str = "rk4"
    tol: float = 1e-12

    def __post_init__(self):
        if self.kind not in ("gfc", "log_linear"):
            raise DomainError(f"unknown path kind {self.kind!r}")
        if self.steps != "auto" and int(self.steps) < 1:
            raise DomainError("step count must be at least 1")
        if self.scheme != "rk4":
            raise DomainError("only the classical RK4 scheme is implemented")
        if self.kind == "gfc" and (self.start >= 1 or self.end >= 1):
            raise DomainError("gfc path must stay in alpha < 1")

    @property
    def adaptive(self):
        return self.steps == "auto"

    def field(self, n, k, dtype=np.longdouble):
        """``(x(t), dxi/dt)`` as a callable of the path parameter ``t``."""
        width = n - k + 1
        if self.kind == "gfc":
            return lambda a: (gfc_path_x(a, width, dtype), gfc_tangent(a, width, dtype))
        lo = np.asarray(self.start, dtype=dtype)[:width]
        hi = np.asarray(self.end, dtype=dtype)[:width]
        delta = hi - lo
        return lambda t: (np.exp(lo + np.asarray(t, dtype=dtype)[..., None] * delta), delta)

    @property
    def bounds(self):
        if self.kind == "gfc":
            return float(self.start), float(self.end)
        return 0.0, 1.0


@dataclass
class StepRecord:
    step: int
    t: float
    log_scale: float
    log_z: float
    growth: float


def hgm_integrate(spec, path, q_init=None, *, dtype=np.longdouble, diagnostics=None,
                  max_growth=MAX_STEP_GROWTH, torus_reduce=False):
    """Integrate ``dQ = sum_i dxi^i P_i Q`` along ``path`` by RK4.

    ``q_init`` is the Gauss-Manin vector at the start of the path; when omitted
    it is taken from a closed form (gfc alpha in {-1, 1/2}, ``x = 1``) or the
    recurrence.  The state is renormalized to unit max-norm after each step.
    When ``diagnostics`` is a path or writable file a per-step CSV is emitted.

    With ``torus_reduce`` the component of ``dxi`` along the rows of ``A`` is
    split off: on the polynomial solution ``sum_i P_i Q = k Q`` and
    ``sum_i (i-1) P_i Q = (n-k) Q``, so that part only rescales ``Q`` and is
    added to the log-scale by Simpson's rule.  The matrices themselves do not
    satisfy these identities.  The split is exact but not always better
    conditioned: it enlarges the remaining coefficients when ``x_1`` and
    ``x_2`` move apart, so it is off by default.

    Away from the gfc path the system can be stiff (the spurious solutions
    grow much faster than the polynomial one); fixed-step RK4 then needs many
    more steps, and ``steps="auto"`` chooses them by step doubling.
    """
    spec = _check_spec(spec)
    n, k = spec.n, spec.k
    t0, t1 = path.bounds
    if q_init is None:
        q_init = _default_start(spec, path, dtype)
    Q = np.asarray(q_init.direction, dtype=dtype)
    log_scale = float(q_init.log_scale)
    records = []
    if t0 == t1:
        return GaussManinVector(Q.copy(), log_scale)
    field_at = path.field(n, k, dtype)
    steps_along = np.arange(n - k + 1, dtype=dtype)

    cache = {}

    def coefficients(t):
        x, dxi = field_at(t)
        dxi = np.broadcast_to(dxi, x.shape)
        rate = np.zeros(x.shape[:-1], dtype=dtype)
        if torus_reduce:
            c1 = dxi[..., :1]
            c2 = dxi[..., 1:2] - c1
            dxi = dxi - c1 - c2 * steps_along
            rate = k * c1[..., 0] + (n - k) * c2[..., 0]
        return x, dxi, rate

    def prefill(ts):
        # matrices for many path points in one vectorized pass
        for lo in range(0, len(ts), BATCH):
            chunk = ts[lo : lo + BATCH]
            x, dxi, rate = coefficients(chunk)
            mats = pfaffian_combination_matrix(n, k, x, dxi)
            for t, m, r in zip(chunk, mats, rate):
                cache[t] = (m.__matmul__, r)

    def rhs(t):
        if t not in cache:
            x, dxi, rate = coefficients(t)
            M = pfaffian_combination_matrix(n, k, x, dxi)
            if len(cache) > 8:
                cache.clear()
            cache[t] = (M.__matmul__, rate)
        return cache[t]

    def rk4(q, t, t_end):
        h = t_end - t
        f0, r0 = rhs(t)
        fm, rm = rhs(t + h / 2)
        f1, r1 = rhs(t_end)
        k1 = f0(q)
        k2 = fm(q + h / 2 * k1)
        k3 = fm(q + h / 2 * k2)
        k4 = f1(q + h * k3)
        return q + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4), float(h / 6 * (r0 + 4 * rm + r1))

    def accept(new, t, step):
        nonlocal Q, log_scale
        top = np.max(np.abs(new))
        growth = float(top / np.max(np.abs(Q)))
        if not np.isfinite(growth) or growth > max_growth or growth < 1 / max_growth:
            raise StepSizeError(
                f"state changed by a factor {growth:.3g} in step {step}; "
                "the path runs too close to a singular point, use more steps"
            )
        Q = new / top
        log_scale += float(np.log(top))
        if diagnostics is not None:
            lz = float(np.log(abs(Q[0]))) + log_scale if Q[0] != 0 else float("-inf")
            records.append(StepRecord(step, float(t), log_scale, lz, growth))

    if path.adaptive:
        # step doubling with Richardson extrapolation
        t, end = dtype(t0), dtype(t1)
        span = end - t
        h, step = span / dtype(64), 0
        while (end - t) * np.sign(span) > 0:
            if abs(h) > abs(end - t):
                h = end - t
            t_end = t + h
            t_mid = t + h / 2
            full, _ = rk4(Q, t, t_end)
            half, d1 = rk4(Q, t, t_mid)
            two, d2 = rk4(half, t_mid, t_end)
            err = float(np.max(np.abs(two - full)) / np.max(np.abs(two))) / 15
            if err <= path.tol or abs(h) < abs(span) * 1e-12:
                step += 1
                log_scale += d1 + d2
                accept(two + (two - full) / 15, t_end, step)
                t = t_end
            if step > MAX_ADAPTIVE_STEPS:
                raise StepSizeError("adaptive RK4 exceeded its step budget")
            factor = 4.0 if err == 0 else min(4.0, max(0.2, 0.9 * (path.tol / err) ** 0.2))
            h = h * dtype(factor)
    else:
        h = (dtype(t1) - dtype(t0)) / dtype(path.steps)
        grid = dtype(t0) + np.arange(path.steps + 1, dtype=dtype) * h
        grid[-1] = dtype(t1)
        for lo in range(0, path.steps, BATCH):
            cache.clear()
            part = grid[lo : lo + BATCH + 1]
            prefill(np.concatenate([part, part[:-1] + (part[1:] - part[:-1]) / 2]))
            for step in range(lo, min(lo + BATCH, path.steps)):
                new, dlog = rk4(Q, grid[step], grid[step + 1])
                log_scale += dlog
                accept(new, grid[step + 1], step + 1)
    if diagnostics is not None:
        _write_diagnostics(diagnostics, records)
    return GaussManinVector(Q, log_scale)


def _default_start(spec, path, dtype):
    if path.kind == "gfc":
        if path.start in (-1, 0.5):
            return exact_gauss_manin(("gfc", path.start), spec, dtype)
        from .partitions import gfc_log_x

        return gauss_manin(spec, log_x=gfc_log_x(path.start, spec.width))
    start = np.asarray(path.start, dtype=float)
    if not np.any(start[: spec.width]):
        return exact_gauss_manin("ones", spec, dtype)
    return gauss_manin(spec, log_x=start)


def _write_diagnostics(target, records):
    header = ["step", "t", "log_scale", "log_z", "growth"]
    if hasattr(target, "write"):
        _emit(target, header, records)
        return
    with open(target, "w", newline="") as fh:
        _emit(fh, header, records)


def _emit(fh, header, records):
    writer = csv.writer(fh)
    writer.writerow(header)
    for r in records:
        writer.writerow([r.step, repr(r.t), repr(r.log_scale), repr(r.log_z), repr(r.growth)])


# --------------------------------------------------------------------------
# difference HGM
# --------------------------------------------------------------------------


@dataclass
class _Scaled:
    """Vector ``exp(log) * vec`` used to keep the difference HGM in range."""

    vec: np.ndarray
    log: float = 0.0
    exact: bool = field(default=False)

    def normalized(self):
        if self.exact:
            return self
        top = np.max(np.abs(self.vec))
        if top == 0 or not np.isfinite(top):
            return self
        return _Scaled(self.vec / top, self.log + float(np.log(top)))


def p1_inverse_apply(n, k, x, v, dtype=np.longdouble, number=None):
    """``(P_1^{(n,k)})^{-1} v`` through the block form of the inverse."""
    conv = _scalar(dtype, number)
    c = 2 * k - n
    if c == 0:
        raise SingularityError(f"P_1^({n},{k}) is singular: 2k - n = 0")
    d = n - k
    w = v.copy()
    if d > 1:
        w[1:] = ptilde(n, 1, d - 1, x, dtype, number) @ v[1:]
    weights = np.array([conv(m - 1) for m in range(2, d + 1)], dtype=dtype)
    out = w.copy()
    out[0] = (w[0] - weights @ w[1:]) / conv(c)
    return out


def _descend_fast(n, k, steps, start, x, dtype):
    """Float-dtype ``_descend`` through the Toeplitz form of ``Pt_1``.

    ``Pt_1 = diag(x_{l+2}/((n-l-2) x_1)) T diag(1/x_{m+2})`` with
    ``T_{lm} = (m-l+1) x_{m-l+1}``, which depends on ``d = n - k`` only, so it
    is built once for the whole descent.
    """
    d = n - k
    ns = n - np.arange(steps - 1, -1, -1)
    cs = 2 * (ns - d) - ns
    if np.any(cs == 0):
        raise SingularityError("P_1 is singular on the descent: 2k - n = 0")
    offsets = np.arange(3, d + 2)
    if d > 1 and np.any((ns[:, None] - offsets[None, :]) == 0):
        raise SingularityError("Pt_1 denominator n-l-2 vanishes on the descent")
    x = np.asarray(x, dtype=dtype)
    vec, log = start.vec.astype(dtype), start.log
    log_x1 = float(np.log(x[0]))
    if d > 1:
        size = d - 1
        l, m = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
        band = np.maximum(m - l, 0)
        T = np.where(m >= l, (band + 1) * x[band], 0).astype(dtype)
        inner = x[2 : d + 1]
        ratio = x[2 : d + 1] / x[0]
        weights = np.arange(1, d, dtype=dtype)
        offsets = offsets.astype(dtype)
    for nn, c in zip(ns, cs):
        w = vec.copy()
        if d > 1:
            w[1:] = ratio / (dtype(nn) - offsets) * (T @ (vec[1:] / inner))
            w[0] = (w[0] - weights @ w[1:]) / dtype(c)
        else:
            w[0] = w[0] / dtype(c)
        top = np.abs(w).max()
        if top == 0 or not np.isfinite(top):
            vec, log = w, log + log_x1
            continue
        vec, log = w / top, log + log_x1 + float(np.log(top))
    return _Scaled(vec, log)


def _descend(n, k, steps, start, x, dtype, number):
    """``x_1^steps prod_{i<steps} (P_1^{(n-i,k-i)})^{-1} start`` applied right to left."""
    exact = start.exact
    if not exact and np.dtype(dtype) != np.dtype(object):
        return _descend_fast(n, k, steps, start, x, dtype)
    cur = start
    log_x1 = 0.0 if exact else float(np.log(x[0]))
    for i in range(steps - 1, -1, -1):
        vec = p1_inverse_apply(n - i, k - i, x, cur.vec, dtype, number)
        if exact:
            cur = _Scaled(vec * x[0], 0.0, True)
        else:
            cur = _Scaled(vec, cur.log + log_x1).normalized()
    return cur


def _small_k(n, k, x, dtype, number, exact):
    """``Q_{n,k}`` for ``2 <= k < n/2`` (and ``k = 1``) by contiguity in (n, k)."""
    d = n - k
    conv = _scalar(dtype, number)
    base = np.array([conv(0)] * d, dtype=dtype)
    base[0] = x[d]
    base[d - 1] += x[d]
    start = _Scaled(base, 0.0, exact)
    if not exact:
        start = start.normalized()
    return _descend(n, k, k - 1, start, x, dtype, number)


def dhgm(spec, x, dtype=np.longdouble, number=None, literal_doubling=False):
    """Gauss-Manin vector by the difference HGM.

    ``dtype=object`` runs the recursion in exact rational arithmetic (or with
    ``number`` as the scalar type, e.g. ``mpmath.mpf``).  ``literal_doubling``
    applies the ``1/i`` prefactor of the doubling step to every row, which
    gives the naive variant of the step; it is only useful for comparison.
    """
    spec = _check_spec(spec)
    n, k, D = spec.n, spec.k, spec.dim
    exact = np.dtype(dtype) == np.dtype(object)
    xv = _vector(x, dtype, number)
    if len(xv) < D + 1:
        raise DomainError(f"indeterminates must have length {D + 1}")
    if np.any(xv[: D + 1] <= 0):
        raise DomainError("the difference HGM needs strictly positive indeterminates")
    if 2 * k < n:
        res = _small_k(n, k, xv, dtype, number, exact)
        return _to_gm(res, dtype)
    conv = _scalar(dtype, number)
    half = conv(2)
    q = np.array([xv[0] * xv[2] + xv[1] * xv[1] / half, xv[0] * xv[2]], dtype=dtype)
    cur = _Scaled(q, 0.0, exact)
    for i in range(3, D + 1):
        z_odd = _small_k(2 * i - 1, i - 1, xv, dtype, number, exact)
        cur = _doubling_step(i, xv, z_odd, cur, dtype, number, literal_doubling)
    res = _descend(n, k, 2 * k - n, cur, xv, dtype, number)
    return _to_gm(res, dtype)


def _doubling_step(i, x, z_odd, prev, dtype, number, literal):
    """``Q_{2i,i}`` from ``Z_{2i-1,i-1}`` and ``Q_{2i-2,i-1}``."""
    conv = _scalar(dtype, number)
    exact = prev.exact
    if exact:
        za, qb = z_odd.vec[0], prev.vec
        log = 0.0
    else:
        log = max(z_odd.log, prev.log)
        za = z_odd.vec[0] * dtype(np.exp(z_odd.log - log)) if np.dtype(dtype) != object else z_odd.vec[0]
        qb = prev.vec * dtype(np.exp(prev.log - log))
    out = np.array([conv(0)] * i, dtype=dtype)
    if i > 2:
        out[2:] = x[1] * (ptilde(2 * i, 2, i - 2, x, dtype, number) @ qb[1 : i - 1])
    m = np.array([conv(v) for v in range(3, i + 1)], dtype=dtype)
    tail = out[2:]
    out[1] = x[0] * za - (m - 1) @ tail
    out[0] = (conv(2) * x[0] * za + x[1] * qb[0] - (m - 2) @ tail) / conv(i)
    if literal:
        out[2:] = tail / conv(i)
    res = _Scaled(out, log, exact)
    return res if exact else res.normalized()


def _to_gm(res, dtype):
    if res.exact:
        return res.vec
    return GaussManinVector(res.vec, res.log)
