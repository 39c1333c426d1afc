"""Large-size approximations of ``Z_{n,k}``.

* ``gaussian_approx_logZ``: the Gaussian (saddle-point) approximation of
  ``Z_{gamma n, gamma k}`` built on the mean ``m`` of the unconditional
  log-affine model with the same odds ratios.
* ``gfc_asymptotic_logZ``: the fixed-``k`` and Mittag-Leffler forms for the
  generalized factorial coefficient family ``x_i = (1-alpha)_{i-1}/i!``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from .errors import ConvergenceError, DomainError
from .partitions import _as_spec, odds_from_x

__all__ = [
    "LogAffineFit",
    "gale_matrix",
    "design_matrix",
    "ips_fit",
    "ips_closed_form_k2",
    "gaussian_approx_logZ",
    "GAUSSIAN_EXPONENT",
    "mittag_leffler_density",
    "gfc_asymptotic_logZ",
]

# Power of (2 pi gamma) in the Gaussian approximation: n - k - 1 of the
# reduced problem.  The half-power suggested by a plain Gaussian normalization
# misses the reference values by about 2 (see tests/test_asymptotics.py).
GAUSSIAN_EXPONENT = "n-k-1"


def design_matrix(spec):
    """``A`` with rows ``(0, 1, ..., n-k)`` and ``(1, ..., 1)``; ``A s = (n-k, k)``."""
    spec = _as_spec(spec)
    w = spec.width
    return np.vstack([np.arange(w, dtype=float), np.ones(w)])


def gale_matrix(spec):
    """Gale transform rows ``i e_1 - (i+1) e_2 + e_{i+2}``, ``i = 1..n-k-1``."""
    spec = _as_spec(spec)
    w = spec.width
    out = np.zeros((w - 2, w))
    for i in range(1, w - 1):
        out[i - 1, 0] = i
        out[i - 1, 1] = -(i + 1)
        out[i - 1, i + 1] = 1.0
    return out


@dataclass
class LogAffineFit:
    """Mean ``m = x(theta_hat)`` of the log-affine model with odds ``y`` and ``A m = b``."""

    m: np.ndarray
    theta: np.ndarray
    y: np.ndarray
    residual: float
    iterations: int


def _tilted_mean(log_x, t):
    j = np.arange(len(log_x))
    a = log_x + j * t
    a = a - a.max()
    p = np.exp(a)
    return (j * p).sum() / p.sum()


def ips_fit(spec, y, tol=1e-12, max_iter=100_000):
    """Solve ``A x(theta) = b`` with ``log x = Abar^T (Abar Abar^T)^{-1} log y + A^T theta``.

    Proportional scaling alternates over the two rows of ``A``: the
    ``(1, ..., 1)`` row is matched by a common factor and the ``(0, ..., n-k)``
    row by an exponential tilt solved exactly in one dimension.  Each sweep
    keeps the odds ratios fixed because both moves lie in the row space of A.
    """
    spec = _as_spec(spec)
    y = np.asarray(y, dtype=float)
    if len(y) != spec.width - 2:
        raise DomainError(f"odds vector must have length {spec.width - 2}")
    if np.any(y <= 0):
        raise DomainError("odds ratios must be positive")
    if spec.k < 2:
        # b = (n-1, 1) sits on the boundary of the cone over the columns of A
        raise DomainError("no positive solution of A m = b for k = 1")
    Abar = gale_matrix(spec)
    A = design_matrix(spec)
    b = np.array([spec.n - spec.k, spec.k], dtype=float)
    log_x0 = Abar.T @ np.linalg.solve(Abar @ Abar.T, np.log(y))
    theta = np.zeros(2)
    target = b[0] / b[1]
    residual = np.inf
    for it in range(1, max_iter + 1):
        log_x = log_x0 + A.T @ theta
        # row (0..n-k) relative to row (1..1): exponential tilt
        f = lambda t: _tilted_mean(log_x, t) - target
        lo, hi = -1.0, 1.0
        while f(lo) > 0:
            lo *= 2
        while f(hi) < 0:
            hi *= 2
        theta[0] += brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        log_x = log_x0 + A.T @ theta
        # row (1..1): common factor
        theta[1] += math.log(b[1]) - float(np.logaddexp.reduce(log_x))
        m = np.exp(log_x0 + A.T @ theta)
        residual = float(np.max(np.abs(A @ m - b)))
        if residual < tol * max(1.0, b.max()):
            return LogAffineFit(m, theta.copy(), y, residual, it)
    raise ConvergenceError("IPS did not reach the constraint tolerance", residual, max_iter)


def ips_closed_form_k2(y1):
    """Closed form of ``m`` for ``n - k = 2``, ``b = (2, 2)``."""
    theta2 = math.log(2 * y1 ** (1 / 3) / (1 + 2 * math.sqrt(y1)))
    return math.exp(theta2) * np.array([y1 ** (1 / 6), y1 ** (-1 / 3), y1 ** (1 / 6)])


def gaussian_approx_logZ(spec, x, gamma, fit=None):
    """``log`` of ``(x^m)^g / Gamma(g m + 1) * (2 pi g)^{n-k-1} / det(Abar M^-1 Abar^T)^{1/2}``.

    ``spec`` is the reduced problem, ``gamma`` the scale factor, so the value
    approximates ``Z_{gamma n, gamma k}`` with the ``n - k + 1`` indeterminates
    of the reduced problem.
    """
    spec = _as_spec(spec)
    if gamma <= 0:
        raise DomainError("gamma must be positive")
    x = np.asarray(x, dtype=float)[: spec.width]
    if len(x) < spec.width or np.any(x <= 0):
        raise DomainError(f"need {spec.width} positive indeterminates")
    if spec.dim < 2:
        raise DomainError("Gaussian approximation needs n >= k + 2")
    if fit is None:
        fit = ips_fit(spec, odds_from_x(x))
    m = fit.m
    Abar = gale_matrix(spec)
    _, logdet = np.linalg.slogdet((Abar / m) @ Abar.T)
    power = spec.dim - 1
    return float(
        gamma * (m @ np.log(x))
        - gammaln(gamma * m + 1).sum()
        + power * math.log(2 * math.pi * gamma)
        - 0.5 * logdet
    )


def mittag_leffler_density(u, alpha, rel_tol=1e-15, max_terms=500):
    """Mittag-Leffler density ``(1/(pi a)) sum_i (-u)^{i-1}/i! Gamma(a i + 1) sin(pi a i)``.

    The alternating series is summed in ``mpmath`` with enough digits to
    absorb the cancellation between its largest terms; summation stops after
    three consecutive terms below ``rel_tol`` times the partial sum.
    """
    if not 0 < alpha < 1:
        raise DomainError("Mittag-Leffler density needs 0 < alpha < 1")
    if u <= 0:
        raise DomainError("argument must be positive")
    # largest term on the log10 scale fixes the working precision
    i = np.arange(1, max_terms + 1)
    log_terms = (i - 1) * math.log(u) - gammaln(i + 1) + gammaln(alpha * i + 1)
    digits = max(0.0, float(log_terms.max()) / math.log(10))
    with mpmath.workdps(int(digits) + 30):
        a, uu = mpmath.mpf(alpha), mpmath.mpf(u)
        total, small = mpmath.mpf(0), 0
        for j in range(1, max_terms + 1):
            term = (-uu) ** (j - 1) / mpmath.factorial(j) * mpmath.gamma(a * j + 1)
            term *= mpmath.sinpi(a * j)
            total += term
            if total != 0 and abs(term) < rel_tol * abs(total):
                small += 1
                if small == 3:
                    return float(total / (mpmath.pi * a))
            else:
                small = 0
    raise ConvergenceError("Mittag-Leffler series did not converge", None, max_terms)


def gfc_asymptotic_logZ(spec, alpha, form):
    """Asymptotic ``log Z_{n,k}`` for ``x_i = (1-alpha)_{i-1}/i!``.

    ``form`` is ``"fixed_k_pos"`` (alpha > 0), ``"fixed_k_neg"`` (alpha < 0)
    or ``"mittag_leffler"`` (0 < alpha < 1, ``k ~ u n^alpha``).
    """
    spec = _as_spec(spec)
    n, k = spec.n, spec.k
    base = -math.lgamma(k)
    if form == "fixed_k_pos":
        if alpha <= 0:
            raise DomainError("fixed_k_pos needs alpha > 0")
        return (-1 - alpha) * math.log(n) + base - (k - 1) * math.log(alpha) - math.lgamma(1 - alpha)
    if form == "fixed_k_neg":
        if alpha >= 0:
            raise DomainError("fixed_k_neg needs alpha < 0")
        return (-1 - k * alpha) * math.log(n) + base - (k - 1) * math.log(-alpha) - math.lgamma(1 - k * alpha)
    if form == "mittag_leffler":
        if not 0 < alpha < 1:
            raise DomainError("mittag_leffler needs 0 < alpha < 1")
        u = k / n**alpha
        g = mittag_leffler_density(u, alpha)
        if g <= 0:
            raise ConvergenceError("Mittag-Leffler density evaluated to a non-positive value")
        return (-1 - alpha) * math.log(n) + base - (k - 1) * math.log(alpha) + math.log(g)
    raise DomainError(f"unknown asymptotic form {form!r}")
