"""Microcanonical Gibbs distribution, moment map, Fisher metric and MLE."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln

from .errors import ConvergenceError, DomainError
from .partitions import (
    ProblemSpec,
    _as_spec,
    enumerate_support,
    gfc_log_x,
    polytope_membership,
)
from .pfaffian import back_substitute_inverse, ptilde
from .recurrence import ZTable, _build_table, resolve_log_x

__all__ = [
    "AHypDistribution",
    "MomentState",
    "MLEResult",
    "CurvedModel",
    "log_pmf",
    "moment_map",
    "pfaffian_metric",
    "mle_full",
    "mle_curved",
    "mle_exists_cubic",
    "projection_threshold",
    "dm_mle_exists",
    "asymptotic_variance",
]


# --------------------------------------------------------------------------
# distribution
# --------------------------------------------------------------------------


@dataclass
class AHypDistribution:
    """``q(s; x) = x^s / (s! Z_{n,k}(x))`` on the partitions of n into k parts."""

    spec: ProblemSpec
    x: np.ndarray = None
    log_x: np.ndarray = None
    _table: ZTable = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.spec = _as_spec(self.spec)
        self.log_x = resolve_log_x(self.spec, self.x, self.log_x)
        self.x = np.exp(self.log_x)

    @property
    def table(self):
        if self._table is None:
            self._table = ZTable(self.spec, log_x=self.log_x)
        return self._table

    @property
    def log_z(self):
        return self.table.log_z(self.table.n, self.table.k)

    def support(self):
        return enumerate_support(self.spec)

    def log_pmf(self, s):
        return log_pmf(self, s)

    def pmf_table(self):
        """``(support, probabilities)`` by enumeration (small problems)."""
        support = self.support()
        return support, np.exp([log_pmf(self, s) for s in support])


def _check_size_index(spec, s):
    s = np.asarray(s)
    if s.ndim != 1 or np.any(s < 0) or np.any(s != np.round(s)):
        raise DomainError("a size index is a vector of non-negative integers")
    s = s.astype(int)
    if len(s) > spec.width and np.any(s[spec.width :]):
        raise DomainError("size index has parts larger than n - k + 1")
    s = np.pad(s, (0, max(0, spec.width - len(s))))[: spec.width]
    i = np.arange(1, spec.width + 1)
    if s.sum() != spec.k or (i * s).sum() != spec.n:
        raise DomainError("size index does not satisfy sum s_i = k, sum i s_i = n")
    if spec.restricted and (np.any(s[: spec.r_min - 1]) or np.any(s[spec.hi :])):
        raise DomainError("size index uses part sizes outside [r_min, r_max]")
    return s


def log_pmf(dist, s):
    """``sum_i xi^i s_i - log s! - log Z``."""
    s = _check_size_index(dist.spec, s)
    active = s > 0
    if np.any(np.isneginf(dist.log_x[active])):
        return -math.inf
    return float(dist.log_x[active] @ s[active] - gammaln(s + 1).sum() - dist.log_z)


# --------------------------------------------------------------------------
# moment map
# --------------------------------------------------------------------------


@dataclass
class MomentState:
    """Dual coordinates ``eta = E[S]`` and Fisher metric ``g = Cov[S]``."""

    eta: np.ndarray
    g: np.ndarray


def _second_moments(table, log_x):
    """``x_i x_j Z_{n-i-j,k-2} / Z`` (zero when ``i + j > n - k + 2``)."""
    n, k, D = table.n, table.k, table.dim
    w = D + 1
    log_z = table.log_z(n, k)
    out = np.zeros((w, w))
    if k < 2:
        return out
    for i in range(1, w + 1):
        for j in range(1, w + 1):
            if i + j > D + 2:
                continue
            val = log_x[i - 1] + log_x[j - 1] + table.log_z(n - i - j, k - 2) - log_z
            out[i - 1, j - 1] = math.exp(val) if np.isfinite(val) else 0.0
    return out


def moment_map(spec, x=None, *, log_x=None, check=True, rtol=1e-8):
    """``eta_i = x_i Z_{n-i,k-1}/Z`` and ``g_ij = Cov[S_i, S_j]``.

    With ``check`` the block ``i, j >= 3`` of the metric is recomputed from
    the Pfaffian blocks and the first moments (``pfaffian_metric``) and the
    two are required to agree to ``rtol``.
    """
    spec = _as_spec(spec)
    table = ZTable(spec, x, log_x=log_x)
    if table.shift:
        raise DomainError("moment_map is implemented for r_min = 1")
    lx = table.log_x
    n, k = spec.n, spec.k
    log_z = table.log_z(n, k)
    if not np.isfinite(log_z):
        raise DomainError("Z vanishes at these indeterminates")
    i = np.arange(1, spec.width + 1)
    eta = np.array([
        math.exp(lx[j - 1] + table.log_z(n - j, k - 1) - log_z) if np.isfinite(lx[j - 1]) else 0.0
        for j in i
    ])
    second = _second_moments(table, lx)
    g = second - np.outer(eta, eta) + np.diag(eta)
    if check and spec.dim >= 3 and k >= 2 and not spec.restricted and np.all(np.isfinite(lx)):
        alt = pfaffian_metric(spec, np.exp(lx), eta)
        block = g[2:, 2:]
        scale = max(1.0, float(np.max(np.abs(block))))
        if np.max(np.abs(alt - block)) > rtol * scale:
            raise ConvergenceError("Pfaffian and direct Fisher metrics disagree",
                                   float(np.max(np.abs(alt - block))), None)
    return MomentState(eta, g)


def pfaffian_metric(spec, x, eta):
    """Fisher metric block ``3 <= i, j <= n-k+1`` from first moments only.

    ``x_i x_j Z_{n-i-j,k-2}/Z = sum_l (Pt_i^{-1})_{j-2,l} eta_{i+l+1}`` for
    ``i + j <= n - k + 2``, read off row ``j - 1`` of ``theta_i Q = P_i Q``.
    """
    spec = _as_spec(spec)
    n, D = spec.n, spec.dim
    x = np.asarray(x, dtype=float)
    out = np.zeros((D - 1, D - 1))
    for i in range(3, D + 2):
        size = D - i
        inv = back_substitute_inverse(ptilde(n, i, size, x, np.float64)) if size >= 1 else None
        for j in range(3, D + 2):
            val = 0.0
            if i + j <= D + 2 and inv is not None:
                val = float(inv[j - 3, j - 3 :] @ eta[i + j - 2 : i + size + 1])
            out[i - 3, j - 3] = val - eta[i - 1] * eta[j - 1] + (eta[i - 1] if i == j else 0.0)
    return out


# --------------------------------------------------------------------------
# full-family MLE
# --------------------------------------------------------------------------


@dataclass
class MLEResult:
    """Outcome of an MLE run; ``status`` is ``"ok"`` or ``"no_mle"``."""

    status: str
    estimate: object = None
    residual: float = None
    iterations: int = 0
    fisher_info: object = None
    reason: str = ""

    @property
    def exists(self):
        return self.status == "ok"

    def to_json(self):
        def plain(v):
            if isinstance(v, np.ndarray):
                return v.tolist()
            if isinstance(v, np.floating):
                return float(v)
            return v

        return {
            "status": self.status,
            "estimate": plain(self.estimate),
            "residual": plain(self.residual),
            "iterations": self.iterations,
            "fisher_info": plain(self.fisher_info),
        }


def _check_sbar(spec, sbar, tol=1e-8):
    sbar = np.asarray(sbar, dtype=float)
    if len(sbar) < spec.width:
        sbar = np.pad(sbar, (0, spec.width - len(sbar)))
    if np.any(np.abs(sbar[spec.width :]) > tol):
        raise DomainError("sample mean has mass on parts larger than n - k + 1")
    sbar = sbar[: spec.width]
    i = np.arange(1, spec.width + 1)
    if abs(sbar.sum() - spec.k) > tol * spec.k or abs(i @ sbar - spec.n) > tol * spec.n:
        raise DomainError("sample mean violates sum s_i = k or sum i s_i = n")
    return sbar


def _objective(spec, sbar, y):
    lx = np.concatenate(([0.0, 0.0], np.log(y)))
    return float(sbar[2:] @ np.log(y) - ZTable(spec, log_x=lx).value().log)


def _eta_g(spec, y):
    lx = np.concatenate(([0.0, 0.0], np.log(y)))
    st = moment_map(spec, log_x=lx, check=False)
    return st.eta, st.g


def mle_full(spec, sbar, algo="newton", tol=1e-10, max_iter=10_000, eps=1e-2, y0=None):
    """MLE of the odds ratios ``y`` in the gauge ``x = (1, 1, y)``.

    Returns ``MLEResult(status="no_mle")`` when ``sbar`` is not interior to the
    Newton polytope.  ``algo="gradient"`` follows ``y += eps * df/dy`` with the
    step halved on a likelihood decrease or a non-positive ``y`` and enlarged
    after accepted steps; ``algo="newton"`` uses ``H_ij = g_{i+2,j+2}/y_j`` and
    falls back to the gradient direction when ``H`` is ill conditioned.
    """
    spec = _as_spec(spec)
    if spec.restricted:
        raise DomainError("MLE is implemented for the unrestricted support")
    if spec.dim < 2:
        raise DomainError("the odds parametrization needs n >= k + 2")
    sbar = _check_sbar(spec, sbar)
    where = polytope_membership(sbar, spec)
    if where != "interior":
        return MLEResult("no_mle", reason=f"sample mean lies on the {where} of the Newton polytope")
    if algo not in ("gradient", "newton"):
        raise DomainError(f"unknown algorithm {algo!r}")
    y = np.ones(spec.dim - 1) if y0 is None else np.asarray(y0, dtype=float).copy()
    f_cur = _objective(spec, sbar, y)
    eta, g = _eta_g(spec, y)
    step = eps
    residual = float(np.max(np.abs(sbar[2:] - eta[2:])))
    for it in range(1, max_iter + 1):
        diff = sbar[2:] - eta[2:]
        if residual < tol:
            return MLEResult("ok", y, residual, it - 1, g[2:, 2:] / np.outer(y, y))
        grad = diff / y
        use_newton = False
        if algo == "newton":
            H = g[2:, 2:] / y[None, :]
            use_newton = np.linalg.cond(H) < 1e12
        if use_newton:
            direction, t = np.linalg.solve(H, diff), 1.0
        else:
            direction, t = grad, step
        # a likelihood change below rounding cannot rank two points; there a
        # step is accepted if the slope along the search line is still uphill
        # at the trial point, or the moment residual drops
        noise = 8 * np.finfo(float).eps * max(1.0, abs(f_cur))
        while True:
            trial = y + t * direction
            if np.all(trial > 0):
                f_new = _objective(spec, sbar, trial)
                if f_new >= f_cur - noise:
                    eta_new, g_new = _eta_g(spec, trial)
                    diff_new = sbar[2:] - eta_new[2:]
                    res_new = float(np.max(np.abs(diff_new)))
                    uphill = float((diff_new / trial) @ direction) >= 0
                    if f_new > f_cur + noise or res_new < residual or uphill:
                        break
            t /= 2
            if t < 1e-300:
                raise ConvergenceError("line search failed", residual, it)
        y, f_cur, eta, g, residual = trial, f_new, eta_new, g_new, res_new
        if not use_newton:
            step = 2 * t
    raise ConvergenceError("MLE iteration limit reached", residual, max_iter)


# --------------------------------------------------------------------------
# curved families
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CurvedModel:
    """One-parameter family of indeterminates.

    ``gfc``: ``x_i = (1-alpha)_{i-1}/i!``, alpha < 1, conditional on k.
    ``dm``: ``x_i = (-alpha)_i/i!``, alpha < 0, mixed over k with weights
    ``[m]_k``; its statistic lives on the partition polytope of n.
    """

    kind: str = "gfc"
    m: int = None

    def __post_init__(self):
        if self.kind not in ("gfc", "dm"):
            raise DomainError(f"unknown curved model {self.kind!r}")
        if self.kind == "dm" and (self.m is None or int(self.m) < 1):
            raise DomainError("the Dirichlet-multinomial model needs an integer m >= 1")

    @property
    def upper(self):
        return 1.0 if self.kind == "gfc" else 0.0

    def log_x(self, alpha, width):
        if alpha >= self.upper:
            raise DomainError(f"alpha must be below {self.upper}")
        if self.kind == "gfc":
            return gfc_log_x(alpha, width)
        i = np.arange(1, width + 1)
        return gammaln(i - alpha) - gammaln(-alpha) - gammaln(i + 1)

    def tangent(self, alpha, width):
        """``d xi^i / d alpha``."""
        j = np.arange(0 if self.kind == "dm" else 1, width)
        terms = 1.0 / (alpha - j)
        out = np.cumsum(terms)
        if self.kind == "gfc":
            return np.concatenate(([0.0], out))
        return out

    def moments(self, spec_or_n, alpha):
        """``(eta, g)`` of the model at ``alpha``."""
        if self.kind == "gfc":
            spec = _as_spec(spec_or_n)
            st = moment_map(spec, log_x=self.log_x(alpha, spec.width), check=False)
            return st.eta, st.g
        n = spec_or_n if isinstance(spec_or_n, int) else _as_spec(spec_or_n).n
        return _dm_moments(n, self.m, self.log_x(alpha, n))


def _dm_moments(n, m, lx):
    """Moments of the size index under the Dirichlet-multinomial mixture over k."""
    kmax = min(m, n)
    # table[j, d] = log Z_{d+j, j}; d = N - j <= n - 1
    table = _build_table(kmax, n - 1, lx)

    def log_mix(N, shift):
        # log sum_k [m]_k Z_{N, k - shift}
        vals = []
        for k in range(max(1, shift), kmax + 1):
            j = k - shift
            d = N - j
            if j < 0 or d < 0 or d > n - 1:
                continue
            if j == 0:
                z = 0.0 if N == 0 else -math.inf
            else:
                z = table[j, d]
            vals.append(gammaln(m + 1) - gammaln(m - k + 1) + z)
        return float(np.logaddexp.reduce(vals)) if vals else -math.inf

    norm = log_mix(n, 0)
    eta = np.array([math.exp(lx[i - 1] + log_mix(n - i, 1) - norm) for i in range(1, n + 1)])
    second = np.zeros((n, n))
    for i in range(1, n):
        for j in range(1, n - i + 1):
            second[i - 1, j - 1] = math.exp(lx[i - 1] + lx[j - 1] + log_mix(n - i - j, 2) - norm)
    g = second - np.outer(eta, eta) + np.diag(eta)
    return eta, g


def _score(model, spec_or_n, sbar, alpha):
    width = len(sbar)
    eta, _ = model.moments(spec_or_n, alpha)
    return float(model.tangent(alpha, width) @ (sbar - eta))


def mle_curved(model, spec, sbar, tol=1e-10, alpha_min=-50.0, grid=400):
    """MLE of alpha: root of ``sum_j dxi^j/dalpha (sbar_j - eta_j(alpha)) = 0``.

    The score is scanned on a grid over ``(alpha_min, upper - 1e-8)`` and
    every downward sign change (a local maximum of the likelihood) is
    polished by Brent's method; the root with the largest likelihood is
    returned.  ``alpha_min = -50`` stands in for minus infinity.
    """
    if model.kind == "gfc":
        spec = _as_spec(spec)
        sbar = _check_sbar(spec, sbar)
        target = spec
    else:
        n = spec if isinstance(spec, int) else _as_spec(spec).n
        sbar = np.asarray(sbar, dtype=float)
        if len(sbar) != n or abs(np.arange(1, n + 1) @ sbar - n) > 1e-8 * n:
            raise DomainError("DM sample mean must have length n and sum i s_i = n")
        target = n
    hi = model.upper - 1e-8
    # grid dense near the upper end where the curve bends fastest
    u = np.linspace(0.0, 1.0, grid)
    alphas = hi - (hi - alpha_min) * u**3
    alphas = np.sort(alphas)
    scores = np.array([_score(model, target, sbar, a) for a in alphas])
    roots = []
    for a0, a1, s0, s1 in zip(alphas[:-1], alphas[1:], scores[:-1], scores[1:]):
        if s0 > 0 >= s1:
            r = brentq(lambda a: _score(model, target, sbar, a), a0, a1, xtol=tol, rtol=1e-14)
            roots.append(r)
    if not roots:
        return MLEResult("no_mle", reason="the score has no admissible downward zero")
    best = max(roots, key=lambda a: _curved_loglik(model, target, sbar, a))
    info = asymptotic_variance(model, target, best)
    return MLEResult("ok", best, abs(_score(model, target, sbar, best)), len(roots), info)


def _curved_loglik(model, target, sbar, alpha):
    width = len(sbar)
    lx = model.log_x(alpha, width)
    if model.kind == "gfc":
        return float(lx @ sbar - ZTable(target, log_x=lx).value().log)
    m = model.m
    # normalizer sum_k [m]_k Z_{n,k} = (-m alpha)_n / n!
    n = target
    log_norm = gammaln(-m * alpha + n) - gammaln(-m * alpha) - gammaln(n + 1)
    return float(lx @ sbar - log_norm)


def mle_exists_cubic(n, sbar):
    """Existence test for the gfc MLE when ``k = n - 3``.

    Returns ``(exists, (c3, c2, c1, c0))``; the estimating equation is
    ``f(alpha) = c3 alpha^3 + c2 alpha^2 + c1 alpha + c0 = 0`` and the MLE
    exists iff ``c3 < 0``.  The vertex ``(n-4, 0, 0, 1)`` is the alpha -> 1
    limit of the curve; the sign test does not apply there and no MLE exists.
    """
    if n < 6:
        raise DomainError("the cubic test needs k = n - 3 >= 3")
    sbar = np.asarray(sbar, dtype=float)
    s3, s4 = sbar[2], sbar[3]
    c3 = -(s3 + 3 * s4) * n**2 + (5 * s3 + 15 * s4 + 4) * n - 2 * (3 * s3 + 9 * s4 + 5)
    c2 = (5 * s3 + 13 * s4) * n**2 - (21 * s3 + 53 * s4 + 24) * n + 4 * (5 * s3 + 12 * s4 + 13)
    c1 = -(7 * s3 + 17 * s4) * n**2 + (19 * s3 + 45 * s4 + 44) * n - 2 * (3 * s3 + 7 * s4 + 35)
    c0 = (3 * s3 + 7 * s4) * n**2 - (3 * s3 + 7 * s4 + 24) * n + 12
    at_vertex = abs(s4 - 1) < 1e-12 and abs(s3) < 1e-12
    return bool(c3 < 0 and not at_vertex), (c3, c2, c1, c0)


def projection_threshold(n):
    """Right-hand side ``2(2n-5)/((n-2)(n-3))`` of the existence condition."""
    return 2 * (2 * n - 5) / ((n - 2) * (n - 3))


def dm_mle_exists(n, m, sbar):
    """``n + n(n-1)/m < sum_i i^2 sbar_i < n^2`` (Dirichlet-multinomial MLE existence).

    The upper bound excludes ``sbar = e_n``, the limit point at alpha -> 0,
    where the likelihood increases all the way to the boundary.
    """
    sbar = np.asarray(sbar, dtype=float)
    i = np.arange(1, len(sbar) + 1)
    second = (i**2) @ sbar
    return bool(n + n * (n - 1) / m < second < n**2 * (1 - 1e-12))


def asymptotic_variance(model, spec, alpha):
    """``g_aa = g_ij dxi^i dxi^j``; ``1/(N g_aa)`` is the MLE's asymptotic variance."""
    if model.kind == "gfc":
        spec = _as_spec(spec)
        width = spec.width
        target = spec
    else:
        target = spec if isinstance(spec, int) else _as_spec(spec).n
        width = target
    _, g = model.moments(target, alpha)
    t = model.tangent(alpha, width)
    return float(t @ g @ t)
