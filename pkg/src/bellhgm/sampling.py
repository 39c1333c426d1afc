"""Exact sequential sampling, Markov-basis MCMC and similar tests.

The exact sampler draws block sizes one at a time.  With ``n'`` items and
``k'`` blocks left, size ``j`` is drawn with probability

    x_j Z_{n'-j,k'-1}(x) / (k' Z_{n',k'}(x)),

which sums to one by ``sum_j theta_j Z = k Z``.  The product of these along an
ordered draw is ``prod x_j / (k! Z)``; there are ``k!/prod s_i!`` orderings of
a size index ``s``, so the induced law is exactly ``q(s) = x^s/(s! Z)``.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DomainError, NumericError
from .inference import AHypDistribution, _check_size_index

__all__ = [
    "MarkovMove",
    "TestReport",
    "sample_exact",
    "exact_sampler_law",
    "markov_basis",
    "mh_ratio",
    "mcmc_step",
    "mcmc_sample",
    "initial_state",
    "transition_matrix",
    "stationary_distribution",
    "fiber_components",
    "similar_test",
    "write_jsonl",
]

SUM_TOL = 1e-8
# relative tolerance under which two probabilities count as tied
TIE_TOL = 1e-12


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# --------------------------------------------------------------------------
# exact sampler
# --------------------------------------------------------------------------


def _step_log_probs(table, remaining, kk):
    """``log P(size j)`` for each state in ``remaining`` with ``kk`` blocks left."""
    T, lx = table.table, table.log_x
    j = np.arange(1, table.dim + 2)
    d = remaining - kk
    col = d[:, None] - j[None, :] + 1
    valid = col >= 0
    gathered = T[kk - 1][np.where(valid, col, 0)]
    with np.errstate(invalid="ignore"):
        logp = np.where(valid, lx[None, :] + gathered, -np.inf)
    return logp - math.log(kk) - T[kk, d][:, None]


def sample_exact(dist, rng=None, size=None):
    """Draw size indices from ``q_{n,k}(.; x)`` exactly.

    Returns one size index, or an ``(size, n-k+1)`` integer array.  ``rng``
    is a seed or a ``numpy.random.Generator``.
    """
    if not isinstance(dist, AHypDistribution):
        raise TypeError("expected an AHypDistribution")
    rng = _rng(rng)
    table = dist.table
    if not np.isfinite(dist.log_z):
        raise DomainError("Z vanishes: the support is empty")
    count = 1 if size is None else int(size)
    remaining = np.full(count, table.n)
    out = np.zeros((count, dist.spec.width), dtype=int)
    rows = np.arange(count)
    for kk in range(table.k, 0, -1):
        p = np.exp(_step_log_probs(table, remaining, kk))
        total = p.sum(axis=1)
        if np.any(np.abs(total - 1) > SUM_TOL):
            worst = float(np.max(np.abs(total - 1)))
            raise NumericError(f"sequential probabilities sum to 1 only within {worst:.3g}")
        u = rng.random(count) * total
        choice = (np.cumsum(p, axis=1) < u[:, None]).sum(axis=1)
        choice = np.minimum(choice, p.shape[1] - 1)
        out[rows, choice + table.shift] += 1
        remaining = remaining - (choice + 1)
    return out[0] if size is None else out


def exact_sampler_law(dist):
    """Probability the exact sampler assigns to each support point, computed analytically.

    Sums the telescoping product of the step probabilities over every
    ordering of the blocks, i.e. ``k!/prod s_i! * prod_l p_l`` with the
    blocks taken in decreasing size.  Agrees with ``q`` up to rounding.
    """
    table = dist.table
    support = dist.support()
    law = []
    for s in support:
        remaining, logp = table.n, 0.0
        sizes = [j for j in range(len(s), 0, -1) for _ in range(s[j - 1])]
        for kk, j in zip(range(table.k, 0, -1), sizes):
            jj = j - table.shift
            logp += _step_log_probs(table, np.array([remaining]), kk)[0, jj - 1]
            remaining -= jj
        logp += gammaln(table.k + 1) - gammaln(np.asarray(s) + 1).sum()
        law.append(math.exp(logp))
    return support, np.array(law)


# --------------------------------------------------------------------------
# Markov basis and Metropolis-Hastings
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MarkovMove:
    """``z = e_{i1} + e_{i4} - e_{i1+1} - e_{i4-1}`` (1-based sizes)."""

    i1: int
    i4: int
    width: int

    def __post_init__(self):
        if not (1 <= self.i1 and self.i1 + 2 <= self.i4 <= self.width):
            raise DomainError(f"invalid move indices ({self.i1}, {self.i4})")

    @property
    def vector(self):
        z = np.zeros(self.width, dtype=int)
        z[self.i1 - 1] += 1
        z[self.i4 - 1] += 1
        z[self.i1] -= 1
        z[self.i4 - 2] -= 1
        return z


def markov_basis(spec):
    """All moves with ``1 <= i1``, ``i1 + 2 <= i4 <= n - k + 1``."""
    from .partitions import _as_spec

    spec = _as_spec(spec)
    m = spec.width
    return [MarkovMove(i1, i4, m) for i1 in range(1, m + 1) for i4 in range(i1 + 2, m + 1)]


def mh_ratio(dist, s, move, eps):
    """``q(s + eps z)/q(s)``; zero when the move leaves the support.

    Computed from the log-pmf difference, so the case ``i4 = i1 + 2`` (where
    ``z`` removes two blocks of one size) gets ``s(s-1)`` rather than ``s^2``.
    """
    s = np.asarray(s, dtype=int)
    z = eps * move.vector
    new = s + z
    if np.any(new < 0):
        return 0.0
    changed = z != 0
    lx = dist.log_x[changed]
    if np.any(np.isneginf(lx) & (new[changed] > 0)):
        return 0.0
    with np.errstate(invalid="ignore"):
        xi_part = float(np.where(z[changed] != 0, lx * z[changed], 0.0).sum())
    fact = float(gammaln(s[changed] + 1).sum() - gammaln(new[changed] + 1).sum())
    return math.exp(xi_part + fact)


def mcmc_step(s, move, eps, dist, rng):
    """One Metropolis-Hastings update of ``s`` along ``eps * move``."""
    ratio = mh_ratio(dist, s, move, eps)
    if ratio >= 1 or (ratio > 0 and _rng(rng).random() < ratio):
        return np.asarray(s, dtype=int) + eps * move.vector
    return np.asarray(s, dtype=int).copy()


def initial_state(spec):
    """``(k-1) e_1 + e_{n-k+1}``, a point of every unrestricted fiber."""
    from .partitions import _as_spec

    spec = _as_spec(spec)
    s = np.zeros(spec.width, dtype=int)
    s[0] += spec.k - 1
    s[spec.width - 1] += 1
    return s


def mcmc_sample(dist, size, rng=None, burn_in=1000, thin=1, start=None):
    """``size`` states of the Markov-basis chain (uniform proposal over moves and signs)."""
    rng = _rng(rng)
    basis = markov_basis(dist.spec)
    s = initial_state(dist.spec) if start is None else _check_size_index(dist.spec, start)
    out = np.zeros((int(size), dist.spec.width), dtype=int)
    if not basis:
        out[:] = s
        return out
    vectors = [m.vector for m in basis]
    total = burn_in + int(size) * int(thin)
    picks = rng.integers(0, 2 * len(basis), size=total)
    uniforms = rng.random(total)
    kept = 0
    for it in range(total):
        idx = picks[it]
        move, eps = basis[idx // 2], 1 if idx % 2 == 0 else -1
        ratio = mh_ratio(dist, s, move, eps)
        if ratio >= 1 or uniforms[it] < ratio:
            s = s + eps * vectors[idx // 2]
        if it >= burn_in and (it - burn_in) % thin == thin - 1:
            out[kept] = s
            kept += 1
    return out


def transition_matrix(dist, support=None):
    """``(support, P)`` for the chain on the enumerated fiber."""
    support = dist.support() if support is None else support
    index = {tuple(s): r for r, s in enumerate(support)}
    basis = markov_basis(dist.spec)
    P = np.zeros((len(support), len(support)))
    if not basis:
        return support, np.eye(len(support))
    w = 1.0 / (2 * len(basis))
    for r, s in enumerate(support):
        arr = np.asarray(s)
        for move in basis:
            for eps in (1, -1):
                ratio = mh_ratio(dist, arr, move, eps)
                if ratio > 0:
                    c = index[tuple(arr + eps * move.vector)]
                    P[r, c] += w * min(1.0, ratio)
        P[r, r] += 1.0 - P[r].sum()
    return support, P


def stationary_distribution(P, tol=1e-14, max_squarings=64):
    """Stationary law by power iteration with repeated squaring of ``P``.

    Rows are renormalized after every squaring; iteration stops when all rows
    agree to ``tol`` (after at most ``2^64`` steps of the chain).
    """
    Pk = np.asarray(P, dtype=float)
    for _ in range(max_squarings):
        Pk = Pk @ Pk
        Pk /= Pk.sum(axis=1, keepdims=True)
        if np.max(Pk.max(axis=0) - Pk.min(axis=0)) < tol:
            break
    else:
        raise NumericError("power iteration did not settle")
    pi = Pk.mean(axis=0)
    return pi / pi.sum()


def fiber_components(spec, support=None):
    """Number of connected components of the fiber under the Markov basis."""
    from .partitions import enumerate_support

    support = enumerate_support(spec) if support is None else support
    if not support:
        return 0
    vectors = [m.vector for m in markov_basis(spec)]
    members = {tuple(s) for s in support}
    seen, components = set(), 0
    for s in members:
        if s in seen:
            continue
        components += 1
        queue = deque([s])
        seen.add(s)
        while queue:
            cur = np.asarray(queue.popleft())
            for z in vectors:
                for nb in (cur + z, cur - z):
                    key = tuple(int(v) for v in nb)
                    if key in members and key not in seen:
                        seen.add(key)
                        queue.append(key)
    return components


# --------------------------------------------------------------------------
# similar test
# --------------------------------------------------------------------------


@dataclass
class TestReport:
    """Significance ``P(q(S) < q(s_obs))`` of an observed size index."""

    __test__ = False  # not a pytest class

    statistic: float
    significance: float
    std_error: float
    sampler: str
    samples: int
    seed: object

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True)


def _log_pmf_rows(dist, states):
    states = np.asarray(states)
    with np.errstate(invalid="ignore"):
        xi = np.where(states > 0, states * dist.log_x[None, :], 0.0).sum(axis=1)
    return xi - gammaln(states + 1).sum(axis=1) - dist.log_z


def similar_test(dist0, s_obs, M=10_000, sampler="exact", seed=0, burn_in=1000, thin=1):
    """Similar test of ``x = x0`` with ``q(.; x0)`` as the statistic.

    ``sampler`` is ``"exact"``, ``"mcmc"`` or ``"enumerate"``; the last sums
    over the support and has no Monte-Carlo error.  Ties (relative
    difference below ``TIE_TOL``) do not count as smaller.
    """
    s_obs = _check_size_index(dist0.spec, s_obs)
    stat = float(_log_pmf_rows(dist0, s_obs[None, :])[0])
    cut = stat + math.log1p(-TIE_TOL)
    if sampler == "enumerate":
        support = np.asarray(dist0.support())
        logq = _log_pmf_rows(dist0, support)
        p = float(np.exp(logq[logq < cut]).sum()) if np.any(logq < cut) else 0.0
        return TestReport(stat, min(1.0, p), 0.0, sampler, len(support), None)
    if sampler == "exact":
        draws = sample_exact(dist0, seed, size=M)
    elif sampler == "mcmc":
        draws = mcmc_sample(dist0, M, seed, burn_in=burn_in, thin=thin)
    else:
        raise DomainError(f"unknown sampler {sampler!r}")
    p = float(np.mean(_log_pmf_rows(dist0, draws) < cut))
    return TestReport(stat, p, math.sqrt(p * (1 - p) / M), sampler, int(M), seed)


def write_jsonl(states, fh):
    """One JSON array per line."""
    for s in np.asarray(states):
        fh.write(json.dumps([int(v) for v in s]) + "\n")
