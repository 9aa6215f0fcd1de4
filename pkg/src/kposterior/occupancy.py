"""Prior and posterior of the number h of nonempty components.

With all components alike, the prior probability that a k-component
allocation fills exactly h components is::

    f(h | k) = Gamma(k a) / Gamma(k a + n) * C(k, h) * S_h

where ``S_h`` sums over the partitions of n into h parts and does not
depend on k. Writing ``w_v = Gamma(a + v) / (Gamma(a) v!)``::

    S_h = n! h! sum over partitions (prod_v w_v**m_v / m_v!)

with ``m_v`` the multiplicity of part v. This equals ``n! [z^n] W(z)**h``
for ``W(z) = sum_v w_v z**v``, which gives an independent convolution
route.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Iterator, Literal, Sequence

import numpy as np
from scipy.special import gammaln

from .bounds import _require_proper, log_series, series_terms
from .config import ModelConfig

Method = Literal["enumerate", "convolution", "monte_carlo"]
# beyond this n the partition count makes enumeration impractical
ENUMERATION_N_MAX = 120


def partitions_h_parts(n: int, h: int) -> Iterator[tuple[int, ...]]:
    """Partitions of n into exactly h parts, each as a nondecreasing tuple."""
    if not 1 <= h <= n:
        raise ValueError(f"need 1 <= h <= n, got h={h}, n={n}")

    def rec(rem: int, parts: int, lo: int):
        if parts == 1:
            yield (rem,)
            return
        for v in range(lo, rem // parts + 1):
            for tail in rec(rem - v, parts - 1, v):
                yield (v,) + tail

    yield from rec(n, h, 1)


@dataclass(frozen=True)
class PartitionSums:
    """``log S_h`` for ``h = 1..n`` (index ``h - 1``)."""

    n: int
    alpha: float
    log_S: np.ndarray
    method: str
    partitions_visited: int | None = None


def _log_weights(n: int, alpha: float) -> np.ndarray:
    v = np.arange(1, n + 1, dtype=float)
    return gammaln(alpha + v) - gammaln(alpha) - gammaln(v + 1)


def _enumerate_sums(n: int, alpha: float) -> PartitionSums:
    lw = _log_weights(n, alpha)
    # rescale w_v by c**v so every weight is at most 1; the shift is n*log(c) overall
    shift = float(np.max(lw / np.arange(1, n + 1)))
    w = np.exp(lw - shift * np.arange(1, n + 1))
    # coef[v][m] = w_v**m / m!
    coef = [None] + [[w[v - 1] ** m / math.factorial(m) for m in range(n // v + 1)] for v in range(1, n + 1)]
    acc = [0.0] * (n + 1)
    count = 0
    c1, c2 = coef[1], coef[2] if n >= 2 else None

    def rec(rem: int, v: int, h: int, prod: float):
        nonlocal count
        if rem == 0:
            acc[h] += prod
            count += 1
            return
        if v == 1:
            acc[h + rem] += prod * c1[rem]
            count += 1
            return
        if v == 2:
            for m2 in range(rem // 2 + 1):
                r1 = rem - 2 * m2
                acc[h + m2 + r1] += prod * c2[m2] * c1[r1]
            count += rem // 2 + 1
            return
        cv = coef[v]
        for m in range(rem // v, -1, -1):
            r = rem - m * v
            rec(r, min(v - 1, r), h + m, prod * cv[m])

    rec(n, n, 0, 1.0)
    with np.errstate(divide="ignore"):
        a = np.log(np.array(acc[1:]))
    h = np.arange(1, n + 1)
    log_S = gammaln(n + 1) + gammaln(h + 1) + n * shift + a
    return PartitionSums(n, alpha, log_S, "enumerate", count)


def _convolution_sums(n: int, alpha: float) -> PartitionSums:
    lw = _log_weights(n, alpha)
    shift = float(np.max(lw / np.arange(1, n + 1)))
    # P[m] holds [z^m] W'(z)**h with W' the rescaled series; index 0 is z^0
    W = np.concatenate([[0.0], np.exp(lw - shift * np.arange(1, n + 1))])
    P = W.copy()
    log_S = np.empty(n)
    log_scale = 0.0
    for h in range(1, n + 1):
        if h > 1:
            P = np.convolve(P, W)[: n + 1]
            top = P.max()
            P /= top
            log_scale += math.log(top)
        log_S[h - 1] = math.log(P[n]) + log_scale if P[n] > 0 else -math.inf
    log_S += gammaln(n + 1) + n * shift
    return PartitionSums(n, alpha, log_S, "convolution")


_cache: dict[tuple[int, float, str], PartitionSums] = {}
_cache_lock = threading.Lock()


def partition_sums(n: int, alpha: float, method: str = "enumerate") -> PartitionSums:
    """``S_h`` for all h, cached per ``(n, alpha, method)``."""
    if method not in ("enumerate", "convolution"):
        raise ValueError(f"unknown partition-sum method {method!r}")
    key = (int(n), float(alpha), method)
    with _cache_lock:
        hit = _cache.get(key)
    if hit is not None:
        return hit
    if method == "enumerate":
        if n > ENUMERATION_N_MAX:
            raise ValueError(
                f"n={n} > {ENUMERATION_N_MAX}: too many partitions to enumerate; "
                "use method='monte_carlo' (or 'convolution')"
            )
        res = _enumerate_sums(int(n), float(alpha))
    else:
        res = _convolution_sums(int(n), float(alpha))
    with _cache_lock:
        return _cache.setdefault(key, res)


def clear_cache():
    with _cache_lock:
        _cache.clear()


def _log_prior_h_given_k(h: int, k: int, alpha: float, n: int, log_S: np.ndarray) -> float:
    if h > min(k, n):
        return -math.inf
    return float(gammaln(k * alpha) - gammaln(k * alpha + n) + math.log(math.comb(k, h)) + log_S[h - 1])


def prior_h_given_k(h: int, k: int, config: ModelConfig, method: str = "enumerate") -> float:
    """Prior probability that a k-component allocation of n items fills exactly h components."""
    alpha = config.require_symmetric("prior_h_given_k")
    n = config.n
    if not 1 <= h <= min(k, n):
        raise ValueError(f"need 1 <= h <= min(k, n) = {min(k, n)}, got h={h}")
    S = partition_sums(n, alpha, method)
    return math.exp(_log_prior_h_given_k(h, k, alpha, n, S.log_S))


@dataclass
class OccupancyDistribution:
    """Values indexed by ``h = 1..n`` (array index ``h - 1``)."""

    kind: Literal["prior_given_k", "prior", "posterior", "marginal_likelihood_h"]
    values: np.ndarray
    config: ModelConfig
    notices: list[str] = field(default_factory=list)

    @property
    def h(self) -> np.ndarray:
        return np.arange(1, len(self.values) + 1)

    def mode(self) -> int:
        return int(np.nanargmax(self.values)) + 1


def prior_h_given_k_dist(k: int, config: ModelConfig, method: str = "enumerate") -> OccupancyDistribution:
    alpha = config.require_symmetric("prior_h_given_k_dist")
    n = config.n
    S = partition_sums(n, alpha, method)
    vals = np.array([math.exp(_log_prior_h_given_k(h, k, alpha, n, S.log_S)) for h in range(1, n + 1)])
    return OccupancyDistribution("prior_given_k", vals, config)


def _prior_k_terms(config: ModelConfig, rtol: float = 1e-13) -> tuple[list[int], list[float]]:
    """Normalized prior weights over a support truncated so the dropped mass is below rtol."""
    prior = _require_proper(config)
    total = prior.total_mass
    if prior.support_max is not None:
        ks = list(range(1, prior.support_max + 1))
    else:
        J = len(prior.values)
        while prior.tail_mass(J) > rtol * total:
            J *= 2
        ks = list(range(1, J + 1))
    return ks, [prior.weight(k) / total for k in ks]


def prior_h(
    config: ModelConfig,
    method: Method = "enumerate",
    *,
    seed: int | None = None,
    draws: int | None = None,
) -> OccupancyDistribution:
    """``f(h) = sum_k pi(k) f(h | k)``.

    ``method='monte_carlo'`` simulates allocations, stratified over k, and
    needs an explicit ``seed`` and ``draws``.
    """
    alpha = config.require_symmetric("prior_h")
    n = config.n
    ks, ws = _prior_k_terms(config)
    if method == "monte_carlo":
        if seed is None or draws is None:
            raise ValueError("monte_carlo needs an explicit seed and draw count")
        vals = _monte_carlo_prior_h(n, alpha, ks, ws, int(draws), seed)
        return OccupancyDistribution("prior", vals, config, [f"Monte Carlo estimate: {draws} draws, seed {seed}"])
    S = partition_sums(n, alpha, method)
    total = _require_proper(config).total_mass
    vals = np.zeros(n)
    for h in range(1, n + 1):
        # each h gets its own k range: for large h nearly all mass sits in the prior tail
        hk = series_terms(h, config)[0] if config.k_prior.support_max is None else [k for k in ks if k >= h]
        terms = [config.k_prior.weight(k) / total * math.exp(_log_prior_h_given_k(h, k, alpha, n, S.log_S))
                 for k in hk if config.k_prior.weight(k) > 0]
        vals[h - 1] = math.fsum(terms)
    return OccupancyDistribution("prior", vals, config)


def prior_h_factored(config: ModelConfig, method: str = "enumerate") -> OccupancyDistribution:
    """``f(h) = S_h Gamma(h a) / Gamma(h a + n) b_h`` with ``b_h`` the normalized prior series."""
    alpha = config.require_symmetric("prior_h_factored")
    n = config.n
    S = partition_sums(n, alpha, method)
    log_total = math.log(_require_proper(config).total_mass)
    vals = np.array(
        [
            math.exp(S.log_S[h - 1] + gammaln(h * alpha) - gammaln(h * alpha + n) + log_series(h, config) - log_total)
            for h in range(1, n + 1)
        ]
    )
    return OccupancyDistribution("prior", vals, config)


def _monte_carlo_prior_h(n, alpha, ks, ws, draws, seed) -> np.ndarray:
    rng = np.random.default_rng(seed)
    out = np.zeros(n)
    for k, w in zip(ks, ws):
        m = max(int(round(draws * w)), 1) if w > 0 else 0
        if m == 0:
            continue
        counts = np.zeros((m, k))
        rows = np.arange(m)
        # Polya urn: sequential draws reproduce the Dirichlet-multinomial allocation prior
        for i in range(n):
            p = (counts + alpha) / (k * alpha + i)
            u = rng.random(m)[:, None]
            j = np.minimum((np.cumsum(p, axis=1) < u).sum(axis=1), k - 1)
            counts[rows, j] += 1
        occ = (counts > 0).sum(axis=1)
        out += w * np.bincount(occ, minlength=n + 1)[1:] / m
    return out / out.sum()


def _fdagger_array(fdagger: Sequence[float], n: int) -> np.ndarray:
    fd = np.asarray(fdagger, dtype=float)
    if fd.ndim != 1 or len(fd) > n:
        raise ValueError(f"fdagger must be a vector of at most n={n} entries")
    if np.any(fd < 0) or np.any(np.isnan(fd)):
        raise ValueError("fdagger entries must be nonnegative (correct the estimates first)")
    if not np.any(fd > 0):
        raise ValueError("fdagger must have a positive entry")
    return np.concatenate([fd, np.zeros(n - len(fd))])


def posterior_h(fdagger: Sequence[float], config: ModelConfig) -> OccupancyDistribution:
    """``f(h | x)`` proportional to ``fdagger[h] * sum_{k >= h} pi(k) C(k, h) a[k, h]``."""
    config.require_symmetric("posterior_h")
    n = config.n
    fd = _fdagger_array(fdagger, n)
    logs = np.full(n, -np.inf)
    for h in range(1, n + 1):
        if fd[h - 1] > 0:
            logs[h - 1] = math.log(fd[h - 1]) + log_series(h, config)
    if not np.any(np.isfinite(logs)):
        raise ValueError("posterior of h has no mass: prior puts no weight on k >= h where fdagger > 0")
    vals = np.exp(logs - logs.max())
    return OccupancyDistribution("posterior", vals / vals.sum(), config)


def marginal_likelihood_h(
    fdagger: Sequence[float], config: ModelConfig, method: str = "enumerate", prior: OccupancyDistribution | None = None
) -> OccupancyDistribution:
    """``f(x | h)`` proportional to ``f(h | x) / f(h)``, normalized to sum 1.

    Values of h with ``f(h) = 0`` are set to NaN and listed in a notice.
    """
    post = posterior_h(fdagger, config)
    if prior is None:
        prior = prior_h(config, method)
    fh = prior.values
    excluded = [h for h in range(1, config.n + 1) if not fh[h - 1] > 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(fh > 0, post.values / np.where(fh > 0, fh, 1.0), np.nan)
    vals = vals / np.nansum(vals)
    notices = [f"f(h) = 0 at h={excluded}; excluded"] if excluded else []
    return OccupancyDistribution("marginal_likelihood_h", vals, config, notices)
