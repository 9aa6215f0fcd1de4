"""Data-free upper bounds on the posterior probability of k components.

With all components alike, the posterior of k is a ratio of two linear
forms in the nonnegative portions ``fdagger``. The ratio is maximized at a
vector with a single nonzero entry (a "spike"), so the bound for a given
k is the largest spike posterior over ``t = 1..min(k, n)``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .coefficients import _log_a, log_binom
from .config import ModelConfig

# stop summing a prior tail once its bounded contribution is this small
TAIL_RTOL = 1e-12
_MAX_TERMS = 10_000_000


def _require_proper(config: ModelConfig):
    prior = config.require_prior()
    if not prior.total_mass < math.inf:
        raise ValueError("prior on k is improper (weights not summable); the posterior of k is improper too")
    return prior


def _log_coef(j: int, h: int, config: ModelConfig) -> float:
    """log( C(j, h) a[j, h] )."""
    return log_binom(j, h) + _log_a(j, h, config)


@functools.lru_cache(maxsize=4096)
def series_terms(h: int, config: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """``(j, log(w(j) C(j, h) a[j, h]))`` for ``j >= h`` over the prior support.

    Infinite-support priors are truncated once
    ``max_coef * tail_mass < TAIL_RTOL * partial_sum``, where every
    coefficient ``C(j, h) a[j, h]`` is at most
    ``Gamma(h*alpha + n) / (Gamma(h*alpha) h! alpha**n)``.
    """
    alpha = config.require_symmetric("series_terms")
    prior = _require_proper(config)
    n = config.n
    support = prior.support_max
    if support is not None:
        js = list(range(h, support + 1))
    else:
        log_cmax = float(gammaln(h * alpha + n) - gammaln(h * alpha) - gammaln(h + 1) - n * math.log(alpha))
        J = max(h, len(prior.values)) + 1
        while True:
            js = list(range(h, J + 1))
            logs = [math.log(w) + _log_coef(j, h, config) for j in js if (w := prior.weight(j)) > 0]
            part = float(logsumexp(logs)) if logs else -math.inf
            tail = prior.tail_mass(J)
            if tail == 0 or log_cmax + math.log(tail) < math.log(TAIL_RTOL) + part:
                break
            if J > _MAX_TERMS:
                raise RuntimeError("prior tail too heavy to truncate")
            J *= 2
    js_arr = []
    logs = []
    for j in js:
        w = prior.weight(j)
        if w > 0:
            js_arr.append(j)
            logs.append(math.log(w) + _log_coef(j, h, config))
    return np.array(js_arr, dtype=int), np.array(logs)


def log_series(h: int, config: ModelConfig) -> float:
    """``log sum_{j >= h} w(j) C(j, h) a[j, h]`` (unnormalized prior weights)."""
    _, logs = series_terms(h, config)
    return float(logsumexp(logs)) if len(logs) else -math.inf


def _support_size(config: ModelConfig, k_support: int | None) -> int:
    prior = config.require_prior()
    if prior.support_max is not None:
        if k_support is not None and k_support < prior.support_max:
            raise ValueError(f"k_support={k_support} does not cover the prior support 1..{prior.support_max}")
        return k_support or prior.support_max
    if k_support is None:
        raise ValueError("infinite-support prior: pass k_support for the returned window")
    return k_support


def spike_posterior(t: int, config: ModelConfig, k_support: int | None = None) -> np.ndarray:
    """Posterior of k when only ``fdagger[t]`` is nonzero.

    ``pi(k | x)`` is proportional to ``w(k) C(k, t) a[k, t]`` for ``k >= t``.
    Entry ``k - 1`` of the result holds ``pi(k | x)`` for
    ``k = 1..k_support``; the normalizer includes the whole (possibly
    truncated) prior tail.
    """
    config.require_symmetric("spike_posterior")
    if not 1 <= t <= config.n:
        raise ValueError(f"spike index must be in 1..n={config.n}, got {t}")
    K = _support_size(config, k_support)
    js, logs = series_terms(t, config)
    norm = logsumexp(logs)
    out = np.zeros(K)
    keep = js <= K
    out[js[keep] - 1] = np.exp(logs[keep] - norm)
    return out


@dataclass(frozen=True)
class BoundResult:
    k: int
    bound: float
    argmax_spike: int
    spike_posterior: np.ndarray = field(repr=False)


def _log_ratio(k: int, t: int, config: ModelConfig) -> float:
    w = config.k_prior.weight(k)
    if w == 0 or t > k:
        return -math.inf
    return math.log(w) + _log_coef(k, t, config) - log_series(t, config)


def posterior_upper_bound(k: int, config: ModelConfig) -> BoundResult:
    """Largest possible ``pi(k | x)`` over all data sets of size n.

    Ties between spikes go to the smaller spike index.
    """
    config.require_symmetric("posterior_upper_bound")
    _require_proper(config)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    best_t, best = 1, -math.inf
    for t in range(1, min(k, config.n) + 1):
        v = _log_ratio(k, t, config)
        if v > best:
            best_t, best = t, v
    prior = config.k_prior
    K = prior.support_max if prior.support_max is not None else max(k, len(prior.values))
    return BoundResult(k, math.exp(best), best_t, spike_posterior(best_t, config, max(K, k)))


def posterior_k(fdagger: Sequence[float], config: ModelConfig, k_support: int | None = None) -> np.ndarray:
    """Posterior of k implied by nonnegative ``fdagger[1..n]``.

    ``pi(k | x) = sum_h fdagger[h] d_h(k) / sum_h fdagger[h] b_h`` with
    ``d_h(k) = w(k) C(k, h) a[k, h]`` and ``b_h`` the full series.
    """
    config.require_symmetric("posterior_k")
    fd = np.asarray(fdagger, dtype=float)
    if len(fd) > config.n or np.any(fd < 0) or not np.any(fd > 0):
        raise ValueError("fdagger must be nonnegative, not all zero, with at most n entries")
    K = _support_size(config, k_support)
    prior = config.k_prior
    den = math.fsum(fd[h - 1] * math.exp(log_series(h, config)) for h in range(1, len(fd) + 1) if fd[h - 1] > 0)
    out = np.zeros(K)
    for k in range(1, K + 1):
        w = prior.weight(k)
        if w == 0:
            continue
        num = math.fsum(
            fd[h - 1] * math.exp(math.log(w) + _log_coef(k, h, config))
            for h in range(1, min(k, len(fd)) + 1)
            if fd[h - 1] > 0
        )
        out[k - 1] = num / den
    return out


@dataclass
class BoundsTable:
    n_list: list[int]
    k_list: list[int]
    values: np.ndarray
    argmax: np.ndarray
    errors: dict[tuple[int, int], str] = field(default_factory=dict)


def bounds_table(n_list: Sequence[int], k_list: Sequence[int], config_base: ModelConfig) -> BoundsTable:
    """Bounds for every ``(n, k)`` cell; failed cells hold NaN and an error message."""
    n_list = [int(n) for n in n_list]
    k_list = [int(k) for k in k_list]
    values = np.full((len(n_list), len(k_list)), np.nan)
    argmax = np.zeros((len(n_list), len(k_list)), dtype=int)
    errors = {}
    for i, n in enumerate(n_list):
        for j, k in enumerate(k_list):
            try:
                cfg = ModelConfig(n, config_base.alpha, config_base.k_prior)
                res = posterior_upper_bound(k, cfg)
            except (ValueError, RuntimeError) as exc:
                errors[(n, k)] = str(exc)
                continue
            values[i, j] = res.bound
            argmax[i, j] = res.argmax_spike
    return BoundsTable(n_list, k_list, values, argmax, errors)
