"""Linking coefficients between marginal likelihoods of nested mixtures.

``a[k, t]`` is the constant ratio ``f(g | k) / f(g | t)`` of allocation
prior masses for any membership vector that uses only components
``1..t``::

    a[k, t] = Gamma(A_k) / Gamma(A_k + n) * Gamma(A_t + n) / Gamma(A_t)

with ``A_k`` the total Dirichlet mass of the k-component model. The
binomially weighted ``b[k, t] = C(k, t) a[k, t]`` form a unit lower
triangular matrix ``B`` whose inverse ``C`` is obtained by flipping the
sign of entries with odd ``k + t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaln

from .config import ModelConfig
from .signedlog import ONE, ZERO, SignedLogValue

# ratio products are summed term by term below this n, log-gamma above
_DIRECT_N_MAX = 5000
# linear-domain products are kept for tables when n is at most this
_LINEAR_N_MAX = 1000


def log_binom(k: int, t: int) -> float:
    if t < 0 or t > k:
        return -math.inf
    return math.log(math.comb(k, t))


def _log_rising_ratio(x_num: float, x_den: float, n: int) -> float:
    """log( Gamma(x_num + n) Gamma(x_den) / (Gamma(x_num) Gamma(x_den + n)) )."""
    if x_num == x_den:
        return 0.0
    if n <= _DIRECT_N_MAX:
        i = np.arange(n, dtype=float)
        return math.fsum(np.log1p((x_num - x_den) / (x_den + i)))
    return float(gammaln(x_num + n) - gammaln(x_num) - gammaln(x_den + n) + gammaln(x_den))


def _log_a(k: int, t: int, config: ModelConfig) -> float:
    if t < 1 or k < 1:
        raise ValueError(f"component counts must be >= 1, got k={k}, t={t}")
    if t > k:
        raise ValueError(f"a_kt needs t <= k, got k={k}, t={t}")
    if t == k:
        return 0.0
    return _log_rising_ratio(config.alpha0(t), config.alpha0(k), config.n)


def _linear_a(k: int, t: int, config: ModelConfig, log_value: float) -> float:
    """``a[k, t]`` as a plain product of ratios, or NaN when that could underflow."""
    n = config.n
    if n > _LINEAR_N_MAX or log_value < -700:
        return math.nan
    if t == k:
        return 1.0
    i = np.arange(n, dtype=float)
    # factors are all < 1, so partial products never fall below the result
    return float(np.prod((config.alpha0(t) + i) / (config.alpha0(k) + i)))


def log_a(k: int, t: int, config: ModelConfig) -> SignedLogValue:
    """Linking coefficient ``a[k, t]`` as a (positive) signed-log value."""
    if t == k and k >= 1:
        return ONE
    return SignedLogValue(1, _log_a(k, t, config))


def log_b(k: int, t: int, config: ModelConfig) -> SignedLogValue:
    return SignedLogValue(1, _log_a(k, t, config) + log_binom(k, t))


@dataclass(frozen=True)
class CoeffTables:
    """Lower triangular tables of ``log a[k, t]`` and ``log b[k, t]``.

    Arrays are 0-based (``log_a[k-1, t-1]``) and hold ``-inf`` above the
    diagonal. ``lin_a`` holds the same coefficients as directly computed
    products where those are representable (NaN elsewhere); the dense
    matrices use them because exponentiating a rounded log loses accuracy.
    """

    n: int
    alpha: float | tuple[float, ...]
    log_a: np.ndarray
    log_b: np.ndarray
    lin_a: np.ndarray

    @property
    def K(self) -> int:
        return self.log_a.shape[0]

    def a(self, k: int, t: int) -> SignedLogValue:
        self._check(k, t)
        return SignedLogValue(1, float(self.log_a[k - 1, t - 1])) if t <= k else ZERO

    def b(self, k: int, t: int) -> SignedLogValue:
        self._check(k, t)
        return SignedLogValue(1, float(self.log_b[k - 1, t - 1])) if t <= k else ZERO

    def c(self, k: int, t: int) -> SignedLogValue:
        """Entry of ``C = B^{-1}``: ``(-1)**(k+t) b[k, t]``."""
        v = self.b(k, t)
        return -v if (k + t) % 2 else v

    def a_matrix(self) -> np.ndarray:
        return np.where(np.isnan(self.lin_a), np.exp(self.log_a), self.lin_a)

    def b_matrix(self) -> np.ndarray:
        K = self.K
        binom = np.array([[math.comb(k, t) for t in range(1, K + 1)] for k in range(1, K + 1)], dtype=float)
        lin = binom * self.lin_a
        return np.where(np.isnan(lin) | np.isinf(lin), np.exp(self.log_b), lin)

    def c_matrix(self) -> np.ndarray:
        K = self.K
        k, t = np.indices((K, K))
        sign = np.where((k + t) % 2 == 0, 1.0, -1.0)
        return sign * self.b_matrix()

    def _check(self, k, t):
        if not (1 <= k <= self.K and 1 <= t <= self.K):
            raise IndexError(f"({k}, {t}) outside tables of size {self.K}")


def build_tables(K: int, config: ModelConfig) -> CoeffTables:
    """Fill ``a`` and ``b`` for all ``1 <= t <= k <= K``."""
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    la = np.full((K, K), -np.inf)
    lb = np.full((K, K), -np.inf)
    lin = np.zeros((K, K))
    for k in range(1, K + 1):
        for t in range(1, k + 1):
            v = _log_a(k, t, config)
            lin[k - 1, t - 1] = _linear_a(k, t, config, v)
            la[k - 1, t - 1] = v
            lb[k - 1, t - 1] = v + log_binom(k, t)
    for arr in (la, lb, lin):
        arr.setflags(write=False)
    return CoeffTables(config.n, config.alpha, la, lb, lin)


def inverse_row(k: int, tables: CoeffTables) -> list[SignedLogValue]:
    """Row ``k`` of ``C = B^{-1}``, entries for ``t = 1..k``."""
    if not 1 <= k <= tables.K:
        raise IndexError(f"row {k} outside tables of size {tables.K}")
    return [tables.c(k, t) for t in range(1, k + 1)]


class Verdict(str, Enum):
    CONVERGENT = "CONVERGENT"
    DIVERGENT = "DIVERGENT"
    INCONCLUSIVE = "INCONCLUSIVE"


@dataclass(frozen=True)
class PropernessReport:
    """Terms ``c_j`` of the normalizing series for ``j = n..j_max``.

    ``lower[i] <= terms[i] <= upper[i]`` are the comparison brackets
    ``w(j) / (n*alpha + n - 1)**n`` and ``w(j) / alpha**n``.
    """

    j: np.ndarray
    terms: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    partial_sums: np.ndarray
    verdict: Verdict
    reason: str

    def brackets_hold(self, strict: bool = True) -> np.ndarray:
        if strict:
            return (self.lower < self.terms) & (self.terms < self.upper)
        return (self.lower <= self.terms) & (self.terms <= self.upper)


def properness_diagnostic(config: ModelConfig, j_max: int | None = None) -> PropernessReport:
    """Decide whether the posterior on k is proper for the given prior.

    With all components alike the posterior normalizer is a series whose
    terms are sandwiched between constant multiples of the prior weights,
    so it converges exactly when the prior has finite mass.
    """
    alpha = config.require_symmetric("properness_diagnostic")
    prior = config.require_prior()
    n = config.n
    if j_max is None:
        j_max = max(10 * n, 1000)
    if j_max < n:
        raise ValueError(f"j_max must be >= n={n}, got {j_max}")

    j = np.arange(n, j_max + 1)
    w = np.array([prior.weight(int(x)) for x in j])
    i = np.arange(n, dtype=float)
    with np.errstate(divide="ignore"):
        log_prod = np.array([math.fsum(np.log((x - i) / (x * alpha + n - 1 - i))) for x in j])
        terms = w * np.exp(log_prod)
    lower = w / (n * alpha + n - 1) ** n
    upper = w / alpha**n
    partial = np.cumsum(terms)

    support = prior.support_max
    if support is not None:
        verdict, reason = Verdict.CONVERGENT, f"prior has finite support (k <= {support})"
    elif prior.total_mass < math.inf:
        verdict, reason = Verdict.CONVERGENT, "prior weights have a summable geometric tail"
    elif j_max > len(prior.values):
        verdict = Verdict.DIVERGENT
        reason = (
            "prior weights are not summable; terms exceed w(j)/(n*alpha+n-1)^n, "
            f"partial sum reached {partial[-1]:.6g} at j={j_max} and grows without bound"
        )
    else:
        verdict, reason = Verdict.INCONCLUSIVE, "window ends before the weight tail begins"
    return PropernessReport(j, terms, lower, upper, partial, verdict, reason)
