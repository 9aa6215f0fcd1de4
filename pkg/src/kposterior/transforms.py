"""Triangular transforms between marginal likelihoods and their portions.

Three representations of the same information are used:

* ``f[k]``: marginal likelihood of the k-component model (``k = 1..K``);
* ``fstar[t]``: the part of ``f[t]`` from allocations whose highest
  nonempty component is ``t``;
* ``fdagger[h]``: the part of ``f[h]`` from allocations leaving no
  component empty (all components alike only).

Each ``fdagger[h]`` and ``fstar[t]`` is a sum of positive terms, so
negative values computed from estimated ``f`` flag estimates that no
mixture model could have produced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from .coefficients import _log_a, build_tables, log_binom
from .config import ModelConfig, Uniform
from .signedlog import SignedLogValue, sl_add, sl_sum

ScaleKind = Literal["posterior_probs", "raw_marginals", "log_marginals"]
SCALE_KINDS = ("posterior_probs", "raw_marginals", "log_marginals")

# condition estimate above which a computed fdagger is numerically suspect
SUSPECT_CONDITION = 1e8


@dataclass(frozen=True)
class MarginalEstimates:
    """Estimates of ``f[1..K]`` known up to a common positive factor.

    ``posterior_probs`` are divided by the prior weights of k before use
    (a no-op for a uniform prior). ``residual_tail_mass`` records mass an
    MCMC run put on ``k > K``; it is carried along but never transformed.
    """

    values: tuple[float, ...]
    scale_kind: ScaleKind = "raw_marginals"
    residual_tail_mass: float | None = None

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals:
            raise ValueError("estimates need at least one value")
        if self.scale_kind not in SCALE_KINDS:
            raise ValueError(f"scale_kind must be one of {SCALE_KINDS}, got {self.scale_kind!r}")
        if any(math.isnan(v) for v in vals):
            raise ValueError("estimates contain NaN")
        if self.scale_kind != "log_marginals" and any(v < 0 for v in vals):
            raise ValueError("estimates must be nonnegative")
        if self.residual_tail_mass is not None and not self.residual_tail_mass >= 0:
            raise ValueError("residual_tail_mass must be nonnegative")

    @property
    def K(self) -> int:
        return len(self.values)

    @property
    def zero_indices(self) -> list[int]:
        if self.scale_kind == "log_marginals":
            return [k for k, v in enumerate(self.values, 1) if v == -math.inf]
        return [k for k, v in enumerate(self.values, 1) if v == 0]

    def log_values(self, config: ModelConfig | None = None) -> np.ndarray:
        """``log f[k]``; log marginals are shifted so that the largest is 0."""
        with np.errstate(divide="ignore"):
            if self.scale_kind == "log_marginals":
                lv = np.array(self.values)
                return lv - lv.max()
            lv = np.log(np.array(self.values))
        if self.scale_kind == "posterior_probs" and config is not None:
            prior = config.k_prior
            if prior is not None and not isinstance(prior, Uniform):
                w = np.array([prior.weight(k) for k in range(1, self.K + 1)])
                if np.any((w == 0) & np.isfinite(lv)):
                    raise ValueError("positive posterior probability where the prior weight is 0")
                with np.errstate(divide="ignore", invalid="ignore"):
                    lv = np.where(w > 0, lv - np.log(np.where(w > 0, w, 1.0)), -np.inf)
        return lv

    def marginals(self, config: ModelConfig | None = None) -> np.ndarray:
        if self.scale_kind == "raw_marginals":
            return np.array(self.values)
        return np.exp(self.log_values(config))


def _as_estimates(est) -> MarginalEstimates:
    if isinstance(est, MarginalEstimates):
        return est
    return MarginalEstimates(tuple(est))


@dataclass(frozen=True)
class Violation:
    k: int
    value: float
    kind: Literal["pairwise", "full"]


@dataclass
class ConstraintReport:
    """Outcome of checking estimates against the inequality constraints.

    ``pairwise_margins[i]`` is ``f[k] - a[k, k-1] f[k-1]`` for ``k = i + 2``.
    ``fdagger`` and ``condition_estimates`` are ``None`` when the full check
    was not applicable.
    """

    fdagger: np.ndarray | None
    pairwise_margins: np.ndarray
    violations: list[Violation]
    condition_estimates: np.ndarray | None
    notices: list[str] = field(default_factory=list)

    @property
    def full_check(self) -> bool:
        return self.fdagger is not None

    @property
    def ok(self) -> bool:
        return not self.violations

    def violation_set(self, kind: str | None = None) -> set[int]:
        return {v.k for v in self.violations if kind is None or v.kind == kind}

    @property
    def suspect(self) -> list[int]:
        if self.condition_estimates is None:
            return []
        return [k for k, c in enumerate(self.condition_estimates, 1) if c > SUSPECT_CONDITION and math.isfinite(c)]


def _require_full(K: int, config: ModelConfig, what: str):
    config.require_symmetric(what)
    if K > config.n:
        raise ValueError(f"{what} holds only for k <= n; got K={K} > n={config.n}")


def _fdagger_terms(log_f: np.ndarray, tables, k: int) -> list[SignedLogValue]:
    terms = []
    for t in range(1, k + 1):
        lf = log_f[t - 1]
        if lf == -math.inf:
            continue
        sign = -1 if (k + t) % 2 else 1
        terms.append(SignedLogValue(sign, float(tables.log_b[k - 1, t - 1]) + float(lf)))
    return terms


def f_to_fdagger(est, config: ModelConfig, return_condition: bool = False):
    """Portions ``fdagger[1..K]`` with no empty components, from ``f[1..K]``.

    ``fdagger[k] = sum_t (-1)**(k+t) C(k, t) a[k, t] f[t]``, valid for
    ``K <= n`` with all components alike. Values are returned on the same
    scale as the inputs (log marginals are first normalized to max 1).

    Parameters
    ----------
    est : MarginalEstimates or sequence of float
    config : ModelConfig
    return_condition : bool
        Also return the per-k cancellation condition estimates.
    """
    est = _as_estimates(est)
    _require_full(est.K, config, "f_to_fdagger")
    log_f = est.log_values(config)
    tables = build_tables(est.K, config)
    out = np.empty(est.K)
    cond = np.empty(est.K)
    for k in range(1, est.K + 1):
        value, c = sl_sum(_fdagger_terms(log_f, tables, k))
        out[k - 1] = float(value)
        cond[k - 1] = c
    if return_condition:
        return out, cond
    return out


def fdagger_to_f(fdagger: Sequence[float], config: ModelConfig, K: int) -> np.ndarray:
    """Marginal likelihoods ``f[1..K]`` from nonnegative ``fdagger``.

    ``f[k] = sum_{h <= min(k, n)} C(k, h) a[k, h] fdagger[h]``; K may exceed n.
    """
    config.require_symmetric("fdagger_to_f")
    fd = np.asarray(fdagger, dtype=float)
    need = min(K, config.n)
    if fd.ndim != 1 or len(fd) < need:
        raise ValueError(f"need at least {need} fdagger entries, got {len(fd)}")
    if len(fd) > config.n:
        raise ValueError(f"at most n={config.n} fdagger entries exist, got {len(fd)}")
    if np.any(fd < 0):
        raise ValueError("fdagger entries must be nonnegative")
    if not np.any(fd > 0):
        raise ValueError("fdagger must have a positive entry")
    with np.errstate(divide="ignore"):
        log_fd = np.log(fd)
    out = np.empty(K)
    for k in range(1, K + 1):
        hs = range(1, min(k, len(fd)) + 1)
        logs = [_log_a(k, h, config) + log_binom(k, h) + log_fd[h - 1] for h in hs]
        logs = [x for x in logs if x > -math.inf]
        if not logs:
            out[k - 1] = 0.0
            continue
        m = max(logs)
        out[k - 1] = math.exp(m) * math.fsum(math.exp(x - m) for x in logs)
    return out


def fstar_decompose(est, config: ModelConfig) -> np.ndarray:
    """``fstar[k] = f[k] - a[k, k-1] f[k-1]`` (``fstar[1] = f[1]``).

    Needs no equivalence between components.
    """
    est = _as_estimates(est)
    f = est.marginals(config)
    out = np.empty(est.K)
    out[0] = f[0]
    for k in range(2, est.K + 1):
        out[k - 1] = float(_margin(f[k - 1], f[k - 2], k, config))
    return out


def fstar_reconstruct(fstar: Sequence[float], config: ModelConfig) -> np.ndarray:
    """``f[k] = sum_{t <= k} a[k, t] fstar[t]``."""
    fs = np.asarray(fstar, dtype=float)
    K = len(fs)
    out = np.empty(K)
    for k in range(1, K + 1):
        terms = [SignedLogValue.from_float(fs[t - 1]) * SignedLogValue(1, _log_a(k, t, config)) for t in range(1, k + 1)]
        out[k - 1] = float(sl_sum(terms).value)
    return out


def extend_f(est, config: ModelConfig, k: int) -> float:
    """``f[k]`` for ``k > n``, determined entirely by ``f[1..n]``.

    ``f[k] = sum_{t=1}^n (-1)**(n-t) C(k, t) C(k-t-1, n-t) a[k, t] f[t]``.
    """
    est = _as_estimates(est)
    config.require_symmetric("extend_f")
    n = config.n
    if est.K != n:
        raise ValueError(f"extend_f needs exactly f[1..n] (n={n}), got K={est.K}")
    if k <= n:
        raise ValueError(f"extend_f applies to k > n={n}, got k={k}")
    log_f = est.log_values(config)
    terms = []
    for t in range(1, n + 1):
        if log_f[t - 1] == -math.inf:
            continue
        sign = -1 if (n - t) % 2 else 1
        lg = log_binom(k, t) + log_binom(k - t - 1, n - t) + _log_a(k, t, config) + float(log_f[t - 1])
        terms.append(SignedLogValue(sign, lg))
    return float(sl_sum(terms).value)


def _margin(fk: float, fprev: float, k: int, config: ModelConfig) -> SignedLogValue:
    lead = SignedLogValue.from_float(fk)
    lower = SignedLogValue.from_float(fprev) * SignedLogValue(1, _log_a(k, k - 1, config))
    return sl_add(lead, -lower)


def check_constraints(est, config: ModelConfig) -> ConstraintReport:
    """Check ``f[k] > a[k, k-1] f[k-1]`` and, when applicable, ``fdagger >= 0``.

    The full check needs a symmetric alpha and ``K <= n``; otherwise only
    the pairwise margins are checked and a notice says so. Negative
    ``fdagger`` are reported as computed, without clamping.
    """
    est = _as_estimates(est)
    notices: list[str] = []
    f = est.marginals(config)
    margins = np.array([float(_margin(f[k - 1], f[k - 2], k, config)) for k in range(2, est.K + 1)])
    violations = [Violation(k, float(m), "pairwise") for k, m in zip(range(2, est.K + 1), margins) if m < 0]

    fd = cond = None
    if not config.symmetric:
        notices.append("per-component alpha: full check needs all components alike; pairwise check only")
    elif est.K > config.n:
        notices.append(f"K={est.K} exceeds n={config.n}: full check needs K <= n; pairwise check only")
    else:
        fd, cond = f_to_fdagger(est, config, return_condition=True)
        violations += [Violation(k, float(v), "full") for k, v in enumerate(fd, 1) if v < 0]
        suspect = [k for k, c in enumerate(cond, 1) if math.isfinite(c) and c > SUSPECT_CONDITION]
        if suspect:
            notices.append(f"fdagger numerically suspect (condition > {SUSPECT_CONDITION:g}) at k={suspect}")
    zeros = est.zero_indices
    if zeros:
        notices.append(f"zero estimates at k={zeros}: checks involving them are advisory")
    violations.sort(key=lambda v: (v.k, v.kind))
    return ConstraintReport(fd, margins, violations, cond, notices)
