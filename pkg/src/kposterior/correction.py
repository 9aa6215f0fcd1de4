"""Correct estimates of ``f[1..K]`` that violate the nonnegativity of ``fdagger``.

Estimates are modelled as ``f_hat ~ N(f, Sigma)``. The feasible region
``{f : C f >= 0}`` becomes the positive orthant in ``y = fdagger = C f``,
so both corrections are computed in y and mapped back with ``f = B y``:

* ``project_mode``: the feasible point closest to ``f_hat`` in the
  ``Sigma``-metric (a bound-constrained QP);
* ``posterior_mean``: the mean of ``N(f_hat, Sigma)`` truncated to the
  feasible region, by rejection or by Gibbs sweeps over y.

Entries with zero sampling variance (a multinomial estimate of exactly 0,
or ``f[1]`` held fixed) are not free. Since ``f[k] = 0`` forces
``f[1..k-1] = 0`` as well, such entries must form a leading block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .activeset import ConvergenceError, nonneg_lstsq
from .coefficients import build_tables
from .config import ModelConfig, Uniform
from .transforms import MarginalEstimates, _as_estimates, f_to_fdagger

__all__ = [
    "ConvergenceError",
    "CorrectionResult",
    "CovarianceSpec",
    "RejectionTooSlow",
    "kkt_residual",
    "posterior_mean",
    "project_mode",
    "truncated_normal_draw",
]

# magnitudes below this fraction of max |f_hat| are clamped to exactly 0
CLAMP_RTOL = 1e-12
N_BATCHES = 50
MIN_DRAWS = 1000
REJECTION_PROBE = 100_000
REJECTION_MIN_RATE = 1e-4


class RejectionTooSlow(RuntimeError):
    pass


@dataclass(frozen=True)
class CovarianceSpec:
    """Sampling covariance of the estimates, on the scale of the supplied values.

    ``multinomial`` uses ``p_k (1 - p_k) / N`` from posterior-probability
    estimates and an MCMC sample size N. For log marginals the covariance
    refers to ``exp(log f)`` normalized so that the largest entry is 1.
    """

    kind: Literal["full", "diagonal", "multinomial"]
    matrix: np.ndarray | None = None
    variances: tuple[float, ...] | None = None
    draws: int | None = None

    @classmethod
    def full(cls, matrix) -> CovarianceSpec:
        m = np.array(matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("covariance matrix must be square")
        if not np.allclose(m, m.T, rtol=1e-12, atol=0):
            raise ValueError("covariance matrix must be symmetric")
        if np.linalg.eigvalsh(m).min() <= 0:
            raise ValueError("covariance matrix must be positive definite")
        m.setflags(write=False)
        return cls("full", matrix=m)

    @classmethod
    def diagonal(cls, variances: Sequence[float]) -> CovarianceSpec:
        v = tuple(float(x) for x in variances)
        if not v or any(not x > 0 or math.isinf(x) for x in v):
            raise ValueError("variances must be strictly positive and finite")
        return cls("diagonal", variances=v)

    @classmethod
    def multinomial(cls, draws: int) -> CovarianceSpec:
        if int(draws) != draws or draws < 1:
            raise ValueError(f"MCMC draw count must be a positive integer, got {draws!r}")
        return cls("multinomial", draws=int(draws))

    def matrix_for(self, est: MarginalEstimates, config: ModelConfig) -> np.ndarray:
        """Covariance of ``est.marginals(config)``."""
        K = est.K
        if self.kind == "full":
            S = np.array(self.matrix)
        elif self.kind == "diagonal":
            S = np.diag(self.variances)
        else:
            if est.scale_kind != "posterior_probs":
                raise ValueError("multinomial covariance needs posterior-probability estimates")
            p = np.array(est.values)
            S = np.diag(p * (1 - p) / self.draws)
        if S.shape != (K, K):
            raise ValueError(f"covariance is {S.shape[0]}x{S.shape[1]} but there are {K} estimates")
        # bring the covariance to the scale on which the marginals are used
        scale = _value_to_marginal_scale(est, config)
        return S * np.outer(scale, scale)


def _value_to_marginal_scale(est: MarginalEstimates, config: ModelConfig) -> np.ndarray:
    K = est.K
    if est.scale_kind == "posterior_probs":
        prior = config.k_prior
        if prior is None or isinstance(prior, Uniform):
            return np.ones(K)
        w = np.array([prior.weight(k) for k in range(1, K + 1)])
        return np.where(w > 0, 1 / np.where(w > 0, w, 1.0), 0.0)
    return np.ones(K)


@dataclass
class CorrectionResult:
    """Corrected marginals and portions; ``f`` is on the marginal-likelihood scale."""

    corrected_f: np.ndarray
    corrected_fdagger: np.ndarray
    method: Literal["identity", "mode", "mean_rejection", "mean_gibbs"]
    diagnostics: dict = field(default_factory=dict)
    residual_tail_mass: float | None = None

    def rescaled(self) -> np.ndarray:
        """Corrected f normalized to sum to one, for presentation."""
        return self.corrected_f / self.corrected_f.sum()

    def posterior_probs(self, config: ModelConfig) -> np.ndarray:
        """``pi(k | x)`` over ``k = 1..K`` implied by the corrected f."""
        prior = config.require_prior()
        w = np.array([prior.weight(k) for k in range(1, len(self.corrected_f) + 1)])
        p = w * self.corrected_f
        return p / p.sum()


@dataclass
class _Problem:
    """The estimation problem restricted to its free block, in whitened coordinates."""

    f_hat: np.ndarray
    Sigma: np.ndarray
    B: np.ndarray
    C: np.ndarray
    n_fixed: int
    y_fixed: np.ndarray
    A: np.ndarray  # L^{-1} B_FF
    d: np.ndarray  # L^{-1} (f_hat_F - B_FP y_P)
    L: np.ndarray

    @property
    def free(self) -> slice:
        return slice(self.n_fixed, None)

    def f_of(self, y_free: np.ndarray) -> np.ndarray:
        return self.B @ np.concatenate([self.y_fixed, y_free])

    def precision(self) -> np.ndarray:
        return self.A.T @ self.A

    def mean_free(self) -> np.ndarray:
        return np.linalg.solve(self.A, self.d)


def _setup(est, cov: CovarianceSpec, config: ModelConfig, fix_f1: bool) -> _Problem:
    est = _as_estimates(est)
    config.require_symmetric("correction")
    K = est.K
    if K > config.n:
        raise ValueError(f"corrections need K <= n; got K={K}, n={config.n}")
    f_hat = est.marginals(config)
    Sigma = cov.matrix_for(est, config)
    tables = build_tables(K, config)
    B = tables.b_matrix()
    C = tables.c_matrix()

    var = np.diag(Sigma)
    zero_var = np.flatnonzero(var <= 0)
    n_fixed = 0
    while n_fixed < K and var[n_fixed] <= 0:
        n_fixed += 1
    if zero_var.size and zero_var.max() >= n_fixed:
        k = int(zero_var[zero_var >= n_fixed][0]) + 1
        raise ValueError(
            f"estimate k={k} has zero variance but follows a free entry; holding it fixed would force "
            "every earlier f to 0. Supply a positive variance for it"
        )
    if fix_f1:
        n_fixed = max(n_fixed, 1)
    if n_fixed == K:
        raise ValueError("every estimate is fixed; nothing to correct")
    P, F = slice(0, n_fixed), slice(n_fixed, K)
    y_fixed = C[P, P] @ f_hat[P]
    if np.any(y_fixed < -CLAMP_RTOL * max(np.abs(f_hat).max(), 1e-300)):
        raise ValueError("the fixed leading estimates already violate the constraints")
    y_fixed = np.maximum(y_fixed, 0.0)
    S_FF = Sigma[F, F]
    if np.any(np.diag(S_FF) <= 0):
        raise ValueError("free estimates need positive variance")
    L = np.linalg.cholesky(S_FF)
    A = solve_triangular(L, B[F, F], lower=True)
    d = solve_triangular(L, f_hat[F] - B[F, P] @ y_fixed, lower=True)
    return _Problem(f_hat, Sigma, B, C, n_fixed, y_fixed, A, d, L)


def _clamp(y: np.ndarray, scale: float) -> np.ndarray:
    y = y.copy()
    y[np.abs(y) < CLAMP_RTOL * scale] = 0.0
    return y


def project_mode(est, cov: CovarianceSpec, config: ModelConfig, fix_f1: bool = False) -> CorrectionResult:
    """Constraint-satisfying f closest to the estimates in the covariance metric.

    Returns the estimates unchanged when they already satisfy the
    constraints. ``fix_f1`` holds ``f[1]`` at its estimate (use when it is
    known exactly).
    """
    est = _as_estimates(est)
    prob = _setup(est, cov, config, fix_f1)
    scale = max(np.abs(prob.f_hat).max(), 1e-300)
    fd_hat = f_to_fdagger(est, config)
    if np.all(fd_hat >= 0):
        return CorrectionResult(prob.f_hat.copy(), fd_hat, "identity", {"active": []}, est.residual_tail_mass)

    # unit-norm columns keep the subproblems well scaled
    norms = np.linalg.norm(prob.A, axis=0)
    res = nonneg_lstsq(prob.A / norms, prob.d)
    y_free = res.x / norms
    y = _clamp(np.concatenate([prob.y_fixed, y_free]), scale)
    f = prob.B @ y
    active = [k for k in range(prob.n_fixed + 1, est.K + 1) if y[k - 1] == 0]
    diag = {"active": active, "iterations": res.iterations, "trace": res.trace, "fixed": prob.n_fixed}
    return CorrectionResult(f, y, "mode", diag, est.residual_tail_mass)


def kkt_residual(result: CorrectionResult, est, cov: CovarianceSpec, config: ModelConfig, fix_f1: bool = False) -> dict:
    """Scaled KKT quantities of a mode solution.

    With whitened, column-normalized coordinates the multipliers are
    ``lam = A^T (A y - d) / ||d||``. Returns the most negative multiplier,
    the largest free-coordinate gradient and the largest ``|lam_k y_k|``.
    """
    est = _as_estimates(est)
    prob = _setup(est, cov, config, fix_f1)
    norms = np.linalg.norm(prob.A, axis=0)
    dn = max(np.linalg.norm(prob.d), 1e-300)
    u = result.corrected_fdagger[prob.free] * norms / dn
    At = prob.A / norms
    lam = At.T @ (At @ u - prob.d / dn)
    pos = u > 0
    return {
        "lambda": lam,
        "min_lambda": float(lam.min()),
        "stationarity": float(np.abs(lam[pos]).max()) if pos.any() else 0.0,
        "complementarity": float(np.abs(lam * u).max()),
    }


def truncated_normal_draw(mu: float, sigma: float, lower: float, rng: np.random.Generator, size: int | None = None):
    """Draw from ``N(mu, sigma**2)`` conditioned on exceeding ``lower``.

    Close to the mean a plain normal proposal is used; deep in the tail an
    exponential proposal shifted to the bound with the optimal rate.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    m = 1 if size is None else int(size)
    a = (lower - mu) / sigma
    out = np.empty(m)
    todo = np.arange(m)
    if a < 0.5:
        while todo.size:
            z = rng.standard_normal(todo.size)
            ok = z > a
            out[todo[ok]] = z[ok]
            todo = todo[~ok]
    else:
        lam = 0.5 * (a + math.sqrt(a * a + 4))
        while todo.size:
            z = a + rng.exponential(1 / lam, todo.size)
            ok = rng.random(todo.size) <= np.exp(-0.5 * (z - lam) ** 2)
            out[todo[ok]] = z[ok]
            todo = todo[~ok]
    out = mu + sigma * out
    return float(out[0]) if size is None else out


def _batch_se(draws: np.ndarray, n_batches: int = N_BATCHES) -> np.ndarray:
    m = draws.shape[0] // n_batches
    means = draws[: m * n_batches].reshape(n_batches, m, -1).mean(axis=1)
    return means.std(axis=0, ddof=1) / math.sqrt(n_batches)


def _gibbs_chain(prob: _Problem, y0: np.ndarray, n_keep: int, burn: int, rng: np.random.Generator) -> np.ndarray:
    H = prob.precision()
    mu = prob.mean_free()
    p = len(mu)
    sd = 1 / np.sqrt(np.diag(H))
    y = y0.copy()
    r = H @ (y - mu)
    out = np.empty((n_keep, p))
    for s in range(burn + n_keep):
        for i in range(p):
            # full conditional of y_i given the rest
            m_i = y[i] - r[i] / H[i, i]
            new = truncated_normal_draw(m_i, sd[i], 0.0, rng)
            r += H[:, i] * (new - y[i])
            y[i] = new
        if s >= burn:
            out[s - burn] = y
    return out


def _rejection(prob: _Problem, n_keep: int, rng: np.random.Generator) -> tuple[np.ndarray, int]:
    mu = prob.mean_free()
    p = len(mu)
    # y = mu + A^{-1} e with e standard normal has covariance (A^T A)^{-1}
    Ainv = np.linalg.inv(prob.A)
    kept: list[np.ndarray] = []
    n_kept = proposed = 0
    batch = 10_000
    while n_kept < n_keep:
        y = mu + rng.standard_normal((batch, p)) @ Ainv.T
        idx = np.flatnonzero(np.all(y > 0, axis=1))
        need = n_keep - n_kept
        if len(idx) >= need:
            # count proposals only up to the last acceptance used
            kept.append(y[idx[:need]])
            proposed += int(idx[need - 1]) + 1
            break
        kept.append(y[idx])
        n_kept += len(idx)
        proposed += batch
        if proposed >= REJECTION_PROBE and n_kept < REJECTION_MIN_RATE * proposed:
            raise RejectionTooSlow(
                f"acceptance rate {n_kept / proposed:.2e} after {proposed} proposals is below "
                f"{REJECTION_MIN_RATE:g}; the feasible region lies in the tail. Use method='gibbs'"
            )
    return np.concatenate(kept), proposed


def posterior_mean(
    est,
    cov: CovarianceSpec,
    config: ModelConfig,
    method: Literal["rejection", "gibbs"] = "gibbs",
    draws: int = 20_000,
    burn_in: int | None = None,
    seed: int | None = 0,
    chains: int = 1,
    fix_f1: bool = False,
) -> CorrectionResult:
    """Mean of ``N(f_hat, Sigma)`` truncated to the constraint region.

    ``draws`` counts retained draws over all chains. Gibbs chains start at
    the mode and discard ``burn_in`` sweeps each (default 10% of their
    draws). Standard errors come from batch means over 50 batches.
    """
    if draws < MIN_DRAWS:
        raise ValueError(f"need at least {MIN_DRAWS} draws, got {draws}")
    if method not in ("rejection", "gibbs"):
        raise ValueError(f"method must be 'rejection' or 'gibbs', got {method!r}")
    est = _as_estimates(est)
    prob = _setup(est, cov, config, fix_f1)
    seeds = np.random.SeedSequence(seed).spawn(chains)
    per_chain = [draws // chains + (1 if c < draws % chains else 0) for c in range(chains)]
    diag: dict = {"method": method, "draws": draws, "chains": chains, "seed": seed}

    samples = []
    if method == "gibbs":
        mode = project_mode(est, cov, config, fix_f1).corrected_fdagger[prob.free]
        # start strictly inside the orthant
        y0 = np.maximum(mode, 1e-6 * max(np.abs(prob.mean_free()).max(), 1e-300))
        burn = [int(0.1 * m) if burn_in is None else int(burn_in) for m in per_chain]
        for ss, m, b in zip(seeds, per_chain, burn):
            samples.append(_gibbs_chain(prob, y0, m, b, np.random.default_rng(ss)))
        diag["burn_in"] = burn
    else:
        proposed = 0
        for ss, m in zip(seeds, per_chain):
            y, prop = _rejection(prob, m, np.random.default_rng(ss))
            samples.append(y)
            proposed += prop
        diag["proposals"] = proposed
        diag["acceptance_rate"] = draws / proposed
    Y = np.concatenate(samples)
    Yfull = np.hstack([np.broadcast_to(prob.y_fixed, (len(Y), prob.n_fixed)), Y])
    F = Yfull @ prob.B.T
    y_mean = Yfull.mean(axis=0)
    diag["se_fdagger"] = _batch_se(Yfull)
    diag["se_f"] = _batch_se(F)
    return CorrectionResult(F.mean(axis=0), y_mean, "mean_" + method, diag, est.residual_tail_mass)
