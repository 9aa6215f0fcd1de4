"""Model configuration: sample size, Dirichlet hyperparameters, prior on k."""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass, field
from typing import Union


class EquivalenceRequired(ValueError):
    """Raised when an operation needs all mixture components to be alike."""


@dataclass(frozen=True)
class Uniform:
    """Discrete uniform prior on ``{1, ..., k_max}``."""

    k_max: int

    def __post_init__(self):
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise ValueError(f"k_max must be a positive integer, got {self.k_max!r}")

    @property
    def support_max(self) -> int:
        return self.k_max

    @property
    def total_mass(self) -> float:
        return 1.0

    def weight(self, k: int) -> float:
        return 1.0 / self.k_max if 1 <= k <= self.k_max else 0.0

    def tail_mass(self, j: int) -> float:
        """Mass on ``k > j``."""
        return max(self.k_max - max(j, 0), 0) / self.k_max


@dataclass(frozen=True)
class ExplicitWeights:
    """Nonnegative weights for ``k = 1, 2, ...``, not necessarily normalized.

    With ``tail_ratio`` set, the weights continue geometrically past the
    listed range: ``w(J + i) = w(J) * tail_ratio**i``. A ratio of 1 gives
    constant weights, an improper prior.
    """

    values: tuple[float, ...]
    tail_ratio: float | None = None

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals:
            raise ValueError("weights must list at least one value")
        if any(v < 0 or math.isnan(v) for v in vals):
            raise ValueError("weights must be nonnegative")
        if not any(v > 0 for v in vals):
            raise ValueError("weights need at least one positive entry")
        if self.tail_ratio is not None and not self.tail_ratio >= 0:
            raise ValueError("tail_ratio must be nonnegative")

    @property
    def has_tail(self) -> bool:
        return bool(self.tail_ratio) and self.values[-1] > 0

    @property
    def support_max(self) -> int | None:
        if self.has_tail:
            return None
        last = max(i for i, v in enumerate(self.values) if v > 0)
        return last + 1

    @property
    def total_mass(self) -> float:
        s = math.fsum(self.values)
        if self.has_tail:
            r = self.tail_ratio
            if r >= 1:
                return math.inf
            s += self.values[-1] * r / (1 - r)
        return s

    def weight(self, k: int) -> float:
        if k < 1:
            return 0.0
        J = len(self.values)
        if k <= J:
            return self.values[k - 1]
        if self.has_tail:
            return self.values[-1] * self.tail_ratio ** (k - J)
        return 0.0

    def tail_mass(self, j: int) -> float:
        """Mass on ``k > j`` (unnormalized)."""
        J = len(self.values)
        s = math.fsum(self.values[max(j, 0):]) if j < J else 0.0
        if self.has_tail:
            r = self.tail_ratio
            if r >= 1:
                return math.inf
            start = max(j, J)
            s += self.values[-1] * r ** (start - J + 1) / (1 - r)
        return s


KPrior = Union[Uniform, ExplicitWeights]


@dataclass(frozen=True)
class ModelConfig:
    """Sample size, Dirichlet hyperparameter(s) and prior on the number of components.

    ``alpha`` is either one positive number (all components share it) or a
    sequence ``alpha[j-1] = alpha_jj`` of per-component values, which stay
    fixed as components are added.
    """

    n: int
    alpha: float | tuple[float, ...] = 1.0
    k_prior: KPrior | None = field(default=None)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if isinstance(self.alpha, numbers.Real):
            a = float(self.alpha)
            if not a > 0 or math.isinf(a):
                raise ValueError(f"alpha must be positive and finite, got {self.alpha!r}")
            object.__setattr__(self, "alpha", a)
        else:
            a = tuple(float(v) for v in self.alpha)
            if not a:
                raise ValueError("per-component alpha must not be empty")
            if any(not v > 0 or math.isinf(v) for v in a):
                raise ValueError("every per-component alpha must be positive and finite")
            object.__setattr__(self, "alpha", a)

    @property
    def symmetric(self) -> bool:
        return isinstance(self.alpha, float)

    def require_symmetric(self, what: str) -> float:
        if not self.symmetric:
            raise EquivalenceRequired(f"{what} requires a single symmetric alpha (all components alike)")
        return self.alpha

    def require_prior(self) -> KPrior:
        if self.k_prior is None:
            raise ValueError("a prior on k is required for this operation")
        return self.k_prior

    def component_alpha(self, j: int) -> float:
        if self.symmetric:
            return self.alpha
        if j > len(self.alpha):
            raise ValueError(f"alpha given for {len(self.alpha)} components, component {j} requested")
        return self.alpha[j - 1]

    def alpha0(self, k: int) -> float:
        """Total Dirichlet mass of a k-component model."""
        if self.symmetric:
            return k * self.alpha
        if k > len(self.alpha):
            raise ValueError(f"alpha given for {len(self.alpha)} components, k={k} requested")
        return math.fsum(self.alpha[:k])

    def with_prior(self, k_prior: KPrior) -> ModelConfig:
        return ModelConfig(self.n, self.alpha, k_prior)

