"""Equivalence classes of mixture components and class occupancy patterns.

Components are alike when they share Dirichlet hyperparameter, parametric
family and parameter prior. A membership vector that uses components up
to ``t`` is summarized by its class occupancy pattern ``h``: the number of
nonempty components in each class. Patterns are tuples with trailing zeros
dropped.

The general representation of ``f[k]`` in terms of the no-gap portions
``fdagger[h]`` is::

    f[k] = sum_r a[k, r] sum_{h in H(r, k)} gamma(h; r, k) fdagger[h]
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Mapping, Sequence

from .coefficients import _log_a
from .config import ModelConfig

Pattern = tuple[int, ...]


def canonical(h: Sequence[int]) -> Pattern:
    """Drop trailing zeros."""
    h = tuple(int(x) for x in h)
    if any(x < 0 for x in h):
        raise ValueError(f"occupancy counts must be nonnegative: {h}")
    end = len(h)
    while end and h[end - 1] == 0:
        end -= 1
    return h[:end]


@dataclass(frozen=True)
class ClassStructure:
    """Assignment of components ``1..K_max`` to equivalence classes.

    Class ids are 1-based and numbered in order of each class's smallest
    member, whatever labels were supplied.
    """

    labels: tuple[int, ...]

    def __init__(self, labels: Sequence[Hashable]):
        if not labels:
            raise ValueError("class structure needs at least one component")
        ids: dict[Hashable, int] = {}
        out = []
        for lab in labels:
            if lab not in ids:
                ids[lab] = len(ids) + 1
            out.append(ids[lab])
        object.__setattr__(self, "labels", tuple(out))
        counts = [[0] * (len(ids) + 1)]
        for m in out:
            row = list(counts[-1])
            row[m] += 1
            counts.append(row)
        object.__setattr__(self, "_counts", tuple(tuple(r) for r in counts))

    @classmethod
    def all_alike(cls, K: int) -> ClassStructure:
        return cls([0] * K)

    @classmethod
    def all_distinct(cls, K: int) -> ClassStructure:
        return cls(list(range(K)))

    @property
    def K_max(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return max(self.labels)

    def class_of(self, j: int) -> int:
        return self.labels[j - 1]

    def c(self, m: int, t: int) -> int:
        """Number of components of class m with index <= t."""
        if t > self.K_max:
            raise ValueError(f"t={t} exceeds the {self.K_max} components described")
        if m > self.n_classes:
            return 0
        return self._counts[t][m]

    def c_total(self, m: int) -> int:
        return self.c(m, self.K_max)

    def N(self, t: int) -> int:
        """Number of classes formed by components ``1..t``."""
        return max(self.labels[:t])

    def members(self, m: int) -> list[int]:
        return [j for j, lab in enumerate(self.labels, 1) if lab == m]


def s_of_h(h: Sequence[int], cs: ClassStructure) -> int:
    """Smallest r such that components ``1..r`` hold ``h[m]`` of each class m."""
    h = canonical(h)
    if not h:
        raise ValueError("occupancy pattern must have a nonempty component")
    for m, hm in enumerate(h, 1):
        if hm > cs.c_total(m):
            raise ValueError(f"pattern {h} infeasible: class {m} has only {cs.c_total(m)} components")
    for r in range(1, cs.K_max + 1):
        if all(cs.c(m, r) >= hm for m, hm in enumerate(h, 1)):
            return r
    raise AssertionError("unreachable")


def in_H(h: Sequence[int], t: int, cs: ClassStructure, n: int | None = None) -> bool:
    """Whether h is the occupancy pattern of some vector in ``G*_t``."""
    h = canonical(h)
    Nt = cs.N(t)
    if not h or len(h) > Nt:
        return False
    if n is not None and sum(h) > n:
        return False
    if any(hm > cs.c(m, t) for m, hm in enumerate(h, 1)):
        return False
    it = cs.class_of(t)
    return it <= len(h) and h[it - 1] >= 1


def gamma_h_t(h: Sequence[int], t: int, cs: ClassStructure, n: int | None = None) -> int:
    """Number of vectors in ``G_h^t`` mapped onto each gap-free representative.

    Equals ``(h_i / c(i, t)) prod_m C(c(m, t), h_m)`` with ``i`` the class
    of component t, or 0 when h is not a pattern of ``G*_t``.
    """
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    h = canonical(h)
    if not in_H(h, t, cs, n):
        return 0
    it = cs.class_of(t)
    out = 1
    for m in range(1, cs.N(t) + 1):
        hm = h[m - 1] if m <= len(h) else 0
        cm = cs.c(m, t)
        # (h/c) C(c, h) == C(c-1, h-1): component t itself is nonempty
        out *= math.comb(cm - 1, hm - 1) if m == it else math.comb(cm, hm)
    return out


def enumerate_H(t: int, cs: ClassStructure, n: int, r: int | None = None) -> list[Pattern]:
    """Occupancy patterns of ``G*_t``, or only those with ``s(h) = r``."""
    if t < 1:
        raise ValueError(f"t must be >= 1, got {t}")
    Nt = cs.N(t)
    it = cs.class_of(t)
    ranges = [range(1 if m == it else 0, cs.c(m, t) + 1) for m in range(1, Nt + 1)]
    out = set()
    for h in _bounded_product(ranges, n):
        p = canonical(h)
        if r is None or s_of_h(p, cs) == r:
            out.add(p)
    return sorted(out)


def _bounded_product(ranges, budget):
    if not ranges:
        yield ()
        return
    head, rest = ranges[0], ranges[1:]
    for v in head:
        if v > budget:
            break
        for tail in _bounded_product(rest, budget - v):
            yield (v,) + tail


def gamma_h_rk(h: Sequence[int], r: int, k: int, cs: ClassStructure, n: int | None = None) -> Fraction:
    """``(1 / gamma(h, r)) sum_{t=r}^k gamma(h, t)``, exact."""
    h = canonical(h)
    if s_of_h(h, cs) != r:
        raise ValueError(f"r={r} is not s(h)={s_of_h(h, cs)} for h={h}")
    if k < r:
        raise ValueError(f"k={k} < r={r}")
    den = gamma_h_t(h, r, cs, n)
    if den == 0:
        raise ValueError(f"h={h} is not a pattern of G*_{r}")
    return Fraction(sum(gamma_h_t(h, t, cs, n) for t in range(r, k + 1)), den)


class MissingPattern(KeyError):
    pass


def _lookup(fdagger_by_pattern: Mapping[Pattern, float], h: Pattern) -> float:
    try:
        return fdagger_by_pattern[h]
    except KeyError:
        raise MissingPattern(f"no fdagger supplied for occupancy pattern {h}") from None


def _check_cover(cs: ClassStructure, k: int):
    if k > cs.K_max:
        raise ValueError(f"k={k} exceeds the {cs.K_max} components of the class structure")


def represent_fk(fdagger_by_pattern: Mapping[Pattern, float], k: int, cs: ClassStructure, config: ModelConfig) -> float:
    """``f[k]`` from the no-gap portions ``fdagger[h]``."""
    _check_cover(cs, k)
    n = config.n
    total = []
    for r in range(1, k + 1):
        a = math.exp(_log_a(k, r, config))
        for h in enumerate_H(r, cs, n, r):
            g = gamma_h_rk(h, r, k, cs, n)
            total.append(a * float(g) * _lookup(fdagger_by_pattern, h))
    return math.fsum(total)


def represent_fstar(fdagger_by_pattern: Mapping[Pattern, float], t: int, cs: ClassStructure, config: ModelConfig) -> float:
    """``fstar[t] = sum_r a[t, r] sum_{h in H(r, t)} gamma(h, t)/gamma(h, r) fdagger[h]``."""
    _check_cover(cs, t)
    n = config.n
    total = []
    for r in range(1, t + 1):
        a = math.exp(_log_a(t, r, config))
        for h in enumerate_H(t, cs, n, r):
            ratio = Fraction(gamma_h_t(h, t, cs, n), gamma_h_t(h, r, cs, n))
            total.append(a * float(ratio) * _lookup(fdagger_by_pattern, h))
    return math.fsum(total)


def represent_fk_split(
    fdagger_by_pattern: Mapping[Pattern, float], k: int, cs: ClassStructure, config: ModelConfig
) -> tuple[float, float]:
    """``(a[k, k-1] f[k-1], fstar[k])``; their sum is ``f[k]``."""
    _check_cover(cs, k)
    if k == 1:
        return 0.0, represent_fstar(fdagger_by_pattern, 1, cs, config)
    prev = math.exp(_log_a(k, k - 1, config)) * represent_fk(fdagger_by_pattern, k - 1, cs, config)
    return prev, represent_fstar(fdagger_by_pattern, k, cs, config)


def all_patterns(k: int, cs: ClassStructure, n: int) -> list[Pattern]:
    """Every pattern needed to represent ``f[1..k]``."""
    return sorted(set(itertools.chain.from_iterable(enumerate_H(r, cs, n, r) for r in range(1, k + 1))))
