"""Exact brute-force enumeration of a tiny collapsed mixture model.

Observations are binary. Component j has Dirichlet hyperparameter
``alpha_j`` and a Beta(a_j, b_j) prior on its success probability, so a
component holding m observations of which s are ones contributes::

    (alpha_j)_m * B(a_j + s, b_j + m - s) / B(a_j, b_j)

where ``(x)_m`` is the rising factorial. With rational hyperparameters
every quantity below is an exact ``Fraction``. Membership vectors are
grouped by their per-component ``(m, s)`` signature, which determines
every term, so only distinct signatures are evaluated exactly.

The module also runs the identity suite checking the library's
floating-point routines against these exact values.
"""

from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .classes import ClassStructure, Pattern, canonical, represent_fk, represent_fk_split, s_of_h
from .coefficients import _log_a
from .config import ModelConfig, Uniform
from .occupancy import posterior_h, prior_h_given_k
from .transforms import extend_f, f_to_fdagger, fdagger_to_f, fstar_decompose, fstar_reconstruct

N_MAX = 8
K_MAX = 5


def rising(x: Fraction, m: int) -> Fraction:
    out = Fraction(1)
    for i in range(m):
        out *= x + i
    return out


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(str(x)) if isinstance(x, float) else Fraction(x)


@dataclass(frozen=True)
class ComponentSpec:
    alpha: Fraction
    a: Fraction
    b: Fraction

    def __init__(self, alpha, a=1, b=1):
        for name, v in (("alpha", alpha), ("a", a), ("b", b)):
            v = _frac(v)
            if v <= 0:
                raise ValueError(f"{name} must be positive, got {v}")
            object.__setattr__(self, name, v)

    def weight(self, m: int, s: int) -> Fraction:
        """Allocation numerator times the Beta-binomial marginal of one component."""
        if m == 0:
            return Fraction(1)
        q = rising(self.a, s) * rising(self.b, m - s) / rising(self.a + self.b, m)
        return rising(self.alpha, m) * q


@dataclass(frozen=True)
class OracleProblem:
    """Binary data plus one ``ComponentSpec`` per component ``1..K_max``."""

    data: tuple[int, ...]
    components: tuple[ComponentSpec, ...]

    def __post_init__(self):
        data = tuple(int(x) for x in self.data)
        if any(x not in (0, 1) for x in data):
            raise ValueError("oracle data must be binary")
        if not 1 <= len(data) <= N_MAX:
            raise ValueError(f"oracle needs 1 <= n <= {N_MAX}, got {len(data)}")
        if not 1 <= len(self.components) <= K_MAX:
            raise ValueError(f"oracle handles at most {K_MAX} components")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "components", tuple(self.components))

    @classmethod
    def alike(cls, data, alpha, a=1, b=1, K: int = K_MAX) -> OracleProblem:
        return cls(tuple(data), (ComponentSpec(alpha, a, b),) * K)

    @property
    def n(self) -> int:
        return len(self.data)

    @property
    def K(self) -> int:
        return len(self.components)

    @property
    def class_structure(self) -> ClassStructure:
        return ClassStructure(list(self.components))

    @property
    def all_alike(self) -> bool:
        return len(set(self.components)) == 1

    def alpha0(self, k: int) -> Fraction:
        return sum((c.alpha for c in self.components[:k]), Fraction(0))

    def config(self, k_prior=None) -> ModelConfig:
        alphas = [float(c.alpha) for c in self.components]
        if len(set(alphas)) == 1:
            return ModelConfig(self.n, alphas[0], k_prior)
        return ModelConfig(self.n, tuple(alphas), k_prior)


def allocation_prior(g: Sequence[int], k: int, problem: OracleProblem) -> Fraction:
    """Prior mass of membership vector g under the k-component model, exactly."""
    if len(g) != problem.n or any(not 1 <= j <= k for j in g):
        raise ValueError(f"g must have n={problem.n} entries in 1..{k}")
    out = 1 / rising(problem.alpha0(k), problem.n)
    for j in range(1, k + 1):
        out *= rising(problem.components[j - 1].alpha, sum(1 for x in g if x == j))
    return out


@dataclass
class Portions:
    """Exact sums over subsets of membership vectors of the k-component model.

    ``fstar[t]`` and ``fdagger[h]`` are evaluated in the t- and s(h)-component
    models; ``pieces[t]`` is the k-model mass of vectors whose highest
    nonempty component is t.
    """

    k: int
    f_k: Fraction
    fstar: dict[int, Fraction]
    pieces: dict[int, Fraction]
    fdagger: dict[Pattern, Fraction]
    prior_h_given_k: dict[int, Fraction]
    joint_h: dict[int, Fraction]
    max_c1c2_deviation: float = field(default=0.0)


def _signatures(problem: OracleProblem, k: int) -> dict[tuple, int]:
    """Multiplicity of each per-component (m, s) signature over all k**n vectors."""
    n = problem.n
    x = np.array(problem.data, dtype=int)
    G = np.array(list(itertools.product(range(1, k + 1), repeat=n)), dtype=int).reshape(-1, n)
    cols = []
    for j in range(1, k + 1):
        hit = G == j
        cols.append(hit.sum(axis=1))
        cols.append((hit & (x == 1)).sum(axis=1))
    sig, counts = np.unique(np.stack(cols, axis=1), axis=0, return_counts=True)
    return {tuple(int(v) for v in row): int(c) for row, c in zip(sig, counts)}


@functools.lru_cache(maxsize=None)
def enumerate_portions(problem: OracleProblem, k: int) -> Portions:
    if not 1 <= k <= problem.K:
        raise ValueError(f"k must be in 1..{problem.K}")
    n = problem.n
    cs = problem.class_structure
    comps = problem.components
    den = {t: rising(problem.alpha0(t), n) for t in range(1, k + 1)}
    f_k = Fraction(0)
    fstar = {t: Fraction(0) for t in range(1, k + 1)}
    pieces = dict(fstar)
    fdagger: dict[Pattern, Fraction] = {}
    ph = {h: Fraction(0) for h in range(1, min(k, n) + 1)}
    joint = {h: Fraction(0) for h in range(1, min(k, n) + 1)}
    worst = 0.0
    for sig, mult in _signatures(problem, k).items():
        ms = sig[0::2]
        ss = sig[1::2]
        used = [j for j in range(1, k + 1) if ms[j - 1] > 0]
        t = max(used)
        num = Fraction(1)
        alloc = Fraction(1)
        for j in range(1, k + 1):
            num *= comps[j - 1].weight(ms[j - 1], ss[j - 1])
            alloc *= rising(comps[j - 1].alpha, ms[j - 1])
        term_k = mult * num / den[k]
        f_k += term_k
        # same vectors evaluated in the t-component model, t = highest used component
        term_t = mult * num / den[t]
        fstar[t] += term_t
        pieces[t] += term_k
        h = len(used)
        ph[h] += mult * alloc / den[k]
        joint[h] += term_k
        if t < k:
            ratio = den[t] / den[k]
            worst = max(worst, abs(float(ratio) / math.exp(_log_a(k, t, problem.config())) - 1))
        pattern = canonical([sum(1 for j in used if cs.class_of(j) == m) for m in range(1, cs.n_classes + 1)])
        # fdagger[h] collects all of G*_s with pattern h, for s = s(h)
        if s_of_h(pattern, cs) == t:
            fdagger[pattern] = fdagger.get(pattern, Fraction(0)) + term_t
    return Portions(k, f_k, fstar, pieces, fdagger, ph, joint, worst)


def enumerate_fk(problem: OracleProblem, k: int) -> Fraction:
    return enumerate_portions(problem, k).f_k


def fdagger_by_pattern(problem: OracleProblem, k: int) -> dict[Pattern, Fraction]:
    """Every portion ``fdagger[h]`` with ``s(h) <= k``."""
    out: dict[Pattern, Fraction] = {}
    for t in range(1, k + 1):
        out.update(enumerate_portions(problem, t).fdagger)
    return out


# ---- identity suite -------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    identity: str
    n: int
    alpha: str
    structure: str
    k: int
    rel_error: float
    tol: float

    @property
    def passed(self) -> bool:
        return self.rel_error <= self.tol


def _rel(got: float, want) -> float:
    want = float(want)
    if want == 0:
        return abs(got)
    return abs(got - want) / abs(want)


def make_problem(structure: str, data: Sequence[int], alpha: Fraction) -> OracleProblem:
    alpha = Fraction(alpha)
    if structure == "alike":
        return OracleProblem.alike(data, alpha)
    if structure == "distinct":
        comps = tuple(ComponentSpec(alpha + Fraction(j, 2), 1 + j, 1) for j in range(K_MAX))
        return OracleProblem(tuple(data), comps)
    if structure == "mixed":
        A = ComponentSpec(alpha, 1, 1)
        B = ComponentSpec(alpha + Fraction(1, 2), 2, 1)
        return OracleProblem(tuple(data), (A, B, A, A, B))
    raise ValueError(f"unknown class structure {structure!r}")


GRIDS = {
    "small": {"n": (2, 3, 4), "alpha": (Fraction(1, 2), Fraction(1), Fraction(2))},
    "full": {"n": (2, 3, 4, 5, 6), "alpha": (Fraction(1, 2), Fraction(1), Fraction(2))},
}
STRUCTURES = ("alike", "distinct", "mixed")


def check_problem(problem: OracleProblem, structure: str, tol: float = 1e-12) -> list[CheckResult]:
    n = problem.n
    cfg = problem.config()
    cs = problem.class_structure
    alpha = str(problem.components[0].alpha)
    out: list[CheckResult] = []

    def rec(name, k, got, want):
        out.append(CheckResult(name, n, alpha, structure, k, _rel(float(got), want), tol))

    K = problem.K
    f = [enumerate_fk(problem, k) for k in range(1, K + 1)]
    fstar_K = enumerate_portions(problem, K).fstar
    fd = fdagger_by_pattern(problem, K)
    fd_float = {h: float(v) for h, v in fd.items()}
    f_float = [float(v) for v in f]

    recon = fstar_reconstruct([float(fstar_K[t]) for t in range(1, K + 1)], cfg)
    dec = fstar_decompose(f_float, cfg)
    for k in range(1, K + 1):
        por = enumerate_portions(problem, k)
        rec("fk_from_fstar", k, recon[k - 1], f[k - 1])
        rec("fstar_from_f", k, dec[k - 1], por.fstar[k])
        rec("fstar_partition", k, float(sum(por.pieces.values())), por.f_k)
        rec("fk_from_patterns", k, represent_fk(fd_float, k, cs, cfg), f[k - 1])
        prev, star = represent_fk_split(fd_float, k, cs, cfg)
        rec("fk_split_sum", k, prev + star, f[k - 1])
        rec("fk_split_fstar", k, star, por.fstar[k])
        rec("c1c2_link", k, 1 + por.max_c1c2_deviation, 1)

    if problem.all_alike:
        m = min(K, n)
        fd_vec = [float(fd.get((h,), 0)) for h in range(1, m + 1)]
        back = fdagger_to_f(fd_vec, cfg, K)
        for k in range(1, K + 1):
            rec("fk_from_fdagger", k, back[k - 1], f[k - 1])
            # f_k = a[k,k-1] f_{k-1} + sum_h C(k-1, h-1) a[k, h] fdagger_h
            terms = [math.comb(k - 1, h - 1) * math.exp(_log_a(k, h, cfg)) * fd_vec[h - 1] for h in range(1, min(k, n) + 1)]
            if k > 1:
                terms.append(math.exp(_log_a(k, k - 1, cfg)) * f_float[k - 2])
            rec("fk_recursive_fdagger", k, math.fsum(terms), f[k - 1])
        fwd = f_to_fdagger(f_float[:m], cfg)
        for h in range(1, m + 1):
            rec("fdagger_from_f", h, fwd[h - 1], fd[(h,)])
        for k in range(n + 1, K + 1):
            rec("f_beyond_n", k, extend_f(f_float[:n], cfg, k), f[k - 1])
        for k in range(1, K + 1):
            por = enumerate_portions(problem, k)
            for h in range(1, min(k, n) + 1):
                rec("prior_h_given_k", k, prior_h_given_k(h, k, cfg, "convolution"), por.prior_h_given_k[h])
        # posterior of h under a uniform prior on 1..K
        pcfg = cfg.with_prior(Uniform(K))
        post = posterior_h(fd_vec, pcfg).values
        joint = [sum((enumerate_portions(problem, k).joint_h.get(h, 0) for k in range(h, K + 1)), Fraction(0))
                 for h in range(1, n + 1)]
        total = sum(joint, Fraction(0))
        for h in range(1, n + 1):
            rec("posterior_h", h, post[h - 1], joint[h - 1] / total)
    return out


def random_data(n: int, rng: np.random.Generator) -> tuple[int, ...]:
    return tuple(int(v) for v in rng.integers(0, 2, n))


def run_identity_suite(grid: str = "full", seed: int = 0, tol: float = 1e-12,
                       structures: Iterable[str] = STRUCTURES) -> list[CheckResult]:
    """Check every identity on each (n, alpha, structure) cell of the grid."""
    if grid not in GRIDS:
        raise ValueError(f"grid must be one of {sorted(GRIDS)}")
    spec = GRIDS[grid]
    rng = np.random.default_rng(seed)
    results: list[CheckResult] = []
    for n in spec["n"]:
        data = random_data(n, rng)
        for alpha in spec["alpha"]:
            for structure in structures:
                results.extend(check_problem(make_problem(structure, data, alpha), structure, tol))
    return results
