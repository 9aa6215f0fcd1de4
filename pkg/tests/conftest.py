import json
import math
from fractions import Fraction

import mpmath
import pytest

import kposterior
from kposterior.config import ModelConfig, Uniform

mpmath.mp.dps = 50


def exact_a(k, t, n, alpha) -> Fraction:
    """Linking coefficient from rising factorials, exact for rational alpha."""
    alpha = Fraction(alpha)
    num = den = Fraction(1)
    for i in range(n):
        num *= t * alpha + i
        den *= k * alpha + i
    return num / den


def mp_a(k, t, n, alpha):
    return mpmath.rf(t * mpmath.mpf(alpha), n) / mpmath.rf(k * mpmath.mpf(alpha), n)


def partition_count(N: int) -> int:
    """p(N) by Euler's pentagonal-number recurrence."""
    p = [1] + [0] * N
    for m in range(1, N + 1):
        s, j = 0, 1
        while True:
            g1 = j * (3 * j - 1) // 2
            if g1 > m:
                break
            sign = 1 if j % 2 else -1
            s += sign * p[m - g1]
            g2 = j * (3 * j + 1) // 2
            if g2 <= m:
                s += sign * p[m - g2]
            j += 1
        p[m] = s
    return p[N]


@pytest.fixture(scope="session")
def galaxy_file():
    return kposterior.galaxy_example_path()


@pytest.fixture(scope="session")
def galaxy(galaxy_file):
    raw = json.loads(galaxy_file.read_text())
    from kposterior.transforms import MarginalEstimates

    e = raw["estimates"]
    est = MarginalEstimates(tuple(e["values"]), e["kind"], e["residual_tail_mass"])
    return est, ModelConfig(raw["n"], raw["alpha"], Uniform(raw["k_prior"]["k_max"])), raw["mcmc_draws"]


def rel(a, b):
    return abs(a - b) / abs(b) if b != 0 else abs(a)


def isclose_rel(a, b, tol):
    return math.isfinite(a) and rel(a, b) <= tol
