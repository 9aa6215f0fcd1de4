import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import exact_a, mp_a
from kposterior.coefficients import Verdict, build_tables, inverse_row, log_a, properness_diagnostic
from kposterior.config import EquivalenceRequired, ExplicitWeights, ModelConfig, Uniform
from kposterior.signedlog import ONE


def test_log_a_examples():
    assert log_a(4, 4, ModelConfig(10, 0.7)) == ONE
    cfg = ModelConfig(2, 1.0)
    assert float(log_a(3, 1, cfg)) == pytest.approx(1 / 6, rel=1e-14)
    for n in (1, 5, 82):
        cfg = ModelConfig(n, 1.0)
        for k in range(2, 12):
            assert float(log_a(k, k - 1, cfg)) == pytest.approx((k - 1) / (k + n - 1), rel=1e-13)


def test_log_a_rejects():
    with pytest.raises(ValueError):
        log_a(2, 3, ModelConfig(5, 1.0))
    with pytest.raises(ValueError):
        ModelConfig(5, -1.0)
    with pytest.raises(ValueError):
        ModelConfig(5, (1.0, 0.0))


def test_build_tables_examples():
    t = build_tables(1, ModelConfig(4, 1.0))
    assert float(t.a(1, 1)) == 1.0
    t = build_tables(2, ModelConfig(2, 1.0))
    assert float(t.b(2, 1)) == pytest.approx(2 / 3, rel=1e-14)
    assert [float(v) for v in inverse_row(2, t)] == pytest.approx([-2 / 3, 1.0], rel=1e-14)
    t = build_tables(15, ModelConfig(82, 1.0))
    lower = np.tril_indices(15)
    assert np.all(np.isfinite(t.log_a[lower])) and np.all(np.isfinite(t.log_b[lower]))
    for k in range(1, 16):
        assert t.log_a[k - 1, k - 1] == 0.0 and t.log_b[k - 1, k - 1] == 0.0
        for s in range(1, k + 1):
            want = mp_a(k, s, 82, 1) * math.comb(k, s)
            assert float(t.b(k, s)) == pytest.approx(float(want), rel=1e-12)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
def test_inverse_pair(alpha):
    for n in range(1, 201):
        K = min(20, n)
        t = build_tables(K, ModelConfig(n, alpha))
        assert np.abs(t.b_matrix() @ t.c_matrix() - np.eye(K)).max() < 1e-10, n


@pytest.mark.parametrize("n", [1, 3, 7, 12])
def test_inverse_pair_beyond_n_at_rounding_level(n):
    # entries reach 1e5 here, so only agreement relative to the operand sizes is meaningful
    t = build_tables(20, ModelConfig(n, 1.0))
    B, C = t.b_matrix(), t.c_matrix()
    floor = (np.abs(B) @ np.abs(C)).max() * np.finfo(float).eps
    assert np.abs(B @ C - np.eye(20)).max() < 4 * floor


def test_alpha_one_factorial_form():
    for n in (1, 10, 100, 200):
        cfg = ModelConfig(n, 1.0)
        for k in range(1, 51):
            for s in (1, max(1, k // 2), k):
                want = Fraction(math.factorial(k - 1) * math.factorial(s - 1 + n),
                                math.factorial(k - 1 + n) * math.factorial(s - 1))
                assert float(log_a(k, s, cfg)) == pytest.approx(float(want), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 300), st.floats(0.05, 20), st.integers(1, 40), st.data())
def test_multiplicativity(n, alpha, k, data):
    r = data.draw(st.integers(1, k))
    t = data.draw(st.integers(1, r))
    cfg = ModelConfig(n, alpha)
    lhs = log_a(k, t, cfg).log_magnitude
    rhs = log_a(k, r, cfg).log_magnitude + log_a(r, t, cfg).log_magnitude
    assert abs(lhs - rhs) < 1e-12 * max(1.0, abs(lhs))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 60), st.sampled_from([Fraction(1, 2), Fraction(1), Fraction(2), Fraction(3, 10)]), st.integers(1, 30))
def test_log_a_against_exact(n, alpha, k):
    cfg = ModelConfig(n, float(alpha))
    for t in range(1, k + 1):
        assert float(log_a(k, t, cfg)) == pytest.approx(float(exact_a(k, t, n, alpha)), rel=1e-12)


def test_per_component_alpha():
    alphas = (0.5, 1.5, 1.0, 2.0)
    cfg = ModelConfig(6, alphas)
    assert float(log_a(4, 2, cfg)) == pytest.approx(float(_ratio(2, 5, 6)), rel=1e-13)
    with pytest.raises(EquivalenceRequired):
        properness_diagnostic(cfg.with_prior(Uniform(5)))


def _ratio(x_t, x_k, n):
    num = den = Fraction(1)
    for i in range(n):
        num *= Fraction(x_t) + i
        den *= Fraction(x_k) + i
    return num / den


def test_properness_uniform_and_divergent():
    rep = properness_diagnostic(ModelConfig(5, 1.0, Uniform(30)))
    assert rep.verdict is Verdict.CONVERGENT
    rep = properness_diagnostic(ModelConfig(5, 1.0, ExplicitWeights((1.0,), tail_ratio=1.0)), j_max=20_000)
    assert rep.verdict is Verdict.DIVERGENT
    assert rep.partial_sums[-1] > 10 * rep.partial_sums[len(rep.partial_sums) // 10]
    rep = properness_diagnostic(ModelConfig(5, 1.0, ExplicitWeights((1.0, 0.5), tail_ratio=0.5)))
    assert rep.verdict is Verdict.CONVERGENT
    rep = properness_diagnostic(ModelConfig(5, 1.0, ExplicitWeights((1.0,) * 50, tail_ratio=1.0)), j_max=20)
    assert rep.verdict is Verdict.INCONCLUSIVE
    with pytest.raises(ValueError):
        properness_diagnostic(ModelConfig(5, 1.0, Uniform(3)), j_max=4)


def test_properness_brackets_random():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(2, 51))
        alpha = float(rng.uniform(0.2, 5))
        w = tuple(rng.uniform(0.1, 1, 5))
        rep = properness_diagnostic(ModelConfig(n, alpha, ExplicitWeights(w, tail_ratio=0.9)), j_max=n + 200)
        assert rep.brackets_hold(strict=True).all()
    # at n = 1 both brackets coincide with the terms
    rep = properness_diagnostic(ModelConfig(1, 0.7, ExplicitWeights((1.0,), tail_ratio=0.5)), j_max=50)
    assert np.allclose(rep.terms, rep.lower, rtol=1e-14) and np.allclose(rep.terms, rep.upper, rtol=1e-14)
