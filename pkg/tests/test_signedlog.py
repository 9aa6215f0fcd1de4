import math
import random
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kposterior.signedlog import ONE, ZERO, SignedLogValue, sl_add, sl_mul, sl_sum

signs = st.sampled_from([-1, 0, 1])
logs = st.floats(min_value=-300, max_value=300, allow_nan=False)
values = st.builds(SignedLogValue, signs, logs)


def test_zero_normalization():
    assert SignedLogValue(0, 5.0) == ZERO
    assert SignedLogValue(1, -math.inf).is_zero
    with pytest.raises(ValueError):
        SignedLogValue(2, 0.0)


def test_mul_examples():
    r = sl_mul(SignedLogValue(1, math.log(2)), SignedLogValue(-1, math.log(3)))
    assert r.sign == -1 and r.log_magnitude == pytest.approx(math.log(6), abs=1e-15)
    assert sl_mul(ZERO, SignedLogValue(1, 123.0)) == ZERO
    big = sl_mul(SignedLogValue(1, 700.0), SignedLogValue(1, 700.0))
    assert big == SignedLogValue(1, 1400.0)
    assert float(big) == math.inf


def test_add_examples():
    assert sl_add(SignedLogValue(1, math.log(2)), SignedLogValue(-1, math.log(2))) == ZERO
    r = sl_add(SignedLogValue(1, math.log(3)), SignedLogValue(1, 0.0))
    assert r.sign == 1 and r.log_magnitude == pytest.approx(math.log(4), abs=1e-15)
    r = sl_add(SignedLogValue(1, 0.0), SignedLogValue(-1, -40.0))
    want = 1 - mpmath.exp(-40)
    assert abs(float(r) - float(want)) / float(want) < 1e-12


def test_sum_examples():
    s = sl_sum([ONE, -ONE, ONE])
    assert s.value == ONE and s.condition == pytest.approx(3.0)
    row = [SignedLogValue(1 if j % 2 == 0 else -1, math.log(math.comb(20, j))) for j in range(21)]
    assert sl_sum(row).value == ZERO
    assert sl_sum([]).value == ZERO


@given(values, values)
def test_add_commutative_with_identity(a, b):
    assert sl_add(a, b) == sl_add(b, a)
    assert sl_add(a, ZERO) == a
    assert sl_add(ZERO, a) == a


@given(values)
def test_square_nonnegative(a):
    assert sl_mul(a, a).sign in (0, 1)


@given(values, values)
def test_mul_matches_float_product(a, b):
    r = sl_mul(a, b)
    assert r.sign == a.sign * b.sign
    if r.sign:
        assert r.log_magnitude == pytest.approx(a.log_magnitude + b.log_magnitude, abs=1e-12)


def _random_series(rng, m=50):
    return [SignedLogValue(rng.choice([-1, 1]), rng.uniform(-20, 20)) for _ in range(m)]


def _mp_sum(terms):
    return mpmath.fsum(t.sign * mpmath.exp(mpmath.mpf(t.log_magnitude)) for t in terms)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32))
def test_sum_matches_extended_precision(seed):
    rng = random.Random(seed)
    terms = _random_series(rng)
    s = sl_sum(terms)
    ref = _mp_sum(terms)
    if s.condition < 1e6:
        assert abs(float(s.value) - float(ref)) <= 1e-10 * abs(float(ref))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32))
def test_sum_permutation_invariance(seed):
    rng = random.Random(seed)
    terms = _random_series(rng, rng.randint(1, 60))
    s1 = sl_sum(terms)
    shuffled = terms[:]
    rng.shuffle(shuffled)
    s2 = sl_sum(shuffled)
    if s1.condition < 1e6:
        assert float(s2.value) == pytest.approx(float(s1.value), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.fractions(min_value=-1000, max_value=1000, max_denominator=50), min_size=1, max_size=30))
def test_sum_of_exact_rationals(xs):
    terms = [SignedLogValue.from_float(float(x)) for x in xs]
    s = sl_sum(terms)
    exact = sum((Fraction(float(x)) for x in xs), Fraction(0))
    if exact == 0:
        assert abs(float(s.value)) <= 1e-12 * sum(abs(float(x)) for x in xs)
    elif s.condition < 1e6:
        assert float(s.value) == pytest.approx(float(exact), rel=1e-12)


def test_condition_estimate_reported():
    terms = [SignedLogValue(1, 0.0), SignedLogValue(-1, math.log(1 - 1e-6))]
    s = sl_sum(terms)
    assert s.condition == pytest.approx((2 - 1e-6) / 1e-6, rel=1e-6)
