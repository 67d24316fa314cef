import cmath
import itertools

import numpy as np
import pytest

from defectlab.grassmann import (ContextMismatchError, DomainError, GrassmannContext, GrassmannElement,
                                 ParityError, gcosh, gexp, gr_analytic, gr_body_soul, gr_derivative, gr_mul,
                                 gsinh, property_suite, random_element)


def brute_mul(a: dict, b: dict) -> dict:
    """Reference product on {sorted index tuple: coeff} maps via explicit bubble sort."""
    out = {}
    for (ia, ca), (ib, cb) in itertools.product(a.items(), b.items()):
        seq = list(ia + ib)
        if len(set(seq)) < len(seq):
            continue
        sign = 1
        for i in range(len(seq)):
            for j in range(len(seq) - 1 - i):
                if seq[j] > seq[j + 1]:
                    seq[j], seq[j + 1] = seq[j + 1], seq[j]
                    sign = -sign
        key = tuple(seq)
        out[key] = out.get(key, 0) + sign * ca * cb
    return {k: v for k, v in out.items() if v != 0}


def as_tuples(x: GrassmannElement) -> dict:
    n = x.ctx.num_generators
    return {tuple(k + 1 for k in range(n) if m >> k & 1): c for m, c in x.terms.items()}


@pytest.fixture
def ctx():
    return GrassmannContext(4, ("t1", "t2", "t3", "t4"))


def test_generator_nilpotent(ctx):
    t1 = ctx.generator("t1")
    assert (t1 * t1) == ctx.zero()


def test_antisymmetry(ctx):
    t1, t2 = ctx.generators("t1", "t2")
    assert (t1 * t2).coefficient((1, 2)) == 1
    assert (t2 * t1).coefficient((1, 2)) == -1


def test_one_plus_product_matches_brute_force(ctx):
    t1, t2 = ctx.generators("t1", "t2")
    got = gr_mul(1 + t1, 1 + t2)
    assert as_tuples(got) == {(): 1, (1,): 1, (2,): 1, (1, 2): 1}
    assert as_tuples(got) == brute_mul(as_tuples(1 + t1), as_tuples(1 + t2))


def test_random_products_match_brute_force():
    ctx = GrassmannContext(5)
    rng = np.random.default_rng(7)
    for _ in range(50):
        a, b = random_element(ctx, rng), random_element(ctx, rng)
        ref = brute_mul(as_tuples(a), as_tuples(b))
        got = as_tuples(a * b)
        for k in set(ref) | set(got):
            assert abs(got.get(k, 0) - ref.get(k, 0)) <= 1e-12 * (1 + abs(ref.get(k, 0)))


def test_context_mismatch():
    a, b = GrassmannContext(2).generator(1), GrassmannContext(3).generator(1)
    with pytest.raises(ContextMismatchError):
        gr_mul(a, b)


def test_exp_of_zero_and_pure_soul(ctx):
    t1, t2 = ctx.generators("t1", "t2")
    assert gexp(ctx.zero()) == ctx.one()
    assert gexp(t1 * t2) == 1 + t1 * t2


def test_sinh_first_order_taylor(ctx):
    t1, t2 = ctx.generators("t1", "t2")
    c = 0.7 + 0.2j
    got = gsinh(c + t1 * t2)
    assert got.allclose(cmath.sinh(c) + cmath.cosh(c) * (t1 * t2), atol=1e-14)


def test_sinh_matches_series(ctx):
    t = ctx.generators("t1", "t2", "t3", "t4")
    a = 0.4 + 0.5 * t[0] * t[1] - 0.3j * t[2] * t[3] + 0.2 * t[0] * t[3]
    series, term = ctx.zero(), a
    for k in range(1, 40, 2):
        series = series + term
        term = term * a * a / ((k + 1) * (k + 2))
    assert gsinh(a).allclose(series, atol=1e-13)
    assert gcosh(a).allclose(gexp(a) - gsinh(a), atol=1e-13)


def test_analytic_rejects_odd_and_log_zero(ctx):
    with pytest.raises(ParityError):
        gr_analytic("exp", ctx.generator(1))
    with pytest.raises(DomainError):
        gr_analytic("log", ctx.generator(1) * ctx.generator(2))


def test_log_inverts_exp(ctx):
    t1, t2, t3, t4 = ctx.generators(1, 2, 3, 4)
    a = 0.3 + t1 * t2 + 2j * t3 * t4
    assert gr_analytic("log", gexp(a)).allclose(a, atol=1e-13)


def test_body_soul(ctx):
    t1, t2 = ctx.generators(1, 2)
    body, soul = gr_body_soul(3 + 2 * t1)
    assert body == 3 and soul == 2 * t1
    body, soul = gr_body_soul(ctx.zero())
    assert body == 0 and soul == ctx.zero()
    body, soul = gr_body_soul(t1 * t2)
    assert body == 0 and soul == t1 * t2


def test_left_derivative(ctx):
    t1, t2 = ctx.generators(1, 2)
    assert gr_derivative(t1, 1) == ctx.one()
    assert gr_derivative(t2 * t1, 1) == -t2
    assert gr_derivative(ctx.scalar(5.0), 1) == ctx.zero()


def test_parity_classification(ctx):
    t1, t2 = ctx.generators(1, 2)
    assert (t1 * t2).is_even() and t1.is_odd()
    assert (1 + t1).is_mixed()


def test_json_roundtrip(ctx):
    t1, t3 = ctx.generators(1, 3)
    x = 2 + (1 - 1j) * t1 * t3
    data = x.to_json()
    assert {"multi_index": [1, 3], "re": 1.0, "im": -1.0} in data
    assert GrassmannElement.from_json(ctx, data) == x


def test_property_suite_passes():
    rep = property_suite(cases=200, num_generators=6, seed=3)
    assert rep.max_norm <= 1e-12
    assert rep.details["per_law"]["nilpotency"] == 0.0
