import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from robgossip.apt import (AptParams, alpha, b_of_t, byz_ratio, c_of_t, chernoff_delta, chernoff_tail,
                           estimate, threshold_from_ratio)

# n=300, f=0.1, |I|=30, v=20
DEFAULT = AptParams(n_honest=270, n_byz=30, c0=27.0, view_size=20, kappa=1e-3)


def euler_c(H, c0, a, t_end, h=1e-3):
    c = c0
    for _ in range(int(round(t_end / h))):
        c += h * a * (H - c) / H
    return c


def test_alpha_worked_example():
    share = 27 / 57
    pull = share * share * 20
    push = 270 / 299 * share * 20
    assert pull == pytest.approx(4.488, abs=1e-3)
    assert push == pytest.approx(8.555, abs=1e-3)
    assert alpha(DEFAULT) == pytest.approx(pull + push, rel=1e-15)
    assert alpha(DEFAULT) == pytest.approx(13.04, abs=5e-3)


def test_alpha_honest_only_limit():
    p = AptParams(n_honest=50, n_byz=0, c0=50, view_size=10)
    assert alpha(p, n=50) == pytest.approx(10 * (1 + 50 / 49))


def test_alpha_zero_view():
    assert alpha(AptParams(270, 30, 27.0, 0)) == 0.0


def test_from_system_uses_f_as_default_f0():
    p = AptParams.from_system(300, 30, 30, 20)
    assert p.c0 == pytest.approx(27.0)
    assert p.n_honest == 270
    assert AptParams.from_system(300, 30, 30, 20, f0=0.5).c0 == pytest.approx(15.0)


def test_params_validation():
    with pytest.raises(ValueError):
        AptParams(270, 30, 27.0, 20, kappa=1.0)
    with pytest.raises(ValueError):
        AptParams(270, -1, 27.0, 20)
    with pytest.raises(ValueError):
        AptParams(270, 30, 0.5, 20)


@pytest.mark.parametrize("t", [1, 10, 50, 200])
def test_closed_form_matches_euler(t):
    a = alpha(DEFAULT)
    assert c_of_t(DEFAULT, a, t) == pytest.approx(euler_c(270, 27.0, a, t), rel=1e-4)


def test_c_of_t_endpoints():
    a = alpha(DEFAULT)
    assert c_of_t(DEFAULT, a, 0) == 27.0
    assert c_of_t(DEFAULT, a, 1e6) == pytest.approx(270.0)


def test_worked_threshold_is_twelve():
    delta, b = threshold_from_ratio(20, 0.1, 1e-3)
    assert delta == pytest.approx(4.8718, abs=1e-4)
    assert b == pytest.approx(11.7436, abs=1e-4)
    assert math.ceil(b) == 12
    assert chernoff_tail(20, 0.1, delta) == pytest.approx(1e-3, rel=1e-12)


def test_kappa_near_one_gives_mean():
    delta, b = threshold_from_ratio(20, 0.1, 1 - 1e-12)
    assert delta == pytest.approx(0.0, abs=1e-5)
    assert b == pytest.approx(2.0, abs=1e-4)


def test_cap_at_v_minus_one():
    assert threshold_from_ratio(20, 0.5, 1e-3)[1] == 19.0
    B_t, _, b = b_of_t(DEFAULT, 0)
    assert B_t == pytest.approx(30 / 57)
    assert b == 19.0


def test_no_byzantine_nodes_gives_zero_threshold():
    assert b_of_t(AptParams(300, 0, 30, 20), 5) == (0.0, 0.0, 0.0)


def test_chernoff_tail_tends_to_one():
    assert chernoff_tail(20, 0.1, 1e-9) == pytest.approx(1.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(5, 100), st.floats(1e-3, 0.5), st.floats(-6, -1))
def test_delta_solves_the_bound(v, p, log_kappa):
    kappa = 10.0**log_kappa
    delta = chernoff_delta(v, p, kappa)
    assert delta > 0
    assert chernoff_tail(v, p, delta) == pytest.approx(kappa, rel=1e-10)
    assert delta**2 * v * p / (delta + 2) == pytest.approx(-math.log(kappa), rel=1e-10)


def test_byz_ratio_decays_to_f():
    values = [byz_ratio(DEFAULT, t) for t in range(0, 501)]
    assert all(a > b for a, b in zip(values[:100], values[1:101]))
    assert all(a >= b for a, b in zip(values, values[1:]))
    assert byz_ratio(DEFAULT, 1e5) == pytest.approx(0.1, rel=1e-9)


def test_threshold_non_increasing_once_uncapped():
    bs = [b_of_t(DEFAULT, t)[2] for t in range(0, 501)]
    assert all(a >= b - 1e-12 for a, b in zip(bs, bs[1:]))
    assert bs[-1] < 19.0


def test_binomial_tail_below_bound():
    rng = np.random.default_rng(0)
    x = rng.binomial(20, 0.1, size=2_000_000)
    delta = chernoff_delta(20, 0.1, 1e-3)
    assert np.mean(x >= math.ceil((1 + delta) * 2.0)) <= chernoff_tail(20, 0.1, delta)


def test_estimate_fields_are_consistent():
    e = estimate(DEFAULT, 20)
    assert e.alpha == pytest.approx(alpha(DEFAULT))
    assert 27.0 <= e.c_t <= 270.0
    assert e.B_t == pytest.approx(30 / (30 + e.c_t))
    assert e.b_t <= 19.0
