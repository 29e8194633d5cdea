import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dinisrb.errors import DomainError, NonDiniError, ValidationError
from dinisrb.modulus import (
    Modulus, dini_test, domination_constant, empirical_modulus, equivalence_check,
    pairs_from_samples, sandwich, tilde_integral, tilde_series,
)

TEST_MODULI = [
    Modulus.power(0.25), Modulus.power(0.5), Modulus.power(1.0),
    Modulus.log_power(2.0), Modulus.log_power(3.0), Modulus.linear(2.0),
    Modulus.table([0.1, 0.3, 1.0], [0.5, 0.8, 0.9]),
]


def test_eval_examples():
    assert Modulus.power(0.5).eval(0.25) == pytest.approx(0.5, abs=1e-15)
    for m in TEST_MODULI:
        assert m.eval(0.0) == 0.0
    assert Modulus.log_power(2).eval(math.exp(-4)) == pytest.approx(1 / 16, rel=1e-14)


def test_eval_domain():
    m = Modulus.power(0.5)
    with pytest.raises(DomainError):
        m.eval(-0.1)
    with pytest.raises(DomainError):
        m.eval(1.5)


def test_log_power_affine_extension_is_continuous_and_tangent():
    for beta in (1.0, 2.0, 4.0, 6.0):
        m = Modulus.log_power(beta)
        c0 = m.params["c0"]
        t0 = math.exp(-c0)
        assert c0 >= beta + 1
        h = 1e-7 * t0
        left, right = m.eval(t0 - h), m.eval(t0 + h)
        assert abs(right - left) < 1e-5 * m.eval(t0)
        # one-sided slopes agree at the cutoff
        sl = (m.eval(t0) - m.eval(t0 - h)) / h
        sr = (m.eval(t0 + h) - m.eval(t0)) / h
        assert sl == pytest.approx(sr, rel=1e-4)


def test_log_power_rejects_cutoff_that_breaks_concavity():
    with pytest.raises(ValidationError):
        Modulus.log_power(3.0, cutoff=math.exp(-2))


def test_table_validation():
    with pytest.raises(ValidationError):
        Modulus.table([0.1, 0.2, 0.3], [0.1, 0.3, 0.6])  # convex
    with pytest.raises(ValidationError):
        Modulus.table([0.1, 0.2], [0.3, 0.2])  # decreasing
    m = Modulus.table([0.5, 1.0], [0.5, 0.75], t_max=2.0)
    assert m.eval(2.0) == 0.75  # clamped above last sample
    assert m.eval(0.25) == 0.25


def test_json_round_trip():
    for m in TEST_MODULI:
        d = json.loads(json.dumps(m.to_dict()))
        m2 = Modulus.from_dict(d)
        ts = np.linspace(0, m.t_max, 17)
        np.testing.assert_allclose(m2.eval(ts), m.eval(ts), rtol=0, atol=0)
    with pytest.raises(ValidationError):
        Modulus.from_dict({"kind": "cubic"})


# ---- Dini test against mpmath quadrature --------------------------------

def _mp_dini(m):
    f = lambda u: mpmath.mpf(float(m.eval_log(float(u))))
    if m.kind == "log_power":
        c0 = m.params["c0"]
        return float(mpmath.quad(f, [-mpmath.inf, -c0, 0]))
    if m.kind == "table":
        knots = [math.log(t) for t in m.ts[1:] if t < 1]
        return float(mpmath.quad(f, [-mpmath.inf] + knots + [0]))
    return float(mpmath.quad(f, [-mpmath.inf, 0]))


@pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0])
def test_dini_power_summable(alpha):
    r = dini_test(Modulus.power(alpha), tol=1e-8)
    assert r.summable
    assert r.integral_estimate == pytest.approx(1 / alpha, abs=1e-8)


@pytest.mark.parametrize("beta,summable", [(0.5, False), (1.0, False), (1.5, True), (2.0, True), (3.0, True)])
def test_dini_log_power(beta, summable):
    m = Modulus.log_power(beta)
    r = dini_test(m, tol=1e-8)
    assert r.summable is summable
    if summable:
        # oracle: closed form for the deep part plus mpmath on the affine part
        c0 = m.params["c0"]
        deep = c0 ** (1 - beta) / (beta - 1)
        shallow = float(mpmath.quad(lambda u: m.eval_log(float(u)), [-c0, 0]))
        assert r.integral_estimate == pytest.approx(deep + shallow, abs=1e-7)
    else:
        assert math.isinf(r.integral_estimate)


def test_dini_table_exact():
    m = Modulus.table([0.1, 0.3, 1.0], [0.5, 0.8, 0.9])
    r = dini_test(m)
    assert r.summable
    assert r.integral_estimate == pytest.approx(_mp_dini(m), rel=1e-9)


def test_dini_report_series():
    r = dini_test(Modulus.power(1.0), cs=(0.5,))
    assert r.series_estimate(0.5) == pytest.approx(2.0, abs=1e-9)
    r = dini_test(Modulus.log_power(1.0), cs=(0.5,))
    assert math.isinf(r.series_estimate(0.5))


def test_dini_bad_tol():
    with pytest.raises(ValidationError):
        dini_test(Modulus.power(0.5), tol=0)


# ---- omega-tilde --------------------------------------------------------

def test_tilde_integral_examples():
    assert tilde_integral(Modulus.power(0.5), 0.25) == pytest.approx(1.0, rel=1e-9)
    assert tilde_integral(Modulus.power(1.0), 0.5) == pytest.approx(0.5, rel=1e-9)
    for m in TEST_MODULI:
        assert tilde_integral(m, 0.0) == 0.0


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75, 1.0])
def test_tilde_integral_power_identity(alpha):
    m = Modulus.power(alpha)
    ts = np.array([1e-6, 1e-3, 0.1, 0.5, 1.0])
    np.testing.assert_allclose(tilde_integral(m, ts), m.eval(ts) / alpha, rtol=1e-6)


def test_tilde_integral_rejects_non_dini():
    with pytest.raises(NonDiniError):
        tilde_integral(Modulus.log_power(1.0), 0.5)


def test_tilde_integral_is_a_modulus():
    m = Modulus.log_power(2.0)
    ts = np.linspace(0, 1, 41)
    vals = tilde_integral(m, ts)
    Modulus.table(ts, vals)  # validates monotone and concave


def test_tilde_series_examples():
    assert tilde_series(Modulus.power(1.0), 0.5, 1.0) == pytest.approx(2.0, abs=1e-12)
    assert tilde_series(Modulus.power(0.5), 0.25, 1.0) == pytest.approx(2.0, abs=1e-12)
    for m in TEST_MODULI:
        assert tilde_series(m, 0.5, 0.0) == 0.0


def test_tilde_series_log_power_against_mpmath():
    m = Modulus.log_power(2.0)
    c = 0.5
    # beyond the cutoff every term is (k log 2)^-2; mpmath nsum evaluates the tail
    k0 = int(math.ceil(m.params["c0"] / math.log(2)))
    head = sum(m.eval(c ** k) for k in range(k0))
    tail = float(mpmath.nsum(lambda k: (k * mpmath.log(2)) ** -2, [k0, mpmath.inf]))
    assert tilde_series(m, c, 1.0, tol=1e-12) == pytest.approx(head + tail, rel=1e-8)


def test_equivalence_examples():
    assert equivalence_check(Modulus.power(1.0), 0.5, np.linspace(0.1, 1, 10)) == pytest.approx(2.0, rel=1e-9)
    C = equivalence_check(Modulus.power(0.5), 0.5, np.linspace(0.1, 1, 10))
    # closed forms: 2 sqrt(t) over sqrt(t)/(1 - 1/sqrt 2)
    assert C == pytest.approx(max(2 * (1 - 2 ** -0.5), 1 / (2 * (1 - 2 ** -0.5))), rel=1e-9)
    m = Modulus.log_power(2.0)
    r = tilde_integral(m, 0.3) / tilde_series(m, 0.5, 0.3)
    assert equivalence_check(m, 0.5, [0.3]) == pytest.approx(max(r, 1 / r))


@pytest.mark.parametrize("c", [0.3, 0.5, 0.9])
def test_equivalence_constants_finite(c):
    for m in TEST_MODULI:
        C = equivalence_check(m, c, [1e-4, 1e-2, 0.1, 0.5, 1.0])
        assert 1.0 <= C < math.inf


@pytest.mark.parametrize("c", [0.3, 0.5, 0.9])
def test_dini_matches_series_convergence(c):
    cases = TEST_MODULI + [Modulus.log_power(1.0), Modulus.log_power(0.7)]
    for m in cases:
        summable = dini_test(m).summable
        try:
            tilde_series(m, c, 1.0)
            series_ok = True
        except NonDiniError:
            series_ok = False
        assert summable == series_ok, m


@pytest.mark.parametrize("c", [0.3, 0.5, 0.9])
def test_sandwich(c):
    for m in TEST_MODULI:
        for t in (1.0, 0.2, 1e-3):
            for n in (1, 5, 17, 30):
                s = sandwich(m, c, t, n)
                assert s["lower"] <= s["integral"] * (1 + 1e-10) + 1e-15
                assert s["integral"] <= s["upper"] * (1 + 1e-10) + 1e-15


# ---- empirical modulus ---------------------------------------------------

def test_empirical_identity():
    xs = np.linspace(0, 1, 201)
    m = empirical_modulus(pairs_from_samples(xs, xs))
    ts = np.linspace(0.005, 1, 50)
    np.testing.assert_allclose(m.eval(ts), ts, atol=1e-12)


def test_empirical_two_pairs():
    m = empirical_modulus([(0.1, 0.5), (0.2, 0.3)])
    assert m.eval(0.2) >= 0.5
    assert m.eval(0.1) == pytest.approx(0.5)
    assert m.eval(0.05) == pytest.approx(0.25)


def test_empirical_sqrt_dominated_by_power_half():
    xs = np.linspace(0, 1, 301)
    m = empirical_modulus(pairs_from_samples(xs, np.sqrt(xs)))
    ts = np.geomspace(1 / 300, 1, 60)
    assert domination_constant(m, Modulus.power(0.5), ts) <= 1.1


def test_empirical_errors():
    with pytest.raises(ValidationError):
        empirical_modulus([])
    with pytest.raises(ValidationError):
        empirical_modulus([(0.1, 0.2)])
    with pytest.raises(ValidationError):
        empirical_modulus([(0.0, 0.2), (0.1, 0.3)])


pair_lists = st.lists(
    st.tuples(st.floats(1e-6, 10.0), st.floats(0.0, 5.0)), min_size=2, max_size=60)


@settings(max_examples=200, deadline=None)
@given(pair_lists)
def test_empirical_dominates_inputs(pairs):
    m = empirical_modulus(pairs)
    for d, g in pairs:
        assert m.eval(min(1.25 * d, m.t_max)) >= g - 1e-12


# ---- concavity property ----------------------------------------------------

moduli = st.one_of(
    st.floats(0.05, 1.0).map(Modulus.power),
    st.floats(0.3, 6.0).map(Modulus.log_power),
    st.floats(0.0, 5.0).map(Modulus.linear),
    pair_lists.map(empirical_modulus),
)


@settings(max_examples=300, deadline=None)
@given(moduli, st.floats(1e-9, 1.0), st.floats(1e-9, 1.0))
def test_decreasing_slope(m, a, b):
    s, t = sorted((a, b))
    if s == t:
        return
    t_hi = m.t_max if math.isfinite(m.t_max) else 10.0
    s, t = s * t_hi, t * t_hi
    assert m.eval(s) / s >= m.eval(t) / t * (1 - 1e-12) - 1e-15


@settings(max_examples=200, deadline=None)
@given(moduli, st.lists(st.floats(0, 1.0), min_size=2, max_size=20))
def test_monotone(m, xs):
    t_hi = m.t_max if math.isfinite(m.t_max) else 10.0
    xs = np.sort(np.asarray(xs)) * t_hi
    v = m.eval(xs)
    assert np.all(np.diff(v) >= -1e-15)
