import csv
import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dinisrb.errors import ValidationError
from dinisrb.horseshoe import (
    BUMP_PEAK, HorseshoeParams, InverseSquareSchedule, build_g, build_tree, delta_float,
    delta_partial_sums, dini_violation_certificate, empirical_derivative_modulus, lambda_measure,
    measure_truncations, write_tree_csv,
)
from dinisrb.modulus import Modulus

P = HorseshoeParams()


def test_params_exact():
    assert P.beta(0) == Fraction(1, 100)
    assert P.alpha(0) == Fraction(1, 242)
    assert P.delta(0) == Fraction(42, 100)
    assert P.I == (Fraction(1, 200), Fraction(1))
    for n in range(50):
        assert P.delta(n) > 0
        assert P.delta(n) == Fraction(2 * (2 * n + 21), (n + 10) ** 2)
        assert float(P.delta(n)) == pytest.approx(delta_float(n))


def test_params_validation():
    with pytest.raises(ValidationError):
        HorseshoeParams(offset=0)
    with pytest.raises(ValidationError):
        HorseshoeParams(alpha_scale=Fraction(-1))


def test_tree_depth_zero():
    t = build_tree(P.I, P.alpha_schedule, 0)
    nd = t.node("")
    assert nd["left"] == P.I[0] and nd["right"] == P.I[1]
    assert nd["gap_right"] - nd["gap_left"] == P.alpha(0)
    assert (nd["gap_left"] + nd["gap_right"]) / 2 == (P.I[0] + P.I[1]) / 2


def test_tree_validation():
    with pytest.raises(ValidationError):
        build_tree(P.I, P.alpha_schedule, 41)
    with pytest.raises(ValidationError):
        build_tree((0, Fraction(1, 100)), P.alpha_schedule, 3)  # schedule too large
    t = build_tree(P.I, P.alpha_schedule, 3)
    with pytest.raises(ValidationError):
        t.node("0101")
    with pytest.raises(ValidationError):
        t.node("02")


@pytest.mark.parametrize("m", [0, 1, 5, 12])
def test_remaining_length_telescopes(m):
    t = build_tree(P.I, P.alpha_schedule, 12)
    assert t.remaining_length(m) == t.length - sum(P.alpha(n) for n in range(m + 1))
    left, right = t.leaves(m)
    assert math.fsum(right - left) == pytest.approx(float(t.remaining_length(m)), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 16))
def test_tree_consistency(d):
    t = build_tree(P.J, P.beta_schedule, 16)
    left, right = t.leaves(d)
    assert len(left) == 2 ** (d + 1)
    assert np.all(right > left)
    assert np.all(left[1:] > right[:-1])  # disjoint, ordered
    assert left[0] == -1.0 and right[-1] == pytest.approx(1.0, abs=1e-12)
    err = t.bookkeeping_error(d)
    assert err["exact_residual"] == 0 and err["float_residual"] < 1e-12


def test_children_nested_and_gap_centred():
    t = build_tree(P.I, P.alpha_schedule, 6)
    for w in ["", "0", "1", "01", "110", "10101"]:
        par = t.node(w)
        for c in "01":
            ch = t.node(w + c)
            assert par["left"] <= ch["left"] < ch["right"] <= par["right"]
        a, b = t.node(w + "0"), t.node(w + "1")
        assert a["left"] == par["left"] and a["right"] == par["gap_left"]
        assert b["left"] == par["gap_right"] and b["right"] == par["right"]
        assert par["gap_left"] + par["gap_right"] == par["left"] + par["right"]
        k = len(w)
        assert par["gap_right"] - par["gap_left"] == P.alpha(k) / 2 ** k


def test_cantor_measure_limit():
    t = build_tree(P.I, P.alpha_schedule, 5)
    lo, hi = t.measure_bounds()
    oracle = float(P.I[1] - P.I[0]) - 0.5 * (math.pi ** 2 / 6 - sum(1 / k ** 2 for k in range(1, 11)))
    assert lo <= oracle <= hi and hi - lo < 1e-8


def test_beta_series_oracle():
    oracle = math.pi ** 2 / 6 - sum(1 / k ** 2 for k in range(1, 10))
    lo, hi = P.beta_schedule.total_bounds()
    assert lo <= oracle <= hi
    assert oracle == pytest.approx(0.105166, abs=1e-6)


def test_lambda_measure():
    r = lambda_measure()
    assert r["value"] == pytest.approx(3.5904, abs=1e-3)
    oracle = (2 - (math.pi ** 2 / 6 - sum(1 / k ** 2 for k in range(1, 10)))) ** 2
    assert r["lower"] <= oracle <= r["upper"]
    assert r["positive"]


def test_measure_truncations_monotone_from_above():
    exact = lambda_measure()["value"]
    rows = measure_truncations(P, [10, 100, 1000, 10000])
    vals = [r["truncation"] for r in rows]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    for r in rows:
        assert exact < r["truncation"] <= exact + r["error_bound"]


def test_g_endpoint_bookkeeping_depth5():
    g = build_g(P, 5)
    bp = g.breakpoints()
    assert g(np.array([bp[0]]))[0] == -1.0
    assert g(np.array([bp[-1]]))[0] == pytest.approx(1.0, abs=1e-12)
    # continuity at breakpoints and nodes map onto nodes
    for x in bp[1:-1]:
        lo, hi = g(np.array([np.nextafter(x, -1)]))[0], g(np.array([x]))[0]
        assert abs(hi - lo) < 1e-12
    for w in ["", "0", "1", "011", "10110"]:
        a, b = g.tI.node(w), g.tJ.node(w)
        for key in ("gap_left", "gap_right"):
            assert g(np.array([float(a[key])]))[0] == pytest.approx(float(b[key]), abs=1e-12)


def test_g_monotone_positive_derivative():
    g = build_g(P, 8)
    x = np.linspace(float(P.I[0]), 1.0, 200001)
    y = g(x)
    assert np.all(np.diff(y) > 0)
    assert np.all(g.derivative(x) > 0)


def test_gap_endpoints_derivative_two():
    g = build_g(P, 10)
    for n in range(11):
        nd = g.tI.node("0" * n)
        xl = float(nd["gap_left"])
        assert g.derivative(np.array([xl]))[0] == 2.0


def test_gap_mean_derivative():
    g = build_g(P, 10)
    for n in range(11):
        nd = g.tI.node("1" * n)
        a, b = float(nd["gap_left"]), float(nd["gap_right"])
        mean = (g(np.array([b]))[0] - g(np.array([a]))[0]) / (b - a)
        assert mean == pytest.approx(float(2 * P.beta(n) / P.beta(n + 1)), rel=1e-6)


def test_derivative_band_dense():
    g = build_g(P, 12)
    for n in range(13):
        nd = g.tI.node("10" * (n // 2) + "1" * (n % 2))
        x = np.linspace(float(nd["gap_left"]), float(nd["gap_right"]), 2001)
        d = g.derivative(x)
        assert d.min() >= 2 - float(P.delta(n)) - 1e-12
        assert d.max() <= float(P.beta(n) / P.alpha(n) + P.delta(n)) + 1e-12
        assert d.max() == pytest.approx(2 + BUMP_PEAK * float(P.delta(n)), rel=1e-6)


def test_leaf_slope_tends_to_two():
    devs = [build_g(P, d).leaf_slope_deviation() for d in (2, 6, 12, 20)]
    assert all(a > b for a, b in zip(devs, devs[1:]))


def test_band_infeasible():
    with pytest.raises(ValidationError):
        build_g(HorseshoeParams(alpha_scale=Fraction(1, 4)), 3)
    with pytest.raises(ValidationError):
        build_g(P, 31)


def test_certificate_default():
    c = dini_violation_certificate(P, 20)
    assert c.all_dominated
    assert c.rows[0]["delta_n"] == 0.42
    assert c.first_N_above_10 is not None and c.first_N_above_10 <= 2000
    assert 3 <= c.fitted_log_slope <= 5
    assert c.lower_bound_holds
    assert c.modulus_sum >= c.delta_sum
    for r in c.rows:
        assert r["witness_distance"] <= 2.0 ** -r["n"]
        assert r["witness_jump"] >= r["delta_n"]
    js = c.to_json()
    assert set(js["rows"][0]) >= {"n", "delta_n", "omega_bound", "partial_sum"}
    json.dumps(js)


def test_certificate_with_candidate_modulus():
    weak = Modulus.power(1.0)  # Lipschitz, far too small at fine scales
    c = dini_violation_certificate(P, 20, m=weak, N=2000)
    assert not c.all_dominated
    strong = Modulus.log_power(1.0, scale=8.0)
    c2 = dini_violation_certificate(P, 20, m=strong, N=2000)
    assert c2.all_dominated


def test_empirical_modulus_dominates_delta():
    g = build_g(P, 20)
    m = empirical_derivative_modulus(g)
    for n in range(21):
        assert m(2.0 ** -n) >= float(P.delta(n))


def test_partial_sums_grow_like_4_log():
    S = delta_partial_sums(10 ** 4)
    assert S[2000] > 10
    slope = (S[10 ** 4] - S[10 ** 2]) / math.log(100)
    assert 3 <= slope <= 5


def test_tree_csv_and_certificate_json(tmp_path):
    t = build_tree(P.I, P.alpha_schedule, 4)
    p = tmp_path / "tree.csv"
    write_tree_csv(t, p, max_depth=3)
    with open(p) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["word", "left", "right", "gap_left", "gap_right"]
    assert len(rows) == 1 + 2 + 4 + 8
    q = tmp_path / "cert.json"
    dini_violation_certificate(P, 6, N=500).dump(q)
    assert json.loads(q.read_text())["rows"][0]["delta_n"] == 0.42


def test_schedule_tail_bounds():
    s = InverseSquareSchedule(10)
    lo, hi = s.tail_bounds(100)
    exact = math.fsum(1 / (n + 10) ** 2 for n in range(101, 10 ** 6)) + 1 / (10 ** 6 + 10)
    assert lo <= exact <= hi
