import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dinisrb.errors import ValidationError
from dinisrb.grassmann import GeometricPotential
from dinisrb.pressure import (
    ConstantPotential, DynMetricContext, attractor_criterion, birkhoff_sums, bowen_ball_volume,
    dyn_distance, grid_candidates, linear_bowen_area, pressure_estimate, separated_ladder,
    separated_set, volume_plateau,
)
from dinisrb.systems import CAT, LAMBDA_PLUS, cat_eigenvectors, make_cat_map, make_perturbed_automorphism

CATMAP = make_cat_map()
LOG_L = math.log(LAMBDA_PLUS)


class CosPotential:
    def __call__(self, X):
        return 0.3 * np.cos(2 * np.pi * np.asarray(X)[..., 0])


def _pairwise_dn(s, P, n):
    ctx = DynMetricContext(s, n, 1.0)
    return dyn_distance(ctx, P[:, None, :], P[None, :, :])


def test_context_validation():
    with pytest.raises(ValidationError):
        DynMetricContext(CATMAP, 0, 0.1)
    with pytest.raises(ValidationError):
        DynMetricContext(CATMAP, 1, 0.0)


def test_dyn_distance_trivial_cases():
    x = np.array([0.2, 0.7])
    y = np.array([0.25, 0.68])
    assert dyn_distance(DynMetricContext(CATMAP, 5, 0.1), x, x) == 0.0
    assert dyn_distance(DynMetricContext(CATMAP, 1, 0.1), x, y) == pytest.approx(CATMAP.metric(x, y))


def test_dyn_distance_unstable_expansion():
    u, _ = cat_eigenvectors()
    x = np.array([0.31, 0.42])
    delta = 1e-5
    for n in (1, 3, 6):
        d = dyn_distance(DynMetricContext(CATMAP, n, 0.1), x, x + delta * u)
        assert d == pytest.approx(LAMBDA_PLUS ** (n - 1) * delta, rel=1e-6)


def test_dyn_distance_capped_by_diameter():
    u, _ = cat_eigenvectors()
    x = np.array([0.31, 0.42])
    d = dyn_distance(DynMetricContext(CATMAP, 12, 0.1), x, x + 1e-3 * u)
    assert d <= math.sqrt(2) / 2 + 1e-12


def test_separated_set_singletons():
    X = grid_candidates(10)
    S = separated_set(DynMetricContext(CATMAP, 1, 1.0), X)
    assert len(S) == 1 and S.spanning
    same = np.tile([[0.3, 0.3]], (50, 1))
    assert len(separated_set(DynMetricContext(CATMAP, 4, 0.01), same)) == 1


def test_separated_set_packing_count():
    # eps-balls around a maximal separated set cover the unit-area torus and
    # eps/2-balls are disjoint: 1/(pi eps^2) <= |S| <= 4/(pi eps^2)
    for eps in (0.5, 0.25):
        lo, hi = math.ceil(1 / (math.pi * eps ** 2)), math.floor(4 / (math.pi * eps ** 2))
        for seed in range(4):
            S = separated_set(DynMetricContext(CATMAP, 1, eps), grid_candidates(60), seed=seed)
            assert lo <= len(S) <= hi


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 4), st.floats(0.05, 0.3), st.integers(0, 50))
def test_separated_and_spanning(n, eps, seed):
    X = grid_candidates(14, jitter_seed=seed)
    S = separated_set(DynMetricContext(CATMAP, n, eps), X, seed=seed)
    D = _pairwise_dn(CATMAP, S.points, n)
    np.fill_diagonal(D, np.inf)
    assert D.min() > eps
    cover = dyn_distance(DynMetricContext(CATMAP, n, eps), X[:, None, :], S.points[None, :, :]).min(axis=1)
    assert cover.max() <= eps and S.spanning


def test_separated_set_deterministic():
    X = grid_candidates(40)
    a = separated_set(DynMetricContext(CATMAP, 3, 0.05), X, seed=7)
    b = separated_set(DynMetricContext(CATMAP, 3, 0.05), X, seed=7)
    assert np.array_equal(a.indices, b.indices)


def test_birkhoff_sums_constant():
    S = birkhoff_sums(ConstantPotential(0.7), CATMAP, grid_candidates(5), 4)
    assert S.shape == (5, 25)
    assert np.allclose(S[3], 2.1)


@settings(max_examples=10, deadline=None)
@given(st.floats(-2, 2))
def test_constant_shift_exact_per_row(c):
    X = grid_candidates(30)
    ladder = separated_ladder(CATMAP, X, [0.1, 0.05], [1, 2, 3], seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        base = pressure_estimate(CATMAP, CosPotential(), [0.1, 0.05], [1, 2, 3], X, ladder=ladder)
        shifted = pressure_estimate(CATMAP, _Shift(CosPotential(), c), [0.1, 0.05], [1, 2, 3], X, ladder=ladder)
    for r0, r1 in zip(base.rows, shifted.rows):
        assert r1["rate"] - r0["rate"] == pytest.approx(c, abs=1e-9)


class _Shift:
    def __init__(self, base, c):
        self.base, self.c = base, c

    def __call__(self, X):
        return self.base(X) + self.c


def test_pressure_monotone_in_eps():
    X = grid_candidates(60)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = pressure_estimate(CATMAP, CosPotential(), [0.2, 0.1, 0.05], [1, 2, 3, 4], X)
    by = {(r["epsilon"], r["n"]): r["log_P"] for r in est.rows}
    for n in (1, 2, 3, 4):
        assert by[(0.2, n)] <= by[(0.1, n)] + 1e-12 <= by[(0.05, n)] + 2e-12


def test_spanning_sandwich():
    eps, n = 0.08, 3
    X = grid_candidates(60)
    ctx = DynMetricContext(CATMAP, n, eps)
    S = separated_set(ctx, X)
    Sn = birkhoff_sums(CosPotential(), CATMAP, X, n)[n]
    P = np.log(np.sum(np.exp(Sn[S.indices])))
    d = dyn_distance(ctx, X[:, None, :], S.points[None, :, :])  # (N, |S|)
    Q = np.log(np.sum(np.exp([Sn[d[:, j] <= eps].max() for j in range(len(S))])))
    osc = 0.3 * 2 * np.pi * eps * math.sqrt(2)  # Lipschitz bound over an eps-ball
    assert P <= Q <= P + n * osc


def test_cat_entropy_and_unstable_pressure_small():
    # coarse cloud; the full-size check lives in the acceptance suite
    X = grid_candidates(200)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        e0 = pressure_estimate(CATMAP, ConstantPotential(0.0), [0.05], [1, 2, 3, 4, 5], X)
    assert e0.method == "increment" and e0.per_n
    assert abs(e0.extrapolated - LOG_L) < 0.15
    assert not math.isnan(e0.quartile_mean)


def test_method_validation():
    with pytest.raises(ValidationError):
        pressure_estimate(CATMAP, ConstantPotential(), [0.1], [1], grid_candidates(5), method="median")
    with pytest.raises(ValidationError):
        separated_ladder(CATMAP, grid_candidates(5), [0.1], [0, 1])


def test_volume_full_cube_at_n1():
    v = bowen_ball_volume(CATMAP, [0.4, 0.4], 1, 0.1, 2000, cube_radius=0.05)
    assert v.estimate == pytest.approx(0.01) and v.hits == 2000


def test_volume_validation_and_zero_hits():
    with pytest.raises(ValidationError):
        bowen_ball_volume(CATMAP, [0.4, 0.4], 2, 0.1, 999)
    v = bowen_ball_volume(CATMAP, [0.4, 0.4], 12, 0.001, 1000, cube_radius=0.3)
    assert v.below_resolution and v.hits == 0 and v.estimate > 0


def test_volume_chunking_invariant():
    a = bowen_ball_volume(CATMAP, [0.3, 0.7], 4, 0.1, 5000, seed=3)
    b = bowen_ball_volume(CATMAP, [0.3, 0.7], 4, 0.1, 5000, seed=3, chunk=999)
    assert a.hits == b.hits


def test_linear_area_oracle():
    # at n = 1 the set is the disc of radius eps
    assert linear_bowen_area(CAT, 1, 0.1) == pytest.approx(math.pi * 0.01, rel=1e-9)
    # area shrinks like lambda^-(n-1) towards (2 eps)^2
    vals = [linear_bowen_area(CAT, n, 0.1) * LAMBDA_PLUS ** (n - 1) for n in (6, 8, 10)]
    assert vals[-1] == pytest.approx(0.04, rel=0.02)
    assert abs(vals[2] - vals[1]) < abs(vals[1] - vals[0])


def test_volume_fixed_point_matches_oracle():
    v = bowen_ball_volume(CATMAP, [0.0, 0.0], 4, 0.1, 100_000, seed=1)
    exact = linear_bowen_area(CAT, 4, 0.1)
    assert abs(v.estimate - exact) < 4 * v.stderr
    # proportional to lambda^-4 up to the bounded shape factor
    assert 0.5 < v.estimate * LAMBDA_PLUS ** 4 / (0.04 * LAMBDA_PLUS) < 1.5


def test_volume_plateau_two_sample_sizes():
    ratios = []
    for samples in (50_000, 100_000):
        out = volume_plateau(CATMAP, [0.3, 0.7], range(2, 9), 0.1, samples, seed=0)
        assert not out["any_below_resolution"]
        ratios.append(out["ratio"])
    assert max(ratios) < 1.5


def test_attractor_cat_and_rejection():
    X = grid_candidates(200)
    cfg = {"eps_list": [0.05], "n_list": [1, 2, 3, 4, 5]}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        ok = attractor_criterion(CATMAP, X, cfg)
        bad = attractor_criterion(CATMAP, X, dict(cfg, shift=-0.5))
    assert ok["consistent_with_attractor"] and abs(ok["pressure"]) < 0.15
    assert not bad["consistent_with_attractor"]
    assert bad["pressure"] == pytest.approx(ok["pressure"] - 0.5, abs=1e-9)


def test_perturbed_attractor_two_resolutions():
    s = make_perturbed_automorphism(0.01)
    cfg = {"eps_list": [0.05], "n_list": [1, 2, 3, 4]}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for res in (300, 400):
            out = attractor_criterion(s, grid_candidates(res), cfg)
            assert out["consistent_with_attractor"], (res, out["pressure"])


def test_geometric_potential_shift_attr():
    pot = GeometricPotential(CATMAP, shift=-0.5)
    x = np.array([[0.1, 0.2]])
    assert pot(x)[0] == pytest.approx(-LOG_L - 0.5, abs=1e-9)
