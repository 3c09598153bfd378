import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import deconvband.bandwidth as bw
from deconvband import (
    BandwidthConfig,
    Sample,
    build_table,
    empirical_cf,
    kernel_at,
    monotonize,
    pilot_eiv_polyfit,
    select_bandwidth,
    selector_criteria,
    trapezoid_grid,
)
from deconvband.bandwidth import Criteria, PilotFit, corrected_moments, crossing_index
from deconvband.errors import InputShapeError, NumericError, SelectionError
from deconvband.simulate import DgpSpec, gen_model1

X = np.linspace(-2, 2, 41)


def test_monotonize_hand_traces():
    a, s = monotonize([3, 1, 2], [-1, -3, -2])
    np.testing.assert_array_equal(a, [3, 3, 3])
    np.testing.assert_array_equal(s, [-1, -3, -3])


def test_monotonize_fixed_point():
    a, s = monotonize([-2, 0, 0, 5], [4, 1, 1, -3])
    np.testing.assert_array_equal(a, [-2, 0, 0, 5])
    np.testing.assert_array_equal(s, [4, 1, 1, -3])


def test_monotonize_length_mismatch():
    with pytest.raises(InputShapeError):
        monotonize([1, 2], [1])


vectors = st.integers(1, 30).flatmap(
    lambda n: st.tuples(*(arrays(float, n, elements=st.floats(-1e3, 1e3)) for _ in range(2)))
)


@settings(max_examples=100, deadline=None)
@given(vectors)
def test_monotonize_properties(pair):
    da, ds = pair
    a, s = monotonize(da, ds)
    assert np.all(np.diff(a) >= 0)
    assert np.all(np.diff(s) <= 0)
    np.testing.assert_array_equal(a, np.maximum.accumulate(da))
    np.testing.assert_array_equal(s, np.minimum.accumulate(ds))


def test_crossing_rule_cn_counterexample_with_rising_variance():
    assert crossing_index([-33.0], [1.0], 1 / 64) == 1
    assert crossing_index([-33.0], [1.0], 1 / 32) is None


def test_crossing_rule_examples():
    assert crossing_index([1.0], [-0.5], 1.0) == 1
    assert crossing_index([-1.0, -1.0], [-0.5, -0.5], 1.0) is None
    # 4 * 0.2 < 1 <= 4 * 0.3: the third difference fires, i.e. candidate 3.
    assert crossing_index([-1.0, 0.2, 0.3], [-1.0, -1.0, -1.0], 4.0) == 3


decreasing_variance = st.integers(1, 30).flatmap(
    lambda n: st.tuples(arrays(float, n, elements=st.floats(-1e3, 1e3)),
                        arrays(float, n, elements=st.floats(-1e3, 0.0)))
)


@settings(max_examples=200, deadline=None)
@given(decreasing_variance, st.floats(0.01, 10), st.floats(1.0, 10))
def test_larger_cn_never_selects_larger_index(pair, cn, factor):
    # Holds when the variance criterion is non-increasing in h; with a variance
    # increase and a bias decrease, a larger c_n makes the rule harder to meet.
    a, s = monotonize(*pair)
    small = crossing_index(a, s, cn)
    large = crossing_index(a, s, cn * factor)
    if small is not None:
        assert large is not None and large <= small


def test_pilot_error_free_equals_ols(rng):
    x = rng.normal(0, 1.5, 300)
    y = 1 - 0.5 * x + 0.3 * x**2 - 0.1 * x**3 + rng.normal(size=300)
    s = Sample(y, x, np.zeros(5))
    for degree in (1, 2, 3):
        fit = pilot_eiv_polyfit(s, degree)
        design = np.vander(x, degree + 1, increasing=True)
        ols = np.linalg.lstsq(design, y, rcond=None)[0]
        np.testing.assert_allclose(fit.coef, ols, rtol=1e-10, atol=1e-10)
        assert fit.degree == degree


def test_pilot_degree_one_matches_two_by_two_system():
    y = np.array([1.0, 2.5, 0.5, 3.0, 2.0])
    w = np.array([-1.0, 0.5, -0.5, 2.0, 1.0])
    eta = np.array([0.4, -0.4, 0.2, -0.2])
    mat = np.array([[1.0, w.mean()], [w.mean(), np.mean(w**2) - np.mean(eta**2)]])
    rhs = np.array([y.mean(), np.mean(w * y)])
    expected = np.linalg.solve(mat, rhs)
    fit = pilot_eiv_polyfit(Sample(y, w, eta), 1)
    np.testing.assert_allclose(fit.coef, expected, rtol=1e-13)


def test_corrected_moments_normal_laplace(rng):
    n = 400_000
    b = 2**-0.5
    x = rng.normal(0, 1.2, n)
    w = x + rng.laplace(0, b, n)
    s = Sample(x, w, rng.laplace(0, b, n))
    ex, eyx, _ = corrected_moments(s, 2)
    truth = np.array([1.0, 0.0, 1.44, 0.0, 3 * 1.2**4])
    # Plug-in standard errors from the observed W moments bound the estimator's noise.
    se = np.array([0, np.std(w), np.std(w**2), np.std(w**3), np.std(w**4)]) / np.sqrt(n)
    se = se * np.array([1, 1, 1.5, 2, 3])
    assert np.all(np.abs(ex - truth) <= 3 * se + 1e-12)
    # With Y = X, E[Y X^k] = E[X^(k+1)].
    np.testing.assert_allclose(eyx[:2], [0.0, 1.44], atol=0.03)


def test_pilot_reduces_attenuation_bias():
    s, _ = gen_model1(DgpSpec("model1", "linear", 1.0, 100_000, 1), with_latent=True)
    naive = np.polyfit(s.w, s.y, 1)[0]
    eiv = pilot_eiv_polyfit(s, 1).coef[1]
    assert abs(eiv - 1.0) * 5 <= abs(naive - 1.0)


def brute_criteria(s, fit, h, x):
    tbl = build_table(empirical_cf(s.eta, trapezoid_grid(65)), h=h)
    k = kernel_at(tbl, (x[:, None] - s.w[None, :]) / h)
    terms = (s.y[None, :] - fit(x)[:, None]) * k
    a = terms.mean(axis=1)
    s2 = np.mean(terms**2, axis=1) - a**2
    return np.max(a**2), np.max(s2) / s.n


def test_selector_criteria_brute_force(rng):
    s = Sample(rng.normal(size=10), rng.normal(0, 1, 10), rng.laplace(0, 0.5, 10))
    fit = pilot_eiv_polyfit(s, 1)
    x = np.linspace(-1, 1, 7)
    for h in (0.4, 0.9):
        got = selector_criteria(s, fit, h, x)
        np.testing.assert_allclose(got, brute_criteria(s, fit, h, x), rtol=1e-9)
        assert got.sup_a2 >= 0 and got.sup_s2_over_n >= 0


def test_selector_criteria_constant_response(model1_sample):
    s = model1_sample.with_response(np.full(model1_sample.n, 2.0))
    fit = PilotFit(np.array([2.0]), np.zeros(1), np.zeros(1), np.zeros(1))
    got = selector_criteria(s, fit, 0.5, X)
    assert got.sup_a2 == 0.0 and got.sup_s2_over_n == 0.0


def test_selector_criteria_permutation_invariant(model1_sample, rng):
    s = model1_sample
    fit = pilot_eiv_polyfit(s, 3)
    perm = rng.permutation(s.n)
    t = Sample(s.y[perm], s.w[perm], s.eta[rng.permutation(s.m)])
    np.testing.assert_allclose(selector_criteria(t, fit, 0.5, X), selector_criteria(s, fit, 0.5, X),
                               rtol=1e-10)


def test_select_bandwidth_trace(model1_sample):
    h, trace = select_bandwidth(model1_sample, BandwidthConfig(x_grid=X))
    assert h == trace.h == trace.h_grid[trace.index]
    assert 1 <= trace.index < 20
    assert np.all(np.diff(trace.delta_a_mono) >= 0)
    assert np.all(np.diff(trace.delta_s_mono) <= 0)
    assert trace.cn == pytest.approx(3.0**0.3)
    assert len(trace.sup_a2) == len(trace.h_grid) == 20
    assert json.loads(trace.to_json())["index"] == trace.index


def test_select_bandwidth_threads_agree(model1_sample):
    cfg = BandwidthConfig(x_grid=X)
    h1, t1 = select_bandwidth(model1_sample, cfg, workers=1)
    h3, t3 = select_bandwidth(model1_sample, cfg, workers=3)
    assert h1 == h3 and t1.to_dict() == t3.to_dict()


def test_select_bandwidth_cn_monotone(model1_sample):
    idx = [select_bandwidth(model1_sample, BandwidthConfig(x_grid=X, cn_exponent=e))[1].index
           for e in (0.1, 0.3, 0.5)]
    assert idx[0] >= idx[1] >= idx[2]


def test_selected_h_inside_grid_most_seeds():
    inside = 0
    seeds = range(30)
    for seed in seeds:
        s = gen_model1(DgpSpec("model1", "linear", 2.0, 500, 1000 + seed))
        _, trace = select_bandwidth(s, BandwidthConfig(x_grid=np.linspace(-2, 2, 101)))
        inside += 0 < trace.index < len(trace.h_grid) - 1
    assert inside >= 0.9 * len(seeds)


def test_user_grid_validation(model1_sample):
    for grid in ([0.5], [0.5, 0.4], [-0.1, 0.3]):
        with pytest.raises(InputShapeError):
            select_bandwidth(model1_sample, BandwidthConfig(x_grid=X, grid=np.array(grid)))


def test_no_crossing_fallback(model1_sample, monkeypatch):
    # Squared bias keeps falling and variance keeps falling: the rule never fires.
    values = iter([Criteria(1.0 / k, 1.0 / k) for k in range(1, 6)])
    monkeypatch.setattr(bw, "selector_criteria", lambda *a, **k: next(values))
    cfg = BandwidthConfig(x_grid=X, grid=np.array([0.1, 0.2, 0.3, 0.4, 0.5]))
    with pytest.warns(UserWarning, match="no candidate"):
        h, trace = select_bandwidth(model1_sample, cfg)
    assert h == 0.5 and trace.no_crossing and "no-crossing" in trace.notes


def test_all_criteria_failing(model1_sample, monkeypatch):
    def boom(*args, **kwargs):
        raise NumericError("nope")

    monkeypatch.setattr(bw, "selector_criteria", boom)
    with pytest.raises(SelectionError):
        select_bandwidth(model1_sample, BandwidthConfig(x_grid=X, grid=np.array([0.2, 0.4])))
