import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from itolab import rng
from itolab.errors import DegenerateFitError, InvalidArgument
from itolab.estimators import McEstimate, combined_stderr, fit_linear_bias, fit_order, reduce

finite = st.floats(-1e6, 1e6, allow_nan=False)


def test_constant_data():
    e = reduce([1, 1, 1, 1])
    assert e.mean == 1 and e.stderr == 0 and e.n_samples == 4


def test_two_points():
    e = reduce([0, 2])
    assert e.mean == 1 and e.stderr == 1


def test_needs_two_finite_samples():
    with pytest.raises(InvalidArgument):
        reduce([1.0])
    with pytest.raises(InvalidArgument):
        reduce([])
    with pytest.raises(InvalidArgument):
        reduce([1.0, np.inf])


def test_uniform_mean():
    u = rng.uniforms(31, np.arange(1000, dtype=np.uint64), 0, 500).ravel()
    e = reduce(u)
    assert e.n_samples == 10**6
    assert e.within(0.5)


@given(st.lists(finite, min_size=2, max_size=200), st.randoms(use_true_random=False))
def test_reduce_is_permutation_invariant(xs, r):
    ys = list(xs)
    r.shuffle(ys)
    a, b = reduce(xs), reduce(ys)
    assert a.mean == b.mean and a.stderr == b.stderr


@given(st.lists(finite, min_size=2, max_size=200))
def test_reduce_matches_exact_arithmetic(xs):
    e = reduce(xs)
    n = len(xs)
    mean = math.fsum(xs) / n
    assert e.mean == pytest.approx(mean, rel=1e-12, abs=1e-9)
    sd = math.sqrt(math.fsum((x - mean) ** 2 for x in xs) / (n - 1))
    assert e.stderr == pytest.approx(sd / math.sqrt(n), rel=1e-9, abs=1e-9)


def test_vector_samples():
    x = np.array([[0.0, 1.0], [2.0, 1.0], [4.0, 1.0]])
    e = reduce(x)
    assert e.mean.tolist() == [2.0, 1.0]
    assert e.stderr[1] == 0.0
    assert e.stderr[0] == pytest.approx(2 / math.sqrt(3))


def test_confidence_coverage():
    z = rng.normals(9, np.arange(10**4, dtype=np.uint64), 0, 100)
    hits = 0
    for row in z:
        lo, hi = reduce(row + 3.0).interval(1.96)
        hits += lo <= 3.0 <= hi
    assert abs(hits / 1e4 - 0.95) < 0.01


def test_fit_order_exact_power_laws():
    r = fit_order([(h, 3 * h) for h in (0.1, 0.05, 0.025, 0.0125)])
    assert r.fitted_order == pytest.approx(1.0) and r.fit_residual == pytest.approx(0, abs=1e-12)
    r = fit_order([(h, math.sqrt(h)) for h in (0.5, 0.01, 0.1)])
    assert r.fitted_order == pytest.approx(0.5)
    assert [lv[0] for lv in r.levels] == [0.5, 0.1, 0.01]
    assert r.predicted(0.04) == pytest.approx(0.2)


@given(st.floats(0.1, 3), st.floats(1e-3, 1e3), st.lists(st.floats(1e-6, 1), min_size=3, max_size=8, unique=True))
def test_fit_order_recovers_any_power(p, c, hs):
    r = fit_order([(h, c * h**p) for h in hs])
    assert r.fitted_order == pytest.approx(p, rel=1e-6, abs=1e-6)


def test_fit_order_errors():
    with pytest.raises(DegenerateFitError):
        fit_order([(0.1, 0.1), (0.05, 0.0), (0.025, 0.01)])
    with pytest.raises(InvalidArgument):
        fit_order([(0.1, 0.1), (0.05, 0.05)])
    with pytest.raises(InvalidArgument):
        fit_order([(0.1, 0.1), (0.05, -0.05), (0.01, 0.01)])


def test_linear_bias_fit_and_combined_stderr():
    lim, C = fit_linear_bias([0.1, 0.05, 0.025], [1 + 0.3, 1 + 0.15, 1 + 0.075])
    assert lim == pytest.approx(1) and C == pytest.approx(3)
    a, b = McEstimate(0, 3.0, 10), McEstimate(0, 4.0, 10)
    assert combined_stderr(a, b) == 5.0
