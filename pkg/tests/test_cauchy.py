import numpy as np
import pytest
from dataclasses import replace
from hypothesis import given, strategies as st

from itolab import presets
from itolab.cauchy import (CauchyProblem, Growth, check_problem, discount_factors, feynman_kac_solve,
                           kolmogorov_solve, pde_residual, weak_error_coefficient)
from itolab.diffusion import GeneratorInput
from itolab.errors import DivergenceError, InvalidArgument
from itolab.rng import SeedSpec
from itolab.sde import Coefficients
from conftest import bits_equal

BM = presets.get("bm").setup().coeffs


def cauchy(name, **params):
    return presets.get(name).setup(params).cauchy


def test_constant_payoff_exact():
    prob = CauchyProblem(presets.get("gbm").setup().coeffs, 1.0, lambda x: np.ones(x.shape[:-1]))
    est = kolmogorov_solve(prob, 0.0, [1.0], 16, 1000, SeedSpec(1))
    assert est.value.mean == 1.0 and est.value.stderr == 0.0


def test_heat():
    est = kolmogorov_solve(cauchy("heat-1d"), 0.0, [1.0], 64, 20000, SeedSpec(40))
    assert est.value.within(2.0, 4)
    assert est.extra["diverged"] == 0


def test_gbm_terminal_mean_with_weak_band():
    prob = cauchy("gbm-terminal")
    C, ests = weak_error_coefficient(prob, 0.0, [1.0], [16, 32, 64], 20000, SeedSpec(41), kolmogorov_solve)
    e = ests[-1]
    assert e.value.within(np.exp(0.05), 4, abs(C) / 64)


def test_constant_discount():
    C, ests = weak_error_coefficient(cauchy("const-discount"), 0.0, [0.0], [16, 32, 64], 20000, SeedSpec(42))
    assert ests[-1].value.within(np.exp(-1.0), 4, abs(C) / 64)


def test_constant_source():
    est = feynman_kac_solve(cauchy("const-source"), 0.0, [0.0], 32, 1000, SeedSpec(43))
    # f = 0 and h constant: every path contributes exactly -h0 (T - t)
    assert est.value.mean == pytest.approx(-1.0, abs=1e-12)
    assert est.value.stderr < 1e-12


@pytest.mark.parametrize("zero_fields", [False, True])
def test_feynman_kac_reduces_to_kolmogorov(zero_fields):
    prob = cauchy("heat-1d")
    fk = prob
    if zero_fields:
        fk = replace(prob, c=lambda t, x: np.zeros(x.shape[:-1]), h=lambda t, x: np.zeros(x.shape[:-1]))
    a = kolmogorov_solve(prob, 0.0, [1.0], 32, 5000, SeedSpec(44))
    b = feynman_kac_solve(fk, 0.0, [1.0], 32, 5000, SeedSpec(44))
    assert a.value.mean == b.value.mean and a.value.stderr == b.value.stderr


def test_kolmogorov_rejects_discount():
    with pytest.raises(InvalidArgument):
        kolmogorov_solve(cauchy("const-discount"), 0.0, [0.0], 8, 100, SeedSpec(1))


def test_discount_monotone():
    c = lambda t, x: x[..., 0] ** 2 + 0.1 * t
    prob = CauchyProblem(BM, 1.0, lambda x: x[..., 0], c=c)
    Z = discount_factors(prob, 0.0, [0.5], 64, 500, SeedSpec(45))
    assert np.all(Z > 0) and np.all(Z <= 1) and np.all(np.diff(Z, axis=1) <= 0)
    assert Z[:, 0].tolist() == [1.0] * 500


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_linearity_in_payoff(a, b):
    f1 = lambda x: x[..., 0] ** 2
    f2 = lambda x: np.cos(x[..., 0])
    base = dict(coeffs=presets.get("ou").setup().coeffs, T=1.0, c=lambda t, x: 0.5 + 0 * x[..., 0])
    e1 = feynman_kac_solve(CauchyProblem(f=f1, **base), 0.0, [0.2], 16, 200, SeedSpec(46))
    e2 = feynman_kac_solve(CauchyProblem(f=f2, **base), 0.0, [0.2], 16, 200, SeedSpec(46))
    e = feynman_kac_solve(CauchyProblem(f=lambda x: a * f1(x) + b * f2(x), **base), 0.0, [0.2], 16, 200,
                          SeedSpec(46))
    assert e.value.mean == pytest.approx(a * e1.value.mean + b * e2.value.mean, abs=1e-12)


def _closed_forms():
    T, beta, c0, h0 = 1.0, 0.05, 1.0, 2.0
    z = lambda x: 0 * x[..., 0]
    yield cauchy("heat-1d"), GeneratorInput(lambda t, x: x[..., 0] ** 2 + (T - t), lambda t, x: z(x) - 1,
                                            lambda t, x: 2 * x, lambda t, x: 2 + 0 * x[..., None])
    e = lambda t: np.exp(beta * (T - t))
    yield cauchy("gbm-terminal"), GeneratorInput(lambda t, x: x[..., 0] * e(t), lambda t, x: -beta * x[..., 0] * e(t),
                                                 lambda t, x: e(t) + 0 * x, lambda t, x: 0 * x[..., None])
    d = lambda t: np.exp(-c0 * (T - t))
    yield cauchy("const-discount"), GeneratorInput(
        lambda t, x: d(t) * (x[..., 0] ** 2 + T - t), lambda t, x: d(t) * (c0 * (x[..., 0] ** 2 + T - t) - 1),
        lambda t, x: d(t) * 2 * x, lambda t, x: d(t) * 2 + 0 * x[..., None])
    yield cauchy("const-source", T=T), GeneratorInput(lambda t, x: -h0 * (T - t) + z(x), lambda t, x: h0 + z(x),
                                                      lambda t, x: 0 * x, lambda t, x: 0 * x[..., None])


@pytest.mark.parametrize("prob,v", list(_closed_forms()))
def test_closed_forms_solve_the_pde(prob, v):
    from itolab import rng
    u = rng.uniforms(47, np.arange(20, dtype=np.uint64), 0, 1)
    t, x = prob.T * u[:, 0], 6 * u[:, 1:2] - 3
    v.check_derivatives(1)
    res = np.array([pde_residual(v, prob, ti, xi) for ti, xi in zip(t, x)])
    assert np.max(np.abs(res)) < 1e-6


def test_negative_discount_rejected():
    prob = CauchyProblem(BM, 1.0, lambda x: x[..., 0], c=lambda t, x: -1 + 0 * x[..., 0])
    with pytest.raises(InvalidArgument):
        check_problem(prob)
    with pytest.raises(InvalidArgument):
        feynman_kac_solve(prob, 0.0, [0.0], 4, 10, SeedSpec(1))


def test_growth_declarations():
    assert check_problem(cauchy("heat-1d")) == []
    wild = CauchyProblem(BM, 1.0, lambda x: np.exp(x[..., 0] ** 2), f_growth=Growth(L=1.0, lam=1.0))
    assert len(check_problem(wild)) == 1
    neg = CauchyProblem(BM, 1.0, lambda x: x[..., 0], f_growth=Growth(nonnegative=True))
    assert "nonnegative" in check_problem(neg)[0]
    assert cauchy("const-source").f_growth.kind == "nonnegative"


def test_divergence_threshold():
    blow = Coefficients(lambda t, x: x**3, lambda t, x: np.ones(x.shape + (1,)), 1, 1)
    prob = CauchyProblem(blow, 1.0, lambda x: x[..., 0])
    with pytest.raises(DivergenceError):
        kolmogorov_solve(prob, 0.0, [3.0], 16, 200, SeedSpec(1))


def test_argument_validation():
    with pytest.raises(InvalidArgument):
        kolmogorov_solve(cauchy("heat-1d"), 1.0, [0.0], 4, 10, SeedSpec(1))
    with pytest.raises(InvalidArgument):
        kolmogorov_solve(cauchy("heat-1d"), 0.0, [0.0, 1.0], 4, 10, SeedSpec(1))
    with pytest.raises(InvalidArgument):
        kolmogorov_solve(cauchy("heat-1d"), 0.0, [0.0], 4, 1, SeedSpec(1))
    a = kolmogorov_solve(cauchy("heat-1d"), 0.0, [0.0], 4, 10, SeedSpec(1))
    b = kolmogorov_solve(cauchy("heat-1d"), 0.0, [0.0], 4, 10, SeedSpec(1))
    assert bits_equal(a.value.mean, b.value.mean)
