import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from itolab import presets
from itolab.dirichlet import (DirichletProblem, ball, box, check_domain, default_t_cap, dirichlet_solve,
                              ellipticity, exit_bias_coefficient, exit_paths, exit_time, interval)
from itolab.errors import CappedExitError, InvalidArgument
from itolab.rng import SeedSpec
from itolab.sde import Coefficients
from conftest import bits_equal

BM = presets.get("bm").setup().coeffs
coord = st.floats(-3, 3, allow_nan=False)


def interval_problem(**p):
    return presets.get("interval-exit").setup(p).dirichlet


def test_start_near_boundary_exits_immediately():
    prob = interval_problem()
    tau, pt, capped = exit_time(prob, [1.0 - 1e-12], 1e-4, SeedSpec(1, 3))
    assert not capped and tau <= 1e-4
    assert pt[0] in (-1.0, 1.0)


def test_start_outside_rejected():
    prob = interval_problem()
    for x in ([1.0], [2.0], [-1.5]):
        with pytest.raises(InvalidArgument):
            dirichlet_solve(prob, x, 1e-3, 10, SeedSpec(1))
    with pytest.raises(InvalidArgument):
        dirichlet_solve(prob, [0.0], 0.0, 10, SeedSpec(1))
    with pytest.raises(InvalidArgument):
        dirichlet_solve(prob, [0.0, 0.0], 1e-3, 10, SeedSpec(1))


@pytest.mark.parametrize("x", [0.0, 0.5])
def test_expected_exit_time(x):
    prob = interval_problem()
    C, ests = exit_bias_coefficient(prob, [x], 1e-3, 4000, SeedSpec(50))
    e = ests[-1]
    assert e.value.within(1 - x * x, 4, abs(C) * np.sqrt(1e-3))
    assert e.extra["mean_tau"] == pytest.approx(e.value.mean, rel=1e-12)
    assert e.extra["capped"] == 0


def test_constant_boundary_data_exact():
    prob = interval_problem(f0=2.5, h0=0.0)
    e = dirichlet_solve(prob, [0.3], 1e-3, 2000, SeedSpec(51))
    assert e.value.mean == 2.5 and e.value.stderr == 0


def test_harmonic_data():
    prob = interval_problem(f1=1.0, h0=0.0)
    e = dirichlet_solve(prob, [0.3], 1e-3, 4000, SeedSpec(52))
    assert e.value.within(0.3, 4)
    # exit points are exactly on the boundary, so the data takes only the values +-1
    b = exit_paths(prob, [0.3], 1e-3, 200, SeedSpec(52))
    assert set(np.unique(b.exit_point[:, 0])) <= {-1.0, 1.0}


def test_maximum_principle():
    prob = DirichletProblem(BM, interval(-1, 2), lambda x: np.sin(3 * x[..., 0]))
    e = dirichlet_solve(prob, [0.1], 1e-3, 2000, SeedSpec(53))
    lo, hi = min(np.sin(-3), np.sin(6)), max(np.sin(-3), np.sin(6))
    assert lo - 4 * e.value.stderr <= e.value.mean <= hi + 4 * e.value.stderr


def test_disk():
    prob = presets.get("disk-exit").setup().dirichlet
    C, ests = exit_bias_coefficient(prob, [0.0, 0.0], 1e-3, 4000, SeedSpec(54))
    assert ests[-1].value.within(0.5, 4, abs(C) * np.sqrt(1e-3))


def test_constant_discount_laplace_transform():
    # u(x) = E exp(-c0 tau) solves u''/2 = c0 u, u(+-1) = 1
    c0 = 0.5
    prob = DirichletProblem(BM, interval(-1, 1), lambda x: np.ones(x.shape[:-1]),
                            c=lambda x: np.full(x.shape[:-1], c0))
    C, ests = exit_bias_coefficient(prob, [0.2], 1e-3, 4000, SeedSpec(55))
    k = np.sqrt(2 * c0)
    assert ests[-1].value.within(np.cosh(k * 0.2) / np.cosh(k), 4, abs(C) * np.sqrt(1e-3))


def test_raw_exit_times_biased_upward():
    prob = interval_problem()
    coarse = exit_paths(prob, [0.0], 1e-2, 10000, SeedSpec(56), refine=False).tau.mean()
    fine = exit_paths(prob, [0.0], 2.5e-3, 10000, SeedSpec(56), refine=False).tau.mean()
    assert coarse > fine > 1.0 - 0.03


def test_bisection_shortens_exit_times():
    prob = interval_problem()
    raw = exit_paths(prob, [0.0], 1e-2, 500, SeedSpec(57), refine=False)
    ref = exit_paths(prob, [0.0], 1e-2, 500, SeedSpec(57))
    assert np.all(ref.tau <= raw.tau) and np.all(raw.tau - ref.tau <= 1e-2)
    assert np.all(np.abs(ref.exit_point[:, 0]) == 1.0)


def test_capped_fraction_error_and_default_cap():
    prob = interval_problem()
    with pytest.raises(CappedExitError) as ei:
        dirichlet_solve(prob, [0.0], 1e-3, 1000, SeedSpec(58), t_cap=0.05)
    assert ei.value.capped_fraction > 0.5
    assert default_t_cap(prob) == pytest.approx(100.0)
    # 50 times the exit-time scale is already enough
    e = dirichlet_solve(prob, [0.0], 1e-3, 2000, SeedSpec(58), t_cap=50.0)
    assert e.extra["capped"] == 0


def test_ellipticity_probe():
    assert ellipticity(interval_problem()) == pytest.approx(1.0)
    frozen = Coefficients(lambda t, x: np.zeros_like(x), lambda t, x: np.zeros(x.shape + (1,)), 1, 1)
    with pytest.raises(InvalidArgument):
        dirichlet_solve(DirichletProblem(frozen, interval(-1, 1), lambda x: x[..., 0]), [0.0], 1e-3, 10,
                        SeedSpec(1))
    neg = DirichletProblem(BM, interval(-1, 1), lambda x: x[..., 0], c=lambda x: -np.ones(x.shape[:-1]))
    with pytest.raises(InvalidArgument):
        ellipticity(neg)


def test_determinism_and_threads(threads):
    prob = interval_problem()
    threads(1)
    a = dirichlet_solve(prob, [0.2], 1e-2, 20000, SeedSpec(59))
    threads(4)
    b = dirichlet_solve(prob, [0.2], 1e-2, 20000, SeedSpec(59))
    assert bits_equal(a.value.mean, b.value.mean) and bits_equal(a.value.stderr, b.value.stderr)
    single = exit_time(prob, [0.2], 1e-2, SeedSpec(59, 17))
    batch = exit_paths(prob, [0.2], 1e-2, 20, SeedSpec(59))
    assert single[0] == batch.tau[17]


@given(coord, coord, coord, coord)
def test_ball_projection_consistent(a, b, c, d):
    dom = ball([0.5, -0.25], 1.5)
    x_in, x_out = np.array([a, b]), np.array([c, d])
    assume(dom.contains(x_in) and not dom.contains(x_out))
    assume(np.linalg.norm(x_out - x_in) > 1e-6)
    assert check_domain(dom, x_in, x_out)


@given(coord, coord, coord, coord)
def test_box_projection_consistent(a, b, c, d):
    dom = box([-1.0, -0.5], [1.0, 2.0])
    x_in, x_out = np.array([a, b]), np.array([c, d])
    assume(dom.contains(x_in) and not dom.contains(x_out))
    assume(np.linalg.norm(x_out - x_in) > 1e-6)
    assert check_domain(dom, x_in, x_out)


@given(st.floats(-0.999, 0.999), st.floats(1.0001, 5))
def test_interval_projection_consistent(x, y):
    dom = interval(-1, 1)
    assert check_domain(dom, np.array([x]), np.array([y]))
    assert check_domain(dom, np.array([x]), np.array([-y]))


def test_domain_constructors_validate():
    with pytest.raises(InvalidArgument):
        interval(1, 1)
    with pytest.raises(InvalidArgument):
        box([0, 0], [1, 0])
    with pytest.raises(InvalidArgument):
        ball([0, 0], 0)
    with pytest.raises(InvalidArgument):
        DirichletProblem(BM, ball([0, 0], 1), lambda x: x[..., 0])
