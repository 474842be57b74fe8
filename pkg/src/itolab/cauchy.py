"""Monte Carlo for the backward Kolmogorov equation and the Feynman-Kac Cauchy problem.

Solves dv/dt + L_t v = h + c v on [0, T) x R^d with v(T, x) = f(x) through

    v(t, x) = E[ f(X_T) Z_T - sum_k h(t_k, X_k) Z_{t_k} dt_k ],
    Z_{t_k} = exp(-sum_{j<k} c(t_j, X_j) dt_j),

along Euler-Maruyama paths started at (t, x). All time integrals are
left-endpoint sums.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import rng
from .diffusion import GeneratorInput, apply_generator
from .errors import DivergenceError, InvalidArgument
from .estimators import McEstimate, fit_linear_bias, reduce
from .sde import Coefficients, PathFunctional, SdeProblem, sweep
from .rng import SeedSpec

MAX_DIVERGED_FRACTION = 1e-3


@dataclass(frozen=True)
class Growth:
    """Either |g| <= L (1 + |x|^{2 lam}) or plain nonnegativity of g."""

    L: float | None = None
    lam: float = 1.0
    nonnegative: bool = False

    @property
    def kind(self) -> str:
        return "nonnegative" if self.nonnegative else "polynomial"

    def holds(self, values, x) -> np.ndarray:
        if self.nonnegative:
            return values >= 0
        r2 = np.sum(np.asarray(x) ** 2, axis=-1)
        return np.abs(values) <= self.L * (1 + r2**self.lam)


@dataclass(frozen=True)
class CauchyProblem:
    """``f(x)``, ``c(t, x)`` and ``h(t, x)`` are vectorized over x (..., d).

    ``c`` and ``h`` default to zero. The growth declarations are recorded for
    the run metadata and spot-checked by :func:`check_problem`.
    """

    coeffs: Coefficients
    T: float
    f: Callable
    c: Callable | None = None
    h: Callable | None = None
    f_growth: Growth = field(default_factory=lambda: Growth(L=1.0))
    h_growth: Growth = field(default_factory=lambda: Growth(L=1.0))

    def sde(self, t, x) -> SdeProblem:
        return SdeProblem(self.coeffs, t, x, self.T)


def _box_samples(prob: CauchyProblem, n: int, half_width: float, seed: int):
    d = prob.coeffs.d
    u = rng.uniforms(seed, np.arange(n, dtype=np.uint64), 0, (d + 2) // 2)
    return prob.T * u[:, 0], half_width * (2 * u[:, 1:1 + d] - 1)


def check_problem(prob: CauchyProblem, n_samples: int = 1000, half_width: float = 5.0, seed: int = 0) -> list[str]:
    """Spot-check c >= 0 (raises) and the growth declarations (returns warnings)."""
    t, x = _box_samples(prob, n_samples, half_width, seed)
    if prob.c is not None:
        cv = np.array([prob.c(ti, xi) for ti, xi in zip(t, x)], dtype=float)
        if np.any(cv < 0):
            raise InvalidArgument("discount field c must be nonnegative")
    warnings = []
    if not np.all(prob.f_growth.holds(np.asarray(prob.f(x), float), x)):
        warnings.append(f"terminal data violates its {prob.f_growth.kind} declaration on sampled points")
    if prob.h is not None:
        hv = np.array([prob.h(ti, xi) for ti, xi in zip(t, x)], dtype=float)
        if not np.all(prob.h_growth.holds(hv, x)):
            warnings.append(f"source violates its {prob.h_growth.kind} declaration on sampled points")
    return warnings


@dataclass(frozen=True)
class PdeEstimate:
    t: float
    x: np.ndarray
    value: McEstimate
    n_steps: int | None
    n_paths: int
    extra: dict = field(default_factory=dict)


class _Terminal(PathFunctional):
    def __init__(self, f):
        self.f = f

    def final(self, state, t, x):
        return np.asarray(self.f(x), dtype=float)


class _FeynmanKac(PathFunctional):
    def __init__(self, prob: CauchyProblem):
        self.p = prob

    def init(self, x0):
        n = len(x0)
        return np.zeros(n), np.zeros(n)

    def update(self, state, k, t, x, dt):
        cint, src = state
        if self.p.h is not None:
            src = src + np.asarray(self.p.h(t, x), float) * np.exp(-cint) * dt
        if self.p.c is not None:
            cint = cint + np.asarray(self.p.c(t, x), float) * dt
        return cint, src

    def final(self, state, t, x):
        cint, src = state
        return np.asarray(self.p.f(x), dtype=float) * np.exp(-cint) - src


def _validate(prob, t, x, n_steps, n_paths):
    if not t < prob.T:
        raise InvalidArgument("need t < T")
    if n_steps < 1 or n_paths < 2:
        raise InvalidArgument("need n_steps >= 1 and n_paths >= 2")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (prob.coeffs.d,) or not np.all(np.isfinite(x)):
        raise InvalidArgument(f"x must be a finite vector of length {prob.coeffs.d}")
    return x


def _finish(vals, t, x, n_steps, n_paths, seed, extra):
    bad = ~np.isfinite(vals)
    n_bad = int(bad.sum())
    if n_bad > MAX_DIVERGED_FRACTION * n_paths:
        raise DivergenceError(f"{n_bad} of {n_paths} paths diverged (limit {MAX_DIVERGED_FRACTION:.1%})")
    extra = dict(extra, diverged=n_bad)
    return PdeEstimate(t, x, reduce(vals[~bad], seed.root_seed), n_steps, n_paths, extra)


def kolmogorov_solve(prob: CauchyProblem, t: float, x, n_steps: int, n_paths: int, seed: SeedSpec) -> PdeEstimate:
    """u(t, x) = E[f(X_T^{t,x})] for problems without discount or source."""
    if prob.c is not None or prob.h is not None:
        raise InvalidArgument("kolmogorov_solve takes c = 0 and h = 0; use feynman_kac_solve")
    x = _validate(prob, t, x, n_steps, n_paths)
    vals = sweep(prob.sde(t, x), seed, n_paths, n_steps, functional=_Terminal(prob.f), allow_divergence=True)
    return _finish(vals, t, x, n_steps, n_paths, seed, {"f_growth": prob.f_growth.kind})


def feynman_kac_solve(prob: CauchyProblem, t: float, x, n_steps: int, n_paths: int, seed: SeedSpec) -> PdeEstimate:
    """Feynman-Kac estimate of v(t, x) with discount c and source h."""
    x = _validate(prob, t, x, n_steps, n_paths)
    check_problem(prob)
    vals = sweep(prob.sde(t, x), seed, n_paths, n_steps, functional=_FeynmanKac(prob), allow_divergence=True)
    return _finish(vals, t, x, n_steps, n_paths, seed,
                   {"f_growth": prob.f_growth.kind, "h_growth": prob.h_growth.kind})


class _Discount(PathFunctional):
    def __init__(self, c):
        self.c = c

    def init(self, x0):
        return [np.zeros(len(x0))]

    def update(self, state, k, t, x, dt):
        state.append(state[-1] + np.asarray(self.c(t, x), float) * dt)
        return state

    def final(self, state, t, x):
        return np.exp(-np.stack(state, axis=1))


def discount_factors(prob: CauchyProblem, t: float, x, n_steps: int, n_paths: int, seed: SeedSpec) -> np.ndarray:
    """Z along every path on the grid, shape (n_paths, n_steps + 1)."""
    if prob.c is None:
        return np.ones((n_paths, n_steps + 1))
    x = _validate(prob, t, x, n_steps, n_paths)
    return sweep(prob.sde(t, x), seed, n_paths, n_steps, functional=_Discount(prob.c))


def weak_error_coefficient(prob: CauchyProblem, t: float, x, n_steps_levels, n_paths: int,
                           seed: SeedSpec, solver=None) -> tuple[float, list]:
    """Fit value(dt) = limit + C_w dt over a step-size ladder; returns (C_w, estimates).

    Acceptance bands then read k*stderr + |C_w| dt.
    """
    solver = solver or feynman_kac_solve
    ests = [solver(prob, t, x, n, n_paths, seed) for n in n_steps_levels]
    dts = [(prob.T - t) / n for n in n_steps_levels]
    _, C = fit_linear_bias(dts, [e.value.mean for e in ests])
    return C, ests


def pde_residual(v: GeneratorInput, prob: CauchyProblem, t, x) -> np.ndarray:
    """dv/dt + L_t v - c v - h at points (t, x); vanishes for an exact solution."""
    x = np.asarray(x, dtype=float)
    vals = np.asarray(apply_generator(v, prob.coeffs, t, x), float)
    vx = np.asarray(v.f(t, x), float)
    if prob.c is not None:
        vals = vals - np.asarray(prob.c(t, x), float) * vx
    if prob.h is not None:
        vals = vals - np.asarray(prob.h(t, x), float)
    return vals
