"""Short-time drift/diffusion recovery and the generator of an SDE."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import rng
from .errors import DegenerateFitError, InvalidArgument
from .estimators import ConvergenceReport, McEstimate, fit_linear_bias, fit_order, reduce
from .sde import Coefficients, PathFunctional, SdeProblem, sweep
from .rng import SeedSpec

SUBSTEPS = 64
TAIL_EPS = 0.5


@dataclass(frozen=True)
class GeneratorInput:
    """Test function with caller-supplied derivatives, all vectorized over x (..., d).

    ``grad`` returns (..., d), ``hess`` (..., d, d). ``growth = (C, beta)``
    declares |D^alpha f(t, x)| <= C (1 + |x|^beta).
    """

    f: Callable
    f_t: Callable
    grad: Callable
    hess: Callable
    growth: tuple = (1.0, 2.0)
    description: str = ""

    def check_derivatives(self, d: int, n_points: int = 10, step: float = 1e-5, rtol: float = 1e-5,
                          seed: int = 0) -> float:
        """Worst central-difference discrepancy, scaled by max(1, |supplied|).

        Raises InvalidArgument when it exceeds ``rtol``.
        """
        u = rng.uniforms(seed, np.arange(n_points, dtype=np.uint64), 0, (d + 2) // 2)
        worst = 0.0
        for row in u:
            t, x = float(row[0]), 4.0 * row[1:1 + d] - 2.0
            ft = (self.f(t + step, x) - self.f(t - step, x)) / (2 * step)
            worst = max(worst, _rel(ft, self.f_t(t, x)))
            g, H = np.asarray(self.grad(t, x), float), np.asarray(self.hess(t, x), float)
            for i in range(d):
                e = np.zeros(d)
                e[i] = step
                gi = (self.f(t, x + e) - self.f(t, x - e)) / (2 * step)
                worst = max(worst, _rel(gi, g[i]))
                Hi = (np.asarray(self.grad(t, x + e), float) - np.asarray(self.grad(t, x - e), float)) / (2 * step)
                worst = max(worst, _rel(Hi, H[i]))
        if worst > rtol:
            raise InvalidArgument(f"supplied derivatives disagree with finite differences (rel. error {worst:.3g})")
        return worst


def _rel(approx, exact) -> float:
    approx, exact = np.asarray(approx, float), np.asarray(exact, float)
    return float(np.max(np.abs(approx - exact) / np.maximum(1.0, np.abs(exact))))


def apply_generator(g: GeneratorInput, coeffs: Coefficients, t: float, x) -> np.ndarray | float:
    """(A f)(t, x) = f_t + 1/2 sum a_ij f_{x_i x_j} + sum b_i f_{x_i}, with a = sigma sigma^T."""
    x = np.asarray(x, dtype=float)
    a = coeffs.a(t, x)
    val = (np.asarray(g.f_t(t, x), float)
           + 0.5 * np.einsum("...ij,...ij->...", a, np.asarray(g.hess(t, x), float))
           + np.einsum("...i,...i->...", coeffs.b(t, x), np.asarray(g.grad(t, x), float)))
    return float(val) if val.ndim == 0 else val


@dataclass(frozen=True)
class DriftDiffusionEstimate:
    h: float
    b_hat: McEstimate  # (1/h) E[X_{t+h} - x], shape (d,)
    a_hat: McEstimate  # (1/h) E[(X_{t+h} - x)(X_{t+h} - x)^T], shape (d, d)
    tail_rate: McEstimate  # P(|X_{t+h} - x| > eps) / h, reported only


def estimate_drift_diffusion(prob: SdeProblem, t: float, x, h: float, n_paths: int, seed: SeedSpec,
                             substeps: int = SUBSTEPS, eps: float = TAIL_EPS) -> DriftDiffusionEstimate:
    """Moments of the increment over [t, t+h] started at x.

    X_{t+h} comes from Euler-Maruyama with ``substeps`` inner steps.
    """
    if not h > 0:
        raise InvalidArgument("h must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.all(np.isfinite(x)):
        raise InvalidArgument("x must be finite")
    sub = SdeProblem(prob.coeffs, t, x, t + h)
    X = sweep(sub, seed, n_paths, substeps)
    dX = X - x
    outer = dX[:, :, None] * dX[:, None, :]
    tail = (np.linalg.norm(dX, axis=-1) > eps).astype(float) / h
    r = seed.root_seed
    return DriftDiffusionEstimate(h, reduce(dX / h, r), reduce(outer / h, r), reduce(tail, r))


class _Payoff(PathFunctional):
    def __init__(self, fn):
        self.fn = fn

    def final(self, state, t, x):
        return self.fn(t, x)


@dataclass(frozen=True)
class GeneratorReport:
    target: float  # apply_generator value
    h_levels: list
    estimates: list  # McEstimate of (E f(t+h, X_{t+h}) - f(t, x)) / h per level
    limit: float  # intercept of the linear-in-h fit
    slope: float  # fitted bias coefficient C
    convergence: ConvergenceReport | None  # |gap| vs h, when every gap is non-zero

    def gaps(self) -> list:
        return [abs(e.mean - self.target) for e in self.estimates]

    def consistent(self, k: float = 4.0) -> bool:
        return all(g <= k * e.stderr + abs(self.slope) * h + 1e-12 * max(1.0, abs(self.target))
                   for g, e, h in zip(self.gaps(), self.estimates, self.h_levels))


def check_generator_limit(g: GeneratorInput, prob: SdeProblem, t: float, x, h_levels, n_paths: int,
                          seed: SeedSpec, substeps: int = SUBSTEPS) -> GeneratorReport:
    """Difference quotients (E f(t+h, X_{t+h}) - f(t, x))/h against A f(t, x).

    All levels reuse the same streams (common random numbers).
    """
    hs = [float(h) for h in h_levels]
    if any(b >= a for a, b in zip(hs, hs[1:])) or min(hs) <= 0:
        raise InvalidArgument("h_levels must be positive and decreasing")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    f0 = float(g.f(t, x))
    ests = []
    for h in hs:
        sub = SdeProblem(prob.coeffs, t, x, t + h)
        vals = sweep(sub, seed, n_paths, substeps, functional=_Payoff(g.f))
        ests.append(reduce((np.asarray(vals, float) - f0) / h, seed.root_seed))
    target = float(apply_generator(g, prob.coeffs, t, x))
    limit, slope = fit_linear_bias(hs, [e.mean for e in ests])
    conv = None
    if len(hs) >= 3:
        try:
            conv = fit_order([(h, abs(e.mean - target)) for h, e in zip(hs, ests)])
        except DegenerateFitError:
            conv = None
    return GeneratorReport(target, hs, ests, limit, slope, conv)
