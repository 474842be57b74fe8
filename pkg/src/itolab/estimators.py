"""Monte Carlo reduction and convergence-order fitting."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFitError, InvalidArgument


@dataclass(frozen=True)
class McEstimate:
    mean: float | np.ndarray
    stderr: float | np.ndarray
    n_samples: int
    root_seed: int | None = None

    def interval(self, z: float = 1.96):
        return self.mean - z * self.stderr, self.mean + z * self.stderr

    def gap(self, target) -> float | np.ndarray:
        return np.abs(self.mean - target)

    def within(self, target, k: float = 4.0, bias: float = 0.0) -> bool:
        """True if |mean - target| <= k*stderr + bias (componentwise, all)."""
        return bool(np.all(self.gap(target) <= k * self.stderr + bias))

    @property
    def rel_stderr(self) -> float:
        m = np.abs(self.mean)
        return float(np.max(np.where(m > 0, self.stderr / np.where(m > 0, m, 1.0), 0.0)))

    def __str__(self):
        return f"{self.mean} ± {self.stderr} (n={self.n_samples})"


def _exact_mean(col: np.ndarray) -> float:
    # fsum is correctly rounded, so the result does not depend on order;
    # shifting by the minimum keeps constant data exact
    lo = float(col.min())
    return lo + math.fsum((col - lo).tolist()) / len(col)


def reduce(samples, root_seed: int | None = None) -> McEstimate:
    """Mean and standard error of ``samples`` (1-d, or 2-d with one column per component).

    Sums are exactly rounded (``math.fsum``), which makes the result
    independent of accumulation order and therefore of how the samples were
    produced in parallel.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 0 or len(x) < 2:
        raise InvalidArgument("reduce needs at least two samples")
    if not np.all(np.isfinite(x)):
        raise InvalidArgument("non-finite sample in reduction")
    n = len(x)
    flat = x.reshape(n, -1)
    means = np.array([_exact_mean(flat[:, j]) for j in range(flat.shape[1])])
    dev = flat - means
    var = np.array([math.fsum((dev[:, j] ** 2).tolist()) / (n - 1) for j in range(flat.shape[1])])
    se = np.sqrt(var / n)
    if x.ndim == 1:
        return McEstimate(float(means[0]), float(se[0]), n, root_seed)
    return McEstimate(means.reshape(x.shape[1:]), se.reshape(x.shape[1:]), n, root_seed)


def combined_stderr(*estimates: McEstimate) -> float:
    return float(math.sqrt(sum(float(np.max(e.stderr)) ** 2 for e in estimates)))


@dataclass(frozen=True)
class ConvergenceReport:
    levels: list
    fitted_order: float
    fit_residual: float
    intercept: float = field(default=0.0)

    def predicted(self, resolution: float) -> float:
        return math.exp(self.intercept) * resolution**self.fitted_order


def fit_order(levels) -> ConvergenceReport:
    """Least-squares slope of log(error) against log(resolution).

    ``levels`` is a sequence of (resolution, error) pairs; returned sorted by
    decreasing resolution. Residual is the RMS deviation in log space.
    """
    lv = sorted(((float(r), float(e)) for r, e in levels), key=lambda p: -p[0])
    if len(lv) < 3:
        raise InvalidArgument("need at least three levels to fit an order")
    if any(e == 0.0 for _, e in lv):
        raise DegenerateFitError("an error level is exactly zero; drop exact levels before fitting")
    if any(e < 0 or r <= 0 for r, e in lv):
        raise InvalidArgument("resolutions must be positive and errors non-negative")
    x = np.log([r for r, _ in lv])
    y = np.log([e for _, e in lv])
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - (slope * x + icpt)
    return ConvergenceReport(lv, float(slope), float(np.sqrt(np.mean(resid**2))), float(icpt))


def fit_linear_bias(hs, values) -> tuple[float, float]:
    """Fit ``value = limit + C*h``; returns (limit, C).

    Used for weak-error and h -> 0 bands: an acceptance band at step h is
    k*stderr + |C|*h.
    """
    hs = np.asarray(hs, dtype=float)
    v = np.asarray(values, dtype=float)
    if len(hs) < 2:
        raise InvalidArgument("need at least two levels")
    A = np.column_stack([np.ones_like(hs), hs])
    (limit, C), *_ = np.linalg.lstsq(A, v, rcond=None)
    return float(limit), float(C)
