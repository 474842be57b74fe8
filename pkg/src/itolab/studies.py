"""Convergence studies over dyadic level ladders.

Every level k runs on its own sub-seed ``derive_seed(root, k)``, so levels
are independent and any single level can be reproduced alone.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import parallel, rng
from .errors import InvalidArgument
from .estimators import ConvergenceReport, McEstimate, fit_order, reduce
from .ito import quadratic_variation
from .paths import dyadic_grid, sample_paths
from .presets import Setup
from .rng import SeedSpec
from .sde import SdeProblem, euler_maruyama

PATH_BATCH = 256


@dataclass(frozen=True)
class LevelResult:
    level: int
    n_steps: int
    mesh: float
    seed: int  # sub-seed of this level
    error: McEstimate


def _check_levels(levels):
    levels = [int(k) for k in levels]
    if len(levels) < 3:
        raise InvalidArgument("a convergence study needs at least three levels")
    if any(k < 0 or k > 24 for k in levels) or len(set(levels)) != len(levels):
        raise InvalidArgument("levels must be distinct dyadic exponents in [0, 24]")
    return sorted(levels)


def rms(samples, root_seed=None) -> McEstimate:
    """sqrt(E[e^2]) with a delta-method standard error."""
    ms = reduce(np.square(samples), root_seed)
    r = float(np.sqrt(ms.mean))
    se = ms.stderr / (2 * r) if r > 0 else 0.0
    return McEstimate(r, float(se), ms.n_samples, root_seed)


def qv_errors(level: int, n_paths: int, seed: int, t0: float = 0.0, T: float = 1.0) -> np.ndarray:
    """S_n - (T - t0) per path on the 2**level uniform grid."""
    grid = dyadic_grid(t0, T, level)

    def run(streams):
        path = sample_paths(grid, 1, SeedSpec(seed, int(streams[0])), len(streams))
        return quadratic_variation(path, t0, T) - (T - t0)

    return parallel.concat(parallel.map_batches(run, SeedSpec(seed).streams(n_paths), PATH_BATCH))


def qv_convergence(levels, n_paths: int, seed: int, t0: float = 0.0,
                   T: float = 1.0) -> tuple[list[LevelResult], ConvergenceReport]:
    """RMS of S_n - (T - t0) per level and its fitted order in the mesh."""
    out = []
    for k in _check_levels(levels):
        sub = rng.derive_seed(seed, k)
        out.append(LevelResult(k, 2**k, (T - t0) / 2**k, sub, rms(qv_errors(k, n_paths, sub, t0, T), sub)))
    return out, fit_order([(r.mesh, r.error.mean) for r in out])


def em_strong_errors(setup: Setup, level: int, fine_level: int, n_paths: int, seed: int,
                     t0: float, x0, T: float) -> np.ndarray:
    """|X_T^EM - X_T| per path; EM on 2**level steps of a 2**fine_level path."""
    if setup.exact_terminal is None:
        raise InvalidArgument("preset has no closed-form solution for a strong-error study")
    if fine_level < level:
        raise InvalidArgument("fine level must not be coarser than the level")
    prob = SdeProblem(setup.coeffs, t0, x0, T)
    fine = dyadic_grid(t0, T, fine_level)
    every = 2 ** (fine_level - level)

    def run(streams):
        path = sample_paths(fine, setup.coeffs.m, SeedSpec(seed, int(streams[0])), len(streams))
        approx = euler_maruyama(prob, path.subsample(every)).final
        exact = setup.exact_terminal(t0, prob.x0, T, fine.points, path.values)
        return np.linalg.norm(approx - exact, axis=-1)

    return parallel.concat(parallel.map_batches(run, SeedSpec(seed).streams(n_paths), PATH_BATCH))


def em_strong_convergence(setup: Setup, levels, n_paths: int, seed: int, t0: float = 0.0, x0=None,
                          T: float | None = None, oversample: int = 4) -> tuple[list[LevelResult], ConvergenceReport]:
    """Mean strong error E|X_T^EM - X_T| per level against the closed form.

    The reference path is sampled ``oversample`` dyadic levels finer than the
    finest level so oracles that need a path integral stay accurate.
    """
    levels = _check_levels(levels)
    x0 = setup.x0 if x0 is None else x0
    T = setup.T if T is None else T
    fine = max(levels) + oversample
    out = []
    for k in levels:
        sub = rng.derive_seed(seed, k)
        err = em_strong_errors(setup, k, fine, n_paths, sub, t0, x0, T)
        out.append(LevelResult(k, 2**k, (T - t0) / 2**k, sub, reduce(err, sub)))
    return out, fit_order([(r.mesh, r.error.mean) for r in out])
