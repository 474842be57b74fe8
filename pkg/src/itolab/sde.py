"""Strong solutions of dX = b(t, X) dt + sigma(t, X) dW.

Coefficient callables are vectorized: ``drift(t, x)`` receives a scalar time
and states of shape (..., d) and returns (..., d); ``dispersion(t, x)``
returns (..., d, m). Set ``time_homogeneous=True`` when neither depends on t;
the Picard solver then evaluates the whole grid in one call.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import parallel, rng
from .errors import DegenerateFitError, DivergenceError, InvalidArgument, NonConvergenceError
from .estimators import ConvergenceReport, McEstimate, fit_order, reduce
from .paths import BrownianPath, TimeGrid, increments, make_uniform_grid, sample_path
from .rng import SeedSpec

log = logging.getLogger(__name__)


def _fit(v, shape):
    v = np.asarray(v, dtype=float)
    return v if v.shape == shape else np.broadcast_to(v, shape)


@dataclass(frozen=True)
class Coefficients:
    drift: Callable
    dispersion: Callable
    d: int
    m: int
    lipschitz_K: float | None = None
    growth_K: float | None = None
    time_homogeneous: bool = False
    name: str = ""

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise InvalidArgument("dimensions must be positive")
        for k in (self.lipschitz_K, self.growth_K):
            if k is not None and not k > 0:
                raise InvalidArgument("declared Lipschitz/growth constants must be positive")

    def b(self, t, x):
        return _fit(self.drift(t, x), x.shape)

    def sigma(self, t, x):
        return _fit(self.dispersion(t, x), x.shape[:-1] + (self.d, self.m))

    def a(self, t, x):
        """Diffusion matrix sigma sigma^T."""
        s = self.sigma(t, x)
        return np.einsum("...ik,...jk->...ij", s, s)


def check_coefficients(coeffs: Coefficients, t0: float, T: float, half_width: float = 5.0,
                       n_samples: int = 1000, seed: int = 0) -> list[str]:
    """Spot-check declared Lipschitz and linear-growth constants on a box.

    Returns warning strings (empty when every sample satisfies the
    declarations). Norms are Euclidean for vectors and Frobenius for matrices.
    """
    d = coeffs.d
    u = rng.uniforms(seed, np.arange(n_samples, dtype=np.uint64), 0, d + 1)
    t = t0 + (T - t0) * u[:, 0]
    x = half_width * (2 * u[:, 1:1 + d] - 1)
    xp = half_width * (2 * u[:, 1 + d:1 + 2 * d] - 1)
    warnings = []
    lip_worst = growth_worst = 0.0
    for i in range(n_samples):
        b, bp = coeffs.b(t[i], x[i]), coeffs.b(t[i], xp[i])
        s, sp = coeffs.sigma(t[i], x[i]), coeffs.sigma(t[i], xp[i])
        dist = np.linalg.norm(x[i] - xp[i])
        if dist > 0:
            lip_worst = max(lip_worst, (np.linalg.norm(b - bp) + np.linalg.norm(s - sp)) / dist)
        growth_worst = max(growth_worst, (np.linalg.norm(b) + np.linalg.norm(s)) / (1 + np.linalg.norm(x[i])))
    if coeffs.lipschitz_K is not None and lip_worst > coeffs.lipschitz_K * (1 + 1e-12):
        warnings.append(f"Lipschitz declaration K={coeffs.lipschitz_K} violated: observed ratio {lip_worst:.6g}")
    if coeffs.growth_K is not None and growth_worst > coeffs.growth_K * (1 + 1e-12):
        warnings.append(f"growth declaration K={coeffs.growth_K} violated: observed ratio {growth_worst:.6g}")
    for w in warnings:
        log.warning(w)
    return warnings


@dataclass(frozen=True, eq=False)
class SdeProblem:
    coeffs: Coefficients
    t0: float
    x0: np.ndarray
    T: float

    def __post_init__(self):
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if x0.shape != (self.coeffs.d,):
            raise InvalidArgument(f"x0 must have shape ({self.coeffs.d},)")
        if not np.all(np.isfinite(x0)):
            raise InvalidArgument("x0 must be finite")
        if not self.T > self.t0:
            raise InvalidArgument("need T > t0")
        object.__setattr__(self, "x0", x0)

    def with_start(self, t0: float, x0) -> "SdeProblem":
        return SdeProblem(self.coeffs, t0, x0, self.T)


@dataclass(frozen=True, eq=False)
class SolutionPath:
    grid: TimeGrid
    states: np.ndarray  # (..., n+1, d)
    driving_path: BrownianPath | None = None
    iterations: int | None = None
    sup_diffs: tuple = ()

    @property
    def final(self) -> np.ndarray:
        return self.states[..., -1, :]

    @property
    def contraction_ratios(self) -> np.ndarray:
        d = np.asarray(self.sup_diffs)
        with np.errstate(divide="ignore", invalid="ignore"):
            return d[1:] / d[:-1]


def _check_grid(prob: SdeProblem, grid: TimeGrid):
    span = prob.T - prob.t0
    if abs(grid.t0 - prob.t0) > 1e-12 * span or abs(grid.T - prob.T) > 1e-12 * span:
        raise InvalidArgument("driving path grid must span [t0, T] of the problem")


def _raise_divergence(x, step, streams=None):
    bad = ~np.all(np.isfinite(x.reshape(-1, x.shape[-1])), axis=-1)
    i = int(np.argmax(bad))
    stream = None if streams is None else int(streams[i])
    raise DivergenceError(f"non-finite state at step {step}" + (f" on stream {stream}" if stream is not None else ""),
                          step=step, stream=stream)


def _em_step(coeffs, t, x, dt, dW):
    if coeffs.m == 1:
        # single noise column: the contraction is one product per component
        return x + coeffs.b(t, x) * dt + coeffs.sigma(t, x)[..., 0] * dW
    return x + coeffs.b(t, x) * dt + np.einsum("...ij,...j->...i", coeffs.sigma(t, x), dW)


def euler_maruyama(prob: SdeProblem, path: BrownianPath) -> SolutionPath:
    """X_{k+1} = X_k + b(t_k, X_k) dt_k + sigma(t_k, X_k) dW_k on the path's grid."""
    c = prob.coeffs
    if path.dim != c.m:
        raise InvalidArgument(f"path dimension {path.dim} does not match m={c.m}")
    grid = path.grid
    _check_grid(prob, grid)
    dW = path.increments()
    batch = path.values.shape[:-2]
    states = np.empty(batch + (grid.n_steps + 1, c.d))
    x = np.broadcast_to(prob.x0, batch + (c.d,)).copy()
    states[..., 0, :] = x
    for k, (t, dt) in enumerate(zip(grid.points[:-1], grid.dt)):
        x = _em_step(c, t, x, dt, dW[..., k, :])
        if not np.all(np.isfinite(x)):
            _raise_divergence(x, k + 1)
        states[..., k + 1, :] = x
    return SolutionPath(grid, states, path)


class PathFunctional:
    """Accumulator driven along Euler paths by :func:`sweep`.

    ``update`` sees the left endpoint (t_k, X_k) of every step; ``final`` sees
    (T, X_T) and returns a per-path array or tuple of arrays.
    """

    def init(self, x0):
        return None

    def update(self, state, k, t, x, dt):
        return state

    def final(self, state, t, x):
        return x


def sweep(prob: SdeProblem, seed: SeedSpec, n_paths: int, n_steps: int | None = None,
          grid: TimeGrid | None = None, functional: PathFunctional | None = None,
          allow_divergence: bool = False):
    """Euler-Maruyama over ``n_paths`` streams without storing whole paths.

    Increments are drawn from the same (root_seed, stream, step) mapping as
    :func:`paths.sample_paths`, in fixed batches, so output does not depend on
    the worker count. A non-finite state raises :class:`DivergenceError`
    unless ``allow_divergence`` is set, in which case the path is carried as
    NaN and the caller must count and report it.
    """
    if n_paths < 1:
        raise InvalidArgument("n_paths must be positive")
    grid = grid or make_uniform_grid(prob.t0, prob.T, n_steps)
    _check_grid(prob, grid)
    F = functional or PathFunctional()
    c = prob.coeffs
    times, dts = grid.points, grid.dt

    def run(streams):
        nb = len(streams)
        x = np.broadcast_to(prob.x0, (nb, c.d)).copy()
        state = F.init(x)
        chunk = max(1, (1 << 18) // (nb * c.m))
        for k0 in range(0, grid.n_steps, chunk):
            k1 = min(grid.n_steps, k0 + chunk)
            dW = increments(grid, c.m, seed.root_seed, streams, k0, k1)
            for k in range(k0, k1):
                t, dt = times[k], dts[k]
                state = F.update(state, k, t, x, dt)
                x = _em_step(c, t, x, dt, dW[:, k - k0])
                bad = ~np.all(np.isfinite(x), axis=-1)
                if bad.any():
                    if not allow_divergence:
                        _raise_divergence(x, k + 1, streams)
                    x[bad] = np.nan
        return F.final(state, times[-1], x)

    def guarded(streams):
        if not allow_divergence:
            return run(streams)
        with np.errstate(all="ignore"):
            return run(streams)

    return parallel.concat(parallel.map_batches(guarded, seed.streams(n_paths)))


def _coeff_grid(c: Coefficients, times, X):
    if c.time_homogeneous:
        return c.b(times[0], X), c.sigma(times[0], X)
    B = np.stack([c.b(t, X[..., k, :]) for k, t in enumerate(times)], axis=-2)
    S = np.stack([c.sigma(t, X[..., k, :]) for k, t in enumerate(times)], axis=-3)
    return B, S


def picard_solve(prob: SdeProblem, path: BrownianPath, tol: float = 1e-10, max_iter: int = 200,
                 initial=None) -> SolutionPath:
    """Fixed point of X -> x0 + int b(s, X) ds + int sigma(s, X) dW on the grid.

    Both integrals are left-endpoint sums on the driving path, so the fixed
    point is the Euler-Maruyama solution on the same grid. Iteration starts
    from ``initial`` (array (..., n+1, d)) or the constant path x0 and stops
    when the sup over the grid of |X^(n+1) - X^(n)| drops below ``tol``.
    """
    if not tol > 0:
        raise InvalidArgument("tol must be positive")
    c = prob.coeffs
    if path.dim != c.m:
        raise InvalidArgument(f"path dimension {path.dim} does not match m={c.m}")
    grid = path.grid
    _check_grid(prob, grid)
    times, dt = grid.points, grid.dt
    dW = path.increments()
    shape = path.values.shape[:-2] + (grid.n_steps + 1, c.d)
    X = np.broadcast_to(prob.x0 if initial is None else np.asarray(initial, dtype=float), shape).copy()
    diffs = []
    for it in range(1, max_iter + 1):
        B, S = _coeff_grid(c, times, X)
        inc = B[..., :-1, :] * dt[:, None] + np.einsum("...kij,...kj->...ki", S[..., :-1, :, :], dW)
        new = np.empty_like(X)
        new[..., 0, :] = prob.x0
        np.cumsum(inc, axis=-2, out=new[..., 1:, :])
        new[..., 1:, :] += prob.x0
        if not np.all(np.isfinite(new)):
            raise NonConvergenceError(f"Picard iterate {it} is not finite", iterations=it)
        diff = float(np.max(np.linalg.norm(new - X, axis=-1)))
        diffs.append(diff)
        X = new
        if diff < tol:
            return SolutionPath(grid, X, path, it, tuple(diffs))
    ratio = diffs[-1] / diffs[-2] if len(diffs) > 1 and diffs[-2] > 0 else float("nan")
    raise NonConvergenceError(f"Picard iteration did not reach tol={tol} in {max_iter} iterations "
                              f"(last contraction ratio {ratio:.3g})", ratio=ratio, iterations=max_iter)


@dataclass(frozen=True)
class UniquenessReport:
    distances: list
    tol: float
    failures: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def uniqueness_check(prob: SdeProblem, seed: SeedSpec, n_grids: int = 3, n_steps: int = 64,
                     tol: float = 1e-10, max_iter: int = 200) -> UniquenessReport:
    """Solve from two different initial iterates on the same noise; results must coincide.

    Grid g has ``n_steps * 2**g`` steps and uses stream ``seed.stream_id + g``.
    Initial iterates: the constant path x0 and the straight line from x0 to 2*x0.
    """
    distances, failures = [], []
    for g in range(n_grids):
        grid = make_uniform_grid(prob.t0, prob.T, n_steps * 2**g)
        sub = SeedSpec(seed.root_seed, seed.stream_id + g)
        path = sample_path(grid, prob.coeffs.m, sub)
        frac = ((grid.points - prob.t0) / (prob.T - prob.t0))[:, None]
        line = prob.x0 * (1.0 + frac)
        a = picard_solve(prob, path, tol, max_iter)
        b = picard_solve(prob, path, tol, max_iter, initial=line)
        dist = float(np.max(np.linalg.norm(a.states - b.states, axis=-1)))
        distances.append(dist)
        if dist > 10 * tol:
            failures.append(sub)
    return UniquenessReport(distances, tol, failures)


class _MomentFunctional(PathFunctional):
    def __init__(self, p, marks):
        self.p, self.marks = p, marks

    def init(self, x0):
        nb = len(x0)
        return {"sup": np.zeros(nb), "anchor": {}, "supinc": {i: np.zeros(nb) for i in self.marks}}

    def _visit(self, s, k, x):
        s["sup"] = np.maximum(s["sup"], np.sum(x**2, axis=-1) ** self.p)
        if k in self.marks:
            s["anchor"][k] = x.copy()
        for i, a in s["anchor"].items():
            s["supinc"][i] = np.maximum(s["supinc"][i], np.sum((x - a) ** 2, axis=-1) ** self.p)
        return s

    def update(self, s, k, t, x, dt):
        return self._visit(s, k, x)

    def final(self, s, t, x):
        s = self._visit(s, None, x)
        inc = [np.sum((x - s["anchor"][i]) ** 2, axis=-1) ** self.p for i in self.marks]
        return (s["sup"][:, None], np.stack(inc, axis=1), np.stack([s["supinc"][i] for i in self.marks], axis=1))


@dataclass(frozen=True)
class MomentReport:
    p: int
    sup_moment: McEstimate  # E[sup_t |X_t|^{2p}]
    deltas: list
    increment_moments: list  # E|X_T - X_{T-delta}|^{2p}
    sup_increment_moments: list  # E[sup_{T-delta<=s<=T} |X_s - X_{T-delta}|^{2p}]
    increment_fit: ConvergenceReport | None
    sup_increment_fit: ConvergenceReport | None
    finite: bool = True


def moment_probe(prob: SdeProblem, p: int, n_paths: int, seed: SeedSpec, n_steps: int = 256,
                 n_deltas: int = 5) -> MomentReport:
    """Sup-moment and increment moments at delta = (T - t0)/2^j, j = 1..n_deltas.

    The fitted exponent of the increment moments against delta should be
    close to p.
    """
    if p < 1:
        raise InvalidArgument("p must be >= 1")
    if n_steps % 2**n_deltas:
        raise InvalidArgument("n_steps must be divisible by 2**n_deltas")
    marks = [n_steps - n_steps // 2**j for j in range(1, n_deltas + 1)]
    grid = make_uniform_grid(prob.t0, prob.T, n_steps)
    sup, inc, supinc = sweep(prob, seed, n_paths, grid=grid, functional=_MomentFunctional(p, marks))
    deltas = [(prob.T - prob.t0) / 2**j for j in range(1, n_deltas + 1)]
    r = seed.root_seed
    incs = [reduce(inc[:, j], r) for j in range(n_deltas)]
    supincs = [reduce(supinc[:, j], r) for j in range(n_deltas)]

    def fit(ests):
        try:
            return fit_order([(dl, e.mean) for dl, e in zip(deltas, ests)])
        except DegenerateFitError:
            return None

    return MomentReport(p, reduce(sup[:, 0], r), deltas, incs, supincs, fit(incs), fit(supincs))
