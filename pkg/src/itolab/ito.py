"""Discrete Itô calculus on sampled Brownian paths.

Stochastic integrals are always left-endpoint (non-anticipating) sums
``sum_j X(t_j) (W(t_{j+1}) - W(t_j))``; midpoint sums converge to the
Stratonovich integral and are deliberately not offered.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import parallel
from .errors import InvalidArgument
from .estimators import McEstimate, combined_stderr, reduce
from .paths import BrownianPath, TimeGrid, make_uniform_grid, sample_paths
from .rng import SeedSpec


@dataclass(frozen=True)
class AdaptedProcess:
    """Integrand evaluated along a sampled path.

    With ``vectorized=True`` (default) the evaluator is called once as
    ``evaluator(times, values)`` where ``times`` has shape (n+1,) and
    ``values`` shape (..., n+1, m); it must return (..., n+1) for a scalar
    integrand or (..., n+1, d, m) for a matrix one, and entry k may depend only
    on ``values[..., :k+1, :]``. With ``vectorized=False`` it is called per
    grid point as ``evaluator(t_k, prefix)`` with ``prefix = values[:k+1]`` of
    a single path, which enforces non-anticipation by construction but is slow.

    Square integrability cannot be checked by sampling; state it in
    ``description``.
    """

    evaluator: Callable
    description: str = ""
    vectorized: bool = True
    dim: int | None = None  # Brownian dimension m; inferred from a probe when None

    @classmethod
    def constant(cls, c: float) -> "AdaptedProcess":
        return cls(lambda t, w: np.full(w.shape[:-1], float(c)), f"constant {c}")

    @classmethod
    def of_time(cls, g: Callable, description: str = "") -> "AdaptedProcess":
        return cls(lambda t, w: np.broadcast_to(g(t), w.shape[:-1]).astype(float), description or "deterministic")

    @classmethod
    def of_state(cls, g: Callable, description: str = "") -> "AdaptedProcess":
        """X_t = g(t, W_t) with g vectorized over (times, values[..., 0])."""
        return cls(lambda t, w: g(t, w[..., 0]), description or "Markov functional of W")

    @classmethod
    def brownian(cls) -> "AdaptedProcess":
        return cls(lambda t, w: w[..., 0].copy(), "X_s = W_s (in M^2)")

    def __add__(self, other):
        return combine(1.0, self, 1.0, other)

    def scaled(self, a: float) -> "AdaptedProcess":
        return AdaptedProcess(lambda t, w: a * evaluate(self, t, w), f"{a}*({self.description})")


def combine(a: float, X: AdaptedProcess, b: float, Y: AdaptedProcess) -> AdaptedProcess:
    return AdaptedProcess(lambda t, w: a * evaluate(X, t, w) + b * evaluate(Y, t, w),
                          f"{a}*({X.description}) + {b}*({Y.description})")


def evaluate(X: AdaptedProcess, times: np.ndarray, values: np.ndarray) -> np.ndarray:
    if X.vectorized:
        return np.asarray(X.evaluator(times, values), dtype=float)
    if values.ndim == 3:
        return np.stack([evaluate(X, times, v) for v in values])
    return np.stack([np.asarray(X.evaluator(times[k], values[: k + 1]), dtype=float)
                     for k in range(len(times))])


def _as_matrix(x: np.ndarray, batch_shape: tuple, n1: int, m: int) -> tuple[np.ndarray, bool]:
    """Normalize integrand values to (..., n+1, d, m); flag scalar integrands."""
    if x.shape == batch_shape + (n1,):
        if m != 1:
            raise InvalidArgument(f"scalar integrand needs a 1-d Brownian motion, path has m={m}")
        return x[..., None, None], True
    if x.ndim == len(batch_shape) + 3 and x.shape[:-2] == batch_shape + (n1,):
        if x.shape[-1] != m:
            raise InvalidArgument(f"integrand has {x.shape[-1]} columns, path has dimension {m}")
        return x, False
    raise InvalidArgument(f"integrand shape {x.shape} incompatible with path shape {batch_shape + (n1, m)}")


@dataclass(frozen=True, eq=False)
class ItoSum:
    """Running sums; ``values`` is (..., n+1) for scalar integrands, (..., n+1, d) otherwise."""

    grid: TimeGrid
    values: np.ndarray
    scalar: bool = True

    @property
    def final(self):
        return self.values[..., -1] if self.scalar else self.values[..., -1, :]

    def upto(self, k: int) -> np.ndarray:
        return self.values[..., : k + 1] if self.scalar else self.values[..., : k + 1, :]


def _integrate(Xm: np.ndarray, dW: np.ndarray, mask=None) -> np.ndarray:
    terms = np.einsum("...kij,...kj->...ki", Xm[..., :-1, :, :], dW)
    if mask is not None:
        terms = terms * mask[..., None]
    out = np.zeros(terms.shape[:-2] + (terms.shape[-2] + 1, terms.shape[-1]))
    np.cumsum(terms, axis=-2, out=out[..., 1:, :])
    return out


def ito_integral(X: AdaptedProcess, path: BrownianPath, stop=None) -> ItoSum:
    """Running left-endpoint sums of X against the path increments.

    ``stop`` (scalar or one value per path) gives the stopped integral
    int_0^tau X dW = int_0^T X 1_{[0,tau)} dW, with tau rounded down to the
    grid.
    """
    times = path.grid.points
    batch = path.values.shape[:-2]
    Xm, scalar = _as_matrix(evaluate(X, times, path.values), batch, len(times), path.dim)
    mask = None
    if stop is not None:
        tau = np.asarray(stop, dtype=float)
        idx = np.searchsorted(times, tau, side="right") - 1
        tau_grid = times[np.clip(idx, 0, None)]
        mask = (times[:-1] < np.asarray(tau_grid)[..., None]).astype(float)
    vals = _integrate(Xm, path.increments(), mask)
    if scalar:
        vals = vals[..., 0]
    return ItoSum(path.grid, vals, scalar)


def _window(path: BrownianPath, s: float, t: float) -> np.ndarray:
    if not s < t:
        raise InvalidArgument("need s < t")
    i, j = path.grid.index_of(s), path.grid.index_of(t)
    return np.diff(path.values[..., i:j + 1, :], axis=-2)


def _squeeze(x):
    x = x[..., 0] if x.shape[-1] == 1 else x
    return float(x) if np.ndim(x) == 0 else x


def quadratic_variation(path: BrownianPath, s: float, t: float):
    """Sum of squared increments over grid points in [s, t], per component."""
    return _squeeze(np.sum(_window(path, s, t) ** 2, axis=-2))


def total_variation(path: BrownianPath, s: float, t: float):
    return _squeeze(np.sum(np.abs(_window(path, s, t)), axis=-2))


def _infer_dim(X: AdaptedProcess, times) -> int:
    if X.dim is not None:
        return X.dim
    probe = evaluate(X, times[:2], np.zeros((2, 1)))
    return 1 if probe.ndim == 1 else probe.shape[-1]


def _batch_integrals(X, grid, m, seed, n_paths, fn):
    def run(streams):
        sub = SeedSpec(seed.root_seed, int(streams[0]))
        path = sample_paths(grid, m, sub, len(streams))
        Xm, _ = _as_matrix(evaluate(X, grid.points, path.values), (len(streams),), len(grid.points), m)
        return fn(Xm, path)

    return parallel.concat(parallel.map_batches(run, seed.streams(n_paths)))


@dataclass(frozen=True)
class IsometryReport:
    lhs: McEstimate  # E[(int X dW)^2]
    rhs: McEstimate  # E[int |X|^2 ds]
    zero_mean: McEstimate  # E[int X dW]
    difference: McEstimate  # paired (int X dW)^2 - int |X|^2 ds

    def consistent(self, k: float = 4.0) -> bool:
        iso = abs(self.lhs.mean - self.rhs.mean) <= k * combined_stderr(self.lhs, self.rhs)
        return iso and self.zero_mean.within(0.0, k)


def check_isometry(X: AdaptedProcess, horizon: float, n_paths: int, seed: SeedSpec,
                   n_steps: int = 256, t0: float = 0.0) -> IsometryReport:
    grid = make_uniform_grid(t0, t0 + horizon, n_steps)
    m = _infer_dim(X, grid.points)
    dt = grid.dt

    def fn(Xm, path):
        I = _integrate(Xm, path.increments())[:, -1, :]
        q = np.einsum("pkij,pkij,k->p", Xm[:, :-1], Xm[:, :-1], dt)
        return np.sum(I**2, axis=-1), q, I[:, 0]

    sq, q, I = _batch_integrals(X, grid, m, seed, n_paths, fn)
    r = seed.root_seed
    return IsometryReport(reduce(sq, r), reduce(q, r), reduce(I, r), reduce(sq - q, r))


def burkholder_constant(p: int) -> float:
    return (4.0 * p**3 / (2.0 * p - 1.0)) ** p


@dataclass(frozen=True)
class MaximalReport:
    p: int
    lhs: McEstimate  # E[sup_t |int_0^t X dW|^{2p}]
    rhs_integral: McEstimate  # E[int |X|^{2p} ds]
    constant: float  # C_p (dT)^{p-1}
    doob_rhs: float | None  # 4 E[int |X|^2 ds] when p == 1

    @property
    def bound(self) -> float:
        return self.constant * self.rhs_integral.mean

    @property
    def holds(self) -> bool:
        if self.bound == 0.0:
            return self.lhs.mean == 0.0
        rel = float(np.hypot(self.lhs.rel_stderr, self.rhs_integral.rel_stderr))
        ok = self.lhs.mean <= self.bound * (1.0 + 3.0 * rel)
        if self.doob_rhs is not None:
            ok = ok and self.lhs.mean <= self.doob_rhs * (1.0 + 3.0 * rel)
        return ok


def check_maximal_inequalities(X: AdaptedProcess, horizon: float, p: int, n_paths: int, seed: SeedSpec,
                               n_steps: int = 256) -> MaximalReport:
    """Sup-moment of the running integral against the Doob / Burkholder bound."""
    if p < 1:
        raise InvalidArgument("p must be >= 1")
    grid = make_uniform_grid(0.0, horizon, n_steps)
    m = _infer_dim(X, grid.points)
    dt = grid.dt

    def fn(Xm, path):
        run = _integrate(Xm, path.increments())
        sup = np.max(np.sum(run**2, axis=-1) ** p, axis=1)
        frob2 = np.sum(Xm[:, :-1] ** 2, axis=(-2, -1))
        return sup, np.sum(frob2**p * dt, axis=1)

    sup, integ = _batch_integrals(X, grid, m, seed, n_paths, fn)
    d = 1
    probe = evaluate(X, grid.points[:2], np.zeros((2, m)))
    if probe.ndim == 3:
        d = probe.shape[1]
    lhs, rhs = reduce(sup, seed.root_seed), reduce(integ, seed.root_seed)
    const = burkholder_constant(p) * (d * horizon) ** (p - 1)
    doob = 4.0 * rhs.mean if p == 1 else None
    return MaximalReport(p, lhs, rhs, const, doob)


def check_martingale(X: AdaptedProcess, horizon: float, s: float, t: float, g: Callable,
                     n_paths: int, seed: SeedSpec, n_steps: int = 128) -> McEstimate:
    """E[(I_t - I_s) g(W up to s)], which vanishes for a martingale.

    ``g`` maps the path prefix up to s, shape (batch, k+1, m), to (batch,).
    """
    grid = make_uniform_grid(0.0, horizon, n_steps)
    i, j = grid.index_of(s), grid.index_of(t)
    m = _infer_dim(X, grid.points)

    def fn(Xm, path):
        I = _integrate(Xm, path.increments())[..., 0]
        return (I[:, j] - I[:, i]) * g(path.values[:, : i + 1, :])

    return reduce(_batch_integrals(X, grid, m, seed, n_paths, fn), seed.root_seed)


def non_anticipating(X: AdaptedProcess, path: BrownianPath, k: int, seed: SeedSpec) -> bool:
    """Perturb the path strictly after index k and check nothing up to k moves."""
    grid = path.grid
    other = sample_paths(grid, path.dim, seed, path.n_paths)
    v = np.array(path.values if path.batched else path.values[None])
    ov = other.values
    v[:, k + 1:] = v[:, k:k + 1] + (ov[:, k + 1:] - ov[:, k:k + 1])
    if not path.batched:
        v = v[0]
    alt = BrownianPath(grid, v)
    a, b = ito_integral(X, path), ito_integral(X, alt)
    batch = path.values.shape[:-2]
    ea, _ = _as_matrix(evaluate(X, grid.points, path.values), batch, len(grid.points), path.dim)
    eb, _ = _as_matrix(evaluate(X, grid.points, alt.values), batch, len(grid.points), path.dim)
    return bool(np.array_equal(a.upto(k), b.upto(k)) and np.array_equal(ea[..., : k + 1, :, :], eb[..., : k + 1, :, :]))


@dataclass(frozen=True)
class ItoProcess:
    """dX = drift dt + noise dW with adapted (drift, noise) given as functions of (t, W_t).

    ``drift(t, w)`` and ``noise(t, w)`` are vectorized over times (n+1,) and
    scalar Brownian values (..., n+1).
    """

    x0: float
    drift: Callable
    noise: Callable

    def along(self, path: BrownianPath):
        t = path.grid.points
        w = path.values[..., 0]
        h = np.broadcast_to(self.drift(t, w), w.shape)
        G = np.broadcast_to(self.noise(t, w), w.shape)
        dW = np.diff(w, axis=-1)
        inc = h[..., :-1] * path.grid.dt + G[..., :-1] * dW
        X = np.empty_like(w)
        X[..., 0] = self.x0
        X[..., 1:] = self.x0 + np.cumsum(inc, axis=-1)
        return X, h, G


def product_rule_residual(p1: ItoProcess, p2: ItoProcess, path: BrownianPath) -> np.ndarray:
    """X1_T X2_T - X1_0 X2_0 - sum(X1 dX2 + X2 dX1 + G1 G2 dt), per path."""
    X1, _, G1 = p1.along(path)
    X2, _, G2 = p2.along(path)
    d1, d2 = np.diff(X1, axis=-1), np.diff(X2, axis=-1)
    rhs = np.sum(X1[..., :-1] * d2 + X2[..., :-1] * d1 + G1[..., :-1] * G2[..., :-1] * path.grid.dt, axis=-1)
    return X1[..., -1] * X2[..., -1] - X1[..., 0] * X2[..., 0] - rhs


def ito_formula_residual(F: Callable, F_t: Callable, F_x: Callable, F_xx: Callable,
                         path: BrownianPath) -> np.ndarray:
    """F(T, W_T) - F(t0, W_t0) - sum[(F_t + F_xx/2) dt + F_x dW] for 1-d W, per path."""
    t = path.grid.points
    w = path.values[..., 0]
    dW = np.diff(w, axis=-1)
    a, wl = t[:-1], w[..., :-1]
    rhs = np.sum((F_t(a, wl) + 0.5 * F_xx(a, wl)) * path.grid.dt + F_x(a, wl) * dW, axis=-1)
    return F(t[-1], w[..., -1]) - F(t[0], w[..., 0]) - rhs
