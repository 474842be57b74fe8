"""Time grids and Brownian paths.

A :class:`BrownianPath` holds either one path, ``values`` of shape
``(n+1, m)``, or a batch of paths with shape ``(n_paths, n+1, m)``. Batches use
consecutive streams starting at ``seed.stream_id``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng
from .errors import InvalidArgument
from .rng import SeedSpec

DEGENERATE_GAP = 1e-15


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class TimeGrid:
    points: np.ndarray
    mesh: float = field(init=False)

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 1 or len(pts) < 2:
            raise InvalidArgument("a time grid needs at least two points")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgument("grid points must be finite")
        gaps = np.diff(pts)
        if np.any(gaps <= DEGENERATE_GAP * (pts[-1] - pts[0])):
            raise InvalidArgument("grid points must be strictly increasing and non-degenerate")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "mesh", float(gaps.max()))

    @property
    def t0(self) -> float:
        return float(self.points[0])

    @property
    def T(self) -> float:
        return float(self.points[-1])

    @property
    def n_steps(self) -> int:
        return len(self.points) - 1

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.points)

    def index_of(self, t: float) -> int:
        """Index of the grid point equal to ``t`` (to 1e-12 relative to the span)."""
        k = int(np.searchsorted(self.points, t))
        tol = 1e-12 * (self.T - self.t0)
        for j in (k - 1, k):
            if 0 <= j < len(self.points) and abs(self.points[j] - t) <= tol:
                return j
        raise InvalidArgument(f"time {t} is not a grid point")

    def contains_grid(self, other: "TimeGrid") -> bool:
        idx = np.searchsorted(self.points, other.points)
        if np.any(idx >= len(self.points)):
            return False
        return bool(np.array_equal(self.points[idx], other.points))

    def refined(self) -> "TimeGrid":
        pts = self.points
        new = np.empty(2 * len(pts) - 1)
        new[0::2] = pts
        new[1::2] = 0.5 * (pts[:-1] + pts[1:])
        return TimeGrid(new)

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self.points, other.points)

    __hash__ = None

    def __repr__(self):
        return f"TimeGrid([{self.t0}, {self.T}], n_steps={self.n_steps}, mesh={self.mesh:.3g})"


def make_uniform_grid(t0: float, T: float, n_steps: int) -> TimeGrid:
    if not T > t0:
        raise InvalidArgument(f"need T > t0, got t0={t0}, T={T}")
    if int(n_steps) != n_steps or n_steps < 1:
        raise InvalidArgument(f"n_steps must be a positive integer, got {n_steps}")
    n_steps = int(n_steps)
    pts = t0 + (T - t0) * (np.arange(n_steps + 1) / n_steps)
    pts[-1] = T
    return TimeGrid(pts)


def dyadic_grid(t0: float, T: float, level: int) -> TimeGrid:
    return make_uniform_grid(t0, T, 2**level)


@dataclass(frozen=True, eq=False)
class BrownianPath:
    grid: TimeGrid
    values: np.ndarray
    seed: SeedSpec | None = None

    def __post_init__(self):
        v = _frozen(self.values)
        if v.ndim not in (2, 3) or v.shape[-2] != len(self.grid.points):
            raise InvalidArgument("path values must have shape (..., n+1, m) matching the grid")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.shape[-1]

    @property
    def batched(self) -> bool:
        return self.values.ndim == 3

    @property
    def n_paths(self) -> int:
        return self.values.shape[0] if self.batched else 1

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=-2)

    def __getitem__(self, i) -> "BrownianPath":
        if not self.batched:
            raise IndexError("single path is not indexable")
        seed = None
        if self.seed is not None and isinstance(i, (int, np.integer)):
            seed = SeedSpec(self.seed.root_seed, self.seed.stream_id + int(i) % self.n_paths)
        return BrownianPath(self.grid, self.values[i], seed)

    def subsample(self, every: int) -> "BrownianPath":
        """Path restricted to every ``every``-th grid point (coarser nested grid)."""
        if self.grid.n_steps % every:
            raise InvalidArgument("subsampling factor must divide the number of steps")
        return BrownianPath(TimeGrid(self.grid.points[::every]), self.values[..., ::every, :], self.seed)


def stream_normals(root_seed: int, streams, i0: int, i1: int, domain: int = rng.DOMAIN_INCREMENT) -> np.ndarray:
    """Normals ``i0 .. i1-1`` of each stream's sequence; normal i comes from block i//2."""
    b0 = i0 // 2
    z = rng.normals(root_seed, streams, b0, (i1 + 1) // 2 - b0, domain)
    return z[:, i0 - 2 * b0:i1 - 2 * b0]


def increments(grid: TimeGrid, dim: int, root_seed: int, streams, k0: int = 0, k1: int | None = None) -> np.ndarray:
    """Brownian increments over steps ``k0 .. k1-1`` for each stream.

    Returns shape (len(streams), k1-k0, dim). Component j of step k is
    normal number ``k*dim + j`` of the stream, scaled by sqrt(dt_k).
    """
    if dim < 1:
        raise InvalidArgument("dim must be positive")
    k1 = grid.n_steps if k1 is None else k1
    z = stream_normals(root_seed, streams, k0 * dim, k1 * dim).reshape(len(streams), k1 - k0, dim)
    return z * np.sqrt(grid.dt[k0:k1])[None, :, None]


def sample_paths(grid: TimeGrid, dim: int, seed: SeedSpec, n_paths: int) -> BrownianPath:
    if dim < 1 or int(dim) != dim:
        raise InvalidArgument(f"dim must be a positive integer, got {dim}")
    if n_paths < 1:
        raise InvalidArgument("n_paths must be positive")
    dW = increments(grid, dim, seed.root_seed, seed.streams(n_paths))
    W = np.zeros((n_paths, grid.n_steps + 1, dim))
    np.cumsum(dW, axis=1, out=W[:, 1:])
    return BrownianPath(grid, W, seed)


def sample_path(grid: TimeGrid, dim: int, seed: SeedSpec) -> BrownianPath:
    """One m-dimensional Wiener path on ``grid``, fully determined by (grid, dim, seed)."""
    return sample_paths(grid, dim, seed, 1)[0]


def refine_dyadic(grid: TimeGrid, path: BrownianPath, seed: SeedSpec) -> BrownianPath:
    """Halve every interval; midpoints drawn from the Brownian bridge law.

    Values at the existing points are copied bit-for-bit. The midpoint on
    [a, b] is N((W_a + W_b)/2, (b - a)/4) per component, independent across
    intervals.
    """
    if path.grid != grid:
        raise InvalidArgument("path is not defined on the given grid")
    n = grid.n_steps
    if n >= 1 << 30 or n * path.dim >= 1 << 32:
        raise InvalidArgument("grid too fine to refine")
    m = path.dim
    streams = seed.streams(path.n_paths)
    z = stream_normals(seed.root_seed, streams, 0, n * m, rng.DOMAIN_BRIDGE | n).reshape(len(streams), n, m)
    v = path.values if path.batched else path.values[None]
    scale = np.sqrt(grid.dt / 4.0)[None, :, None]
    mid = 0.5 * (v[:, :-1] + v[:, 1:]) + scale * z
    out = np.empty((v.shape[0], 2 * n + 1, m))
    out[:, 0::2] = v
    out[:, 1::2] = mid
    if not path.batched:
        out = out[0]
    return BrownianPath(grid.refined(), out, path.seed)
