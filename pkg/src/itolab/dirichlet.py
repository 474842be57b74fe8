"""Elliptic Dirichlet problems through the first exit time from a bounded domain.

For L u = h + c u in D, u = f on the boundary,

    u(x) = E[ f(X_tau) exp(-int_0^tau c) - int_0^tau h(X_s) exp(-int_0^s c) ds ],

with tau the first time the diffusion started at x leaves D. Paths are
advanced by Euler-Maruyama and monitored at grid times only, which misses
excursions inside a step and biases raw exit times upward by O(sqrt(dt)). The
last segment is refined by bisection against the domain predicate.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import parallel, rng
from .errors import CappedExitError, InvalidArgument
from .estimators import fit_linear_bias, reduce
from .paths import stream_normals
from .cauchy import PdeEstimate
from .rng import SeedSpec
from .sde import Coefficients, _em_step, _raise_divergence

BISECTION_STEPS = 60
MAX_CAPPED_FRACTION = 1e-3
BATCH = 16384


@dataclass(frozen=True)
class Domain:
    """Open set given by a vectorized predicate over (..., d).

    ``boundary_project(x_in, x_out)`` returns the point where the segment from
    an inside point to an outside point meets the boundary; it must be
    classified as outside. ``bounding_radius`` bounds |x| over the domain.
    """

    contains: Callable
    boundary_project: Callable
    bounding_radius: float
    d: int
    name: str = "domain"


def _nudge_out(dom_contains, center, p):
    p = np.array(p, dtype=float)
    for _ in range(8):
        inside = dom_contains(p)
        if not np.any(inside):
            break
        p[inside] = center + (p[inside] - center) * (1 + 4e-16)
    return p


def interval(a: float, b: float) -> Domain:
    if not b > a:
        raise InvalidArgument("interval needs a < b")

    def contains(x):
        x = np.asarray(x)[..., 0]
        return (x > a) & (x < b)

    def project(x_in, x_out):
        x_out = np.asarray(x_out, float)
        return np.where(x_out[..., :1] >= b, b, a) * np.ones_like(x_out)

    return Domain(contains, project, max(abs(a), abs(b)), 1, f"interval({a},{b})")


def box(lo, hi) -> Domain:
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise InvalidArgument("box needs lo < hi componentwise")

    def contains(x):
        x = np.asarray(x)
        return np.all((x > lo) & (x < hi), axis=-1)

    def project(x_in, x_out):
        x_in, x_out = np.asarray(x_in, float), np.asarray(x_out, float)
        step = x_out - x_in
        with np.errstate(divide="ignore", invalid="ignore"):
            s_hi = np.where(step > 0, (hi - x_in) / step, np.inf)
            s_lo = np.where(step < 0, (lo - x_in) / step, np.inf)
        s_each = np.minimum(s_hi, s_lo)
        j = np.argmin(s_each, axis=-1)
        s = np.clip(np.take_along_axis(s_each, j[..., None], -1), 0.0, 1.0)
        p = x_in + s * step

        def pick(a):
            return np.take_along_axis(np.broadcast_to(a, p.shape), j[..., None], -1)

        # pin the crossed coordinate exactly onto its face
        np.put_along_axis(p, j[..., None], np.where(pick(s_hi) <= pick(s_lo), pick(hi), pick(lo)), -1)
        return p

    radius = float(np.linalg.norm(np.maximum(np.abs(lo), np.abs(hi))))
    return Domain(contains, project, radius, len(lo), "box")


def ball(center, r: float) -> Domain:
    center = np.atleast_1d(np.asarray(center, float))
    if not r > 0:
        raise InvalidArgument("ball radius must be positive")

    def contains(x):
        return np.sum((np.asarray(x) - center) ** 2, axis=-1) < r * r

    def project(x_in, x_out):
        x_in, x_out = np.asarray(x_in, float), np.asarray(x_out, float)
        u = x_out - x_in
        w = x_in - center
        A = np.sum(u * u, axis=-1)
        B = np.sum(u * w, axis=-1)
        C = np.sum(w * w, axis=-1) - r * r
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (-B + np.sqrt(np.maximum(B * B - A * C, 0.0))) / A
        s = np.clip(np.nan_to_num(s, nan=1.0), 0.0, 1.0)
        p = x_in + s[..., None] * u
        return _nudge_out(contains, center, p)

    return Domain(contains, project, float(np.linalg.norm(center) + r), len(center), f"ball(r={r})")


def check_domain(domain: Domain, x_in, x_out) -> bool:
    """Boundary point is outside and a 1e-9*R step back toward x_in lands inside."""
    p = domain.boundary_project(x_in, x_out)
    back = np.asarray(x_in, float) - p
    back = back / np.linalg.norm(back, axis=-1, keepdims=True)
    inner = p + 1e-9 * domain.bounding_radius * back
    return bool(np.all(~domain.contains(p)) and np.all(domain.contains(inner)))


@dataclass(frozen=True)
class DirichletProblem:
    """Time-homogeneous coefficients; ``f``, ``h``, ``c`` map (..., d) -> (...)."""

    coeffs: Coefficients
    domain: Domain
    f: Callable
    h: Callable | None = None
    c: Callable | None = None

    def __post_init__(self):
        if self.coeffs.d != self.domain.d:
            raise InvalidArgument("domain and coefficient dimensions differ")


def _interior_samples(domain: Domain, n: int, seed: int) -> np.ndarray:
    d, R = domain.d, domain.bounding_radius
    pts, label = [], 0
    while sum(len(p) for p in pts) < n and label < 64:
        u = rng.uniforms(seed, np.arange(4 * n, dtype=np.uint64) + np.uint64(label * 4 * n), 0, (d + 1) // 2)
        x = R * (2 * u[:, :d] - 1)
        pts.append(x[domain.contains(x)])
        label += 1
    out = np.concatenate(pts)[:n]
    if len(out) == 0:
        raise InvalidArgument("could not sample interior points; domain empty or bounding_radius wrong")
    return out


def ellipticity(prob: DirichletProblem, n_samples: int = 1000, seed: int = 0) -> float:
    """min over sampled x in D of max_i a_ii(x); also enforces c >= 0 on the samples."""
    x = _interior_samples(prob.domain, n_samples, seed)
    if prob.c is not None and np.any(np.asarray(prob.c(x), float) < 0):
        raise InvalidArgument("discount c must be nonnegative")
    a = prob.coeffs.a(0.0, x)
    val = float(np.min(np.max(np.diagonal(a, axis1=-2, axis2=-1), axis=-1)))
    if not val > 0:
        raise InvalidArgument("ellipticity probe failed: some sampled point has a_ii = 0 for all i")
    return val


def default_t_cap(prob: DirichletProblem) -> float:
    R, d = prob.domain.bounding_radius, prob.domain.d
    return 100.0 * R * R * d / ellipticity(prob)


@dataclass(frozen=True)
class ExitBatch:
    tau: np.ndarray
    exit_point: np.ndarray
    capped: np.ndarray
    discount_integral: np.ndarray  # int_0^tau c
    source_integral: np.ndarray  # int_0^tau h Z ds


def _bisect(contains, xa, xb, steps=BISECTION_STEPS):
    lo = np.zeros(len(xa))
    hi = np.ones(len(xa))
    seg = xb - xa
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        inside = contains(xa + mid[:, None] * seg)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    return lo, hi


def _exit_paths(prob: DirichletProblem, x, dt, root_seed, streams, t_cap, refine=True) -> ExitBatch:
    c = prob.coeffs
    dom = prob.domain
    n, d, m = len(streams), c.d, c.m
    # per-path record of the crossing step: inside point, outside point, step index,
    # and the h/c contributions of that step (scaled by the crossing fraction later)
    seg_a, seg_b = np.zeros((n, d)), np.zeros((n, d))
    step_of = np.zeros(n)
    last_h, last_c = np.zeros(n), np.zeros(n)
    capped = np.zeros(n, bool)
    cint_out, src_out = np.zeros(n), np.zeros(n)
    idx = np.arange(n)
    xa = np.broadcast_to(x, (n, d)).copy()
    cint, src = np.zeros(n), np.zeros(n)
    sqdt = np.sqrt(dt)
    n_cap = int(np.ceil(t_cap / dt - 1e-9))
    has_h, has_c = prob.h is not None, prob.c is not None
    k = 0
    while len(idx) and k < n_cap:
        chunk = int(min(n_cap - k, max(16, min(1024, (1 << 18) // (len(idx) * m)))))
        z = stream_normals(root_seed, streams[idx], k * m, (k + chunk) * m).reshape(len(idx), chunk, m) * sqdt
        for j in range(chunk):
            if has_h:
                h_inc = np.asarray(prob.h(xa), float) * (np.exp(-cint) * dt if has_c else dt)
            if has_c:
                c_inc = np.asarray(prob.c(xa), float) * dt
            xb = _em_step(c, 0.0, xa, dt, z[:, j])
            if not np.all(np.isfinite(xb)):
                _raise_divergence(xb, k + j + 1, streams[idx])
            out = ~dom.contains(xb)
            if out.any():
                g = idx[out]
                seg_a[g], seg_b[g], step_of[g] = xa[out], xb[out], k + j
                keep = ~out
                idx, xb, z = idx[keep], xb[keep], z[keep]
                if has_h:
                    last_h[g], src_out[g] = h_inc[out], src[out]
                    src, h_inc = src[keep], h_inc[keep]
                if has_c:
                    last_c[g], cint_out[g] = c_inc[out], cint[out]
                    cint, c_inc = cint[keep], c_inc[keep]
            if has_h:
                src = src + h_inc
            if has_c:
                cint = cint + c_inc
            xa = xb
            if not len(idx):
                break
        k += chunk
    done = np.ones(n, bool)
    done[idx] = False
    frac = np.ones(n)
    exit_pt = np.zeros((n, d))
    if done.any():
        a_, b_ = seg_a[done], seg_b[done]
        if refine:
            lo, hi = _bisect(dom.contains, a_, b_)
            seg = b_ - a_
            a_, b_ = a_ + lo[:, None] * seg, a_ + hi[:, None] * seg
            frac[done] = hi
        exit_pt[done] = dom.boundary_project(a_, b_)
    tau = (step_of + frac) * dt
    src_out = src_out + frac * last_h
    cint_out = cint_out + frac * last_c
    if len(idx):
        capped[idx] = True
        tau[idx] = n_cap * dt
        exit_pt[idx] = xa
        src_out[idx], cint_out[idx] = src, cint
    return ExitBatch(tau, exit_pt, capped, cint_out, src_out)


def _validate(prob, x, dt):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (prob.domain.d,) or not np.all(np.isfinite(x)):
        raise InvalidArgument(f"x must be a finite vector of length {prob.domain.d}")
    if not bool(prob.domain.contains(x)):
        raise InvalidArgument(f"starting point {x.tolist()} is not inside {prob.domain.name}")
    if not dt > 0:
        raise InvalidArgument("dt must be positive")
    return x


def exit_paths(prob: DirichletProblem, x, dt: float, n_paths: int, seed: SeedSpec, t_cap: float | None = None,
               refine: bool = True) -> ExitBatch:
    """Exit data for streams ``seed.stream_id .. + n_paths - 1``."""
    x = _validate(prob, x, dt)
    t_cap = default_t_cap(prob) if t_cap is None else t_cap
    res = parallel.map_batches(lambda s: _exit_paths(prob, x, dt, seed.root_seed, s, t_cap, refine),
                               seed.streams(n_paths), BATCH)
    return ExitBatch(*(np.concatenate([getattr(r, f) for r in res])
                       for f in ("tau", "exit_point", "capped", "discount_integral", "source_integral")))


def exit_time(prob: DirichletProblem, x, dt: float, seed: SeedSpec, t_cap: float | None = None,
              refine: bool = True) -> tuple[float, np.ndarray, bool]:
    """(tau, exit point, capped) for the single path on stream ``seed.stream_id``."""
    b = exit_paths(prob, x, dt, 1, seed, t_cap, refine)
    return float(b.tau[0]), b.exit_point[0], bool(b.capped[0])


def dirichlet_solve(prob: DirichletProblem, x, dt: float, n_paths: int, seed: SeedSpec,
                    t_cap: float | None = None) -> PdeEstimate:
    """Exit-time representation of u(x).

    Raises :class:`CappedExitError` when MAX_CAPPED_FRACTION or more of the
    paths hit ``t_cap`` before leaving D. The few capped paths below that
    limit keep their truncated functional with f evaluated at the capped state.
    """
    x = _validate(prob, x, dt)
    t_cap = default_t_cap(prob) if t_cap is None else t_cap
    b = exit_paths(prob, x, dt, n_paths, seed, t_cap)
    frac = float(b.capped.mean())
    if frac >= MAX_CAPPED_FRACTION:
        raise CappedExitError(f"{frac:.3%} of paths reached t_cap={t_cap:g} before exiting; "
                              "E[tau] may be infinite or t_cap too small", capped_fraction=frac)
    vals = np.asarray(prob.f(b.exit_point), float) * np.exp(-b.discount_integral) - b.source_integral
    extra = {"capped": int(b.capped.sum()), "t_cap": t_cap, "mean_tau": float(np.mean(b.tau))}
    return PdeEstimate(0.0, x, reduce(vals, seed.root_seed), None, n_paths, extra)


def exit_bias_coefficient(prob: DirichletProblem, x, dt: float, n_paths: int, seed: SeedSpec,
                          factors=(16, 4), t_cap: float | None = None) -> tuple[float, list]:
    """Fit value(dt) = limit + C sqrt(dt) over the steps ``f*dt`` for f in ``factors`` and ``dt`` itself.

    Returns (C, estimates), finest last. The band at step dt then reads
    k*stderr + |C| sqrt(dt).
    """
    steps = [f * dt for f in factors] + [dt]
    ests = [dirichlet_solve(prob, x, s, n_paths, seed, t_cap) for s in steps]
    _, C = fit_linear_bias(np.sqrt(steps), [e.value.mean for e in ests])
    return C, ests
