"""Named benchmark problems with closed-form oracles.

Each preset turns a parameter map into a :class:`Setup`: coefficients, a
default start and horizon, the PDE problem where one applies, and exact
values used for reporting and tests.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cauchy import CauchyProblem, Growth
from .dirichlet import DirichletProblem, ball, interval
from .errors import ConfigError
from .sde import Coefficients


@dataclass(frozen=True)
class Setup:
    coeffs: Coefficients
    x0: np.ndarray
    T: float
    cauchy: CauchyProblem | None = None
    dirichlet: DirichletProblem | None = None
    # exact X_T given (t0, x0, T, times, W) with W of shape (P, n+1, m)
    exact_terminal: Callable | None = None
    mean_terminal: Callable | None = None  # (t0, x0, T) -> E[X_T]
    solution: Callable | None = None  # PDE value u(t, x) (Cauchy) or u(x) (Dirichlet)


@dataclass(frozen=True)
class Preset:
    name: str
    description: str
    defaults: dict
    commands: frozenset
    build: Callable = field(repr=False)

    def resolve(self, params: dict | None) -> dict:
        """Defaults overridden by ``params``; values coerced to the default's type."""
        out = dict(self.defaults)
        for key, val in (params or {}).items():
            if key not in self.defaults:
                valid = ", ".join(sorted(self.defaults)) or "(none)"
                raise ConfigError(f"unknown parameter '{key}' for preset {self.name}; valid: {valid}")
            out[key] = _coerce(key, val, self.defaults[key])
        return out

    def setup(self, params: dict | None = None) -> Setup:
        return self.build(self.resolve(params))


def _coerce(key, val, default):
    try:
        if isinstance(default, bool):
            raise ConfigError(f"parameter '{key}' cannot be set")
        if isinstance(default, int):
            f = float(val)
            if f != int(f):
                raise ValueError
            return int(f)
        if isinstance(default, float):
            f = float(val)
            if not np.isfinite(f):
                raise ValueError
            return f
        return str(val)
    except (TypeError, ValueError):
        raise ConfigError(f"parameter '{key}' expects {type(default).__name__}, got {val!r}") from None


def _zero_drift(t, x):
    return np.zeros_like(x)


def _brownian_coeffs(d: int = 1, m: int = 1) -> Coefficients:
    eye = np.eye(d, m)
    return Coefficients(_zero_drift, lambda t, x: np.broadcast_to(eye, x.shape[:-1] + (d, m)), d, m,
                        lipschitz_K=1.0, growth_K=float(np.sqrt(min(d, m))), time_homogeneous=True,
                        name=f"brownian d={d} m={m}")


def _gbm_coeffs(beta: float, gamma: float) -> Coefficients:
    return Coefficients(lambda t, x: beta * x, lambda t, x: (gamma * x)[..., None], 1, 1,
                        lipschitz_K=abs(beta) + abs(gamma) or 1.0, growth_K=abs(beta) + abs(gamma) or 1.0,
                        time_homogeneous=True, name=f"gbm beta={beta} gamma={gamma}")


def _ou_coeffs(theta: float, sigma: float) -> Coefficients:
    return Coefficients(lambda t, x: -theta * x, lambda t, x: np.full(x.shape + (1,), sigma), 1, 1,
                        lipschitz_K=abs(theta) or 1.0, growth_K=abs(theta) + abs(sigma) or 1.0,
                        time_homogeneous=True, name=f"ou theta={theta} sigma={sigma}")


def _gbm_exact(beta, gamma):
    def exact(t0, x0, T, times, W):
        dW = W[:, -1, 0] - W[:, 0, 0]
        return (x0[0] * np.exp((beta - 0.5 * gamma**2) * (T - t0) + gamma * dW))[:, None]
    return exact


def _ou_exact(theta, sigma):
    # int e^{-theta(T-s)} dW_s = (W_T - W_t0) - theta int e^{-theta(T-s)} (W_s - W_t0) ds,
    # the ds-integral by the trapezoid rule on the sampled path
    def exact(t0, x0, T, times, W):
        B = W[..., 0] - W[:, :1, 0]
        g = np.exp(-theta * (T - times))
        y = g * B
        integral = np.sum(0.5 * (y[:, 1:] + y[:, :-1]) * np.diff(times), axis=1)
        stoch = B[:, -1] - theta * integral
        return (x0[0] * np.exp(-theta * (T - t0)) + sigma * stoch)[:, None]
    return exact


def _bm(p):
    d, m = p["d"], p["m"]
    if d < 1 or m < 1:
        raise ConfigError("bm needs d >= 1 and m >= 1")
    eye = np.eye(d, m)
    return Setup(_brownian_coeffs(d, m), np.full(d, p["x0"]), p["T"],
                 exact_terminal=lambda t0, x0, T, times, W: x0 + (W[:, -1] - W[:, 0]) @ eye.T,
                 mean_terminal=lambda t0, x0, T: np.asarray(x0, float))


def _gbm(p):
    beta, gamma = p["beta"], p["gamma"]
    return Setup(_gbm_coeffs(beta, gamma), np.array([p["x0"]]), p["T"],
                 exact_terminal=_gbm_exact(beta, gamma),
                 mean_terminal=lambda t0, x0, T: np.asarray(x0, float) * np.exp(beta * (T - t0)))


def _ou(p):
    theta, sigma = p["theta"], p["sigma"]
    return Setup(_ou_coeffs(theta, sigma), np.array([p["x0"]]), p["T"],
                 exact_terminal=_ou_exact(theta, sigma),
                 mean_terminal=lambda t0, x0, T: np.asarray(x0, float) * np.exp(-theta * (T - t0)))


def _square(x):
    return x[..., 0] ** 2


def _heat(p):
    T = p["T"]
    prob = CauchyProblem(_brownian_coeffs(), T, _square, f_growth=Growth(L=1.0, lam=1.0))
    return Setup(prob.coeffs, np.array([p["x0"]]), T, cauchy=prob,
                 solution=lambda t, x: float(np.sum(np.square(x))) + (T - t))


def _gbm_terminal(p):
    beta, gamma, T = p["beta"], p["gamma"], p["T"]
    prob = CauchyProblem(_gbm_coeffs(beta, gamma), T, lambda x: x[..., 0].copy(), f_growth=Growth(L=1.0, lam=0.5))
    return Setup(prob.coeffs, np.array([p["x0"]]), T, cauchy=prob, exact_terminal=_gbm_exact(beta, gamma),
                 solution=lambda t, x: float(x[0]) * float(np.exp(beta * (T - t))))


def _const_discount(p):
    c0, T = p["c0"], p["T"]
    if c0 < 0:
        raise ConfigError("c0 must be nonnegative")
    prob = CauchyProblem(_brownian_coeffs(), T, _square, c=lambda t, x: np.full(np.shape(x)[:-1], c0),
                         f_growth=Growth(L=1.0, lam=1.0))
    return Setup(prob.coeffs, np.array([p["x0"]]), T, cauchy=prob,
                 solution=lambda t, x: float(np.exp(-c0 * (T - t))) * (float(np.sum(np.square(x))) + (T - t)))


def _const_source(p):
    h0, T = p["h0"], p["T"]
    prob = CauchyProblem(_brownian_coeffs(), T, lambda x: np.zeros(np.shape(x)[:-1]),
                         h=lambda t, x: np.full(np.shape(x)[:-1], h0),
                         f_growth=Growth(nonnegative=True), h_growth=Growth(L=abs(h0) or 1.0, lam=0.0))
    return Setup(prob.coeffs, np.array([p["x0"]]), T, cauchy=prob, solution=lambda t, x: -h0 * (T - t))


def _interval_exit(p):
    a, b, f0, f1, h0 = p["a"], p["b"], p["f0"], p["f1"], p["h0"]
    if not b > a:
        raise ConfigError("interval-exit needs b > a")
    prob = DirichletProblem(_brownian_coeffs(), interval(a, b), lambda x: f0 + f1 * x[..., 0],
                            h=(lambda x: np.full(np.shape(x)[:-1], h0)) if h0 != 0 else None)
    # 1/2 u'' = h0 with u = f on {a, b}
    sol = lambda x: f0 + f1 * float(x[0]) - h0 * (float(x[0]) - a) * (b - float(x[0]))
    return Setup(prob.coeffs, np.array([p["x0"]]), 1.0, dirichlet=prob, solution=sol)


def _disk_exit(p):
    r, f0, h0 = p["r"], p["f0"], p["h0"]
    if not r > 0:
        raise ConfigError("disk-exit needs r > 0")
    prob = DirichletProblem(_brownian_coeffs(2, 2), ball([0.0, 0.0], r), lambda x: np.full(np.shape(x)[:-1], f0),
                            h=(lambda x: np.full(np.shape(x)[:-1], h0)) if h0 != 0 else None)
    # 1/2 Laplacian of (|x|^2 - r^2)/2 in the plane is 1
    sol = lambda x: f0 + h0 * (float(np.sum(np.square(x))) - r * r) / 2
    return Setup(prob.coeffs, np.array([p["x0"], p["y0"]]), 1.0, dirichlet=prob, solution=sol)


_PATHS = frozenset({"simulate", "sde-solve", "diffusion-probe", "convergence"})

PRESETS = {p.name: p for p in [
    Preset("bm", "standard Brownian motion, sigma = I (d x m)", {"d": 1, "m": 1, "x0": 0.0, "T": 1.0},
           _PATHS | {"ito-check"}, _bm),
    Preset("gbm", "geometric Brownian motion dX = beta X dt + gamma X dW",
           {"beta": 0.05, "gamma": 0.2, "x0": 1.0, "T": 1.0}, _PATHS, _gbm),
    Preset("ou", "Ornstein-Uhlenbeck dX = -theta X dt + sigma dW",
           {"theta": 1.0, "sigma": 1.0, "x0": 1.0, "T": 1.0}, _PATHS, _ou),
    Preset("heat-1d", "b = 0, sigma = 1, f(x) = x^2", {"x0": 1.0, "T": 1.0}, frozenset({"solve-cauchy"}), _heat),
    Preset("gbm-terminal", "GBM with f(x) = x", {"beta": 0.05, "gamma": 0.2, "x0": 1.0, "T": 1.0},
           frozenset({"solve-cauchy"}), _gbm_terminal),
    Preset("const-discount", "Brownian motion, f(x) = x^2, c = c0", {"c0": 1.0, "x0": 0.0, "T": 1.0},
           frozenset({"solve-cauchy"}), _const_discount),
    Preset("const-source", "Brownian motion, f = 0, h = h0", {"h0": 2.0, "x0": 0.0, "T": 0.5},
           frozenset({"solve-cauchy"}), _const_source),
    Preset("interval-exit", "Brownian motion on (a, b), f(x) = f0 + f1 x, h = h0",
           {"a": -1.0, "b": 1.0, "f0": 0.0, "f1": 0.0, "h0": -1.0, "x0": 0.0},
           frozenset({"solve-dirichlet"}), _interval_exit),
    Preset("disk-exit", "planar Brownian motion in the disk of radius r, f = f0, h = h0",
           {"r": 1.0, "f0": 0.0, "h0": -1.0, "x0": 0.0, "y0": 0.0}, frozenset({"solve-dirichlet"}), _disk_exit),
]}


def get(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset '{name}'; valid presets: {', '.join(PRESETS)}") from None
