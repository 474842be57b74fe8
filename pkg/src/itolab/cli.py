"""Batch front-end: ``itolab <command> --preset NAME [flags]``.

Each run writes a CSV artifact (one row per run, or one row per level plus a
fit row for ``convergence``) and prints a one-line summary. Exit status is 0
on success, 1 on configuration or argument errors and 2 on numerical
failures (divergence, non-convergence, capped exits).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timezone

import numpy as np

from . import __version__, presets, studies
from .cauchy import check_problem, feynman_kac_solve, kolmogorov_solve
from .diffusion import estimate_drift_diffusion
from .dirichlet import dirichlet_solve
from .errors import ConfigError, InvalidArgument, ItoLabError, NumericalFailure
from .estimators import reduce
from .ito import AdaptedProcess, check_isometry, check_maximal_inequalities
from .paths import make_uniform_grid, sample_path
from .rng import U64, SeedSpec
from .sde import SdeProblem, check_coefficients, euler_maruyama, picard_solve, sweep

COMMANDS = ("simulate", "ito-check", "sde-solve", "diffusion-probe", "solve-cauchy", "solve-dirichlet",
            "convergence")
COLUMNS = ("command", "preset", "param_json", "t", "x_json", "T", "n_paths", "n_steps", "dt", "seed",
           "estimate", "stderr", "extra_json", "wall_ms")
# parameters a command adds on top of the preset's own
COMMAND_PARAMS = {"ito-check": {"integrand": "w", "p": 1}}
INTEGRANDS = {
    "one": lambda: AdaptedProcess.constant(1.0),
    "w": AdaptedProcess.brownian,
    "s": lambda: AdaptedProcess.of_time(lambda t: t, "X_s = s"),
}
STUDIES = ("qv", "em-strong")
PICARD_MAX_STEPS = 4096


@dataclass
class RunConfig:
    command: str | None = None
    preset: str | None = None
    params: dict = field(default_factory=dict)
    n_paths: int | None = None
    n_steps: int | None = None
    dt: float | None = None
    seed: int | None = None
    t: float | None = None
    x: list | None = None
    T: float | None = None
    out: str | None = None
    levels: list | None = None
    study: str | None = None
    reproducible: bool = False


DEFAULTS = {"n_paths": 10_000, "n_steps": 256, "seed": 1, "t": 0.0}
# diffusion-probe reads --steps as Euler substeps inside [t, t + h]
COMMAND_DEFAULTS = {"diffusion-probe": {"n_steps": 64}}
_ALIASES = {"paths": "n_paths", "steps": "n_steps"}


# ---------------------------------------------------------------- formatting

def fmt_number(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


def to_json(v) -> str:
    """Compact JSON with every float rendered to 17 significant digits."""
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v if math.isfinite(v) else "null"
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, dict):
        return "{" + ",".join(f"{json.dumps(str(k))}:{to_json(x)}" for k, x in v.items()) + "}"
    if isinstance(v, np.ndarray):
        v = v.tolist()
    if isinstance(v, (list, tuple)):
        return "[" + ",".join(to_json(x) for x in v) + "]"
    raise TypeError(f"cannot encode {type(v).__name__}")


def render_csv(rows: list[dict], timestamp: str | None = None) -> str:
    ts = timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds")
    buf = io.StringIO()
    buf.write(f"# ito-lab v{__version__} {ts}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([r[c] for c in COLUMNS])
    return buf.getvalue()


# ---------------------------------------------------------------- config

def parse_levels(raw) -> list[int]:
    if isinstance(raw, (list, tuple)):
        return [int(k) for k in raw]
    try:
        lo, hi = str(raw).split("..")
        lo, hi = int(lo), int(hi)
    except ValueError:
        raise ConfigError(f"levels must look like k0..k1, got {raw!r}") from None
    if hi < lo:
        raise ConfigError("levels k0..k1 need k0 <= k1")
    return list(range(lo, hi + 1))


def parse_vector(raw) -> list[float]:
    if isinstance(raw, (int, float)):
        return [float(raw)]
    if isinstance(raw, (list, tuple)):
        vals = raw
    else:
        s = str(raw).strip()
        vals = json.loads(s) if s.startswith("[") else s.split(",")
        vals = vals if isinstance(vals, list) else [vals]
    try:
        return [float(v) for v in vals]
    except (TypeError, ValueError):
        raise ConfigError(f"cannot read a vector from {raw!r}") from None


def parse_param(item: str) -> tuple[str, str]:
    key, sep, val = item.partition("=")
    if not sep or not key:
        raise ConfigError(f"--param expects key=value, got {item!r}")
    return key.strip(), val.strip()


def load_config_file(path: str) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config file: {e}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file is not valid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a JSON object")
    names = {f.name for f in fields(RunConfig)}
    cfg = RunConfig()
    for key, val in raw.items():
        key = _ALIASES.get(key, key)
        if key not in names:
            raise ConfigError(f"unknown config key '{key}'; valid: {', '.join(sorted(names | set(_ALIASES)))}")
        if key == "levels":
            val = parse_levels(val)
        elif key == "x":
            val = parse_vector(val)
        elif key == "params" and not isinstance(val, dict):
            raise ConfigError("params must be a JSON object")
        setattr(cfg, key, val)
    return cfg


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="itolab", description="Monte Carlo stochastic calculus workbench.")
    p.add_argument("command", nargs="?", help=" | ".join(COMMANDS))
    p.add_argument("--config", help="JSON run configuration; flags override it")
    p.add_argument("--preset", help="problem preset: " + ", ".join(presets.PRESETS))
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="preset parameter (repeatable)")
    p.add_argument("--paths", dest="n_paths", type=int)
    p.add_argument("--steps", dest="n_steps", type=int)
    p.add_argument("--dt", type=float, help="step for solve-dirichlet, h for diffusion-probe")
    p.add_argument("--seed", type=int)
    p.add_argument("--t", type=float, help="start time")
    p.add_argument("--x", help="start point, e.g. 0.5 or 0,0")
    p.add_argument("--T", type=float, help="horizon")
    p.add_argument("--out", help="CSV output path (stdout when omitted)")
    p.add_argument("--levels", help="dyadic exponents k0..k1 for convergence")
    p.add_argument("--study", choices=STUDIES, help="convergence study")
    p.add_argument("--reproducible", action="store_true", help="leave wall_ms empty")
    return p


def config_from_args(argv) -> RunConfig:
    a = build_parser().parse_args(argv)
    cfg = load_config_file(a.config) if a.config else RunConfig()
    cfg.params = dict(cfg.params)
    for item in a.param:
        k, v = parse_param(item)
        cfg.params[k] = v
    for name in ("command", "preset", "n_paths", "n_steps", "dt", "seed", "t", "T", "out", "study"):
        val = getattr(a, name)
        if val is not None:
            setattr(cfg, name, val)
    if a.x is not None:
        cfg.x = parse_vector(a.x)
    if a.levels is not None:
        cfg.levels = parse_levels(a.levels)
    cfg.reproducible = cfg.reproducible or a.reproducible
    return cfg


def _positive_int(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
        raise ConfigError(f"{name} must be a positive integer, got {v!r}")
    return int(v)


def _finite(name, v):
    try:
        f = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {v!r}") from None
    if not math.isfinite(f):
        raise ConfigError(f"{name} must be finite")
    return f


def validate(cfg: RunConfig) -> RunConfig:
    """Fill defaults and check every field before anything runs."""
    if cfg.command not in COMMANDS:
        raise ConfigError(f"unknown command {cfg.command!r}; valid commands: {', '.join(COMMANDS)}")
    if cfg.preset is None:
        raise ConfigError(f"--preset is required; valid presets: {', '.join(presets.PRESETS)}")
    preset = presets.get(cfg.preset)
    if cfg.command not in preset.commands:
        ok = [n for n, p in presets.PRESETS.items() if cfg.command in p.commands]
        raise ConfigError(f"preset {cfg.preset} does not support {cfg.command}; use one of: {', '.join(ok)}")
    extra = COMMAND_PARAMS.get(cfg.command, {})
    unknown = set(cfg.params) - set(preset.defaults) - set(extra)
    if unknown:
        valid = ", ".join(sorted(set(preset.defaults) | set(extra)))
        raise ConfigError(f"unknown parameter(s) {', '.join(sorted(unknown))} for {cfg.preset}; valid: {valid}")
    defaults = dict(DEFAULTS, **COMMAND_DEFAULTS.get(cfg.command, {}))
    cfg = replace(cfg, **{k: v for k, v in defaults.items() if getattr(cfg, k) is None})
    n_paths = _positive_int("n_paths", cfg.n_paths)
    if n_paths < 2:
        raise ConfigError("n_paths must be at least 2")
    _positive_int("n_steps", cfg.n_steps)
    if isinstance(cfg.seed, bool) or not isinstance(cfg.seed, (int, np.integer)) or not 0 <= cfg.seed <= U64:
        raise ConfigError(f"seed must be an integer in [0, 2^64), got {cfg.seed!r}")
    if cfg.dt is not None and not _finite("dt", cfg.dt) > 0:
        raise ConfigError("dt must be positive")
    cfg.t = _finite("t", cfg.t)
    if cfg.T is not None:
        cfg.T = _finite("T", cfg.T)
    if cfg.x is not None:
        cfg.x = [_finite("x", v) for v in cfg.x]
    if cfg.command == "convergence":
        cfg.study = cfg.study or ("qv" if cfg.preset == "bm" else "em-strong")
        if cfg.study not in STUDIES:
            raise ConfigError(f"unknown study {cfg.study!r}; valid: {', '.join(STUDIES)}")
        if cfg.levels is None:
            cfg.levels = list(range(6, 15)) if cfg.study == "qv" else list(range(4, 9))
        if len(cfg.levels) < 3:
            raise ConfigError("convergence needs at least three levels")
    return cfg


# ---------------------------------------------------------------- commands

@dataclass
class Result:
    estimate: float | None
    stderr: float | None
    extra: dict
    n_steps: int | None = None
    dt: float | None = None
    T: float | None = None
    x: list | None = None


def _start(cfg, setup):
    x = setup.x0 if cfg.x is None else np.asarray(cfg.x, float)
    if x.shape != setup.x0.shape:
        raise InvalidArgument(f"x must have {len(setup.x0)} component(s), got {len(x)}")
    return x


def _horizon(cfg, setup):
    T = setup.T if cfg.T is None else cfg.T
    if not T > cfg.t:
        raise InvalidArgument(f"need T > t, got t={cfg.t}, T={T}")
    return T


def _vec_extra(est, prefix=""):
    return {prefix + "mean": np.atleast_1d(est.mean).tolist(), prefix + "stderr": np.atleast_1d(est.stderr).tolist()}


def _terminal(cfg, setup):
    x, T = _start(cfg, setup), _horizon(cfg, setup)
    prob = SdeProblem(setup.coeffs, cfg.t, x, T)
    XT = sweep(prob, SeedSpec(cfg.seed), cfg.n_paths, cfg.n_steps)
    est = reduce(XT, cfg.seed)
    extra = _vec_extra(est)
    if setup.mean_terminal is not None:
        extra["exact_mean"] = np.asarray(setup.mean_terminal(cfg.t, x, T), float).tolist()
    mean0, se0 = float(np.atleast_1d(est.mean)[0]), float(np.atleast_1d(est.stderr)[0])
    return prob, Result(mean0, se0, extra, cfg.n_steps, (T - cfg.t) / cfg.n_steps, T, x.tolist())


def cmd_simulate(cfg, setup, params):
    return _terminal(cfg, setup)[1]


def cmd_sde_solve(cfg, setup, params):
    prob, res = _terminal(cfg, setup)
    res.extra["warnings"] = check_coefficients(setup.coeffs, prob.t0, prob.T)
    if cfg.n_steps <= PICARD_MAX_STEPS:
        # fixed-point cross-check on the first stream's path
        path = sample_path(make_uniform_grid(prob.t0, prob.T, cfg.n_steps), setup.coeffs.m, SeedSpec(cfg.seed))
        pic = picard_solve(prob, path)
        em = euler_maruyama(prob, path)
        res.extra["picard_iterations"] = pic.iterations
        res.extra["picard_em_sup_distance"] = float(np.max(np.abs(pic.states - em.states)))
    return res


def cmd_ito_check(cfg, setup, params):
    if setup.coeffs.d != 1 or setup.coeffs.m != 1:
        raise InvalidArgument("ito-check runs on the one-dimensional bm preset")
    name = params["integrand"]
    if name not in INTEGRANDS:
        raise ConfigError(f"unknown integrand {name!r}; valid: {', '.join(INTEGRANDS)}")
    T = _horizon(cfg, setup)
    X = INTEGRANDS[name]()
    seed = SeedSpec(cfg.seed)
    iso = check_isometry(X, T - cfg.t, cfg.n_paths, seed, cfg.n_steps)
    mx = check_maximal_inequalities(X, T - cfg.t, params["p"], cfg.n_paths, seed, cfg.n_steps)
    extra = {"rhs": iso.rhs.mean, "rhs_stderr": iso.rhs.stderr,
             "zero_mean": iso.zero_mean.mean, "zero_mean_stderr": iso.zero_mean.stderr,
             "difference": iso.difference.mean, "difference_stderr": iso.difference.stderr,
             "isometry_consistent": iso.consistent(),
             "sup_moment": mx.lhs.mean, "sup_moment_stderr": mx.lhs.stderr,
             "maximal_bound": mx.bound, "doob_bound": mx.doob_rhs, "maximal_holds": mx.holds}
    return Result(iso.lhs.mean, iso.lhs.stderr, extra, cfg.n_steps, (T - cfg.t) / cfg.n_steps, T, [0.0])


def cmd_diffusion_probe(cfg, setup, params):
    x = _start(cfg, setup)
    h = cfg.dt if cfg.dt is not None else 1e-3
    substeps = cfg.n_steps
    prob = SdeProblem(setup.coeffs, cfg.t, x, cfg.t + h)
    est = estimate_drift_diffusion(prob, cfg.t, x, h, cfg.n_paths, SeedSpec(cfg.seed), substeps)
    extra = {"b_hat": est.b_hat.mean.tolist(), "b_stderr": est.b_hat.stderr.tolist(),
             "a_hat": est.a_hat.mean.tolist(), "a_stderr": est.a_hat.stderr.tolist(),
             "b_exact": setup.coeffs.b(cfg.t, x).tolist(), "a_exact": setup.coeffs.a(cfg.t, x).tolist(),
             "tail_rate": est.tail_rate.mean, "substeps": substeps}
    return Result(float(est.b_hat.mean[0]), float(est.b_hat.stderr[0]), extra, substeps, h / substeps,
                  cfg.t + h, x.tolist())


def cmd_solve_cauchy(cfg, setup, params):
    prob = setup.cauchy
    x = _start(cfg, setup)
    if cfg.T is not None:
        prob = replace(prob, T=cfg.T)
    if not prob.T > cfg.t:
        raise InvalidArgument(f"need t < T, got t={cfg.t}, T={prob.T}")
    warnings = check_problem(prob)
    plain = prob.c is None and prob.h is None
    solver = kolmogorov_solve if plain else feynman_kac_solve
    est = solver(prob, cfg.t, x, cfg.n_steps, cfg.n_paths, SeedSpec(cfg.seed))
    extra = dict(est.extra, solver="kolmogorov" if plain else "feynman-kac", warnings=warnings)
    if setup.solution is not None and cfg.T is None:
        extra["exact"] = setup.solution(cfg.t, x)
    return Result(est.value.mean, est.value.stderr, extra, cfg.n_steps, (prob.T - cfg.t) / cfg.n_steps,
                  prob.T, x.tolist())


def cmd_solve_dirichlet(cfg, setup, params):
    x = _start(cfg, setup)
    dt = cfg.dt if cfg.dt is not None else 1e-3
    est = dirichlet_solve(setup.dirichlet, x, dt, cfg.n_paths, SeedSpec(cfg.seed))
    extra = dict(est.extra)
    if setup.solution is not None:
        extra["exact"] = setup.solution(x)
    return Result(est.value.mean, est.value.stderr, extra, None, dt, None, x.tolist())


COMMAND_FUNCS = {
    "simulate": cmd_simulate,
    "ito-check": cmd_ito_check,
    "sde-solve": cmd_sde_solve,
    "diffusion-probe": cmd_diffusion_probe,
    "solve-cauchy": cmd_solve_cauchy,
    "solve-dirichlet": cmd_solve_dirichlet,
}


def _row(cfg, params, res: Result, seed, wall_ms):
    return {"command": cfg.command, "preset": cfg.preset, "param_json": to_json(params),
            "t": fmt_number(cfg.t), "x_json": to_json(res.x), "T": fmt_number(res.T),
            "n_paths": fmt_number(cfg.n_paths), "n_steps": fmt_number(res.n_steps), "dt": fmt_number(res.dt),
            "seed": fmt_number(seed), "estimate": fmt_number(res.estimate), "stderr": fmt_number(res.stderr),
            "extra_json": to_json(res.extra), "wall_ms": "" if cfg.reproducible else fmt_number(wall_ms)}


def run_convergence(cfg, setup, params):
    x, T = _start(cfg, setup), _horizon(cfg, setup)
    rows = []
    t_start = time.perf_counter()
    if cfg.study == "qv":
        if setup.coeffs.d != 1 or setup.coeffs.m != 1:
            raise InvalidArgument("the qv study runs on the one-dimensional bm preset")
        levels, report = studies.qv_convergence(cfg.levels, cfg.n_paths, cfg.seed, cfg.t, T)
        measure = "rms of S_n - (T - t)"
    else:
        levels, report = studies.em_strong_convergence(setup, cfg.levels, cfg.n_paths, cfg.seed, cfg.t, x, T)
        measure = "mean |X_T^EM - X_T|"
    wall = (time.perf_counter() - t_start) * 1e3
    base = dict(params, study=cfg.study)
    for lv in levels:
        res = Result(lv.error.mean, lv.error.stderr, {"measure": measure}, lv.n_steps, lv.mesh, T, x.tolist())
        rows.append(_row(cfg, dict(base, level=lv.level, root_seed=cfg.seed), res, lv.seed, wall / len(levels)))
    fit = Result(report.fitted_order, None,
                 {"fit": "fitted_order", "fit_residual": report.fit_residual, "intercept": report.intercept,
                  "levels": [list(p) for p in report.levels]}, None, None, T, x.tolist())
    rows.append(_row(cfg, base, fit, cfg.seed, wall))
    summary = f"convergence {cfg.study} on {cfg.preset}: fitted order {report.fitted_order:.4g} " \
              f"(residual {report.fit_residual:.2g})"
    return rows, summary


def run(cfg: RunConfig) -> tuple[list[dict], str]:
    """Execute a validated configuration; returns (CSV rows, summary line)."""
    cfg = validate(cfg)
    preset = presets.get(cfg.preset)
    extra_names = COMMAND_PARAMS.get(cfg.command, {})
    own = {k: v for k, v in cfg.params.items() if k in preset.defaults}
    params = preset.resolve(own)
    for k, default in extra_names.items():
        params[k] = presets._coerce(k, cfg.params.get(k, default), default)
    setup = preset.build({k: params[k] for k in preset.defaults})
    if cfg.command == "convergence":
        return run_convergence(cfg, setup, params)
    t_start = time.perf_counter()
    res = COMMAND_FUNCS[cfg.command](cfg, setup, params)
    wall = (time.perf_counter() - t_start) * 1e3
    summary = f"{cfg.command} {cfg.preset}: {res.estimate:.10g} ± {res.stderr:.3g}"
    if "exact" in res.extra:
        summary += f" (exact {res.extra['exact']:.10g})"
    return [_row(cfg, params, res, cfg.seed, wall)], summary


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
        rows, summary = run(cfg)
    except InvalidArgument as e:
        print(f"itolab: error: {e}", file=sys.stderr)
        return 1
    except NumericalFailure as e:
        print(f"itolab: numerical failure: {e}", file=sys.stderr)
        return 2
    except ItoLabError as e:
        print(f"itolab: error: {e}", file=sys.stderr)
        return 2
    text = render_csv(rows)
    if cfg.out:
        try:
            with open(cfg.out, "w", newline="") as fh:
                fh.write(text)
        except OSError as e:
            print(f"itolab: error: cannot write {cfg.out}: {e}", file=sys.stderr)
            return 1
    else:
        sys.stdout.write(text)
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
