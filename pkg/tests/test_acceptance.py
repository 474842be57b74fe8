"""Acceptance criteria 1-12 at their stated sizes and tolerances.

Each criterion function returns the CSV payload rows it produced and a list of
named checks. Results are memoized per ``ITOLAB_THREADS`` value so criterion 12
can compare the single-thread and four-thread reruns row by row.
"""
import json
import os
from dataclasses import dataclass, replace

import numpy as np
import pytest

import conftest
from itolab import cli, presets
from itolab.cauchy import feynman_kac_solve, kolmogorov_solve
from itolab.diffusion import GeneratorInput, check_generator_limit
from itolab.estimators import fit_linear_bias
from itolab.ito import AdaptedProcess, ito_integral, quadratic_variation
from itolab.paths import dyadic_grid, sample_paths
from itolab.rng import SeedSpec
from itolab.sde import SdeProblem, uniqueness_check

pytestmark = pytest.mark.acceptance


@dataclass
class Outcome:
    payload: list
    checks: list  # (label, ok)

    @property
    def ok(self):
        return all(ok for _, ok in self.checks)


def cli_rows(command, preset, **kw):
    """Run one CLI configuration; returns (payload lines, parsed row dicts)."""
    params = kw.pop("params", {})
    cfg = cli.RunConfig(command=command, preset=preset, params={k: str(v) for k, v in params.items()},
                        reproducible=True, **kw)
    rows, _ = cli.run(cfg)
    return cli.render_csv(rows, "-").splitlines()[2:], rows


def lib_row(name, *values):
    return name + "," + ",".join(cli.to_json(v) for v in values)


def num(row, key):
    return float(row[key])


def extra(row):
    return json.loads(row["extra_json"])


# ---------------------------------------------------------------- criteria

def c1():
    lines, rows = cli_rows("convergence", "bm", n_paths=1000, levels=list(range(6, 15)), study="qv")
    level12 = next(r for r in rows if '"level":12' in r["param_json"])
    fit = num(rows[-1], "estimate")
    return Outcome(lines, [(f"rms at 2^-12 = {num(level12, 'estimate'):.4f} <= 0.035", num(level12, "estimate") <= 0.035),
                           (f"fitted order {fit:.3f} in [0.35, 0.65]", 0.35 <= fit <= 0.65)])


def c2():
    grid = dyadic_grid(0.0, 1.0, 16)
    path = sample_paths(grid, 1, SeedSpec(2), 200)
    I = np.asarray(ito_integral(AdaptedProcess.brownian(), path).final).reshape(-1)
    W1 = path.values[:, -1, 0]
    err = np.abs(I - (0.5 * W1**2 - 0.5))
    S = np.asarray(quadratic_variation(path, 0.0, 1.0)).reshape(-1)
    r = float(np.sqrt(np.mean(err**2)))
    gap = float(np.max(np.abs(err - 0.5 * np.abs(S - 1.0))))
    return Outcome([lib_row("ito-example", r, gap)],
                   [(f"rms {r:.4f} <= 0.02", r <= 0.02),
                    (f"max |err - |S_n - 1|/2| = {gap:.1e} <= 1e-12", gap <= 1e-12)])


INTEGRANDS = ("one", "w", "s")


def _ito_check(name, p):
    return cli_rows("ito-check", "bm", n_paths=100_000, params={"integrand": name, "p": p})


def c3():
    lines, checks = [], []
    for name in INTEGRANDS:
        ln, rows = _ito_check(name, 1)
        lines += ln
        r, e = rows[0], extra(rows[0])
        se = np.hypot(num(r, "stderr"), e["rhs_stderr"])
        gap = abs(num(r, "estimate") - e["rhs"])
        checks.append((f"X={name}: isometry gap {gap:.2e} <= 4*{se:.2e}", gap <= 4 * se))
        checks.append((f"X={name}: |E int X dW| {abs(e['zero_mean']):.2e} <= 4*{e['zero_mean_stderr']:.2e}",
                       abs(e["zero_mean"]) <= 4 * e["zero_mean_stderr"]))
    return Outcome(lines, checks)


def c4():
    lines, checks = [], []
    for name in INTEGRANDS:
        ln, rows = _ito_check(name, 1)
        lines += ln
        e = extra(rows[0])
        rel = np.hypot(e["sup_moment_stderr"] / e["sup_moment"],
                       e["rhs_stderr"] / e["rhs"] if e["rhs"] else 0.0)
        ok = e["sup_moment"] <= 4 * e["rhs"] * (1 + 3 * rel)
        checks.append((f"X={name}, p=1: {e['sup_moment']:.4f} <= 4*{e['rhs']:.4f}*(1+3*{rel:.1e})", ok))
        ln, rows = _ito_check(name, 2)
        lines += ln
        e = extra(rows[0])
        checks.append((f"X={name}, p=2: {e['sup_moment']:.4f} <= {e['maximal_bound']:.4g}",
                       e["sup_moment"] <= e["maximal_bound"]))
        assert e["maximal_bound"] > 0
    return Outcome(lines, checks)


def c5():
    lines, checks = [], []
    for preset in ("gbm", "ou"):
        ln, rows = cli_rows("convergence", preset, n_paths=1000, levels=list(range(4, 9)), study="em-strong")
        lines += ln
        fit = num(rows[-1], "estimate")
        if preset == "gbm":
            checks.append((f"gbm strong order {fit:.3f} in [0.35, 0.65]", abs(fit - 0.5) <= 0.15))
        else:
            checks.append((f"ou strong order {fit:.3f} >= 0.9", fit >= 0.9))
    return Outcome(lines, checks)


def c6():
    lines, checks = [], []
    for preset in ("gbm", "ou"):
        ln, rows = cli_rows("sde-solve", preset, n_paths=1000, n_steps=1024)
        lines += ln
        dist = extra(rows[0])["picard_em_sup_distance"]
        checks.append((f"{preset}: picard vs euler sup {dist:.1e} <= 1e-8", dist <= 1e-8))
        s = presets.get(preset).setup()
        rep = uniqueness_check(SdeProblem(s.coeffs, 0.0, s.x0, s.T), SeedSpec(6), n_grids=3, n_steps=256)
        lines.append(lib_row(f"uniqueness-{preset}", rep.distances))
        checks.append((f"{preset}: uniqueness from two initial iterates, max distance {max(rep.distances):.1e}",
                       rep.passed))
    return Outcome(lines, checks)


def c7():
    lines, checks = [], []
    ln, rows = cli_rows("diffusion-probe", "bm", n_paths=100_000, dt=1e-3, x=[0.0, 0.0], params={"d": 2, "m": 2})
    lines += ln
    e = extra(rows[0])
    b, bse = np.array(e["b_hat"]), np.array(e["b_stderr"])
    a, ase = np.array(e["a_hat"]), np.array(e["a_stderr"])
    checks.append(("bm: b_hat within 4 stderr of 0", bool(np.all(np.abs(b) <= 4 * bse))))
    checks.append(("bm: a_hat within 4 stderr of I", bool(np.all(np.abs(a - np.eye(2)) <= 4 * ase))))
    hs = [4e-3, 2e-3, 1e-3]
    ests = []
    for h in hs:
        ln, rows = cli_rows("diffusion-probe", "gbm", n_paths=100_000, dt=h)
        lines += ln
        ests.append(extra(rows[0]))
    _, Cb = fit_linear_bias(hs, [q["b_hat"][0] for q in ests])
    _, Ca = fit_linear_bias(hs, [q["a_hat"][0][0] for q in ests])
    q = ests[-1]
    gb, ga = abs(q["b_hat"][0] - q["b_exact"][0]), abs(q["a_hat"][0][0] - q["a_exact"][0][0])
    checks.append((f"gbm: |b_hat - beta x| {gb:.2e} <= 4*{q['b_stderr'][0]:.2e} + {abs(Cb) * hs[-1]:.1e}",
                   gb <= 4 * q["b_stderr"][0] + abs(Cb) * hs[-1]))
    checks.append((f"gbm: |a_hat - gamma^2 x^2| {ga:.2e} <= 4*{q['a_stderr'][0][0]:.2e} + {abs(Ca) * hs[-1]:.1e}",
                   ga <= 4 * q["a_stderr"][0][0] + abs(Ca) * hs[-1]))
    return Outcome(lines, checks)


def _generator_inputs():
    zero = lambda t, x: 0.0 * x[..., 0]
    yield "x^2", GeneratorInput(lambda t, x: x[..., 0] ** 2, zero, lambda t, x: 2 * x,
                                lambda t, x: 2 * np.ones(x.shape + (1,)))
    yield "x^4", GeneratorInput(lambda t, x: x[..., 0] ** 4, zero, lambda t, x: 4 * x**3,
                                lambda t, x: (12 * x**2)[..., None])
    yield "t+x^2", GeneratorInput(lambda t, x: t + x[..., 0] ** 2, lambda t, x: 1.0 + zero(t, x),
                                  lambda t, x: 2 * x, lambda t, x: 2 * np.ones(x.shape + (1,)))


def c8():
    lines, checks = [], []
    for preset in ("bm", "gbm"):
        s = presets.get(preset).setup()
        x = np.array([1.0])
        for name, g in _generator_inputs():
            rep = check_generator_limit(g, SdeProblem(s.coeffs, 0.0, x, 1.0), 0.0, x, [0.1, 0.05, 0.025],
                                        100_000, SeedSpec(8))
            lines.append(lib_row(f"generator-{preset}-{name}", rep.target, [e.mean for e in rep.estimates],
                                 [e.stderr for e in rep.estimates], rep.slope))
            checks.append((f"{preset}, f={name}: gaps {np.round(rep.gaps(), 4).tolist()} within 4 stderr + "
                           f"{abs(rep.slope):.2f} h", rep.consistent()))
    return Outcome(lines, checks)


def _weak(preset, x, exact, solver):
    prob = presets.get(preset).setup().cauchy
    lines, rows = cli_rows("solve-cauchy", preset, n_paths=100_000, n_steps=1024, x=[x])
    # the CLI run is the finest level of the step ladder
    coarse = [solver(prob, 0.0, [x], n, 100_000, SeedSpec(1)).value.mean for n in (256, 512)]
    val, se = num(rows[0], "estimate"), num(rows[0], "stderr")
    _, C = fit_linear_bias([1 / 256, 1 / 512, 1 / 1024], coarse + [val])
    band = abs(C) / 1024
    gap = abs(val - exact)
    return lines, rows, (f"{preset}: |{val:.5f} - {exact:.5f}| = {gap:.1e} <= 4*{se:.1e} + {band:.1e}",
                         gap <= 4 * se + band)


def c9():
    l1, _, ok1 = _weak("heat-1d", 1.0, 2.0, kolmogorov_solve)
    l2, _, ok2 = _weak("gbm-terminal", 1.0, 1.05127, kolmogorov_solve)
    # the quoted oracle 1.05127 is e^{0.05} rounded to 6 digits
    return Outcome(l1 + l2, [ok1, ok2, ("oracle rounding", abs(np.exp(0.05) - 1.05127) < 1e-5)])


def c10():
    lines, rows, ok1 = _weak("const-discount", 0.0, float(np.exp(-1.0)), feynman_kac_solve)
    ln, rows2 = cli_rows("solve-cauchy", "const-source", n_paths=100_000, n_steps=1024)
    lines += ln
    src, src_se = num(rows2[0], "estimate"), num(rows2[0], "stderr")
    ok2 = (f"const-source {src:.15f} within 4*{src_se:.1e} + 1e-12 of -1", abs(src + 1.0) <= 4 * src_se + 1e-12)
    # c = h = 0 must reproduce criterion 9's heat run bit for bit
    _, heat = cli_rows("solve-cauchy", "heat-1d", n_paths=100_000, n_steps=1024, x=[1.0])
    prob = presets.get("heat-1d").setup().cauchy
    zero = lambda t, x: np.zeros(np.shape(x)[:-1])
    fk = feynman_kac_solve(replace(prob, c=zero, h=zero), 0.0, [1.0], 1024, 100_000, SeedSpec(1))
    same = (cli.fmt_number(fk.value.mean) == heat[0]["estimate"]
            and cli.fmt_number(fk.value.stderr) == heat[0]["stderr"])
    lines.append(lib_row("fk-zero-fields", fk.value.mean, fk.value.stderr))
    return Outcome(lines, [ok1, ok2, ("c = h = 0 reduction bit-identical to the heat run", same)])


DT = 1e-4


def _dirichlet(label, preset, x, exact, params=None):
    lines, ladder = [], []
    for dt in (16 * DT, 4 * DT, DT):
        ln, rows = cli_rows("solve-dirichlet", preset, n_paths=10_000, dt=dt, x=x, params=params or {})
        lines += ln
        ladder.append(rows[0])
    _, C = fit_linear_bias(np.sqrt([16 * DT, 4 * DT, DT]), [num(r, "estimate") for r in ladder])
    r = ladder[-1]
    val, se, band = num(r, "estimate"), num(r, "stderr"), abs(C) * np.sqrt(DT)
    capped = extra(r)["capped"] / 10_000
    gap = abs(val - exact)
    return lines, [(f"{label}: |{val:.4f} - {exact}| = {gap:.1e} <= 4*{se:.1e} + {band:.1e}",
                    gap <= 4 * se + band),
                   (f"{label}: capped fraction {capped:.1e} < 1e-3", capped < 1e-3)]


def c11():
    lines, checks = [], []
    for x in (0.0, 0.5):
        ln, ck = _dirichlet(f"E[tau] from {x}", "interval-exit", [x], 1 - x * x)
        lines += ln
        checks += ck
    ln, ck = _dirichlet("harmonic f(x) = x at 0.3", "interval-exit", [0.3], 0.3, {"f1": 1.0, "h0": 0.0})
    lines += ln
    checks += ck
    ln, ck = _dirichlet("disk u(0)", "disk-exit", [0.0, 0.0], 0.5, {"f0": 0.0, "h0": -1.0})
    lines += ln
    checks += ck
    return Outcome(lines, checks)


CRITERIA = {1: c1, 2: c2, 3: c3, 4: c4, 5: c5, 6: c6, 7: c7, 8: c8, 9: c9, 10: c10, 11: c11}
TITLES = {1: "quadratic variation", 2: "Ito example", 3: "isometry and zero mean", 4: "maximal inequalities",
          5: "strong order", 6: "Picard fixed point", 7: "diffusion limits", 8: "generator",
          9: "backward Kolmogorov", 10: "Feynman-Kac", 11: "Dirichlet", 12: "determinism across threads"}
_MEMO = {}


def outcome(n, threads):
    key = (n, threads)
    if key not in _MEMO:
        old = os.environ.get("ITOLAB_THREADS")
        os.environ["ITOLAB_THREADS"] = str(threads)
        try:
            _MEMO[key] = CRITERIA[n]()
        finally:
            if old is None:
                del os.environ["ITOLAB_THREADS"]
            else:
                os.environ["ITOLAB_THREADS"] = old
    return _MEMO[key]


def report(n, ok, details):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({TITLES[n]}) " + "; ".join(details)
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    out = outcome(n, 1)
    report(n, out.ok, [("ok " if ok else "FAILED ") + label for label, ok in out.checks])
    assert out.ok, [label for label, ok in out.checks if not ok]


def test_criterion_12_thread_independence():
    diffs = []
    for n in sorted(CRITERIA):
        a, b = outcome(n, 1).payload, outcome(n, 4).payload
        if a != b or not a:
            diffs.append(n)
    report(12, not diffs, [f"payload rows of criteria 1-11 identical for ITOLAB_THREADS=1 and 4"
                           if not diffs else f"rows differ for criteria {diffs}"])
    assert not diffs
