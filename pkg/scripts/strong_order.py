"""Euler-Maruyama strong error against closed forms for gbm and ou."""
import argparse
import csv
import sys

from itolab import presets
from itolab.studies import em_strong_convergence


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--presets", default="gbm,ou")
    ap.add_argument("--levels", default="4..8")
    ap.add_argument("--paths", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--out", default="-")
    a = ap.parse_args()
    lo, hi = map(int, a.levels.split(".."))
    params = dict(p.split("=", 1) for p in a.param)
    fh = sys.stdout if a.out == "-" else open(a.out, "w", newline="")
    w = csv.writer(fh)
    w.writerow(["preset", "level", "mesh", "mean_abs_error", "stderr"])
    for name in a.presets.split(","):
        preset = presets.get(name)
        setup = preset.setup({k: v for k, v in params.items() if k in preset.defaults})
        rows, fit = em_strong_convergence(setup, range(lo, hi + 1), a.paths, a.seed)
        for r in rows:
            w.writerow([name, r.level, r.mesh, r.error.mean, r.error.stderr])
        print(f"{name}: fitted strong order {fit.fitted_order:.4f}", file=sys.stderr)


if __name__ == "__main__":
    main()
