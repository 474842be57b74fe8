"""Weak error of Kolmogorov / Feynman-Kac estimates over a step ladder."""
import argparse
import csv
import sys

from itolab import presets
from itolab.cauchy import weak_error_coefficient
from itolab.rng import SeedSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--presets", default="heat-1d,gbm-terminal,const-discount")
    ap.add_argument("--steps", default="16,32,64,128")
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out", default="-")
    a = ap.parse_args()
    steps = [int(s) for s in a.steps.split(",")]
    fh = sys.stdout if a.out == "-" else open(a.out, "w", newline="")
    w = csv.writer(fh)
    w.writerow(["preset", "n_steps", "estimate", "stderr", "exact", "weak_coefficient"])
    for name in a.presets.split(","):
        s = presets.get(name).setup()
        C, ests = weak_error_coefficient(s.cauchy, 0.0, s.x0, steps, a.paths, SeedSpec(a.seed))
        for n, e in zip(steps, ests):
            w.writerow([name, n, e.value.mean, e.value.stderr, s.solution(0.0, s.x0), C])


if __name__ == "__main__":
    main()
