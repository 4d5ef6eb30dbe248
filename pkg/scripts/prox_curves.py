"""Tabulate the scalar thresholding functions at eta = 1 for several q, as one CSV.

    python scripts/prox_curves.py > prox_curves.csv
"""

import csv
import sys

import numpy as np

from nonconvex_mc.experiment import fmt
from nonconvex_mc.penalty import Penalty

PENALTIES = [("hard", Penalty.hard()), ("q0.25", Penalty.lq(0.25)), ("q0.5", Penalty.lq(0.5)),
             ("q0.75", Penalty.lq(0.75)), ("soft", Penalty.soft())]


def main(eta=1.0, steps=801):
    t = np.linspace(-4.0, 4.0, steps)
    cols = [p.prox(t, eta) for _, p in PENALTIES]
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["t"] + [name for name, _ in PENALTIES])
    for i, ti in enumerate(t):
        w.writerow([fmt(ti)] + [fmt(c[i]) for c in cols])
    for name, p in PENALTIES:
        info = p.threshold_info(eta)
        print(f"# {name}: tau={info.tau:.6g} beta={info.beta:.6g}", file=sys.stderr)


if __name__ == "__main__":
    main()
