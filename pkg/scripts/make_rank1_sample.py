"""Regenerate the bundled 10x10 rank-1 sample problem (80% observed, noiseless)."""

import pathlib

import numpy as np

from nonconvex_mc.cli import save_problem
from nonconvex_mc.dataio import random_mask
from nonconvex_mc.solver import ObservedMatrix

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "nonconvex_mc" / "data" / "rank1_10x10.npz"


def main():
    rng = np.random.default_rng(1)
    u = rng.standard_normal(10)
    v = rng.standard_normal(10)
    M = 10.0 * np.outer(u / np.linalg.norm(u), v / np.linalg.norm(v))
    mask = random_mask(10, 10, 0.8, seed=2)
    save_problem(OUT, ObservedMatrix(M, mask), truth=M, peak=float(np.abs(M).max()))
    print(f"wrote {OUT}")


if __name__ == "__main__":
    main()
