"""Matrix completion by proximal gradient descent with nonconvex low-rank penalties."""

from .penalty import Kind, Penalty, ThresholdInfo, prox_oracle
from .solver import IterationTrace, ObservedMatrix, SolverConfig, objective, pgd_step, solve
from .svt import SvdFactors, full_svd, rank, svt

__all__ = [
    "IterationTrace",
    "Kind",
    "ObservedMatrix",
    "Penalty",
    "SolverConfig",
    "SvdFactors",
    "ThresholdInfo",
    "full_svd",
    "objective",
    "pgd_step",
    "prox_oracle",
    "rank",
    "solve",
    "svt",
]

__version__ = "0.1.0"
