"""Noise decomposition, tail experiments and sample-complexity calculators."""

from .complexity import ComplexityResult, clauses_hold, o_tilde, sample_complexity
from .decomposition import (
    BiasLedger,
    MartingaleCheck,
    NoiseDecomposition,
    bias_bound_check,
    decompose_noise,
    martingale_check,
)
from .tails import (
    TailEstimate,
    checkpoint_grid,
    convex_tail_bound,
    nonconvex_tail_bound,
    pl_tail_bound,
    tail_experiment_convex,
    tail_experiment_nonconvex,
    wilson_interval,
    wilson_limits,
)

__all__ = [
    "BiasLedger",
    "ComplexityResult",
    "MartingaleCheck",
    "NoiseDecomposition",
    "TailEstimate",
    "bias_bound_check",
    "checkpoint_grid",
    "clauses_hold",
    "convex_tail_bound",
    "decompose_noise",
    "martingale_check",
    "nonconvex_tail_bound",
    "o_tilde",
    "pl_tail_bound",
    "sample_complexity",
    "tail_experiment_convex",
    "tail_experiment_nonconvex",
    "wilson_interval",
    "wilson_limits",
]
