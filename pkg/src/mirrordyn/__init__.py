"""Stochastic mirror descent with decision-dependent Markov noise."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ConfigError,
    DimensionMismatch,
    DomainError,
    IndexOutOfRange,
    MirrordynError,
    MissingOptimum,
    NoFiniteN,
    NonErgodic,
    NonFiniteInput,
    NonStochasticRow,
    ScheduleExhausted,
    SingularFundamentalMatrix,
    SingularKKT,
    StepBoundViolation,
)
from .geometry import ENTROPY, EUCLIDEAN, MirrorMap, bregman_divergence, local_norm, mirror_map, mirror_update  # noqa: E402
from .markov import (  # noqa: E402
    ChainState,
    ConstantKernel,
    GibbsTiltedKernel,
    apply_kernel_expectation,
    kernel_step,
    load_kernel_file,
    poisson_solve,
    stationary_distribution,
)
from .optimizer import StepSchedule, Trajectory, ergodic_average, run_smd, run_smd_batch  # noqa: E402
from .problems import (  # noqa: E402
    ProblemConstants,
    ProblemSpec,
    make_convex_problem,
    make_linear_problem,
    make_nonconvex_problem,
    mean_field_gradient,
    sample_subgradient,
)
from .stationarity import gap, gap_report, projected_direction, qp_projection_oracle  # noqa: E402
