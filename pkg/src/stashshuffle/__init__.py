"""Oblivious Stash Shuffle with an exact failure-probability planner."""

from .enclave import AssignmentMode, StashLayout, Streams
from .errors import (
    ConditionViolated,
    DrainFailure,
    IntegrityError,
    NoRoot,
    NumericError,
    ParameterError,
    QueueOverflow,
    QueueUnderflow,
    ShuffleFailure,
    StashOverflow,
)
from .oracle import buckets_shuffle, coupled_run, hybrid_shuffle
from .params import (
    SecurityReport,
    ShuffleParams,
    corollary_preset,
    derive_params,
    f1_closed_bound,
    f2_closed_bound,
    t_zero,
    theorem_distance,
)
from .planner import compression_tail_exact, monte_carlo_failure, stash_tail_exact
from .shuffle import ShuffleRun, run_stash_shuffle, stash_shuffle

__version__ = "0.1.0"
