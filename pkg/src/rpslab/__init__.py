"""Simulation lab for block-partitioned model-averaging SGD over lossy
networks: message-level protocol rounds, mixing-matrix moment analysis,
convergence-bound checks on synthetic tasks, and a packet-level
co-location study."""

__version__ = "0.1.0"

from .backend import backend_name
from .mixing import (
    AlphaBounds,
    MomentEstimate,
    NumericalPreconditionError,
    alpha1_bound,
    alpha2_bound,
    alpha_bounds,
    exact_moments,
    fit_alpha,
    mc_moments,
    sweep_alphas,
    t1,
    t2,
    t3,
)
from .netsim import PriorityConfig, SimReport, Topology, TrafficModel, run_colocation_sim, sweep_priority
from .objectives import QuadraticTask, make_quadratic, stochastic_gradient
from .protocol import (
    BlockPartition,
    CommOutcome,
    DropModel,
    extract_mixing_matrix,
    gradient_averaging_round,
    local_sgd_step,
    make_partition,
    perfect_round,
    rps_round,
    sample_comm_outcome,
)
from .trainer import (
    Trace,
    TrainConfig,
    compare_strategies,
    consensus_bound,
    consensus_distance,
    convergence_bound,
    run_training,
    tuned_learning_rate,
)
