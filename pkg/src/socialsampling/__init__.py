"""socialsampling: simulate and analyze consensus protocols in which
networked agents broadcast single sampled opinions (or stay silent) and
learn the empirical histogram of their initial opinions."""

from .analysis import (
    ConditionReport,
    StepDecomposition,
    TraceMetrics,
    check_conditions,
    conditional_mean_noise,
    conditional_mean_perturbation,
    decompose,
    disagreement,
    expected_perturbation,
    mse_per_node,
    rate_fit,
    time_to_threshold,
)
from .engine import TrajectoryResult, record_grid, run_trajectory
from .errors import SocialSamplingError
from .protocol import (
    AlgorithmVariant,
    Averaging,
    CensoredExchange,
    Custom,
    DecayingAveraging,
    NetworkState,
    RoundRecord,
    StepSchedule,
    apply_update,
    constant,
    eval_schedule,
    harmonic,
    init_state,
    realize_weights,
    sampling_matrix,
    square,
    step,
)
from .simplex import (
    Distribution,
    Message,
    OpinionSample,
    SubDistribution,
    elementary,
    empirical_histogram,
    make_distribution,
    sample_message,
)
from .topology import (
    Graph,
    TopologySpec,
    generate,
    is_connected,
    laplacian,
    max_degree,
    read_edgelist,
    spectrum,
    write_edgelist,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
