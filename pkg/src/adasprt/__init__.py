"""Adaptive sequential probability ratio testing for budgeted binary labeling.

Solves, offline, for the risk-optimal worker selection, stopping and
decision rules of a truncated sequential test over a heterogeneous worker
pool; runs the solved policy online against simulated or recorded labels;
and estimates the class prior and worker accuracies by MAP-EM as labeling
progresses (empirical Bayes).
"""

from .baselines import KLPolicy, fixed_majority, kl_build, kl_next_action
from .errors import ConfigError, DataError
from .estimation import (
    EstimationConfig,
    Estimates,
    LabelMatrix,
    e_step,
    em_fit,
    empirical_bayes_run,
    m_step,
    reg_neg_loglik,
)
from .model import (
    CostConfig,
    Prior,
    WorkerParams,
    kl_info,
    log_lr_increment,
    loss,
    posterior,
    response_prob_one,
)
from .policy import (
    Action,
    Continue,
    Episode,
    PoolSource,
    ReplaySource,
    SequentialState,
    Stop,
    next_action,
    run_episode,
    step,
)
from .data import LabelDataset, RunReport, load_dataset, run_dataset
from .simulate import (
    ExperimentConfig,
    Metrics,
    averaged_loss,
    compare_policies,
    eb_prior_study,
    gen_worker_pool,
    simulate,
    sweep_T,
)
from .solver import (
    GridConfig,
    PolicyTable,
    boundaries_from_continuation,
    expected_next_risk,
    risk_at_start,
    solve,
    stopping_risk,
)

__version__ = "0.1.0"

__all__ = [
    "Action",
    "ConfigError",
    "Continue",
    "CostConfig",
    "DataError",
    "Episode",
    "EstimationConfig",
    "Estimates",
    "ExperimentConfig",
    "GridConfig",
    "KLPolicy",
    "LabelDataset",
    "LabelMatrix",
    "Metrics",
    "PolicyTable",
    "PoolSource",
    "Prior",
    "ReplaySource",
    "RunReport",
    "SequentialState",
    "Stop",
    "WorkerParams",
    "averaged_loss",
    "boundaries_from_continuation",
    "compare_policies",
    "e_step",
    "eb_prior_study",
    "em_fit",
    "empirical_bayes_run",
    "expected_next_risk",
    "fixed_majority",
    "gen_worker_pool",
    "kl_build",
    "kl_info",
    "kl_next_action",
    "load_dataset",
    "log_lr_increment",
    "loss",
    "m_step",
    "next_action",
    "posterior",
    "reg_neg_loglik",
    "response_prob_one",
    "risk_at_start",
    "run_dataset",
    "run_episode",
    "simulate",
    "solve",
    "step",
    "stopping_risk",
    "sweep_T",
]
