"""Active-learning fine-tuning harness.

Library + CLI for pool-based active learning over feature-vector
classification data: a dense classifier (optionally wrapped as an
epistemic network), uncertainty and cluster-distance acquisition
functions, Ward clustering, six annotation schedulers, accumulating and
recalculating sampling regimes, and a multi-seed experiment runner with
macro-F1 and paired t-test reporting.
"""

from .acquisition import (
    AlScores,
    bald_from_probs,
    bald_score,
    entropy_score,
    furthest_batch_scores,
    score_pool,
    variance_from_probs,
    variance_score,
)
from .clustering import ClusterAssignment, cluster_features, medoid_of, ward_cluster
from .data import Dataset, Sample, SynthSpec, load_dataset, save_dataset, split_dataset, synth_generate
from .epinet import EpinetModel, EpistemicIndex, build_epinet, enn_forward, predictive_mean
from .errors import ConfigError, SchemaError, UndefinedResultError
from .nn import AdamState, Batch, DenseNet, adam_step, build_dense, forward, glorot_init, grad_check, loss_and_grad
from .pipeline import (
    EpochReport,
    PoolState,
    RunConfig,
    run_baseline,
    run_epoch_accumulating,
    run_epoch_recalculating,
    run_training,
    validate_config,
    warm_start_select,
)
from .scheduler import (
    SchedulerSpec,
    SelectionPlan,
    dif_build_threshold,
    epoch_fraction,
    schedule_select,
    select_deterministic,
    select_probabilistic,
)
from .stats import macro_f1, paired_t_test, reg_inc_beta, t_cdf

__version__ = "0.1.0"
