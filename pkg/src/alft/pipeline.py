"""The fine-tuning loop: pools, regimes, selection, training, evaluation.

Each epoch scores the candidate pool, asks the scheduler which samples to
annotate, trains one pass of minibatch Adam over the annotated pool, and
evaluates macro-F1 on the validation and test splits. Two sampling
regimes: accumulating keeps every annotated sample for later epochs;
recalculating rebuilds the annotated pool from scratch each epoch (the
union of everything ever annotated is tracked separately for budget
accounting). Cold start scores with the untrained model at epoch 1; warm
start replaces epoch 1 selection with a uniform random half of the pool.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import rand
from .acquisition import ACQUISITIONS, EPISTEMIC, score_pool
from .clustering import ClusterAssignment, cluster_features, ward_cluster
from .data import Dataset
from .epinet import EpinetModel, build_epinet, draw_indices, enn_loss_and_grad, per_draw_probs
from .errors import ConfigError
from .nn import (
    AdamState,
    Batch,
    DenseNet,
    adam_step,
    build_dense,
    forward_batch,
    init_adam,
    loss_and_grad,
    softmax,
)
from .scheduler import DIF_BUILD, SCHEDULERS, SchedulerSpec, SelectionPlan, schedule_select
from .stats import macro_f1

log = logging.getLogger(__name__)

ARCHITECTURES = ("vanilla", "enn")
STARTS = ("cold", "warm")
SAMPLINGS = ("accumulating", "recalculating")
CLUSTERINGS = ("none", "init", "dynamic")


@dataclass
class RunConfig:
    """Everything one training run needs, validated before use.

    max_text_length is carried for config compatibility with tokenized
    corpora; precomputed feature vectors have no analogue, so it is
    recorded but never read.
    """

    architecture: str = "vanilla"
    start: str = "cold"
    sampling: str = "accumulating"
    acquisition: str = "entropy"
    clustering: str = "none"
    scheduler: str = "base"
    epochs: int = 5
    batch_size: int = 32
    learning_rate: float = 5e-5
    seed: int = 0
    k_draws: int = 32
    k_train: int = 8
    cluster_count: int | None = None
    hidden_dim: int = 64
    epinet_hidden: int = 15
    index_dim: int = 8
    prior_scale: float = 1.0
    activation: str = "relu"
    base_fraction: float = 0.75
    linear_fractions: tuple[float, ...] = (0.50, 0.20, 0.15, 0.10, 0.05)
    max_text_length: int = 64

    def scheduler_spec(self) -> SchedulerSpec:
        return SchedulerSpec(
            kind=self.scheduler,
            base_fraction=self.base_fraction,
            linear_fractions=tuple(self.linear_fractions),
        )


@dataclass
class PoolState:
    """Unlabeled / annotated id pools plus the ever-annotated budget set."""

    unlabeled: np.ndarray
    annotated: np.ndarray
    ever_annotated: np.ndarray
    epoch: int = 0

    @classmethod
    def fresh(cls, train_ids: np.ndarray) -> "PoolState":
        empty = np.array([], dtype=train_ids.dtype)
        return cls(
            unlabeled=np.sort(train_ids), annotated=empty.copy(),
            ever_annotated=empty.copy(), epoch=0,
        )

    def annotate_accumulating(self, ids: np.ndarray) -> None:
        """Move ids from the unlabeled to the annotated pool."""
        ids = np.sort(np.asarray(ids))
        if np.setdiff1d(ids, self.unlabeled).size:
            raise ValueError("selection contains ids outside the unlabeled pool")
        self.unlabeled = np.setdiff1d(self.unlabeled, ids)
        self.annotated = np.union1d(self.annotated, ids)
        self.ever_annotated = np.union1d(self.ever_annotated, ids)

    def rebuild_recalculating(self, ids: np.ndarray) -> None:
        """Fresh annotated pool for this epoch; the unlabeled pool is untouched."""
        ids = np.sort(np.asarray(ids))
        if np.setdiff1d(ids, self.unlabeled).size:
            raise ValueError("selection contains ids outside the training pool")
        self.annotated = ids
        self.ever_annotated = np.union1d(self.ever_annotated, ids)

    def discard_annotated(self) -> None:
        self.annotated = self.annotated[:0]

    def check_accumulating_invariants(self, train_ids: np.ndarray) -> None:
        assert np.intersect1d(self.unlabeled, self.annotated).size == 0
        assert np.array_equal(
            np.union1d(self.unlabeled, self.annotated), np.sort(train_ids)
        )
        assert np.array_equal(self.annotated, self.ever_annotated)

    def check_recalculating_invariants(self, train_ids: np.ndarray) -> None:
        assert np.array_equal(self.unlabeled, np.sort(train_ids))
        assert np.setdiff1d(self.annotated, self.unlabeled).size == 0
        assert np.setdiff1d(self.annotated, self.ever_annotated).size == 0


@dataclass
class EpochReport:
    """Per-epoch record of selection size, budget, loss, and metrics."""

    epoch: int
    newly_annotated: int
    annotated_fraction: float
    cumulative_fraction: float
    train_loss: float
    val_f1: float
    test_f1: float
    wall_time: float


def validate_config(config: RunConfig) -> list[str]:
    """Reject impossible option combinations; return warnings for odd ones.

    Rejections: epistemic acquisition on the plain architecture;
    furthest_batch with probabilistic or threshold schedulers;
    furthest_batch or dif_build schedulers without clustering.
    """
    for value, allowed, name in (
        (config.architecture, ARCHITECTURES, "architecture"),
        (config.start, STARTS, "start"),
        (config.sampling, SAMPLINGS, "sampling"),
        (config.acquisition, ("none", *ACQUISITIONS), "acquisition"),
        (config.clustering, CLUSTERINGS, "clustering"),
        (config.scheduler, SCHEDULERS, "scheduler"),
    ):
        if value not in allowed:
            raise ConfigError(f"{name} must be one of {allowed}, got {value!r}")
    if config.epochs < 1 or config.batch_size < 1:
        raise ConfigError("epochs and batch_size must be >= 1")
    if config.learning_rate <= 0:
        raise ConfigError("learning_rate must be positive")
    config.scheduler_spec()  # fraction sanity

    if config.acquisition in EPISTEMIC and config.architecture != "enn":
        raise ConfigError(
            f"{config.acquisition} acquisition reads epistemic index draws and "
            "requires architecture=enn"
        )
    if config.acquisition == "furthest_batch":
        if config.scheduler in ("prob", "linear_prob", *DIF_BUILD):
            raise ConfigError(
                f"furthest_batch acquisition is model-free and cannot drive the "
                f"model-dependent {config.scheduler} scheduler"
            )
        if config.clustering == "none":
            raise ConfigError(
                "furthest_batch acquisition measures distances to cluster medoids "
                "and requires clustering"
            )
    if config.scheduler in DIF_BUILD and config.clustering == "none":
        raise ConfigError(
            f"{config.scheduler} scheduling thresholds scores within clusters "
            "and requires clustering"
        )

    warnings = []
    if config.clustering == "init" and config.scheduler in ("linear", "linear_prob"):
        warnings.append(
            "init clustering only matters at epoch 1; with a linear scheduler it "
            "is redundant next to dynamic clustering"
        )
    if config.acquisition == "furthest_batch" and config.clustering == "dynamic":
        warnings.append(
            "furthest_batch selections do not change across epochs; dynamic "
            "re-clustering adds cost without benefit"
        )
    for msg in warnings:
        log.warning("%s", msg)
    return warnings


def warm_start_select(
    pool_ids: np.ndarray, rng: np.random.Generator, epoch: int = 1
) -> SelectionPlan:
    """Uniform random half of the pool, without replacement."""
    pool_ids = np.asarray(pool_ids)
    if pool_ids.size == 0:
        raise ValueError("cannot warm-start from an empty pool")
    count = math.ceil(0.5 * len(pool_ids))
    picked = rng.choice(pool_ids, size=count, replace=False)
    return SelectionPlan(epoch=epoch, selected=np.sort(picked), requested=count)


def _build_model(config: RunConfig, dataset: Dataset) -> DenseNet | EpinetModel:
    rng = rand.substream(config.seed, rand.INIT)
    base = build_dense(
        dataset.feature_dim,
        config.hidden_dim,
        dataset.num_classes,
        rng,
        activation=config.activation,
    )
    if config.architecture == "vanilla":
        return base
    return build_epinet(
        base,
        rng,
        index_dim=config.index_dim,
        hidden_dim=config.epinet_hidden,
        prior_scale=config.prior_scale,
    )


def _resolve_cluster_count(config: RunConfig, dataset: Dataset) -> int:
    return config.cluster_count if config.cluster_count else 3 * dataset.num_classes


def _maybe_cluster(
    model, dataset: Dataset, candidate_ids: np.ndarray, config: RunConfig, mode: str
) -> tuple[ClusterAssignment, np.ndarray]:
    """Cluster the candidate pool; returns the assignment and its features."""
    raw = dataset.features_of(candidate_ids)
    feats = cluster_features(model, raw, mode)
    k = min(_resolve_cluster_count(config, dataset), len(candidate_ids))
    return ward_cluster(feats, k, ids=candidate_ids), feats


def _select(
    model,
    dataset: Dataset,
    candidate_ids: np.ndarray,
    config: RunConfig,
    epoch: int,
    assignment: ClusterAssignment | None,
    assignment_feats: np.ndarray | None,
) -> SelectionPlan:
    if config.start == "warm" and epoch == 1:
        rng = rand.substream(config.seed, rand.WARM_START)
        return warm_start_select(candidate_ids, rng, epoch=epoch)
    if config.acquisition == "furthest_batch":
        feats = assignment_feats
    else:
        feats = dataset.features_of(candidate_ids)
    epoch_seed = rand.derive_seed(config.seed, rand.SCORING, epoch)
    scores = score_pool(
        model,
        feats,
        candidate_ids,
        config.acquisition,
        k_draws=config.k_draws,
        seed=epoch_seed,
        assignment=assignment,
    )
    return schedule_select(
        config.scheduler_spec(), scores, epoch, config.seed, assignment=assignment
    )


def _train_one_epoch(
    model,
    opt: AdamState,
    dataset: Dataset,
    annotated_ids: np.ndarray,
    config: RunConfig,
    epoch: int,
) -> tuple[AdamState, float]:
    """One shuffled pass of minibatch Adam over the annotated pool."""
    if annotated_ids.size == 0:
        log.warning("epoch %d: nothing annotated, skipping training", epoch)
        return opt, float("nan")
    rng = rand.substream(config.seed, rand.TRAINING, epoch)
    order = rng.permutation(annotated_ids)
    losses = []
    is_enn = isinstance(model, EpinetModel)
    for start in range(0, len(order), config.batch_size):
        chunk = order[start : start + config.batch_size]
        batch = Batch(dataset.features_of(chunk), dataset.labels_of(chunk))
        if is_enn:
            z_draws = draw_indices(rng, config.k_train, model.index_dim)
            loss, grads = enn_loss_and_grad(model, batch, z_draws)
            params, opt = adam_step(opt, model.trainable_params(), grads)
            model.set_trainable_params(params)
        else:
            loss, grads = loss_and_grad(model, batch)
            params, opt = adam_step(opt, model.params(), grads)
            model.set_params(params)
        losses.append(loss)
    return opt, float(np.mean(losses))


def predict_labels(
    model, features: np.ndarray, k_draws: int, rng: np.random.Generator
) -> np.ndarray:
    """Most probable class per row; epistemic models average over draws."""
    if isinstance(model, EpinetModel):
        z_draws = draw_indices(rng, k_draws, model.index_dim)
        probs = per_draw_probs(model, features, z_draws).mean(axis=1)
    else:
        logits, _ = forward_batch(model, features)
        probs = softmax(logits)
    return np.argmax(probs, axis=1)


def _evaluate(model, dataset: Dataset, config: RunConfig, epoch: int) -> tuple[float, float]:
    rng = rand.substream(config.seed, rand.EVAL, epoch)
    out = []
    for split in ("validation", "test"):
        ids = dataset.split_ids(split)
        preds = predict_labels(model, dataset.features_of(ids), config.k_draws, rng)
        out.append(macro_f1(preds, dataset.labels_of(ids), dataset.num_classes))
    return out[0], out[1]


def _epoch_report(
    state: PoolState,
    plan_size: int,
    train_size: int,
    loss: float,
    val_f1: float,
    test_f1: float,
    started: float,
    epoch: int,
) -> EpochReport:
    return EpochReport(
        epoch=epoch,
        newly_annotated=plan_size,
        annotated_fraction=len(state.annotated) / train_size,
        cumulative_fraction=len(state.ever_annotated) / train_size,
        train_loss=loss,
        val_f1=val_f1,
        test_f1=test_f1,
        wall_time=time.perf_counter() - started,
    )


def run_epoch_accumulating(
    state: PoolState,
    model,
    opt: AdamState,
    dataset: Dataset,
    config: RunConfig,
    epoch: int,
    init_assignment: ClusterAssignment | None = None,
    init_feats: np.ndarray | None = None,
) -> tuple[AdamState, EpochReport]:
    """Select from the shrinking unlabeled pool, grow D, train on all of it."""
    started = time.perf_counter()
    train_size = len(state.unlabeled) + len(state.annotated)
    candidates = state.unlabeled
    plan_size = 0
    if candidates.size == 0:
        if config.acquisition != "none":
            log.warning(
                "epoch %d: unlabeled pool exhausted; training on current pool", epoch
            )
    elif config.acquisition == "none":
        if epoch == 1:
            state.annotate_accumulating(candidates)
            plan_size = train_size
    else:
        assignment, feats = _epoch_assignment(
            model, dataset, candidates, config, init_assignment, init_feats
        )
        plan = _select(model, dataset, candidates, config, epoch, assignment, feats)
        state.annotate_accumulating(plan.selected)
        plan_size = len(plan)
    opt, loss = _train_one_epoch(model, opt, dataset, state.annotated, config, epoch)
    val_f1, test_f1 = _evaluate(model, dataset, config, epoch)
    state.epoch = epoch
    return opt, _epoch_report(
        state, plan_size, train_size, loss, val_f1, test_f1, started, epoch
    )


def run_epoch_recalculating(
    state: PoolState,
    model,
    opt: AdamState,
    dataset: Dataset,
    config: RunConfig,
    epoch: int,
    init_assignment: ClusterAssignment | None = None,
    init_feats: np.ndarray | None = None,
) -> tuple[AdamState, EpochReport]:
    """Rebuild D from the full pool with the current model, train, discard."""
    started = time.perf_counter()
    candidates = state.unlabeled
    train_size = len(candidates)
    if config.acquisition == "none":
        state.rebuild_recalculating(candidates)
    else:
        assignment, feats = _epoch_assignment(
            model, dataset, candidates, config, init_assignment, init_feats
        )
        plan = _select(model, dataset, candidates, config, epoch, assignment, feats)
        state.rebuild_recalculating(plan.selected)
    plan_size = len(state.annotated)
    opt, loss = _train_one_epoch(model, opt, dataset, state.annotated, config, epoch)
    val_f1, test_f1 = _evaluate(model, dataset, config, epoch)
    report = _epoch_report(
        state, plan_size, train_size, loss, val_f1, test_f1, started, epoch
    )
    state.discard_annotated()
    state.epoch = epoch
    return opt, report


def _epoch_assignment(
    model,
    dataset: Dataset,
    candidates: np.ndarray,
    config: RunConfig,
    init_assignment: ClusterAssignment | None,
    init_feats: np.ndarray | None,
) -> tuple[ClusterAssignment | None, np.ndarray | None]:
    if config.clustering == "dynamic":
        return _maybe_cluster(model, dataset, candidates, config, "dynamic")
    if config.clustering == "init":
        # restrict the pre-epoch-1 assignment's features to the candidates
        rows = np.searchsorted(init_assignment.ids, candidates)
        return init_assignment, init_feats[rows]
    return None, None


def run_training(config: RunConfig, dataset: Dataset) -> list[EpochReport]:
    """Run the configured fine-tuning loop end to end, one report per epoch."""
    validate_config(config)
    train_ids = dataset.split_ids("train")
    for split in ("train", "validation", "test"):
        if len(dataset.split_ids(split)) == 0:
            raise ValueError(f"dataset has an empty {split!r} split")

    model = _build_model(config, dataset)
    opt = init_adam(
        model.trainable_params() if isinstance(model, EpinetModel) else model.params(),
        config.learning_rate,
    )
    state = PoolState.fresh(train_ids)

    init_assignment = init_feats = None
    if config.clustering == "init" and config.acquisition != "none":
        init_assignment, init_feats = _maybe_cluster(
            model, dataset, state.unlabeled, config, "init"
        )

    run_epoch = (
        run_epoch_accumulating
        if config.sampling == "accumulating"
        else run_epoch_recalculating
    )
    reports = []
    for epoch in range(1, config.epochs + 1):
        opt, report = run_epoch(
            state, model, opt, dataset, config, epoch,
            init_assignment=init_assignment, init_feats=init_feats,
        )
        reports.append(report)
    return reports


def run_baseline(config: RunConfig, dataset: Dataset) -> list[EpochReport]:
    """Classic fine-tuning: the whole training pool is annotated at epoch 1."""
    return run_training(replace(config, acquisition="none"), dataset)
