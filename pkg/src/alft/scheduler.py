"""Annotation schedulers: how many scored samples to label each epoch.

Six policies. "base" takes the top 75% of the ranking each epoch; "prob"
draws the same count without replacement using normalized scores as
probabilities. The linear pair shrinks the per-epoch fraction over
epochs (50/20/15/10/5 percent, then 5% thereafter). The dif_build pair
finds a gap threshold in each cluster's sorted scores and samples
probabilistically from the candidates above it, with replacement
(duplicates collapse) or without.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import rand
from .acquisition import AlScores, make_scores
from .clustering import ClusterAssignment
from .errors import ConfigError

log = logging.getLogger(__name__)

SCHEDULERS = ("base", "prob", "linear", "linear_prob", "dif_build", "dif_build_unique")
DIF_BUILD = ("dif_build", "dif_build_unique")
LINEAR_FRACTIONS = (0.50, 0.20, 0.15, 0.10, 0.05)


@dataclass
class SchedulerSpec:
    """Scheduler kind plus its fraction tables."""

    kind: str
    base_fraction: float = 0.75
    linear_fractions: tuple[float, ...] = LINEAR_FRACTIONS

    def __post_init__(self):
        if self.kind not in SCHEDULERS:
            raise ValueError(f"unknown scheduler {self.kind!r}")
        fracs = (self.base_fraction, *self.linear_fractions)
        if any(not 0.0 < f <= 1.0 for f in fracs):
            raise ValueError(f"fractions must lie in (0, 1], got {fracs}")
        tail = self.linear_fractions[1:]
        if any(a < b for a, b in zip(tail, tail[1:])):
            raise ValueError(
                f"linear fractions must be nonincreasing after epoch 1, "
                f"got {self.linear_fractions}"
            )


@dataclass
class SelectionPlan:
    """Sample ids chosen for annotation in one epoch."""

    epoch: int
    selected: np.ndarray
    requested: int
    drawn: int = 0
    cluster_thresholds: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        self.selected = np.asarray(self.selected)
        if self.drawn == 0:
            self.drawn = len(self.selected)

    def __len__(self) -> int:
        return len(self.selected)


def epoch_fraction(spec: SchedulerSpec, epoch: int) -> float | None:
    """Fraction of the candidate pool to annotate, or None in threshold mode."""
    if epoch < 1:
        raise ValueError(f"epochs are 1-based, got {epoch}")
    if spec.kind in ("base", "prob"):
        return spec.base_fraction
    if spec.kind in ("linear", "linear_prob"):
        table = spec.linear_fractions
        return table[min(epoch, len(table)) - 1]
    return None


def fraction_count(fraction: float, pool_size: int) -> int:
    """Ceiling rounding keeps the smallest fractions from selecting nothing."""
    return math.ceil(fraction * pool_size)


def select_deterministic(scores: AlScores, count: int, epoch: int = 0) -> SelectionPlan:
    """The first `count` ids of the descending ranking."""
    if count > len(scores):
        log.warning(
            "requested %d samples but only %d remain; clamping", count, len(scores)
        )
        count = len(scores)
    return SelectionPlan(epoch=epoch, selected=scores.order[:count].copy(), requested=count)


def _normalized_probabilities(values: np.ndarray) -> np.ndarray:
    shifted = values - values.min() if values.min() < 0 else values.astype(np.float64)
    if not np.isfinite(shifted).all():
        raise ValueError("scores must be finite for probabilistic selection")
    if shifted.max() == 0.0:
        log.warning("all scores equal after shift; falling back to uniform sampling")
        return np.full(len(values), 1.0 / len(values))
    shifted = shifted + 1e-12
    return shifted / shifted.sum()


def select_probabilistic(
    scores: AlScores,
    count: int,
    rng: np.random.Generator,
    with_replacement: bool = False,
    epoch: int = 0,
) -> SelectionPlan:
    """Draw `count` ids with normalized scores as probabilities.

    Without replacement the plan has exactly min(count, pool) unique ids;
    with replacement the drawn multiset is collapsed, so the plan can be
    smaller than `count` (the draw count is recorded separately).
    """
    if count < 0:
        raise ValueError(f"count must be >= 0, got {count}")
    if count == 0:
        return SelectionPlan(epoch=epoch, selected=scores.ids[:0].copy(), requested=0)
    if not with_replacement and count > len(scores):
        log.warning(
            "requested %d samples but only %d remain; clamping", count, len(scores)
        )
        count = len(scores)
    probs = _normalized_probabilities(scores.results)
    picked = rng.choice(scores.ids, size=count, replace=with_replacement, p=probs)
    if with_replacement:
        selected = np.unique(picked)
        return SelectionPlan(
            epoch=epoch, selected=selected, requested=count, drawn=count
        )
    return SelectionPlan(epoch=epoch, selected=np.sort(picked), requested=count)


def dif_build_threshold(sorted_scores: np.ndarray) -> int:
    """Index of the first sorted-score gap exceeding the mean gap.

    Consecutive differences of the descending list are compared to their
    mean; the first strictly larger one at position i makes the first
    i + 1 samples the candidate set. With no strict exceedance (or fewer
    than two scores) the whole list is the candidate set.
    """
    sorted_scores = np.asarray(sorted_scores, dtype=np.float64)
    m = len(sorted_scores)
    if m < 2:
        log.warning("thresholding needs >= 2 scores, got %d; keeping whole list", m)
        return max(m - 1, 0)
    diffs = sorted_scores[:-1] - sorted_scores[1:]
    exceed = np.flatnonzero(diffs > diffs.mean())
    return int(exceed[0]) if exceed.size else m - 1


def _per_cluster_plan(
    spec: SchedulerSpec,
    scores: AlScores,
    assignment: ClusterAssignment,
    epoch: int,
    seed: int,
) -> SelectionPlan:
    selected: list[np.ndarray] = []
    thresholds: dict[int, int] = {}
    drawn_total = 0
    for cluster in range(assignment.k):
        member_ids = np.intersect1d(assignment.members(cluster), scores.ids)
        if member_ids.size == 0:
            continue
        values = scores.results[np.searchsorted(scores.ids, member_ids)]
        order = member_ids[np.lexsort((member_ids, -values))]
        cut = dif_build_threshold(np.sort(values)[::-1])
        thresholds[cluster] = cut
        candidate_ids = order[: cut + 1]
        cand_pos = np.searchsorted(scores.ids, candidate_ids)
        candidates = make_scores(candidate_ids, scores.results[cand_pos])
        count = fraction_count(spec.base_fraction, len(candidates))
        rng = rand.substream(seed, rand.SCHEDULING, epoch, cluster)
        plan = select_probabilistic(
            candidates,
            count,
            rng,
            with_replacement=(spec.kind == "dif_build"),
            epoch=epoch,
        )
        drawn_total += plan.drawn
        selected.append(plan.selected)
    ids = np.sort(np.concatenate(selected)) if selected else np.array([], dtype=np.int64)
    return SelectionPlan(
        epoch=epoch,
        selected=ids,
        requested=drawn_total,
        drawn=drawn_total,
        cluster_thresholds=thresholds,
    )


def schedule_select(
    spec: SchedulerSpec,
    scores: AlScores,
    epoch: int,
    seed: int,
    assignment: ClusterAssignment | None = None,
) -> SelectionPlan:
    """Dispatch to the scheduler's selection rule for one epoch.

    Fraction schedulers take ceil(fraction * pool) ids from the pooled
    ranking; dif_build schedulers threshold and sample within each
    cluster (requiring an assignment) and union the per-cluster picks.
    """
    if spec.kind in DIF_BUILD:
        if assignment is None:
            raise ConfigError(
                f"{spec.kind} scheduling works per cluster and requires clustering"
            )
        return _per_cluster_plan(spec, scores, assignment, epoch, seed)

    fraction = epoch_fraction(spec, epoch)
    count = fraction_count(fraction, len(scores))
    if spec.kind in ("base", "linear"):
        return select_deterministic(scores, count, epoch=epoch)
    rng = rand.substream(seed, rand.SCHEDULING, epoch)
    return select_probabilistic(scores, count, rng, epoch=epoch)
