"""Per-sample informativeness scores and their descending ranking.

Four scoring rules: predictive entropy, mutual-information (bald) and
predictive-variance scores driven by epistemic index draws, and the
model-free furthest-from-medoid rule driven by a cluster assignment.
Scoring a pool yields the raw values plus the ranking that schedulers
consume; ties rank by ascending sample id so results are reproducible
and independent of pool iteration order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rand
from .clustering import ClusterAssignment
from .epinet import EpinetModel, per_draw_probs
from .errors import ConfigError
from .nn import DenseNet, forward_batch, softmax

ACQUISITIONS = ("entropy", "bald", "variance", "furthest_batch")
EPISTEMIC = ("bald", "variance")


@dataclass
class AlScores:
    """Acquisition values per sample id plus the derived descending order.

    ids is sorted ascending and row-aligned with results; order holds the
    same ids sorted by descending score, ties broken by ascending id.
    """

    ids: np.ndarray
    results: np.ndarray
    order: np.ndarray

    def score_of(self, sample_id: int) -> float:
        pos = int(np.searchsorted(self.ids, sample_id))
        if pos >= len(self.ids) or self.ids[pos] != sample_id:
            raise KeyError(f"sample id {sample_id} was not scored")
        return float(self.results[pos])

    def __len__(self) -> int:
        return len(self.ids)


def make_scores(ids: np.ndarray, results: np.ndarray) -> AlScores:
    """Build AlScores from aligned (ids, values), sorting internally."""
    ids = np.asarray(ids)
    results = np.asarray(results, dtype=np.float64)
    if ids.shape != results.shape:
        raise ValueError(f"ids shape {ids.shape} != results shape {results.shape}")
    by_id = np.argsort(ids, kind="stable")
    ids, results = ids[by_id], results[by_id]
    if len(np.unique(ids)) != len(ids):
        raise ValueError("duplicate sample ids in scores")
    # lexsort: primary key last. Descending score, then ascending id.
    order = ids[np.lexsort((ids, -results))]
    return AlScores(ids=ids, results=results, order=order)


def entropy_score(probs: np.ndarray) -> float:
    """Shannon entropy -sum p ln p in nats, with 0 ln 0 taken as 0."""
    probs = np.asarray(probs, dtype=np.float64)
    if np.any(probs < 0):
        raise ValueError(f"negative probability in {probs}")
    total = probs.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {total}, expected 1")
    return float(_entropy_rows(probs[None, :])[0])


def _entropy_rows(probs: np.ndarray) -> np.ndarray:
    # elementwise p ln p with the 0 ln 0 := 0 convention, summed over the last axis
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0.0, probs * np.log(probs), 0.0)
    return -terms.sum(axis=-1)


def bald_from_probs(probs: np.ndarray) -> float:
    """Mutual-information estimate from per-draw probabilities (K, C).

    Entropy of the draw-averaged distribution minus the average per-draw
    entropy; nonnegative by concavity, tiny negative rounding clamped to 0.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] < 2:
        raise ValueError(f"need a (K >= 2, C) probability matrix, got {probs.shape}")
    mean_entropy = _entropy_rows(probs.mean(axis=0))
    return float(max(mean_entropy - _entropy_rows(probs).mean(), 0.0))


def variance_from_probs(probs: np.ndarray) -> float:
    """Total per-class variance of probabilities across draws (K, C)."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] < 2:
        raise ValueError(f"need a (K >= 2, C) probability matrix, got {probs.shape}")
    mean = probs.mean(axis=0)
    return float(np.mean((probs - mean) ** 2, axis=0).sum())


def _sample_draws(enn: EpinetModel, sample_id: int, k: int, seed: int) -> np.ndarray:
    rng = rand.substream(seed, rand.SCORING, int(sample_id))
    return rng.standard_normal((k, enn.index_dim))


def bald_score(enn: EpinetModel, x: np.ndarray, k: int, rng: np.random.Generator) -> float:
    """Monte Carlo bald score for one input; the K draws feed both terms."""
    if k < 2:
        raise ValueError(f"bald needs at least 2 draws, got {k}")
    z_draws = rng.standard_normal((k, enn.index_dim))
    probs = per_draw_probs(enn, np.asarray(x, dtype=np.float64)[None, :], z_draws)[0]
    return bald_from_probs(probs)


def variance_score(
    enn: EpinetModel, x: np.ndarray, k: int, rng: np.random.Generator
) -> float:
    """Monte Carlo predictive-variance score for one input."""
    if k < 2:
        raise ValueError(f"variance needs at least 2 draws, got {k}")
    z_draws = rng.standard_normal((k, enn.index_dim))
    probs = per_draw_probs(enn, np.asarray(x, dtype=np.float64)[None, :], z_draws)[0]
    return variance_from_probs(probs)


def furthest_batch_scores(
    assignment: ClusterAssignment, features: np.ndarray, ids: np.ndarray | None = None
) -> AlScores:
    """Distance of each sample to its own cluster's medoid, ranked descending.

    features rows align with ids (default: the assignment's own ids). Every
    scored sample must appear in the assignment.
    """
    if ids is None:
        ids = assignment.ids
    ids = np.asarray(ids)
    features = np.asarray(features, dtype=np.float64)
    if features.shape[0] != len(ids):
        raise ValueError("features and ids must be row-aligned")

    clusters = np.fromiter(
        (assignment.cluster_of(int(sid)) for sid in ids), dtype=np.int64, count=len(ids)
    )
    scores = np.linalg.norm(features - assignment.medoid_features[clusters], axis=1)
    return make_scores(ids, scores)


def score_pool(
    model: DenseNet | EpinetModel,
    features: np.ndarray,
    ids: np.ndarray,
    kind: str,
    k_draws: int = 32,
    seed: int = 0,
    assignment: ClusterAssignment | None = None,
) -> AlScores:
    """Score every candidate sample with the chosen acquisition function.

    features rows align with ids. Epistemic functions (bald, variance)
    require an EpinetModel; furthest_batch requires an assignment covering
    the ids and ignores the model. Index draws for epistemic scoring come
    from per-sample substreams keyed by (seed, sample id), so scores do
    not depend on pool order or batching.
    """
    if kind not in ACQUISITIONS:
        raise ValueError(f"unknown acquisition {kind!r}")
    ids = np.asarray(ids)
    features = np.asarray(features, dtype=np.float64)

    if kind == "furthest_batch":
        if assignment is None:
            raise ConfigError("furthest_batch scoring requires a cluster assignment")
        return furthest_batch_scores(assignment, features, ids)

    if kind in EPISTEMIC and not isinstance(model, EpinetModel):
        raise ConfigError(
            f"{kind} acquisition needs the epistemic architecture, "
            "not a plain classifier"
        )

    if isinstance(model, EpinetModel):
        if k_draws < 2:
            raise ValueError(f"epistemic scoring needs at least 2 draws, got {k_draws}")
        z_draws = np.stack(
            [_sample_draws(model, int(sid), k_draws, seed) for sid in ids]
        )
        probs = per_draw_probs(model, features, z_draws)
        mean = probs.mean(axis=1)
        if kind == "entropy":
            scores = _entropy_rows(mean)
        elif kind == "bald":
            scores = np.maximum(
                _entropy_rows(mean) - _entropy_rows(probs).mean(axis=1), 0.0
            )
        else:
            scores = np.mean((probs - mean[:, None, :]) ** 2, axis=1).sum(axis=-1)
    else:
        logits, _ = forward_batch(model, features)
        scores = _entropy_rows(softmax(logits))
    return make_scores(ids, scores)
