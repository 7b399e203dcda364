"""Agglomerative Ward clustering over sample features, plus medoids.

Greedy bottom-up merging: every sample starts as its own cluster and the
pair whose merge least increases total within-cluster variance is fused,
n - k times. Merge costs follow the Lance-Williams recurrence, so the
increment for singletons {i}, {j} is half the squared Euclidean distance
between them. Two clustering modes feed the pipeline: "init" clusters raw
input features once before training, "dynamic" re-clusters the current
model's hidden features before each epoch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _ward_kernels
from .nn import DenseNet, forward_batch


@dataclass
class ClusterAssignment:
    """Cluster membership for a set of samples.

    ids and labels are row-aligned; labels take values 0..k-1. medoid_ids
    holds, per cluster, the member sample id closest to the cluster's
    centroid (ties broken by smallest id); medoid_features holds that
    member's feature row so distances to the medoid stay computable when
    scoring only a subset of the clustered ids.
    """

    ids: np.ndarray
    labels: np.ndarray
    medoid_ids: np.ndarray
    medoid_features: np.ndarray
    k: int

    def cluster_of(self, sample_id: int) -> int:
        pos = int(np.searchsorted(self.ids, sample_id))
        if pos >= len(self.ids) or self.ids[pos] != sample_id:
            raise KeyError(f"sample id {sample_id} not in assignment")
        return int(self.labels[pos])

    def members(self, cluster: int) -> np.ndarray:
        return self.ids[self.labels == cluster]


def pairwise_sq_dists(features: np.ndarray) -> np.ndarray:
    """Dense matrix of squared Euclidean distances, clamped at zero."""
    sq = np.sum(features * features, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (features @ features.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def medoid_of(member_ids: np.ndarray, features: np.ndarray) -> int:
    """Member id minimizing Euclidean distance to the member centroid.

    features rows are aligned with member_ids. Ties go to the smallest id.
    """
    member_ids = np.asarray(member_ids)
    if member_ids.size == 0:
        raise RuntimeError("medoid of an empty cluster is undefined")
    order = np.argsort(member_ids, kind="stable")
    feats = np.asarray(features, dtype=np.float64)[order]
    centroid = feats.mean(axis=0)
    dists = np.linalg.norm(feats - centroid, axis=1)
    return int(member_ids[order][int(np.argmin(dists))])


def ward_cluster(
    features: np.ndarray, k: int, ids: np.ndarray | None = None
) -> ClusterAssignment:
    """Cluster n feature rows into k groups by greedy Ward merging.

    ids labels the rows (defaults to 0..n-1) and must be strictly
    increasing so that positional and id-based tie-breaks agree.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise ValueError(f"features must be 2-d, got shape {features.shape}")
    n = features.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"cluster count must satisfy 1 <= k <= {n}, got {k}")
    if ids is None:
        ids = np.arange(n)
    else:
        ids = np.asarray(ids)
        if ids.shape != (n,):
            raise ValueError(f"ids must have shape ({n},), got {ids.shape}")
        if n > 1 and not np.all(np.diff(ids) > 0):
            raise ValueError("ids must be strictly increasing")

    d = 0.5 * pairwise_sq_dists(features)
    size = np.ones(n, dtype=np.int64)
    parent = _ward_kernels.merge_parents(d, size, k)

    # parent always points to a smaller index, so one ascending pass resolves roots
    roots = np.arange(n)
    for i in range(n):
        if parent[i] != -1:
            roots[i] = roots[parent[i]]
    unique_roots = np.unique(roots)
    labels = np.searchsorted(unique_roots, roots)

    medoids = np.empty(k, dtype=ids.dtype)
    medoid_feats = np.empty((k, features.shape[1]))
    for c in range(k):
        member_pos = np.flatnonzero(labels == c)
        medoids[c] = medoid_of(ids[member_pos], features[member_pos])
        medoid_feats[c] = features[member_pos[ids[member_pos] == medoids[c]][0]]
    return ClusterAssignment(
        ids=ids.copy(), labels=labels, medoid_ids=medoids,
        medoid_features=medoid_feats, k=k,
    )


def cluster_features(
    model: DenseNet | object, raw_features: np.ndarray, mode: str
) -> np.ndarray:
    """Feature matrix the clustering sees: raw inputs or model hidden features.

    mode "init" returns the raw input features unchanged; "dynamic"
    returns the current model's final-hidden-layer activations (for the
    epistemic wrapper, the base network's features).
    """
    if mode not in ("init", "dynamic"):
        raise ValueError(f"mode must be 'init' or 'dynamic', got {mode!r}")
    raw_features = np.asarray(raw_features, dtype=np.float64)
    if mode == "init":
        return raw_features
    net = model if isinstance(model, DenseNet) else model.base
    _, hidden = forward_batch(net, raw_features)
    return hidden
