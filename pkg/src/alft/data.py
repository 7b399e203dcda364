"""Dataset loading, stratified splitting, and a synthetic generator.

Datasets are feature-vector classification corpora stored line-delimited,
one JSON record per line:

    {"id": int, "features": [float, ...], "label": int, "split": "train"}

The split field is optional (assign with split_dataset). Gold labels are
kept behind an explicit lookup so scoring code paths can only ever see
features; training and evaluation fetch labels by id after annotation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import SchemaError

SPLITS = ("train", "validation", "test")


@dataclass
class Sample:
    """One record: stable id, feature vector, gold label, split tag."""

    id: int
    features: np.ndarray
    label: int
    split: str | None = None


@dataclass
class Dataset:
    """Column-oriented sample store; rows sorted by ascending id."""

    ids: np.ndarray
    features: np.ndarray
    labels: np.ndarray
    splits: np.ndarray  # "" where unassigned
    num_classes: int

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __post_init__(self):
        if len(np.unique(self.ids)) != len(self.ids):
            raise SchemaError("sample ids must be unique")

    def rows_of(self, ids: np.ndarray) -> np.ndarray:
        pos = np.searchsorted(self.ids, ids)
        bad = (pos >= len(self.ids)) | (self.ids[np.minimum(pos, len(self.ids) - 1)] != ids)
        if np.any(bad):
            raise KeyError(f"unknown sample ids: {np.asarray(ids)[bad][:5]}")
        return pos

    def features_of(self, ids: np.ndarray) -> np.ndarray:
        return self.features[self.rows_of(ids)]

    def labels_of(self, ids: np.ndarray) -> np.ndarray:
        """Gold labels; call only for annotated ids or held-out evaluation."""
        return self.labels[self.rows_of(ids)]

    def split_ids(self, split: str) -> np.ndarray:
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return self.ids[self.splits == split]

    def samples(self) -> list[Sample]:
        return [
            Sample(int(i), f, int(l), s if s else None)
            for i, f, l, s in zip(self.ids, self.features, self.labels, self.splits)
        ]

    def class_distribution(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes) / len(self)


def _build_dataset(
    ids: list[int],
    features: list[list[float]],
    labels: list[int],
    splits: list[str],
) -> Dataset:
    order = np.argsort(np.asarray(ids), kind="stable")
    feats = np.asarray(features, dtype=np.float64)[order]
    labs = np.asarray(labels, dtype=np.int64)[order]
    return Dataset(
        ids=np.asarray(ids, dtype=np.int64)[order],
        features=feats,
        labels=labs,
        splits=np.asarray(splits, dtype=object)[order],
        num_classes=int(labs.max()) + 1,
    )


def load_dataset(path: str | Path) -> Dataset:
    """Parse a line-delimited record file; infers class count and dimension."""
    ids: list[int] = []
    features: list[list[float]] = []
    labels: list[int] = []
    splits: list[str] = []
    dim: int | None = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid record: {exc}") from exc
            try:
                sid, feats, label = rec["id"], rec["features"], rec["label"]
            except (KeyError, TypeError) as exc:
                raise SchemaError(f"{path}:{lineno}: missing field {exc}") from exc
            if dim is None:
                dim = len(feats)
            elif len(feats) != dim:
                raise SchemaError(
                    f"{path}:{lineno}: feature length {len(feats)} != {dim}"
                )
            split = rec.get("split", "")
            if split and split not in SPLITS:
                raise SchemaError(f"{path}:{lineno}: unknown split {split!r}")
            ids.append(int(sid))
            features.append([float(v) for v in feats])
            labels.append(int(label))
            splits.append(split)
    if not ids:
        raise SchemaError(f"{path}: no records")
    if min(labels) < 0:
        raise SchemaError(f"{path}: negative class label")
    return _build_dataset(ids, features, labels, splits)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Write the line-delimited form; load_dataset round-trips it."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, f, l, s in zip(
            dataset.ids, dataset.features, dataset.labels, dataset.splits
        ):
            rec = {"id": int(i), "features": [float(v) for v in f], "label": int(l)}
            if s:
                rec["split"] = str(s)
            fh.write(json.dumps(rec) + "\n")


def split_dataset(
    dataset: Dataset, fractions: tuple[float, float, float], seed: int
) -> Dataset:
    """Assign train/validation/test tags, stratified by class.

    Each class's ids are shuffled and cut at the cumulative fractions, so
    every split's class counts sit within one sample of exact proportion.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != len(SPLITS):
        raise ValueError(f"need {len(SPLITS)} fractions, got {len(fractions)}")
    if any(f < 0 for f in fractions):
        raise ValueError(f"fractions must be nonnegative, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got sum {sum(fractions)}")
    nonzero = sum(1 for f in fractions if f > 0)
    rng = np.random.default_rng(seed)
    splits = np.asarray(["" for _ in range(len(dataset))], dtype=object)
    for cls in range(dataset.num_classes):
        rows = np.flatnonzero(dataset.labels == cls)
        if 0 < len(rows) < nonzero:
            raise ValueError(
                f"class {cls} has {len(rows)} samples, fewer than the "
                f"{nonzero} nonzero splits"
            )
        rows = rng.permutation(rows)
        cuts = np.round(np.cumsum(fractions) * len(rows)).astype(int)
        cuts[-1] = len(rows)
        start = 0
        for split, stop in zip(SPLITS, cuts):
            splits[rows[start:stop]] = split
            start = stop
    out = Dataset(
        ids=dataset.ids.copy(),
        features=dataset.features.copy(),
        labels=dataset.labels.copy(),
        splits=splits,
        num_classes=dataset.num_classes,
    )
    for split, frac in zip(SPLITS, fractions):
        if frac > 0 and len(out.split_ids(split)) == 0:
            raise ValueError(f"split {split!r} ended up empty")
    return out


@dataclass
class SynthSpec:
    """Gaussian-mixture generator settings.

    Class c is centered at separation * e_c (axis-aligned unit vector)
    with isotropic noise. Optional weights skew the class counts, e.g.
    (0.535, 0.349, 0.116) for a three-class imbalanced corpus.
    """

    classes: int
    per_class: int
    dim: int
    separation: float
    noise: float
    seed: int = 0
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError(f"need >= 2 classes, got {self.classes}")
        if self.dim < self.classes:
            raise ValueError(
                f"dim must be >= classes for axis-aligned means, "
                f"got dim={self.dim}, classes={self.classes}"
            )
        if self.separation <= 0 or self.noise < 0:
            raise ValueError("separation must be > 0 and noise >= 0")
        if self.weights is not None:
            if len(self.weights) != self.classes:
                raise ValueError(
                    f"need {self.classes} weights, got {len(self.weights)}"
                )
            if any(w <= 0 for w in self.weights):
                raise ValueError(f"weights must be positive, got {self.weights}")


def _allocate_counts(total: int, weights: tuple[float, ...]) -> np.ndarray:
    """Largest-remainder allocation: counts sum to total, each within 1."""
    w = np.asarray(weights, dtype=np.float64)
    exact = total * w / w.sum()
    counts = np.floor(exact).astype(int)
    remainder = exact - counts
    short = total - counts.sum()
    for idx in np.argsort(-remainder, kind="stable")[:short]:
        counts[idx] += 1
    return counts


def synth_generate(spec: SynthSpec) -> Dataset:
    """Deterministic Gaussian-mixture dataset for the given spec."""
    rng = np.random.default_rng(spec.seed)
    total = spec.classes * spec.per_class
    if spec.weights is None:
        counts = np.full(spec.classes, spec.per_class)
    else:
        counts = _allocate_counts(total, spec.weights)
    features = []
    labels = []
    for cls, count in enumerate(counts):
        mean = np.zeros(spec.dim)
        mean[cls] = spec.separation
        features.append(mean + spec.noise * rng.standard_normal((count, spec.dim)))
        labels.extend([cls] * count)
    feats = np.concatenate(features, axis=0)
    labs = np.asarray(labels, dtype=np.int64)
    return Dataset(
        ids=np.arange(total, dtype=np.int64),
        features=feats,
        labels=labs,
        splits=np.asarray(["" for _ in range(total)], dtype=object),
        num_classes=spec.classes,
    )
