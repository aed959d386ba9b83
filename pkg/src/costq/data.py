"""Dataset ingestion, normalization, splitting, feature costs and external
classifier predictions.

File formats:
  * dataset: comma-delimited text with a header row; one column holds the
    class label (named in the config), every other column is a numeric
    feature.
  * cost file: headerless rows of ``feature_name,cost``.
  * predictions file: headerless rows of ``row_index,predicted_label`` where
    the index is 0-based into the dataset file.
  * split index files: one 0-based row index per line.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

Array = np.ndarray

COST_CHOICES = (0.2, 0.4, 0.6, 0.8)  # pool for randomly assigned per-feature costs


@dataclass
class Dataset:
    """Feature matrix plus label ids and the bookkeeping needed to reproduce
    preprocessing at evaluation time."""

    features: Array                 # (samples, n) float64
    labels: Array                   # (samples,) int, 0..K-1
    class_labels: list[str]         # original label strings, first-appearance order
    feature_names: list[str]
    feature_means: Array | None = None  # set once normalized, from the training split
    feature_stds: Array | None = None
    normalized: bool = False

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_labels)


@dataclass
class CostSchedule:
    """Per-feature acquisition costs and how they were produced."""

    values: Array
    mode: str  # uniform | random | file


def load_dataset(path, label_column: str) -> Dataset:
    """Parse and validate a delimited dataset file.

    Zero-variance feature columns are dropped with a warning; class labels are
    mapped to 0..K-1 in order of first appearance.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        dupes = {h for h in header if header.count(h) > 1}
        if dupes:
            raise DataError(f"{path}: duplicate header names: {sorted(dupes)}")
        if label_column not in header:
            raise DataError(
                f"{path}: label column {label_column!r} not in header {header}")
        label_idx = header.index(label_column)
        feature_names = [h for i, h in enumerate(header) if i != label_idx]

        rows: list[list[float]] = []
        raw_labels: list[str] = []
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {row_no} has {len(row)} fields, expected {len(header)}")
            values = []
            for col_i, cell in enumerate(row):
                if col_i == label_idx:
                    continue
                cell = cell.strip()
                if cell == "":
                    raise DataError(
                        f"{path}: row {row_no}, column {header[col_i]!r}: missing value")
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: row {row_no}, column {header[col_i]!r}: "
                        f"non-numeric value {cell!r}") from None
            rows.append(values)
            raw_labels.append(row[label_idx].strip())

    if not rows:
        raise DataError(f"{path}: no data rows")
    features = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(features)):
        bad = np.argwhere(~np.isfinite(features))[0]
        raise DataError(
            f"{path}: non-finite value at row {bad[0] + 2}, "
            f"column {feature_names[bad[1]]!r}")

    class_labels: list[str] = []
    index_of: dict[str, int] = {}
    labels = np.empty(len(raw_labels), dtype=np.int64)
    for i, lab in enumerate(raw_labels):
        if lab not in index_of:
            index_of[lab] = len(class_labels)
            class_labels.append(lab)
        labels[i] = index_of[lab]

    keep = features.std(axis=0) > 0
    if not keep.all():
        dropped = [name for name, k in zip(feature_names, keep) if not k]
        log.warning("%s: dropping %d zero-variance feature(s): %s",
                    path, len(dropped), dropped)
        features = features[:, keep]
        feature_names = [name for name, k in zip(feature_names, keep) if k]
    if features.shape[1] == 0:
        raise DataError(f"{path}: no usable feature columns")

    return Dataset(features=features, labels=labels, class_labels=class_labels,
                   feature_names=feature_names)


def normalize(dataset: Dataset, train_indices: Array) -> Dataset:
    """Standardize every sample with the training split's mean and std.

    Statistics come exclusively from the training rows and are recorded on the
    returned dataset so checkpoints can reproduce the transform. Refuses to run
    twice.
    """
    if dataset.normalized:
        raise DataError("dataset is already normalized; refusing to re-apply")
    train = dataset.features[np.asarray(train_indices)]
    means = train.mean(axis=0)
    stds = train.std(axis=0)
    if np.any(stds <= 0):
        bad = [dataset.feature_names[i] for i in np.flatnonzero(stds <= 0)]
        raise DataError(f"zero variance on the training split for feature(s) {bad}")
    return replace(dataset,
                   features=(dataset.features - means) / stds,
                   feature_means=means, feature_stds=stds, normalized=True)


def apply_recorded_normalization(dataset: Dataset, means: Array, stds: Array) -> Dataset:
    """Standardize with previously recorded statistics (checkpoint portability)."""
    if dataset.normalized:
        raise DataError("dataset is already normalized; refusing to re-apply")
    means = np.asarray(means, dtype=np.float64)
    stds = np.asarray(stds, dtype=np.float64)
    if means.shape != (dataset.n_features,) or stds.shape != (dataset.n_features,):
        raise DataError("recorded normalization statistics do not match the dataset")
    return replace(dataset,
                   features=(dataset.features - means) / stds,
                   feature_means=means, feature_stds=stds, normalized=True)


def make_splits(dataset: Dataset, fractions=(0.6, 0.2, 0.2),
                seed: int = 0) -> dict[str, Array]:
    """Seeded stratified-by-class split into train/validation/test index arrays."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise DataError(f"split fractions must be 3 non-negatives summing to 1, got {fractions}")
    rng = np.random.default_rng(seed)
    parts: dict[str, list[Array]] = {"train": [], "validation": [], "test": []}
    for k in range(dataset.n_classes):
        idx = np.flatnonzero(dataset.labels == k)
        rng.shuffle(idx)
        b1 = int(np.floor(fractions[0] * len(idx)))
        b2 = int(np.floor((fractions[0] + fractions[1]) * len(idx)))
        parts["train"].append(idx[:b1])
        parts["validation"].append(idx[b1:b2])
        parts["test"].append(idx[b2:])
    splits = {name: np.sort(np.concatenate(chunks)) for name, chunks in parts.items()}
    if len(splits["train"]) == 0:
        raise DataError("training split is empty; adjust fractions or dataset size")
    return splits


def load_split_files(paths: dict[str, str], n_samples: int) -> dict[str, Array]:
    """Explicit split override: one 0-based row index per line, one file per split."""
    splits: dict[str, Array] = {}
    seen = np.zeros(n_samples, dtype=bool)
    for name, path in paths.items():
        with open(path) as fh:
            try:
                idx = np.array([int(line) for line in fh.read().split()], dtype=np.int64)
            except ValueError as exc:
                raise DataError(f"{path}: split index files hold one integer per line ({exc})")
        if len(idx) and (idx.min() < 0 or idx.max() >= n_samples):
            raise DataError(f"{path}: split index out of range for {n_samples} samples")
        if seen[idx].any():
            raise DataError(f"{path}: split overlaps another split")
        seen[idx] = True
        splits[name] = np.sort(idx)
    if not seen.all():
        missing = int((~seen).sum())
        raise DataError(f"split files leave {missing} sample(s) unassigned")
    return splits


def assign_costs(n_features: int, mode: str, rng: np.random.Generator | None = None,
                 path=None, feature_names: list[str] | None = None) -> CostSchedule:
    """Per-feature costs: all 1.0 (uniform), i.i.d. from the random pool, or an
    explicit ``feature_name,cost`` file."""
    if n_features < 1:
        raise DataError("need at least one feature")
    if mode == "uniform":
        return CostSchedule(np.ones(n_features), mode)
    if mode == "random":
        if rng is None:
            raise DataError("random cost assignment needs a seeded rng")
        values = rng.choice(COST_CHOICES, size=n_features)
        return CostSchedule(values.astype(np.float64), mode)
    if mode == "file":
        if path is None or feature_names is None:
            raise DataError("cost file mode needs a path and the feature names")
        by_name: dict[str, float] = {}
        with open(path, newline="") as fh:
            for row_no, row in enumerate(csv.reader(fh), start=1):
                if len(row) != 2:
                    raise DataError(f"{path}: row {row_no}: expected 'feature,cost'")
                name = row[0].strip()
                try:
                    cost = float(row[1])
                except ValueError:
                    raise DataError(
                        f"{path}: row {row_no}: non-numeric cost {row[1]!r}") from None
                if cost < 0:
                    raise DataError(f"{path}: row {row_no}: negative cost for {name!r}")
                if name in by_name:
                    raise DataError(f"{path}: duplicate cost entry for {name!r}")
                by_name[name] = cost
        missing = [n for n in feature_names if n not in by_name]
        unknown = [n for n in by_name if n not in feature_names]
        if missing or unknown or len(by_name) != n_features:
            raise DataError(
                f"{path}: cost entries do not match the {n_features} dataset features"
                f" (missing {missing}, unknown {unknown})")
        return CostSchedule(np.array([by_name[n] for n in feature_names]), mode)
    raise DataError(f"unknown cost mode {mode!r}")


def load_hpc_predictions(path, dataset: Dataset) -> Array:
    """External-classifier predictions for every dataset row.

    Returns class indices aligned with the dataset rows. Every row must be
    covered; unknown labels or missing/duplicate ids are rejected with the
    offenders named.
    """
    index_of = {lab: i for i, lab in enumerate(dataset.class_labels)}
    predictions = np.full(dataset.n_samples, -1, dtype=np.int64)
    with open(path, newline="") as fh:
        for row_no, row in enumerate(csv.reader(fh), start=1):
            if len(row) != 2:
                raise DataError(f"{path}: row {row_no}: expected 'row_index,label'")
            try:
                sample = int(row[0])
            except ValueError:
                raise DataError(
                    f"{path}: row {row_no}: non-integer sample id {row[0]!r}") from None
            if not 0 <= sample < dataset.n_samples:
                raise DataError(f"{path}: row {row_no}: sample id {sample} out of range")
            label = row[1].strip()
            if label not in index_of:
                raise DataError(
                    f"{path}: row {row_no}: unknown class label {label!r} "
                    f"(expected one of {dataset.class_labels})")
            if predictions[sample] != -1:
                raise DataError(f"{path}: duplicate prediction for sample {sample}")
            predictions[sample] = index_of[label]
    missing = np.flatnonzero(predictions == -1)
    if len(missing):
        shown = ", ".join(str(i) for i in missing[:10])
        more = "" if len(missing) <= 10 else f" (+{len(missing) - 10} more)"
        raise DataError(f"{path}: missing predictions for sample id(s) {shown}{more}")
    accuracy = float(np.mean(predictions == dataset.labels))
    log.info("%s: external classifier accuracy %.4f over the full dataset", path, accuracy)
    return predictions


def hpc_accuracy(predictions: Array, dataset: Dataset, indices: Array) -> float:
    """Accuracy of the prediction table on one split."""
    idx = np.asarray(indices)
    return float(np.mean(predictions[idx] == dataset.labels[idx]))
