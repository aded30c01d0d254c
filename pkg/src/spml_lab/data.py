"""Synthetic dataset generation, file ingestion, and annotation masking.

Internal label conventions:
    ground truth : {-1, +1}  (negative / positive)
    annotations  : {-1, 0, +1} (negative / unannotated / positive)
On disk, ground truth uses {0, 1} and is mapped to {-1, +1} on load;
annotation files carry {-1, 0, 1} directly.

All generators and maskers are pure functions of (inputs, seed): calling
them twice with the same arguments yields bit-identical results.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DataError

SPLIT_TAGS = ("train", "val", "test")

FEATURES_FILE = "features.csv"
GROUND_TRUTH_FILE = "ground_truth.csv"
ANNOTATIONS_FILE = "annotations.csv"


@dataclass
class Dataset:
    """Feature matrix plus ground-truth and (possibly partial) annotations."""

    features: np.ndarray      # (N, D) float64
    ground_truth: np.ndarray  # (N, C) int8 in {-1, +1}
    annotations: np.ndarray   # (N, C) int8 in {-1, 0, +1}
    split_tag: str = "train"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.ground_truth = np.asarray(self.ground_truth, dtype=np.int8)
        self.annotations = np.asarray(self.annotations, dtype=np.int8)
        if self.features.ndim != 2 or self.ground_truth.ndim != 2 or self.annotations.ndim != 2:
            raise DataError("features and label matrices must be 2-D")
        n = self.features.shape[0]
        if self.ground_truth.shape[0] != n or self.annotations.shape[0] != n:
            raise DataError(
                f"row counts disagree: features {n}, ground truth "
                f"{self.ground_truth.shape[0]}, annotations {self.annotations.shape[0]}")
        if self.ground_truth.shape != self.annotations.shape:
            raise DataError(
                f"label shapes disagree: {self.ground_truth.shape} vs {self.annotations.shape}")
        if not np.isin(self.ground_truth, (-1, 1)).all():
            raise DataError("ground truth entries must be -1 or +1")
        if not np.isin(self.annotations, (-1, 0, 1)).all():
            raise DataError("annotation entries must be -1, 0, or +1")
        if self.split_tag not in SPLIT_TAGS:
            raise DataError(f"split tag must be one of {SPLIT_TAGS}, got {self.split_tag!r}")

    @property
    def sample_count(self) -> int:
        return self.features.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def class_count(self) -> int:
        return self.ground_truth.shape[1]

    def fingerprint(self) -> str:
        """SHA-256 over shapes and raw bytes of all three matrices."""
        h = hashlib.sha256()
        for a in (self.features, self.ground_truth, self.annotations):
            h.update(str(a.shape).encode())
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of the prototype-based synthetic generator."""

    sample_count: int
    feature_dim: int
    class_count: int
    positives_per_sample_mean: float = 1.5
    class_prototype_spread: float = 1.0
    noise_sigma: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.sample_count < 1 or self.feature_dim < 1 or self.class_count < 1:
            raise ConfigurationError(
                f"sample_count, feature_dim, class_count must be >= 1, got "
                f"{self.sample_count}, {self.feature_dim}, {self.class_count}")
        if self.positives_per_sample_mean <= 0:
            raise ConfigurationError("positives_per_sample_mean must be > 0")
        if self.class_prototype_spread <= 0:
            raise ConfigurationError("class_prototype_spread must be > 0")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be >= 0")


@dataclass
class AnnotationStats:
    """Per-class annotation bookkeeping (counts sum to N in every class)."""

    annotated_positive: np.ndarray
    unannotated_positive: np.ndarray
    unannotated_negative: np.ndarray
    annotated_negative: np.ndarray
    unannotated_negative_proportion: np.ndarray  # NaN when nothing is unannotated

    @property
    def class_count(self) -> int:
        return self.annotated_positive.shape[0]

    def rows(self):
        for c in range(self.class_count):
            yield (c, int(self.annotated_positive[c]), int(self.unannotated_positive[c]),
                   int(self.unannotated_negative[c]), int(self.annotated_negative[c]),
                   float(self.unannotated_negative_proportion[c]))


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    """Fully labeled synthetic dataset from class prototypes.

    Each sample draws 1 + Poisson(mean - 1) positive classes (capped at C),
    its feature vector is the sum of the chosen class prototypes plus
    isotropic Gaussian noise, and annotations start equal to ground truth.
    """
    rng = np.random.default_rng(cfg.seed)
    n, d, c = cfg.sample_count, cfg.feature_dim, cfg.class_count
    prototypes = rng.normal(0.0, cfg.class_prototype_spread, size=(c, d))
    extra = rng.poisson(max(cfg.positives_per_sample_mean - 1.0, 0.0), size=n)
    positives_per_sample = np.minimum(1 + extra, c)

    gt = np.full((n, c), -1, dtype=np.int8)
    for i in range(n):
        chosen = rng.choice(c, size=positives_per_sample[i], replace=False)
        gt[i, chosen] = 1

    membership = (gt == 1).astype(np.float64)
    features = membership @ prototypes
    if cfg.noise_sigma > 0:
        features = features + rng.normal(0.0, cfg.noise_sigma, size=(n, d))
    return Dataset(features=features, ground_truth=gt, annotations=gt.copy(), split_tag="train")


def mask_single_positive(ground_truth: np.ndarray, seed: int) -> np.ndarray:
    """Keep exactly one positive per row (uniformly chosen), zero the rest.

    The result is a single-positive annotation matrix: one +1 per row and no
    -1 entries.  Rows without any positive are rejected.
    """
    gt = np.asarray(ground_truth)
    rng = np.random.default_rng(seed)
    ann = np.zeros_like(gt, dtype=np.int8)
    for i in range(gt.shape[0]):
        positives = np.flatnonzero(gt[i] == 1)
        if positives.size == 0:
            raise DataError(f"row {i} has no positive ground-truth label to keep")
        ann[i, rng.choice(positives)] = 1
    return ann


def mask_missing_labels(ground_truth: np.ndarray, drop_fraction: float, seed: int) -> np.ndarray:
    """Discard a fixed fraction of each row's labels (set to unannotated).

    Exactly round(drop_fraction * C) uniformly chosen entries per row become
    0; the rest copy ground truth (as {-1, +1}).
    """
    if not 0.0 <= drop_fraction < 1.0:
        raise ConfigurationError(f"drop_fraction must lie in [0, 1), got {drop_fraction}")
    gt = np.asarray(ground_truth)
    c = gt.shape[1]
    drop_count = int(np.floor(drop_fraction * c + 0.5))
    rng = np.random.default_rng(seed)
    ann = gt.astype(np.int8).copy()
    for i in range(gt.shape[0]):
        dropped = rng.choice(c, size=drop_count, replace=False)
        ann[i, dropped] = 0
    return ann


def split_train_val(ds: Dataset, val_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint row split; the withheld split keeps its full annotations.

    Masking, when wanted, is applied to the returned train split afterward.
    """
    if not 0.0 < val_fraction < 1.0:
        raise ConfigurationError(f"val_fraction must lie in (0, 1), got {val_fraction}")
    n = ds.sample_count
    n_val = int(np.floor(val_fraction * n + 0.5))
    if n_val == 0 or n_val == n:
        raise ConfigurationError(
            f"val_fraction {val_fraction} leaves an empty split for {n} samples")
    perm = np.random.default_rng(seed).permutation(n)
    val_idx, train_idx = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    train = Dataset(ds.features[train_idx], ds.ground_truth[train_idx],
                    ds.annotations[train_idx], split_tag="train")
    val = Dataset(ds.features[val_idx], ds.ground_truth[val_idx],
                  ds.annotations[val_idx], split_tag="val")
    return train, val


def annotation_stats(annotations: np.ndarray, ground_truth: np.ndarray) -> AnnotationStats:
    """Per-class counts of annotated/unannotated positives and negatives."""
    ann = np.asarray(annotations)
    gt = np.asarray(ground_truth)
    if ann.shape != gt.shape:
        raise DataError(f"shape mismatch: annotations {ann.shape} vs ground truth {gt.shape}")
    annotated_pos = (ann == 1).sum(axis=0)
    annotated_neg = (ann == -1).sum(axis=0)
    unannotated = ann == 0
    unann_pos = (unannotated & (gt == 1)).sum(axis=0)
    unann_neg = (unannotated & (gt == -1)).sum(axis=0)
    unann_total = unann_pos + unann_neg
    with np.errstate(invalid="ignore", divide="ignore"):
        proportion = np.where(unann_total > 0, unann_neg / unann_total, np.nan)
    return AnnotationStats(
        annotated_positive=annotated_pos,
        unannotated_positive=unann_pos,
        unannotated_negative=unann_neg,
        annotated_negative=annotated_neg,
        unannotated_negative_proportion=proportion,
    )


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def _read_csv_matrix(path: Path, what: str) -> np.ndarray:
    """Comma-separated numeric matrix; a non-numeric first row is a header."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{what} file not found: {path}")
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise DataError(f"{what} file is empty: {path}")
    start = 0
    try:
        [float(tok) for tok in lines[0].split(",")]
    except ValueError:
        start = 1  # header row
    width = None
    for r, line in enumerate(lines[start:]):
        toks = line.split(",")
        if width is None:
            width = len(toks)
        elif len(toks) != width:
            raise DataError(f"{what} row {r} has {len(toks)} columns, expected {width} ({path})")
        try:
            rows.append([float(tok) for tok in toks])
        except ValueError as exc:
            raise DataError(f"{what} row {r} contains a non-numeric value ({path})") from exc
    return np.asarray(rows, dtype=np.float64)


def _validate_integer_matrix(raw: np.ndarray, allowed: tuple, what: str, path) -> np.ndarray:
    ints = raw.astype(np.int64)
    if np.any(ints != raw):
        n, c = np.argwhere(ints != raw)[0]
        raise DataError(f"{what} value {raw[n, c]} at row {n}, column {c} is not an integer ({path})")
    bad = ~np.isin(ints, allowed)
    if bad.any():
        n, c = np.argwhere(bad)[0]
        raise DataError(
            f"{what} value {ints[n, c]} at row {n}, column {c} not in {allowed} ({path})")
    return ints


def load_dataset(features_path, gt_path, annotations_path=None, split_tag: str = "train") -> Dataset:
    """Parse a dataset from delimited files.

    Ground truth on disk uses {0, 1} and maps to internal {-1, +1};
    annotations use {-1, 0, 1} directly.  When no annotation file is given
    the dataset is fully labeled (annotations equal ground truth).
    """
    features = _read_csv_matrix(Path(features_path), "features")
    gt_raw = _validate_integer_matrix(
        _read_csv_matrix(Path(gt_path), "ground truth"), (0, 1), "ground truth", gt_path)
    gt = np.where(gt_raw == 1, 1, -1).astype(np.int8)
    if annotations_path is not None:
        ann = _validate_integer_matrix(
            _read_csv_matrix(Path(annotations_path), "annotations"), (-1, 0, 1),
            "annotations", annotations_path).astype(np.int8)
    else:
        ann = gt.copy()
    return Dataset(features=features, ground_truth=gt, annotations=ann, split_tag=split_tag)


def save_dataset(ds: Dataset, directory) -> dict:
    """Write features/ground-truth/annotation files; returns their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "features": directory / FEATURES_FILE,
        "ground_truth": directory / GROUND_TRUTH_FILE,
        "annotations": directory / ANNOTATIONS_FILE,
    }
    np.savetxt(paths["features"], ds.features, delimiter=",", fmt="%.17g")
    np.savetxt(paths["ground_truth"], (ds.ground_truth == 1).astype(np.int8),
               delimiter=",", fmt="%d")
    np.savetxt(paths["annotations"], ds.annotations, delimiter=",", fmt="%d")
    return paths


def load_dataset_dir(directory, split_tag: str = "train") -> Dataset:
    """Load a dataset directory written by save_dataset."""
    directory = Path(directory)
    ann_path = directory / ANNOTATIONS_FILE
    return load_dataset(
        directory / FEATURES_FILE,
        directory / GROUND_TRUTH_FILE,
        ann_path if ann_path.exists() else None,
        split_tag=split_tag,
    )


def write_stats_csv(stats: AnnotationStats, path) -> None:
    header = ("class,annotated_positive,unannotated_positive,unannotated_negative,"
              "annotated_negative,unannotated_negative_proportion")
    lines = [header]
    for row in stats.rows():
        c, ap, up, un, an_, prop = row
        lines.append(f"{c},{ap},{up},{un},{an_},{prop!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_stats_csv(path) -> AnnotationStats:
    lines = Path(path).read_text(encoding="utf-8").strip().splitlines()[1:]
    cols = list(zip(*[ln.split(",") for ln in lines]))
    return AnnotationStats(
        annotated_positive=np.asarray([int(v) for v in cols[1]]),
        unannotated_positive=np.asarray([int(v) for v in cols[2]]),
        unannotated_negative=np.asarray([int(v) for v in cols[3]]),
        annotated_negative=np.asarray([int(v) for v in cols[4]]),
        unannotated_negative_proportion=np.asarray([float(v) for v in cols[5]]),
    )
