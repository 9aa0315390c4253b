"""Dataset model, FVEC/CSV ingestion, synthetic data, and filter manifests.

FVEC is the package's binary interchange format:

    magic "FVEC" | u32 version=1 | u32 n | u32 d | u8 has_labels
    | u16 class_count | n*d little-endian f32 row-major values
    | (if has_labels) n little-endian u16 labels

The layout is trivially seekable and language-neutral. Dataset identity is
the 64-bit FNV-1a hash of that byte stream.
"""

from __future__ import annotations

import csv
import datetime
import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng
from .errors import (
    BadMagicError,
    CsvFormatError,
    EmptyDatasetError,
    EmptyFilterError,
    HashMismatchError,
    LabelRangeError,
    NonFiniteValueError,
    TruncatedFileError,
    ValidationError,
)

FVEC_MAGIC = b"FVEC"
FVEC_VERSION = 1
_HEADER = struct.Struct("<4sIIIBH")

METHOD_NETWORK = "network_filtered"
METHOD_RANDOM = "randomly_filtered"
METHOD_FULL = "full"
_METHODS = (METHOD_NETWORK, METHOD_RANDOM, METHOD_FULL)


@dataclass(frozen=True)
class FeatureDataset:
    """Immutable labeled example matrix. Values are float32, shape (n, d)."""

    values: np.ndarray
    labels: np.ndarray | None = None
    class_count: int = 0
    provenance: str = ""

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float32)
        if values.ndim != 2:
            raise ValidationError(f"values must be 2-D, got shape {values.shape}")
        n, d = values.shape
        if n < 1 or d < 1:
            raise EmptyDatasetError("empty dataset")
        if not np.all(np.isfinite(values)):
            raise NonFiniteValueError("non-finite value in dataset")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

        labels = self.labels
        if labels is not None:
            labels = np.ascontiguousarray(labels, dtype=np.uint16)
            if labels.shape != (n,):
                raise ValidationError(f"labels shape {labels.shape} != ({n},)")
            if self.class_count < 1:
                raise ValidationError("labeled dataset needs class_count >= 1")
            if labels.size and int(labels.max()) >= self.class_count:
                raise LabelRangeError(
                    f"label {int(labels.max())} out of range [0, {self.class_count})"
                )
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def take(self, indices, provenance_note: str = "") -> "FeatureDataset":
        """New dataset from a row subset, order as given."""
        idx = np.asarray(indices, dtype=np.int64)
        if idx.size == 0:
            raise EmptyDatasetError("empty dataset")
        if idx.min() < 0 or idx.max() >= self.n:
            raise ValidationError("row index out of range")
        return FeatureDataset(
            values=self.values[idx],
            labels=None if self.labels is None else self.labels[idx],
            class_count=self.class_count,
            provenance=self.provenance + provenance_note,
        )


@dataclass(frozen=True)
class Batch:
    """Contiguous row-slice view of a dataset."""

    parent: FeatureDataset
    start: int
    size: int

    def __post_init__(self):
        if not 1 <= self.size <= self.parent.n:
            raise ValidationError(f"batch size {self.size} not in [1, {self.parent.n}]")
        if self.start < 0 or self.start + self.size > self.parent.n:
            raise ValidationError("batch slice out of range")

    @property
    def values(self) -> np.ndarray:
        return self.parent.values[self.start : self.start + self.size]

    @property
    def labels(self) -> np.ndarray | None:
        if self.parent.labels is None:
            return None
        return self.parent.labels[self.start : self.start + self.size]


def fvec_bytes(ds: FeatureDataset) -> bytes:
    has_labels = ds.labels is not None
    out = [
        _HEADER.pack(FVEC_MAGIC, FVEC_VERSION, ds.n, ds.d, int(has_labels), ds.class_count)
    ]
    out.append(ds.values.astype("<f4", copy=False).tobytes())
    if has_labels:
        out.append(ds.labels.astype("<u2", copy=False).tobytes())
    return b"".join(out)


def dataset_hash(ds: FeatureDataset) -> str:
    """FNV-1a 64 over the FVEC byte stream, as 16 hex digits."""
    return f"{rng.fnv1a64(fvec_bytes(ds)):016x}"


def save_fvec(ds: FeatureDataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(fvec_bytes(ds))


def load_fvec(path) -> FeatureDataset:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(f"{path}: file shorter than FVEC header")
    magic, version, n, d, has_labels, class_count = _HEADER.unpack_from(raw)
    if magic != FVEC_MAGIC:
        raise BadMagicError(f"{path}: bad magic {magic!r}")
    if version != FVEC_VERSION:
        raise ValidationError(f"{path}: unsupported FVEC version {version}")
    if n == 0 or d == 0:
        raise EmptyDatasetError(f"{path}: empty dataset (n={n}, d={d})")
    expected = _HEADER.size + 4 * n * d + (2 * n if has_labels else 0)
    if len(raw) < expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, got {len(raw)}")
    values = np.frombuffer(raw, dtype="<f4", count=n * d, offset=_HEADER.size).reshape(n, d)
    labels = None
    if has_labels:
        labels = np.frombuffer(raw, dtype="<u2", count=n, offset=_HEADER.size + 4 * n * d)
        if labels.size and int(labels.max()) >= class_count:
            raise LabelRangeError(
                f"{path}: label {int(labels.max())} >= class_count {class_count}"
            )
    if not np.all(np.isfinite(values)):
        raise NonFiniteValueError(f"{path}: non-finite value in payload")
    return FeatureDataset(values=values, labels=labels, class_count=class_count,
                          provenance=str(path))


def save_csv(ds: FeatureDataset, path, header: bool = False) -> None:
    """RFC-4180 CSV; labels, when present, go in a trailing column."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            cols = [f"f{j}" for j in range(ds.d)]
            if ds.labels is not None:
                cols.append("label")
            writer.writerow(cols)
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.values[i]]
            if ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            writer.writerow(row)


def load_csv(path, has_header: bool = False, label_column: int | None = None) -> FeatureDataset:
    with open(path, "r", newline="") as fh:
        reader = csv.reader(fh)
        rows = list(reader)
    if has_header and rows:
        rows = rows[1:]
    rows = [r for r in rows if r]
    if not rows:
        raise EmptyDatasetError(f"{path}: no data rows")
    width = len(rows[0])
    if label_column is not None and not 0 <= label_column < width:
        raise ValidationError(f"label_column {label_column} out of range for width {width}")
    values = []
    labels = [] if label_column is not None else None
    for i, row in enumerate(rows):
        if len(row) != width:
            raise CsvFormatError(f"{path}: ragged row {i} ({len(row)} cells, expected {width})")
        feats = []
        for j, cell in enumerate(row):
            if j == label_column:
                try:
                    labels.append(int(cell))
                except ValueError:
                    raise CsvFormatError(f"{path}: non-integer label {cell!r} at row {i}")
                continue
            try:
                feats.append(float(cell))
            except ValueError:
                raise CsvFormatError(f"{path}: non-numeric cell {cell!r} at row {i} col {j}")
        values.append(feats)
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteValueError(f"{path}: non-finite value")
    lab = None
    class_count = 0
    if labels is not None:
        lab = np.asarray(labels)
        if lab.min() < 0:
            raise LabelRangeError(f"{path}: negative label")
        class_count = int(lab.max()) + 1
    return FeatureDataset(values=arr.astype(np.float32), labels=lab, class_count=class_count,
                          provenance=str(path))


@dataclass(frozen=True)
class SyntheticSpec:
    """Gaussian class blobs with a fraction of injected uniform outliers.

    Outliers replace inliers (n stays fixed) and get a uniformly random
    class label, so class priors stay comparable across contamination
    levels. Output is a pure function of the spec.
    """

    class_count: int
    points_per_class: int
    dim: int = 2
    centers: tuple[tuple[float, ...], ...] | None = None
    center_spread: float = 10.0
    cov_scale: float = 1.0
    contamination: float = 0.0
    outlier_margin: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.class_count < 1 or self.points_per_class < 1 or self.dim < 1:
            raise ValidationError("class_count, points_per_class, dim must be >= 1")
        if not 0.0 <= self.contamination < 1.0:
            raise ValidationError("contamination must lie in [0, 1)")
        if self.centers is not None and len(self.centers) != self.class_count:
            raise ValidationError("centers length must equal class_count")


def make_synthetic(spec: SyntheticSpec) -> tuple[FeatureDataset, np.ndarray]:
    """Returns (dataset, sorted ground-truth outlier indices)."""
    gen = rng.seeded(spec.seed, "synthetic")
    if spec.centers is None:
        centers = gen.uniform(-spec.center_spread, spec.center_spread,
                              size=(spec.class_count, spec.dim))
    else:
        centers = np.asarray(spec.centers, dtype=np.float64)
    n = spec.class_count * spec.points_per_class
    values = np.empty((n, spec.dim), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    for c in range(spec.class_count):
        lo = c * spec.points_per_class
        hi = lo + spec.points_per_class
        values[lo:hi] = centers[c] + spec.cov_scale * gen.standard_normal(
            (spec.points_per_class, spec.dim))
        labels[lo:hi] = c

    k = int(np.floor(n * spec.contamination))
    outliers = np.sort(gen.choice(n, size=k, replace=False)) if k else np.empty(0, dtype=np.int64)
    if k:
        span = values.max(axis=0) - values.min(axis=0)
        lo = values.min(axis=0) - spec.outlier_margin * span
        hi = values.max(axis=0) + spec.outlier_margin * span
        values[outliers] = gen.uniform(lo, hi, size=(k, spec.dim))
        labels[outliers] = gen.integers(0, spec.class_count, size=k)

    ds = FeatureDataset(values=values.astype(np.float32), labels=labels,
                        class_count=spec.class_count,
                        provenance=f"synthetic(seed={spec.seed})")
    return ds, outliers


@dataclass(frozen=True)
class FilterManifest:
    """Audited record of which rows a filtering step kept and removed."""

    source_hash: str
    kept_indices: tuple[int, ...]
    removed_indices: tuple[int, ...]
    method: str
    per_class_params: dict = field(default_factory=dict)
    stage_params: dict = field(default_factory=dict)
    per_class_counts: dict = field(default_factory=dict)
    created_at: str = ""

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValidationError(f"unknown manifest method {self.method!r}")
        kept = np.asarray(self.kept_indices, dtype=np.int64)
        removed = np.asarray(self.removed_indices, dtype=np.int64)
        n = kept.size + removed.size
        both = np.concatenate([kept, removed])
        if len(np.unique(both)) != n or (n and (both.min() != 0 or both.max() != n - 1)):
            raise ValidationError("kept and removed must partition [0, n)")
        if kept.size and np.any(np.diff(kept) <= 0):
            raise ValidationError("kept_indices must be sorted unique")
        if removed.size and np.any(np.diff(removed) <= 0):
            raise ValidationError("removed_indices must be sorted unique")
        if self.method == METHOD_FULL and removed.size:
            raise ValidationError("a full manifest cannot remove rows")
        if not self.created_at:
            object.__setattr__(self, "created_at",
                               datetime.datetime.now(datetime.timezone.utc).isoformat())

    @property
    def n(self) -> int:
        return len(self.kept_indices) + len(self.removed_indices)

    def to_json(self) -> str:
        doc = {
            "source_hash": self.source_hash,
            "kept_indices": list(self.kept_indices),
            "removed_indices": list(self.removed_indices),
            "method": self.method,
            "per_class_params": {str(k): v for k, v in self.per_class_params.items()},
            "stage_params": self.stage_params,
            "per_class_counts": {str(k): v for k, v in self.per_class_counts.items()},
            "created_at": self.created_at,
        }
        return json.dumps(doc, indent=2)

    @staticmethod
    def from_json(text: str) -> "FilterManifest":
        doc = json.loads(text)
        return FilterManifest(
            source_hash=doc["source_hash"],
            kept_indices=tuple(doc["kept_indices"]),
            removed_indices=tuple(doc["removed_indices"]),
            method=doc["method"],
            per_class_params={int(k): v for k, v in doc.get("per_class_params", {}).items()},
            stage_params=doc.get("stage_params", {}),
            per_class_counts={int(k): v for k, v in doc.get("per_class_counts", {}).items()},
            created_at=doc.get("created_at", ""),
        )


def save_manifest(m: FilterManifest, path) -> None:
    with open(path, "w") as fh:
        fh.write(m.to_json())


def load_manifest(path) -> FilterManifest:
    with open(path) as fh:
        return FilterManifest.from_json(fh.read())


def per_class_counts(labels: np.ndarray | None, removed: np.ndarray) -> dict:
    if labels is None:
        return {}
    removed_mask = np.zeros(labels.shape[0], dtype=bool)
    removed_mask[removed] = True
    counts = {}
    for c in np.unique(labels):
        cls = labels == c
        counts[int(c)] = {
            "kept": int(np.count_nonzero(cls & ~removed_mask)),
            "removed": int(np.count_nonzero(cls & removed_mask)),
        }
    return counts


def full_manifest(ds: FeatureDataset) -> FilterManifest:
    return FilterManifest(
        source_hash=dataset_hash(ds),
        kept_indices=tuple(range(ds.n)),
        removed_indices=(),
        method=METHOD_FULL,
        per_class_counts=per_class_counts(ds.labels, np.empty(0, dtype=np.int64)),
    )


def random_filter(ds: FeatureDataset, remove_count: int, seed: int) -> FilterManifest:
    """Matched-size random-removal baseline; uniform without replacement."""
    if not 0 <= remove_count < ds.n:
        raise ValidationError(f"remove_count {remove_count} not in [0, {ds.n})")
    gen = rng.seeded(seed, "random_filter")
    removed = np.sort(gen.choice(ds.n, size=remove_count, replace=False))
    kept = np.setdiff1d(np.arange(ds.n), removed, assume_unique=True)
    return FilterManifest(
        source_hash=dataset_hash(ds),
        kept_indices=tuple(int(i) for i in kept),
        removed_indices=tuple(int(i) for i in removed),
        method=METHOD_RANDOM,
        per_class_counts=per_class_counts(ds.labels, removed),
    )


def apply_manifest(ds: FeatureDataset, m: FilterManifest) -> FeatureDataset:
    actual = dataset_hash(ds)
    if actual != m.source_hash:
        raise HashMismatchError(
            f"manifest was built for {m.source_hash}, dataset hashes to {actual}")
    if m.n != ds.n:
        raise ValidationError(f"manifest covers {m.n} rows, dataset has {ds.n}")
    if not m.kept_indices:
        raise EmptyFilterError("empty filtered dataset")
    return ds.take(np.asarray(m.kept_indices, dtype=np.int64),
                   provenance_note=f" [{m.method}]")
