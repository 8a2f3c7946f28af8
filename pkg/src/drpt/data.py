"""Datasets: CSV ingestion, imputation, normalization, splitting, permutations."""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DataFormatError,
    ImputationError,
    StratificationError,
    ValidationError,
)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix ``a`` (samples x features) with a label vector ``b``.

    ``b`` is the right-hand side the selector solves against. For categorical
    labels it holds the class codes ``0..C-1`` and ``y`` equals it; for a
    continuous target (the synthetic generators) ``b`` is real-valued and
    ``y`` holds class codes derived from it for classifiers and stratification.
    ``a`` may contain NaN until :func:`knn_impute` has run.
    """

    a: np.ndarray
    b: np.ndarray
    feature_names: tuple[str, ...]
    class_labels: tuple | None = None
    y: np.ndarray | None = field(default=None)

    def __post_init__(self):
        a = np.asarray(self.a, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if a.ndim != 2:
            raise ValidationError(f"feature matrix must be 2-D, got shape {a.shape}")
        if b.shape != (a.shape[0],):
            raise ValidationError(f"label vector length {b.shape} does not match {a.shape[0]} rows")
        if len(self.feature_names) != a.shape[1]:
            raise ValidationError(
                f"{len(self.feature_names)} feature names for {a.shape[1]} columns"
            )
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValidationError("feature names must be unique")
        y = self.y
        if y is None and self.class_labels is not None:
            y = b.astype(np.int64)
        if y is not None:
            y = np.asarray(y, dtype=np.int64)
            if y.shape != b.shape:
                raise ValidationError("class code vector does not match label vector")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "feature_names", tuple(str(s) for s in self.feature_names))
        object.__setattr__(self, "y", y)

    @property
    def m(self) -> int:
        return self.a.shape[0]

    @property
    def n(self) -> int:
        return self.a.shape[1]

    @property
    def has_missing(self) -> bool:
        return bool(np.isnan(self.a).any())

    @property
    def labels(self) -> np.ndarray:
        """Integer class codes; raises for a purely continuous target."""
        if self.y is None:
            raise ValidationError("dataset has a continuous target and no class codes")
        return self.y

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        same_y = (self.y is None and other.y is None) or (
            self.y is not None and other.y is not None and np.array_equal(self.y, other.y)
        )
        return (
            self.feature_names == other.feature_names
            and self.class_labels == other.class_labels
            and np.array_equal(self.a, other.a, equal_nan=True)
            and np.array_equal(self.b, other.b)
            and same_y
        )

    __hash__ = None

    def take_rows(self, rows: Sequence[int]) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return replace(
            self, a=self.a[rows], b=self.b[rows], y=None if self.y is None else self.y[rows]
        )

    def take_features(self, cols: Sequence[int]) -> "Dataset":
        cols = np.asarray(cols, dtype=np.int64)
        return replace(
            self, a=self.a[:, cols], feature_names=tuple(self.feature_names[c] for c in cols)
        )

    def fingerprint(self) -> dict:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.a).tobytes())
        h.update(np.ascontiguousarray(self.b).tobytes())
        h.update("\x1f".join(self.feature_names).encode())
        return {"rows": self.m, "cols": self.n, "sha256": h.hexdigest()}


def binarize_median(d: Dataset) -> Dataset:
    """Attach class codes ``y = [b > median(b)]`` to a continuous-target dataset."""
    y = (d.b > np.median(d.b)).astype(np.int64)
    return replace(d, y=y, class_labels=(0, 1) if d.class_labels is None else d.class_labels)


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def _resolve_label(label_column, header: list[str] | None, ncols: int) -> int:
    if isinstance(label_column, (int, np.integer)) and not isinstance(label_column, bool):
        idx = int(label_column)
    elif isinstance(label_column, str) and label_column == "last":
        idx = ncols - 1
    elif isinstance(label_column, str) and label_column.lstrip("-").isdigit() and (
        header is None or label_column not in header
    ):
        idx = int(label_column)
    elif isinstance(label_column, str):
        if header is None or label_column not in header:
            raise DataFormatError(f"label column {label_column!r} not found in header")
        idx = header.index(label_column)
    else:
        raise DataFormatError(f"unsupported label column selector {label_column!r}")
    if idx < 0:
        idx += ncols
    if not 0 <= idx < ncols:
        raise DataFormatError(f"label column index {label_column} out of range for {ncols} columns")
    return idx


def load_csv(
    path,
    label_column="last",
    has_header: bool = True,
    continuous_label: bool = False,
) -> Dataset:
    """Read a rectangular CSV file into a :class:`Dataset`.

    Empty feature cells become NaN (missing, pending imputation). Labels are
    re-coded to ``0..C-1`` in order of first appearance unless
    ``continuous_label`` is set, in which case they are parsed as numbers and
    class codes come from a median split.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [(i + 1, r) for i, r in enumerate(csv.reader(fh)) if r]
    if not rows:
        raise DataFormatError(f"{path}: no data")
    header = None
    if has_header:
        header = [h.strip() for h in rows[0][1]]
        rows = rows[1:]
    if not rows:
        raise DataFormatError(f"{path}: header but no data rows")
    ncols = len(header) if header is not None else len(rows[0][1])
    for line, r in rows:
        if len(r) != ncols:
            raise DataFormatError(f"{path}: line {line} has {len(r)} fields, expected {ncols}")
    if ncols < 2:
        raise DataFormatError(f"{path}: need at least one feature column and a label column")
    li = _resolve_label(label_column, header, ncols)
    feat_cols = [j for j in range(ncols) if j != li]
    names = [header[j] for j in feat_cols] if header is not None else [f"f{j}" for j in feat_cols]
    if len(set(names)) != len(names):
        raise DataFormatError(f"{path}: duplicate feature names in header")

    a = np.empty((len(rows), len(feat_cols)))
    raw_labels = []
    for i, (line, r) in enumerate(rows):
        for jj, j in enumerate(feat_cols):
            cell = r[j].strip()
            if cell == "":
                a[i, jj] = np.nan
                continue
            try:
                v = float(cell)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise DataFormatError(
                    f"{path}: non-numeric value {cell!r} at line {line}, column {j + 1}"
                )
            a[i, jj] = v
        lab = r[li].strip()
        if lab == "":
            raise DataFormatError(f"{path}: missing label at line {line}")
        raw_labels.append(lab)

    if continuous_label:
        try:
            b = np.array([float(v) for v in raw_labels])
        except ValueError as exc:
            raise DataFormatError(f"{path}: non-numeric label with continuous_label set") from exc
        return binarize_median(Dataset(a=a, b=b, feature_names=tuple(names)))

    codes: dict[str, int] = {}
    b = np.array([codes.setdefault(v, len(codes)) for v in raw_labels], dtype=np.float64)
    return Dataset(a=a, b=b, feature_names=tuple(names), class_labels=tuple(codes))


def write_csv(d: Dataset, path, label_name: str = "b") -> None:
    """Write ``d`` as CSV with a header; the label goes in the last column."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(d.feature_names) + [label_name])
        for row, lab in zip(d.a, d.b):
            w.writerow([repr(float(v)) for v in row] + [repr(float(lab))])


# ---------------------------------------------------------------------------
# Imputation
# ---------------------------------------------------------------------------


def nan_distance(u: np.ndarray, v: np.ndarray) -> float:
    """RMS difference over coordinates observed in both vectors (inf if none)."""
    shared = ~(np.isnan(u) | np.isnan(v))
    cnt = int(shared.sum())
    if cnt == 0:
        return math.inf
    diff = u[shared] - v[shared]
    return math.sqrt(float(diff @ diff) / cnt)


def knn_impute(d: Dataset, k: int = 5) -> Dataset:
    """Replace each missing cell with the mean of its column over the k nearest rows.

    Distances use only coordinates observed in both rows and are scaled by
    the shared-coordinate count, so rows with many holes are not favoured.
    Candidates are the rows that observe the column being filled; distance
    ties go to the lower row index. All distances are taken on the original
    incomplete matrix.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    a = d.a
    miss = np.isnan(a)
    if not miss.any():
        return d
    empty = np.where(miss.all(axis=0))[0]
    if empty.size:
        raise ImputationError(
            f"column(s) {[d.feature_names[j] for j in empty]} are entirely missing"
        )
    out = a.copy()
    obs = ~miss
    for i in np.where(miss.any(axis=1))[0]:
        shared = obs & obs[i]
        cnt = shared.sum(axis=1)
        diff = np.where(shared, a - np.where(obs[i], a[i], 0.0), 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            dist = np.sqrt((diff * diff).sum(axis=1) / cnt)
        dist[cnt == 0] = np.inf
        dist[i] = np.inf
        for j in np.where(miss[i])[0]:
            cand = np.where(obs[:, j] & np.isfinite(dist))[0]
            if cand.size < k:
                raise ImputationError(
                    f"row {i}, column {d.feature_names[j]!r}: only {cand.size} donor rows, need {k}"
                )
            order = cand[np.argsort(dist[cand], kind="stable")[:k]]
            out[i, j] = math.fsum(a[np.sort(order), j]) / k
    return replace(d, a=out)


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NormalizationRecord:
    """Exact per-feature values applied by :func:`normalize`.

    ``mins``/``maxs`` are ``None`` when the min-max stage is disabled;
    ``norms`` is ``None`` when the unit-norm stage is disabled. ``norms``
    holds the 2-norm measured after the min-max stage, i.e. the divisor
    actually used.
    """

    mins: np.ndarray | None
    maxs: np.ndarray | None
    norms: np.ndarray | None
    constant: np.ndarray

    def apply(self, a: np.ndarray) -> np.ndarray:
        out = np.array(a, dtype=np.float64, copy=True)
        if self.mins is not None:
            span = np.where(self.constant, 1.0, self.maxs - self.mins)
            out = (out - self.mins) / span
        out[:, self.constant] = 0.0
        if self.norms is not None:
            out = out / np.where(self.norms > 0, self.norms, 1.0)
        return out


def normalize(d: Dataset, minmax: bool = False, unit: bool = True) -> tuple[Dataset, NormalizationRecord]:
    """Scale features; optionally min-max to [0, 1] first, then to unit 2-norm.

    Constant columns become zero columns and are flagged in the record.
    """
    if d.has_missing:
        raise ValidationError("normalize requires a dataset without missing values")
    a = d.a
    mins = a.min(axis=0)
    maxs = a.max(axis=0)
    constant = maxs == mins
    rec = NormalizationRecord(
        mins=mins if minmax else None,
        maxs=maxs if minmax else None,
        norms=None,
        constant=constant,
    )
    if unit:
        stage1 = rec.apply(a)
        rec = replace(rec, norms=np.linalg.norm(stage1, axis=0))
    return replace(d, a=rec.apply(a)), rec


# ---------------------------------------------------------------------------
# Splitting and permutations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitPlan:
    train_rows: tuple[int, ...]
    test_rows: tuple[int, ...]
    seed: int
    train_fraction: float

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "train_fraction": self.train_fraction,
            "train_rows": list(self.train_rows),
            "test_rows": list(self.test_rows),
        }


def stratified_split(d: Dataset, train_fraction: float = 0.7, seed: int = 0) -> SplitPlan:
    """Per-class seeded shuffle, then the first ``round(f * n_c)`` rows train.

    Halves round toward the training side.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValidationError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    y = d.labels
    rng = np.random.default_rng(seed)
    train, test = [], []
    for c in np.unique(y):
        rows = np.where(y == c)[0]
        if rows.size < 2:
            raise StratificationError(f"class {int(c)} has a single member; cannot stratify")
        rows = rng.permutation(rows)
        n_train = int(math.floor(train_fraction * rows.size + 0.5))
        train.extend(rows[:n_train].tolist())
        test.extend(rows[n_train:].tolist())
    return SplitPlan(
        train_rows=tuple(sorted(train)),
        test_rows=tuple(sorted(test)),
        seed=seed,
        train_fraction=train_fraction,
    )


def _check_perm(perm, size: int, what: str) -> np.ndarray:
    p = np.asarray(perm)
    if p.ndim != 1 or p.shape[0] != size or not np.issubdtype(p.dtype, np.integer):
        raise ValidationError(f"{what} permutation must be {size} integers")
    if not np.array_equal(np.sort(p), np.arange(size)):
        raise ValidationError(f"{what} permutation is not a permutation of 0..{size - 1}")
    return p


def permute_rows(d: Dataset, perm) -> Dataset:
    """Row ``i`` of the result is row ``perm[i]`` of ``d``; labels follow."""
    return d.take_rows(_check_perm(perm, d.m, "row"))


def permute_cols(d: Dataset, perm) -> Dataset:
    """Feature ``j`` of the result is feature ``perm[j]`` of ``d``; names follow."""
    return d.take_features(_check_perm(perm, d.n, "column"))
