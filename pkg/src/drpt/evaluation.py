"""Prefix-accuracy evaluation and stability statistics with simple classifiers."""

from __future__ import annotations

import itertools
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import Dataset, SplitPlan, permute_rows, stratified_split
from .errors import ValidationError
from .selector import DrptConfig, SelectionReport, run_pipeline


def _check_aligned(train: Dataset, test: Dataset) -> None:
    if train.m == 0:
        raise ValidationError("training set is empty")
    if train.n != test.n:
        raise ValidationError(f"train has {train.n} features, test has {test.n}")


def _sq_distances(test_a: np.ndarray, train_a: np.ndarray) -> np.ndarray:
    diff = test_a[:, None, :] - train_a[None, :, :]
    return (diff * diff).sum(axis=2)


def knn_classify(train: Dataset, test: Dataset, k_neighbors: int = 5) -> np.ndarray:
    """Majority vote of the ``k_neighbors`` nearest training rows (Euclidean).

    Equal distances favour the lower training-row index; tied votes favour
    the smaller class code.
    """
    _check_aligned(train, test)
    if not 1 <= k_neighbors <= train.m:
        raise ValidationError(f"k_neighbors={k_neighbors} must lie in 1..{train.m}")
    y = train.labels
    n_classes = int(y.max()) + 1
    dist = _sq_distances(test.a, train.a)
    nearest = np.argsort(dist, axis=1, kind="stable")[:, :k_neighbors]
    votes = np.zeros((test.m, n_classes), dtype=np.int64)
    for col in nearest.T:
        np.add.at(votes, (np.arange(test.m), y[col]), 1)
    return votes.argmax(axis=1)


def nearest_centroid_classify(train: Dataset, test: Dataset) -> np.ndarray:
    """Assign each test row to the class with the closest training centroid."""
    _check_aligned(train, test)
    y = train.labels
    classes = np.unique(y)
    centroids = np.stack([train.a[y == c].mean(axis=0) for c in classes])
    return classes[_sq_distances(test.a, centroids).argmin(axis=1)]


def _classifier(name_or_fn, knn_k: int) -> tuple[str, Callable[[Dataset, Dataset], np.ndarray]]:
    if callable(name_or_fn):
        return getattr(name_or_fn, "__name__", "custom"), name_or_fn
    if name_or_fn == "knn":
        return "knn", lambda tr, te: knn_classify(tr, te, knn_k)
    if name_or_fn == "centroid":
        return "centroid", nearest_centroid_classify
    raise ValidationError(f"unknown classifier {name_or_fn!r}; expected 'knn' or 'centroid'")


@dataclass(frozen=True)
class EvalResult:
    curve: tuple[float, ...]
    best_t: int
    best_accuracy: float
    classifier: str
    split_seed: int
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "classifier": self.classifier,
            "split_seed": self.split_seed,
            "curve": list(self.curve),
            "best_t": self.best_t,
            "best_accuracy": self.best_accuracy,
            "warnings": list(self.warnings),
        }


def prefix_accuracy(
    d: Dataset,
    report: SelectionReport,
    split: SplitPlan,
    classifier="knn",
    k: int = 50,
    knn_k: int = 5,
) -> EvalResult:
    """Accuracy on the test rows using the first t ranked features, t = 1..k.

    Features are looked up in ``d`` by name.
    """
    name, clf = _classifier(classifier, knn_k)
    pos = {f: j for j, f in enumerate(d.feature_names)}
    missing = [f for f in report.names if f not in pos]
    if missing:
        raise ValidationError(f"report features not in dataset: {missing}")
    if not report.ranked:
        raise ValidationError("report selects no features")
    cols = [pos[f] for f in report.names]
    train = d.take_rows(split.train_rows)
    test = d.take_rows(split.test_rows)
    if test.m == 0:
        raise ValidationError("split has no test rows")
    warnings = []
    absent = sorted(set(np.unique(train.labels).tolist()) - set(np.unique(test.labels).tolist()))
    if absent:
        warnings.append(f"classes {absent} have no test rows; accuracy is over the rows present")
    curve = []
    for t in range(1, min(k, len(cols)) + 1):
        pred = clf(train.take_features(cols[:t]), test.take_features(cols[:t]))
        curve.append(float(np.mean(pred == test.labels)))
    best = max(curve)
    return EvalResult(
        curve=tuple(curve),
        best_t=curve.index(best) + 1,
        best_accuracy=best,
        classifier=name,
        split_seed=split.seed,
        warnings=tuple(warnings),
    )


@dataclass(frozen=True)
class RunRecord:
    run: int
    shuffle_seed: tuple[int, int]
    selected: tuple[str, ...]
    best_t: int
    best_accuracy: float

    def to_dict(self) -> dict:
        return {
            "run": self.run,
            "shuffle_seed": list(self.shuffle_seed),
            "selected": list(self.selected),
            "n_selected": len(self.selected),
            "best_t": self.best_t,
            "best_accuracy": self.best_accuracy,
        }


@dataclass(frozen=True)
class StabilityResult:
    runs: int
    mean_size: float
    sd_size: float
    mean_accuracy: float
    sd_accuracy: float
    mean_jaccard: float
    records: tuple[RunRecord, ...] = ()

    def to_dict(self) -> dict:
        return {
            "runs": self.runs,
            "mean_size": self.mean_size,
            "sd_size": self.sd_size,
            "mean_accuracy": self.mean_accuracy,
            "sd_accuracy": self.sd_accuracy,
            "mean_jaccard": self.mean_jaccard,
            "records": [r.to_dict() for r in self.records],
        }


def jaccard(a, b) -> float:
    a, b = set(a), set(b)
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def summarize_runs(records) -> StabilityResult:
    """Aggregate run records; sample SDs (ddof=1), mean pairwise Jaccard."""
    recs = tuple(sorted(records, key=lambda r: r.run))
    if len(recs) < 2:
        raise ValidationError("stability statistics need at least 2 runs")
    sizes = [float(len(r.selected)) for r in recs]
    accs = [r.best_accuracy for r in recs]
    pairs = [jaccard(p.selected, q.selected) for p, q in itertools.combinations(recs, 2)]
    return StabilityResult(
        runs=len(recs),
        mean_size=statistics.fmean(sizes),
        sd_size=statistics.stdev(sizes),
        mean_accuracy=statistics.fmean(accs),
        sd_accuracy=statistics.stdev(accs),
        mean_jaccard=statistics.fmean(pairs),
        records=recs,
    )


def _one_run(d, cfg, run, classifier, knn_k, train_fraction) -> RunRecord:
    seed = (cfg.seed, run)
    perm = np.random.default_rng(list(seed)).permutation(d.m)
    shuffled = permute_rows(d, perm)
    split = stratified_split(shuffled, train_fraction, seed=cfg.seed)
    report = run_pipeline(shuffled.take_rows(split.train_rows), cfg)
    ev = prefix_accuracy(shuffled, report, split, classifier, cfg.k, knn_k)
    return RunRecord(
        run=run,
        shuffle_seed=seed,
        selected=tuple(report.names),
        best_t=ev.best_t,
        best_accuracy=ev.best_accuracy,
    )


def stability_study(
    d: Dataset,
    cfg: DrptConfig | None = None,
    runs: int = 10,
    classifier="knn",
    knn_k: int = 5,
    train_fraction: float = 0.7,
    max_workers: int | None = None,
) -> StabilityResult:
    """Repeat selection and evaluation over independently row-shuffled copies.

    Run ``r`` shuffles rows with a generator seeded by ``(cfg.seed, r)``,
    splits the shuffled data with ``cfg.seed``, selects on the training rows
    and scores the prefix curve on the test rows. Runs are independent and
    may execute on ``max_workers`` threads; results do not depend on it.
    """
    cfg = cfg or DrptConfig()
    if runs < 2:
        raise ValidationError(f"runs must be >= 2, got {runs}")
    args = [(d, cfg, r, classifier, knn_k, train_fraction) for r in range(runs)]
    if max_workers and max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            records = list(pool.map(lambda a: _one_run(*a), args))
    else:
        records = [_one_run(*a) for a in args]
    return summarize_runs(records)
