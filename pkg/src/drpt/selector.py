"""Feature selection by relevance filtering and perturbation of the data matrix.

The pipeline has three parts:

1. Solve ``A x = b`` in the minimum-norm least-squares sense on the
   column-normalized matrix and drop features whose weight ``|x_i|`` falls
   below the mean of the local maxima of ``|x|``.
2. Perturb the reduced matrix by a random ``E`` with
   ``||E||_2 = 10^-s * sigma_min(A)`` and record ``Δx = |x - x̃|``. Columns
   that are independent of the rest barely move; columns tied by a linear
   relation move together.
3. Cluster the sorted, smoothed ``Δx`` into plateaus, split each plateau by
   feature entropy, keep the heaviest feature of every sub-cluster and rank
   the survivors by entropy and weight.
"""

from __future__ import annotations

import json
import logging
import math
import re
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from . import linalg
from .data import Dataset, normalize
from .errors import DrptError, PerturbationError, RankError, ValidationError, ZeroMatrixError
from .smoothing import savgol
from .smoothing import smooth_delta as _smooth_sorted

log = logging.getLogger(__name__)

GENERATOR = "numpy.random.PCG64"
ENTROPY_QUANTUM = 1e-9
WEIGHT_TIE_RTOL = 1e-9


@dataclass(frozen=True)
class DrptConfig:
    """Tunables of the selector.

    ``cluster_epsilon`` is the plateau gap, as a fraction of the Δx range,
    above which a new cluster starts. ``rescale_e_to_spectral`` scales the
    perturbation to the exact spectral-norm target; switching it off
    multiplies the uniform(0, 1) entries by ``10^-s * sigma_min`` instead.
    ``unit_label`` solves against ``b / ||b||`` so that the perturbation
    bound ``||E x̃|| <= 10^-s`` holds in absolute terms.
    """

    s: int = 3
    smooth_window: int = 7
    smooth_order: int = 2
    entropy_bins: int | str = "auto"
    cluster_epsilon: float = 0.2
    seed: int = 0
    k: int = 50
    rescale_e_to_spectral: bool = True
    minmax_scale: bool = False
    unit_label: bool = True

    def __post_init__(self):
        if self.s < 1:
            raise ValidationError(f"s must be >= 1, got {self.s}")
        if self.k < 1:
            raise ValidationError(f"k must be >= 1, got {self.k}")
        if self.smooth_window < 1 or self.smooth_window % 2 == 0:
            raise ValidationError(f"smooth_window must be odd, got {self.smooth_window}")
        if not 0 <= self.smooth_order < self.smooth_window:
            raise ValidationError("smooth_order must be >= 0 and below smooth_window")
        if self.entropy_bins != "auto" and (
            not isinstance(self.entropy_bins, int) or self.entropy_bins < 1
        ):
            raise ValidationError(f"entropy_bins must be 'auto' or a positive int, got {self.entropy_bins!r}")
        if not self.cluster_epsilon >= 0:
            raise ValidationError("cluster_epsilon must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class RelevanceFilterResult:
    kept: tuple[int, ...]
    threshold: float
    weights: np.ndarray
    x: np.ndarray


@dataclass(frozen=True, eq=False)
class PerturbationResult:
    x: np.ndarray
    x_tilde: np.ndarray
    delta_x: np.ndarray
    e_spectral_norm: float
    sigma_min: float


@dataclass(frozen=True)
class SubCluster:
    entropy: float
    members: tuple[int, ...]
    representative: int


@dataclass(frozen=True)
class Cluster:
    members: tuple[int, ...]
    subclusters: tuple[SubCluster, ...]


@dataclass(frozen=True)
class RankedFeature:
    name: str
    index: int
    weight: float
    delta_x: float
    entropy: float
    cluster: int
    subcluster: int
    rank: int
    score: int

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "index": self.index,
            "weight": self.weight,
            "delta_x": self.delta_x,
            "entropy": self.entropy,
            "cluster": self.cluster,
            "subcluster": self.subcluster,
            "rank": self.rank,
        }


@dataclass(frozen=True, eq=False)
class SelectionReport:
    """Outcome of :func:`run_pipeline`.

    Indices in ``ranked``, ``kept`` and ``clusters`` are positions in the
    dataset passed to the pipeline.
    """

    ranked: tuple[RankedFeature, ...]
    config: DrptConfig
    dataset_fingerprint: dict
    threshold: float
    kept: tuple[int, ...] = ()
    clusters: tuple[Cluster, ...] = ()
    relevance: RelevanceFilterResult | None = None
    perturbation: PerturbationResult | None = None
    notices: tuple[str, ...] = ()
    feature_names: tuple[str, ...] = ()
    canonical: tuple[int, ...] = ()
    reduced: tuple[int, ...] = ()

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.ranked]

    @property
    def has_score_ties(self) -> bool:
        scores = [f.score for f in self.ranked]
        return len(set(scores)) != len(scores)

    def weights_by_name(self) -> dict[str, float]:
        """``|x_i|`` of the relevance solve for every input feature."""
        w = self.relevance.weights
        return {self.feature_names[c]: float(w[p]) for p, c in enumerate(self.canonical)}

    def delta_x_by_name(self) -> dict[str, float]:
        """``Δx_i`` for the features that passed the relevance filter."""
        dx = self.perturbation.delta_x
        return {self.feature_names[c]: float(dx[p]) for p, c in enumerate(self.reduced)}

    def cluster_of(self, name: str) -> int | None:
        j = self.feature_names.index(name)
        for ci, c in enumerate(self.clusters):
            if j in c.members:
                return ci
        return None

    def to_dict(self) -> dict:
        return {
            "config": {**self.config.to_dict(), "generator": GENERATOR},
            "dataset_fingerprint": dict(self.dataset_fingerprint),
            "threshold": self.threshold,
            "features": [f.to_dict() for f in self.ranked],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


# ---------------------------------------------------------------------------
# Part 1: relevance
# ---------------------------------------------------------------------------


def local_maxima(values) -> list[int]:
    """Positions whose value is >= each existing neighbour."""
    v = np.asarray(values, dtype=np.float64)
    n = v.size
    if n == 0:
        return []
    left = np.concatenate([[-np.inf], v[:-1]])
    right = np.concatenate([v[1:], [-np.inf]])
    return np.where((v >= left) & (v >= right))[0].tolist()


def relevance_filter(a, b) -> RelevanceFilterResult:
    """Keep the features whose weight reaches the mean of the local maxima of ``|x|``.

    ``x`` is the minimum-norm least-squares solution. A wide matrix must have
    full row rank. Weights at round-off level (``<= max(m, n) * eps *
    max|x|``) count as exact zeros when locating local maxima.
    """
    a = linalg.as_matrix(a)
    m, n = a.shape
    b = linalg.as_vector(b, m, name="label vector")
    dec = linalg.svd(a, full=False)
    info = linalg.rank_info(dec, m, n)
    if m <= n and info.numerical_rank < m:
        raise RankError(
            f"{m}x{n} matrix has row rank {info.numerical_rank} < {m}; "
            "drop duplicate or linearly dependent rows (samples)"
        )
    x = linalg.pinv_apply(a, b, dec)
    weights = np.abs(x)
    top = float(weights.max())
    floored = np.where(weights <= max(m, n) * linalg.EPS * top, 0.0, weights)
    peaks = floored[local_maxima(floored)]
    # clamp: rounding in the mean must not push it past the largest peak
    threshold = min(math.fsum(peaks) / peaks.size, float(peaks.max()))
    kept = tuple(int(i) for i in np.where(floored >= threshold)[0])
    # the global maximum is itself a local maximum, so the mean cannot exceed it
    assert kept, "relevance filter dropped every feature"
    return RelevanceFilterResult(kept=kept, threshold=threshold, weights=weights, x=x)


# ---------------------------------------------------------------------------
# Part 2: perturbation
# ---------------------------------------------------------------------------


def perturbation_matrix(shape: tuple[int, int], sigma_min: float, cfg: DrptConfig) -> np.ndarray:
    rng = np.random.default_rng(cfg.seed)
    e = rng.uniform(0.0, 1.0, size=shape)
    target = 10.0 ** (-cfg.s) * sigma_min
    if cfg.rescale_e_to_spectral:
        return e * (target / linalg.spectral_norm(e))
    return e * target


def perturb_and_diff(a, b, cfg: DrptConfig) -> PerturbationResult:
    """Solve against ``a`` and ``a + E`` and return ``Δx = |x - x̃|``."""
    a = linalg.as_matrix(a)
    m, n = a.shape
    b = linalg.as_vector(b, m, name="label vector")
    dec = linalg.svd(a, full=False)
    info = linalg.rank_info(dec, m, n)
    e = perturbation_matrix((m, n), info.sigma_min_effective, cfg)
    ap = a + e
    dec_p = linalg.svd(ap, full=False)
    try:
        rank_p = linalg.rank_info(dec_p, m, n).numerical_rank
    except ZeroMatrixError:
        rank_p = 0
    if rank_p < info.numerical_rank:
        raise PerturbationError(
            f"rank dropped from {info.numerical_rank} to {rank_p} under "
            f"perturbation with s={cfg.s}; use a larger s"
        )
    x = linalg.pinv_apply(a, b, dec)
    x_tilde = linalg.pinv_apply(ap, b, dec_p)
    return PerturbationResult(
        x=x,
        x_tilde=x_tilde,
        delta_x=np.abs(x - x_tilde),
        e_spectral_norm=linalg.spectral_norm(e),
        sigma_min=info.sigma_min_effective,
    )


def pair_coefficient(pert: PerturbationResult, j: int, k: int) -> float:
    """Coefficient ``c`` of a dependence ``F_j = c F_k`` recovered from the solution shift.

    From ``(x_j - x̃_j) F_j + (x_k - x̃_k) F_k ≈ 0`` it follows that
    ``c = -(x_k - x̃_k) / (x_j - x̃_j)``.
    """
    d = pert.x - pert.x_tilde
    return float(-d[k] / d[j])


# ---------------------------------------------------------------------------
# Part 3: clustering and ranking
# ---------------------------------------------------------------------------


def smooth_delta(delta_sorted, cfg: DrptConfig) -> np.ndarray:
    return _smooth_sorted(delta_sorted, cfg.smooth_window, cfg.smooth_order)


def cluster_delta(smoothed, epsilon: float) -> list[list[int]]:
    """Split an ascending sequence where adjacent gaps exceed ``epsilon * range``.

    The range is measured from ``min(v[0], 0)``: Δx is anchored at zero,
    where independent columns sit, so a sequence made only of near-equal
    values (a lone dependent group) stays one cluster.
    """
    v = np.asarray(smoothed, dtype=np.float64)
    if v.size == 0:
        return []
    span = float(v[-1] - min(float(v[0]), 0.0))
    if span <= 0:
        return [list(range(v.size))]
    clusters = [[0]]
    for i, gap in enumerate(np.diff(v), start=1):
        if gap > epsilon * span:
            clusters.append([])
        clusters[-1].append(i)
    return clusters


def resolve_bins(bins: int | str, m: int) -> int:
    return math.ceil(math.sqrt(m)) if bins == "auto" else int(bins)


def entropy(column, bins: int | str = "auto") -> float:
    """Shannon entropy (nats) of a column discretized into equal-width bins."""
    v = np.asarray(column, dtype=np.float64)
    m = v.size
    nb = resolve_bins(bins, m)
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return 0.0
    idx = np.minimum(np.floor((v - lo) / (hi - lo) * nb).astype(np.int64), nb - 1)
    counts = np.bincount(idx, minlength=nb)
    f = counts[counts > 0] / m
    return float(-math.fsum(f * np.log(f)))


def _pick_heaviest(members: Sequence[int], weights: np.ndarray) -> int:
    w = weights[list(members)]
    top = w.max()
    tied = [i for i, wi in zip(members, w) if wi >= top * (1 - WEIGHT_TIE_RTOL)]
    return min(tied)


def subcluster_and_pick(
    cluster: Sequence[int], a, x, cfg: DrptConfig, entropies: np.ndarray | None = None
) -> list[SubCluster]:
    """Group a Δx cluster by entropy and pick the heaviest member of each group.

    Entropies are compared after rounding to 1e-9; weight ties go to the
    smaller column index. ``cluster`` holds column positions in ``a``.
    """
    a = np.asarray(a, dtype=np.float64)
    weights = np.abs(np.asarray(x, dtype=np.float64))
    if entropies is None:
        h = {i: entropy(a[:, i], cfg.entropy_bins) for i in cluster}
    else:
        h = {i: float(entropies[i]) for i in cluster}
    groups: dict[int, list[int]] = {}
    for i in cluster:
        groups.setdefault(round(h[i] / ENTROPY_QUANTUM), []).append(i)
    out = []
    for key in sorted(groups):
        members = tuple(sorted(groups[key]))
        out.append(
            SubCluster(
                entropy=h[members[0]],
                members=members,
                representative=_pick_heaviest(members, weights),
            )
        )
    return out


@dataclass(frozen=True)
class Ranking:
    order: tuple[int, ...]
    scores: tuple[int, ...]
    truncated: bool


def rank_selected(representatives: Sequence[int], x, entropies, k: int) -> Ranking:
    """Order representatives by the sum of their entropy rank and weight rank.

    Both ranks are descending (1 = highest) with tied values sharing the
    lower rank. Score ties go to the larger weight, then the smaller index.
    Returns at most ``k`` entries; ``truncated`` is set when fewer than ``k``
    representatives exist.
    """
    reps = list(representatives)
    if not reps:
        raise ValidationError("rank_selected needs at least one representative")
    w = np.abs(np.asarray(x, dtype=np.float64))[reps]
    h = np.asarray(entropies, dtype=np.float64)[reps]
    rank_e = rankdata(-np.round(h / ENTROPY_QUANTUM), method="min").astype(int)
    rank_w = rankdata(-w, method="min").astype(int)
    score = rank_e + rank_w
    order = sorted(range(len(reps)), key=lambda i: (score[i], -w[i], reps[i]))
    order = order[:k]
    return Ranking(
        order=tuple(reps[i] for i in order),
        scores=tuple(int(score[i]) for i in order),
        truncated=k > len(reps),
    )


# ---------------------------------------------------------------------------
# End to end
# ---------------------------------------------------------------------------


def natural_key(name: str) -> tuple:
    return tuple((0, int(t)) if t.isdigit() else (1, t) for t in re.split(r"(\d+)", name) if t)


@contextmanager
def _stage(name: str):
    try:
        yield
    except DrptError as exc:
        if exc.stage is None:
            exc.stage = name
        raise


def run_pipeline(d: Dataset, cfg: DrptConfig | None = None) -> SelectionReport:
    """Run the three-part selector on an imputed dataset.

    Features are processed in natural order of their names, so the result
    does not depend on the column order of ``d``; reported indices refer
    back to positions in ``d``.
    """
    cfg = cfg or DrptConfig()
    with _stage("input"):
        if d.has_missing:
            raise ValidationError("dataset has missing values; impute before selection")
        if d.m < 2 or d.n < 1:
            raise ValidationError(f"dataset too small ({d.m}x{d.n})")
    canon = sorted(range(d.n), key=lambda j: (natural_key(d.feature_names[j]), d.feature_names[j]))

    with _stage("normalize"):
        dn, _ = normalize(d.take_features(canon), minmax=cfg.minmax_scale)
        a = dn.a
        b = dn.b
        if cfg.unit_label:
            nb = float(np.linalg.norm(b))
            if nb == 0:
                raise ValidationError("label vector is identically zero")
            b = b / nb

    with _stage("relevance"):
        rel = relevance_filter(a, b)
    kept = list(rel.kept)
    a_red = a[:, kept]

    with _stage("perturbation"):
        pert = perturb_and_diff(a_red, b, cfg)

    with _stage("clustering"):
        first = np.argsort(pert.delta_x, kind="stable")
        smoothed = savgol(pert.delta_x[first], cfg.smooth_window, cfg.smooth_order)
        second = np.argsort(smoothed, kind="stable")
        seq = first[second]
        plateaus = [[int(seq[p]) for p in c] for c in cluster_delta(smoothed[second], cfg.cluster_epsilon)]
        ent = np.array([entropy(a_red[:, j], cfg.entropy_bins) for j in range(a_red.shape[1])])
        subs = [subcluster_and_pick(sorted(c), a_red, pert.x, cfg, ent) for c in plateaus]

    with _stage("ranking"):
        reps = [sc.representative for group in subs for sc in group]
        ranking = rank_selected(reps, pert.x, ent, cfg.k)

    def orig(j: int) -> int:
        return canon[kept[j]]

    where = {}
    for ci, group in enumerate(subs):
        for si, sc in enumerate(group):
            where[sc.representative] = (ci, si)
    ranked = tuple(
        RankedFeature(
            name=d.feature_names[orig(j)],
            index=orig(j),
            weight=float(abs(pert.x[j])),
            delta_x=float(pert.delta_x[j]),
            entropy=float(ent[j]),
            cluster=where[j][0],
            subcluster=where[j][1],
            rank=r + 1,
            score=sc,
        )
        for r, (j, sc) in enumerate(zip(ranking.order, ranking.scores))
    )
    clusters = tuple(
        Cluster(
            members=tuple(sorted(orig(j) for j in c)),
            subclusters=tuple(
                SubCluster(
                    entropy=s.entropy,
                    members=tuple(sorted(orig(j) for j in s.members)),
                    representative=orig(s.representative),
                )
                for s in group
            ),
        )
        for c, group in zip(plateaus, subs)
    )
    notices = ()
    if ranking.truncated:
        msg = f"requested k={cfg.k} but only {len(reps)} sub-clusters survived; returning all"
        log.info(msg)
        notices = (msg,)
    return SelectionReport(
        ranked=ranked,
        config=cfg,
        dataset_fingerprint=d.fingerprint(),
        threshold=rel.threshold,
        kept=tuple(sorted(orig(j) for j in range(len(kept)))),
        clusters=clusters,
        relevance=rel,
        perturbation=pert,
        notices=notices,
        feature_names=d.feature_names,
        canonical=tuple(canon),
        reduced=tuple(orig(j) for j in range(len(kept))),
    )
