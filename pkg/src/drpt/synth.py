"""Synthetic datasets with planted linear structure."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .data import Dataset, binarize_median
from .errors import ValidationError

GENERATOR = "numpy.random.PCG64"


def paper_synthetic(seed: int = 0) -> Dataset:
    """100 samples x 22 features with two planted dependences.

    F1..F20 are uniform on (-1, 1); F21 = 2 F18 + 4 F19, F22 = 3 F20 and the
    continuous target is b = 3 F19 + 5 F17 + 2 F20 (1-based names). Class
    codes come from a median split of b.
    """
    rng = np.random.default_rng(seed)
    f = rng.uniform(-1.0, 1.0, size=(100, 20))
    f21 = 2.0 * f[:, 17] + 4.0 * f[:, 18]
    f22 = 3.0 * f[:, 19]
    a = np.column_stack([f, f21, f22])
    b = 3.0 * f[:, 18] + 5.0 * f[:, 16] + 2.0 * f[:, 19]
    names = tuple(f"F{i}" for i in range(1, 23))
    return binarize_median(Dataset(a=a, b=b, feature_names=names))


@dataclass(frozen=True)
class PlantedSpec:
    """Recipe for :func:`planted`.

    Columns ``0..n_independent-1`` are drawn uniformly from ``value_range``.
    Each dependency ``(target, {source: coef})`` defines column ``target`` as
    an exact linear combination; targets must be exactly
    ``n_independent..n_independent+len(dependencies)-1`` and sources must be
    columns with a smaller index. ``label`` maps column index to coefficient.
    Indices are zero-based.
    """

    m: int
    n_independent: int
    dependencies: tuple[tuple[int, Mapping[int, float]], ...] = ()
    label: Mapping[int, float] = field(default_factory=dict)
    value_range: tuple[float, float] = (-1.0, 1.0)
    seed: int = 0

    @property
    def n(self) -> int:
        return self.n_independent + len(self.dependencies)

    def validate(self) -> None:
        if self.m < 1 or self.n_independent < 1:
            raise ValidationError("m and n_independent must be positive")
        lo, hi = self.value_range
        if not lo < hi:
            raise ValidationError(f"value_range must satisfy low < high, got {self.value_range}")
        targets = [t for t, _ in self.dependencies]
        if len(set(targets)) != len(targets):
            raise ValidationError("dependency targets must be distinct")
        if sorted(targets) != list(range(self.n_independent, self.n)):
            raise ValidationError(
                f"dependency targets must be columns {self.n_independent}..{self.n - 1}"
            )
        for t, combo in self.dependencies:
            if not combo:
                raise ValidationError(f"dependency for column {t} has no sources")
            for src in combo:
                if not 0 <= src < t:
                    raise ValidationError(f"dependency {t} references invalid source column {src}")
        if not self.label:
            raise ValidationError("label combination is empty")
        for c in self.label:
            if not 0 <= c < self.n:
                raise ValidationError(f"label references column {c} outside 0..{self.n - 1}")

    @classmethod
    def from_dict(cls, obj: dict) -> "PlantedSpec":
        """Build from the JSON sidecar layout.

        ``{"m": 100, "n_independent": 10, "dependencies": [{"target": 10,
        "sources": {"0": 2.0}}], "label": {"0": 1.0}, "value_range": [-1, 1],
        "seed": 0}``
        """
        try:
            deps = tuple(
                (int(d["target"]), {int(k): float(v) for k, v in d["sources"].items()})
                for d in obj.get("dependencies", [])
            )
            spec = cls(
                m=int(obj["m"]),
                n_independent=int(obj["n_independent"]),
                dependencies=deps,
                label={int(k): float(v) for k, v in obj["label"].items()},
                value_range=tuple(float(v) for v in obj.get("value_range", (-1.0, 1.0))),
                seed=int(obj.get("seed", 0)),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ValidationError(f"malformed planted dataset recipe: {exc}") from exc
        spec.validate()
        return spec


def planted(spec: PlantedSpec) -> Dataset:
    """Generate the dataset described by ``spec``; deterministic in ``spec.seed``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.value_range
    a = np.empty((spec.m, spec.n))
    a[:, : spec.n_independent] = rng.uniform(lo, hi, size=(spec.m, spec.n_independent))
    for t, combo in sorted(spec.dependencies, key=lambda d: d[0]):
        a[:, t] = sum(coef * a[:, src] for src, coef in sorted(combo.items()))
    b = sum(coef * a[:, c] for c, coef in sorted(spec.label.items()))
    names = tuple(f"F{i + 1}" for i in range(spec.n))
    return binarize_median(Dataset(a=a, b=np.asarray(b, dtype=np.float64), feature_names=names))
