"""Percept normalization, similarity scoring, and decision-branch selection.

Raw measurements become unit-range percept vectors via per-feature ranges.
Similarity between two percepts maps Euclidean distance into [0, 1], and
`classify` routes a (similarity, coefficient) pair to one of four branches:
reuse the stored action, recompute it, retain the percept as a new case,
or reject it when the store is full.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping


class MissingFeature(Exception):
    pass


class DimensionMismatch(Exception):
    pass


@dataclass(frozen=True)
class FeatureSpec:
    """Ordered (name, min, max) ranges defining percept normalization."""

    features: tuple[tuple[str, float, float], ...]

    def __post_init__(self):
        for name, lo, hi in self.features:
            if not hi > lo:
                raise ValueError(f"feature {name!r}: max must exceed min")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _, _ in self.features)


@dataclass(frozen=True, slots=True)
class PerceptVector:
    """Normalized observation: unit-range components plus step/node tags."""

    values: tuple[float, ...]
    t: int = 0
    node: int = 0


class Outcome(Enum):
    REUSE = "reuse"
    RECOMPUTE = "recompute"
    RETAIN_NEW = "retain"
    REJECT = "reject"


def normalize(raw: Mapping[str, float], spec: FeatureSpec, *,
              t: int = 0, node: int = 0) -> PerceptVector:
    """Scale raw measurements into [0, 1] per the feature spec.

    Values outside the configured range clamp rather than error, since live
    measurements may drift past the ranges chosen at scenario setup.
    """
    values = []
    for name, lo, hi in spec.features:
        if name not in raw:
            raise MissingFeature(name)
        x = (raw[name] - lo) / (hi - lo)
        values.append(min(1.0, max(0.0, x)))
    return PerceptVector(values=tuple(values), t=t, node=node)


def similarity(p: PerceptVector, q: PerceptVector) -> float:
    """Similarity in [0, 1]: 1 - d/d_max with d Euclidean, d_max = sqrt(k).

    Identical percepts score 1; opposite corners of the unit cube score 0.
    """
    if len(p.values) != len(q.values):
        raise DimensionMismatch(f"{len(p.values)} vs {len(q.values)}")
    dist = math.dist(p.values, q.values)
    return 1.0 - dist / math.sqrt(len(p.values))


def classify(score: float, coefficient: float, score_threshold: float,
             coefficient_threshold: float, kb_full: bool) -> Outcome:
    """Pick the decision branch for a retrieved case.

    High similarity reuses a proven action or recomputes a poor one; low
    similarity retains the percept as a new case unless the store is full.
    """
    if score >= score_threshold:
        if coefficient >= coefficient_threshold:
            return Outcome.REUSE
        return Outcome.RECOMPUTE
    if kb_full:
        return Outcome.REJECT
    return Outcome.RETAIN_NEW
