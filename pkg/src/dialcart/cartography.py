"""Per-instance informativeness from training dynamics.

For each instance: confidence = mean gold-label probability across
epochs, variability = its population standard deviation, correctness =
fraction of epochs with a correct argmax prediction.  Correctness maps
to a bucket: Easy (>= 0.75), Medium (>= 0.5), Hard (>= 0.25),
Impossible (below); boundary values take the higher bucket.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from collections import Counter

from .classifier import (
    FeatureHasher,
    TrainConfig,
    TrainResult,
    TrainingDynamics,
    featurize_matrix,
    train,
)
from .corpus import LabelScheme, Sentence

EASY = "Easy"
MEDIUM = "Medium"
HARD = "Hard"
IMPOSSIBLE = "Impossible"
BUCKETS = (EASY, MEDIUM, HARD, IMPOSSIBLE)


class CartographyError(ValueError):
    pass


@dataclass(frozen=True)
class DataMapPoint:
    instance_id: str
    confidence: float
    variability: float
    correctness: float
    bucket: str


def confidence(gold_probs: list[float]) -> float:
    """Mean gold-label probability over epochs."""
    if len(gold_probs) == 0:
        raise CartographyError("empty gold-probability sequence")
    return float(sum(gold_probs) / len(gold_probs))


def variability(gold_probs: list[float]) -> float:
    """Population standard deviation of the gold-label probability."""
    if len(gold_probs) == 0:
        raise CartographyError("empty gold-probability sequence")
    mu = sum(gold_probs) / len(gold_probs)
    return math.sqrt(sum((p - mu) ** 2 for p in gold_probs) / len(gold_probs))


def correctness(correct_flags: list[bool]) -> float:
    """Fraction of epochs with a correct prediction."""
    if len(correct_flags) == 0:
        raise CartographyError("empty correctness sequence")
    return sum(bool(f) for f in correct_flags) / len(correct_flags)


def bucket(cor: float) -> str:
    if not 0.0 <= cor <= 1.0:
        raise CartographyError(f"correctness {cor} out of [0, 1]")
    if cor >= 0.75:
        return EASY
    if cor >= 0.5:
        return MEDIUM
    if cor >= 0.25:
        return HARD
    return IMPOSSIBLE


def build_data_map(dynamics: TrainingDynamics, ids: list[str]) -> list[DataMapPoint]:
    """One point per instance, in row order."""
    if len(ids) != dynamics.num_instances:
        raise CartographyError(
            f"{len(ids)} ids do not align with {dynamics.num_instances} dynamics rows"
        )
    points = []
    for row, instance_id in enumerate(ids):
        probs = dynamics.gold_probs[row].tolist()
        flags = dynamics.correct[row].tolist()
        cor = correctness(flags)
        points.append(
            DataMapPoint(
                instance_id=instance_id,
                confidence=confidence(probs),
                variability=variability(probs),
                correctness=cor,
                bucket=bucket(cor),
            )
        )
    return points


def per_label_bucket_distribution(
    points: list[DataMapPoint], labels: dict[str, str]
) -> dict[str, dict[str, float]]:
    """Per-tag normalized histogram over buckets; tags ordered by descending
    frequency among the points."""
    for p in points:
        if p.instance_id not in labels:
            raise CartographyError(f"point {p.instance_id!r} has no label")
    tag_counts = Counter(labels[p.instance_id] for p in points)
    dist: dict[str, dict[str, float]] = {}
    for tag, total in sorted(tag_counts.items(), key=lambda kv: (-kv[1], kv[0])):
        per_bucket = Counter(
            p.bucket for p in points if labels[p.instance_id] == tag
        )
        dist[tag] = {bk: per_bucket.get(bk, 0) / total for bk in BUCKETS}
    return dist


def run_cartography(
    sentences: list[Sentence],
    scheme: LabelScheme,
    hasher: FeatureHasher,
    config: TrainConfig,
) -> tuple[list[DataMapPoint], TrainResult]:
    """Train on the labeled sentences and map every training instance."""
    labeled = [s for s in sentences if s.gold_label is not None]
    if not labeled:
        raise CartographyError("no labeled sentences to map")
    x = featurize_matrix([s.text for s in labeled], hasher)
    y = [scheme.index(s.gold_label) for s in labeled]
    result = train((x, y), config, scheme.num_classes, scheme.version)
    points = build_data_map(result.dynamics, [s.id for s in labeled])
    return points, result
