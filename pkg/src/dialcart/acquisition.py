"""Batch acquisition strategies over an unlabeled pool.

Strategies: "random", "entropy" (maximum predictive entropy),
"least_confidence" (1 - max class probability), and "coremse"
(ensemble-variance uncertainty followed by greedy k-center diversity
over the most uncertain candidates).

All selections are deterministic: ties break by ascending instance id.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STRATEGIES = ("random", "entropy", "least_confidence", "coremse")


class AcquisitionError(ValueError):
    pass


@dataclass(frozen=True)
class Candidate:
    """Unlabeled instance as seen by a strategy: no gold label in sight."""

    id: str
    predictive_dist: np.ndarray  # (C,)
    features: np.ndarray  # dense feature vector
    ensemble_dists: np.ndarray | None = None  # (K, C)


@dataclass(frozen=True)
class StrategyConfig:
    kind: str = "random"
    batch_size: int = 50
    candidate_cap: int | None = None  # coremse only; defaults to 10 * batch_size
    ensemble_size: int = 5  # coremse only
    seed: int = 0

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise AcquisitionError(
                f"unknown strategy {self.kind!r}; expected one of {STRATEGIES}"
            )
        if self.batch_size < 1:
            raise AcquisitionError("batch_size must be positive")
        if self.ensemble_size < 1:
            raise AcquisitionError("ensemble_size must be positive")

    @property
    def cap(self) -> int:
        return self.candidate_cap if self.candidate_cap is not None else 10 * self.batch_size

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "batch_size": self.batch_size,
            "candidate_cap": self.candidate_cap,
            "ensemble_size": self.ensemble_size,
            "seed": self.seed,
        }


def _check_dist(dist: np.ndarray) -> np.ndarray:
    dist = np.asarray(dist, dtype=float)
    if dist.ndim != 1 or dist.size == 0:
        raise AcquisitionError("distribution must be a non-empty 1-d array")
    if np.any(dist < 0) or not np.isfinite(dist).all():
        raise AcquisitionError("distribution has negative or non-finite entries")
    if abs(dist.sum() - 1.0) > 1e-6:
        raise AcquisitionError(f"distribution sums to {dist.sum()}, not 1")
    return dist


def random_select(pool_ids: list[str], batch_size: int, seed: int) -> list[str]:
    """Uniform sample without replacement, deterministic per seed."""
    if batch_size > len(pool_ids):
        raise AcquisitionError(
            f"batch_size {batch_size} exceeds pool size {len(pool_ids)}"
        )
    rng = np.random.default_rng(seed)
    order = sorted(pool_ids)
    picks = rng.choice(len(order), size=batch_size, replace=False)
    return [order[i] for i in picks]


def entropy_score(dist: np.ndarray) -> float:
    """Shannon entropy in nats, with 0 * ln 0 = 0."""
    dist = _check_dist(dist)
    nz = dist[dist > 0]
    return float(-(nz * np.log(nz)).sum())


def least_confidence_score(dist: np.ndarray) -> float:
    """1 - max class probability; higher means more uncertain."""
    dist = _check_dist(dist)
    return float(1.0 - dist.max())


def top_b_by_score(
    candidates: list[Candidate], score_fn, batch_size: int
) -> list[str]:
    """Ids of the ``batch_size`` highest-scoring candidates, ties by
    ascending id; ordered by (descending score, ascending id)."""
    if batch_size > len(candidates):
        raise AcquisitionError(
            f"batch_size {batch_size} exceeds candidate count {len(candidates)}"
        )
    scored = sorted(
        ((score_fn(c.predictive_dist), c.id) for c in candidates),
        key=lambda t: (-t[0], t[1]),
    )
    return [cid for _, cid in scored[:batch_size]]


def coremse_uncertainty(ensemble_dists: np.ndarray) -> float:
    """Total ensemble variance of class probabilities: the estimable part of
    the expected squared-error reduction from labeling the instance."""
    arr = np.asarray(ensemble_dists, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1:
        raise AcquisitionError("ensemble must be a (K, C) array with K >= 1")
    for row in arr:
        _check_dist(row)
    mean = arr.mean(axis=0)
    return float(((arr - mean) ** 2).mean(axis=0).sum())


def farthest_first(
    features: dict[str, np.ndarray],
    pre_selected: set[str],
    batch_size: int,
    scores: dict[str, float] | None = None,
) -> list[str]:
    """Greedy max-min Euclidean selection (k-center).

    The first pick is the highest-scoring candidate when ``scores`` are
    supplied and nothing is pre-selected; with pre-selected anchors every
    pick maximizes distance to the nearest already-chosen point; otherwise
    the lowest id starts.  Distance ties break by descending score (when
    supplied) and then by ascending id.
    """
    ids = sorted(set(features) - set(pre_selected))
    if batch_size > len(ids):
        raise AcquisitionError(
            f"batch_size {batch_size} exceeds candidate count {len(ids)}"
        )
    mat = np.stack([np.asarray(features[i], dtype=float) for i in ids])
    score_arr = None if scores is None else np.array([scores[i] for i in ids])
    min_dist = np.full(len(ids), np.inf)
    for anchor in sorted(pre_selected):
        d = np.linalg.norm(mat - np.asarray(features[anchor], dtype=float), axis=1)
        min_dist = np.minimum(min_dist, d)
    selected: list[str] = []
    available = np.ones(len(ids), dtype=bool)
    for pick_no in range(batch_size):
        if pick_no == 0 and not pre_selected:
            if score_arr is not None:
                best = _best_index(score_arr, available, None)
            else:
                best = int(np.flatnonzero(available)[0])  # ids sorted -> lowest id
        else:
            best = _best_index(min_dist, available, score_arr)
        selected.append(ids[best])
        available[best] = False
        d = np.linalg.norm(mat - mat[best], axis=1)
        min_dist = np.minimum(min_dist, d)
    return selected


def _best_index(
    values: np.ndarray, available: np.ndarray, tiebreak: np.ndarray | None
) -> int:
    """First maximal index among available entries, optionally resolving value
    ties by a secondary score; ids are sorted ascending, so the first
    remaining index is the lowest id."""
    vals = np.where(available, values, -np.inf)
    tied = np.flatnonzero(vals == vals.max())
    if tiebreak is not None and len(tied) > 1:
        sub = tiebreak[tied]
        tied = tied[sub == sub.max()]
    return int(tied[0])


def coremse_select(candidates: list[Candidate], config: StrategyConfig) -> list[str]:
    """Two stages: keep the top-``cap`` candidates by ensemble-variance
    uncertainty, then pick a diverse batch by farthest-first traversal
    seeded at the most uncertain member."""
    if config.batch_size > len(candidates):
        raise AcquisitionError(
            f"batch_size {config.batch_size} exceeds candidate count {len(candidates)}"
        )
    for c in candidates:
        if c.ensemble_dists is None:
            raise AcquisitionError(f"candidate {c.id} is missing ensemble distributions")
    uncertainty = {c.id: coremse_uncertainty(c.ensemble_dists) for c in candidates}
    keep_n = min(config.cap, len(candidates))
    kept_ids = [
        cid
        for _, cid in sorted(
            ((uncertainty[c.id], c.id) for c in candidates), key=lambda t: (-t[0], t[1])
        )[:keep_n]
    ]
    kept = set(kept_ids)
    features = {c.id: c.features for c in candidates if c.id in kept}
    return farthest_first(
        features,
        pre_selected=set(),
        batch_size=config.batch_size,
        scores={cid: uncertainty[cid] for cid in kept_ids},
    )


def select_batch(
    candidates: list[Candidate], config: StrategyConfig, seed: int | None = None
) -> list[str]:
    """Dispatch to the configured strategy; returns batch_size distinct ids."""
    seed = config.seed if seed is None else seed
    if config.kind == "random":
        return random_select([c.id for c in candidates], config.batch_size, seed)
    if config.kind == "entropy":
        return top_b_by_score(candidates, entropy_score, config.batch_size)
    if config.kind == "least_confidence":
        return top_b_by_score(candidates, least_confidence_score, config.batch_size)
    return coremse_select(candidates, config)
