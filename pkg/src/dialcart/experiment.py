"""Pool-based active-learning simulation and evaluation metrics.

The loop: train on the labeled set, evaluate on the held-out test set,
score the unlabeled pool, acquire a batch, reveal its gold labels,
repeat.  Gold labels are the oracle: strategies only ever see
``Candidate`` objects, which carry no labels.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .acquisition import Candidate, StrategyConfig, random_select, select_batch
from .classifier import (
    FeatureHasher,
    TrainConfig,
    epoch_snapshots,
    featurize_matrix,
    predict_proba_matrix,
    train,
)
from .corpus import LabelScheme, Sentence


class ExperimentError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    initial_labeled: int = 50
    batch_size: int = 50
    rounds: int | None = None  # None: run until the pool is exhausted
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4, 5)
    train: TrainConfig = field(default_factory=TrainConfig)
    hasher: FeatureHasher = field(default_factory=FeatureHasher)

    def __post_init__(self):
        if self.initial_labeled < 1 or self.batch_size < 1:
            raise ExperimentError("initial_labeled and batch_size must be positive")

    def to_dict(self) -> dict:
        return {
            "initial_labeled": self.initial_labeled,
            "batch_size": self.batch_size,
            "rounds": self.rounds,
            "seeds": list(self.seeds),
            "train": self.train.to_dict(),
            "hasher": self.hasher.to_dict(),
        }


@dataclass
class RoundResult:
    round: int
    labeled_count: int
    accuracy: float
    macro_f1: float
    per_label_f1: dict[str, float]
    acquired_ids: list[str]
    cumulative_label_counts: dict[str, int]
    partial: bool = False


@dataclass
class LearningCurve:
    strategy: str
    labeled_counts: list[int]
    accuracy_mean: list[float]
    accuracy_std: list[float]
    macro_f1_mean: list[float]
    macro_f1_std: list[float]
    n_seeds: int


def accuracy(preds: list[str], golds: list[str]) -> float:
    if len(preds) != len(golds):
        raise ExperimentError(f"length mismatch: {len(preds)} preds vs {len(golds)} golds")
    if not golds:
        raise ExperimentError("cannot score empty prediction lists")
    return sum(p == g for p, g in zip(preds, golds)) / len(golds)


def per_label_f1(
    preds: list[str], golds: list[str], scheme: LabelScheme | None = None
) -> dict[str, float]:
    """One-vs-rest F1 per label present in the golds; a gold-present label
    never predicted scores 0."""
    if len(preds) != len(golds):
        raise ExperimentError(f"length mismatch: {len(preds)} preds vs {len(golds)} golds")
    if scheme is not None:
        for tag in set(golds) | set(preds):
            if tag not in scheme:
                raise ExperimentError(f"tag {tag!r} not in scheme")
    out: dict[str, float] = {}
    for tag in sorted(set(golds)):
        tp = sum(p == tag and g == tag for p, g in zip(preds, golds))
        fp = sum(p == tag and g != tag for p, g in zip(preds, golds))
        fn = sum(p != tag and g == tag for p, g in zip(preds, golds))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        out[tag] = (
            2 * precision * recall / (precision + recall) if precision + recall else 0.0
        )
    return out


def macro_f1(
    preds: list[str], golds: list[str], scheme: LabelScheme | None = None
) -> float:
    """Mean per-label F1 over the labels present in the golds."""
    scores = per_label_f1(preds, golds, scheme)
    if not scores:
        raise ExperimentError("no gold labels to score")
    return sum(scores.values()) / len(scores)


@dataclass
class _PreparedData:
    pool_ids: list[str]
    x_pool: np.ndarray
    gold: dict[str, str]  # the oracle; read only on acquisition / never by strategies
    x_test: np.ndarray
    test_golds: list[str]


def prepare_data(
    pool: list[Sentence],
    test: list[Sentence],
    scheme: LabelScheme,
    hasher: FeatureHasher,
) -> _PreparedData:
    for s in pool + test:
        if s.gold_label is None:
            raise ExperimentError(f"sentence {s.id} has no gold label to simulate with")
    pool_sorted = sorted(pool, key=lambda s: s.id)
    if len({s.id for s in pool_sorted}) != len(pool_sorted):
        raise ExperimentError("duplicate sentence ids in pool")
    if {s.id for s in pool} & {s.id for s in test}:
        raise ExperimentError("pool and test sets overlap")
    return _PreparedData(
        pool_ids=[s.id for s in pool_sorted],
        x_pool=featurize_matrix([s.text for s in pool_sorted], hasher),
        gold={s.id: s.gold_label for s in pool_sorted},
        x_test=featurize_matrix([s.text for s in test], hasher),
        test_golds=[s.gold_label for s in test],
    )


def _round_seed(seed: int, round_no: int) -> int:
    return seed * 1_000_003 + round_no


def run_simulation(
    pool: list[Sentence],
    test: list[Sentence],
    scheme: LabelScheme,
    strategy: StrategyConfig,
    config: ExperimentConfig,
    seed: int,
    _prepared: _PreparedData | None = None,
) -> list[RoundResult]:
    """Run one (strategy, seed) cell of the protocol.

    Round 0 reports the model trained on the initial uniformly-drawn
    labeled set; round r >= 1 reports the model after the r-th acquired
    batch.  The initial set depends only on (pool, config, seed), so
    strategies within one seed share it and curves are paired.
    """
    data = _prepared or prepare_data(pool, test, scheme, config.hasher)
    n_pool = len(data.pool_ids)
    if config.initial_labeled > n_pool:
        raise ExperimentError(
            f"initial_labeled {config.initial_labeled} exceeds pool size {n_pool}"
        )
    row_of = {sid: i for i, sid in enumerate(data.pool_ids)}
    tags = scheme.names()

    labeled = sorted(random_select(data.pool_ids, config.initial_labeled, seed))
    unlabeled = sorted(set(data.pool_ids) - set(labeled))
    cumulative = {t: 0 for t in tags}
    acquired_now: list[str] = []
    results: list[RoundResult] = []
    round_no = 0
    while True:
        rows = np.array([row_of[sid] for sid in labeled])
        y = np.array([scheme.index(data.gold[sid]) for sid in labeled])
        train_cfg = replace(config.train, seed=seed)
        result = train((data.x_pool[rows], y), train_cfg, scheme.num_classes, scheme.version)
        test_probs = predict_proba_matrix(result.params, data.x_test)
        preds = [tags[i] for i in test_probs.argmax(axis=1)]
        results.append(
            RoundResult(
                round=round_no,
                labeled_count=len(labeled),
                accuracy=accuracy(preds, data.test_golds),
                macro_f1=macro_f1(preds, data.test_golds, scheme),
                per_label_f1=per_label_f1(preds, data.test_golds, scheme),
                acquired_ids=list(acquired_now),
                cumulative_label_counts=dict(cumulative),
                partial=bool(acquired_now) and len(acquired_now) < config.batch_size,
            )
        )
        if not unlabeled:
            break
        if config.rounds is not None and round_no >= config.rounds:
            break
        batch_size = min(config.batch_size, len(unlabeled))
        pool_rows = np.array([row_of[sid] for sid in unlabeled])
        probs = predict_proba_matrix(result.params, data.x_pool[pool_rows])
        ensembles = None
        if strategy.kind == "coremse":
            k = min(strategy.ensemble_size, len(result.epoch_params))
            snaps = epoch_snapshots(result, k)
            ensembles = np.stack(
                [predict_proba_matrix(p, data.x_pool[pool_rows]) for p in snaps],
                axis=1,
            )  # (n_unlabeled, K, C)
        candidates = [
            Candidate(
                id=sid,
                predictive_dist=probs[i],
                features=data.x_pool[pool_rows[i]],
                ensemble_dists=None if ensembles is None else ensembles[i],
            )
            for i, sid in enumerate(unlabeled)
        ]
        batch_cfg = replace(strategy, batch_size=batch_size)
        batch = select_batch(candidates, batch_cfg, seed=_round_seed(seed, round_no))
        for sid in batch:
            cumulative[data.gold[sid]] += 1
        batch_set = set(batch)
        labeled = sorted(set(labeled) | batch_set)
        unlabeled = sorted(set(unlabeled) - batch_set)
        acquired_now = batch
        round_no += 1
    return results


def cumulative_sampling_frequency(
    results: list[RoundResult],
) -> tuple[list[int], dict[str, list[int]]]:
    """Tag x round table of cumulative acquired-label counts."""
    rounds = [r.round for r in results]
    if rounds != sorted(rounds):
        raise ExperimentError("rounds out of order")
    tags = sorted({t for r in results for t in r.cumulative_label_counts})
    table = {t: [r.cumulative_label_counts.get(t, 0) for r in results] for t in tags}
    for tag, row in table.items():
        if any(b < a for a, b in zip(row, row[1:])):
            raise ExperimentError(f"cumulative counts for {tag!r} are not monotone")
    return rounds, table


def aggregate_over_seeds(
    per_seed_results: list[list[RoundResult]], strategy: str
) -> LearningCurve:
    """Pointwise mean and population std of accuracy and macro-F1 over seeds."""
    if not per_seed_results:
        raise ExperimentError("no results to aggregate")
    grids = [[r.labeled_count for r in results] for results in per_seed_results]
    if any(g != grids[0] for g in grids[1:]):
        raise ExperimentError("labeled-count grids differ across seeds")
    acc = np.array([[r.accuracy for r in results] for results in per_seed_results])
    f1 = np.array([[r.macro_f1 for r in results] for results in per_seed_results])
    return LearningCurve(
        strategy=strategy,
        labeled_counts=grids[0],
        accuracy_mean=acc.mean(axis=0).tolist(),
        accuracy_std=acc.std(axis=0).tolist(),
        macro_f1_mean=f1.mean(axis=0).tolist(),
        macro_f1_std=f1.std(axis=0).tolist(),
        n_seeds=len(per_seed_results),
    )


def run_experiment(
    pool: list[Sentence],
    test: list[Sentence],
    scheme: LabelScheme,
    strategies: list[StrategyConfig],
    config: ExperimentConfig,
) -> tuple[dict[tuple[str, int], list[RoundResult]], dict[str, LearningCurve]]:
    """All (strategy, seed) cells plus per-strategy aggregated curves.

    Features are computed once and shared across cells.
    """
    prepared = prepare_data(pool, test, scheme, config.hasher)
    cells: dict[tuple[str, int], list[RoundResult]] = {}
    for strategy in strategies:
        for seed in config.seeds:
            cells[(strategy.kind, seed)] = run_simulation(
                pool, test, scheme, strategy, config, seed, _prepared=prepared
            )
    curves = {
        strategy.kind: aggregate_over_seeds(
            [cells[(strategy.kind, seed)] for seed in config.seeds], strategy.kind
        )
        for strategy in strategies
    }
    return cells, curves


def curve_auc(labeled_counts: list[int], values: list[float]) -> float:
    """Trapezoidal area under a learning curve, normalized by the x-range."""
    if len(labeled_counts) < 2:
        raise ExperimentError("need at least two points for an area")
    x = np.asarray(labeled_counts, dtype=float)
    y = np.asarray(values, dtype=float)
    return float(np.trapezoid(y, x) / (x[-1] - x[0]))
