"""Training-free ensemble rules that turn a retrieved neighbor set into a
prediction score.

Three rules: majority vote over neighbor labels, the ratio of fake-labeled
neighbors, and the mean of neighbor CM scores. None of them ever consume
similarity values; a prediction depends only on which rows were retrieved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .errors import EmptyNeighborSetError, NeighborIndexError
from .retrieval import NeighborSet
from .store import KnowledgeBase

__all__ = ["EnsembleStrategy", "Prediction", "average_score", "majority_vote", "predict", "ratio_score"]


class EnsembleStrategy(Enum):
    MAJORITY_VOTE = "mv"
    RATIO = "ratio"
    AVERAGE = "avg"


@dataclass(frozen=True)
class Prediction:
    """Final score for one query under one ensemble rule.

    ``neighbor_count`` is the deduplicated neighbor-set size, which for
    hybrid retrieval may be smaller than the requested k. Baseline (raw CM
    score) predictions carry ``strategy=None`` and a neighbor count of zero.
    """

    query_id: int
    score: float
    strategy: EnsembleStrategy | None
    neighbor_count: int


def majority_vote(labels: Sequence[int]) -> float:
    """1.0 if fake labels outnumber real, 0.0 if real outnumber fake, and 0.5
    on an exact tie (an argmax over counts is undefined there; 0.5 hands the
    decision to the fixed threshold, where the >= rule classifies it fake)."""
    if len(labels) == 0:
        raise EmptyNeighborSetError("majority vote over zero neighbors")
    fakes = sum(int(x) for x in labels)
    reals = len(labels) - fakes
    if fakes > reals:
        return 1.0
    if reals > fakes:
        return 0.0
    return 0.5


def ratio_score(labels: Sequence[int]) -> float:
    """Fraction of retrieved neighbors labeled fake."""
    if len(labels) == 0:
        raise EmptyNeighborSetError("ratio over zero neighbors")
    return sum(int(x) for x in labels) / len(labels)


def average_score(scores: Sequence[float]) -> float:
    """Arithmetic mean of the retrieved CM scores (exact summation, so the
    result does not depend on neighbor order)."""
    if len(scores) == 0:
        raise EmptyNeighborSetError("average over zero neighbors")
    return math.fsum(float(s) for s in scores) / len(scores)


def predict(
    base: KnowledgeBase,
    neighbors: NeighborSet,
    strategy: EnsembleStrategy,
    query_id: int,
) -> Prediction:
    """Fetch the neighbors' labels/scores from the base and apply one rule.

    The denominator is always the deduplicated neighbor-set size.
    """
    if len(neighbors) == 0:
        raise EmptyNeighborSetError(f"query {query_id}: empty neighbor set")
    idx = neighbors.indices
    if idx.min() < 0 or idx.max() >= base.n:
        raise NeighborIndexError(
            f"query {query_id}: neighbor index out of range for base of {base.n} rows"
        )
    if strategy is EnsembleStrategy.MAJORITY_VOTE:
        score = majority_vote(base.labels[idx].tolist())
    elif strategy is EnsembleStrategy.RATIO:
        score = ratio_score(base.labels[idx].tolist())
    else:
        score = average_score(base.scores[idx].tolist())
    return Prediction(query_id=query_id, score=score, strategy=strategy, neighbor_count=len(neighbors))


def format_prediction_tsv(predictions: Sequence[Prediction]) -> str:
    """Render predictions as the TSV emitted by the CLI: query_id, score to
    nine decimal places, strategy, neighbor count."""
    lines = [
        f"{p.query_id}\t{p.score:.9f}\t{p.strategy.value if p.strategy else 'raw'}\t{p.neighbor_count}"
        for p in predictions
    ]
    return "\n".join(lines) + ("\n" if lines else "")
