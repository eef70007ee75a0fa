"""Equal error rate, fixed-threshold accuracy, and the end-to-end evaluation
pipeline.

Conventions, fixed once here and used everywhere:

- The positive class is fake (label 1): higher score means more likely fake.
- Accuracy uses the fixed threshold 0.5 with the >= rule, so a score of
  exactly 0.5 classifies as fake. Zero-day conditions preclude tuning a
  threshold on development data, hence the fixed operating point.
- EER sweeps the threshold over every distinct score plus below-min and
  above-max sentinels. FAR(t) is the fraction of real samples scoring >= t;
  miss(t) is the fraction of fake samples scoring < t. The sweep finds the
  adjacent operating points where FAR - miss changes sign and linearly
  interpolates the crossing. When the score set has at most two distinct
  values (binary outputs such as majority vote), the EER is instead
  (FAR + miss) / 2 at the single threshold separating the values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ensemble import EnsembleStrategy, Prediction, predict
from .errors import EmptySamplesError, MissingClassError, UnlabeledQueryError
from .retrieval import RetrievalStrategy, retrieve_batch
from .store import KnowledgeBase
from .types import QueryRecord

__all__ = [
    "ACCURACY_THRESHOLD",
    "EvalReport",
    "ScoredSample",
    "accuracy",
    "eer",
    "evaluate",
    "score_queries",
]

ACCURACY_THRESHOLD = 0.5


@dataclass(frozen=True)
class ScoredSample:
    """A prediction score paired with its ground-truth label."""

    score: float
    label: int


@dataclass(frozen=True)
class EvalReport:
    """Metrics for one (strategy, ensemble, k) configuration.

    ``eer`` is None when it is undefined (only one class present); the run
    still reports accuracy rather than failing.
    """

    eer: float | None
    accuracy: float
    n_real: int
    n_fake: int
    strategy: str
    ensemble: str
    k: int
    threshold_used: float = ACCURACY_THRESHOLD

    def to_json_dict(self) -> dict:
        return {
            "eer": self.eer,
            "accuracy": self.accuracy,
            "n_real": self.n_real,
            "n_fake": self.n_fake,
            "threshold_used": self.threshold_used,
            "config": {"strategy": self.strategy, "ensemble": self.ensemble, "k": self.k},
        }

    def table_row(self) -> str:
        """One human-readable row: strategy, ensemble, k, EER%, Acc%."""
        eer_txt = f"{100.0 * self.eer:.2f}" if self.eer is not None else "n/a"
        return (
            f"{self.strategy:>8} {self.ensemble:>6} {self.k:>4} "
            f"{eer_txt:>7} {100.0 * self.accuracy:>7.2f}"
        )


def _split_scores(samples: Sequence[ScoredSample]) -> tuple[np.ndarray, np.ndarray]:
    scores = np.array([s.score for s in samples], dtype=np.float64)
    labels = np.array([s.label for s in samples], dtype=np.int64)
    if not np.isfinite(scores).all():
        raise EmptySamplesError("scores must be finite")
    return np.sort(scores[labels == 0]), np.sort(scores[labels == 1])


def accuracy(samples: Sequence[ScoredSample]) -> float:
    """Fraction of samples whose thresholded decision matches the label."""
    if len(samples) == 0:
        raise EmptySamplesError("accuracy over zero samples")
    correct = sum(
        1 for s in samples if (1 if s.score >= ACCURACY_THRESHOLD else 0) == s.label
    )
    return correct / len(samples)


def eer(samples: Sequence[ScoredSample]) -> float:
    """Equal error rate of the scored samples (see module docstring for the
    sweep and interpolation conventions).

    Raises:
        MissingClassError: Fewer than one real or one fake sample.
    """
    if len(samples) == 0:
        raise EmptySamplesError("EER over zero samples")
    real, fake = _split_scores(samples)
    if real.size == 0 or fake.size == 0:
        raise MissingClassError(
            f"EER needs both classes; got {real.size} real and {fake.size} fake samples"
        )
    distinct = np.unique(np.concatenate([real, fake]))
    if distinct.size <= 2:
        # Binary or constant outputs: place the threshold between the two
        # values (at the single value when constant) and average the rates.
        tau = distinct[-1]
        far = np.count_nonzero(real >= tau) / real.size
        miss = np.count_nonzero(fake < tau) / fake.size
        return (far + miss) / 2.0
    taus = np.concatenate([[distinct[0] - 1.0], distinct, [distinct[-1] + 1.0]])
    far = (real.size - np.searchsorted(real, taus, side="left")) / real.size
    miss = np.searchsorted(fake, taus, side="left") / fake.size
    diff = far - miss  # non-increasing: +1 at the low sentinel, -1 at the high
    i = int(np.flatnonzero(diff >= 0.0)[-1])
    if diff[i] == 0.0:
        return float(far[i])
    t = diff[i] / (diff[i] - diff[i + 1])
    return float(far[i] + t * (far[i + 1] - far[i]))


def score_queries(
    base: KnowledgeBase,
    queries: Sequence[QueryRecord],
    strategy: RetrievalStrategy | None,
    ensemble: EnsembleStrategy | None,
    k: int,
    parallelism: int = 1,
) -> list[Prediction]:
    """Run retrieval plus ensemble for every query, in input order.

    ``strategy=None`` is the baseline: the raw CM score is passed through
    with no retrieval, which gives baseline-vs-retrieval comparisons a single
    code path.
    """
    if strategy is None:
        return [
            Prediction(query_id=q.id, score=q.score, strategy=None, neighbor_count=0)
            for q in queries
        ]
    if ensemble is None:
        raise ValueError("an ensemble strategy is required unless strategy is None")
    neighbor_sets = retrieve_batch(base, queries, strategy, k, parallelism)
    return [predict(base, ns, ensemble, q.id) for q, ns in zip(queries, neighbor_sets)]


def evaluate(
    base: KnowledgeBase,
    queries: Sequence[QueryRecord],
    strategy: RetrievalStrategy | None,
    ensemble: EnsembleStrategy | None,
    k: int,
    parallelism: int = 1,
) -> EvalReport:
    """Score every labeled query and report EER plus fixed-threshold accuracy.

    Raises:
        UnlabeledQueryError: Some query has no ground-truth label (reported by
            id before any retrieval runs).
    """
    if len(queries) == 0:
        raise EmptySamplesError("cannot evaluate zero queries")
    for q in queries:
        if q.label is None:
            raise UnlabeledQueryError(f"query {q.id} has no ground-truth label", query_id=q.id)
    predictions = score_queries(base, queries, strategy, ensemble, k, parallelism)
    return report_from_predictions(predictions, queries, strategy, ensemble, k)


def report_from_predictions(
    predictions: Sequence[Prediction],
    queries: Sequence[QueryRecord],
    strategy: RetrievalStrategy | None,
    ensemble: EnsembleStrategy | None,
    k: int,
) -> EvalReport:
    """Aggregate per-query predictions into an EvalReport."""
    samples = [ScoredSample(score=p.score, label=q.label) for p, q in zip(predictions, queries)]
    acc = accuracy(samples)
    try:
        eer_value: float | None = eer(samples)
    except MissingClassError:
        eer_value = None
    labels = [q.label for q in queries]
    return EvalReport(
        eer=eer_value,
        accuracy=acc,
        n_real=labels.count(0),
        n_fake=labels.count(1),
        strategy=strategy.value if strategy else "none",
        ensemble=ensemble.value if ensemble else "none",
        k=k if strategy else 0,
    )
