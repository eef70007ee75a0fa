from __future__ import annotations

import numpy as np
import pytest

from conftest import random_base
from radd.ensemble import (
    EnsembleStrategy,
    Prediction,
    average_score,
    format_prediction_tsv,
    majority_vote,
    predict,
    ratio_score,
)
from radd.errors import EmptyNeighborSetError, NeighborIndexError
from radd.retrieval import NeighborSet, RetrievalStrategy


def neighbor_set(indices, strategy=RetrievalStrategy.CM_ONLY, k=None, sims=None):
    idx = np.asarray(indices, dtype=np.int64)
    s = np.asarray(sims if sims is not None else np.linspace(1.0, 0.5, len(idx)), dtype=np.float64)
    return NeighborSet(idx, s, strategy, k if k is not None else len(idx))


class TestMajorityVote:
    def test_clear_fake_majority(self):
        assert majority_vote([1, 1, 1, 0]) == 1.0

    def test_clear_real_majority(self):
        assert majority_vote([0, 0, 1]) == 0.0

    def test_exact_tie(self):
        assert majority_vote([0, 1]) == 0.5

    def test_empty(self):
        with pytest.raises(EmptyNeighborSetError):
            majority_vote([])


class TestRatio:
    def test_half(self):
        assert ratio_score([1, 1, 0, 0]) == 0.5

    def test_three_quarters(self):
        assert ratio_score([1, 1, 1, 0]) == 0.75

    def test_no_positives(self):
        assert ratio_score([0, 0, 0]) == 0.0

    def test_empty(self):
        with pytest.raises(EmptyNeighborSetError):
            ratio_score([])


class TestAverage:
    def test_two_point_mean(self):
        assert average_score([0.2, 0.4]) == pytest.approx(0.3, abs=1e-12)

    def test_singleton(self):
        assert average_score([0.9]) == 0.9

    def test_mean_of_three(self):
        assert average_score([0.25, 0.5, 0.75]) == 0.5

    def test_empty(self):
        with pytest.raises(EmptyNeighborSetError):
            average_score([])


class TestPredict:
    def base_with(self, labels, scores):
        n = len(labels)
        rng = np.random.default_rng(3)
        base = random_base(rng, n, d_cm=3)
        # rebuild with chosen labels and scores
        from conftest import simple_layout
        from radd.store import from_arrays

        return from_arrays(
            ids=np.arange(n), labels=np.asarray(labels, dtype=np.uint8),
            scores=np.asarray(scores, dtype=np.float32),
            cm_matrix=base.cm_matrix, prof_matrix=base.prof_matrix,
            layout=simple_layout(base.d_prof),
        )

    def test_ratio_fetches_labels(self):
        base = self.base_with([1, 1, 0, 0], [0.5] * 4)
        p = predict(base, neighbor_set([0, 1, 2]), EnsembleStrategy.RATIO, query_id=9)
        assert p.score == pytest.approx(2 / 3)
        assert p.query_id == 9 and p.neighbor_count == 3

    def test_average_fetches_scores(self):
        base = self.base_with([0, 0], [0.6, 0.8])
        p = predict(base, neighbor_set([0, 1]), EnsembleStrategy.AVERAGE, query_id=0)
        assert p.score == pytest.approx(0.7, abs=1e-7)

    def test_hybrid_denominator_is_dedup_size(self):
        # k=4 requested, union shrank to 3: the ratio denominator is 3
        base = self.base_with([1, 0, 1, 0], [0.5] * 4)
        ns = neighbor_set([0, 1, 2], strategy=RetrievalStrategy.HYBRID, k=4)
        p = predict(base, ns, EnsembleStrategy.RATIO, query_id=0)
        assert p.score == pytest.approx(2 / 3)
        assert p.neighbor_count == 3

    def test_empty_neighbors(self):
        base = self.base_with([1], [0.5])
        with pytest.raises(EmptyNeighborSetError):
            predict(base, neighbor_set([]), EnsembleStrategy.RATIO, query_id=0)

    def test_index_out_of_range(self):
        base = self.base_with([1, 0], [0.5, 0.5])
        with pytest.raises(NeighborIndexError):
            predict(base, neighbor_set([0, 5]), EnsembleStrategy.RATIO, query_id=0)

    def test_prediction_ignores_similarities(self, rng):
        base = random_base(rng, 10, d_cm=3)
        a = neighbor_set([1, 3, 5], sims=[0.9, 0.8, 0.7])
        b = neighbor_set([1, 3, 5], sims=[0.1, 0.05, 0.01])
        for strategy in EnsembleStrategy:
            assert (
                predict(base, a, strategy, 0).score == predict(base, b, strategy, 0).score
            )


class TestAlgebraicProperties:
    def test_ratio_label_flip_antisymmetry(self, rng):
        for _ in range(300):
            labels = rng.integers(0, 2, size=int(rng.integers(1, 50))).tolist()
            flipped = [1 - x for x in labels]
            assert ratio_score(labels) == pytest.approx(1.0 - ratio_score(flipped), abs=1e-12)

    def test_mv_consistent_with_ratio(self, rng):
        for _ in range(300):
            labels = rng.integers(0, 2, size=int(rng.integers(1, 30))).tolist()
            mv, ratio = majority_vote(labels), ratio_score(labels)
            if ratio > 0.5:
                assert mv == 1.0
            elif ratio < 0.5:
                assert mv == 0.0
            else:
                assert mv == 0.5

    def test_average_permutation_invariant_and_bounded(self, rng):
        for _ in range(200):
            scores = rng.uniform(0.01, 0.99, size=int(rng.integers(1, 40))).tolist()
            mean = average_score(scores)
            shuffled = list(scores)
            rng.shuffle(shuffled)
            assert average_score(shuffled) == mean  # fsum makes this exact
            assert min(scores) <= mean <= max(scores)
            assert 0.0 < mean < 1.0


class TestTsv:
    def test_format(self):
        preds = [
            Prediction(3, 2 / 3, EnsembleStrategy.RATIO, 3),
            Prediction(4, 0.5, None, 0),
        ]
        text = format_prediction_tsv(preds)
        assert text == "3\t0.666666667\tratio\t3\n4\t0.500000000\traw\t0\n"

    def test_empty(self):
        assert format_prediction_tsv([]) == ""
