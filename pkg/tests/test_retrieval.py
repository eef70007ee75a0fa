from __future__ import annotations

import numpy as np
import pytest

from conftest import random_base, random_query, simple_layout
from radd.errors import DimensionMismatchError, HybridKTooSmallError
from radd.retrieval import RetrievalStrategy, cosine, retrieve, retrieve_batch, top_k
from radd.store import from_arrays
from radd.types import QueryRecord
from reference import naive_retrieve, naive_top_k


def make_base(cm_rows, prof_rows=None):
    cm = np.asarray(cm_rows, dtype=np.float32)
    prof = np.asarray(prof_rows, dtype=np.float32) if prof_rows is not None else cm.copy()
    n = cm.shape[0]
    return from_arrays(
        ids=np.arange(n), labels=np.zeros(n, dtype=np.uint8),
        scores=np.full(n, 0.5, dtype=np.float32),
        cm_matrix=cm, prof_matrix=prof, layout=simple_layout(prof.shape[1]),
    )


def query_for(base, cm, prof=None):
    prof = prof if prof is not None else [1.0] * base.d_prof
    return QueryRecord(id=0, cm=cm, prof=prof, score=0.5)


class TestCosine:
    def test_identical_direction(self):
        assert cosine([1.0, 0.0], [1.0, 0.0]) == 1.0

    def test_orthogonal(self):
        assert cosine([1.0, 0.0], [0.0, 1.0]) == 0.0

    def test_closed_form(self):
        # (1*2 + 2*1) / (sqrt(5) * sqrt(5)) = 4/5
        assert cosine([1.0, 2.0], [2.0, 1.0]) == pytest.approx(0.8, abs=1e-12)

    def test_zero_norm_sentinel(self):
        assert cosine([0.0, 0.0], [1.0, 1.0]) == -1.0
        assert cosine([1.0, 1.0], [0.0, 0.0]) == -1.0
        assert cosine([0.0, 0.0], [0.0, 0.0]) == -1.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            cosine([1.0], [1.0, 2.0])

    def test_antiparallel(self):
        assert cosine([1.0, 2.0], [-1.0, -2.0]) == pytest.approx(-1.0, abs=1e-12)


class TestTopK:
    def test_tie_broken_by_ascending_index(self):
        # rows 0 and 3 have exactly equal cosine to the query (row 3 is a
        # dyadic scaling of row 0, which is exact in floating point)
        base = make_base([[1.0, 1.0], [0.0, 1.0], [1.0, 2.0], [2.0, 2.0]])
        ns = top_k(base, [1.0, 0.0], "cm", 2)
        assert ns.indices.tolist() == [0, 3]
        assert ns.similarities[0] == ns.similarities[1]

    def test_k_equals_n_returns_all_sorted(self):
        base = make_base([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        ns = top_k(base, [1.0, 0.0], "cm", 3)
        assert ns.indices.tolist() == [0, 2, 1]
        assert list(ns.similarities) == sorted(ns.similarities, reverse=True)

    def test_k_one_is_argmax(self):
        base = make_base([[1.0, 5.0], [1.0, 0.1], [1.0, 1.0]])
        ns = top_k(base, [1.0, 0.0], "cm", 1)
        assert ns.indices.tolist() == [1]

    def test_k_above_n_truncates(self):
        base = make_base([[1.0, 0.0], [0.0, 1.0]])
        assert len(top_k(base, [1.0, 0.0], "cm", 100)) == 2

    def test_k_below_one_rejected(self):
        base = make_base([[1.0, 0.0]])
        with pytest.raises(ValueError):
            top_k(base, [1.0, 0.0], "cm", 0)

    def test_dimension_mismatch(self):
        base = make_base([[1.0, 0.0]])
        with pytest.raises(DimensionMismatchError):
            top_k(base, [1.0, 0.0, 0.0], "cm", 1)

    def test_zero_rows_sink_to_bottom(self):
        base = make_base([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0], [-1.0, 0.0]])
        ns = top_k(base, [1.0, 0.0], "cm", 4)
        assert ns.indices.tolist() == [1, 0, 2, 3]  # sentinel -1.0 ties after real sims
        assert ns.similarities.tolist() == [1.0, -1.0, -1.0, -1.0]

    def test_matches_scalar_cosine(self, rng):
        base = random_base(rng, n=40, d_cm=7)
        q = rng.standard_normal(7).astype(np.float32)
        ns = top_k(base, q, "cm", 40)
        for i, s in ns.entries:
            assert s == pytest.approx(cosine(base.cm_matrix[i], q), abs=1e-12)


class TestRetrieve:
    def test_cm_only_matches_top_k(self, rng):
        base = random_base(rng, n=30, d_cm=5)
        q = random_query(rng, 0, 5)
        a = retrieve(base, q, RetrievalStrategy.CM_ONLY, 7)
        b = top_k(base, q.cm, "cm", 7)
        assert a.indices.tolist() == b.indices.tolist()

    def test_hybrid_even_split(self):
        # cm space ranks rows 0,1 first; prof space ranks rows 2,3 first
        cm = [[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9], [-1.0, 0.0], [-1.0, 0.1]]
        prof = [[0.0, 1.0], [0.1, 0.9], [1.0, 0.0], [0.9, 0.1], [-1.0, 0.0], [-1.0, 0.1]]
        base = make_base(cm, prof)
        q = QueryRecord(id=0, cm=[1.0, 0.0], prof=[1.0, 0.0], score=0.5)
        ns = retrieve(base, q, RetrievalStrategy.HYBRID, 4)
        assert sorted(ns.indices.tolist()) == [0, 1, 2, 3]
        assert len(ns) == 4

    def test_hybrid_odd_split_floor_cm_ceil_prof(self):
        cm = [[1.0, 0.0], [0.9, 0.1], [0.8, 0.2], [0.0, 1.0], [0.1, 0.9], [0.2, 0.8]]
        prof = [[0.0, 1.0], [0.1, 0.9], [0.2, 0.8], [1.0, 0.0], [0.9, 0.1], [0.8, 0.2]]
        base = make_base(cm, prof)
        q = QueryRecord(id=0, cm=[1.0, 0.0], prof=[1.0, 0.0], score=0.5)
        ns = retrieve(base, q, RetrievalStrategy.HYBRID, 5)
        # k1 = 2 from cm space (rows 0,1), k2 = 3 from prof space (rows 3,4,5)
        assert sorted(ns.indices.tolist()) == [0, 1, 3, 4, 5]

    def test_hybrid_overlap_dedup(self):
        # prof space is identical to cm space, so both halves retrieve the
        # same rows and the union shrinks
        cm = [[1.0, 0.0], [0.9, 0.1], [0.5, 0.5], [0.0, 1.0]]
        base = make_base(cm, cm)
        q = QueryRecord(id=0, cm=[1.0, 0.0], prof=[1.0, 0.0], score=0.5)
        ns = retrieve(base, q, RetrievalStrategy.HYBRID, 4)
        assert ns.indices.tolist() == [0, 1]
        assert len(ns) == 2 <= 4

    def test_hybrid_union_forced_overlap(self):
        # cm top-2 = {1, 2}, prof top-2 = {2, 3} -> union {1, 2, 3}
        cm = [[-1.0, 0.0], [1.0, 0.0], [0.96, 0.04], [0.2, 0.8]]
        prof = [[-1.0, 0.0], [0.2, 0.8], [1.0, 0.0], [0.96, 0.04]]
        base = make_base(cm, prof)
        q = QueryRecord(id=0, cm=[1.0, 0.0], prof=[1.0, 0.0], score=0.5)
        ns = retrieve(base, q, RetrievalStrategy.HYBRID, 4)
        assert sorted(ns.indices.tolist()) == [1, 2, 3]

    def test_hybrid_keeps_max_similarity_on_overlap(self):
        cm = [[1.0, 0.0], [0.0, 1.0]]
        prof = [[1.0, 1.0], [0.0, 1.0]]
        base = make_base(cm, prof)
        q = QueryRecord(id=0, cm=[1.0, 0.0], prof=[1.0, 0.0], score=0.5)
        ns = retrieve(base, q, RetrievalStrategy.HYBRID, 2)
        # row 0 is retrieved by both halves: cm sim 1.0 beats prof sim 1/sqrt(2)
        assert ns.indices.tolist()[0] == 0
        assert ns.similarities[0] == 1.0

    def test_hybrid_k_too_small(self, rng):
        base = random_base(rng, 5, 3)
        q = random_query(rng, 0, 3)
        with pytest.raises(HybridKTooSmallError):
            retrieve(base, q, RetrievalStrategy.HYBRID, 1)

    def test_profile_only_uses_prof_space(self, rng):
        base = random_base(rng, n=25, d_cm=4, d_prof=6)
        q = random_query(rng, 0, 4, 6)
        ns = retrieve(base, q, RetrievalStrategy.PROFILE_ONLY, 5)
        expected = naive_top_k(base.prof_matrix, q.prof, 5)
        assert ns.indices.tolist() == [i for i, _ in expected]


class TestRetrieveBatch:
    def test_order_preserved(self, rng):
        base = random_base(rng, n=20, d_cm=4)
        queries = [random_query(rng, i, 4) for i in range(3)]
        results = retrieve_batch(base, queries, RetrievalStrategy.CM_ONLY, 5)
        assert len(results) == 3
        for q, ns in zip(queries, results):
            single = retrieve(base, q, RetrievalStrategy.CM_ONLY, 5)
            assert ns.indices.tolist() == single.indices.tolist()

    def test_empty_batch(self, rng):
        base = random_base(rng, 5, 3)
        assert retrieve_batch(base, [], RetrievalStrategy.CM_ONLY, 2) == []

    @pytest.mark.parametrize("strategy", list(RetrievalStrategy))
    def test_parallelism_bit_identical(self, rng, strategy):
        base = random_base(rng, n=150, d_cm=6, d_prof=5)
        queries = [random_query(rng, i, 6, 5) for i in range(200)]
        baseline = retrieve_batch(base, queries, strategy, 9, parallelism=1)
        for par in (4, 8):
            again = retrieve_batch(base, queries, strategy, 9, parallelism=par)
            for a, b in zip(baseline, again):
                assert a.indices.tolist() == b.indices.tolist()
                assert a.similarities.tobytes() == b.similarities.tobytes()

    def test_error_names_query_id(self, rng):
        base = random_base(rng, 10, 4)
        bad = QueryRecord(id=77, cm=[1.0], prof=[1.0] * 4, score=0.5)
        with pytest.raises(DimensionMismatchError) as exc_info:
            retrieve_batch(base, [bad], RetrievalStrategy.CM_ONLY, 2)
        assert "query 77" in str(exc_info.value)


class TestOracleEquivalence:
    """retrieve() must match the naive all-pairs reference exactly,
    including tie ordering, on randomized instances."""

    @pytest.mark.parametrize("strategy", ["cm", "prof", "hybrid"])
    def test_random_instances(self, strategy):
        rng = np.random.default_rng(999)
        for trial in range(40):
            n = int(rng.integers(1, 80))
            d = int(rng.integers(1, 16))
            tie_heavy = trial % 3 == 0
            base = random_base(rng, n, d, d_prof=d, tie_heavy=tie_heavy, zero_rows=trial % 4)
            q = random_query(rng, trial, d, d, tie_heavy=tie_heavy)
            for k in (1, 2, 5, n):
                if strategy == "hybrid" and k < 2:
                    continue
                got = retrieve(base, q, RetrievalStrategy(strategy), k)
                want = naive_retrieve(base.cm_matrix, base.prof_matrix, q.cm, q.prof, strategy, k)
                assert got.indices.tolist() == [i for i, _ in want], (
                    f"trial={trial} n={n} d={d} k={k} strategy={strategy}"
                )

    def test_scale_invariance(self):
        # scaling by powers of two is exact in floating point, so the
        # retrieved set must be identical, not merely close
        rng = np.random.default_rng(5)
        for _ in range(20):
            n, d = int(rng.integers(2, 50)), int(rng.integers(1, 10))
            base = random_base(rng, n, d)
            q = random_query(rng, 0, d)
            ref = retrieve(base, q, RetrievalStrategy.CM_ONLY, 5).indices.tolist()
            for scale in (0.25, 2.0, 8.0):
                scaled_q = QueryRecord(id=0, cm=q.cm * np.float32(scale), prof=q.prof, score=0.5)
                assert retrieve(base, scaled_q, RetrievalStrategy.CM_ONLY, 5).indices.tolist() == ref
            row = int(rng.integers(0, n))
            cm2 = base.cm_matrix.copy()
            cm2[row] *= np.float32(4.0)
            base2 = from_arrays(base.ids, base.labels, base.scores, cm2, base.prof_matrix, base.layout)
            assert retrieve(base2, q, RetrievalStrategy.CM_ONLY, 5).indices.tolist() == ref

    def test_monotonicity_in_k(self, rng):
        for strategy in (RetrievalStrategy.CM_ONLY, RetrievalStrategy.PROFILE_ONLY):
            base = random_base(rng, 60, 5, d_prof=5)
            q = random_query(rng, 0, 5, 5)
            prev: set[int] = set()
            for k in (1, 3, 7, 20, 60):
                current = set(retrieve(base, q, strategy, k).indices.tolist())
                assert prev <= current
                prev = current

    def test_hybrid_size_bound_and_disjoint_equality(self):
        rng = np.random.default_rng(31)
        for trial in range(30):
            n, d = int(rng.integers(2, 60)), int(rng.integers(2, 8))
            base = random_base(rng, n, d, d_prof=d, tie_heavy=trial % 2 == 0)
            q = random_query(rng, trial, d, d)
            for k in range(2, 12):
                ns = retrieve(base, q, RetrievalStrategy.HYBRID, k)
                assert len(ns) <= k
                cm_half = set(top_k(base, q.cm, "cm", k // 2).indices.tolist())
                prof_half = set(top_k(base, q.prof, "prof", k - k // 2).indices.tolist())
                assert set(ns.indices.tolist()) == cm_half | prof_half
                if not (cm_half & prof_half) and k <= n:
                    assert len(ns) == k
