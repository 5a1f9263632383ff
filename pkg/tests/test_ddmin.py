"""Subset search: partitioning, both search variants, predicates, brute force."""

import itertools

import numpy as np
import pytest

from ddexplain.ddmin import (
    OracleNondeterminismError,
    PredictionOracle,
    UnitSet,
    brute_force_minimal_sets,
    find_minimal_general,
    find_minimal_onepass,
    is_one_minimal,
    is_sufficient,
    partition,
)
from ddexplain.heads import AttentionHead, LinearHead, MlpHead, MlpLayer, predict

from conftest import always_preserving_oracle, monotone_oracle


def head_oracle(head, activations, m):
    return PredictionOracle(lambda s: predict(head.masked_logits(activations, s.indices(), m)), m)


def units_of(s):
    return set(s.indices())


class TestUnitSet:
    def test_from_indices_sorted_unique(self):
        s = UnitSet.from_indices(8, [5, 2, 5, 0])
        assert s.indices() == (0, 2, 5)
        assert len(s) == 3
        assert 2 in s and 3 not in s

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            UnitSet.from_indices(4, [4])
        with pytest.raises(ValueError):
            UnitSet(3, 0b1000)

    def test_remove_add(self):
        s = UnitSet.from_indices(6, [1, 4])
        assert units_of(s.remove(1)) == {4}
        assert units_of(s.add(2)) == {1, 2, 4}
        with pytest.raises(KeyError):
            s.remove(0)

    def test_set_algebra(self):
        a = UnitSet.from_indices(8, [1, 2, 3])
        b = UnitSet.from_indices(8, [3, 4])
        assert units_of(a.union(b)) == {1, 2, 3, 4}
        assert units_of(a.difference(b)) == {1, 2}
        assert UnitSet.from_indices(8, [1, 2]).issubset(a)


class TestPartition:
    def test_eight_units_into_halves(self):
        s = UnitSet.from_indices(9, range(1, 9))
        parts = partition(s, 2)
        assert [units_of(p) for p in parts] == [{1, 2, 3, 4}, {5, 6, 7, 8}]

    def test_three_units_into_two_larger_first(self):
        s = UnitSet.from_indices(5, [2, 3, 4])
        parts = partition(s, 2)
        assert [units_of(p) for p in parts] == [{2, 3}, {4}]

    def test_singleton_partition(self):
        s = UnitSet.from_indices(6, [0, 2, 5])
        parts = partition(s, 3)
        assert [units_of(p) for p in parts] == [{0}, {2}, {5}]

    def test_disjoint_cover_with_balanced_sizes(self):
        s = UnitSet.from_indices(20, range(3, 17))
        for n in range(1, len(s) + 1):
            parts = partition(s, n)
            sizes = [len(p) for p in parts]
            assert max(sizes) - min(sizes) <= 1
            assert sizes == sorted(sizes, reverse=True)
            combined = set()
            for p in parts:
                assert not combined & units_of(p)
                combined |= units_of(p)
            assert combined == units_of(s)

    def test_n_out_of_range(self):
        s = UnitSet.from_indices(4, [0, 1])
        with pytest.raises(ValueError):
            partition(s, 3)
        with pytest.raises(ValueError):
            partition(s, 0)


class TestGeneralSearch:
    def test_worked_trace_returns_required_pair(self):
        oracle = monotone_oracle(8, {2, 4})
        result, stats = find_minimal_general(oracle, 8)
        assert units_of(result) == {2, 4}
        assert stats.forward_evaluations <= 2 * 8 * 8
        assert stats.forward_evaluations <= stats.total_requests

    def test_singleton_universe(self):
        oracle = monotone_oracle(1, {0})
        result, _ = find_minimal_general(oracle, 1)
        assert units_of(result) == {0}

    def test_empty_universe(self):
        result, stats = find_minimal_general(always_preserving_oracle(0), 0)
        assert len(result) == 0
        assert stats.forward_evaluations == 0

    def test_empty_result_when_everything_removable(self):
        result, _ = find_minimal_general(always_preserving_oracle(6), 6)
        assert len(result) == 0

    def test_monotone_exactness(self):
        for m, required in [(5, {0}), (8, {2, 4}), (10, {0, 9}), (12, {3, 5, 7}), (7, set(range(7)))]:
            result, _ = find_minimal_general(monotone_oracle(m, required), m)
            assert units_of(result) == required

    def test_n_init_validation(self):
        with pytest.raises(ValueError):
            find_minimal_general(monotone_oracle(4, {0}), 4, n_init=1)

    def test_parallel_matches_sequential_exactly(self, rng):
        for seed in range(5):
            r = np.random.default_rng(seed)
            w0 = r.standard_normal((6, 16)).astype(np.float32)
            b0 = r.standard_normal(6).astype(np.float32)
            w1 = r.standard_normal((3, 6)).astype(np.float32)
            b1 = r.standard_normal(3).astype(np.float32)
            head = MlpHead((MlpLayer(w0, b0, "relu"), MlpLayer(w1, b1, "identity")))
            a = r.random((4, 2, 2)).astype(np.float32)
            seq_result, seq_stats = find_minimal_general(head_oracle(head, a, 4), 4, parallel=False)
            par_result, par_stats = find_minimal_general(head_oracle(head, a, 4), 4, parallel=True)
            assert seq_result == par_result
            assert seq_stats.forward_evaluations == par_stats.forward_evaluations
            assert seq_stats.total_requests == par_stats.total_requests
            assert seq_stats.rounds == par_stats.rounds

    def test_deterministic_across_runs(self):
        a = find_minimal_general(monotone_oracle(10, {1, 6}), 10)
        b = find_minimal_general(monotone_oracle(10, {1, 6}), 10)
        assert a[0] == b[0]
        assert a[1].forward_evaluations == b[1].forward_evaluations


def two_unit_linear_head(m, required, activations_value=1.0):
    """GAP+linear head preserved iff all of `required` is active (margin engineering)."""
    w = np.zeros((2, m), dtype=np.float32)
    for k in required:
        w[0, k] = 1.0
    b = np.array([0.0, len(required) - 0.5], dtype=np.float32)
    a = np.full((m, 2, 2), activations_value, dtype=np.float32)
    return LinearHead(w, b), a


class TestOnePassSearch:
    def test_positive_margin_columns_found_with_m_evaluations(self):
        head, a = two_unit_linear_head(6, {0, 3})
        oracle = head_oracle(head, a, 6)
        result, stats = find_minimal_onepass(oracle, 6, repair=False)
        assert units_of(result) == {0, 3}
        assert stats.forward_evaluations == 6
        family = brute_force_minimal_sets(head_oracle(head, a, 6), 6)
        assert result in family

    def test_empty_result_when_bias_dominates(self):
        result, stats = find_minimal_onepass(always_preserving_oracle(5), 5, repair=False)
        assert len(result) == 0
        assert stats.forward_evaluations == 5

    def test_all_units_necessary(self):
        oracle = monotone_oracle(5, set(range(5)))
        result, stats = find_minimal_onepass(oracle, 5, repair=False)
        assert units_of(result) == set(range(5))
        assert stats.forward_evaluations == 5

    def test_repair_costs_nothing_when_nothing_was_removed(self):
        oracle = monotone_oracle(5, set(range(5)))
        result, stats = find_minimal_onepass(oracle, 5, repair=True)
        assert units_of(result) == set(range(5))
        assert stats.forward_evaluations == 5  # repair sweep is all memo hits
        assert stats.total_requests == 10

    def test_repair_costs_nothing_when_survivors_postdate_removals(self):
        oracle = monotone_oracle(6, {4, 5})
        result, stats = find_minimal_onepass(oracle, 6, repair=True)
        assert units_of(result) == {4, 5}
        assert stats.forward_evaluations == 6

    def test_monotone_exactness(self):
        for m, required in [(5, {0}), (8, {2, 4}), (10, {0, 9}), (12, {3, 5, 7})]:
            result, _ = find_minimal_onepass(monotone_oracle(m, required), m)
            assert units_of(result) == required


class TestPredicates:
    def test_full_set_is_sufficient(self):
        oracle = monotone_oracle(8, {2, 4})
        assert is_sufficient(oracle, UnitSet.full(8))

    def test_worked_example_sufficiency(self):
        oracle = monotone_oracle(8, {2, 4})
        assert is_sufficient(oracle, UnitSet.from_indices(8, [2, 4]))
        assert not is_sufficient(oracle, UnitSet.from_indices(8, [2]))

    def test_worked_example_one_minimality(self):
        oracle = monotone_oracle(8, {2, 4})
        assert is_one_minimal(oracle, UnitSet.from_indices(8, [2, 4]))
        assert not is_one_minimal(oracle, UnitSet.from_indices(8, [1, 2, 4]))

    def test_empty_set_vacuously_minimal(self):
        oracle = always_preserving_oracle(4)
        assert is_one_minimal(oracle, UnitSet.empty(4))

    def test_request_accounting(self):
        oracle = monotone_oracle(8, {2, 4})
        before = oracle.total_requests
        is_one_minimal(oracle, UnitSet.from_indices(8, [2, 4]))
        assert oracle.total_requests - before == 3  # |s| + 1

    def test_matches_direct_forward_recomputation(self, rng):
        w = rng.standard_normal((3, 6)).astype(np.float32)
        b = rng.standard_normal(3).astype(np.float32)
        a = rng.random((6, 2, 2)).astype(np.float32)
        head = LinearHead(w, b)
        oracle = head_oracle(head, a, 6)
        for _ in range(20):
            idx = sorted(rng.choice(6, size=int(rng.integers(0, 7)), replace=False).tolist())
            s = UnitSet.from_indices(6, idx)
            direct = predict(head.masked_logits(a, idx, 6)) == oracle.target_class
            assert is_sufficient(oracle, s) == direct


def reference_minimal_sets(classify, m, target):
    """Second enumerator: cardinality-ordered combinations, raw classify calls."""
    sufficient = {}
    for size in range(m + 1):
        for combo in itertools.combinations(range(m), size):
            sufficient[combo] = classify(UnitSet.from_indices(m, combo)) == target
    out = set()
    for combo, ok in sufficient.items():
        if ok and all(not sufficient[tuple(x for x in combo if x != i)] for i in combo):
            out.add(frozenset(combo))
    return out


class TestBruteForce:
    def test_worked_example_unique_minimal_set(self):
        family = brute_force_minimal_sets(monotone_oracle(8, {2, 4}), 8)
        assert [units_of(s) for s in family] == [{2, 4}]

    def test_always_preserving_gives_empty_set(self):
        family = brute_force_minimal_sets(always_preserving_oracle(5), 5)
        assert [units_of(s) for s in family] == [set()]

    def test_refuses_large_universe(self):
        with pytest.raises(ValueError):
            brute_force_minimal_sets(always_preserving_oracle(21), 21)

    def test_cross_checked_by_second_enumerator(self, rng):
        w0 = rng.standard_normal((5, 8)).astype(np.float32)
        b0 = rng.standard_normal(5).astype(np.float32)
        w1 = rng.standard_normal((3, 5)).astype(np.float32)
        b1 = rng.standard_normal(3).astype(np.float32)
        head = MlpHead((MlpLayer(w0, b0, "relu"), MlpLayer(w1, b1, "identity")))
        a = rng.random((8, 1, 1)).astype(np.float32)
        oracle = head_oracle(head, a, 8)
        family = {frozenset(s.indices()) for s in brute_force_minimal_sets(oracle, 8)}
        classify = lambda s: predict(head.masked_logits(a, s.indices(), 8))
        assert family == reference_minimal_sets(classify, 8, oracle.target_class)


class TestOracle:
    def test_memo_counts_distinct_computations_only(self):
        oracle = monotone_oracle(6, {1})
        s = UnitSet.from_indices(6, [1, 2])
        oracle(s)
        oracle(s)
        assert oracle.forward_evaluations == 1
        assert oracle.total_requests == 2

    def test_target_computed_once_at_construction(self):
        calls = []

        def classify(s):
            calls.append(s.mask)
            return 0

        oracle = PredictionOracle(classify, 4)
        assert oracle.target_class == 0
        assert oracle.forward_evaluations == 0  # construction pass not counted
        assert is_sufficient(oracle, UnitSet.full(4))
        assert oracle.forward_evaluations == 0  # memo hit
        assert oracle.total_requests == 1

    def test_nondeterminism_detected(self):
        oracle = monotone_oracle(4, {0})
        s = UnitSet.from_indices(4, [0, 1])
        oracle.commit(s, 0)
        with pytest.raises(OracleNondeterminismError):
            oracle.commit(s, 1)


def _random_heads(seed):
    r = np.random.default_rng(seed)
    w = r.standard_normal((4, 10)).astype(np.float32)
    b = r.standard_normal(4).astype(np.float32)
    a_lin = r.random((10, 3, 3)).astype(np.float32)
    linear = (LinearHead(w, b), a_lin, 10)

    w0 = r.standard_normal((6, 8)).astype(np.float32)
    b0 = r.standard_normal(6).astype(np.float32)
    w1 = r.standard_normal((3, 6)).astype(np.float32)
    b1 = r.standard_normal(3).astype(np.float32)
    mlp = (MlpHead((MlpLayer(w0, b0, "relu"), MlpLayer(w1, b1, "identity"))), r.random((8, 1, 1)).astype(np.float32), 8)

    d = 5
    att = AttentionHead(
        wq=r.standard_normal((d, d)).astype(np.float32),
        wk=r.standard_normal((d, d)).astype(np.float32),
        wv=r.standard_normal((d, d)).astype(np.float32),
        wcls=r.standard_normal((3, d)).astype(np.float32),
        bcls=r.standard_normal(3).astype(np.float32),
        cls_token=r.standard_normal(d).astype(np.float32),
    )
    vit = (att, r.standard_normal((9, d)).astype(np.float32), 9)
    return [linear, mlp, vit]


class TestSoundnessAndBounds:
    def test_both_variants_return_one_minimal_sets(self):
        for seed in range(10):
            for head, a, m in _random_heads(seed):
                for finder, kwargs in (
                    (find_minimal_general, {}),
                    (find_minimal_onepass, {"repair": True}),
                ):
                    oracle = head_oracle(head, a, m)
                    result, stats = finder(oracle, m, **kwargs)
                    assert is_one_minimal(oracle, result), (seed, type(head).__name__, finder.__name__)
                    assert stats.forward_evaluations <= 2 * m * m

    def test_results_belong_to_brute_force_family(self):
        for seed in range(10):
            for head, a, m in _random_heads(seed):
                family = {frozenset(s.indices()) for s in brute_force_minimal_sets(head_oracle(head, a, m), m)}
                for finder in (find_minimal_general, find_minimal_onepass):
                    result, _ = finder(head_oracle(head, a, m), m)
                    assert frozenset(result.indices()) in family

    def test_onepass_without_repair_costs_exactly_m(self):
        for seed in range(10):
            for head, a, m in _random_heads(seed):
                _, stats = find_minimal_onepass(head_oracle(head, a, m), m, repair=False)
                assert stats.forward_evaluations == m
                assert stats.total_requests == m
