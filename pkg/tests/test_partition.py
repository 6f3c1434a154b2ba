import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leaftile.annotations import DiseaseClass
from leaftile.errors import DataError
from leaftile.partition import (
    SizeGroup,
    compute_stats,
    fit_lwf_params,
    lwf_score,
    partition_by_quantile,
    summarize_partition,
)

from oracles import naive_quantile


def entries_from(values, cls=None):
    return [(f"img{i:05d}", cls, float(v)) for i, v in enumerate(values)]


class TestComputeStats:
    def test_one_to_hundred(self):
        overall, _ = compute_stats(entries_from(range(1, 101)))
        assert overall.min == 1
        assert overall.max == 100
        assert overall.mean == 50.5
        assert overall.n == 100

    def test_single_value(self):
        overall, _ = compute_stats(entries_from([7]))
        assert (overall.min, overall.max, overall.mean) == (7, 7, 7)
        assert (overall.q1, overall.q2, overall.q3) == (7, 7, 7)
        assert overall.sd == 0.0

    def test_empty_rejected(self):
        with pytest.raises(DataError, match="empty"):
            compute_stats([])

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_naive_resort_oracle(self, seed):
        rng = random.Random(seed)
        values = [rng.uniform(0, 50) for _ in range(1000)]
        overall, _ = compute_stats(entries_from(values))
        sv = sorted(values)
        assert overall.min == sv[0]
        assert overall.max == sv[-1]
        assert overall.mean == pytest.approx(sum(values) / len(values), rel=1e-12)
        assert overall.q1 == pytest.approx(naive_quantile(sv, 0.25), rel=1e-12)
        assert overall.q2 == pytest.approx(naive_quantile(sv, 0.50), rel=1e-12)
        assert overall.q3 == pytest.approx(naive_quantile(sv, 0.75), rel=1e-12)
        mean = sum(values) / len(values)
        var = sum((v - mean) ** 2 for v in values) / len(values)
        assert overall.sd == pytest.approx(math.sqrt(var), rel=1e-9)

    def test_per_class_split(self):
        entries = entries_from([1, 2, 3], DiseaseClass.BLAST) + [
            ("x1", DiseaseClass.RED, 10.0),
        ]
        overall, per_class = compute_stats(entries)
        assert overall.n == 4
        assert per_class[DiseaseClass.BLAST].n == 3
        assert per_class[DiseaseClass.RED].mean == 10.0
        assert DiseaseClass.BSP not in per_class

    def test_quantile_ordering_invariant(self):
        overall, _ = compute_stats(entries_from([3, 1, 4, 1, 5, 9, 2, 6]))
        assert overall.min <= overall.q1 <= overall.q2 <= overall.q3 <= overall.max


class TestLwfScore:
    def test_zero_at_corpus_minimum(self):
        params = fit_lwf_params([2.0, 5.0, 9.0])
        assert lwf_score(2.0, params) == 0.0

    def test_params_keep_samples_and_tmin_bound(self):
        values = [4.0, 2.0, 9.0]
        params = fit_lwf_params(values)
        assert params.samples == (4.0, 2.0, 9.0)
        assert params.n == 3
        from leaftile.partition import signed_t

        assert all(params.t_min <= signed_t(v, params.mu) for v in values)

    def test_value_at_mean(self):
        values = [2.0, 5.0, 9.0]
        params = fit_lwf_params(values)
        mu = sum(values) / 3
        expected = math.sqrt(-params.t_min)
        assert lwf_score(mu, params) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("seed", range(4))
    def test_ordering_matches_width_ordering(self, seed):
        rng = random.Random(seed)
        values = [rng.uniform(0.5, 40) for _ in range(80)]
        params = fit_lwf_params(values)
        scored = [(v, lwf_score(v, params)) for v in values]
        for va, sa in scored:
            for vb, sb in scored:
                if va < vb:
                    assert sa <= sb

    def test_monotone_non_decreasing_everywhere(self):
        params = fit_lwf_params([1.0, 3.0, 10.0])
        xs = [1.0, 1.5, 2.0, 3.0, 5.0, 10.0]
        scores = [lwf_score(x, params) for x in xs]
        assert scores == sorted(scores)


class TestPartition:
    def test_exact_tails_for_distinct_values(self):
        groups = partition_by_quantile(entries_from(range(1, 101)))
        by_value = {f"img{i:05d}": i + 1 for i in range(100)}
        narrow_vals = sorted(by_value[k] for k, g in groups.items() if g is SizeGroup.NARROW)
        wide_vals = sorted(by_value[k] for k, g in groups.items() if g is SizeGroup.WIDE)
        assert narrow_vals == list(range(1, 11))
        assert wide_vals == list(range(91, 101))

    def test_all_equal_uses_id_tie_break(self):
        entries = entries_from([5.0] * 20)
        groups = partition_by_quantile(entries)
        narrow = sorted(k for k, g in groups.items() if g is SizeGroup.NARROW)
        wide = sorted(k for k, g in groups.items() if g is SizeGroup.WIDE)
        assert narrow == ["img00000", "img00001"]
        assert wide == ["img00018", "img00019"]

    def test_group_sizes_exact(self):
        rng = random.Random(11)
        entries = entries_from([rng.uniform(0, 30) for _ in range(500)])
        groups = partition_by_quantile(entries)
        sizes = {g: sum(1 for v in groups.values() if v is g) for g in SizeGroup}
        assert sizes[SizeGroup.NARROW] == 50
        assert sizes[SizeGroup.WIDE] == 50
        assert sizes[SizeGroup.NORMAL] == 400

    def test_too_small_corpus_rejected(self):
        with pytest.raises(DataError, match="at least 10"):
            partition_by_quantile(entries_from(range(9)))

    def test_group_value_ordering(self):
        rng = random.Random(5)
        entries = entries_from([rng.uniform(0, 30) for _ in range(137)])
        groups = partition_by_quantile(entries)
        values = {g: [] for g in SizeGroup}
        for image_id, _, lw in entries:
            values[groups[image_id]].append(lw)
        assert max(values[SizeGroup.NARROW]) <= min(values[SizeGroup.NORMAL]) + 1e-12
        assert max(values[SizeGroup.NORMAL]) <= min(values[SizeGroup.WIDE]) + 1e-12

    @settings(max_examples=40, deadline=None)
    @given(
        values=st.lists(st.floats(0.1, 99, allow_nan=False), min_size=10, max_size=60),
        seed=st.integers(0, 2**16),
    )
    def test_permutation_invariance(self, values, seed):
        entries = entries_from(values)
        shuffled = list(entries)
        random.Random(seed).shuffle(shuffled)
        assert partition_by_quantile(entries) == partition_by_quantile(shuffled)

    def test_matches_sort_oracle_sizes(self):
        rng = random.Random(23)
        entries = entries_from([rng.choice([1.0, 2.0, 3.0]) for _ in range(250)])
        groups = partition_by_quantile(entries)
        ranked = sorted(entries, key=lambda e: (e[2], e[0]))
        k = int(0.1 * len(entries))
        expect_narrow = {e[0] for e in ranked[:k]}
        expect_wide = {e[0] for e in ranked[-k:]}
        assert {k_ for k_, g in groups.items() if g is SizeGroup.NARROW} == expect_narrow
        assert {k_ for k_, g in groups.items() if g is SizeGroup.WIDE} == expect_wide


class TestSummary:
    def test_per_class_counts(self):
        entries = (
            entries_from(range(1, 11), DiseaseClass.BLAST)
            + [(f"b{i}", DiseaseClass.RED, float(100 + i)) for i in range(10)]
        )
        groups = partition_by_quantile(entries)
        rows = summarize_partition(entries, groups)
        assert [r[0] for r in rows] == ["Blast", "Red"]
        for label, narrow, normal, wide in rows:
            assert narrow + normal + wide == 10
