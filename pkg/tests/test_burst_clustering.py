import itertools
from collections import Counter

import numpy as np
import pytest

from dcvdn.burst_clustering import (aggregate_documents, burst_frame_times,
                                    cluster_offsets)
from dcvdn.corpus import DanmuEvent, VideoRecord
from dcvdn.errors import EmptyInput, InvalidInput


def brute_force(offsets, k):
    """Minimum objective over all contiguous k-partitions, plus the
    lexicographically smallest optimal boundary tuple."""
    n = len(offsets)
    arr = np.asarray(offsets, dtype=float)
    best_obj, best_bounds = None, None
    for bounds in itertools.combinations(range(1, n), k - 1):
        cuts = (0,) + bounds + (n,)
        obj = 0.0
        for a, b in zip(cuts, cuts[1:]):
            seg = arr[a:b]
            obj += float(((seg - seg.mean()) ** 2).sum())
        if best_obj is None or obj < best_obj - 1e-12:
            best_obj, best_bounds = obj, bounds
    return best_obj, best_bounds


def lloyd_1d(offsets, k, rng):
    """Plain Lloyd iterations with random init: the reference upper bound."""
    x = np.asarray(offsets, dtype=float)
    centers = np.sort(rng.choice(x, size=k, replace=False))
    for _ in range(100):
        assign = np.abs(x[:, None] - centers[None, :]).argmin(axis=1)
        new = centers.copy()
        for j in range(k):
            if (assign == j).any():
                new[j] = x[assign == j].mean()
        if np.allclose(new, centers):
            break
        centers = new
    assign = np.abs(x[:, None] - centers[None, :]).argmin(axis=1)
    return float(((x - centers[assign]) ** 2).sum())


class TestClusterOffsets:
    def test_two_tight_groups(self):
        part = cluster_offsets([1, 1, 1, 10, 10, 10], 2)
        assert part.assignments == [0, 0, 0, 1, 1, 1]
        assert part.centroids == [1.0, 10.0]
        assert part.objective == 0.0

    def test_single_cluster_mean(self):
        part = cluster_offsets([0, 1, 2, 3], 1)
        assert part.centroids == [1.5]
        assert abs(part.objective - 5.0) < 1e-12

    def test_matches_brute_force_seeded(self):
        rng = np.random.default_rng(42)
        offsets = np.sort(rng.uniform(0, 100, size=7))
        part = cluster_offsets(list(offsets), 3)
        best_obj, _ = brute_force(offsets, 3)
        assert abs(part.objective - best_obj) < 1e-9

    def test_acceptance_scale_brute_force(self):
        rng = np.random.default_rng(7)
        for trial in range(100):
            n = int(rng.integers(1, 9))
            k = int(rng.integers(1, 4))
            offsets = np.sort(rng.uniform(0, 50, size=n))
            d = len(np.unique(offsets))
            part = cluster_offsets(list(offsets), k)
            k_eff = min(k, d)
            best_obj, best_bounds = brute_force(offsets, k_eff)
            assert abs(part.objective - best_obj) < 1e-9, f"trial {trial}"

    def test_tie_prefers_smallest_boundary(self):
        # both {0 | 1 2} and {0 1 | 2} cost 0.5; smallest boundary wins
        part = cluster_offsets([0.0, 1.0, 2.0], 2)
        assert part.assignments == [0, 1, 1]

    def test_lexicographic_boundaries_on_seeded_ties(self):
        rng = np.random.default_rng(15)
        for _ in range(50):
            n = int(rng.integers(2, 8))
            k = int(rng.integers(2, 4))
            offsets = np.sort(rng.integers(0, 4, size=n).astype(float))
            d = len(np.unique(offsets))
            if d < k:
                continue
            part = cluster_offsets(list(offsets), k)
            _, best_bounds = brute_force(offsets, k)
            got = tuple(i for i in range(1, n)
                        if part.assignments[i] != part.assignments[i - 1])
            assert got == best_bounds

    def test_objective_recomputable_from_assignments(self):
        rng = np.random.default_rng(3)
        offsets = np.sort(rng.uniform(0, 60, size=25))
        part = cluster_offsets(list(offsets), 4)
        recomputed = 0.0
        for j in range(4):
            seg = offsets[np.asarray(part.assignments) == j]
            recomputed += float(((seg - seg.mean()) ** 2).sum())
        assert abs(part.objective - recomputed) < 1e-9

    def test_degenerate_padding(self):
        part = cluster_offsets([2.0, 2.0, 2.0], 2)
        assert part.degenerate == [False, True]
        assert part.assignments == [0, 0, 0]
        assert part.centroids == [2.0, 2.0]
        assert part.objective == 0.0

    def test_not_better_than_lloyd(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            n = int(rng.integers(5, 40))
            k = int(rng.integers(1, 6))
            offsets = np.sort(rng.uniform(0, 100, size=n))
            if len(np.unique(offsets)) < k:
                continue
            exact = cluster_offsets(list(offsets), k).objective
            assert exact <= lloyd_1d(offsets, k, rng) + 1e-9

    def test_shift_invariance(self):
        rng = np.random.default_rng(21)
        offsets = np.sort(rng.uniform(0, 30, size=12))
        base = cluster_offsets(list(offsets), 3)
        shifted = cluster_offsets(list(offsets + 17.5), 3)
        assert shifted.assignments == base.assignments
        assert np.allclose(np.asarray(shifted.centroids) - 17.5, base.centroids)
        assert abs(shifted.objective - base.objective) < 1e-7

    def test_scale_invariance(self):
        rng = np.random.default_rng(22)
        offsets = np.sort(rng.uniform(0, 30, size=12))
        base = cluster_offsets(list(offsets), 3)
        scaled = cluster_offsets(list(offsets * 4.0), 3)
        assert scaled.assignments == base.assignments
        assert abs(scaled.objective - 16.0 * base.objective) < 1e-7

    def test_errors(self):
        with pytest.raises(EmptyInput):
            cluster_offsets([], 2)
        with pytest.raises(InvalidInput):
            cluster_offsets([3.0, 1.0], 1)
        with pytest.raises(InvalidInput):
            cluster_offsets([1.0], 0)


def make_video(video_id, offsets, texts):
    return VideoRecord(video_id=video_id, duration=max(offsets),
                       danmus=[DanmuEvent(video_id, o, t)
                               for o, t in zip(offsets, texts)])


class TestAggregateDocuments:
    def test_offset_order_concatenation(self):
        video = make_video("v1", [1.0, 2.0], ["a", "b"])
        part = cluster_offsets([1.0, 2.0], 1, video_id="v1")
        docs = aggregate_documents(video, part)
        assert docs[0].text == "a b"

    def test_degenerate_document(self):
        video = make_video("v1", [3.0], ["only"])
        part = cluster_offsets([3.0], 2, video_id="v1")
        docs = aggregate_documents(video, part)
        assert docs[0].text == "only" and not docs[0].degenerate
        assert docs[1].text == "" and docs[1].degenerate

    def test_token_multiset_preserved(self):
        rng = np.random.default_rng(5)
        offsets = np.sort(rng.uniform(0, 100, size=20))
        texts = [f"tok{rng.integers(0, 9)} tok{rng.integers(0, 9)}" for _ in range(20)]
        video = make_video("v9", list(offsets), texts)
        part = cluster_offsets(list(offsets), 10, video_id="v9")
        docs = aggregate_documents(video, part)
        assert len(docs) == 10
        corpus_tokens = Counter(t for txt in texts for t in txt.split())
        doc_tokens = Counter(t for d in docs for t in d.tokens())
        assert doc_tokens == corpus_tokens

    def test_documents_ordered_by_burst_point(self):
        rng = np.random.default_rng(6)
        offsets = np.sort(rng.uniform(0, 100, size=15))
        video = make_video("v2", list(offsets), ["x"] * 15)
        docs = aggregate_documents(video, cluster_offsets(list(offsets), 5, "v2"))
        bursts = [d.burst_point for d in docs]
        assert bursts == sorted(bursts)

    def test_video_id_mismatch(self):
        video = make_video("v1", [1.0], ["a"])
        part = cluster_offsets([1.0], 1, video_id="other")
        with pytest.raises(InvalidInput):
            aggregate_documents(video, part)


class TestBurstFrameTimes:
    def test_plain(self):
        part = cluster_offsets([1.0, 1.0, 10.0, 10.0], 2)
        assert burst_frame_times(part) == [1.0, 10.0]

    def test_degenerate_inherits(self):
        part = cluster_offsets([4.2], 2)
        assert burst_frame_times(part) == [4.2, 4.2]

    def test_sorted_ascending_over_seeded_partitions(self):
        rng = np.random.default_rng(13)
        for _ in range(100):
            n = int(rng.integers(1, 30))
            k = int(rng.integers(1, 12))
            offsets = np.sort(rng.uniform(0, 200, size=n))
            times = burst_frame_times(cluster_offsets(list(offsets), k))
            assert len(times) == k
            assert all(a <= b for a, b in zip(times, times[1:]))
