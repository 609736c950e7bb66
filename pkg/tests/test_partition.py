import numpy as np
import pytest

from aler.ingest import EmbeddingMatrix
from aler.partition import (
    chunk_count,
    kmeans_partition,
    load_chunks,
    sample_records,
    save_chunks,
)

from conftest import unit_rows


def random_assignment_inertia(vectors, n, rng):
    """Independent oracle: inertia of a uniformly random assignment with
    centroids set to the normalized cluster means."""
    assign = rng.integers(0, n, size=vectors.shape[0])
    total = 0.0
    for cluster in range(n):
        members = vectors[assign == cluster]
        if len(members) == 0:
            continue
        centroid = members.mean(axis=0)
        norm = np.linalg.norm(centroid)
        if norm > 0:
            centroid = centroid / norm
        total += float(np.sum(1.0 - members @ centroid))
    return total


class TestSampleRecords:
    def test_proportion(self):
        ids = [f"r{i}" for i in range(1000)]
        plan = sample_records(ids, 0.2, seed=1)
        assert len(plan.sampled_ids) == 200
        assert len(set(plan.sampled_ids)) == 200

    def test_full_sample(self):
        ids = [f"r{i}" for i in range(37)]
        plan = sample_records(ids, 1.0, seed=2)
        assert set(plan.sampled_ids) == set(ids)

    def test_deterministic(self):
        ids = [f"r{i}" for i in range(100)]
        assert sample_records(ids, 0.3, seed=3).sampled_ids == sample_records(ids, 0.3, seed=3).sampled_ids

    def test_ceil_size(self):
        assert len(sample_records(list("abcdefghij"), 0.25, seed=0).sampled_ids) == 3

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            sample_records(["a"], 0.0, seed=0)
        with pytest.raises(ValueError):
            sample_records(["a"], 1.5, seed=0)


class TestChunkCount:
    @pytest.mark.parametrize("size,expected", [
        (1, 1), (2, 1), (9, 1), (10, 1), (11, 2), (100, 2), (101, 3),
        (200, 3), (1000, 3), (10000, 4), (1000000, 6),
    ])
    def test_values(self, size, expected):
        assert chunk_count(size) == expected

    def test_monotone_non_decreasing(self):
        values = [chunk_count(n) for n in range(1, 5000)]
        assert all(a <= b for a, b in zip(values, values[1:]))


class TestKmeansPartition:
    def _two_groups(self):
        rng = np.random.Generator(np.random.PCG64(0))
        a = np.tile([1.0, 0.0, 0.0, 0.0], (30, 1)) + rng.normal(scale=0.01, size=(30, 4))
        b = np.tile([0.0, 1.0, 0.0, 0.0], (30, 1)) + rng.normal(scale=0.01, size=(30, 4))
        rows = np.vstack([a, b]).astype(np.float32)
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        return EmbeddingMatrix([f"p{i:03d}" for i in range(60)], rows)

    def test_separable_groups(self):
        chunk_set = kmeans_partition(self._two_groups(), 2, seed=1)
        groups = [set(c) for c in chunk_set.chunks]
        first = {f"p{i:03d}" for i in range(30)}
        second = {f"p{i:03d}" for i in range(30, 60)}
        assert {frozenset(g) for g in groups} == {frozenset(first), frozenset(second)}

    def test_single_chunk(self):
        matrix = self._two_groups()
        chunk_set = kmeans_partition(matrix, 1, seed=2)
        assert set(chunk_set.chunks[0]) == set(matrix.ids)

    def test_partition_property(self):
        matrix = EmbeddingMatrix([f"x{i}" for i in range(200)], unit_rows(200, 8, seed=3))
        chunk_set = kmeans_partition(matrix, 5, seed=4)
        seen = [rid for chunk in chunk_set.chunks for rid in chunk]
        assert sorted(seen) == sorted(matrix.ids)
        assert all(len(c) > 0 for c in chunk_set.chunks)

    def test_deterministic_and_better_than_random(self):
        matrix = EmbeddingMatrix([f"x{i}" for i in range(500)], unit_rows(500, 16, seed=5))
        a = kmeans_partition(matrix, 3, seed=6)
        b = kmeans_partition(matrix, 3, seed=6)
        assert a.chunks == b.chunks
        rng = np.random.Generator(np.random.PCG64(7))
        vectors = matrix.vectors.astype(np.float64)
        random_inertias = [random_assignment_inertia(vectors, 3, rng) for _ in range(100)]
        assert a.inertia_history[-1] <= min(random_inertias)

    def test_inertia_monotone_non_increasing(self):
        matrix = EmbeddingMatrix([f"x{i}" for i in range(300)], unit_rows(300, 8, seed=8))
        chunk_set = kmeans_partition(matrix, 4, seed=9)
        hist = chunk_set.inertia_history
        assert all(a >= b - 1e-9 for a, b in zip(hist, hist[1:]))

    def test_empty_cluster_repair(self):
        # duplicated points force centroid collisions, so some cluster must be reseeded
        row_a = unit_rows(1, 4, seed=10)[0]
        row_b = unit_rows(1, 4, seed=11)[0]
        rows = np.vstack([np.tile(row_a, (10, 1)), np.tile(row_b, (10, 1))]).astype(np.float32)
        matrix = EmbeddingMatrix([f"d{i}" for i in range(20)], rows)
        chunk_set = kmeans_partition(matrix, 3, seed=12)
        assert all(len(c) > 0 for c in chunk_set.chunks)
        assert sum(len(c) for c in chunk_set.chunks) == 20

    def test_n_larger_than_sample_rejected(self):
        matrix = EmbeddingMatrix(["a", "b"], unit_rows(2, 4, seed=13))
        with pytest.raises(ValueError):
            kmeans_partition(matrix, 3, seed=0)

    def test_members_nearest_own_centroid_at_convergence(self):
        matrix = EmbeddingMatrix([f"x{i}" for i in range(200)], unit_rows(200, 8, seed=14))
        chunk_set = kmeans_partition(matrix, 4, seed=15)
        for ci, chunk in enumerate(chunk_set.chunks):
            for rid in chunk:
                sims = chunk_set.centroids @ matrix.vector(rid).astype(np.float64)
                assert sims[ci] >= sims.max() - 1e-9

    def test_chunk_file_round_trip(self, tmp_path):
        matrix = self._two_groups()
        chunk_set = kmeans_partition(matrix, 2, seed=16)
        path = tmp_path / "chunks.csv"
        save_chunks(path, chunk_set, header_comment="test")
        assert load_chunks(path) == chunk_set.chunks
