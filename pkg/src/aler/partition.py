"""Representative sampling and K-Means chunking of the query-side embeddings."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ingest import EmbeddingMatrix

DEFAULT_SAMPLE_PROPORTION = 0.2
DEFAULT_MAX_ITERS = 100


@dataclass
class SamplePlan:
    g_s: float
    seed: int
    sampled_ids: list[str]


@dataclass
class ChunkSet:
    chunks: list[list[str]]
    centroids: np.ndarray
    inertia_history: list[float] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.chunks)


def sample_records(ids: list[str], g_s: float, seed: int) -> SamplePlan:
    """Uniform sample without replacement of ceil(g_s * |ids|) record ids."""
    if not 0.0 < g_s <= 1.0:
        raise ValueError(f"sample proportion must be in (0, 1], got {g_s}")
    if not ids:
        raise ValueError("cannot sample from an empty id list")
    size = int(np.ceil(g_s * len(ids)))
    rng = np.random.Generator(np.random.PCG64(seed))
    picked = rng.choice(len(ids), size=size, replace=False)
    return SamplePlan(g_s=g_s, seed=seed, sampled_ids=[ids[i] for i in picked])


def chunk_count(sample_size: int) -> int:
    """ceil(log10(sample_size)) with a floor of 1; digit arithmetic keeps powers of ten exact."""
    if sample_size < 1:
        raise ValueError("sample_size must be >= 1")
    if sample_size <= 1:
        return 1
    return max(1, len(str(sample_size - 1)))


def _spherical_inertia(vectors: np.ndarray, centroids: np.ndarray, assign: np.ndarray) -> float:
    return float(np.sum(1.0 - np.einsum("ij,ij->i", vectors, centroids[assign])))


def _plusplus_init(vectors: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: iteratively draw centers with probability proportional
    to squared distance from the nearest already-chosen center."""
    count = vectors.shape[0]
    centers = [int(rng.integers(count))]
    d2 = np.sum((vectors - vectors[centers[0]]) ** 2, axis=1)
    while len(centers) < n:
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with a center; fall back to uniform
            choices = np.setdiff1d(np.arange(count), np.array(centers))
            centers.append(int(rng.choice(choices)))
        else:
            centers.append(int(rng.choice(count, p=d2 / total)))
        d2 = np.minimum(d2, np.sum((vectors - vectors[centers[-1]]) ** 2, axis=1))
    return vectors[centers].copy()


def _renormalize(centroids: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(centroids, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return centroids / norms


def kmeans_partition(
    matrix: EmbeddingMatrix,
    n: int,
    seed: int,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> ChunkSet:
    """Spherical K-Means over unit vectors: Lloyd updates with centroid
    renormalization, k-means++ init, empty clusters reseeded from the farthest
    point of the largest cluster. Converges when no assignment changes."""
    count = len(matrix)
    if n > count:
        raise ValueError(f"cannot build {n} chunks from {count} samples")
    if n < 1:
        raise ValueError("chunk count must be >= 1")
    vectors = matrix.vectors.astype(np.float64)
    rng = np.random.Generator(np.random.PCG64(seed))
    centroids = _renormalize(_plusplus_init(vectors, n, rng))
    assign = np.full(count, -1, dtype=np.int64)
    inertia_history: list[float] = []
    for _ in range(max_iters):
        sims = vectors @ centroids.T
        new_assign = np.argmax(sims, axis=1)
        # repair empty clusters before accepting the assignment
        for cluster in range(n):
            if np.any(new_assign == cluster):
                continue
            counts = np.bincount(new_assign, minlength=n)
            largest = int(np.argmax(counts))
            members = np.where(new_assign == largest)[0]
            member_sims = vectors[members] @ centroids[largest]
            farthest = members[int(np.argmin(member_sims))]
            new_assign[farthest] = cluster
            centroids[cluster] = vectors[farthest]
        converged = np.array_equal(new_assign, assign)
        assign = new_assign
        for cluster in range(n):
            members = vectors[assign == cluster]
            centroids[cluster] = members.mean(axis=0)
        centroids = _renormalize(centroids)
        inertia_history.append(_spherical_inertia(vectors, centroids, assign))
        if converged:
            break
    chunks: list[list[str]] = [[] for _ in range(n)]
    for i, cluster in enumerate(assign):
        chunks[cluster].append(matrix.ids[i])
    return ChunkSet(chunks=chunks, centroids=centroids, inertia_history=inertia_history)


def save_chunks(path: str | Path, chunk_set: ChunkSet, header_comment: str | None = None) -> None:
    """Two-column text export: record_id,chunk."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["record_id", "chunk"])
        for i, chunk in enumerate(chunk_set.chunks):
            for rid in chunk:
                writer.writerow([rid, i])


def load_chunks(path: str | Path) -> list[list[str]]:
    chunks: dict[int, list[str]] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#") and line.strip()))
    for row in rows[1:]:
        chunks.setdefault(int(row[1]), []).append(row[0])
    return [chunks[i] for i in sorted(chunks)]
