import numpy as np
import pytest

from aler.ingest import EmbeddingMatrix


def unit_rows(n: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(seed))
    rows = rng.normal(size=(n, dim)).astype(np.float32)
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows


@pytest.fixture
def random_matrix():
    def make(n: int, dim: int, seed: int = 0, prefix: str = "s") -> EmbeddingMatrix:
        return EmbeddingMatrix([f"{prefix}{i:05d}" for i in range(n)], unit_rows(n, dim, seed))
    return make
