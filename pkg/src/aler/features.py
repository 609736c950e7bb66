"""Pair featurization: embedding interaction vectors and lexical similarities."""

from __future__ import annotations

import numpy as np

# Winkler prefix boost: canonical parameters.
_WINKLER_PREFIX_CAP = 4
_WINKLER_SCALE = 0.1


def interaction_vector(v_r: np.ndarray, v_s: np.ndarray) -> np.ndarray:
    """Concatenate [v_r | v_s | |v_r - v_s| | v_r * v_s] as float64, length 4d."""
    v_r = np.asarray(v_r, dtype=np.float64)
    v_s = np.asarray(v_s, dtype=np.float64)
    if v_r.shape != v_s.shape or v_r.ndim != 1:
        raise ValueError(f"dim mismatch: {v_r.shape} vs {v_s.shape}")
    return np.concatenate([v_r, v_s, np.abs(v_r - v_s), v_r * v_s])


def interaction_matrix(rows_r: np.ndarray, rows_s: np.ndarray) -> np.ndarray:
    """Vectorized interaction_vector over aligned row pairs, shape (n, 4d)."""
    rows_r = np.asarray(rows_r, dtype=np.float64)
    rows_s = np.asarray(rows_s, dtype=np.float64)
    if rows_r.shape != rows_s.shape:
        raise ValueError(f"dim mismatch: {rows_r.shape} vs {rows_s.shape}")
    return np.hstack([rows_r, rows_s, np.abs(rows_r - rows_s), rows_r * rows_s])


def _jaro(a: str, b: str) -> float:
    la, lb = len(a), len(b)
    window = max(max(la, lb) // 2 - 1, 0)
    a_match = [False] * la
    b_match = [False] * lb
    matches = 0
    for i, ch in enumerate(a):
        lo = max(0, i - window)
        hi = min(i + window + 1, lb)
        for j in range(lo, hi):
            if not b_match[j] and b[j] == ch:
                a_match[i] = b_match[j] = True
                matches += 1
                break
    if matches == 0:
        return 0.0
    # Half-transposition count over matched characters in order.
    transpositions = 0
    j = 0
    for i in range(la):
        if not a_match[i]:
            continue
        while not b_match[j]:
            j += 1
        if a[i] != b[j]:
            transpositions += 1
        j += 1
    t = transpositions / 2.0
    m = float(matches)
    return (m / la + m / lb + (m - t) / m) / 3.0


def jaro_winkler(a: str, b: str) -> float:
    """Jaro similarity with Winkler prefix boost.

    Strings are trimmed and lowercased before comparison. Both empty -> 1.0,
    exactly one empty -> 0.0.
    """
    a = a.strip().lower()
    b = b.strip().lower()
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    jaro = _jaro(a, b)
    prefix = 0
    for ca, cb in zip(a, b):
        if ca != cb or prefix >= _WINKLER_PREFIX_CAP:
            break
        prefix += 1
    return jaro + prefix * _WINKLER_SCALE * (1.0 - jaro)


def lexical_tail(values_r: list[str], values_s: list[str]) -> np.ndarray:
    """One jaro_winkler per aligned attribute value pair."""
    if len(values_r) != len(values_s):
        raise ValueError("attribute value lists differ in length")
    return np.array([jaro_winkler(x, y) for x, y in zip(values_r, values_s)], dtype=np.float64)


def lexical_feature_vector(
    pair: tuple[str, str],
    records_r,
    records_s,
    key_attrs: list[str],
    embeddings_r,
    embeddings_s,
) -> np.ndarray:
    """Interaction block followed by key-attribute jaro_winkler similarities.

    Missing attribute values are treated as empty strings.
    """
    r_id, s_id = pair
    inter = interaction_vector(embeddings_r.vector(r_id), embeddings_s.vector(s_id))
    vals_r = [records_r.value(r_id, a) for a in key_attrs]
    vals_s = [records_s.value(s_id, a) for a in key_attrs]
    return np.concatenate([inter, lexical_tail(vals_r, vals_s)])
