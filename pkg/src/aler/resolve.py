"""Two-stage cascade resolution on held-out records, and evaluation metrics.

Stage 1 scores embedding interaction vectors with the recall model and keeps
pairs above its threshold; stage 2 computes the costlier lexical features only
for those survivors and filters with the precision model's threshold.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import mlp
from .features import interaction_matrix, lexical_tail
from .hnsw import HnswIndex
from .ingest import EmbeddingMatrix, MatchSet, RecordCollection


@dataclass
class CascadeStats:
    candidate_count: int
    stage1_survivors: int
    stage2_survivors: int
    lexical_featurizations: int


@dataclass
class PredictedMatch:
    r_id: str
    s_id: str
    stage1_prob: float
    stage2_prob: float


@dataclass
class Metrics:
    precision: float
    recall: float
    f1: float
    blocking_recall: float
    tp: int
    fp: int
    fn: int
    candidate_count: int

    def as_dict(self) -> dict:
        return {
            "precision": self.precision, "recall": self.recall, "f1": self.f1,
            "blocking_recall": self.blocking_recall,
            "tp": self.tp, "fp": self.fp, "fn": self.fn,
            "candidate_count": self.candidate_count,
        }


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def generate_candidates(index: HnswIndex, query_embeddings: EmbeddingMatrix, k: int,
                        exclusion: set[str], ef_search: int | None = None) -> list[tuple[str, str]]:
    """Top-k pairs for every query record whose id is not excluded."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ef = ef_search if ef_search is not None else max(64, 4 * k)
    out: list[tuple[str, str]] = []
    for r_id in query_embeddings.ids:
        if r_id in exclusion:
            continue
        for nb in index.query(query_embeddings.vector(r_id), k, max(ef, k)):
            out.append((r_id, nb.id))
    return out


def resolve(
    candidates: list[tuple[str, str]],
    m_r: mlp.MlpModel,
    theta_r: float,
    m_p: mlp.MlpModel,
    theta_p: float,
    records_r: RecordCollection,
    records_s: RecordCollection,
    key_attrs: list[str],
    embeddings_r: EmbeddingMatrix,
    embeddings_s: EmbeddingMatrix,
    batch_size: int = 8192,
) -> tuple[list[PredictedMatch], CascadeStats]:
    """Run the cascade; output sorted by stage-2 probability descending."""
    survivors: list[tuple[str, str]] = []
    stage1_probs: list[float] = []
    for start in range(0, len(candidates), batch_size):
        batch = candidates[start:start + batch_size]
        rows_r = embeddings_r.vectors[[embeddings_r.row(r) for r, _ in batch]]
        rows_s = embeddings_s.vectors[[embeddings_s.row(s) for _, s in batch]]
        probs = mlp.predict_batch(m_r, interaction_matrix(rows_r, rows_s))
        for pair, p in zip(batch, probs):
            if p > theta_r:
                survivors.append(pair)
                stage1_probs.append(float(p))

    lexical_count = 0
    matches: list[PredictedMatch] = []
    for start in range(0, len(survivors), batch_size):
        batch = survivors[start:start + batch_size]
        batch_p1 = stage1_probs[start:start + batch_size]
        rows_r = embeddings_r.vectors[[embeddings_r.row(r) for r, _ in batch]]
        rows_s = embeddings_s.vectors[[embeddings_s.row(s) for _, s in batch]]
        inter = interaction_matrix(rows_r, rows_s)
        tails = np.empty((len(batch), len(key_attrs)), dtype=np.float64)
        for i, (r_id, s_id) in enumerate(batch):
            vals_r = [records_r.value(r_id, a) for a in key_attrs]
            vals_s = [records_s.value(s_id, a) for a in key_attrs]
            tails[i] = lexical_tail(vals_r, vals_s)
            lexical_count += 1
        probs2 = mlp.predict_batch(m_p, np.hstack([inter, tails]))
        for (r_id, s_id), p1, p2 in zip(batch, batch_p1, probs2):
            if p2 > theta_p:
                matches.append(PredictedMatch(r_id, s_id, p1, float(p2)))

    matches.sort(key=lambda m: (-m.stage2_prob, m.r_id, m.s_id))
    stats = CascadeStats(
        candidate_count=len(candidates),
        stage1_survivors=len(survivors),
        stage2_survivors=len(matches),
        lexical_featurizations=lexical_count,
    )
    return matches, stats


def evaluate(predicted: set[tuple[str, str]], truth: MatchSet,
             candidates: list[tuple[str, str]], exclusion: set[str]) -> Metrics:
    """Precision/recall/F1 over non-excluded truth, plus blocking recall."""
    effective_truth = {(r, s) for r, s in truth.pairs if r not in exclusion}
    if not effective_truth:
        raise ValueError("no true matches remain after exclusion filtering")
    predicted = {(r, s) for r, s in predicted if r not in exclusion}
    tp = len(predicted & effective_truth)
    fp = len(predicted) - tp
    fn = len(effective_truth) - tp
    precision = tp / (tp + fp) if predicted else 0.0
    recall = tp / len(effective_truth)
    blocking_hits = len(set(candidates) & effective_truth)
    return Metrics(
        precision=precision,
        recall=recall,
        f1=f1_score(precision, recall),
        blocking_recall=blocking_hits / len(effective_truth),
        tp=tp, fp=fp, fn=fn,
        candidate_count=len(candidates),
    )


def save_matches(path: str | Path, matches: list[PredictedMatch],
                 header_comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["r_id", "s_id", "stage1_prob", "stage2_prob"])
        for m in matches:
            writer.writerow([m.r_id, m.s_id, f"{m.stage1_prob:.6f}", f"{m.stage2_prob:.6f}"])


def load_matches(path: str | Path) -> list[PredictedMatch]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(line for line in fh if not line.startswith("#") and line.strip()))
    return [PredictedMatch(r, s, float(p1), float(p2)) for r, s, p1, p2 in rows[1:]]


def save_metrics(path_txt: str | Path, path_json: str | Path, metrics: Metrics,
                 header_comment: str | None = None) -> None:
    """Key = value text report plus a JSON twin."""
    with open(path_txt, "w", encoding="utf-8") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        for key, value in metrics.as_dict().items():
            if isinstance(value, float):
                fh.write(f"{key} = {value:.6f}\n")
            else:
                fh.write(f"{key} = {value}\n")
    with open(path_json, "w", encoding="utf-8") as fh:
        json.dump(metrics.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
