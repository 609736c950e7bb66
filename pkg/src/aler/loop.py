"""Partitioned active-learning orchestration.

Per chunk, a mini loop alternates: retrain the recall classifier from scratch
on everything labeled so far, score it on the fixed validation set, stop early
on stagnation, score the chunk's candidate pool, pick a new query batch with
the configured strategy, and fuse the oracle's answers into the training set.
After all chunks, both cascade classifiers are retrained on the full labeled
set and their decision thresholds picked on the validation set.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import mlp
from .features import interaction_matrix, lexical_tail
from .hnsw import HnswIndex
from .ingest import EmbeddingMatrix, RecordCollection
from .oracle import BudgetExhaustedError
from .partition import ChunkSet

STRATEGIES = ("hybrid", "uncertainty", "random")


@dataclass
class LoopConfig:
    b_seed: int = 100
    b: int = 300
    i_max: int = 8
    patience: int = 2
    min_delta: float = 0.05
    g_v: float = 0.1
    validation_cap: int = 1000
    k: int = 10
    confident_fraction: float = 0.5
    seed: int = 0
    ef_search: int | None = None
    train: mlp.TrainConfig = field(default_factory=mlp.TrainConfig)

    def validate(self):
        for name in ("b_seed", "b", "patience", "validation_cap", "k"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.i_max < 0:
            raise ValueError("i_max must be >= 0")
        if not 0.0 < self.g_v <= 1.0:
            raise ValueError("g_v must be in (0, 1]")
        if not 0.0 <= self.confident_fraction <= 1.0:
            raise ValueError("confident_fraction must be in [0, 1]")
        if self.min_delta < 0:
            raise ValueError("min_delta must be >= 0")


@dataclass
class CandidatePool:
    chunk_index: int
    pairs: list[tuple[str, str]]

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass
class LabeledEntry:
    pair: tuple[str, str]
    label: int
    provenance: str


class LabeledSet:
    def __init__(self):
        self.entries: list[LabeledEntry] = []
        self._index: dict[tuple[str, str], int] = {}

    def add(self, pair: tuple[str, str], label: int, provenance: str):
        if pair in self._index:
            raise ValueError(f"pair {pair} labeled twice")
        self._index[pair] = len(self.entries)
        self.entries.append(LabeledEntry(pair, label, provenance))

    def pairs(self) -> set[tuple[str, str]]:
        return set(self._index)

    def labels(self) -> np.ndarray:
        return np.array([e.label for e in self.entries], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, pair: tuple[str, str]) -> bool:
        return pair in self._index


@dataclass
class BudgetLedger:
    seed_count: int = 0
    validation_count: int = 0
    loop_counts: dict[tuple[int, int], int] = field(default_factory=dict)
    hard_cap: int | None = None
    truncated: bool = False

    @property
    def loop_total(self) -> int:
        return sum(self.loop_counts.values())

    @property
    def total(self) -> int:
        return self.seed_count + self.validation_count + self.loop_total

    def check(self):
        if self.hard_cap is not None and self.total > self.hard_cap:
            raise AssertionError(f"ledger total {self.total} exceeds hard cap {self.hard_cap}")


@dataclass
class TrainedArtifacts:
    m_r: mlp.MlpModel
    theta_r: float
    m_p: mlp.MlpModel
    theta_p: float
    ledger: BudgetLedger
    f1_history: list[tuple[int, int, float]]  # (chunk, iteration, f1 on validation)
    training_set: LabeledSet
    validation_set: LabeledSet
    key_attrs: list[str]
    n_chunks: int

    def exclusion_set(self) -> set[str]:
        ids: set[str] = set()
        for entry in list(self.training_set.entries) + list(self.validation_set.entries):
            ids.add(entry.pair[0])
            ids.add(entry.pair[1])
        return ids


def build_pools(chunks: ChunkSet | list[list[str]], index: HnswIndex,
                embeddings_r: EmbeddingMatrix, k: int,
                ef_search: int | None = None) -> list[CandidatePool]:
    """Per chunk, the union of each member's top-k neighbor pairs."""
    chunk_lists = chunks.chunks if isinstance(chunks, ChunkSet) else chunks
    ef = ef_search if ef_search is not None else max(64, 4 * k)
    pools = []
    for i, chunk in enumerate(chunk_lists):
        seen: set[tuple[str, str]] = set()
        pairs: list[tuple[str, str]] = []
        for r_id in chunk:
            for nb in index.query(embeddings_r.vector(r_id), k, max(ef, k)):
                pair = (r_id, nb.id)
                if pair not in seen:
                    seen.add(pair)
                    pairs.append(pair)
        pools.append(CandidatePool(chunk_index=i, pairs=pairs))
    return pools


def validation_quota(pool_sizes: list[int], g_v: float, cap: int) -> list[int]:
    """ceil(g_v * size) per pool, scaled proportionally (largest remainder)
    down to the cap when the stratified total would exceed it."""
    wanted = [math.ceil(g_v * s) if s else 0 for s in pool_sizes]
    total = sum(wanted)
    if total <= cap:
        return wanted
    scaled = [w * cap / total for w in wanted]
    floors = [int(f) for f in scaled]
    shortfall = cap - sum(floors)
    remainders = sorted(range(len(scaled)), key=lambda i: (floors[i] - scaled[i], i))
    for i in remainders[:shortfall]:
        floors[i] += 1
    return floors


def build_validation(pools: list[CandidatePool], g_v: float, cap: int,
                     oracle, seed: int) -> LabeledSet:
    """Stratified fixed validation set, labeled up front and never touched again."""
    rng = np.random.Generator(np.random.PCG64(seed))
    quotas = validation_quota([len(p) for p in pools], g_v, cap)
    picked: list[tuple[str, str]] = []
    for pool, quota in zip(pools, quotas):
        if quota == 0:
            continue
        rows = rng.choice(len(pool.pairs), size=min(quota, len(pool.pairs)), replace=False)
        picked.extend(pool.pairs[r] for r in sorted(rows))
    validation = LabeledSet()
    try:
        labels = oracle.label_pairs(picked, provenance="validation")
    except BudgetExhaustedError as exc:
        raise BudgetExhaustedError(
            "budget exhausted while building the validation set; partial set rejected"
        ) from exc
    for pair, label in zip(picked, labels):
        validation.add(pair, label, "validation")
    return validation


def select_pairs(scored_pool: list[tuple[tuple[str, str], float]], b: int,
                 confident_fraction: float,
                 already_labeled: set[tuple[str, str]]) -> list[tuple[str, str]]:
    """Hybrid query batch: the most confident pairs plus the most confused ones.

    ceil(confident_fraction * b) slots go to the highest probabilities, the
    rest to the smallest |p - 0.5|; collisions fall through to the next-best
    confused pair. Fewer than b eligible pairs means all of them.
    """
    eligible = [(pair, prob) for pair, prob in scored_pool if pair not in already_labeled]
    if len(eligible) <= b:
        return [pair for pair, _ in sorted(eligible, key=lambda e: e[0])]
    n_confident = math.ceil(confident_fraction * b)
    by_confidence = sorted(eligible, key=lambda e: (-e[1], e[0]))
    by_confusion = sorted(eligible, key=lambda e: (abs(e[1] - 0.5), e[0]))
    chosen: list[tuple[str, str]] = [pair for pair, _ in by_confidence[:n_confident]]
    taken = set(chosen)
    for pair, _ in by_confusion:
        if len(chosen) == b:
            break
        if pair not in taken:
            chosen.append(pair)
            taken.add(pair)
    return chosen


def select_random(scored_pool: list[tuple[tuple[str, str], float]], b: int,
                  already_labeled: set[tuple[str, str]],
                  rng: np.random.Generator) -> list[tuple[str, str]]:
    eligible = sorted(pair for pair, _ in scored_pool if pair not in already_labeled)
    if len(eligible) <= b:
        return eligible
    rows = rng.choice(len(eligible), size=b, replace=False)
    return [eligible[r] for r in sorted(rows)]


def early_stop(f1_history: list[float], patience: int, min_delta: float) -> bool:
    """True iff each of the last `patience` scores improved on the best score
    before it by less than min_delta."""
    if not f1_history:
        raise ValueError("f1 history must be non-empty")
    if len(f1_history) <= patience:
        return False
    for t in range(len(f1_history) - patience, len(f1_history)):
        if f1_history[t] - max(f1_history[:t]) >= min_delta:
            return False
    return True


def _derived_seed(seed: int, *key: int) -> int:
    return int(np.random.SeedSequence([seed & 0xFFFFFFFF, *key]).generate_state(1)[0])


def _threshold_on(probs: np.ndarray, labels: np.ndarray) -> mlp.ThresholdResult:
    """optimal_threshold, with a neutral fallback when the validation set
    happens to contain no positives (degenerate tiny runs)."""
    if int(labels.sum()) == 0:
        return mlp.ThresholdResult(threshold=0.5, f1_at_threshold=0.0)
    return mlp.optimal_threshold(probs, labels)


class _Featurizer:
    """Caches embedding rows so pool matrices are gathered, not rebuilt."""

    def __init__(self, embeddings_r: EmbeddingMatrix, embeddings_s: EmbeddingMatrix,
                 records_r: RecordCollection, records_s: RecordCollection,
                 key_attrs: list[str]):
        self.emb_r = embeddings_r
        self.emb_s = embeddings_s
        self.records_r = records_r
        self.records_s = records_s
        self.key_attrs = key_attrs

    def interaction(self, pairs: list[tuple[str, str]]) -> np.ndarray:
        rows_r = self.emb_r.vectors[[self.emb_r.row(r) for r, _ in pairs]]
        rows_s = self.emb_s.vectors[[self.emb_s.row(s) for _, s in pairs]]
        return interaction_matrix(rows_r, rows_s)

    def lexical(self, pairs: list[tuple[str, str]]) -> np.ndarray:
        inter = self.interaction(pairs)
        tails = np.empty((len(pairs), len(self.key_attrs)), dtype=np.float64)
        for i, (r_id, s_id) in enumerate(pairs):
            vals_r = [self.records_r.value(r_id, a) for a in self.key_attrs]
            vals_s = [self.records_s.value(s_id, a) for a in self.key_attrs]
            tails[i] = lexical_tail(vals_r, vals_s)
        return np.hstack([inter, tails])


def _seed_pairs(pools: list[CandidatePool], b_seed: int, excluded: set[tuple[str, str]],
                rng: np.random.Generator) -> list[tuple[str, str]]:
    """Uniform draw from the first pool, topping up from later pools when short."""
    picked: list[tuple[str, str]] = []
    for pool in pools:
        candidates = [p for p in pool.pairs if p not in excluded]
        need = b_seed - len(picked)
        if need <= 0:
            break
        if len(candidates) <= need:
            picked.extend(candidates)
        else:
            rows = rng.choice(len(candidates), size=need, replace=False)
            picked.extend(candidates[r] for r in sorted(rows))
    return picked


def run(
    config: LoopConfig,
    pools: list[CandidatePool],
    embeddings_r: EmbeddingMatrix,
    embeddings_s: EmbeddingMatrix,
    records_r: RecordCollection,
    records_s: RecordCollection,
    key_attrs: list[str],
    oracle,
    strategy: str = "hybrid",
    status=None,
) -> TrainedArtifacts:
    """Execute the training phase end to end and return the cascade artifacts."""
    config.validate()
    if strategy not in STRATEGIES:
        raise ValueError(f"strategy must be one of {STRATEGIES}, got {strategy!r}")
    if not pools:
        raise ValueError("no candidate pools")
    ledger = BudgetLedger(hard_cap=getattr(oracle.budget, "hard_cap", None))
    feats = _Featurizer(embeddings_r, embeddings_s, records_r, records_s, key_attrs)

    validation = build_validation(pools, config.g_v, config.validation_cap, oracle,
                                  seed=_derived_seed(config.seed, 1))
    ledger.validation_count = len(validation)
    labeled: set[tuple[str, str]] = validation.pairs()

    training = LabeledSet()
    rng = np.random.Generator(np.random.PCG64(_derived_seed(config.seed, 2)))
    seed_batch = _seed_pairs(pools, config.b_seed, labeled, rng)
    truncated = False
    try:
        answers = oracle.label_pairs(seed_batch, provenance="seed")
        seeded = list(zip(seed_batch, answers))
    except BudgetExhaustedError as exc:
        seeded = exc.partial
        truncated = True
    for pair, label in seeded:
        training.add(pair, label, "seed")
        labeled.add(pair)
    ledger.seed_count = len(seeded)
    if len(training) < 2 or len(set(e.label for e in training.entries)) < 2:
        raise mlp.SingleClassError(
            f"seed set of {len(training)} pairs has a single class; raise b_seed")

    x_val = feats.interaction([e.pair for e in validation.entries])
    y_val = validation.labels()
    f1_history: list[tuple[int, int, float]] = []
    select_rng = np.random.Generator(np.random.PCG64(_derived_seed(config.seed, 3)))

    def train_on(features: np.ndarray, seed: int) -> mlp.MlpModel:
        cfg = replace(config.train, seed=seed)
        return mlp.train(features, training.labels(), cfg)

    for chunk_idx, pool in enumerate(pools):
        if truncated:
            break
        pool_feats = feats.interaction(pool.pairs) if pool.pairs else None
        chunk_history: list[float] = []
        for iteration in range(1, config.i_max + 1):
            model = train_on(feats.interaction([e.pair for e in training.entries]),
                             _derived_seed(config.seed, 10 + chunk_idx, iteration))
            th = _threshold_on(mlp.predict_batch(model, x_val), y_val)
            chunk_history.append(th.f1_at_threshold)
            f1_history.append((chunk_idx, iteration, th.f1_at_threshold))
            if status is not None:
                status.update(chunk=chunk_idx, iteration=iteration,
                              f1_history=[f for _, _, f in f1_history])
            if early_stop(chunk_history, config.patience, config.min_delta):
                break
            if pool_feats is None:
                break
            probs = mlp.predict_batch(model, pool_feats)
            scored = list(zip(pool.pairs, probs.tolist()))
            if strategy == "random":
                batch = select_random(scored, config.b, labeled, select_rng)
            else:
                fraction = 0.0 if strategy == "uncertainty" else config.confident_fraction
                batch = select_pairs(scored, config.b, fraction, labeled)
            if not batch:
                break
            try:
                got = list(zip(batch, oracle.label_pairs(batch, provenance=f"loop-{chunk_idx}-{iteration}")))
            except BudgetExhaustedError as exc:
                got = exc.partial
                truncated = True
            for pair, label in got:
                training.add(pair, label, f"loop-{chunk_idx}-{iteration}")
                labeled.add(pair)
            if got:
                ledger.loop_counts[(chunk_idx, iteration)] = len(got)
            if truncated:
                break

    ledger.truncated = truncated
    ledger.check()

    m_r = train_on(feats.interaction([e.pair for e in training.entries]),
                   _derived_seed(config.seed, 100))
    theta_r = _threshold_on(mlp.predict_batch(m_r, x_val), y_val)
    x_val_lex = feats.lexical([e.pair for e in validation.entries])
    m_p = train_on(feats.lexical([e.pair for e in training.entries]),
                   _derived_seed(config.seed, 101))
    theta_p = _threshold_on(mlp.predict_batch(m_p, x_val_lex), y_val)

    return TrainedArtifacts(
        m_r=m_r, theta_r=theta_r.threshold,
        m_p=m_p, theta_p=theta_p.threshold,
        ledger=ledger, f1_history=f1_history,
        training_set=training, validation_set=validation,
        key_attrs=list(key_attrs), n_chunks=len(pools),
    )


def save_ledger(path: str | Path, ledger: BudgetLedger, n_chunks: int,
                header_comment: str | None = None) -> None:
    """One-row delimited summary: N, B_seed, |V|, Loop, Total."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["N", "B_seed", "V", "Loop", "Total"])
        writer.writerow([n_chunks, ledger.seed_count, ledger.validation_count,
                         ledger.loop_total, ledger.total])


def save_ledger_detail(path: str | Path, ledger: BudgetLedger,
                       header_comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["provenance", "chunk", "iteration", "count"])
        writer.writerow(["validation", "", "", ledger.validation_count])
        writer.writerow(["seed", "", "", ledger.seed_count])
        for chunk, iteration in sorted(ledger.loop_counts):
            writer.writerow(["loop", chunk, iteration, ledger.loop_counts[(chunk, iteration)]])


def save_labels(path: str | Path, artifacts: TrainedArtifacts,
                header_comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["r_id", "s_id", "label", "provenance"])
        for entry in artifacts.validation_set.entries + artifacts.training_set.entries:
            writer.writerow([entry.pair[0], entry.pair[1], entry.label, entry.provenance])


def save_f1_history(path: str | Path, f1_history: list[tuple[int, int, float]],
                    header_comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["chunk", "iteration", "f1"])
        for chunk, iteration, f1 in f1_history:
            writer.writerow([chunk, iteration, f"{f1:.6f}"])
