"""Desk-scale corpora with planted ground truth for hermetic pipeline tests.

One side holds templated product records; the other holds a perturbed copy of
each (the planted match), plus near-duplicate distractors derived from other
entities (same brand and category, different model) that exercise the
high-confidence false-positive failure mode. Embeddings come from a
deterministic character-trigram hashing encoder, so perturbed pairs keep high
cosine similarity without any external model.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .ingest import EmbeddingMatrix, MatchSet, Record, RecordCollection

SCHEMA = ["title", "brand", "model", "price"]

_BRANDS = [
    "vortek", "zanlux", "merax", "calyps", "norvik", "hexor", "lumara", "prandel",
    "dexon", "mirelli", "quasar", "telvin", "ostrix", "belkor", "fenwick", "garnet",
    "helios", "ikarun", "jovat", "krendal", "lorvan", "maxtor", "nimbus", "opaline",
]
_CATEGORIES = [
    "wireless router", "coffee maker", "gaming laptop", "noise cancelling headphones",
    "robot vacuum", "air fryer", "mechanical keyboard", "fitness tracker",
    "portable speaker", "electric kettle", "security camera", "graphics tablet",
    "paper shredder", "label printer", "studio monitor", "espresso grinder",
    "dash camera", "baby monitor", "soldering station", "document scanner",
]
_VARIANTS = ["black", "white", "silver", "graphite", "red", "blue", "ivory", "bronze"]
# sibling-SKU modifiers; deliberately absent from every other vocabulary list
_MODIFIERS = [
    "pro", "plus", "max", "lite", "mini", "ultra", "neo", "prime", "turbo",
    "sport", "evo", "duo", "air", "core", "edge", "flex", "nova", "zoom",
]
_LETTERS = "abcdefghijklmnopqrstuvwxyz"


@dataclass
class PerturbationSpec:
    """Controls how the matched copies differ from their base records.

    distractor_rate is the number of near-duplicate non-matches added per base
    record; values here are self-chosen for the surrogate encoder, not claimed
    equivalent to any benchmark generator.
    """

    typo_rate: float = 0.01
    token_drop: float = 0.025
    abbreviation: float = 0.02
    distractor_rate: float = 1.0
    seed: int = 0

    def validate(self):
        for name in ("typo_rate", "token_drop", "abbreviation"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.distractor_rate < 0:
            raise ValueError("distractor_rate must be >= 0")


def encode_text(text: str, dim: int = 128) -> np.ndarray:
    """Signed character-trigram hashing projected to a unit vector."""
    vec = np.zeros(dim, dtype=np.float64)
    padded = f"  {text.lower()} "
    for i in range(len(padded) - 2):
        gram = padded[i:i + 3]
        h = zlib.crc32(gram.encode("utf-8"))
        sign = 1.0 if (h >> 16) & 1 else -1.0
        vec[h % dim] += sign
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        vec[0] = 1.0
        norm = 1.0
    return (vec / norm).astype(np.float32)


def encode_collection(records: RecordCollection, dim: int = 128) -> EmbeddingMatrix:
    ids = records.ids()
    vectors = np.vstack([encode_text(" ".join(records.records[r].values[:-1]), dim) for r in ids])
    return EmbeddingMatrix(ids, vectors)


def _model_token(rng: np.random.Generator) -> str:
    letters = "".join(rng.choice(list(_LETTERS.upper()), size=2))
    digits = "".join(str(d) for d in rng.integers(0, 10, size=4))
    return f"{letters}-{digits}"


def _typo(word: str, rng: np.random.Generator, rate: float) -> str:
    chars = list(word)
    out = []
    for ch in chars:
        if ch.isalnum() and rng.random() < rate:
            roll = rng.random()
            if roll < 0.6:
                out.append(rng.choice(list(_LETTERS)))
            elif roll < 0.8:
                continue  # deletion
            else:
                out.append(ch)
                out.append(rng.choice(list(_LETTERS)))
        else:
            out.append(ch)
    return "".join(out)


def _perturb_title(title: str, model: str, spec: PerturbationSpec, rng: np.random.Generator) -> str:
    tokens = title.split()
    if rng.random() < spec.abbreviation and len(tokens[0]) > 4:
        tokens[0] = tokens[0][:3] + "."
    # the model token neither drops nor mutates: it is the identifier that
    # separates a listing from its near-twin siblings
    kept = [t for t in tokens if t == model or rng.random() >= spec.token_drop]
    if len(kept) < 2:
        kept = tokens[:2]
    return " ".join(t if t == model else _typo(t, rng, spec.typo_rate) for t in kept)


def generate(
    n_records: int,
    spec: PerturbationSpec | None = None,
    dim: int = 128,
) -> tuple[RecordCollection, RecordCollection, MatchSet, EmbeddingMatrix, EmbeddingMatrix]:
    """Base records, their perturbed counterparts plus distractors, the planted
    match set, and surrogate embeddings for both sides."""
    if n_records < 10:
        raise ValueError("n_records must be >= 10")
    spec = spec or PerturbationSpec()
    spec.validate()
    rng = np.random.Generator(np.random.PCG64(spec.seed))

    bases: list[tuple[str, str, str, str, str]] = []  # brand, category, model, variant, price
    for _ in range(n_records):
        brand = _BRANDS[rng.integers(len(_BRANDS))]
        category = _CATEGORIES[rng.integers(len(_CATEGORIES))]
        model = _model_token(rng)
        variant = _VARIANTS[rng.integers(len(_VARIANTS))]
        price = f"{rng.uniform(9, 900):.2f}"
        bases.append((brand, category, model, variant, price))

    records_r = []
    for i, (brand, category, model, variant, price) in enumerate(bases):
        title = f"{brand} {category} {model} {variant}"
        records_r.append(Record(f"r{i:06d}", (title, brand, model, price)))

    s_rows: list[tuple[str, str, str, str]] = []
    pairs: set[tuple[str, str]] = set()
    for i, (brand, category, model, variant, price) in enumerate(bases):
        title = _perturb_title(f"{brand} {category} {model} {variant}", model, spec, rng)
        s_rows.append((title, _typo(brand, rng, spec.typo_rate), model, price))
        pairs.add((f"r{i:06d}", f"s{len(s_rows) - 1:06d}"))

    n_distractors = int(round(spec.distractor_rate * n_records))
    for _ in range(n_distractors):
        brand, category, model, variant, price = bases[rng.integers(len(bases))]
        roll = rng.random()
        if roll < 0.7:
            # sibling SKU: byte-exact except one modifier word; looks more like
            # the base record than the true (perturbed) match does, so an
            # uncorrected classifier calls it a match with high confidence
            other_model = model
            modifier = _MODIFIERS[rng.integers(len(_MODIFIERS))]
            title = f"{brand} {category} {model} {modifier} {variant}"
        else:
            other_model = _model_token(rng)
            other_variant = _VARIANTS[rng.integers(len(_VARIANTS))]
            title = f"{brand} {category} {other_model} {other_variant}"
        other_price = f"{rng.uniform(9, 900):.2f}"
        s_rows.append((title, brand, other_model, other_price))

    order = rng.permutation(len(s_rows))
    relabel = {int(old): int(new) for new, old in enumerate(order)}
    records_s = [Record(f"s{relabel[i]:06d}", row) for i, row in enumerate(s_rows)]
    records_s.sort(key=lambda r: r.id)
    truth = MatchSet({(r, f"s{relabel[int(s[1:])]:06d}") for r, s in pairs})

    coll_r = RecordCollection(SCHEMA, records_r)
    coll_s = RecordCollection(SCHEMA, records_s)
    return coll_r, coll_s, truth, encode_collection(coll_r, dim), encode_collection(coll_s, dim)
