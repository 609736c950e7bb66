"""Load records, ground-truth match sets, and embedding matrices from files."""

from __future__ import annotations

import csv
import logging
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

EMBEDDING_MAGIC = b"ALEREMB1"
NORM_TOLERANCE = 1e-6


class IngestError(Exception):
    """Malformed input file or violated collection invariant."""


@dataclass(frozen=True)
class Record:
    id: str
    values: tuple[str, ...]


class RecordCollection:
    """Records sharing one attribute schema, keyed by unique id."""

    def __init__(self, schema: list[str], records: list[Record]):
        self.schema = list(schema)
        self._attr_index = {name: i for i, name in enumerate(self.schema)}
        self.records: dict[str, Record] = {}
        for rec in records:
            if rec.id in self.records:
                raise IngestError(f"duplicate record id {rec.id!r}")
            if len(rec.values) != len(self.schema):
                raise IngestError(f"record {rec.id!r} has {len(rec.values)} values, schema has {len(self.schema)}")
            self.records[rec.id] = rec

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, record_id: str) -> bool:
        return record_id in self.records

    def ids(self) -> list[str]:
        return list(self.records)

    def value(self, record_id: str, attr: str) -> str:
        if attr not in self._attr_index:
            raise KeyError(f"unknown attribute {attr!r}; schema is {self.schema}")
        if record_id not in self.records:
            raise KeyError(f"unknown record id {record_id!r}")
        return self.records[record_id].values[self._attr_index[attr]]

    def text(self, record_id: str) -> str:
        """Serialization sent to the encoder: space-joined 'name: value' per attribute."""
        rec = self.records[record_id]
        return " ".join(f"{name}: {value}" for name, value in zip(self.schema, rec.values))


@dataclass
class EmbeddingMatrix:
    """Unit-norm float32 vectors, one row per record id."""

    ids: list[str]
    vectors: np.ndarray
    _row_of: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.vectors.ndim != 2 or len(self.ids) != self.vectors.shape[0]:
            raise IngestError("ids and vector rows disagree")
        self._row_of = {}
        for i, rid in enumerate(self.ids):
            if rid in self._row_of:
                raise IngestError(f"duplicate embedding id {rid!r}")
            self._row_of[rid] = i

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._row_of

    def row(self, record_id: str) -> int:
        return self._row_of[record_id]

    def vector(self, record_id: str) -> np.ndarray:
        return self.vectors[self._row_of[record_id]]

    def subset(self, ids: list[str]) -> "EmbeddingMatrix":
        rows = [self._row_of[r] for r in ids]
        return EmbeddingMatrix(list(ids), self.vectors[rows].copy())


@dataclass
class MatchSet:
    pairs: set[tuple[str, str]]

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair: tuple[str, str]) -> bool:
        return pair in self.pairs


def _data_lines(path: Path):
    """Yield (line_number, line) skipping blank and '#' provenance lines."""
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.startswith("#") or not line.strip():
                continue
            yield lineno, line


def load_records(path: str | Path, id_column: str, delimiter: str = ",") -> RecordCollection:
    """Parse a delimited text file with a header row into a RecordCollection."""
    path = Path(path)
    rows = list(csv.reader((line for _, line in _data_lines(path)), delimiter=delimiter))
    if not rows:
        raise IngestError(f"{path}: empty record file")
    header = rows[0]
    if id_column not in header:
        raise IngestError(f"{path}: id column {id_column!r} not in header {header}")
    id_pos = header.index(id_column)
    schema = [h for i, h in enumerate(header) if i != id_pos]
    records: list[Record] = []
    seen: dict[str, int] = {}
    for rownum, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise IngestError(f"{path}: row {rownum} has {len(row)} cells, header has {len(header)}")
        rid = row[id_pos]
        if not rid:
            raise IngestError(f"{path}: row {rownum} has empty id")
        if rid in seen:
            raise IngestError(f"{path}: duplicate id {rid!r} on rows {seen[rid]} and {rownum}")
        seen[rid] = rownum
        records.append(Record(rid, tuple(v for i, v in enumerate(row) if i != id_pos)))
    return RecordCollection(schema, records)


def load_truth(path: str | Path, delimiter: str = ",") -> MatchSet:
    """Parse a two-column delimited file with header r_id,s_id."""
    path = Path(path)
    rows = list(csv.reader((line for _, line in _data_lines(path)), delimiter=delimiter))
    if not rows:
        raise IngestError(f"{path}: empty ground-truth file")
    header = rows[0]
    if len(header) != 2:
        raise IngestError(f"{path}: ground truth needs exactly two columns, got {header}")
    pairs: set[tuple[str, str]] = set()
    for rownum, row in enumerate(rows[1:], start=2):
        if len(row) != 2:
            raise IngestError(f"{path}: row {rownum} has {len(row)} cells")
        pair = (row[0], row[1])
        if pair in pairs:
            raise IngestError(f"{path}: duplicate pair {pair} on row {rownum}")
        pairs.add(pair)
    return MatchSet(pairs)


def save_truth(path: str | Path, truth: MatchSet, header_comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["r_id", "s_id"])
        for r_id, s_id in sorted(truth.pairs):
            writer.writerow([r_id, s_id])


def save_records(path: str | Path, collection: RecordCollection, id_column: str = "id",
                 header_comment: str | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow([id_column] + collection.schema)
        for rec in collection.records.values():
            writer.writerow([rec.id] + list(rec.values))


def _normalize(vectors: np.ndarray, ids: list[str]) -> np.ndarray:
    """L2-normalize rows; rows already unit within tolerance are left bit-exact."""
    norms = np.linalg.norm(vectors.astype(np.float64), axis=1)
    zero = np.where(norms == 0.0)[0]
    if zero.size:
        raise IngestError(f"zero vector for id {ids[zero[0]]!r} cannot be normalized")
    out = vectors.copy()
    off = np.where(np.abs(norms - 1.0) > NORM_TOLERANCE)[0]
    if off.size:
        out[off] = (out[off].astype(np.float64) / norms[off, None]).astype(np.float32)
    return out


def _build_matrix(ids: list[str], raw: np.ndarray) -> EmbeddingMatrix:
    if not np.isfinite(raw).all():
        bad = int(np.where(~np.isfinite(raw).all(axis=1))[0][0])
        raise IngestError(f"non-finite component in vector for id {ids[bad]!r}")
    return EmbeddingMatrix(ids, _normalize(raw.astype(np.float32), ids))


def load_embeddings(path: str | Path) -> EmbeddingMatrix:
    """Load the text or binary embedding format; vectors are unit-normalized."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(EMBEDDING_MAGIC))
    if magic == EMBEDDING_MAGIC:
        return _load_embeddings_binary(path)
    return _load_embeddings_text(path)


def _load_embeddings_text(path: Path) -> EmbeddingMatrix:
    lines = list(_data_lines(path))
    if not lines:
        raise IngestError(f"{path}: empty embedding file")
    header = lines[0][1].split()
    try:
        fields = dict(kv.split("=", 1) for kv in header)
        dim = int(fields["dim"])
        count = int(fields["count"])
    except (ValueError, KeyError):
        raise IngestError(f"{path}: malformed header {lines[0][1]!r}; expected 'dim=<d> count=<n>'")
    if dim <= 0:
        raise IngestError(f"{path}: dim must be positive, got {dim}")
    ids: list[str] = []
    raw = np.empty((count, dim), dtype=np.float32)
    body = lines[1:]
    if len(body) != count:
        raise IngestError(f"{path}: header declares count={count} but file has {len(body)} rows")
    for i, (lineno, line) in enumerate(body):
        parts = line.split()
        if len(parts) != dim + 1:
            raise IngestError(f"{path}: line {lineno} ({parts[0] if parts else '?'}) has {len(parts) - 1} components, header dim={dim}")
        ids.append(parts[0])
        try:
            raw[i] = np.array(parts[1:], dtype=np.float32)
        except ValueError:
            raise IngestError(f"{path}: line {lineno} has a non-numeric component")
    return _build_matrix(ids, raw)


def _load_embeddings_binary(path: Path) -> EmbeddingMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    offset = len(EMBEDDING_MAGIC)
    dim, = struct.unpack_from("<I", data, offset)
    offset += 4
    count, = struct.unpack_from("<Q", data, offset)
    offset += 8
    if dim == 0:
        raise IngestError(f"{path}: dim must be positive")
    ids: list[str] = []
    raw = np.empty((count, dim), dtype=np.float32)
    for i in range(count):
        id_len, = struct.unpack_from("<H", data, offset)
        offset += 2
        ids.append(data[offset:offset + id_len].decode("utf-8"))
        offset += id_len
        raw[i] = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
        offset += 4 * dim
    if offset != len(data):
        raise IngestError(f"{path}: {len(data) - offset} trailing bytes")
    return _build_matrix(ids, raw)


def save_embeddings(path: str | Path, matrix: EmbeddingMatrix, binary: bool = False) -> None:
    """Write the matrix in the text or binary embedding format (round-trips bit-exactly)."""
    path = Path(path)
    if binary:
        with open(path, "wb") as fh:
            fh.write(EMBEDDING_MAGIC)
            fh.write(struct.pack("<I", matrix.dim))
            fh.write(struct.pack("<Q", len(matrix)))
            vecs = np.ascontiguousarray(matrix.vectors, dtype="<f4")
            for i, rid in enumerate(matrix.ids):
                raw = rid.encode("utf-8")
                if len(raw) > 0xFFFF:
                    raise IngestError(f"id {rid!r} too long for binary format")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
                fh.write(vecs[i].tobytes())
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"dim={matrix.dim} count={len(matrix)}\n")
        for i, rid in enumerate(matrix.ids):
            if any(ch.isspace() for ch in rid):
                raise IngestError(f"id {rid!r} contains whitespace; use the binary format")
            # %.9g round-trips float32 exactly.
            comps = " ".join(f"{v:.9g}" for v in matrix.vectors[i])
            fh.write(f"{rid} {comps}\n")


def check_coverage(matrix: EmbeddingMatrix, collection: RecordCollection) -> None:
    """Every record id must have an embedding row."""
    missing = [rid for rid in collection.records if rid not in matrix]
    if missing:
        raise IngestError(f"{len(missing)} record ids without embeddings, first: {missing[0]!r}")


def fetch_embeddings(
    endpoint: str,
    records: RecordCollection,
    batch_size: int,
    max_retries: int = 3,
    timeout: float = 30.0,
    session=None,
) -> EmbeddingMatrix:
    """POST record texts to an encoder service in batches and assemble the matrix.

    The service contract is POST {"texts": [...]} -> {"vectors": [[...]]}.
    """
    import requests

    if len(records) == 0:
        raise IngestError("cannot fetch embeddings for an empty collection")
    if batch_size <= 0:
        raise ValueError("batch_size must be positive")
    sess = session or requests.Session()
    ids = records.ids()
    texts = [records.text(rid) for rid in ids]
    for rid, text in zip(ids, texts):
        if not text.strip() or all(not v for v in records.records[rid].values):
            logger.warning("record %r has empty text; encoder output passed through", rid)
    chunks: list[np.ndarray] = []
    dim: int | None = None
    for start in range(0, len(texts), batch_size):
        batch = texts[start:start + batch_size]
        last_err: Exception | None = None
        for attempt in range(max_retries + 1):
            try:
                resp = sess.post(endpoint, json={"texts": batch}, timeout=timeout)
                resp.raise_for_status()
                payload = resp.json()
                break
            except Exception as exc:
                last_err = exc
                if attempt < max_retries:
                    time.sleep(min(0.2 * 2 ** attempt, 2.0))
        else:
            raise IngestError(f"encoder service failed after {max_retries + 1} attempts: {last_err}")
        vectors = np.asarray(payload["vectors"], dtype=np.float32)
        if vectors.ndim != 2 or vectors.shape[0] != len(batch):
            raise IngestError(f"encoder returned {vectors.shape} for a batch of {len(batch)}")
        if dim is None:
            dim = vectors.shape[1]
        elif vectors.shape[1] != dim:
            raise IngestError(f"encoder dim changed between batches: {dim} then {vectors.shape[1]}")
        chunks.append(vectors)
    return _build_matrix(ids, np.vstack(chunks))
