"""Run manifest: the key = value file every CLI command starts from."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import mlp
from .hnsw import DEFAULT_EF_SEARCH, HnswParams
from .loop import LoopConfig
from .partition import DEFAULT_SAMPLE_PROPORTION


class ManifestError(ValueError):
    pass


_PATH_FIELDS = ("records_r", "records_s", "embeddings_r", "embeddings_s", "truth")


@dataclass
class RunManifest:
    records_r: str = ""
    records_s: str = ""
    embeddings_r: str = ""
    embeddings_s: str = ""
    truth: str = ""
    output_dir: str = ""
    id_column: str = "id"
    delimiter: str = ","
    key_attrs: list[str] = field(default_factory=lambda: ["title"])
    seed: int | None = None
    g_s: float = DEFAULT_SAMPLE_PROPORTION
    n_chunks: int | None = None  # overrides the log-scaling formula when set
    index_m: int = HnswParams().m
    index_ef_construction: int = HnswParams().ef_construction
    ef_search: int = DEFAULT_EF_SEARCH
    b_seed: int = 100
    b: int = 300
    i_max: int = 8
    patience: int = 2
    min_delta: float = 0.05
    g_v: float = 0.1
    validation_cap: int = 1000
    k: int = 10
    confident_fraction: float = 0.5
    budget_cap: int | None = None
    epochs: int = 15
    batch_size: int = 64
    learning_rate: float = 1e-3
    dropout_rate: float = 0.2
    oracle_timeout: float | None = None
    http_host: str = "127.0.0.1"
    http_port: int = 8377
    http_token: str | None = None
    console_dir: str = ""
    encoder_endpoint: str = ""
    encoder_batch_size: int = 64

    def loop_config(self) -> LoopConfig:
        return LoopConfig(
            b_seed=self.b_seed, b=self.b, i_max=self.i_max, patience=self.patience,
            min_delta=self.min_delta, g_v=self.g_v, validation_cap=self.validation_cap,
            k=self.k, confident_fraction=self.confident_fraction, seed=self.seed,
            ef_search=self.ef_search,
            train=mlp.TrainConfig(batch_size=self.batch_size, max_epochs=self.epochs,
                                  learning_rate=self.learning_rate,
                                  dropout_rate=self.dropout_rate, seed=self.seed),
        )

    def index_params(self) -> HnswParams:
        return HnswParams(m=self.index_m, ef_construction=self.index_ef_construction)

    def validate(self, require: tuple[str, ...] = ()) -> None:
        if self.seed is None:
            raise ManifestError("seed is mandatory in the manifest (no wall-clock entropy)")
        if not self.output_dir:
            raise ManifestError("output_dir is not set (manifest key or ALER_ARTIFACT_DIR)")
        for name in require:
            value = getattr(self, name)
            if not value:
                raise ManifestError(f"manifest field {name!r} is required for this command")
            if name in _PATH_FIELDS and not Path(value).exists():
                raise ManifestError(f"manifest field {name!r}: file not found: {value}")

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode("utf-8")).hexdigest()[:12]

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, list):
                value = ",".join(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


_FIELD_TYPES = {f.name: f for f in fields(RunManifest)}
_INT_FIELDS = {"seed", "n_chunks", "index_m", "index_ef_construction", "ef_search",
               "b_seed", "b", "i_max", "patience", "validation_cap", "k",
               "budget_cap", "epochs", "batch_size", "http_port", "encoder_batch_size"}
_FLOAT_FIELDS = {"g_s", "min_delta", "g_v", "confident_fraction", "learning_rate",
                 "dropout_rate", "oracle_timeout"}


def parse_value(name: str, raw: str):
    if name not in _FIELD_TYPES:
        raise ManifestError(f"unknown manifest key {name!r}")
    raw = raw.strip()
    if raw.lower() == "none":
        return None
    if name == "key_attrs":
        return [a.strip() for a in raw.split(",") if a.strip()]
    if name in _INT_FIELDS:
        try:
            return int(raw)
        except ValueError:
            raise ManifestError(f"manifest key {name!r} must be an integer, got {raw!r}")
    if name in _FLOAT_FIELDS:
        try:
            return float(raw)
        except ValueError:
            raise ManifestError(f"manifest key {name!r} must be a number, got {raw!r}")
    return raw


def load_manifest(path: str | Path, overrides: list[str] | None = None) -> RunManifest:
    """Parse the key = value text format, then apply key=value overrides."""
    manifest = RunManifest()
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ManifestError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        name, raw = line.split("=", 1)
        name = name.strip()
        setattr(manifest, name, parse_value(name, raw))
    for override in overrides or []:
        if "=" not in override:
            raise ManifestError(f"--override needs key=value, got {override!r}")
        name, raw = override.split("=", 1)
        setattr(manifest, name.strip(), parse_value(name.strip(), raw))
    return manifest
