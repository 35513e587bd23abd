from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .._io import read_jsonl, to_jsonl
from ..errors import ConfigError, DimensionMismatch

EMBEDDING_FORMAT_VERSION = 1


class Provider(str, enum.Enum):
    OPENAI = "openai"
    GEMINI = "gemini"
    VOYAGE = "voyage"
    SYNTHETIC = "synthetic"

    @property
    def label(self) -> str:
        return {"openai": "OpenAI", "gemini": "Google", "voyage": "Voyage", "synthetic": "Synthetic"}[self.value]


# model name -> (provider, documented default dimension)
KNOWN_MODELS: dict[str, tuple[Provider, int]] = {
    "gemini-embedding-001": (Provider.GEMINI, 3072),
    "text-embedding-3-large": (Provider.OPENAI, 3072),
    "text-embedding-3-small": (Provider.OPENAI, 1536),
    "text-embedding-ada-002": (Provider.OPENAI, 1536),
    "voyage-3-large": (Provider.VOYAGE, 1024),
    "voyage-3.5": (Provider.VOYAGE, 1024),
    "voyage-3.5-lite": (Provider.VOYAGE, 1024),
}

SYNTHETIC_MODELS = ("synthetic:linear", "synthetic:digit_circular", "synthetic:sign_split")

DEFAULT_MODELS = tuple(KNOWN_MODELS)


@dataclass(frozen=True)
class ModelRef:
    provider: Provider
    model_name: str
    requested_dim: int | None = None

    @classmethod
    def parse(cls, name: str, requested_dim: int | None = None) -> "ModelRef":
        """Resolve ``"voyage-3.5"``, ``"openai:my-model"`` or ``"synthetic:linear"``."""
        if name in KNOWN_MODELS:
            return cls(KNOWN_MODELS[name][0], name, requested_dim)
        if name in SYNTHETIC_MODELS:
            return cls(Provider.SYNTHETIC, name, requested_dim)
        prefix, sep, rest = name.partition(":")
        if sep and rest and prefix in {p.value for p in Provider} and prefix != "synthetic":
            return cls(Provider(prefix), rest, requested_dim)
        raise ConfigError(f"unknown model {name!r}")

    @property
    def is_remote(self) -> bool:
        return self.provider is not Provider.SYNTHETIC

    @property
    def slug(self) -> str:
        return self.model_name.replace(":", "_").replace("/", "_")

    @property
    def default_dim(self) -> int | None:
        if self.requested_dim is not None:
            return self.requested_dim
        known = KNOWN_MODELS.get(self.model_name)
        return known[1] if known else None


class Backend(Protocol):
    """Anything that turns a batch of texts into vectors, in order."""

    model: ModelRef

    @property
    def cache_namespace(self) -> str: ...

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]: ...


@dataclass(frozen=True)
class EmbeddingMatrix:
    model: ModelRef
    dataset_fingerprint: str
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise DimensionMismatch(f"embedding rows must be a non-empty n x d array, got {rows.shape}")
        if not np.isfinite(rows).all():
            raise ValueError("embedding contains NaN or Inf")
        object.__setattr__(self, "rows", rows)

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def header(self) -> dict:
        return {
            "model": self.model.model_name,
            "provider": self.model.provider.value,
            "dim": self.dim,
            "requested_dim": self.model.requested_dim,
            "dataset_fingerprint": self.dataset_fingerprint,
            "format_version": EMBEDDING_FORMAT_VERSION,
        }

    def to_jsonl(self) -> str:
        records = [self.header()]
        records.extend({"index": i, "vector": row.tolist()} for i, row in enumerate(self.rows))
        return to_jsonl(records)

    @classmethod
    def from_records(cls, records: list[dict]) -> "EmbeddingMatrix":
        head, body = records[0], records[1:]
        model = ModelRef(Provider(head["provider"]), head["model"], head.get("requested_dim"))
        if [r["index"] for r in body] != list(range(len(body))):
            raise ValueError("embedding rows are not indexed 0..n-1 in order")
        rows = np.array([r["vector"] for r in body], dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != head["dim"]:
            raise DimensionMismatch(f"header dim {head['dim']} disagrees with rows")
        return cls(model, head["dataset_fingerprint"], rows)

    @classmethod
    def load(cls, path) -> "EmbeddingMatrix":
        return cls.from_records(read_jsonl(path))

    def normalized(self) -> "EmbeddingMatrix":
        norms = np.linalg.norm(self.rows, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        return EmbeddingMatrix(self.model, self.dataset_fingerprint, self.rows / norms)
