"""Append-only, content-addressed embedding cache.

Layout: ``<root>/<provider>/<model>[@dim]/<aa>.jsonl`` where ``aa`` is the
first byte of the SHA-256 of the input text. A shard starts with a header
record followed by ``{index, key, vector, checksum}`` rows; the checksum
covers key and vector so a damaged row is detected on read.
"""
from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Sequence

import numpy as np

from .._io import dumps, sha256_hex
from ..errors import CacheCorrupt, DimensionMismatch, EmptyInput
from .base import EMBEDDING_FORMAT_VERSION, EmbeddingMatrix

REFETCH_CHUNK = 1024


def text_key(text: str) -> str:
    return sha256_hex(text)


def _checksum(key: str, vector: list[float]) -> str:
    return sha256_hex(key + json.dumps(vector))


class CacheStore:
    def __init__(self, root):
        self.root = Path(root)
        self._lock = threading.Lock()
        self._shards: dict[Path, dict[str, list[float]]] = {}

    def _shard_path(self, namespace: str, key: str) -> Path:
        return self.root / namespace / f"{key[:2]}.jsonl"

    def _load(self, path: Path) -> dict[str, list[float]]:
        if path in self._shards:
            return self._shards[path]
        entries: dict[str, list[float]] = {}
        if path.exists():
            with open(path, encoding="utf-8") as fh:
                lines = fh.read().split("\n")
            if lines and lines[-1] == "":
                lines.pop()
            for lineno, line in enumerate(lines, start=1):
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CacheCorrupt(path, f"line {lineno} is not valid JSON ({exc.msg})") from exc
                if lineno == 1:
                    if rec.get("format_version") != EMBEDDING_FORMAT_VERSION:
                        raise CacheCorrupt(path, "missing or unsupported header")
                    continue
                try:
                    key, vector = rec["key"], rec["vector"]
                    ok = rec["checksum"] == _checksum(key, vector)
                except (KeyError, TypeError) as exc:
                    raise CacheCorrupt(path, f"line {lineno} lacks required fields") from exc
                if not ok or key[:2] != path.stem:
                    raise CacheCorrupt(path, f"hash mismatch on line {lineno}")
                entries.setdefault(key, vector)
        self._shards[path] = entries
        return entries

    def get_many(self, namespace: str, texts: Sequence[str]) -> dict[str, list[float]]:
        hits: dict[str, list[float]] = {}
        with self._lock:
            for t in texts:
                key = text_key(t)
                vec = self._load(self._shard_path(namespace, key)).get(key)
                if vec is not None:
                    hits[t] = vec
        return hits

    def put_many(self, namespace: str, model, items: dict[str, list[float]]) -> None:
        by_shard: dict[Path, list[tuple[str, list[float]]]] = {}
        for text, vec in items.items():
            key = text_key(text)
            by_shard.setdefault(self._shard_path(namespace, key), []).append((key, list(map(float, vec))))
        with self._lock:
            for path in sorted(by_shard):
                entries = self._load(path)
                new = [(k, v) for k, v in by_shard[path] if k not in entries]
                if not new:
                    continue
                dims = {len(v) for v in entries.values()} | {len(v) for _, v in new}
                if len(dims) != 1:
                    raise DimensionMismatch(f"cache shard {path} would mix dimensions {sorted(dims)}")
                path.parent.mkdir(parents=True, exist_ok=True)
                lines = []
                if not path.exists():
                    lines.append(
                        dumps(
                            {
                                "model": model.model_name,
                                "provider": model.provider.value,
                                "dim": len(new[0][1]),
                                "dataset_fingerprint": None,
                                "namespace": namespace,
                                "format_version": EMBEDDING_FORMAT_VERSION,
                            }
                        )
                    )
                start = len(entries)
                for i, (k, v) in enumerate(new):
                    lines.append(dumps({"index": start + i, "key": k, "vector": v, "checksum": _checksum(k, v)}))
                    entries[k] = v
                with open(path, "a", encoding="utf-8") as fh:
                    fh.write("\n".join(lines) + "\n")


def cached_embed(cache: CacheStore | None, embedder, texts: Sequence[str], dataset_fingerprint: str = "") -> EmbeddingMatrix:
    """Embed ``texts``, fetching only cache misses and storing them as they arrive."""
    texts = list(texts)
    if not texts:
        raise EmptyInput("no texts to embed")
    if cache is None:
        return EmbeddingMatrix(embedder.model, dataset_fingerprint, embedder.embed(texts))
    ns = embedder.cache_namespace
    found = cache.get_many(ns, texts)
    misses = list(dict.fromkeys(t for t in texts if t not in found))
    for i in range(0, len(misses), REFETCH_CHUNK):
        chunk = misses[i : i + REFETCH_CHUNK]
        rows = embedder.embed(chunk)
        fetched = {t: row.tolist() for t, row in zip(chunk, rows)}
        cache.put_many(ns, embedder.model, fetched)
        found.update(fetched)
    rows = np.asarray([found[t] for t in texts], dtype=np.float64)
    return EmbeddingMatrix(embedder.model, dataset_fingerprint, rows)
