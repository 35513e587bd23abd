"""Embedding backends, the batching pipeline and the on-disk cache."""
from __future__ import annotations

from .base import DEFAULT_MODELS, KNOWN_MODELS, SYNTHETIC_MODELS, Backend, EmbeddingMatrix, ModelRef, Provider
from .cache import CacheStore, cached_embed
from .pipeline import Embedder, TokenBucket, embed_remote
from .remote import API_KEY_ENV, GeminiBackend, HttpBackend, OpenAIBackend, VoyageBackend, remote_backend
from .synthetic import (
    SyntheticBackend,
    embed_synthetic_digit_circular,
    embed_synthetic_linear,
    embed_synthetic_sign_split,
)


def make_backend(model: ModelRef, synthetic: dict | None = None, **remote_kwargs) -> Backend:
    """Backend for ``model``; ``synthetic`` holds embedder knobs (dim, seed, noise_sigma, slots)."""
    if model.provider is Provider.SYNTHETIC:
        opts = dict(synthetic or {})
        if model.requested_dim is not None:
            opts["dim"] = model.requested_dim
        return SyntheticBackend(model, **opts)
    return remote_backend(model, **remote_kwargs)


__all__ = [
    "API_KEY_ENV",
    "Backend",
    "CacheStore",
    "EmbeddingMatrix",
    "Embedder",
    "GeminiBackend",
    "HttpBackend",
    "KNOWN_MODELS",
    "ModelRef",
    "OpenAIBackend",
    "DEFAULT_MODELS",
    "Provider",
    "SYNTHETIC_MODELS",
    "SyntheticBackend",
    "TokenBucket",
    "VoyageBackend",
    "cached_embed",
    "embed_remote",
    "embed_synthetic_digit_circular",
    "embed_synthetic_linear",
    "embed_synthetic_sign_split",
    "make_backend",
    "remote_backend",
]
