"""Deterministic offline embedders with known geometry.

They stand in for remote models in tests and smoke runs: ``linear`` is a
(noisy) rank-1 encoder, ``digit_circular`` encodes each digit as a point on
the unit circle, and ``sign_split`` puts sign on a dominant axis.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .._io import derive_seed
from ..errors import ConfigError, SlotOverflow
from ..numerics import random_orthogonal
from .base import ModelRef, Provider


@lru_cache(maxsize=32)
def _direction(d: int, seed: int) -> np.ndarray:
    q = random_orthogonal(d, seed)[:, 0].copy()
    q.setflags(write=False)
    return q


def embed_synthetic_linear(x: float, d: int, seed: int = 0, noise_sigma: float = 0.0, noise_key: str | None = None) -> np.ndarray:
    """``x * q + sigma * eps`` with ``q`` a fixed seeded unit direction.

    The noise draw is keyed on ``noise_key`` (default ``repr(x)``) so each
    input gets the same noise regardless of batch or ordering.
    """
    if d < 2:
        raise ValueError("synthetic linear embedder needs d >= 2")
    v = float(x) * _direction(d, seed)
    if noise_sigma:
        key = repr(float(x)) if noise_key is None else noise_key
        eps = np.random.default_rng(derive_seed("linear-noise", seed, key)).standard_normal(d)
        v = v + noise_sigma * eps
    return v


def digit_circular_dim(slots: int) -> int:
    return 2 * slots


def embed_synthetic_digit_circular(text: str, slots: int = 24) -> np.ndarray:
    """Per-digit points on the unit circle.

    Pair 0 holds the sign as ``(+-1, 0)``; digit ``p`` (counted left to right,
    decimal point skipped) sits at coordinates ``(2p + 2, 2p + 3)`` as
    ``(cos 2*pi*g/10, sin 2*pi*g/10)``.
    """
    sign = -1.0 if text.startswith("-") else 1.0
    digits = [ch for ch in text.lstrip("-") if ch != "."]
    if not digits or not all("0" <= ch <= "9" for ch in digits):
        raise ValueError(f"not a canonical number: {text!r}")
    if len(digits) > slots - 1:
        raise SlotOverflow(f"{text!r} has {len(digits)} digits; {slots} slots hold {slots - 1}")
    v = np.zeros(digit_circular_dim(slots))
    v[0] = sign
    for p, ch in enumerate(digits, start=1):
        angle = 2.0 * math.pi * int(ch) / 10.0
        v[2 * p] = math.cos(angle)
        v[2 * p + 1] = math.sin(angle)
    return v


def embed_synthetic_sign_split(x: float, d: int, places: int | None = None) -> np.ndarray:
    """``[3 sign(x), log10(1 + |x|), x * 10**-a, 0, ...]``.

    ``a`` defaults to the count of integer digits of ``x``.
    """
    if d < 3:
        raise ValueError("sign-split embedder needs d >= 3")
    x = float(x)
    if places is None:
        places = len(str(int(abs(x))))
    v = np.zeros(d)
    if x == 0.0:
        return v
    v[0] = 3.0 * math.copysign(1.0, x)
    v[1] = math.log10(1.0 + abs(x))
    v[2] = x * 10.0 ** (-places)
    return v


@dataclass(frozen=True)
class SyntheticBackend:
    """Text-in, vector-out wrapper so synthetic models run the full pipeline."""

    model: ModelRef
    dim: int = 256
    seed: int = 0
    noise_sigma: float = 0.0
    slots: int = 24

    def __post_init__(self):
        if self.model.provider is not Provider.SYNTHETIC:
            raise ConfigError(f"{self.model.model_name} is not a synthetic model")
        if self.kind not in ("linear", "digit_circular", "sign_split"):
            raise ConfigError(f"unknown synthetic model {self.model.model_name!r}")

    @classmethod
    def from_name(cls, name: str, **kwargs) -> "SyntheticBackend":
        return cls(ModelRef(Provider.SYNTHETIC, name), **kwargs)

    @property
    def kind(self) -> str:
        return self.model.model_name.split(":", 1)[1]

    @property
    def output_dim(self) -> int:
        return digit_circular_dim(self.slots) if self.kind == "digit_circular" else self.dim

    @property
    def cache_namespace(self) -> str:
        if self.kind == "linear":
            return f"synthetic/linear-d{self.dim}-s{self.seed}-n{self.noise_sigma!r}"
        if self.kind == "digit_circular":
            return f"synthetic/digit_circular-k{self.slots}"
        return f"synthetic/sign_split-d{self.dim}"

    def params(self) -> dict:
        if self.kind == "linear":
            return {"dim": self.dim, "seed": self.seed, "noise_sigma": self.noise_sigma}
        if self.kind == "digit_circular":
            return {"slots": self.slots}
        return {"dim": self.dim}

    def embed_one(self, text: str) -> np.ndarray:
        if self.kind == "linear":
            return embed_synthetic_linear(float(text), self.dim, self.seed, self.noise_sigma, noise_key=text)
        if self.kind == "digit_circular":
            return embed_synthetic_digit_circular(text, self.slots)
        int_part = text.lstrip("-").split(".")[0]
        return embed_synthetic_sign_split(float(text), self.dim, places=len(int_part))

    def embed_batch(self, texts: Sequence[str]) -> list[list[float]]:
        return [self.embed_one(t).tolist() for t in texts]
