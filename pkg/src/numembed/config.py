from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .numgen import Family
from .providers.base import DEFAULT_MODELS, ModelRef

DEFAULT_RPM = {"openai": 500.0, "gemini": 150.0, "voyage": 300.0}
DEFAULT_SYNTHETIC = {"dim": 256, "seed": 0, "noise_sigma": 0.0, "slots": 24}


@dataclass
class RunConfig:
    families: list[str] = field(default_factory=lambda: [f.value for f in Family])
    min_precision: int = 1
    max_precision: int = 20
    models: list[str] = field(default_factory=lambda: list(DEFAULT_MODELS))
    n: int = 500
    k: int = 5
    seed: int = 0
    cache_dir: str = ".numembed-cache"
    out_dir: str = "numembed-out"
    batch_size: int = 64
    max_attempts: int = 5
    backoff_base: float = 1.0
    backoff_cap: float = 60.0
    max_in_flight: int = 4
    requests_per_minute: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_RPM))
    requested_dims: dict[str, int] = field(default_factory=dict)
    synthetic: dict[str, Any] = field(default_factory=lambda: dict(DEFAULT_SYNTHETIC))
    normalize: bool = False
    ridge: float = 0.0
    global_pca: bool = False
    format: str = "md"
    scatter_bounds: list[int] = field(default_factory=lambda: [10**3, 10**4, 10**5, 10**6, 10**7])
    scatter_n_positive: int = 1000
    scatter_n_mixed: int = 2000

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for fam in self.families:
            try:
                Family(fam)
            except ValueError:
                raise ConfigError(f"unknown family {fam!r}; expected one of {[f.value for f in Family]}") from None
        if not self.families:
            raise ConfigError("no families selected")
        if not self.models:
            raise ConfigError("no models selected")
        for m in self.models:
            ModelRef.parse(m)
        if not 0 <= self.min_precision <= self.max_precision <= 20:
            raise ConfigError(f"precision range [{self.min_precision}, {self.max_precision}] invalid; need 0 <= min <= max <= 20")
        if self.n < 1 or self.k < 2 or self.batch_size < 1 or self.max_attempts < 1 or self.max_in_flight < 1:
            raise ConfigError("n, batch_size, max_attempts, max_in_flight must be >= 1 and k >= 2")
        if self.ridge < 0:
            raise ConfigError("ridge must be non-negative")
        if self.format not in ("md", "csv", "tex"):
            raise ConfigError(f"unknown table format {self.format!r}")
        unknown = set(self.synthetic) - set(DEFAULT_SYNTHETIC)
        if unknown:
            raise ConfigError(f"unknown synthetic keys {sorted(unknown)}")
        self.synthetic = {**DEFAULT_SYNTHETIC, **self.synthetic}
        self.requests_per_minute = {**DEFAULT_RPM, **self.requests_per_minute}

    @property
    def levels(self) -> list[int]:
        return list(range(self.min_precision, self.max_precision + 1))

    def model_refs(self) -> list[ModelRef]:
        return [ModelRef.parse(m, self.requested_dims.get(m)) for m in self.models]

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a mapping")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        return cls.from_dict(data)
