"""Exception types shared across the package.

Every error carries an ``exit_code`` so the CLI can map failures to the
documented process exit statuses without a lookup table.
"""
from __future__ import annotations


class NumembedError(Exception):
    exit_code = 1


class ConfigError(NumembedError):
    exit_code = 2


class MissingInput(ConfigError):
    """A stage was asked to read a file that an earlier stage never wrote."""

    def __init__(self, path):
        super().__init__(f"missing input file: {path}")
        self.path = str(path)


class MissingCredentials(NumembedError):
    exit_code = 3


class ProviderFailure(NumembedError):
    exit_code = 4


class RateLimitExhausted(ProviderFailure):
    pass


class ProviderError(ProviderFailure):
    def __init__(self, message: str, status: int | None = None, body: str = ""):
        super().__init__(message if not body else f"{message}: {body}")
        self.status = status
        self.body = body


class DimensionMismatch(ProviderFailure, ValueError):
    pass


class EmptyInput(NumembedError, ValueError):
    pass


class CacheCorrupt(NumembedError):
    def __init__(self, shard, detail: str):
        super().__init__(f"corrupt cache shard {shard}: {detail}")
        self.shard = str(shard)


class DegenerateDataset(NumembedError, ValueError):
    exit_code = 5


class ZeroVariance(DegenerateDataset):
    pass


class ZeroVarianceTarget(ZeroVariance):
    pass


class TooFewSamples(DegenerateDataset):
    pass


class NoConvergence(NumembedError, ArithmeticError):
    pass


class SlotOverflow(NumembedError, ValueError):
    pass


class MixedFamilies(NumembedError, ValueError):
    pass


class UnknownMetric(NumembedError, ValueError):
    pass
