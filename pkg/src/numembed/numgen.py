"""Scalar dataset generation.

Numbers are generated as exact decimal digit strings so that precisions far
beyond IEEE-754 (20 integer or fraction digits) stay exact in the text that is
embedded. The ``value`` field is only the nearest double, used for metrics.
"""
from __future__ import annotations

import enum
import json
import random
import re
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from ._io import read_jsonl, sha256_hex, to_jsonl
from .errors import ConfigError, DegenerateDataset, TooFewSamples

FORMAT_VERSION = 1
MAX_SAMPLES = 500
MAX_PLACES = 20

_NUMBER_RE = re.compile(r"^(-?)(0|[1-9][0-9]*)(?:\.([0-9]+))?$")


class Family(str, enum.Enum):
    POSITIVE_DECIMALS = "positive_decimals"
    MIXED_SIGN_DECIMALS = "mixed_sign_decimals"
    MIXED_SIGN_INTEGERS = "mixed_sign_integers"

    @property
    def precision_symbol(self) -> str:
        return "a" if self is Family.MIXED_SIGN_INTEGERS else "b"


@dataclass(frozen=True)
class PrecisionSpec:
    family: Family
    integer_places: int
    decimal_places: int

    def __post_init__(self):
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        a, b = self.integer_places, self.decimal_places
        if fam is Family.MIXED_SIGN_INTEGERS:
            if b != 0 or not 0 <= a <= MAX_PLACES:
                raise ConfigError(f"integers need b=0 and a in [0, {MAX_PLACES}], got a={a} b={b}")
        elif a != 1 or not 1 <= b <= MAX_PLACES:
            raise ConfigError(f"decimals need a=1 and b in [1, {MAX_PLACES}], got a={a} b={b}")

    @classmethod
    def for_level(cls, family: Family | str, precision: int) -> "PrecisionSpec":
        """Spec for one sweep level; ``precision`` is a for integers, b otherwise."""
        family = Family(family)
        if family is Family.MIXED_SIGN_INTEGERS:
            return cls(family, precision, 0)
        return cls(family, 1, precision)

    @property
    def precision(self) -> int:
        if self.family is Family.MIXED_SIGN_INTEGERS:
            return self.integer_places
        return self.decimal_places

    @property
    def grid_size(self) -> int:
        """Cardinality of the value space at this precision."""
        if self.family is Family.POSITIVE_DECIMALS:
            return 10**self.decimal_places + 1
        if self.family is Family.MIXED_SIGN_DECIMALS:
            return 2 * 10**self.decimal_places + 1
        return 2 * 10**self.integer_places - 1


@dataclass(frozen=True, order=False)
class ExactDecimal:
    sign: int
    int_digits: str
    frac_digits: str = ""

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign!r}")
        if not self.int_digits or not self.int_digits.isascii() or not self.int_digits.isdigit():
            raise ValueError(f"bad integer digits {self.int_digits!r}")
        if self.frac_digits and not (self.frac_digits.isascii() and self.frac_digits.isdigit()):
            raise ValueError(f"bad fraction digits {self.frac_digits!r}")
        if len(self.int_digits) > 1 and self.int_digits[0] == "0":
            raise ValueError(f"leading zero in {self.int_digits!r}")
        if len(self.int_digits) > MAX_PLACES + 1:
            raise ValueError("too many integer digits")
        if self.sign == -1 and self.is_zero:
            raise ValueError("zero must carry sign +1")

    @property
    def is_zero(self) -> bool:
        return self.int_digits == "0" and set(self.frac_digits) <= {"0"}

    @classmethod
    def from_scaled(cls, k: int, decimal_places: int) -> "ExactDecimal":
        """The number k * 10**-decimal_places."""
        sign = -1 if k < 0 else 1
        digits = str(abs(k))
        if decimal_places == 0:
            return cls(sign, digits, "")
        digits = digits.rjust(decimal_places + 1, "0")
        return cls(sign, digits[:-decimal_places], digits[-decimal_places:])

    @classmethod
    def parse(cls, text: str) -> "ExactDecimal":
        m = _NUMBER_RE.match(text)
        if m is None:
            raise ValueError(f"not a canonical number: {text!r}")
        neg, int_digits, frac = m.groups()
        return cls(-1 if neg else 1, int_digits, frac or "")

    def __str__(self) -> str:
        return canonical_format(self)

    def to_float(self) -> float:
        # float() on a decimal literal is correctly rounded to nearest.
        return float(canonical_format(self))


def canonical_format(exact: ExactDecimal) -> str:
    text = exact.int_digits
    if exact.frac_digits:
        text += "." + exact.frac_digits
    return "-" + text if exact.sign < 0 else text


@dataclass(frozen=True)
class NumberSample:
    text: str
    value: float
    exact: ExactDecimal

    @classmethod
    def from_exact(cls, exact: ExactDecimal) -> "NumberSample":
        return cls(canonical_format(exact), exact.to_float(), exact)


@dataclass(frozen=True)
class ScalarDataset:
    spec: PrecisionSpec
    samples: tuple[NumberSample, ...]
    seed: int

    @property
    def size(self) -> int:
        return len(self.samples)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[NumberSample]:
        return iter(self.samples)

    @property
    def texts(self) -> list[str]:
        return [s.text for s in self.samples]

    @property
    def values(self) -> np.ndarray:
        return np.array([s.value for s in self.samples], dtype=np.float64)

    def header(self) -> dict:
        return {
            "family": self.spec.family.value,
            "a": self.spec.integer_places,
            "b": self.spec.decimal_places,
            "seed": self.seed,
            "size": self.size,
            "format_version": FORMAT_VERSION,
        }

    def to_jsonl(self) -> str:
        records = [self.header()]
        for s in self.samples:
            records.append(
                {
                    "text": s.text,
                    "value": s.value,
                    "sign": s.exact.sign,
                    "int_digits": s.exact.int_digits,
                    "frac_digits": s.exact.frac_digits,
                }
            )
        return to_jsonl(records)

    def fingerprint(self) -> str:
        return sha256_hex(self.to_jsonl())

    @classmethod
    def from_records(cls, records: Sequence[dict]) -> "ScalarDataset":
        if not records:
            raise ValueError("empty dataset file")
        head, rows = records[0], records[1:]
        if head.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported dataset format {head.get('format_version')!r}")
        spec = PrecisionSpec(Family(head["family"]), head["a"], head["b"])
        samples = []
        for r in rows:
            exact = ExactDecimal(r["sign"], r["int_digits"], r["frac_digits"])
            if canonical_format(exact) != r["text"]:
                raise ValueError(f"record text {r['text']!r} disagrees with its digits")
            samples.append(NumberSample(r["text"], float(r["value"]), exact))
        if len(samples) != head["size"]:
            raise ValueError(f"header says {head['size']} samples, file has {len(samples)}")
        return cls(spec, tuple(samples), int(head["seed"]))

    @classmethod
    def from_jsonl(cls, text: str) -> "ScalarDataset":
        return cls.from_records([json.loads(line) for line in text.splitlines() if line.strip()])

    @classmethod
    def load(cls, path) -> "ScalarDataset":
        return cls.from_records(read_jsonl(path))


def _sample_without_replacement(rng: random.Random, population: int, n: int) -> list[int]:
    """``min(n, population)`` distinct integers from ``range(population)``.

    Works for populations far past ``sys.maxsize`` (10**20 grids).
    """
    if n * 2 >= population:
        idx = list(range(population))
        rng.shuffle(idx)
        return idx[:n]
    seen: set[int] = set()
    out: list[int] = []
    while len(out) < n:
        k = rng.randrange(population)
        if k not in seen:
            seen.add(k)
            out.append(k)
    return out


def _from_offsets(spec: PrecisionSpec, n: int, seed: int, offset: int) -> ScalarDataset:
    rng = random.Random(seed)
    picks = _sample_without_replacement(rng, spec.grid_size, min(n, MAX_SAMPLES))
    samples = tuple(
        NumberSample.from_exact(ExactDecimal.from_scaled(k - offset, spec.decimal_places))
        for k in picks
    )
    return ScalarDataset(spec, samples, seed)


def gen_positive_decimals(b: int, n: int = MAX_SAMPLES, seed: int = 0) -> ScalarDataset:
    """Sample the grid {k * 10**-b : 0 <= k <= 10**b}."""
    spec = PrecisionSpec(Family.POSITIVE_DECIMALS, 1, b)
    return _from_offsets(spec, n, seed, 0)


def gen_mixed_sign_decimals(b: int, n: int = MAX_SAMPLES, seed: int = 0) -> ScalarDataset:
    """Sample the grid {k * 10**-b : -10**b <= k <= 10**b}."""
    spec = PrecisionSpec(Family.MIXED_SIGN_DECIMALS, 1, b)
    return _from_offsets(spec, n, seed, 10**b)


def gen_mixed_sign_integers(a: int, n: int = MAX_SAMPLES, seed: int = 0) -> ScalarDataset:
    """Sample integers in the open interval (-10**a, 10**a).

    Raises DegenerateDataset for ``a == 0``, whose only member is zero.
    """
    spec = PrecisionSpec(Family.MIXED_SIGN_INTEGERS, a, 0)
    if a == 0:
        raise DegenerateDataset("a=0 integer dataset contains only the value 0")
    return _from_offsets(spec, n, seed, 10**a - 1)


_GENERATORS = {
    Family.POSITIVE_DECIMALS: gen_positive_decimals,
    Family.MIXED_SIGN_DECIMALS: gen_mixed_sign_decimals,
    Family.MIXED_SIGN_INTEGERS: gen_mixed_sign_integers,
}


def generate(family: Family | str, precision: int, n: int = MAX_SAMPLES, seed: int = 0) -> ScalarDataset:
    family = Family(family)
    return _GENERATORS[family](precision, n, seed)


def sample_integer_range(lo: int, hi: int, n: int, seed: int = 0) -> list[NumberSample]:
    """Up to ``n`` distinct integers from the closed range [lo, hi]."""
    if hi < lo:
        raise ValueError(f"empty range [{lo}, {hi}]")
    rng = random.Random(seed)
    picks = _sample_without_replacement(rng, hi - lo + 1, n)
    return [NumberSample.from_exact(ExactDecimal.from_scaled(lo + k, 0)) for k in picks]


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    fold_of: tuple[int, ...]

    @property
    def n(self) -> int:
        return len(self.fold_of)

    def sizes(self) -> list[int]:
        return np.bincount(np.asarray(self.fold_of), minlength=self.k).tolist()

    def split(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        """(train indices, test indices) for one held-out fold."""
        labels = np.asarray(self.fold_of)
        return np.flatnonzero(labels != fold), np.flatnonzero(labels == fold)


def kfold_split(n: int, k: int = 5, seed: int = 0) -> FoldAssignment:
    if k < 2:
        raise ValueError(f"need at least 2 folds, got {k}")
    if n < k:
        raise TooFewSamples(f"{n} samples cannot fill {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    fold_of = np.empty(n, dtype=np.int64)
    fold_of[perm] = np.arange(n) % k
    return FoldAssignment(k, tuple(int(f) for f in fold_of))
