"""Cross-validated embedding fidelity metrics and precision sweeps.

Per fold, the linear probe and PCA are fitted on the training partition.
Linear R2 and PCA R2 are scored on the held-out partition (so they can go
negative); the first-PC variance ratio is a property of the training fit.
"""
from __future__ import annotations

import enum
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from ._io import derive_seed, read_jsonl, to_jsonl
from .errors import ConfigError, ZeroVarianceTarget
from .numerics import center_columns, min_norm_fit, pca_from_svd, predict, r2_score, thin_svd
from .numgen import Family, FoldAssignment, PrecisionSpec, ScalarDataset, generate, kfold_split
from .providers.base import EmbeddingMatrix, ModelRef, Provider
from .providers.cache import CacheStore, cached_embed
from .providers.pipeline import Embedder

log = logging.getLogger(__name__)

SWEEP_FORMAT_VERSION = 1


class Metric(str, enum.Enum):
    LINEAR_R2 = "linear_r2"
    PCA_R2 = "pca_r2"
    PCA_VR = "pca_vr"

    @property
    def label(self) -> str:
        return {"linear_r2": "Linear R²", "pca_r2": "PCA R²", "pca_vr": "PCA Variance"}[self.value]


METRICS = tuple(Metric)


@dataclass(frozen=True)
class MetricResult:
    metric: Metric
    per_fold: tuple[float, ...]
    folds: tuple[int, ...]

    @classmethod
    def from_folds(cls, metric: Metric, values: dict[int, float]) -> "MetricResult":
        order = sorted(values)
        return cls(Metric(metric), tuple(float(values[f]) for f in order), tuple(order))

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_fold))

    @property
    def std(self) -> float:
        return float(np.std(self.per_fold))


@dataclass(frozen=True)
class MetricTriple:
    linear_r2: MetricResult
    pca_r2: MetricResult
    pca_vr: MetricResult

    def __getitem__(self, metric: Metric | str) -> MetricResult:
        return getattr(self, Metric(metric).value)

    def __iter__(self):
        return iter((self.linear_r2, self.pca_r2, self.pca_vr))


def _rows(E) -> np.ndarray:
    return E.rows if isinstance(E, EmbeddingMatrix) else np.asarray(E, dtype=np.float64)


def _univariate_r2(score_tr, x_tr, score_te, x_te) -> float:
    probe = min_norm_fit(score_tr[:, None], x_tr)
    return r2_score(x_te, predict(probe, score_te[:, None]))


def _evaluate(E, x, folds: FoldAssignment, want: set[Metric], ridge: float = 0.0, global_pca: bool = False) -> dict[Metric, MetricResult]:
    A = _rows(E)
    x = np.asarray(x, dtype=np.float64).ravel()
    if A.shape[0] != x.shape[0] or folds.n != x.shape[0]:
        raise ConfigError(f"rows ({A.shape[0]}), targets ({x.shape[0]}) and folds ({folds.n}) disagree")
    needs_target = bool(want & {Metric.LINEAR_R2, Metric.PCA_R2})
    if needs_target and np.ptp(x) == 0.0:
        raise ZeroVarianceTarget("target values are constant; R2 is undefined")

    glob = None
    if global_pca and want & {Metric.PCA_R2, Metric.PCA_VR}:
        Ac, mean = center_columns(A)
        _, S, V = thin_svd(Ac)
        glob = pca_from_svd(S, V, mean, A.shape[0], 1)
        glob_scores = Ac @ glob.components[0]

    values: dict[Metric, dict[int, float]] = {m: {} for m in want}
    for f in range(folds.k):
        tr, te = folds.split(f)
        if tr.size < 2 or te.size < 1:
            warnings.warn(f"fold {f} has too few rows; dropped")
            continue
        x_tr, x_te = x[tr], x[te]
        if needs_target and (te.size < 2 or np.ptp(x_tr) == 0.0 or np.ptp(x_te) == 0.0):
            warnings.warn(f"fold {f} has a constant target; dropped")
            if Metric.PCA_VR not in want:
                continue
            fold_want = {Metric.PCA_VR}
        else:
            fold_want = want

        need_local_svd = Metric.LINEAR_R2 in fold_want or (glob is None and fold_want & {Metric.PCA_R2, Metric.PCA_VR})
        if need_local_svd:
            Ac, mean = center_columns(A[tr])
            U, S, V = thin_svd(Ac)
        if Metric.LINEAR_R2 in fold_want:
            model = min_norm_fit(A[tr], x_tr, ridge=ridge, svd=(U, S, V, mean))
            values[Metric.LINEAR_R2][f] = r2_score(x_te, predict(model, A[te]))
        if glob is None and fold_want & {Metric.PCA_R2, Metric.PCA_VR}:
            pca = pca_from_svd(S, V, mean, tr.size, 1)
        else:
            pca = glob
        if Metric.PCA_VR in fold_want:
            values[Metric.PCA_VR][f] = float(pca.variance_ratios[0])
        if Metric.PCA_R2 in fold_want:
            if glob is None:
                s_tr = Ac @ pca.components[0]
                s_te = (A[te] - pca.mean) @ pca.components[0]
            else:
                s_tr, s_te = glob_scores[tr], glob_scores[te]
            values[Metric.PCA_R2][f] = _univariate_r2(s_tr, x_tr, s_te, x_te)

    out = {}
    for m in want:
        if not values[m]:
            raise ZeroVarianceTarget(f"every fold was degenerate for {m.value}")
        out[m] = MetricResult.from_folds(m, values[m])
    return out


def eval_linear_r2(E, x, folds: FoldAssignment, ridge: float = 0.0) -> MetricResult:
    """Held-out R2 of a min-norm linear probe predicting x from the embedding."""
    return _evaluate(E, x, folds, {Metric.LINEAR_R2}, ridge=ridge)[Metric.LINEAR_R2]


def eval_pca_r2(E, x, folds: FoldAssignment, global_pca: bool = False) -> MetricResult:
    """Held-out R2 of a univariate fit from the first-PC score to x."""
    return _evaluate(E, x, folds, {Metric.PCA_R2}, global_pca=global_pca)[Metric.PCA_R2]


def eval_pca_vr(E, folds: FoldAssignment, global_pca: bool = False) -> MetricResult:
    """Explained variance ratio of the first principal component."""
    x = np.zeros(folds.n)
    return _evaluate(E, x, folds, {Metric.PCA_VR}, global_pca=global_pca)[Metric.PCA_VR]


def evaluate_triple(E, x, folds: FoldAssignment, ridge: float = 0.0, global_pca: bool = False) -> MetricTriple:
    res = _evaluate(E, x, folds, set(METRICS), ridge=ridge, global_pca=global_pca)
    return MetricTriple(res[Metric.LINEAR_R2], res[Metric.PCA_R2], res[Metric.PCA_VR])


def dataset_seed(seed: int, family: Family | str, precision: int) -> int:
    return derive_seed("dataset", seed, Family(family).value, precision)


def fold_seed(seed: int, family: Family | str, precision: int) -> int:
    return derive_seed("folds", seed, Family(family).value, precision)


def validate_range(family: Family | str, precision_range: Iterable[int]) -> list[int]:
    levels = list(precision_range)
    if not levels:
        raise ConfigError("empty precision range")
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ConfigError("precision levels must be strictly increasing")
    for p in levels:
        if not 1 <= p <= 20:
            raise ConfigError(f"precision {p} outside [1, 20] for {Family(family).value}")
    return levels


@dataclass(frozen=True)
class SweepResult:
    family: Family
    model: ModelRef
    points: dict[int, MetricTriple]
    manifest: dict = field(default_factory=dict)

    @property
    def precisions(self) -> list[int]:
        return list(self.points)

    def header(self) -> dict:
        return {
            "family": self.family.value,
            "model": self.model.model_name,
            "provider": self.model.provider.value,
            "requested_dim": self.model.requested_dim,
            "manifest": self.manifest,
            "format_version": SWEEP_FORMAT_VERSION,
        }

    def records(self) -> list[dict]:
        out = []
        for p, triple in self.points.items():
            for res in triple:
                for f, v in zip(res.folds, res.per_fold):
                    out.append(
                        {
                            "family": self.family.value,
                            "model": self.model.model_name,
                            "precision": p,
                            "metric": res.metric.value,
                            "fold": f,
                            "value": v,
                        }
                    )
        return out

    def to_jsonl(self) -> str:
        return to_jsonl([self.header(), *self.records()])

    @classmethod
    def from_records(cls, records: Sequence[dict]) -> "SweepResult":
        head = records[0]
        if head.get("format_version") != SWEEP_FORMAT_VERSION:
            raise ValueError("not a sweep file")
        family = Family(head["family"])
        model = ModelRef(Provider(head["provider"]), head["model"], head.get("requested_dim"))
        acc: dict[int, dict[Metric, dict[int, float]]] = {}
        for r in records[1:]:
            acc.setdefault(int(r["precision"]), {m: {} for m in METRICS})[Metric(r["metric"])][int(r["fold"])] = float(r["value"])
        points = {
            p: MetricTriple(*(MetricResult.from_folds(m, acc[p][m]) for m in METRICS))
            for p in sorted(acc)
        }
        return cls(family, model, points, head.get("manifest", {}))

    @classmethod
    def load(cls, path) -> "SweepResult":
        return cls.from_records(read_jsonl(path))


def embed_dataset(embedder: Embedder, dataset: ScalarDataset, cache: CacheStore | None = None) -> EmbeddingMatrix:
    return cached_embed(cache, embedder, dataset.texts, dataset.fingerprint())


def run_sweep(
    family: Family | str,
    precision_range: Iterable[int],
    embedder,
    n: int = 500,
    k: int = 5,
    seed: int = 0,
    cache: CacheStore | None = None,
    normalize: bool = False,
    ridge: float = 0.0,
    global_pca: bool = False,
    workers: int = 1,
) -> SweepResult:
    """Generate, embed and score every precision level of one family.

    ``embedder`` is an :class:`Embedder` or a bare backend. Each level draws
    its dataset and folds from seeds derived from (seed, family, level), so
    any evaluation order yields the same result.
    """
    family = Family(family)
    levels = validate_range(family, precision_range)
    if not isinstance(embedder, Embedder):
        embedder = Embedder(embedder)

    def one(p: int):
        ds = generate(family, p, n, dataset_seed(seed, family, p))
        E = embed_dataset(embedder, ds, cache)
        if normalize:
            E = E.normalized()
        folds = kfold_split(ds.size, k, fold_seed(seed, family, p))
        return ds.fingerprint(), evaluate_triple(E, ds.values, folds, ridge=ridge, global_pca=global_pca)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, levels))
    else:
        results = [one(p) for p in levels]

    manifest = {
        "tool_version": __version__,
        "seed": seed,
        "n": n,
        "k": k,
        "normalize": normalize,
        "ridge": ridge,
        "global_pca": global_pca,
        "levels": levels,
        "dataset_fingerprints": {str(p): fp for p, (fp, _) in zip(levels, results)},
        "backend": backend_params(embedder.backend),
    }
    return SweepResult(family, embedder.model, {p: t for p, (_, t) in zip(levels, results)}, manifest)


def backend_params(backend) -> dict:
    if hasattr(backend, "params"):
        return {"namespace": backend.cache_namespace, **backend.params()}
    if hasattr(backend, "request_params"):
        return {"namespace": backend.cache_namespace, **backend.request_params()}
    return {"namespace": getattr(backend, "cache_namespace", "")}


@dataclass(frozen=True)
class SummaryRow:
    metric: Metric
    min_precision: int
    min: MetricResult
    max_precision: int
    max: MetricResult


def min_max_summary(sweep: SweepResult) -> list[SummaryRow]:
    """For each metric, the fold mean/std at the levels of lowest and highest mean."""
    if not sweep.points:
        raise ConfigError("sweep has no precision points")
    rows = []
    for m in METRICS:
        by_level = [(p, t[m]) for p, t in sweep.points.items()]
        p_lo, r_lo = min(by_level, key=lambda item: item[1].mean)
        p_hi, r_hi = max(by_level, key=lambda item: item[1].mean)
        rows.append(SummaryRow(m, p_lo, r_lo, p_hi, r_hi))
    return rows
