"""Command-line pipeline: generate -> embed -> evaluate -> report / plot.

Stages talk only through files under the output directory. Every stage
refreshes ``manifest.json`` (config snapshot, fingerprints, request params,
stage status) and ``index.json`` (artifacts with their inputs).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from ._io import atomic_write, sha256_hex
from .config import RunConfig
from .errors import ConfigError, MissingInput, NumembedError
from .metrics import METRICS, SweepResult, backend_params, evaluate_triple, fold_seed, dataset_seed
from .numgen import Family, ScalarDataset, generate, kfold_split
from .providers import CacheStore, EmbeddingMatrix, Embedder, ModelRef, TokenBucket, cached_embed, make_backend
from .report import magnitude_sweep_figures, plot_metric_curves, render_table

log = logging.getLogger("numembed")

STAGES = ("generate", "embed", "evaluate", "report", "plot")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


class Pipeline:
    def __init__(self, cfg: RunConfig, stdout=None):
        self.cfg = cfg
        self.out = Path(cfg.out_dir)
        self.stdout = stdout or sys.stdout
        self._embedders: dict[str, Embedder] | None = None

    # paths
    def dataset_path(self, family: str, p: int) -> Path:
        return self.out / "datasets" / family / f"p{p:02d}.jsonl"

    def embedding_path(self, model: ModelRef, family: str, p: int) -> Path:
        return self.out / "embeddings" / model.slug / family / f"p{p:02d}.jsonl"

    def sweep_path(self, model: ModelRef, family: str) -> Path:
        return self.out / "sweeps" / model.slug / f"{family}.jsonl"

    def rel(self, path: Path) -> str:
        return path.relative_to(self.out).as_posix()

    def _require(self, path: Path) -> Path:
        if not path.exists():
            raise MissingInput(path)
        return path

    def _cells(self):
        for fam in self.cfg.families:
            for p in self.cfg.levels:
                yield fam, p

    # bookkeeping
    def _load_json(self, name: str, default):
        path = self.out / name
        if path.exists():
            return json.loads(path.read_text(encoding="utf-8"))
        return default

    def _record(self, stage: str, artifacts: dict[str, list[str]], extra: dict | None = None) -> None:
        manifest = self._load_json("manifest.json", {})
        config = self.cfg.to_dict()
        if manifest.get("config") != config:
            manifest = {}
        manifest.update({"tool_version": __version__, "config": config})
        manifest.setdefault("stages", {})[stage] = "ok"
        for key, value in (extra or {}).items():
            manifest.setdefault(key, {}).update(value)
        atomic_write(self.out / "manifest.json", _dump(manifest))

        entries = {e["path"]: e for e in self._load_json("index.json", {}).get("artifacts", [])}
        for path, inputs in artifacts.items():
            digest = sha256_hex((self.out / path).read_bytes())
            entries[path] = {"path": path, "stage": stage, "sha256": digest, "inputs": sorted(inputs)}
        index = {"manifest": "manifest.json", "artifacts": [entries[k] for k in sorted(entries)]}
        atomic_write(self.out / "index.json", _dump(index))

    # providers
    def embedders(self) -> dict[str, Embedder]:
        """Build every configured backend up front so missing keys fail before any write."""
        if self._embedders is None:
            limiters: dict[str, TokenBucket] = {}
            out = {}
            for ref in self.cfg.model_refs():
                backend = make_backend(ref, synthetic=self.cfg.synthetic)
                limiter = None
                if ref.is_remote:
                    prov = ref.provider.value
                    if prov not in limiters:
                        limiters[prov] = TokenBucket(self.cfg.requests_per_minute[prov], burst=self.cfg.max_in_flight)
                    limiter = limiters[prov]
                out[ref.model_name] = Embedder(
                    backend,
                    batch_size=self.cfg.batch_size,
                    max_attempts=self.cfg.max_attempts,
                    backoff_base=self.cfg.backoff_base,
                    backoff_cap=self.cfg.backoff_cap,
                    max_in_flight=self.cfg.max_in_flight,
                    rate_limiter=limiter,
                )
            self._embedders = out
        return self._embedders

    def cache_for(self, embedder: Embedder) -> CacheStore | None:
        return CacheStore(self.cfg.cache_dir) if embedder.model.is_remote else None

    # stages
    def generate(self) -> None:
        artifacts, fps = {}, {}
        for fam, p in self._cells():
            ds = generate(fam, p, self.cfg.n, dataset_seed(self.cfg.seed, fam, p))
            path = atomic_write(self.dataset_path(fam, p), ds.to_jsonl())
            artifacts[self.rel(path)] = []
            fps[f"{fam}/p{p:02d}"] = ds.fingerprint()
        self._record("generate", artifacts, {"dataset_fingerprints": fps})

    def _load_datasets(self) -> dict[tuple[str, int], ScalarDataset]:
        return {(fam, p): ScalarDataset.load(self._require(self.dataset_path(fam, p))) for fam, p in self._cells()}

    def estimate(self) -> dict:
        """Request/text counts per remote model, net of what the cache already holds."""
        datasets = self._load_datasets()
        texts = [t for ds in datasets.values() for t in ds.texts]
        report = {}
        for name, emb in self.embedders().items():
            if not emb.model.is_remote:
                continue
            cache = self.cache_for(emb)
            hits = cache.get_many(emb.cache_namespace, texts)
            misses = len(set(texts) - set(hits))
            report[name] = {
                "texts": len(texts),
                "cache_hits": sum(1 for t in texts if t in hits),
                "texts_to_fetch": misses,
                "requests": math.ceil(misses / self.cfg.batch_size),
                "chars_to_fetch": sum(len(t) for t in set(texts) - set(hits)),
            }
        return report

    def embed(self, dry_run: bool = False) -> None:
        embedders = self.embedders()
        datasets = self._load_datasets()
        if dry_run:
            self.stdout.write(_dump({"dry_run": True, "estimate": self.estimate()}))
            return
        artifacts, params = {}, {}
        for name, emb in embedders.items():
            cache = self.cache_for(emb)
            params[name] = backend_params(emb.backend)
            for (fam, p), ds in datasets.items():
                E = cached_embed(cache, emb, ds.texts, ds.fingerprint())
                path = atomic_write(self.embedding_path(emb.model, fam, p), E.to_jsonl())
                artifacts[self.rel(path)] = [self.rel(self.dataset_path(fam, p))]
        self._record("embed", artifacts, {"request_params": params})

    def evaluate(self) -> None:
        artifacts = {}
        for ref in self.cfg.model_refs():
            for fam in self.cfg.families:
                points, fps, inputs = {}, {}, []
                for p in self.cfg.levels:
                    ds = ScalarDataset.load(self._require(self.dataset_path(fam, p)))
                    epath = self._require(self.embedding_path(ref, fam, p))
                    E = EmbeddingMatrix.load(epath)
                    if E.dataset_fingerprint != ds.fingerprint():
                        raise ConfigError(f"{epath} was embedded from a different dataset; rerun embed")
                    if self.cfg.normalize:
                        E = E.normalized()
                    folds = kfold_split(ds.size, self.cfg.k, fold_seed(self.cfg.seed, fam, p))
                    points[p] = evaluate_triple(E, ds.values, folds, ridge=self.cfg.ridge, global_pca=self.cfg.global_pca)
                    fps[str(p)] = ds.fingerprint()
                    inputs += [self.rel(self.dataset_path(fam, p)), self.rel(epath)]
                manifest = {
                    "tool_version": __version__,
                    "seed": self.cfg.seed,
                    "n": self.cfg.n,
                    "k": self.cfg.k,
                    "normalize": self.cfg.normalize,
                    "ridge": self.cfg.ridge,
                    "global_pca": self.cfg.global_pca,
                    "levels": self.cfg.levels,
                    "dataset_fingerprints": fps,
                }
                sweep = SweepResult(Family(fam), ref, points, manifest)
                path = atomic_write(self.sweep_path(ref, fam), sweep.to_jsonl())
                artifacts[self.rel(path)] = inputs
        self._record("evaluate", artifacts)

    def _load_sweeps(self, fam: str) -> tuple[list[SweepResult], list[str]]:
        paths = [self._require(self.sweep_path(ref, fam)) for ref in self.cfg.model_refs()]
        return [SweepResult.load(p) for p in paths], [self.rel(p) for p in paths]

    def report(self) -> None:
        artifacts = {}
        for fam in self.cfg.families:
            sweeps, inputs = self._load_sweeps(fam)
            table = render_table(sweeps, self.cfg.format)
            path = atomic_write(self.out / "tables" / f"{fam}.{self.cfg.format}", table.text)
            artifacts[self.rel(path)] = inputs
        self._record("report", artifacts)

    def plot(self) -> None:
        artifacts = {}
        for fam in self.cfg.families:
            sweeps, inputs = self._load_sweeps(fam)
            for metric in METRICS:
                fig = plot_metric_curves(sweeps, metric, title=f"{metric.label}: {fam}")
                path = self.out / "figures" / f"{fam}_{metric.value}.svg"
                fig.save(path)
                artifacts[self.rel(path)] = inputs
        if self.cfg.scatter_bounds:
            for name, emb in self.embedders().items():
                figs = magnitude_sweep_figures(
                    emb,
                    self.cfg.scatter_bounds,
                    self.cfg.scatter_n_positive,
                    self.cfg.scatter_n_mixed,
                    seed=self.cfg.seed,
                    cache=self.cache_for(emb),
                )
                for fig in figs:
                    path = self.out / "figures" / "scatter" / f"{emb.model.slug}_{fig.meta['bound']}_{fig.meta['signedness']}.svg"
                    fig.save(path)
                    artifacts[self.rel(path)] = []
        self._record("plot", artifacts)

    def run_all(self, dry_run: bool = False) -> None:
        self.embedders()
        self.generate()
        if dry_run:
            self.embed(dry_run=True)
            return
        self.embed()
        self.evaluate()
        self.report()
        self.plot()


def _csv(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML or JSON run config")
    common.add_argument("--seed", type=int)
    common.add_argument("--models", type=_csv, help="comma-separated model names")
    common.add_argument("--families", type=_csv, help="comma-separated dataset families")
    common.add_argument("--max-precision", type=int)
    common.add_argument("--cache", help="cache directory")
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=["md", "csv", "tex"])
    common.add_argument("--normalize", action="store_true", default=None, help="L2-normalise embeddings before metrics")
    common.add_argument("--ridge", type=float, metavar="LAMBDA")
    common.add_argument("--global-pca", action="store_true", default=None)
    common.add_argument("--dry-run", action="store_true", help="print a request estimate and stop before any remote call")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="numembed", description="Numeric fidelity of text embeddings")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("generate", "embed", "evaluate", "report", "plot", "run-all"):
        sub.add_parser(name, parents=[common])
    return parser


_OVERRIDES = {
    "seed": "seed",
    "models": "models",
    "families": "families",
    "max_precision": "max_precision",
    "cache": "cache_dir",
    "out": "out_dir",
    "format": "format",
    "normalize": "normalize",
    "ridge": "ridge",
    "global_pca": "global_pca",
}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    data = RunConfig.load(args.config).to_dict() if args.config else {}
    for attr, key in _OVERRIDES.items():
        value = getattr(args, attr)
        if value is not None:
            data[key] = value
    return RunConfig.from_dict(data)


def _error_record(exc: BaseException, code: int) -> str:
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, MissingInput):
        record["path"] = exc.path
    return json.dumps(record)


def main(argv: Sequence[str] | None = None, stdout=None, stderr=None) -> int:
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        pipe = Pipeline(cfg, stdout=stdout)
        cmd = args.command
        if cmd == "generate":
            pipe.generate()
        elif cmd == "embed":
            pipe.embed(dry_run=args.dry_run)
        elif cmd == "evaluate":
            pipe.evaluate()
        elif cmd == "report":
            pipe.report()
        elif cmd == "plot":
            pipe.plot()
        else:
            pipe.run_all(dry_run=args.dry_run)
    except NumembedError as exc:
        stderr.write(_error_record(exc, exc.exit_code) + "\n")
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
