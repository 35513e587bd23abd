"""Standalone SVG figures: metric-vs-precision curves and PCA scatters.

Output is plain string building with fixed-precision coordinates, so the
same inputs always yield the same bytes.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape

import numpy as np

from .._io import atomic_write, derive_seed
from ..errors import ConfigError, UnknownMetric, ZeroVariance
from ..metrics import Metric, SweepResult
from ..numerics import center_columns, pca_from_svd, pearson, thin_svd
from ..numgen import sample_integer_range
from ..providers.base import EmbeddingMatrix
from ..providers.cache import cached_embed
from ..providers.pipeline import Embedder

# 16 samples of the viridis colormap
RAMP = (
    "#440154", "#481a6c", "#472f7d", "#414487", "#39568c", "#31688e", "#2a788e", "#23888e",
    "#1f988b", "#22a884", "#35b779", "#54c568", "#7ad151", "#a5db36", "#d2e21b", "#fde725",
)

CURVE_SIZE = (900, 300)
SCATTER_SIZE = (400, 400)
Y_FLOOR = -1.0
FONT = "font-family=\"DejaVu Sans, Arial, sans-serif\""


class FigureKind(str, enum.Enum):
    METRIC_CURVE = "MetricCurve"
    PCA_SCATTER = "PcaScatter"


@dataclass(frozen=True)
class Series:
    name: str
    x: tuple[float, ...]
    y: tuple[float, ...]
    lo: tuple[float, ...] = ()
    hi: tuple[float, ...] = ()
    color_values: tuple[float, ...] = ()


@dataclass(frozen=True)
class FigureDoc:
    kind: FigureKind
    width: int
    height: int
    series: tuple[Series, ...]
    svg: str
    title: str = ""
    meta: dict = field(default_factory=dict)

    def save(self, path) -> None:
        atomic_write(path, self.svg)


def _hex_to_rgb(h: str) -> tuple[int, int, int]:
    return int(h[1:3], 16), int(h[3:5], 16), int(h[5:7], 16)


def ramp_color(t: float) -> str:
    """Linear interpolation along the ramp for ``t`` in [0, 1]."""
    t = min(1.0, max(0.0, float(t)))
    pos = t * (len(RAMP) - 1)
    i = min(int(pos), len(RAMP) - 2)
    frac = pos - i
    a, b = _hex_to_rgb(RAMP[i]), _hex_to_rgb(RAMP[i + 1])
    return "#" + "".join(f"{round(ca + (cb - ca) * frac):02x}" for ca, cb in zip(a, b))


def _f(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


def _ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


class _Canvas:
    def __init__(self, width: int, height: int, margins: tuple[int, int, int, int]):
        self.width, self.height = width, height
        self.left, self.right, self.top, self.bottom = margins
        self.parts: list[str] = []

    @property
    def plot_w(self) -> float:
        return self.width - self.left - self.right

    @property
    def plot_h(self) -> float:
        return self.height - self.top - self.bottom

    def set_range(self, x0, x1, y0, y1):
        self.x0, self.x1, self.y0, self.y1 = x0, x1, y0, y1

    def px(self, x: float) -> float:
        return self.left + (x - self.x0) / (self.x1 - self.x0) * self.plot_w

    def py(self, y: float) -> float:
        return self.top + (self.y1 - y) / (self.y1 - self.y0) * self.plot_h

    def add(self, s: str) -> None:
        self.parts.append(s)

    def axes(self, xlabel: str, ylabel: str, xticks, yticks, xfmt=_f, yfmt=_f):
        L, T, W, H = self.left, self.top, self.plot_w, self.plot_h
        self.add(f'<rect x="{L}" y="{T}" width="{_f(W)}" height="{_f(H)}" fill="none" stroke="#333" stroke-width="1"/>')
        for t in xticks:
            x = self.px(t)
            self.add(f'<line x1="{_f(x)}" y1="{_f(T + H)}" x2="{_f(x)}" y2="{_f(T + H + 4)}" stroke="#333"/>')
            self.add(f'<text x="{_f(x)}" y="{_f(T + H + 16)}" font-size="10" text-anchor="middle" {FONT}>{escape(xfmt(t))}</text>')
        for t in yticks:
            y = self.py(t)
            self.add(f'<line x1="{L - 4}" y1="{_f(y)}" x2="{L}" y2="{_f(y)}" stroke="#333"/>')
            self.add(f'<line x1="{L}" y1="{_f(y)}" x2="{_f(L + W)}" y2="{_f(y)}" stroke="#ddd" stroke-width="0.5"/>')
            self.add(f'<text x="{L - 6}" y="{_f(y + 3)}" font-size="10" text-anchor="end" {FONT}>{escape(yfmt(t))}</text>')
        self.add(f'<text x="{_f(L + W / 2)}" y="{self.height - 8}" font-size="12" text-anchor="middle" {FONT}>{escape(xlabel)}</text>')
        cy = T + H / 2
        self.add(f'<text x="14" y="{_f(cy)}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {_f(cy)})" {FONT}>{escape(ylabel)}</text>')

    def render(self, title: str) -> str:
        head = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" viewBox="0 0 {self.width} {self.height}">',
            f"<title>{escape(title)}</title>",
            f'<defs><clipPath id="plot-area"><rect x="{self.left}" y="{self.top}" width="{_f(self.plot_w)}" height="{_f(self.plot_h)}"/></clipPath></defs>',
            f'<rect width="{self.width}" height="{self.height}" fill="white"/>',
        ]
        if title:
            head.append(f'<text x="{_f(self.width / 2)}" y="16" font-size="13" text-anchor="middle" {FONT}>{escape(title)}</text>')
        return "\n".join(head + self.parts + ["</svg>"]) + "\n"


def _series_colors(count: int) -> list[str]:
    if count == 1:
        return [ramp_color(0.3)]
    return [ramp_color(0.9 * i / (count - 1)) for i in range(count)]


def plot_metric_curves(sweeps: Sequence[SweepResult], metric: Metric | str, title: str | None = None) -> FigureDoc:
    """Fold-mean metric against precision, one series per sweep, +-1 std band."""
    try:
        metric = Metric(metric)
    except ValueError as exc:
        raise UnknownMetric(f"unknown metric {metric!r}") from exc
    if not sweeps:
        raise ConfigError("no sweeps to plot")
    series = []
    for s in sweeps:
        xs = tuple(float(p) for p in s.points)
        means = tuple(t[metric].mean for t in s.points.values())
        stds = tuple(t[metric].std for t in s.points.values())
        series.append(
            Series(
                s.model.model_name,
                xs,
                means,
                tuple(m - d for m, d in zip(means, stds)),
                tuple(m + d for m, d in zip(means, stds)),
            )
        )

    width, height = CURVE_SIZE
    cv = _Canvas(width, height, (60, 190, 28, 40))
    all_x = [x for sr in series for x in sr.x]
    x0, x1 = min(all_x), max(all_x)
    if x0 == x1:
        x0, x1 = x0 - 1, x1 + 1
    lo = min(min(sr.lo) for sr in series)
    hi = max(max(sr.hi) for sr in series)
    y0 = max(Y_FLOOR, min(0.0, lo))
    y1 = max(1.0, hi)
    cv.set_range(x0, x1, y0, y1)
    xticks = sorted({x for x in all_x})
    cv.axes("precision (a or b)", metric.label, xticks, _ticks(y0, y1), xfmt=lambda t: str(int(t)))

    colors = _series_colors(len(series))
    cv.add('<g clip-path="url(#plot-area)">')
    for sr, color in zip(series, colors):
        cv.add(f'<g class="series" data-name="{escape(sr.name)}">')
        if any(h > l for l, h in zip(sr.lo, sr.hi)):
            if len(sr.x) > 1:
                upper = [f"{_f(cv.px(x))},{_f(cv.py(h))}" for x, h in zip(sr.x, sr.hi)]
                lower = [f"{_f(cv.px(x))},{_f(cv.py(l))}" for x, l in reversed(list(zip(sr.x, sr.lo)))]
                cv.add(f'<polygon class="band" points="{" ".join(upper + lower)}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
            else:
                x = cv.px(sr.x[0])
                cv.add(f'<line class="band" x1="{_f(x)}" y1="{_f(cv.py(sr.lo[0]))}" x2="{_f(x)}" y2="{_f(cv.py(sr.hi[0]))}" stroke="{color}" stroke-opacity="0.5"/>')
        if len(sr.x) > 1:
            pts = " ".join(f"{_f(cv.px(x))},{_f(cv.py(y))}" for x, y in zip(sr.x, sr.y))
            cv.add(f'<polyline class="line" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        for x, y in zip(sr.x, sr.y):
            cv.add(f'<circle class="marker" cx="{_f(cv.px(x))}" cy="{_f(cv.py(y))}" r="2.5" fill="{color}"/>')
        cv.add("</g>")
    cv.add("</g>")

    lx = width - cv.right + 14
    cv.add('<g class="legend">')
    for i, (sr, color) in enumerate(zip(series, colors)):
        ly = cv.top + 10 + 16 * i
        cv.add(f'<rect x="{lx}" y="{ly - 8}" width="12" height="8" fill="{color}"/>')
        cv.add(f'<text x="{lx + 18}" y="{ly}" font-size="10" {FONT}>{escape(sr.name)}</text>')
    cv.add("</g>")
    title = title if title is not None else metric.label
    return FigureDoc(FigureKind.METRIC_CURVE, width, height, tuple(series), cv.render(title), title, {"metric": metric.value})


def pca_scores_2d(rows, x) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Global 2-component PCA scores, each sign-fixed to correlate positively with x."""
    rows = rows.rows if isinstance(rows, EmbeddingMatrix) else np.asarray(rows, dtype=np.float64)
    n, d = rows.shape
    if n < 3:
        raise ConfigError("PCA scatter needs at least 3 points")
    k = min(2, n - 1, d)
    Ac, mean = center_columns(rows)
    _, S, V = thin_svd(Ac)
    model = pca_from_svd(S, V, mean, n, k)
    scores = Ac @ model.components.T
    if k == 1:
        scores = np.hstack([scores, np.zeros((n, 1))])
    for j in range(k):
        try:
            if pearson(scores[:, j], x) < 0:
                scores[:, j] = -scores[:, j]
        except ZeroVariance:
            pass
    ratios = np.zeros(2)
    ratios[:k] = model.variance_ratios
    return scores[:, 0], scores[:, 1], ratios


def plot_pca_scatter(E, x, highlight_zero: bool = True, title: str = "") -> FigureDoc:
    """PC1/PC2 scatter over the whole set, colored by x; zero marked with a cross."""
    x = np.asarray(x, dtype=np.float64).ravel()
    pc1, pc2, ratios = pca_scores_2d(E, x)
    width, height = SCATTER_SIZE
    cv = _Canvas(width, height, (56, 16, 28, 40))

    def span(v):
        lo, hi = float(v.min()), float(v.max())
        pad = (hi - lo) * 0.05 or max(abs(lo), 1.0) * 0.05
        return lo - pad, hi + pad

    (x0, x1), (y0, y1) = span(pc1), span(pc2)
    cv.set_range(x0, x1, y0, y1)
    fmt = lambda t: f"{t:.3g}"
    cv.axes(f"PC1 ({100 * ratios[0]:.1f}%)", f"PC2 ({100 * ratios[1]:.1f}%)", _ticks(x0, x1), _ticks(y0, y1), fmt, fmt)

    xmin, xmax = float(x.min()), float(x.max())
    scale = (xmax - xmin) or 1.0
    cv.add('<g class="points">')
    for a, b, v in zip(pc1, pc2, x):
        cv.add(f'<circle cx="{_f(cv.px(a))}" cy="{_f(cv.py(b))}" r="2" fill="{ramp_color((v - xmin) / scale)}" fill-opacity="0.8"/>')
    cv.add("</g>")
    if highlight_zero:
        for a, b in zip(pc1[x == 0], pc2[x == 0]):
            cv.add(f'<text class="zero-marker" x="{_f(cv.px(a))}" y="{_f(cv.py(b) + 5)}" font-size="16" text-anchor="middle" fill="#d62728" {FONT}>×</text>')
    series = (Series("pca", tuple(pc1.tolist()), tuple(pc2.tolist()), color_values=tuple(x.tolist())),)
    meta = {"variance_ratios": ratios.tolist(), "zero_count": int(np.count_nonzero(x == 0)) if highlight_zero else 0}
    return FigureDoc(FigureKind.PCA_SCATTER, width, height, series, cv.render(title), title, meta)


DEFAULT_BOUNDS = (10**3, 10**4, 10**5, 10**6, 10**7)


def magnitude_sweep_figures(
    embedder,
    bounds: Sequence[int] = DEFAULT_BOUNDS,
    n_positive: int = 1000,
    n_mixed: int = 2000,
    seed: int = 0,
    cache=None,
) -> list[FigureDoc]:
    """PCA scatters over integers in [0, B] and [-B, B] for each bound B."""
    if not isinstance(embedder, Embedder):
        embedder = Embedder(embedder)
    figures = []
    name = embedder.model.model_name
    for bound in bounds:
        for signed, lo, count in (("positive", 0, n_positive), ("mixed", -bound, n_mixed)):
            samples = sample_integer_range(lo, bound, count, derive_seed("magnitude", seed, bound, signed))
            texts = [s.text for s in samples]
            x = np.array([s.value for s in samples])
            E = cached_embed(cache, embedder, texts)
            fig = plot_pca_scatter(E, x, True, f"{name}: x in [{lo}, {bound}], |X|={len(samples)}")
            fig.meta.update({"bound": bound, "signedness": signed})
            figures.append(fig)
    return figures
