from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Sequence

from ..errors import ConfigError, MixedFamilies
from ..metrics import METRICS, SweepResult, min_max_summary
from ..numgen import Family
from ..providers.base import Provider

PROVIDER_ORDER = [Provider.GEMINI, Provider.OPENAI, Provider.VOYAGE, Provider.SYNTHETIC]

CAPTIONS = {
    Family.POSITIVE_DECIMALS: "Positive decimals in [0, 1], precision b = decimal places.",
    Family.MIXED_SIGN_DECIMALS: "Mixed-sign decimals in [-1, 1], precision b = decimal places.",
    Family.MIXED_SIGN_INTEGERS: "Mixed-sign integers in (-10^a, 10^a), precision a = integer places.",
}


class TableFormat(str, enum.Enum):
    MARKDOWN = "md"
    CSV = "csv"
    LATEX = "tex"


def round2(value: float) -> str:
    """Two decimals, ties to even on the exact binary value; never ``-0.00``."""
    q = Decimal(value).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN)
    if q == 0:
        q = abs(q)
    return f"{q:.2f}"


def pm(mean: float, std: float, sep: str = "±") -> str:
    return f"{round2(mean)} {sep} {round2(std)}"


@dataclass(frozen=True)
class TableDoc:
    caption: str
    columns: tuple[str, ...]
    rows: tuple[tuple[str, ...], ...]
    format: TableFormat
    text: str


def _columns() -> tuple[str, ...]:
    cols = ["Model", "Provider"]
    for m in METRICS:
        cols += [f"{m.label} Min", f"{m.label} Max"]
    return tuple(cols)


def _tex_escape(s: str) -> str:
    return s.replace("\\", r"\textbackslash{}").replace("_", r"\_").replace("&", r"\&").replace("%", r"\%")


def _render_markdown(caption, columns, cells) -> str:
    lines = [f"**{caption}**", "", "| " + " | ".join(columns) + " |", "|" + "---|" * len(columns)]
    lines += ["| " + " | ".join(r) + " |" for r in cells]
    return "\n".join(lines) + "\n"


def _render_csv(columns, cells) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    writer.writerows(cells)
    return buf.getvalue()


def _render_latex(caption, sweeps_rows) -> str:
    head = " & ".join(["Model", "Provider"] + [rf"\multicolumn{{2}}{{c}}{{{_tex_escape(m.label).replace('²', '$^2$')}}}" for m in METRICS])
    sub = " & ".join(["", ""] + ["Min", "Max"] * len(METRICS))
    body = [" & ".join(_tex_escape(c) if i < 2 else c for i, c in enumerate(r)) + r" \\" for r in sweeps_rows]
    return "\n".join(
        [
            r"\begin{table*}[h]",
            rf"\caption{{{_tex_escape(caption)}}}",
            r"\centering",
            r"\begin{tabular}{ll" + "cc" * len(METRICS) + "}",
            r"\toprule",
            head + r" \\",
            sub + r" \\",
            r"\midrule",
            *body,
            r"\bottomrule",
            r"\end{tabular}",
            r"\end{table*}",
        ]
    ) + "\n"


def render_table(sweeps: Sequence[SweepResult], format: TableFormat | str = TableFormat.MARKDOWN) -> TableDoc:
    """One row per model, providers grouped; Min/Max columns per metric."""
    fmt = TableFormat(format)
    if not sweeps:
        raise ConfigError("no sweeps to tabulate")
    families = {s.family for s in sweeps}
    if len(families) != 1:
        raise MixedFamilies(f"sweeps span several families: {sorted(f.value for f in families)}")
    family = families.pop()
    ordered = sorted(sweeps, key=lambda s: (PROVIDER_ORDER.index(s.model.provider), s.model.model_name))
    sep = r"$\pm$" if fmt is TableFormat.LATEX else "±"
    cells = []
    for s in ordered:
        row = [s.model.model_name, s.model.provider.label]
        for summary in min_max_summary(s):
            row += [pm(summary.min.mean, summary.min.std, sep), pm(summary.max.mean, summary.max.std, sep)]
        cells.append(tuple(row))
    caption = CAPTIONS[family]
    columns = _columns()
    if fmt is TableFormat.MARKDOWN:
        text = _render_markdown(caption, columns, cells)
    elif fmt is TableFormat.CSV:
        text = _render_csv(columns, cells)
    else:
        text = _render_latex(caption, cells)
    return TableDoc(caption, columns, tuple(cells), fmt, text)
