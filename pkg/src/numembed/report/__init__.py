"""Tables and SVG figures rendered from sweep results."""
from .figures import (
    DEFAULT_BOUNDS,
    RAMP,
    FigureDoc,
    FigureKind,
    Series,
    magnitude_sweep_figures,
    pca_scores_2d,
    plot_metric_curves,
    plot_pca_scatter,
    ramp_color,
)
from .tables import TableDoc, TableFormat, render_table, round2

__all__ = [
    "DEFAULT_BOUNDS",
    "RAMP",
    "FigureDoc",
    "FigureKind",
    "Series",
    "TableDoc",
    "TableFormat",
    "magnitude_sweep_figures",
    "pca_scores_2d",
    "plot_metric_curves",
    "plot_pca_scatter",
    "ramp_color",
    "render_table",
    "round2",
]
