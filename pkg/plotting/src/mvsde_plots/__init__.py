"""Figure generation for simulation harness CSV output."""
from .plots import (
    CSV_HEADER,
    ConvergeResult,
    CsvRow,
    MomentsResult,
    PlotError,
    PlotSpec,
    fit_line,
    plot_converge,
    plot_moments,
    read_rows,
)

__all__ = [
    "CSV_HEADER",
    "ConvergeResult",
    "CsvRow",
    "MomentsResult",
    "PlotError",
    "PlotSpec",
    "fit_line",
    "plot_converge",
    "plot_moments",
    "read_rows",
]

__version__ = "0.1.0"
