"""Portfolio CSV ingestion, fixed-effect pooling and plot-data tables."""

from .csvio import PortfolioParseError, parse_estimates, parse_portfolio, write_portfolio
from .plots import FIGURES, PlotTable, emit_plot_data, read_plot_table, write_plot_table
from .pooling import pool_fixed_effect

__all__ = [
    "FIGURES", "PlotTable", "PortfolioParseError", "emit_plot_data", "parse_estimates",
    "parse_portfolio", "pool_fixed_effect", "read_plot_table", "write_plot_table",
    "write_portfolio",
]
