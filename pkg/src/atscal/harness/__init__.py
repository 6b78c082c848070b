"""Benchmark protocol: methods x validation sizes x seeded runs, plus analysis tables."""

from .analysis import GroupRow, analyze_entropy_bins, analyze_per_class, format_table
from .config import BenchmarkConfig, FileTask
from .report import (
    Aggregate,
    aggregate,
    average_relative,
    cells_csv,
    relative_cells,
    relative_metric,
    summary_markdown,
    write_report,
)
from .runner import CELL_FAILED, CELL_OK, BenchmarkReport, Cell, derive_seed, run_benchmark

__all__ = [
    "Aggregate", "BenchmarkConfig", "BenchmarkReport", "CELL_FAILED", "CELL_OK", "Cell", "FileTask",
    "GroupRow", "aggregate", "analyze_entropy_bins", "analyze_per_class", "average_relative",
    "cells_csv", "derive_seed", "format_table", "relative_cells", "relative_metric", "run_benchmark",
    "summary_markdown", "write_report",
]
