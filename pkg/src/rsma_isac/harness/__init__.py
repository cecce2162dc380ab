"""Experiment harness: spec files, seeded runs, records and figure data."""

from .figures import FIGURES, FigureError, emit_figure_data
from .records import SCHEMA_VERSION, RecordWriter, ResultRecord, read_records
from .runner import run, run_task, solve_scheme
from .spec import SCHEMES, ExperimentSpec, SpecError, load_spec, parse_spec

__all__ = [
    "FIGURES", "FigureError", "emit_figure_data", "SCHEMA_VERSION", "RecordWriter", "ResultRecord",
    "read_records", "run", "run_task", "solve_scheme", "SCHEMES", "ExperimentSpec", "SpecError",
    "load_spec", "parse_spec",
]
