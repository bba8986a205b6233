"""Batch figure rendering for the operator-lab CSV/JSON artifacts.

This package is deliberately downstream-only: every number that appears
on a figure (curves, fitted slopes, summary annotations) is read from
the input files, so a plot can never disagree with the pipeline that
produced its data.
"""

from .jobs import KINDS, PlotJob, load_manifest
from .rendering import render, run_manifest
from .tables import EmptyInputError, SchemaError, read_sidecar, read_table

__all__ = [
    "EmptyInputError",
    "KINDS",
    "PlotJob",
    "SchemaError",
    "load_manifest",
    "read_sidecar",
    "read_table",
    "render",
    "run_manifest",
]
