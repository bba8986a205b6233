"""Readers for the pipeline's CSV tables and JSON sidecars.

Cells are parsed as bool ("true"/"false"), then float, then kept as
text; schema problems are reported by column and file name so a broken
manifest is diagnosable from the error alone.
"""

from __future__ import annotations

import csv
import json


class SchemaError(ValueError):
    """An input file does not match the documented schema."""


class EmptyInputError(ValueError):
    """An input table has no data rows."""


def _parse_cell(text):
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return float(text)
    except ValueError:
        return text


def read_table(path, required=()):
    """Read a CSV into {column: list of parsed cells}.

    Raises SchemaError naming the first missing required column and
    EmptyInputError naming the file when there are no data rows.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError("no rows in %s" % path) from None
        rows = [row for row in reader if row]
    for name in required:
        if name not in header:
            raise SchemaError("column \"%s\" missing in %s (found: %s)"
                              % (name, path, ", ".join(header)))
    if not rows:
        raise EmptyInputError("no rows in %s" % path)
    table = {name: [] for name in header}
    for row in rows:
        if len(row) != len(header):
            raise SchemaError("row with %d cells under %d columns in %s"
                              % (len(row), len(header), path))
        for name, cell in zip(header, row):
            table[name].append(_parse_cell(cell))
    return table


def read_sidecar(path, required=()):
    """Read a JSON sidecar dict, checking the required keys."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError("sidecar %s is not valid JSON: %s" % (path, exc)) \
            from exc
    if not isinstance(obj, dict):
        raise SchemaError("sidecar %s must hold a JSON object" % path)
    for name in required:
        if name not in obj:
            raise SchemaError("key \"%s\" missing in %s" % (name, path))
    return obj
