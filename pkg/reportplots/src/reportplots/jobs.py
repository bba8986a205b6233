"""Plot jobs and the manifest format.

A manifest is a JSON file of the form

    {"jobs": [{"kind": "...", "input": ..., "output": "...",
               "style": {...}}, ...]}

where `kind` is one of KINDS, `input` is a path or a list of paths
(data table first, JSON sidecars after), `output` is the image path,
and `style` is an optional dict of per-kind options.  Relative paths
are resolved against the manifest's directory.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

KINDS = (
    "decay-curve",
    "loglog-fit",
    "cartan-ladder",
    "goodness-heatmap",
    "eigenvector-profile",
)


class ManifestError(ValueError):
    """The manifest file is malformed or names an unknown plot kind."""


@dataclass(frozen=True)
class PlotJob:
    kind: str
    inputs: tuple
    output: str
    style: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ManifestError(
                "unknown plot kind %r (expected one of %s)"
                % (self.kind, ", ".join(KINDS)))
        if not self.inputs:
            raise ManifestError("job %r has no input paths" % self.kind)


def _as_paths(value):
    if isinstance(value, str):
        return (value,)
    if isinstance(value, (list, tuple)):
        return tuple(str(v) for v in value)
    raise ManifestError("input must be a path or a list of paths")


def job_from_dict(obj, base_dir="."):
    for key in ("kind", "input", "output"):
        if key not in obj:
            raise ManifestError("job entry is missing %r" % key)
    inputs = tuple(os.path.normpath(os.path.join(base_dir, p))
                   for p in _as_paths(obj["input"]))
    output = os.path.normpath(os.path.join(base_dir, str(obj["output"])))
    return PlotJob(str(obj["kind"]), inputs, output,
                   dict(obj.get("style", {})))


def load_manifest(path):
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError("cannot read manifest %s: %s" % (path, exc)) \
            from exc
    if not isinstance(obj, dict) or "jobs" not in obj:
        raise ManifestError("manifest %s has no \"jobs\" list" % path)
    base = os.path.dirname(os.path.abspath(path))
    return [job_from_dict(entry, base) for entry in obj["jobs"]]
