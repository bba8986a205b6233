"""Figure renderers, one per plot kind.

Every renderer draws what the inputs already contain: fitted slopes and
summary numbers come from CSV columns or JSON sidecars, never from a
fresh fit, so the figure and the pipeline cannot drift apart.  render()
returns the output path together with the annotation values placed on
the figure, which is what the round-trip tests compare.
"""

from __future__ import annotations

import math
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .jobs import PlotJob, load_manifest
from .tables import SchemaError, read_sidecar, read_table


def _fmt(value):
    return "%.3g" % value


def _cell_series(table, xi, ei, path):
    picked = [
        i for i in range(len(table["scale"]))
        if int(table["x_index"][i]) == xi and int(table["e_index"][i]) == ei
    ]
    if not picked:
        raise SchemaError("no rows with x_index=%d, e_index=%d in %s"
                          % (xi, ei, path))
    picked.sort(key=lambda i: table["scale"][i])
    return picked


def _decay_curve(job):
    path = job.inputs[0]
    table = read_table(path, required=("scale", "x_index", "e_index",
                                       "norm_log", "fitted_rate"))
    xi = int(job.style.get("x_index", 0))
    ei = int(job.style.get("e_index", 0))
    rho_bar = float(job.style.get("rho_bar", 1.0))
    picked = _cell_series(table, xi, ei, path)
    scales = [table["scale"][i] for i in picked]
    norm_logs = [table["norm_log"][i] for i in picked]
    fitted = table["fitted_rate"][picked[-1]]

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(scales, norm_logs, "o-", label="log norm")
    ref = [norm_logs[0] - rho_bar * (s - scales[0]) for s in scales]
    ax.plot(scales, ref, "--", label="reference rate %s" % _fmt(rho_bar))
    label = "fitted rate = %s" % _fmt(fitted)
    ax.text(0.02, 0.04, label, transform=ax.transAxes)
    ax.set_xlabel("scale")
    ax.set_ylabel("log norm")
    ax.legend(loc="upper right")
    return fig, {"fitted_rate": fitted, "label": label,
                 "x_index": xi, "e_index": ei}


def _loglog_fit(job):
    if len(job.inputs) < 2:
        raise SchemaError(
            "loglog-fit needs the measure CSV and the fit sidecar")
    path, sidecar_path = job.inputs[0], job.inputs[1]
    table = read_table(path, required=("delta", "measure"))
    fit = read_sidecar(sidecar_path, required=("a", "log_c"))
    a = float(fit["a"])
    log_c = float(fit["log_c"])
    deltas = sorted(float(d) for d in table["delta"])

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.loglog(table["delta"], table["measure"], "o", label="measured")
    fitted = [math.exp(log_c) * d ** a for d in deltas]
    label = "a = %s" % _fmt(a)
    ax.loglog(deltas, fitted, "--", label=label)
    ax.text(0.02, 0.04, label, transform=ax.transAxes)
    ax.set_xlabel("delta")
    ax.set_ylabel("measure")
    ax.legend(loc="upper left")
    return fig, {"a": a, "log_c": log_c, "label": label}


def _cartan_ladder(job):
    path = job.inputs[0]
    table = read_table(path, required=("epsilon", "fraction", "error"))
    order = sorted(range(len(table["epsilon"])),
                   key=lambda i: -table["epsilon"][i])
    eps = [table["epsilon"][i] for i in order]
    frac = [table["fraction"][i] for i in order]
    err = [table["error"][i] for i in order]

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.errorbar(eps, frac, yerr=err, fmt="o-", capsize=3, label="bad fraction")
    ax.set_xscale("log")
    ax.invert_xaxis()
    annotations = {"points": len(eps)}
    if "decay_flag_ok" in table:
        ladder_ok = all(bool(v) for v in table["decay_flag_ok"])
        annotations["ladder_ok"] = ladder_ok
        ax.text(0.02, 0.92, "non-increasing: %s" % str(ladder_ok).lower(),
                transform=ax.transAxes)
    ax.set_xlabel("epsilon")
    ax.set_ylabel("fraction")
    ax.legend(loc="upper right")
    return fig, annotations


def _goodness_heatmap(job):
    path = job.inputs[0]
    field = str(job.style.get("field", "good"))
    table = read_table(path, required=("scale", "x_index", "e_index", field))
    scales = sorted({int(s) for s in table["scale"]})
    scale = int(job.style.get("scale", scales[-1]))
    xs = sorted({int(v) for v in table["x_index"]})
    es = sorted({int(v) for v in table["e_index"]})
    grid = np.full((len(xs), len(es)), np.nan)
    cells = 0
    for i in range(len(table["scale"])):
        if int(table["scale"][i]) != scale:
            continue
        xi = xs.index(int(table["x_index"][i]))
        ei = es.index(int(table["e_index"][i]))
        grid[xi, ei] = float(table[field][i])
        cells += 1
    if cells == 0:
        raise SchemaError("no rows with scale=%d in %s" % (scale, path))

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    image = ax.imshow(grid, origin="lower", aspect="auto",
                      interpolation="nearest")
    fig.colorbar(image, ax=ax, label=field)
    ax.set_xlabel("energy index")
    ax.set_ylabel("phase index")
    ax.set_title("%s at scale %d" % (field, scale))
    return fig, {"scale": scale, "field": field, "cells": cells}


def _eigenvector_profile(job):
    path = job.inputs[0]
    table = read_table(path, required=("energy", "rate"))
    finite = [i for i in range(len(table["rate"]))
              if math.isfinite(table["rate"][i])]

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    energy = [table["energy"][i] for i in finite]
    rate = [table["rate"][i] for i in finite]
    if "participation_ratio" in table:
        pr = [table["participation_ratio"][i] for i in finite]
        points = ax.scatter(energy, rate, c=pr, s=12)
        fig.colorbar(points, ax=ax, label="participation ratio")
    else:
        ax.scatter(energy, rate, s=12)
    annotations = {"states": len(table["rate"])}
    if len(job.inputs) > 1:
        summary = read_sidecar(job.inputs[1], required=("median_rate",))
        median = float(summary["median_rate"])
        label = "median rate = %s" % _fmt(median)
        ax.axhline(median, linestyle="--", linewidth=1.0)
        ax.text(0.02, 0.92, label, transform=ax.transAxes)
        annotations["median_rate"] = median
        annotations["label"] = label
    ax.set_xlabel("energy")
    ax.set_ylabel("decay rate")
    return fig, annotations


_RENDERERS = {
    "decay-curve": _decay_curve,
    "loglog-fit": _loglog_fit,
    "cartan-ladder": _cartan_ladder,
    "goodness-heatmap": _goodness_heatmap,
    "eigenvector-profile": _eigenvector_profile,
}


def render(job: PlotJob):
    """Render one job; returns {"output", "annotations"}."""
    fig, annotations = _RENDERERS[job.kind](job)
    out_dir = os.path.dirname(os.path.abspath(job.output))
    os.makedirs(out_dir, exist_ok=True)
    try:
        fig.savefig(job.output, dpi=int(job.style.get("dpi", 120)))
    finally:
        plt.close(fig)
    return {"output": job.output, "annotations": annotations}


def run_manifest(path):
    """Render every job in the manifest, in order."""
    return [render(job) for job in load_manifest(path)]
