"""Experiment drivers behind the command-line interface.

Every driver returns (header, rows) with rows already in their final
deterministic order; floats are formatted by the writer with %.17g so a
fixed seed reproduces output byte for byte.  Randomness is drawn from
per-cell generators spawned from one SeedSequence, which keeps results
independent of evaluation order and thread count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .cartan import AnalyticMatrixFamily, cartan_bad_measure
from .errors import SingularityError
from .greens import compute_greens, goodness
from .initial_scale import (
    SublevelSpec, in_bad_set, neumann_bound_check, neumann_series_compare,
    series_budget,
)
from .lattice import ElementaryRegion
from .model import Phase, assemble_restricted
from .multiscale import (
    LogScale, dominance_threshold, hit_count, initial_lambda, n0_estimate,
    omega_budget, rho_sequence, scale_step, threshold_check, toy_msa_run,
)

FLOAT_FORMAT = "%.17g"


def format_cell(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return FLOAT_FORMAT % v
    return str(v)


def write_csv(path_or_handle, header, rows):
    def dump(fh):
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_cell(v) for v in row) + "\n")
    if hasattr(path_or_handle, "write"):
        dump(path_or_handle)
    else:
        with open(path_or_handle, "w", newline="") as fh:
            dump(fh)


def spawn_rngs(seed, count):
    return [np.random.default_rng(s)
            for s in np.random.SeedSequence(seed).spawn(count)]


def random_phase(rng, blocks):
    return Phase(tuple(rng.random(blocks.total)), blocks)


def phase_grid(cfg, count, seed):
    """Deterministic phases: a uniform grid for a 1-dimensional torus, a
    seeded uniform sample otherwise."""
    b = cfg.blocks.total
    if b == 1:
        return [Phase((j / count,), cfg.blocks) for j in range(count)]
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    return [Phase(tuple(rng.random(b)), cfg.blocks) for _ in range(count)]


def energy_grid(cfg, count, span_factor=1.1):
    """Energies spanning the certified spectral bound plus ten percent."""
    C = cfg.spectral_bound() * span_factor
    if count == 1:
        return [0.0]
    return [-C + 2 * C * j / (count - 1) for j in range(count)]


def _map_cells(fn, cells, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(fn, cells))
    return [fn(c) for c in cells]


# ---------------------------------------------------------------------------
# scans
# ---------------------------------------------------------------------------

def run_goodness_scan(cfg, scales, energies, phases, rho_bar, threads=1):
    """Goodness of Q_N on a full (x, E) grid, one row per (N, x, E) cell."""
    cells = [(int(N), xi, ei)
             for N in scales
             for xi in range(len(phases))
             for ei in range(len(energies))]

    def work(cell):
        N, xi, ei = cell
        region = ElementaryRegion((0,) * cfg.d, N)
        try:
            rep = goodness(compute_greens(cfg, region, energies[ei],
                                          phases[xi]), rho_bar, N)
            return (N, xi, ei, energies[ei], rep.good, rep.norm_ok,
                    rep.decay_ok, rep.norm_log, rep.fitted_rate)
        except SingularityError:
            return (N, xi, ei, energies[ei], False, False, False,
                    math.inf, math.nan)

    rows = _map_cells(work, cells, threads)
    header = ["scale", "x_index", "e_index", "energy", "good", "norm_ok",
              "decay_ok", "norm_log", "fitted_rate"]
    return header, rows


def run_ldt_scan(cfg, scales, energies, phases, rho_bar, threads=1):
    """Fraction of phases where Q_N is good, per (N, E)."""
    header, rows = run_goodness_scan(cfg, scales, energies, phases, rho_bar,
                                     threads)
    out = []
    for N in scales:
        for ei in range(len(energies)):
            sub = [r for r in rows if r[0] == int(N) and r[2] == ei]
            good = sum(1 for r in sub if r[4])
            rates = [r[8] for r in sub if r[4] and math.isfinite(r[8])]
            mean_rate = sum(rates) / len(rates) if rates else math.nan
            out.append((int(N), ei, energies[ei], len(sub), good,
                        good / len(sub), mean_rate))
    return ["scale", "e_index", "energy", "samples", "good",
            "good_fraction", "mean_fitted_rate"], out


def run_neumann_check(cfg, scale, energy, delta, count, seed, threads=1,
                      series_terms=0):
    """Initial-scale bounds on sampled phases; sublevel draws are reported
    with hypotheses_ok false and skipped conclusions."""
    region = ElementaryRegion((0,) * cfg.d, scale)
    pts = tuple(sorted(region.point_set()))
    spec = SublevelSpec(energy, delta, pts)
    rngs = spawn_rngs(seed, count)
    violations = []

    def work(k):
        x = random_phase(rngs[k], cfg.blocks)
        if in_bad_set(cfg, spec, x):
            return (k, False, False, False, math.nan, 2.0 / delta, math.nan,
                    True)
        rep = neumann_bound_check(cfg, region, energy, x, delta, scale=scale)
        series_ok = True
        if series_terms and rep.certified:
            residuals = neumann_series_compare(cfg, region, energy, x, delta,
                                               terms=series_terms)
            series_ok = all(
                res <= series_budget(delta, t)
                for t, res in enumerate(residuals)
            )
        return (k, True, rep.norm_ok, rep.decay_ok, rep.norm_value,
                rep.norm_budget, rep.worst_margin_log, series_ok)

    rows = _map_cells(work, range(count), threads)
    for r in rows:
        if r[1] and not (r[2] and r[3] and r[7]):
            violations.append(r[0])
    header = ["sample", "hypotheses_ok", "norm_ok", "decay_ok", "norm",
              "norm_budget", "worst_margin_log", "series_ok"]
    return header, rows, violations


def run_cartan_sweep(cfg, scale, energy, x, epsilons, j_params, half_width,
                     samples, seed, calibration=(1.0, 0.05)):
    """Bad-parameter measure for the restricted family T(z) with the first
    j_params phase coordinates perturbed by z."""
    region = ElementaryRegion((0,) * cfg.d, scale)
    pts = sorted(region.point_set())

    def entries(z):
        coords = list(x.coords)
        for j, t in enumerate(z):
            coords[j] = coords[j] + t
        M, _ = assemble_restricted(cfg, pts, energy,
                                   Phase(tuple(coords), cfg.blocks))
        return M

    family = AnalyticMatrixFamily(entries, j_params, half_width, len(pts))
    reports = cartan_bad_measure(family, epsilons, samples=samples, seed=seed,
                                 calibration=calibration)
    rows = [(r.epsilon, r.fraction, r.absolute, r.error, r.samples,
             r.bound_log, r.envelope_ok, r.decay_flag_ok) for r in reports]
    header = ["epsilon", "fraction", "absolute", "error", "samples",
              "bound_log", "envelope_ok", "decay_flag_ok"]
    return header, rows


def run_schedule_table(constants, n_start, steps, rho, degrade_constant,
                       n_start_log=None):
    """Scale-ladder bookkeeping rows plus a meta record of the constants."""
    start = LogScale.from_log(n_start_log) if n_start_log is not None \
        else LogScale.of(n_start)
    seq = rho_sequence(rho, start, degrade_constant, constants, steps)
    rows = []
    cur = start
    for i in range(steps):
        step = scale_step(cur, constants)
        nn = cur.normalize()
        rows.append((i + 1, nn.level, nn.value, nn.log,
                     seq["rates"][i] if i < len(seq["rates"]) else math.nan,
                     threshold_check(cur, constants),
                     step["N2"].normalize().log, step["N3"].normalize().log))
        cur = step["N3"] if step["N3"] > cur else step["N2"]
    header = ["index", "level", "value", "log_value", "rho_i",
              "threshold_ok", "log_n2", "log_n3"]
    meta = {
        "c1": constants.c1, "c2": constants.c2, "c3": constants.c3,
        "c4": constants.c4, "b_max": constants.b_max,
        "rho_inf": seq["inf_rate"], "rho_target": seq["target"],
        "rho_verdict": seq["verdict"],
        "dominance_threshold_log": dominance_threshold(constants),
        "threshold_scale_log": n0_estimate(constants),
        "omega_budget_tail": omega_budget(),
        "initial_lambda": initial_lambda(min(start.to_float(), 1e8), 1),
    }
    return header, rows, meta


def run_hit_count(cfg, spec, x, scales):
    rows = []
    zero = 0
    for N in scales:
        rec = hit_count(cfg, spec, x, int(N))
        rows.append((int(N), rec["cap"], rec["inner_radius"], rec["count"],
                     rec["count"] == 0))
        zero += rec["count"] == 0
    frac = zero / len(rows) if rows else math.nan
    return ["scale", "cap", "inner_radius", "count", "clear"], rows, frac


def run_msa_toy(cfg, phases, energies, delta, n1, n_bar, big_n, rho_bar,
                **kwargs):
    result = toy_msa_run(cfg, phases, energies, delta, n1, n_bar, big_n,
                         rho_bar, **kwargs)
    rows = []
    for c in result.cells:
        rows.append((c["x_index"], c["e_index"], c["energy"],
                     c["stages"].get("initial", False),
                     c["stages"].get("ml", False),
                     c["stages"].get("geometry", False),
                     c["stages"].get("cartan", False),
                     c["stages"].get("paste", False),
                     c["final_good"],
                     c["effective_rate"] if c["effective_rate"] is not None
                     else math.nan))
    header = ["x_index", "e_index", "energy", "initial_ok", "ml_ok",
              "geometry_ok", "cartan_ok", "paste_ok", "final_good",
              "effective_rate"]
    return header, rows, result


# ---------------------------------------------------------------------------
# localization profiles
# ---------------------------------------------------------------------------

def eigenvector_profile(psi, pts, floor=1e-280):
    """(center, decay rate, participation ratio) of one eigenvector.

    The rate is a least-squares fit of log |psi| against sup-distance from
    the peak, taken over the outer half of the numerically live support:
    the dense eigensolver deflates far-tail entries to exact zeros, so the
    fit window is r in [r_live / 2, r_live] where r_live is the largest
    distance with amplitude above `floor`.  Fewer than two usable points
    means the vector is indistinguishable from compactly supported and the
    rate is reported as inf.
    """
    psi = np.asarray(psi, dtype=float)
    amp = np.abs(psi)
    center_idx = int(np.argmax(amp))
    center = pts[center_idx]
    arr = np.array(pts)
    r = np.max(np.abs(arr - np.array(center)), axis=1)
    live = amp >= floor
    norm2 = float(np.sum(psi ** 2))
    pr = norm2 ** 2 / float(np.sum(psi ** 4))
    if int(np.count_nonzero(live)) < 2:
        return center, math.inf, pr
    r_live = float(np.max(r[live]))
    mask = live & (r >= r_live / 2.0)
    if int(np.count_nonzero(mask)) < 2 or len(set(r[mask].tolist())) < 2:
        return center, math.inf, pr
    slope = np.polyfit(r[mask], np.log(amp[mask]), 1)[0]
    return center, -float(slope), pr


def localization_profile(cfg, scale, x):
    """Eigen-decomposition of the study operator on Q_scale with per-state
    localization measurements."""
    region = ElementaryRegion((0,) * cfg.d, scale)
    M, pts = assemble_restricted(cfg, region, 0.0, x)
    vals, vecs = np.linalg.eigh(M)
    rows = []
    for i in range(len(vals)):
        center, rate, pr = eigenvector_profile(vecs[:, i], pts)
        rows.append((i, float(vals[i]), ";".join(str(c) for c in center),
                     rate, pr))
    header = ["state", "energy", "center", "rate", "participation_ratio"]
    rates = sorted(r[3] for r in rows)
    median_rate = rates[len(rates) // 2] if rates else math.nan
    summary = {"states": len(rows), "median_rate": median_rate,
               "residual_ok": bool(
                   np.max(np.abs(M @ vecs - vecs * vals))
                   <= 1e-8 * max(np.linalg.norm(M, 2), 1e-300))}
    return header, rows, summary
