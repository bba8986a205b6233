"""Initial-scale bounds: sublevel sets, their measure, and Neumann series.

At large coupling the diagonal of lambda^{-1} H - E dominates whenever the
phase stays out of the sublevel set X_N = {x : some point of Q_N lands in
{|v - E| < delta}}.  Off X_N, with lambda >= 2 delta^{-1} (2N+1)^d, the
Neumann series for the restricted inverse converges geometrically and gives
||G|| <= 2/delta and |G(n, n')| <= (2/delta) e^{-rho |n - n'|} for all pairs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.stats import qmc

from .errors import HypothesisError, InputError
from .greens import compute_greens, operator_norm
from .lattice import point_set_of
from .model import Phase, assemble_restricted


# ---------------------------------------------------------------------------
# sublevel sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SublevelSpec:
    """{x : |v(x + n omega) - E| < delta for some n in the region}."""

    energy: float
    delta: float
    region_points: tuple

    def __post_init__(self):
        if self.delta <= 0:
            raise InputError("delta must be positive")


def in_bad_set(cfg, spec, x):
    for n in spec.region_points:
        if abs(cfg.potential_at(x, n) - spec.energy) < spec.delta:
            return True
    return False


def diagonal_margin(cfg, spec, x):
    """min over the region of |v(x + n omega) - E|; > delta means x is off
    the sublevel set with that margin."""
    return min(abs(cfg.potential_at(x, n) - spec.energy)
               for n in spec.region_points)


@dataclass
class MeasureEstimate:
    """Estimated phase measure of a set, as a fraction of the unit cube.

    `value` is the cube fraction, `absolute` the same number times the cube
    volume (1 for the full torus; for section estimates the measure of the
    scanned block).  `error` is a half-width: quadrature resolution for grid
    scans, a 3-sigma binomial radius for Monte Carlo.
    """

    value: float
    error: float
    method: str
    samples: int
    absolute: float = None

    def __post_init__(self):
        if self.absolute is None:
            self.absolute = self.value

    def to_json(self):
        return json.dumps(asdict(self))


def _bad_mask(cfg, spec, scan_idx, cols):
    """Vectorized sublevel indicator over parallel coordinate columns.

    cols[p] carries the values of torus coordinate scan_idx[p]; coordinates
    outside scan_idx sit at 0.  The trig potential is 1-periodic per
    coordinate, so the orbit shift needs no explicit mod.
    """
    blocks = cfg.blocks
    owner = []
    for j, sl in enumerate(blocks.slices()):
        owner.extend([j] * (sl.stop - sl.start))
    zero = np.zeros_like(np.asarray(cols[0], dtype=float))
    base = [zero] * blocks.total
    for p, i in enumerate(scan_idx):
        base[i] = np.asarray(cols[p], dtype=float)
    mask = None
    for n in spec.region_points:
        coords = [base[i] + n[owner[i]] * cfg.omega.coords[i]
                  for i in range(blocks.total)]
        vals = cfg.potential.eval_array(coords)
        m = np.abs(vals - spec.energy) < spec.delta
        mask = m if mask is None else mask | m
    return mask


def measure_bad_set(cfg, spec, method="grid", samples=2 ** 16, seed=0,
                    block=None):
    """Measure of the sublevel set over the torus (or one block's section).

    method "grid" scans a uniform mesh (b <= 2 coordinates; resolution error
    scales like the mesh step times the number of region points), "mc" draws
    uniform samples, "sobol" uses a scrambled low-discrepancy sequence with
    the same binomial error report.
    """
    blocks = cfg.blocks
    if block is None:
        scan_idx = list(range(blocks.total))
    else:
        sl = blocks.slices()[block]
        scan_idx = list(range(sl.start, sl.stop))
    dims = len(scan_idx)

    if method == "grid":
        if dims > 2:
            raise InputError("grid scan supports at most 2 dimensions")
        per_axis = int(round(samples ** (1.0 / dims)))
        mesh = np.arange(per_axis) / per_axis
        if dims == 1:
            cols = [mesh]
        else:
            uu, ww = np.meshgrid(mesh, mesh, indexing="ij")
            cols = [uu.ravel(), ww.ravel()]
        total = per_axis ** dims
        hits = int(np.count_nonzero(_bad_mask(cfg, spec, scan_idx, cols)))
        frac = hits / total
        err = len(spec.region_points) * dims / per_axis
        return MeasureEstimate(frac, min(err, 1.0), "grid", total)

    if method == "mc":
        rng = np.random.default_rng(seed)
        draws = rng.random((samples, dims))
    elif method == "sobol":
        eng = qmc.Sobol(d=dims, scramble=True, seed=seed)
        draws = eng.random(samples)
    else:
        raise InputError("unknown measure method %r" % (method,))
    cols = [draws[:, p] for p in range(dims)]
    hits = int(np.count_nonzero(_bad_mask(cfg, spec, scan_idx, cols)))
    frac = hits / samples
    err = 3.0 * math.sqrt(max(frac * (1 - frac), 1.0 / samples) / samples)
    return MeasureEstimate(frac, err, method, samples)


def merge_block_sections(per_block):
    """Union bound across blocks: sum the fractions, cap at 1."""
    value = min(sum(e.value for e in per_block), 1.0)
    error = sum(e.error for e in per_block)
    samples = sum(e.samples for e in per_block)
    return MeasureEstimate(value, error, "union", samples)


def lojasiewicz_fit(cfg, energy, deltas, method="grid", samples=2 ** 16,
                    seed=0, n=(0,) * 1):
    """Fit measure({|v - E| < delta}) ~ C delta^a over a delta ladder.

    Returns (a, log_C, pairs); pairs holds (delta, measure) with zero
    measures dropped.  The exponent is the least-squares slope in log-log.
    """
    n = tuple(n)
    pairs = []
    for delta in deltas:
        spec = SublevelSpec(energy, delta, (n,))
        est = measure_bad_set(cfg, spec, method=method, samples=samples,
                              seed=seed)
        if est.value > 0:
            pairs.append((delta, est.value))
    if len(pairs) < 2:
        raise HypothesisError("not enough nonzero measures to fit",
                              condition="lojasiewicz")
    xs = np.log([p[0] for p in pairs])
    ys = np.log([p[1] for p in pairs])
    a, logc = np.polyfit(xs, ys, 1)
    return float(a), float(logc), pairs


# ---------------------------------------------------------------------------
# Neumann bounds
# ---------------------------------------------------------------------------

@dataclass
class NeumannReport:
    coupling_ok: bool
    phase_ok: bool
    norm_ok: bool
    decay_ok: bool
    norm_value: float
    norm_budget: float
    worst_margin_log: float
    margin: float

    @property
    def certified(self):
        return self.coupling_ok and self.phase_ok and self.norm_ok \
            and self.decay_ok

    def to_json(self):
        return json.dumps(asdict(self))


def coupling_threshold(delta, scale, d):
    """The large-coupling requirement lambda >= 2 delta^{-1} (2N+1)^d."""
    return 2.0 / delta * (2 * scale + 1) ** d


def neumann_bound_check(cfg, region, energy, x, delta, scale=None):
    """Check the initial-scale bounds on one region at one phase.

    Hypotheses: lambda above the coupling threshold and x off the sublevel
    set.  Conclusions checked on the actual inverse: ||G|| <= 2/delta and
    |G(n, n')| <= (2/delta) e^{-rho r} for every pair (rho the kernel rate).
    """
    pts = sorted(point_set_of(region))
    if scale is None:
        arr = np.array(pts)
        scale = max(int(np.max(arr[:, k]) - np.min(arr[:, k]))
                    for k in range(arr.shape[1])) // 2
    spec = SublevelSpec(energy, delta, tuple(pts))
    coupling_ok = cfg.lam >= coupling_threshold(delta, scale, cfg.d)
    margin = diagonal_margin(cfg, spec, x)
    phase_ok = margin >= delta
    if not (coupling_ok and phase_ok):
        return NeumannReport(coupling_ok, phase_ok, False, False,
                             math.nan, 2.0 / delta, math.nan, margin)
    g = compute_greens(cfg, pts, energy, x)
    norm_value = operator_norm(g.matrix)
    norm_ok = norm_value <= 2.0 / delta
    rho = cfg.kernel.rho
    budget_log = math.log(2.0 / delta)
    arr = np.array(pts)
    worst = -math.inf
    decay_ok = True
    for i in range(len(pts)):
        r = np.max(np.abs(arr - arr[i]), axis=1)
        a = np.abs(g.matrix[i])
        with np.errstate(divide="ignore"):
            log_a = np.where(a > 0, np.log(np.maximum(a, 1e-320)), -np.inf)
        margins = log_a - (budget_log - rho * r)
        m = float(np.max(margins))
        worst = max(worst, m)
        if m > 1e-12:
            decay_ok = False
    return NeumannReport(coupling_ok, phase_ok, norm_ok, decay_ok,
                         norm_value, 2.0 / delta, worst, margin)


def neumann_series_compare(cfg, region, energy, x, delta, terms=30):
    """Partial sums of G = B^{-1} sum_s (-A B^{-1})^s against the inverse.

    B is the diagonal part, A the off-diagonal part of lambda^{-1} H - E.
    Returns the residual curve [max |S_t - G|] for t = 0..terms; each entry
    must satisfy residual(t) <= (2/delta) 2^{-t} + 1e-10 in the certified
    regime.
    """
    pts = sorted(point_set_of(region))
    M, pts = assemble_restricted(cfg, pts, energy, x)
    g = compute_greens(cfg, pts, energy, x)
    B = np.diag(np.diag(M))
    A = M - B
    Binv = np.diag(1.0 / np.diag(M))
    step = -A @ Binv
    term = Binv.copy()
    partial = Binv.copy()
    residuals = [float(np.max(np.abs(partial - g.matrix)))]
    for _ in range(terms):
        term = term @ step
        partial = partial + term
        residuals.append(float(np.max(np.abs(partial - g.matrix))))
    return residuals


def series_budget(delta, t):
    return (2.0 / delta) * 2.0 ** (-t) + 1e-10


def survey_phases(cfg, spec, count, seed=0):
    """Uniform phases split into (off_sublevel, on_sublevel) lists."""
    rng = np.random.default_rng(seed)
    good, bad = [], []
    for _ in range(count):
        x = Phase(tuple(rng.random(cfg.blocks.total)), cfg.blocks)
        (bad if in_bad_set(cfg, spec, x) else good).append(x)
    return good, bad
