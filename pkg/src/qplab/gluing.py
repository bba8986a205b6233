"""Resolvent pasting: the identity, the smallness condition, and decay
propagation from a cover of good windows to a large region.

The resolvent identity for a partition Lambda = Lambda1 u Lambda2 reads

    G_Lambda = G_plus - lambda^{-1} G_plus Gamma G_Lambda,

with G_plus the block-diagonal inverse and Gamma the kernel coupling the two
pieces.  It holds exactly; `resolvent_residual` measures it entrywise and is
pure float noise when the inversions are healthy.

Pasting good windows multiplies constants by 2 (the doubled goodness budget),
is admissible only under the summability condition implemented by
`ml_condition`, and degrades decay rates by O(1/sqrt(M0)); the calibrated
degradation constants per kernel family live in data/degrade_constants.json.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from importlib import resources

import numpy as np

from .errors import HypothesisError, InputError, InvariantFailureError
from .greens import compute_greens, goodness, operator_norm
from .lattice import find_window, point_set_of, sup_distance

TAIL_TERM_FLOOR = 1e-18


# ---------------------------------------------------------------------------
# resolvent identity
# ---------------------------------------------------------------------------

def coupling_kernel(cfg, pts1, pts2):
    """Gamma restricted to (pts1 x pts2) + (pts2 x pts1) inside pts1 u pts2.

    Returns the dense matrix on the union (sorted lexicographically) holding
    the raw kernel entries S(n - n') between the two pieces and zero within
    each piece.
    """
    set1, set2 = set(pts1), set(pts2)
    if set1 & set2:
        raise InputError("pasting pieces must be disjoint")
    pts = sorted(set1 | set2)
    index = {p: i for i, p in enumerate(pts)}
    n = len(pts)
    Gamma = np.zeros((n, n))
    for m, val in cfg.kernel.table:
        if not any(m):
            continue
        for p in set1:
            q = tuple(a + b for a, b in zip(p, m))
            if q in set2:
                i, j = index[p], index[q]
                Gamma[i, j] = val
                Gamma[j, i] = val
    return Gamma, pts


def resolvent_residual(cfg, pts1, pts2, energy, x):
    """Max-entry residual of the pasting identity on Lambda1 u Lambda2."""
    g1 = compute_greens(cfg, pts1, energy, x)
    g2 = compute_greens(cfg, pts2, energy, x)
    Gamma, pts = coupling_kernel(cfg, pts1, pts2)
    g = compute_greens(cfg, pts, energy, x)

    n = len(pts)
    G_plus = np.zeros((n, n))
    index = {p: i for i, p in enumerate(pts)}
    for block in (g1, g2):
        idx = [index[p] for p in block.points]
        G_plus[np.ix_(idx, idx)] = block.matrix

    lhs = g.matrix
    rhs = G_plus - (1.0 / cfg.lam) * (G_plus @ Gamma @ g.matrix)
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# the smallness condition
# ---------------------------------------------------------------------------

def _lattice_tail_sum(rho, d):
    """sum_{j >= 0} (2j+1)^d e^{-rho j / 2}, truncated below TAIL_TERM_FLOOR."""
    total, j = 0.0, 0
    while True:
        term = (2 * j + 1) ** d * math.exp(-0.5 * rho * j)
        if term < TAIL_TERM_FLOOR and j > 0:
            break
        total += term
        j += 1
        if j > 10_000_000:
            raise InputError("tail sum failed to converge; rho too small")
    return total


def ml_value(lam, rho, d, M):
    """The pasting smallness functional at a single window scale M."""
    return (2.0 / lam) * math.exp(math.sqrt(M)) * (2 * M + 1) ** d \
        * math.exp(-(3.0 * rho / 20.0) * M) * _lattice_tail_sum(rho, d)


@dataclass
class MLReport:
    lam: float
    rho: float
    d: int
    m0: int
    m1: int
    sup_value: float
    argmax_m: int
    satisfied: bool

    def to_json(self):
        return json.dumps(asdict(self))


def ml_condition(lam, rho, d, m0, m1):
    """sup over integer M in [m0, m1] of ml_value, compared with 1/2.

    The integrand is log-convex in M (a sqrt plus linear exponent), so the
    sup over the integer range sits at an endpoint or adjacent to the
    stationary point; scanning integers is exact and cheap for any range the
    desk runs use.
    """
    if m0 < 1 or m1 < m0:
        raise InputError("need 1 <= m0 <= m1")
    tail = _lattice_tail_sum(rho, d)
    best_val, best_m = -math.inf, m0
    # log-term derivative: 1/(2 sqrt M) + 2d/(2M+1) - 3 rho/20 = 0
    for M in _candidate_scales(rho, d, m0, m1):
        val = (2.0 / lam) * math.exp(math.sqrt(M)) * (2 * M + 1) ** d \
            * math.exp(-(3.0 * rho / 20.0) * M) * tail
        if val > best_val:
            best_val, best_m = val, M
    return MLReport(lam, rho, d, m0, m1, best_val, best_m,
                    best_val <= 0.5)


def _candidate_scales(rho, d, m0, m1):
    """Integer scales that can realize the sup of the smallness functional."""
    if m1 - m0 <= 4096:
        return range(m0, m1 + 1)
    cands = {m0, m1}
    # stationary point of sqrt(M) + d log(2M+1) - (3 rho / 20) M
    lo, hi = float(m0), float(m1)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        deriv = 0.5 / math.sqrt(mid) + 2.0 * d / (2 * mid + 1) - 3.0 * rho / 20.0
        if deriv > 0:
            lo = mid
        else:
            hi = mid
    for m in (math.floor(lo), math.ceil(hi)):
        cands.add(min(max(int(m), m0), m1))
    for c in list(cands):
        for off in (-1, 1):
            if m0 <= c + off <= m1:
                cands.add(c + off)
    return sorted(cands)


def paste_norm_budget_log(m1, d):
    """log of the certified norm bound 4 (2 M1 + 1)^d e^{sqrt M1}."""
    return math.log(4.0) + d * math.log(2 * m1 + 1) + math.sqrt(m1)


# ---------------------------------------------------------------------------
# window covers and decay propagation
# ---------------------------------------------------------------------------

@dataclass
class WindowCover:
    """A window per region point, each good at its scale with depth M/2."""

    domain: frozenset
    windows: dict  # point -> ElementaryRegion
    scales: dict   # point -> int


def build_window_cover(domain_points, m0, m1, window_cache=None,
                       scale_of=None):
    """Choose a window for every point of the domain.

    scale_of(point) may pick a per-point scale in [m0, m1]; default m0.
    Raises HypothesisError when some point admits no window at its scale.
    """
    domain = frozenset(point_set_of(domain_points))
    windows, scales = {}, {}
    for p in sorted(domain):
        M = m0 if scale_of is None else int(scale_of(p))
        if not (m0 <= M <= m1):
            raise InputError("window scale %d outside [%d, %d]" % (M, m0, m1))
        w = find_window(p, domain, M, cache=window_cache)
        if w is None:
            raise HypothesisError(
                "no admissible window at %r (scale %d)" % (p, M),
                condition="window-cover",
            )
        windows[p] = w
        scales[p] = M
    return WindowCover(domain, windows, scales)


@dataclass
class PasteBound:
    """Certified paste outcome on a region: norm and decay budgets."""

    norm_log: float
    norm_budget_log: float
    effective_rate: float
    rho_bar: float
    m0: int
    m1: int
    ml_sup: float
    decay_violations: int
    worst_decay_margin_log: float
    checked_pairs: int

    @property
    def ok(self):
        return self.norm_log <= self.norm_budget_log \
            and self.decay_violations == 0

    def to_json(self):
        return json.dumps(asdict(self))


def verify_cover_goodness(cfg, cover, energy, x, rho_bar, factor=2.0):
    """Check doubled goodness of every window in the cover.

    Returns the list of points whose window fails; empty means the pasting
    hypotheses hold at this phase.
    """
    bad = []
    cache = {}
    missing = object()
    for p in sorted(cover.windows):
        w = cover.windows[p]
        key = (w.center, w.size, w.carve, cover.scales[p])
        rep = cache.get(key, missing)
        if rep is missing:
            try:
                g = compute_greens(cfg, w, energy, x)
                rep = goodness(g, rho_bar, cover.scales[p], factor=factor)
            except SingularityError:
                rep = None
            cache[key] = rep
        if rep is None or not rep.good:
            bad.append(p)
    return bad


def paste_norm(cfg, domain_points, energy, x, rho_bar, m0, m1,
               window_cache=None, scale_of=None, factor=2.0):
    """Paste a cover of good windows and certify the norm bound.

    Checks the smallness condition, the cover's doubled goodness, then
    inverts the full region and compares ||G|| with the certified budget
    4 (2 M1 + 1)^d e^{sqrt M1}.  A violation of the certified bound under
    satisfied hypotheses is an InvariantFailureError, not a hypothesis
    failure.
    """
    # the smallness functional takes the underlying kernel rate; the window
    # decay hypothesis enters separately through rho_bar
    rep = ml_condition(cfg.lam, cfg.kernel.rho, cfg.d, m0, m1)
    if not rep.satisfied:
        raise HypothesisError(
            "smallness condition fails: sup %.6g > 0.5" % rep.sup_value,
            condition="ml",
        )
    cover = build_window_cover(domain_points, m0, m1,
                               window_cache=window_cache, scale_of=scale_of)
    bad = verify_cover_goodness(cfg, cover, energy, x, rho_bar, factor=factor)
    if bad:
        raise HypothesisError(
            "cover has %d bad windows (first %r)" % (len(bad), bad[0]),
            condition="cover-goodness",
        )
    g = compute_greens(cfg, cover.domain, energy, x)
    norm_log = math.log(max(operator_norm(g.matrix), 1e-300))
    budget = paste_norm_budget_log(m1, cfg.d)
    if norm_log > budget:
        raise InvariantFailureError(
            "pasted norm exp(%.4f) exceeds certified budget exp(%.4f)"
            % (norm_log, budget)
        )
    return g, PasteBound(
        norm_log=norm_log, norm_budget_log=budget,
        effective_rate=math.nan, rho_bar=rho_bar, m0=m0, m1=m1,
        ml_sup=rep.sup_value, decay_violations=0,
        worst_decay_margin_log=-math.inf, checked_pairs=0,
    )


def propagate_decay(cfg, domain_points, energy, x, rho_bar, m0, m1,
                    scale=None, degrade_constant=None, window_cache=None,
                    scale_of=None, factor=2.0, excluded=frozenset(),
                    excluded_diam_cap=None):
    """Certify off-diagonal decay of the pasted Green's function.

    effective_rate = rho_bar - degrade_constant / sqrt(m0), clipped at 0;
    decay is verified for every pair at distance >= scale / 10 (scale
    defaults to the domain diameter).  Points of `excluded` need no window
    (they are the removed bad cluster); the cluster must have diameter at
    most excluded_diam_cap when given, and every kept point still needs its
    window inside the full domain.
    """
    domain = frozenset(point_set_of(domain_points))
    excluded = frozenset(excluded)
    if excluded - domain:
        raise InputError("excluded points must lie in the domain")
    if excluded and excluded_diam_cap is not None:
        diam = max(sup_distance(p, q) for p in excluded for q in excluded)
        if diam > excluded_diam_cap:
            raise HypothesisError(
                "excluded cluster diameter %d exceeds cap %g"
                % (diam, excluded_diam_cap), condition="excluded-diam",
            )
    rep = ml_condition(cfg.lam, cfg.kernel.rho, cfg.d, m0, m1)
    if not rep.satisfied:
        raise HypothesisError(
            "smallness condition fails: sup %.6g > 0.5" % rep.sup_value,
            condition="ml",
        )
    covered = domain - excluded
    windows, scales = {}, {}
    for p in sorted(covered):
        M = m0 if scale_of is None else int(scale_of(p))
        w = find_window(p, domain, M, cache=window_cache)
        if w is None:
            raise HypothesisError(
                "no admissible window at %r (scale %d)" % (p, M),
                condition="window-cover",
            )
        windows[p] = w
        scales[p] = M
    cover = WindowCover(domain, windows, scales)
    bad = verify_cover_goodness(cfg, cover, energy, x, rho_bar, factor=factor)
    if bad:
        raise HypothesisError(
            "cover has %d bad windows (first %r)" % (len(bad), bad[0]),
            condition="cover-goodness",
        )

    if degrade_constant is None:
        degrade_constant = load_degrade_constant(cfg.kernel.family)
    eff = max(rho_bar - degrade_constant / math.sqrt(m0), 0.0)

    g = compute_greens(cfg, domain, energy, x)
    pts = g.points
    arr = np.array(pts)
    if scale is None:
        scale = max(
            int(np.max(np.abs(arr[:, k][:, None] - arr[:, k][None, :])))
            for k in range(arr.shape[1])
        )
    cutoff = scale / 10.0
    log_factor = math.log(factor)
    violations, worst, checked = 0, -math.inf, 0
    for i in range(len(pts)):
        r = np.max(np.abs(arr - arr[i]), axis=1)
        mask = r >= cutoff
        if not mask.any():
            continue
        a = np.abs(g.matrix[i, mask])
        with np.errstate(divide="ignore"):
            log_a = np.where(a > 0, np.log(np.maximum(a, 1e-320)), -np.inf)
        margins = log_a - (log_factor - eff * r[mask])
        checked += int(mask.sum())
        worst = max(worst, float(np.max(margins)))
        violations += int(np.count_nonzero(margins > 0))
    norm_log = math.log(max(operator_norm(g.matrix), 1e-300))
    budget = paste_norm_budget_log(m1, cfg.d)
    if violations == 0 and norm_log > budget:
        raise InvariantFailureError(
            "pasted norm exp(%.4f) exceeds certified budget exp(%.4f)"
            % (norm_log, budget)
        )
    return PasteBound(
        norm_log=norm_log, norm_budget_log=budget, effective_rate=eff,
        rho_bar=rho_bar, m0=m0, m1=m1, ml_sup=rep.sup_value,
        decay_violations=violations, worst_decay_margin_log=worst,
        checked_pairs=checked,
    )


# ---------------------------------------------------------------------------
# calibrated degradation constants
# ---------------------------------------------------------------------------

def load_degrade_constants():
    path = resources.files("qplab").joinpath("data/degrade_constants.json")
    with path.open() as fh:
        return json.load(fh)


def load_degrade_constant(family):
    obj = load_degrade_constants()
    try:
        return obj["families"][family]["constant"]
    except KeyError as exc:
        raise InputError("no calibrated constant for family %r" % (family,)) \
            from exc


def calibrate_degrade_constant(cfg, domain_points, energies, phases, rho_bar,
                               m0, m1, scale=None, window_cache=None,
                               margin=0.25):
    """Empirical degradation constant for one kernel family.

    For each (E, x) where the pasting hypotheses hold, measure the largest
    rate actually achieved by the pasted Green's function over pairs at
    distance >= scale/10 and record the shortfall
    (rho_bar - achieved) * sqrt(m0); the calibrated constant is the max
    shortfall plus margin (never below margin itself).  Hypothesis failures
    are skipped, not errors: calibration sweeps include them by design.
    """
    domain = frozenset(point_set_of(domain_points))
    shortfalls = []
    used = 0
    for energy in energies:
        for x in phases:
            try:
                cover = build_window_cover(domain, m0, m1,
                                           window_cache=window_cache)
                bad = verify_cover_goodness(cfg, cover, energy, x, rho_bar)
                if bad:
                    continue
                g = compute_greens(cfg, domain, energy, x)
            except (HypothesisError, SingularityError):
                continue
            pts = g.points
            arr = np.array(pts)
            sc = scale
            if sc is None:
                sc = max(
                    int(np.max(arr[:, k]) - np.min(arr[:, k]))
                    for k in range(arr.shape[1])
                )
            cutoff = sc / 10.0
            worst_rate = math.inf
            for i in range(len(pts)):
                r = np.max(np.abs(arr - arr[i]), axis=1)
                mask = r >= cutoff
                if not mask.any():
                    continue
                a = np.abs(g.matrix[i, mask])
                pos = a > 0
                if not pos.any():
                    continue
                rates = (math.log(2.0) - np.log(a[pos])) / r[mask][pos]
                worst_rate = min(worst_rate, float(np.min(rates)))
            if worst_rate < math.inf:
                shortfalls.append((rho_bar - worst_rate) * math.sqrt(m0))
                used += 1
    if not used:
        raise HypothesisError("no admissible calibration samples",
                              condition="calibration")
    constant = max(max(shortfalls), 0.0) + margin
    return {"constant": constant, "samples": used,
            "max_shortfall": max(shortfalls), "margin": margin,
            "rho_bar": rho_bar, "m0": m0, "m1": m1}
