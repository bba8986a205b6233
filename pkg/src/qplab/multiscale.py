"""Scale schedules, rate bookkeeping, and the toy induction driver.

The induction tracks scales through the maps f(x) = exp(x^{c1}) and the
step N -> (N^{2/c1}, exp((N^{2/c1})^{c2})), with c1 = c3 / (4 b_max) and
c2 = c1^2 / 2.  Real schedules overflow floats immediately, so LogScale
stores a number either directly (level 0) or as its natural log (level 1)
and keeps the maps and comparisons exact across the switch.

Two fidelities on purpose: exact log-space bookkeeping at the real
constants (nothing there is invertible on a desk), and an executable toy
pipeline (`toy_msa_run`) that runs the whole induction step literally at
small scales: region adjustment, window goodness, a small-minor measure
scan on the phase block, pasting with certified budgets, and a ledger of
the inductive property per stage.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, field
from functools import total_ordering

from scipy.special import zeta as hurwitz_zeta

from .cartan import AnalyticMatrixFamily, cartan_bad_measure
from .errors import HypothesisError, InputError, SingularityError
from .gluing import ml_condition, paste_norm_budget_log, propagate_decay
from .greens import compute_greens, goodness
from .initial_scale import in_bad_set, neumann_bound_check
from .lattice import (
    ElementaryRegion, adjust_region, default_inner_cap, verify_region_pair,
    _WindowCache,
)
from .model import Phase, assemble_restricted, shift_phase

LEVEL_SWITCH = 1e15  # numbers above this are stored by their log
_LOG_SWITCH = math.log(LEVEL_SWITCH)
_LOG_FLOAT_MAX = math.log(1.7976931348623157e308)


# ---------------------------------------------------------------------------
# scale constants
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScaleConstants:
    """c3 < c4 in (0,1) and the largest block size; the schedule exponents
    c1 = c3 / (4 b_max) and c2 = c1^2 / 2 are derived, so always
    c2 < c1 < c3 < c4 < 1."""

    c3: float = 0.04
    c4: float = 0.2
    b_max: int = 1

    def __post_init__(self):
        if not (0 < self.c3 < self.c4 < 1):
            raise InputError("need 0 < c3 < c4 < 1")
        if self.b_max < 1:
            raise InputError("b_max must be a positive integer")

    @property
    def c1(self):
        return self.c3 / (4.0 * self.b_max)

    @property
    def c2(self):
        return self.c1 * self.c1 / 2.0

    def exponents(self):
        return ScheduleExponents(self.c1, self.c2)


@dataclass(frozen=True)
class ScheduleExponents:
    """Bare (c1, c2) pair for the schedule maps; toy pipelines use values
    like (0.5, 0.125) that no admissible c3 produces."""

    c1: float
    c2: float

    def __post_init__(self):
        if not (0 < self.c1 < 1) or not (0 < self.c2 < 1):
            raise InputError("exponents must lie in (0, 1)")


# ---------------------------------------------------------------------------
# two-level scale numbers
# ---------------------------------------------------------------------------

@total_ordering
@dataclass(frozen=True)
class LogScale:
    """A positive number stored at level 0 (the value) or level 1 (its log).

    normalize() keeps small numbers at level 0 and large ones at level 1
    with the switch at LEVEL_SWITCH, so normalized level-1 values always
    exceed normalized level-0 values and mixed comparisons are trivial.
    """

    level: int
    value: float

    def __post_init__(self):
        if self.level not in (0, 1):
            raise InputError("level must be 0 or 1")
        if self.level == 0 and self.value <= 0:
            raise InputError("level-0 value must be positive")
        if not math.isfinite(self.value) and not (self.level == 1
                                                  and self.value == math.inf):
            raise InputError("non-finite scale value")

    @staticmethod
    def of(x):
        if isinstance(x, LogScale):
            return x.normalize()
        return LogScale(0, float(x)).normalize()

    @staticmethod
    def from_log(log_value):
        return LogScale(1, float(log_value)).normalize()

    def normalize(self):
        if self.level == 1 and self.value <= _LOG_SWITCH:
            return LogScale(0, math.exp(self.value))
        if self.level == 0 and self.value > LEVEL_SWITCH:
            return LogScale(1, math.log(self.value))
        return self

    @property
    def log(self):
        return self.value if self.level == 1 else math.log(self.value)

    def to_float(self):
        """The plain number; +inf when it does not fit in a float."""
        if self.level == 0:
            return self.value
        return math.exp(self.value) if self.value <= _LOG_FLOAT_MAX else math.inf

    def power(self, p):
        return LogScale.from_log(p * self.log)

    def times(self, other):
        return LogScale.from_log(self.log + LogScale.of(other).log)

    def exp_of_power(self, p):
        """exp(self^p); saturates to level-1 +inf when self^p overflows."""
        inner_log = p * self.log  # log of self^p
        if inner_log > _LOG_FLOAT_MAX:
            return LogScale(1, math.inf)
        return LogScale.from_log(math.exp(inner_log))

    def __eq__(self, other):
        a, b = self.normalize(), LogScale.of(other)
        return (a.level, a.value) == (b.level, b.value)

    def __lt__(self, other):
        a, b = self.normalize(), LogScale.of(other)
        if a.level != b.level:
            return a.level < b.level
        return a.value < b.value

    def __hash__(self):
        a = self.normalize()
        return hash((a.level, a.value))

    def __repr__(self):
        a = self.normalize()
        if a.level == 0:
            return "LogScale(%g)" % a.value
        return "LogScale(log=%g)" % a.value

    def to_json_dict(self):
        a = self.normalize()
        return {"level": a.level, "value": a.value}


# ---------------------------------------------------------------------------
# schedule maps
# ---------------------------------------------------------------------------

def map_f(x, k):
    """f(x) = exp(x^{c1}) on LogScale numbers."""
    return LogScale.of(x).exp_of_power(k.c1)


def map_g(x, k):
    return map_f(map_f(x, k), k)


def f_iterates(x, k, count):
    """[f(x), f(f(x)), ...] with `count` entries."""
    out, cur = [], LogScale.of(x)
    for _ in range(count):
        cur = map_f(cur, k)
        out.append(cur)
    return out


def dominance_threshold(k, tol=1e-9):
    """log of the smallest x with f(x) >= x + 1 (equivalently
    g(x) >= f(x+1), f being increasing).

    Solved by bisection on u = log x:  exp(c1 u) = log(exp(u) + 1),
    with the right side evaluated as u + log1p(exp(-u)) for large u.
    """
    c1 = k.c1

    def gap(u):
        lhs = math.exp(c1 * u)
        rhs = u + math.log1p(math.exp(-u)) if u > 40 else math.log(math.exp(u) + 1)
        return lhs - rhs

    lo, hi = 1.0, 10.0
    while gap(hi) < 0:
        lo, hi = hi, hi * 2
        if hi > 1e9:
            raise InputError("dominance threshold out of search range")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def schedule_maps(x, k):
    """{f, g, above_threshold}; below the dominance threshold the maps are
    still returned, flagged rather than rejected."""
    X = LogScale.of(x)
    return {
        "f": map_f(X, k),
        "g": map_g(X, k),
        "above_threshold": X.log >= dominance_threshold(k),
    }


def scale_step(n1, k):
    """One induction step: N2 = N1^{2/c1} and N3 = exp(N2^{c2})."""
    n2 = LogScale.of(n1).power(2.0 / k.c1)
    n3 = n2.exp_of_power(k.c2)
    return {"N2": n2, "N3": n3}


def threshold_check(n, k):
    """c3 N^{c1} >= 5 log N, evaluated safely for LogScale N.

    Works on the full constants (needs c3); equivalent to
    f(N)^{c3} >= N^5 for f at exponent c1."""
    N = LogScale.of(n)
    lhs_log = math.log(k.c3) + k.c1 * N.log
    rhs = 5.0 * N.log
    if rhs <= 0:
        return True
    return lhs_log >= math.log(rhs)


def n0_estimate(k, tol=1e-9):
    """log of the smallest N passing threshold_check, by bisection on
    u = log N of c3 exp(c1 u) = 5 u."""
    c1, c3 = k.c1, k.c3

    def gap(u):
        return math.log(c3) + c1 * u - math.log(5.0 * u)

    # gap > 0 again near u = 0 (the rhs log diverges); seek the upper root,
    # starting from a point where the threshold fails
    lo = 1.0
    while gap(lo) >= 0:
        lo *= 2
        if lo > 1e9:
            return 1.0  # threshold holds everywhere sampled
    hi = max(2.0 * lo, 10.0)
    while gap(hi) < 0:
        lo, hi = hi, hi * 2
        if hi > 1e9:
            raise InputError("threshold scale out of search range")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# rates, budgets, coupling
# ---------------------------------------------------------------------------

def rho_sequence(rho, n_start, degrade_constant, k, steps):
    """rho_i = 4 rho / 5 - sum_{j=1}^i K / sqrt(f^{(j)}(n_start)).

    Returns {rates, inf_rate, target, verdict, diverged}: verdict is whether
    every rho_i, including the tail limit, stays at or above rho / 2.  The
    iterates grow super-exponentially above the dominance threshold, so the
    sum effectively terminates; below it the iterates contract to the fixed
    point of f and the sum diverges, which is reported rather than looped
    forever.
    """
    if rho <= 0 or degrade_constant < 0:
        raise InputError("need rho > 0 and degrade_constant >= 0")
    top, target = 0.8 * rho, 0.5 * rho
    rates, total = [], 0.0
    cur = LogScale.of(n_start)
    diverged = False
    tail_resolved = False
    for i in range(max(steps, 1) + 64):
        prev_log = cur.log
        cur = map_f(cur, k)
        half_log = 0.5 * cur.log
        term = 0.0 if half_log > _LOG_FLOAT_MAX \
            else degrade_constant * math.exp(-half_log)
        total += term
        if i < steps:
            rates.append(top - total)
        if cur.log <= prev_log + 1e-15 and term > 1e-18:
            # f stopped growing: below threshold, the series cannot converge
            diverged = True
            break
        if term < 1e-18 and i >= steps - 1:
            tail_resolved = True
            break
    inf_rate = -math.inf if diverged else top - total
    verdict = tail_resolved and inf_rate >= target - 1e-15
    return {"rates": rates, "inf_rate": inf_rate, "target": target,
            "verdict": verdict, "diverged": diverged,
            "tail_resolved": tail_resolved}


def omega_budget(power=5, start=10):
    """Exact tail sum_{N >= start} N^{-power} (Hurwitz zeta)."""
    if power <= 1 or start < 1:
        raise InputError("need power > 1 and start >= 1")
    return float(hurwitz_zeta(power, start))


def omega_budget_range(k, n_start, n_end=None, power=5):
    """Excluded-frequency budget for one induction block.

    Checks the comparison f(N)^{c3} >= N^5 at the block start (equivalent
    to threshold_check) and bounds sum N^{-power} over the block by the
    full tail.  Representable starts get the exact Hurwitz value; huge ones
    get the integral bound in log form.
    """
    N = LogScale.of(n_start)
    ok = threshold_check(N, k)
    record = {"threshold_ok": ok, "threshold_log_n": n0_estimate(k),
              "power": power}
    if N.level == 0 and N.value <= 1e12:
        start = max(int(math.ceil(N.value)), 1)
        total = omega_budget(power, start)
        if n_end is not None:
            E = LogScale.of(n_end)
            if E.level == 0 and E.value <= 1e12:
                total = total - omega_budget(power, int(math.ceil(E.value)) + 1)
        record["sum"] = total
        record["log_sum_bound"] = math.log(total) if total > 0 else -math.inf
    else:
        # integral comparison: sum_{N >= s} N^-p <= (s-1)^{1-p} / (p-1)
        record["sum"] = None
        record["log_sum_bound"] = -(power - 1) * N.log + math.log(
            1.0 / (power - 1)) + (power - 1) * 1e-16
    return record


def initial_lambda(n_bar, d):
    """Smallest coupling the first stage certifies, with its delta.

    log lambda_min = log 4 + sqrt(n_bar) + d log(2 n_bar + 1), and
    delta = exp(-sqrt(n_bar)) / 2.
    """
    n_bar = LogScale.of(n_bar).to_float()
    if not (n_bar >= 1):
        raise InputError("n_bar must be at least 1")
    log_lam = math.log(4.0) + math.sqrt(n_bar) + d * math.log(2 * n_bar + 1)
    delta = math.exp(-math.sqrt(n_bar)) / 2.0
    return {"log_lambda_min": log_lam,
            "lambda_min": math.exp(log_lam) if log_lam <= _LOG_FLOAT_MAX
            else math.inf,
            "delta": delta}


# ---------------------------------------------------------------------------
# hit counts
# ---------------------------------------------------------------------------

def _inner_box_radius(scale, d):
    return int(math.floor(scale ** (1.0 / (10.0 * d))))


def hit_count(cfg, spec, x, scale):
    """Count k in Q_scale minus the inner box whose orbit enters the bad set.

    The inner box has radius scale^{1/(10 d)}; cap is the number of counted
    sites, so count <= cap always and count = 0 exactly when the orbit of
    the annulus avoids the sublevel set.
    """
    r_in = _inner_box_radius(scale, cfg.d)
    count = cap = 0
    region = ElementaryRegion((0,) * cfg.d, scale)
    for kpt in region.points():
        if max(abs(c) for c in kpt) <= r_in:
            continue
        cap += 1
        if in_bad_set(cfg, spec, shift_phase(x, cfg.omega, kpt)):
            count += 1
    return {"count": count, "cap": cap, "inner_radius": r_in}


def hit_count_scan(cfg, spec, x, scales):
    """Rows per scale plus the fraction of scales achieving a zero count."""
    rows = []
    zero = 0
    for N in scales:
        rec = hit_count(cfg, spec, x, int(N))
        rows.append({"scale": int(N), **rec})
        zero += rec["count"] == 0
    return rows, (zero / len(rows) if rows else math.nan)


# ---------------------------------------------------------------------------
# the inductive ledger
# ---------------------------------------------------------------------------

@dataclass
class StageRecord:
    index: int
    scale: dict             # LogScale json dict
    rho_param: float
    measure_target_log: float   # log of the bad-set target e^{-N^{c1}}
    omega_budget: float
    verified: bool
    notes: str = ""

    def to_json(self):
        return json.dumps(asdict(self))


@dataclass
class PropertyPLedger:
    """Per-stage records of the inductive property with sanity checks."""

    rho: float
    stages: list = field(default_factory=list)

    def add_stage(self, index, scale, rho_param, measure_target_log,
                  omega_budget_value, verified, notes=""):
        rec = StageRecord(index, LogScale.of(scale).to_json_dict(), rho_param,
                          measure_target_log, omega_budget_value, verified,
                          notes)
        self.stages.append(rec)
        return rec

    def check(self):
        """Violation strings: scales must grow, rho_param must not increase,
        measure targets must decrease, and rates stay in [rho/2, 4rho/5]."""
        out = []
        prev_scale, prev_rho, prev_target = None, None, None
        for rec in self.stages:
            s = LogScale(rec.scale["level"], rec.scale["value"])
            if prev_scale is not None and not prev_scale < s:
                out.append("stage %d: scale did not increase" % rec.index)
            if prev_rho is not None and rec.rho_param > prev_rho + 1e-12:
                out.append("stage %d: rho_param increased" % rec.index)
            if prev_target is not None \
                    and rec.measure_target_log >= prev_target:
                out.append("stage %d: measure target did not decrease"
                           % rec.index)
            if not (0.5 * self.rho - 1e-12 <= rec.rho_param
                    <= 0.8 * self.rho + 1e-12):
                out.append("stage %d: rate %.6g outside [rho/2, 4rho/5]"
                           % (rec.index, rec.rho_param))
            prev_scale, prev_rho = s, rec.rho_param
            prev_target = rec.measure_target_log
        return out

    def to_json_lines(self):
        return "\n".join(rec.to_json() for rec in self.stages)


# ---------------------------------------------------------------------------
# the toy induction driver
# ---------------------------------------------------------------------------

@dataclass
class ToyRunResult:
    ledger: PropertyPLedger
    cells: list                   # per-(x, E) stage outcomes
    geometry_violations: list
    region_count: int
    bad_fraction: float
    measure_target: float
    glued_norm_log_max: float
    norm_budget_log: float
    trace_path: str = None

    @property
    def ok(self):
        return (not self.geometry_violations
                and all(c["final_good"] for c in self.cells)
                and self.bad_fraction <= self.measure_target + 1e-15
                and self.glued_norm_log_max <= self.norm_budget_log
                and not self.ledger.check())


def toy_msa_run(cfg, phases, energies, delta, n1, n_bar, big_n, rho_bar,
                target_c1=0.5, sigma=0.01, cartan_epsilons=(1e-2, 1e-4),
                cartan_samples=512, degrade_constant=None,
                inner_diam_cap=None, trace_path=None, seed=0):
    """Run the induction step literally at toy scales over an (x, E) grid.

    Geometry first (phase-independent): every anchor of Q_big_n gets an
    adjusted region, re-verified by the checker.  Then per cell: the
    initial-scale bounds on Q_n1, the pasting smallness condition, a
    small-minor measure scan of the phase block near x (half-width sigma
    standing in for the e^{-rho N1} neighborhoods, which are far below
    resolvable at desk scale), pasting with the certified norm budget, and
    final goodness of Q_big_n at the degraded rate.  Stage failures are
    recorded in the trace and the cell record; nothing raises mid-grid.

    The empirical bad fraction (cells whose final goodness fails, among all
    cells) is compared against the property-P target e^{-big_n^{target_c1}}.
    """
    trace = []

    def emit(kind, **payload):
        rec = {"event": kind}
        rec.update(payload)
        trace.append(json.dumps(rec, sort_keys=True))

    ledger = PropertyPLedger(rho=cfg.kernel.rho)
    cache = _WindowCache()
    Q = ElementaryRegion((0,) * cfg.d, big_n)
    q_points = Q.point_set()
    n_tilde = max(math.ceil(n_bar / 4), 4 * n1)
    if inner_diam_cap is None:
        inner_diam_cap = default_inner_cap(n_tilde, cfg.d)

    # geometry, once: anchors are phase-independent
    geometry_violations = []
    outers = {}
    for m in sorted(q_points):
        try:
            pair = adjust_region(m, q_points, n_bar, n1,
                                 inner_diam_cap=inner_diam_cap,
                                 window_cache=cache)
        except (InputError, HypothesisError) as exc:
            geometry_violations.append("%r: %s" % (m, exc))
            emit("geometry", anchor=list(m), error=str(exc))
            continue
        violations = verify_region_pair(m, q_points, n_bar, n1, pair,
                                        window_cache=cache)
        if violations:
            geometry_violations.extend("%r: %s" % (m, v) for v in violations)
            emit("geometry", anchor=list(m), violations=violations)
            continue
        outers[m] = pair
    emit("geometry_done", anchors=len(outers),
         violations=len(geometry_violations),
         distinct_regions=len({(p.outer.center, p.outer.size, p.outer.carve)
                               for p in outers.values()}))

    norm_budget = paste_norm_budget_log(n_tilde, cfg.d)
    cells = []
    glued_max = -math.inf
    region_q1 = ElementaryRegion((0,) * cfg.d, n1)
    for ei, energy in enumerate(energies):
        ml = ml_condition(cfg.lam, cfg.kernel.rho, cfg.d, n_tilde, n_tilde)
        for xi, x in enumerate(phases):
            cell = {"x_index": xi, "e_index": ei, "energy": energy,
                    "stages": {}, "final_good": False}

            rep = neumann_bound_check(cfg, region_q1, energy, x, delta,
                                      scale=n1)
            cell["stages"]["initial"] = rep.certified
            emit("stage", cell=[xi, ei], name="initial",
                 ok=rep.certified, report=json.loads(rep.to_json()))

            cell["stages"]["ml"] = ml.satisfied
            emit("stage", cell=[xi, ei], name="ml", ok=ml.satisfied,
                 report=json.loads(ml.to_json()))

            cell["stages"]["geometry"] = not geometry_violations

            try:
                pts = sorted(region_q1.point_set())
                def entries(z, _x=x, _E=energy):
                    coords = list(_x.coords)
                    for jj, t in enumerate(z):
                        coords[jj] = coords[jj] + t
                    M, _ = assemble_restricted(
                        cfg, pts, _E, Phase(tuple(coords), cfg.blocks))
                    return M
                fam = AnalyticMatrixFamily(entries, cfg.blocks.sizes[0],
                                           sigma, len(pts))
                minors = cartan_bad_measure(fam, cartan_epsilons,
                                            samples=cartan_samples,
                                            seed=seed + 977 * xi + ei)
                cell["stages"]["cartan"] = True
                emit("stage", cell=[xi, ei], name="cartan", ok=True,
                     rows=[json.loads(r.to_json()) for r in minors])
            except InputError as exc:
                cell["stages"]["cartan"] = False
                emit("stage", cell=[xi, ei], name="cartan", ok=False,
                     error=str(exc))

            paste_ok = bool(outers) and not geometry_violations \
                and ml.satisfied and rep.certified
            eff = None
            if paste_ok:
                seen = {}
                worst_norm = -math.inf
                violations_count = 0
                for m, pair in outers.items():
                    key = (pair.outer.center, pair.outer.size,
                           pair.outer.carve)
                    if key in seen:
                        continue
                    try:
                        bound = propagate_decay(
                            cfg, pair.outer, energy, x, rho_bar, n_tilde,
                            n_tilde, scale=n_tilde,
                            degrade_constant=degrade_constant,
                            window_cache=cache,
                        )
                    except HypothesisError as exc:
                        seen[key] = None
                        paste_ok = False
                        emit("stage", cell=[xi, ei], name="paste", ok=False,
                             region=pair.outer.label(), error=str(exc))
                        continue
                    seen[key] = bound
                    worst_norm = max(worst_norm, bound.norm_log)
                    violations_count += bound.decay_violations
                    eff = bound.effective_rate if eff is None \
                        else min(eff, bound.effective_rate)
                paste_ok = paste_ok and violations_count == 0
                glued_max = max(glued_max, worst_norm)
                emit("stage", cell=[xi, ei], name="paste", ok=paste_ok,
                     regions=len(seen), worst_norm_log=worst_norm,
                     budget_log=norm_budget,
                     decay_violations=violations_count)
            cell["stages"]["paste"] = paste_ok

            final_good = False
            if paste_ok:
                try:
                    g_big = compute_greens(cfg, q_points, energy, x)
                    rate = eff if eff is not None else rho_bar
                    rep_big = goodness(g_big, max(rate, 1e-9), big_n,
                                       factor=2.0)
                    final_good = rep_big.good
                    emit("stage", cell=[xi, ei], name="final", ok=final_good,
                         report=json.loads(rep_big.to_json()))
                except SingularityError as exc:
                    emit("stage", cell=[xi, ei], name="final", ok=False,
                         error=str(exc))
            cell["final_good"] = final_good
            cell["effective_rate"] = eff
            cells.append(cell)

    bad_fraction = (sum(1 for c in cells if not c["final_good"])
                    / len(cells)) if cells else math.nan
    measure_target = math.exp(-big_n ** target_c1)

    ledger.add_stage(1, n1, rho_bar, -float(n1) ** target_c1,
                     omega_budget(5, max(n1, 1)), all(
                         c["stages"].get("initial", False) for c in cells),
                     notes="initial scale")
    eff_all = [c["effective_rate"] for c in cells
               if c["effective_rate"] is not None]
    ledger.add_stage(2, big_n,
                     min(eff_all) if eff_all else rho_bar,
                     -float(big_n) ** target_c1,
                     omega_budget(5, big_n),
                     all(c["final_good"] for c in cells),
                     notes="pasted scale")
    emit("summary", cells=len(cells), bad_fraction=bad_fraction,
         measure_target=measure_target,
         geometry_violations=len(geometry_violations))

    if trace_path:
        with open(trace_path, "w") as fh:
            fh.write("\n".join(trace) + "\n")
    return ToyRunResult(ledger, cells, geometry_violations, len(outers),
                        bad_fraction, measure_target, glued_max, norm_budget,
                        trace_path)
