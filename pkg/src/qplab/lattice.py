"""Lattice geometry: elementary regions, window search, region adjustment.

Regions live on Z^d with the sup-norm.  An elementary region of size N is the
cube [-N, N]^d, or that cube minus an orthant-like sector apexed at the
center: the points q with q_i < 0 (or > 0) simultaneously for every
coordinate in an active set of size >= 2.  Translates of these shapes are the
only domains the multi-scale bounds quantify over, so window search and
region adjustment both enumerate exactly this family.

All distances below are sup-norm distances between point sets; distance to a
region's boundary is implemented as distance to its complement in Z^d.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional

from .errors import InputError

LT = "<"
GT = ">"
NONE = "."

_SYMBOLS = (LT, GT, NONE)


# ---------------------------------------------------------------------------
# sign patterns and elementary shapes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SignPattern:
    """Per-coordinate carve constraints; at least two must be active."""

    symbols: tuple

    def __post_init__(self):
        if any(s not in _SYMBOLS for s in self.symbols):
            raise InputError("sign pattern symbols must be '<', '>' or '.'")
        if sum(s != NONE for s in self.symbols) < 2:
            raise InputError("sign pattern needs at least two active constraints")

    @property
    def dimension(self):
        return len(self.symbols)

    def removes(self, offset):
        """True when the center-relative offset falls in the carved sector."""
        for s, q in zip(self.symbols, offset):
            if s == LT and not q < 0:
                return False
            if s == GT and not q > 0:
                return False
        return True

    def label(self):
        return "".join(self.symbols)


def enumerate_sign_patterns(d):
    """All carve patterns in the fixed enumeration order.

    Order: itertools.product over ('<', '>', '.') per coordinate, filtered to
    >= 2 active entries.  This order is part of the deterministic tie-break
    contract of find_window.
    """
    out = []
    for symbols in itertools.product(_SYMBOLS, repeat=d):
        if sum(s != NONE for s in symbols) >= 2:
            out.append(SignPattern(symbols))
    return out


@lru_cache(maxsize=None)
def _shape_offsets(d, size, symbols):
    """Center-relative offsets of one elementary shape, corners first.

    Corner-first ordering makes the subset check in window search fail fast:
    a translate that pokes out of the domain usually loses a far corner.
    """
    pattern = SignPattern(symbols) if symbols is not None else None
    rng = range(-size, size + 1)
    pts = []
    for q in itertools.product(rng, repeat=d):
        if pattern is not None and pattern.removes(q):
            continue
        pts.append(q)
    pts.sort(key=lambda q: (-max(abs(c) for c in q), q))
    return tuple(pts)


@dataclass(frozen=True)
class ElementaryRegion:
    """A translate of an elementary shape: center, size, optional carve."""

    center: tuple
    size: int
    carve: Optional[SignPattern] = None

    def __post_init__(self):
        if self.size < 0:
            raise InputError("region size must be nonnegative")
        if self.carve is not None and self.carve.dimension != len(self.center):
            raise InputError("carve dimension mismatch")

    @property
    def dimension(self):
        return len(self.center)

    def offsets(self):
        symbols = self.carve.symbols if self.carve is not None else None
        return _shape_offsets(self.dimension, self.size, symbols)

    def points(self):
        c = self.center
        return [tuple(ci + qi for ci, qi in zip(c, q)) for q in self.offsets()]

    def point_set(self):
        return frozenset(self.points())

    def __contains__(self, p):
        q = tuple(pi - ci for pi, ci in zip(p, self.center))
        if any(abs(qi) > self.size for qi in q):
            return False
        return not (self.carve is not None and self.carve.removes(q))

    def translate(self, t):
        return ElementaryRegion(
            tuple(ci + ti for ci, ti in zip(self.center, t)), self.size, self.carve
        )

    def label(self):
        return "cube" if self.carve is None else "carve:" + self.carve.label()

    def to_json_dict(self):
        pts = sorted(self.point_set())
        h = hashlib.sha256(repr(pts).encode()).hexdigest()[:16]
        return {
            "center": list(self.center),
            "size": self.size,
            "carve": self.carve.label() if self.carve is not None else None,
            "points_hash": h,
        }

    @staticmethod
    def from_json_dict(obj):
        carve = obj.get("carve")
        pattern = SignPattern(tuple(carve)) if carve else None
        region = ElementaryRegion(tuple(obj["center"]), int(obj["size"]), pattern)
        if "points_hash" in obj:
            if region.to_json_dict()["points_hash"] != obj["points_hash"]:
                raise InputError("region points_hash mismatch")
        return region


def enumerate_elementary_regions(N, d, center=None):
    """All size-N elementary regions at one center, deduplicated as point sets.

    The cube comes first, then carved shapes in pattern enumeration order.
    """
    if center is None:
        center = (0,) * d
    out = [ElementaryRegion(center, N, None)]
    seen = {out[0].point_set()}
    for pattern in enumerate_sign_patterns(d):
        region = ElementaryRegion(center, N, pattern)
        ps = region.point_set()
        if ps not in seen:
            seen.add(ps)
            out.append(region)
    return out


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def sup_distance(p, q):
    """Sup-norm distance between two lattice points."""
    return max(abs(a - b) for a, b in zip(p, q))


def point_set_of(obj):
    if isinstance(obj, ElementaryRegion):
        return obj.point_set()
    return frozenset(tuple(p) for p in obj)


def diameter(points):
    pts = sorted(point_set_of(points))
    if not pts:
        return 0
    d = len(pts[0])
    # sup-norm diameter is the max coordinate spread
    return max(
        max(p[i] for p in pts) - min(p[i] for p in pts) for i in range(d)
    )


def set_distance(a, b):
    """min sup-distance between two point sets; inf when either is empty."""
    pa, pb = point_set_of(a), point_set_of(b)
    if not pa or not pb:
        return math.inf
    return min(sup_distance(p, q) for p in pa for q in pb)


def point_to_set_distance(p, pts):
    s = point_set_of(pts)
    if not s:
        return math.inf
    return min(sup_distance(p, q) for q in s)


def region_metrics(a, b=None):
    """Diameter of a, and when b is given, the distance between a and b."""
    if b is None:
        return {"diameter": diameter(a)}
    return {"diameter": diameter(a), "distance": set_distance(a, b)}


# ---------------------------------------------------------------------------
# window search
# ---------------------------------------------------------------------------

class _WindowCache:
    """Memoizes find_window on the translated local configuration.

    The search outcome depends only on the intersection of the domain with
    the radius-2M ball around k, translated to the origin.  Scanning domains
    are dominated by repeated boundary configurations, so this cache turns
    the per-point exhaustive search into a handful of distinct searches.
    """

    def __init__(self):
        self.store = {}

    def key(self, k, domain, M, d):
        local = []
        for q in itertools.product(range(-2 * M, 2 * M + 1), repeat=d):
            p = tuple(ki + qi for ki, qi in zip(k, q))
            if p in domain:
                local.append(q)
        return (M, tuple(local))


_shared_window_cache = _WindowCache()


def _candidate_shapes(d, M):
    shapes = [None]
    if M >= 1:
        shapes.extend(p.symbols for p in enumerate_sign_patterns(d))
    return shapes


def find_window(k, domain, M, cache=None):
    """Search for a size-M elementary window around k inside domain.

    Finds W in E_M with k in W, W a subset of domain, and
    dist(k, domain \\ W) >= M/2.  Returns the region, or None when no
    translate of any size-M shape works.

    Tie-break order (deterministic): full cube before carved shapes, carved
    shapes in enumeration order, and for each shape translates by increasing
    sup-distance of the center from k, lexicographic within a distance.
    """
    k = tuple(k)
    d = len(k)
    domain = point_set_of(domain)
    if k not in domain:
        raise InputError("window anchor must lie in the domain")

    cache = cache if cache is not None else _shared_window_cache
    ck = cache.key(k, domain, M, d)
    if ck in cache.store:
        rel = cache.store[ck]
        if rel is None:
            return None
        off, symbols = rel
        pattern = SignPattern(symbols) if symbols is not None else None
        return ElementaryRegion(tuple(ki + oi for ki, oi in zip(k, off)), M, pattern)

    local = set(cache.key(k, domain, M, d)[1])
    half = M / 2.0
    # offsets of domain points that any valid W must swallow
    must_cover = [
        q for q in local if max((abs(c) for c in q), default=0) < half
    ]
    centers = sorted(
        itertools.product(range(-M, M + 1), repeat=d),
        key=lambda o: (max((abs(c) for c in o), default=0), o),
    )

    found = None
    for symbols in _candidate_shapes(d, M):
        pattern = SignPattern(symbols) if symbols is not None else None
        offsets = _shape_offsets(d, M, symbols)
        for o in centers:
            rel_k = tuple(-oi for oi in o)
            if any(abs(c) > M for c in rel_k):
                continue
            if pattern is not None and pattern.removes(rel_k):
                continue
            w_local = None
            # the close-by points must land inside W
            ok = True
            for q in must_cover:
                rq = tuple(qi - oi for qi, oi in zip(q, o))
                if any(abs(c) > M for c in rq) or (
                    pattern is not None and pattern.removes(rq)
                ):
                    ok = False
                    break
            if not ok:
                continue
            for q in offsets:
                if tuple(qi + oi for qi, oi in zip(q, o)) not in local:
                    ok = False
                    break
            if not ok:
                continue
            found = (o, symbols)
            break
        if found is not None:
            break

    cache.store[ck] = found
    if found is None:
        return None
    o, symbols = found
    pattern = SignPattern(symbols) if symbols is not None else None
    return ElementaryRegion(tuple(ki + oi for ki, oi in zip(k, o)), M, pattern)


def verify_window(k, domain, window):
    """Re-check the three window postconditions; returns a violation list."""
    k = tuple(k)
    domain = point_set_of(domain)
    out = []
    wp = window.point_set()
    if k not in wp:
        out.append("anchor not in window")
    if not wp <= domain:
        out.append("window not contained in domain")
    rest = domain - wp
    if rest and point_to_set_distance(k, rest) < window.size / 2.0:
        out.append("anchor too close to domain remainder")
    return out


# ---------------------------------------------------------------------------
# region adjustment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RegionPair:
    """Adjusted outer region with its excluded inner set.

    outer is a true elementary region; inner is an explicit point set kept
    inside it.  inner_diam_cap records the diameter bound the pair was built
    against (the asymptotic form 4 * size^(1/(10d)) by default, or the desk
    cap a toy run supplies).
    """

    outer: ElementaryRegion
    inner: frozenset
    case: str = "case1"
    inner_diam_cap: float = 0.0
    collar_grown: bool = False

    def __post_init__(self):
        if not self.inner <= self.outer.point_set():
            raise InputError("inner set must lie inside the outer region")
        if diameter(self.inner) > self.inner_diam_cap:
            raise InputError("inner set diameter exceeds its cap")


def _cube_points(center, radius, d):
    rng = range(-radius, radius + 1)
    return frozenset(
        tuple(ci + qi for ci, qi in zip(center, q))
        for q in itertools.product(rng, repeat=d)
    )


def _bounding_box(points):
    pts = sorted(points)
    d = len(pts[0])
    lo = tuple(min(p[i] for p in pts) for i in range(d))
    hi = tuple(max(p[i] for p in pts) for i in range(d))
    return lo, hi


def _box_points(lo, hi):
    return frozenset(
        itertools.product(*[range(l, h + 1) for l, h in zip(lo, hi)])
    )


def default_inner_cap(n_tilde, d):
    return 4.0 * n_tilde ** (1.0 / (10 * d))


def adjust_region(n, Q, n_bar, n1, inner_diam_cap=None, window_cache=None):
    """Fit a working region around n inside Q and carve out its inner core.

    Given the ambient elementary region Q, an anchor n in Q, the working
    half-size n_bar and the window scale n1, produce a RegionPair:

    * outer in E_Ntilde with n in outer, outer inside Q and inside
      n + [-n_bar, n_bar]^d, and dist(n, Q \\ outer) >= Ntilde/2;
    * inner containing (n + core) cap outer, where core is the cube of
      radius ceil(n_bar^(1/(10d))), grown by boundary collars until every
      residual point has a size-n1 window inside outer \\ inner.

    Ntilde is n_bar when n + [-n_bar, n_bar]^d fits inside Q (case 1), and
    max(ceil(n_bar/4), 4*n1) otherwise.  Infeasible geometry raises
    InputError naming the violated condition.
    """
    n = tuple(n)
    d = len(n)
    q_points = point_set_of(Q)
    if n not in q_points:
        raise InputError("anchor must lie in the ambient region")
    r_core = math.ceil(n_bar ** (1.0 / (10 * d)))

    lam_points = _cube_points(n, n_bar, d)
    core = _cube_points(n, r_core, d)

    if lam_points <= q_points:
        n_tilde = n_bar
        outer = ElementaryRegion(n, n_bar, None)
        case = "case1"
    else:
        n_tilde = max(math.ceil(n_bar / 4.0), 4 * n1)
        if n_tilde > n_bar:
            raise InputError(
                "infeasible: size floor exceeds n_bar (n_bar too small relative to n1)"
            )
        if 2 * n_tilde > n_bar:
            raise InputError(
                "infeasible: translated windows cannot stay inside the working cube "
                "(need n_bar >= 2*max(ceil(n_bar/4), 4*n1))"
            )
        domain = q_points & lam_points
        outer = find_window(n, domain, n_tilde, cache=window_cache)
        if outer is None:
            raise InputError("infeasible: no admissible outer window around anchor")
        gap = _complement_gap(core, q_points, 2 * n1 + 2)
        case = "case2" if gap else "case3"

    cap = inner_diam_cap
    if cap is None:
        cap = default_inner_cap(n_tilde, d)

    outer_points = outer.point_set()
    inner = _grow_inner(core, outer_points, n1, window_cache)
    if diameter(inner) > cap:
        raise InputError(
            "infeasible: inner set diameter %d exceeds cap %.6g "
            "(condition: diam(inner) <= 4*Ntilde^(1/(10d)) or supplied desk cap)"
            % (diameter(inner), cap)
        )
    return RegionPair(outer, inner, case, cap, collar_grown=(inner != core & outer_points))


def _complement_gap(core, q_points, margin):
    """True when every point within `margin` of the core stays inside Q."""
    pts = sorted(core)
    d = len(pts[0])
    lo, hi = _bounding_box(core)
    lo = tuple(l - margin for l in lo)
    hi = tuple(h + margin for h in hi)
    return _box_points(lo, hi) <= q_points


def _grow_inner(core, outer_points, n1, window_cache):
    """Verify-and-grow collar: expand the inner box until no point is trapped.

    The inner set is kept as (bounding box) cap outer.  Any residual point
    without a size-n1 window gets absorbed, which extends the box toward the
    region boundary; growth stops because each absorption reaches strictly
    closer to the boundary.
    """
    seed = core & outer_points
    if not seed:
        raise InputError("infeasible: inner core misses the outer region entirely")
    lo, hi = _bounding_box(seed)
    for _ in range(64):
        inner = _box_points(lo, hi) & outer_points
        residual = outer_points - inner
        trapped = []
        for k in sorted(residual):
            if find_window(k, residual, n1, cache=window_cache) is None:
                trapped.append(k)
        if not trapped:
            return inner
        lo2, hi2 = _bounding_box(frozenset(trapped) | inner)
        if (lo2, hi2) == (lo, hi):
            raise InputError("infeasible: collar growth stalled with trapped points")
        lo, hi = lo2, hi2
    raise InputError("infeasible: collar growth did not stabilize")


def verify_region_pair(n, Q, n_bar, n1, pair, window_cache=None):
    """Independent re-check of the adjustment postconditions.

    Returns a list of violated condition names (empty means pass):
    containment (functional form), anchored depth, inner diameter cap,
    and residual window existence.
    """
    n = tuple(n)
    d = len(n)
    violations = []
    q_points = point_set_of(Q)
    outer_points = pair.outer.point_set()
    lam_points = _cube_points(n, n_bar, d)

    if not outer_points <= q_points or not outer_points <= lam_points:
        violations.append("containment: outer not inside Q cap working cube")
    core = _cube_points(n, math.ceil(n_bar ** (1.0 / (10 * d))), d)
    if not (core & outer_points) <= pair.inner:
        violations.append("containment: core points escape the inner set")

    if n not in outer_points:
        violations.append("anchored depth: anchor outside outer")
    else:
        rest = q_points - outer_points
        if rest and point_to_set_distance(n, rest) < pair.outer.size / 2.0:
            violations.append("anchored depth: anchor within Ntilde/2 of Q remainder")

    if diameter(pair.inner) > pair.inner_diam_cap:
        violations.append("inner diameter cap exceeded")

    residual = outer_points - pair.inner
    for k in sorted(residual):
        w = find_window(k, residual, n1, cache=window_cache)
        if w is None:
            violations.append("residual window missing at %r" % (k,))
            break
        bad = verify_window(k, residual, w)
        if bad:
            violations.append("residual window invalid at %r: %s" % (k, bad[0]))
            break
    return violations


def region_to_json(region):
    return json.dumps(region.to_json_dict(), sort_keys=True)


def region_from_json(text):
    return ElementaryRegion.from_json_dict(json.loads(text))
