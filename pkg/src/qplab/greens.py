"""Restricted Green's functions and goodness checks.

G_Lambda(E; x) is the inverse of lambda^{-1} H(x) - E restricted to Lambda.
Inversion is dense LU with a 1-norm condition estimate; a matrix whose
estimated condition number exceeds COND_LIMIT, or whose residual defect
survives one refinement step above DEFECT_LIMIT, raises SingularityError.
Every matrix actually returned satisfies max |MG - I| <= DEFECT_LIMIT.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, asdict

import numpy as np
from scipy.linalg import LinAlgWarning, eigvalsh, lu_factor, lu_solve
from scipy.linalg.lapack import dgecon

from .errors import InputError, SingularityError
from .lattice import point_set_of
from .model import assemble_restricted, shift_phase

COND_LIMIT = 1e13
DEFECT_LIMIT = 1e-8
SIZE_LIMIT = 20000


def _invert_checked(M):
    """LU inverse with condition screening and a defect guarantee."""
    anorm = np.linalg.norm(M, 1)
    with warnings.catch_warnings():
        # exact singularity is screened right below via the factor itself
        warnings.simplefilter("ignore", LinAlgWarning)
        lu, piv = lu_factor(M)
    if not np.all(np.isfinite(lu)):
        raise SingularityError("restricted matrix is numerically singular",
                               condition_estimate=math.inf)
    rcond, info = dgecon(lu, anorm, norm="1")
    cond = math.inf if rcond == 0.0 else 1.0 / rcond
    if info != 0 or cond > COND_LIMIT:
        raise SingularityError(
            "condition estimate %.3e exceeds %.1e" % (cond, COND_LIMIT),
            condition_estimate=cond,
        )
    G = lu_solve((lu, piv), np.eye(M.shape[0]))
    G = 0.5 * (G + G.T)  # exact symmetry of the inverse of a symmetric matrix
    defect = np.max(np.abs(M @ G - np.eye(M.shape[0])))
    if defect > DEFECT_LIMIT:
        # one refinement sweep; columns of the correction solve M dG = I - MG
        G = G + lu_solve((lu, piv), np.eye(M.shape[0]) - M @ G)
        G = 0.5 * (G + G.T)
        defect = np.max(np.abs(M @ G - np.eye(M.shape[0])))
        if defect > DEFECT_LIMIT:
            raise SingularityError(
                "residual defect %.3e after refinement" % defect,
                condition_estimate=cond, defect=defect,
            )
    return G, cond, defect


@dataclass
class GreensData:
    """Green's matrix with its index map and inversion diagnostics."""

    matrix: np.ndarray
    points: list
    energy: float
    condition_estimate: float
    defect: float

    def entry(self, n, nprime):
        i = self.points.index(tuple(n))
        j = self.points.index(tuple(nprime))
        return self.matrix[i, j]


def compute_greens(cfg, region_or_points, energy, x):
    """Green's function of the study operator on a finite region."""
    pts = sorted(point_set_of(region_or_points))
    if len(pts) > SIZE_LIMIT:
        raise InputError("region size %d exceeds limit %d" % (len(pts), SIZE_LIMIT))
    M, pts = assemble_restricted(cfg, pts, energy, x)
    G, cond, defect = _invert_checked(M)
    return GreensData(G, pts, energy, cond, defect)


def operator_norm(matrix):
    """Spectral norm of a real symmetric matrix via its eigenvalues."""
    M = np.asarray(matrix)
    if M.shape[0] != M.shape[1] or not np.allclose(M, M.T, atol=1e-10):
        raise InputError("operator_norm expects a symmetric square matrix")
    vals = eigvalsh(0.5 * (M + M.T))
    return float(max(abs(vals[0]), abs(vals[-1])))


def schur_test_bound(matrix):
    """Max absolute row sum; dominates the spectral norm for symmetric input."""
    return float(np.max(np.sum(np.abs(np.asarray(matrix)), axis=1)))


# ---------------------------------------------------------------------------
# goodness
# ---------------------------------------------------------------------------

@dataclass
class GoodnessReport:
    """Outcome of the (rho_bar, N) goodness test on one region.

    norm_ok:   log ||G|| <= factor * sqrt(N)
    decay_ok:  log |G(n, n')| <= log(factor) - rho_bar |n - n'|
               for every pair at distance >= N / 10
    fitted_rate: least-squares decay rate of log |G| against distance over
               the tested pairs (positive means decay); nan when degenerate.
    """

    rho_bar: float
    scale: int
    norm_ok: bool
    decay_ok: bool
    norm_log: float
    norm_budget_log: float
    worst_pair: tuple
    worst_margin_log: float
    fitted_rate: float
    factor: float

    @property
    def good(self):
        return self.norm_ok and self.decay_ok

    def to_json(self):
        obj = asdict(self)
        obj["good"] = self.good
        obj["worst_pair"] = [list(p) for p in self.worst_pair] if self.worst_pair else None
        return json.dumps(obj)


def goodness(greens, rho_bar, scale, factor=1.0):
    """Check the two-sided goodness condition at scale N on a Green's matrix.

    factor > 1 runs the doubled-constant variant used after pasting:
    ||G|| <= factor * e^{sqrt N} and |G(n,n')| <= factor * e^{-rho_bar r}.
    All comparisons happen in log space; zero entries pass trivially.
    """
    if rho_bar <= 0 or scale <= 0:
        raise InputError("rho_bar and scale must be positive")
    G, pts = greens.matrix, greens.points
    norm_log = math.log(max(operator_norm(G), 1e-300))
    norm_budget_log = math.log(factor) + math.sqrt(scale)
    norm_ok = norm_log <= norm_budget_log

    cutoff = scale / 10.0
    log_factor = math.log(factor)
    decay_ok = True
    worst_pair, worst_margin = None, -math.inf
    rs, logs = [], []
    arr = np.array(pts)
    for i in range(len(pts)):
        r = np.max(np.abs(arr - arr[i]), axis=1)
        mask = r >= cutoff
        if not mask.any():
            continue
        a = np.abs(G[i, mask])
        with np.errstate(divide="ignore"):
            log_a = np.where(a > 0, np.log(np.maximum(a, 1e-320)), -np.inf)
        margins = log_a - (log_factor - rho_bar * r[mask])
        k = int(np.argmax(margins))
        if margins[k] > worst_margin:
            worst_margin = float(margins[k])
            worst_pair = (pts[i], pts[int(np.nonzero(mask)[0][k])])
        if margins[k] > 0:
            decay_ok = False
        finite = np.isfinite(log_a)
        rs.extend(r[mask][finite].tolist())
        logs.extend(log_a[finite].tolist())
    if len(set(rs)) >= 2:
        slope = np.polyfit(rs, logs, 1)[0]
        fitted_rate = -float(slope)
    else:
        fitted_rate = math.nan
    return GoodnessReport(
        rho_bar=rho_bar, scale=scale, norm_ok=norm_ok, decay_ok=decay_ok,
        norm_log=norm_log, norm_budget_log=norm_budget_log,
        worst_pair=worst_pair, worst_margin_log=worst_margin,
        fitted_rate=fitted_rate, factor=factor,
    )


def goodness_of_region(cfg, region, energy, x, rho_bar, scale, factor=1.0):
    return goodness(compute_greens(cfg, region, energy, x), rho_bar, scale,
                    factor=factor)


def shift_covariance_check(cfg, region, energy, x, shift):
    """Max |G_{Lambda+s}(E; x) - G_Lambda(E; x + s omega)| entrywise.

    Exact covariance of the model; the return value is pure floating noise.
    """
    pts = sorted(point_set_of(region))
    shifted = [tuple(a + b for a, b in zip(p, shift)) for p in pts]
    g1 = compute_greens(cfg, shifted, energy, x)
    g2 = compute_greens(cfg, pts, energy, shift_phase(x, cfg.omega, shift))
    return float(np.max(np.abs(g1.matrix - g2.matrix)))


def good_fraction(cfg, region, energy, phases, rho_bar, scale, factor=1.0):
    """Fraction of sampled phases where the region is good; singular draws
    count as bad."""
    hits = 0
    for x in phases:
        try:
            rep = goodness_of_region(cfg, region, energy, x, rho_bar, scale,
                                     factor=factor)
        except SingularityError:
            continue
        if rep.good:
            hits += 1
    return hits / len(phases) if phases else math.nan
