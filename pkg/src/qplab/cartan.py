"""Schur complements, determinant bounds, and small-minor measure estimates.

For an invertible principal block T1 of a symmetric T, the complement
S = T3 - T2^t T1^{-1} T2 controls the full inverse through the sandwich

    ||S^{-1}|| <= ||T^{-1}|| <= C (1 + ||T1^{-1}||)^2 (1 + ||S^{-1}||),

and ||S^{-1}|| <= ||S||^{M-1} / |det S| bounds the complement's inverse by
its determinant (M the complement size; all of it evaluated in log space).
The measure of the parameter set where the smallest singular value of an
analytic family drops below epsilon is estimated by Monte Carlo and compared
with the calibrated bound C epsilon^c."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, asdict

import numpy as np
from scipy.linalg import LinAlgWarning, lu_factor, lu_solve

from .errors import InputError
from .greens import operator_norm

_LOG_EPS = 1e-300


def _lu_factor_quiet(A):
    # singular pivots are inspected explicitly afterwards
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LinAlgWarning)
        return lu_factor(A)


@dataclass(frozen=True)
class PivotData:
    """Index split for a Schur complement: V indexes the kept block T3."""

    size: int
    V: tuple

    def __post_init__(self):
        V = tuple(sorted(set(self.V)))
        object.__setattr__(self, "V", V)
        if not V:
            raise InputError("pivot set must be nonempty")
        if V[0] < 0 or V[-1] >= self.size:
            raise InputError("pivot indices out of range")
        if len(V) >= self.size:
            raise InputError("pivot complement must be nonempty")

    @property
    def complement(self):
        keep = set(self.V)
        return tuple(i for i in range(self.size) if i not in keep)


def schur_complement(T, pivot):
    """S = T3 - T2^t T1^{-1} T2 with T1 the complement block.

    Returns (S, t1_inverse_norm).  Raises InputError when T1 is singular to
    working precision: the pivot choice, not the matrix, is at fault."""
    T = np.asarray(T, dtype=float)
    if T.shape[0] != T.shape[1] or T.shape[0] != pivot.size:
        raise InputError("matrix shape does not match pivot data")
    V = list(pivot.V)
    W = list(pivot.complement)
    T1 = T[np.ix_(W, W)]
    T2 = T[np.ix_(W, V)]
    T3 = T[np.ix_(V, V)]
    try:
        lu, piv = _lu_factor_quiet(T1)
    except ValueError as exc:
        raise InputError("T1 block is not factorable") from exc
    if not np.all(np.isfinite(lu)) or np.min(np.abs(np.diag(lu))) == 0.0:
        raise InputError("T1 block is singular; choose a different pivot set")
    X = lu_solve((lu, piv), T2)
    S = T3 - T2.T @ X
    S = 0.5 * (S + S.T)
    t1_inv = lu_solve((lu, piv), np.eye(len(W)))
    return S, float(np.linalg.norm(t1_inv, 2))


@dataclass
class SandwichReport:
    lower: float
    upper_over_c: float
    inverse_norm: float
    c_min: float
    lower_ok: bool

    @property
    def ok(self):
        # C_min finite: some constant C >= 1 makes the upper bound true;
        # the lower bound carries no constant and must hold outright.
        return self.lower_ok and math.isfinite(self.c_min)

    def to_json(self):
        return json.dumps(asdict(self))


def sandwich_check(T, pivot):
    """Evaluate both sides of the inverse-norm sandwich on a concrete T.

    lower = ||S^{-1}||, upper_over_c = (1 + ||T1^{-1}||)^2 (1 + ||S^{-1}||),
    and c_min = ||T^{-1}|| / upper_over_c is the smallest admissible C.
    """
    T = np.asarray(T, dtype=float)
    S, t1_inv_norm = schur_complement(T, pivot)
    s_inv_norm = float(np.linalg.norm(np.linalg.inv(S), 2))
    t_inv_norm = float(np.linalg.norm(np.linalg.inv(T), 2))
    upper_over_c = (1.0 + t1_inv_norm) ** 2 * (1.0 + s_inv_norm)
    c_min = t_inv_norm / upper_over_c
    lower_ok = s_inv_norm <= t_inv_norm * (1 + 1e-10)
    return SandwichReport(s_inv_norm, upper_over_c, t_inv_norm, c_min,
                          lower_ok)


def det_inverse_bound(S):
    """(log ||S^{-1}||, log bound) for ||S^{-1}|| <= ||S||^{M-1} / |det S|.

    Everything in log space: the determinant comes from the LU diagonal as
    a sign and a log magnitude, so the bound survives determinants far
    outside float range.
    """
    S = np.asarray(S, dtype=float)
    m = S.shape[0]
    if m != S.shape[1]:
        raise InputError("square matrix required")
    lu, piv = _lu_factor_quiet(S)
    diag = np.abs(np.diag(lu))
    if np.min(diag) == 0.0:
        return math.inf, math.inf
    log_det = float(np.sum(np.log(diag)))
    norm = operator_norm(S)
    if m == 1:
        log_bound = -log_det
    else:
        log_bound = (m - 1) * math.log(max(norm, _LOG_EPS)) - log_det
    inv_norm = float(np.linalg.norm(np.linalg.inv(S), 2))
    return math.log(max(inv_norm, _LOG_EPS)), log_bound


# ---------------------------------------------------------------------------
# analytic families and bad-parameter measure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AnalyticMatrixFamily:
    """Matrix-valued map z -> T(z) on a poly-interval [-h/2, h/2]^J.

    entries taking a tuple z of length j_params and returning a square
    ndarray; analyticity is the caller's promise (the desk checks include a
    finite-difference Cauchy test, not a proof).
    """

    entries: object
    j_params: int
    half_width: float
    size: int

    def __call__(self, z):
        z = tuple(z)
        if len(z) != self.j_params:
            raise InputError("parameter count mismatch")
        T = np.asarray(self.entries(z), dtype=float)
        if T.shape != (self.size, self.size):
            raise InputError("family returned a wrongly shaped matrix")
        return T


def smallest_singular_value(T):
    return float(np.linalg.svd(np.asarray(T, dtype=float),
                               compute_uv=False)[-1])


@dataclass
class CartanMeasureReport:
    epsilon: float
    fraction: float
    absolute: float
    error: float
    samples: int
    bound_log: float
    calibration_c_log: float
    calibration_c_exp: float
    envelope_ok: bool
    decay_flag_ok: bool

    def to_json(self):
        return json.dumps(asdict(self))


def cartan_bad_measure(family, epsilons, samples=4096, seed=0,
                       calibration=(1.0, 0.05)):
    """Monte Carlo measure of {z : sigma_min(T(z)) < epsilon} per epsilon.

    Sampling is uniform over the poly-interval; for each epsilon the report
    carries the empirical fraction, the absolute measure (fraction times
    h^J), a 3-sigma binomial half-width, and the calibrated envelope
    bound_log = log C + c * log epsilon per the (C, c) calibration.

    Two named hypothesis flags accompany each row and gate nothing:
    envelope_ok   - empirical absolute measure below the envelope value
    decay_flag_ok - empirical measure shrinks as epsilon does (weakly)
    Desk-scale families routinely fail the envelope at tiny epsilon when
    the calibration constants are pessimistic; the empirical estimates are
    always reported.
    """
    if not epsilons:
        raise InputError("need at least one epsilon")
    C, c = calibration
    rng = np.random.default_rng(seed)
    h = family.half_width
    draws = (rng.random((samples, family.j_params)) - 0.5) * h
    sigmas = np.empty(samples)
    for i in range(samples):
        sigmas[i] = smallest_singular_value(family(tuple(draws[i])))
    volume = h ** family.j_params
    reports = []
    prev_fraction = None
    for eps in sorted(epsilons, reverse=True):
        if eps <= 0:
            raise InputError("epsilon must be positive")
        frac = float(np.count_nonzero(sigmas < eps)) / samples
        err = 3.0 * math.sqrt(max(frac * (1 - frac), 1.0 / samples) / samples)
        bound_log = math.log(C) + c * math.log(eps)
        absolute = frac * volume
        env_ok = math.log(max(absolute, _LOG_EPS)) <= bound_log
        dec_ok = prev_fraction is None or frac <= prev_fraction + 1e-15
        prev_fraction = frac
        reports.append(CartanMeasureReport(
            epsilon=eps, fraction=frac, absolute=absolute, error=err,
            samples=samples, bound_log=bound_log,
            calibration_c_log=math.log(C), calibration_c_exp=c,
            envelope_ok=env_ok, decay_flag_ok=dec_ok,
        ))
    return reports


def derivative_bound_check(family, order=2, probes=16, step=1e-4, seed=0):
    """Finite-difference bound for parameter derivatives up to `order`.

    Returns max over probes and entries of the central-difference estimate;
    a crude analyticity sanity check for desk families (smooth entries give
    moderate values; a jump shows up as a 1/step blowup).
    """
    rng = np.random.default_rng(seed)
    h = family.half_width
    worst = 0.0
    for _ in range(probes):
        z0 = (rng.random(family.j_params) - 0.5) * h * 0.5
        for j in range(family.j_params):
            def slice_entry(t, j=j, z0=z0):
                z = np.array(z0)
                z[j] += t
                return family(tuple(z))
            if order == 1:
                D = (slice_entry(step) - slice_entry(-step)) / (2 * step)
            else:
                D = (slice_entry(step) - 2 * slice_entry(0.0)
                     + slice_entry(-step)) / step ** 2
            worst = max(worst, float(np.max(np.abs(D))))
    return worst
