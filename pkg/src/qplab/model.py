"""Operator model: phases, frequencies, Toeplitz kernels, trig potentials.

The operator acts on l2(Z^d) as H(x) = S + lambda * v(x + n omega) delta_nn',
with the phase x on a torus T^b split into d blocks; stepping the lattice
coordinate n_j shifts only block j of the phase.  Everything here evaluates
that data exactly (trig polynomials, finite kernel tables) and assembles the
restricted matrix lambda^{-1} H_Lambda - E in lexicographic order.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .lattice import point_set_of

GOLDEN_MEAN = (math.sqrt(5.0) - 1.0) / 2.0


# ---------------------------------------------------------------------------
# phase space
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BlockStructure:
    """Sizes (b_1, ..., b_d) of the phase blocks; b = sum, b_max drives c1."""

    sizes: tuple

    def __post_init__(self):
        if not self.sizes or any(int(b) != b or b < 1 for b in self.sizes):
            raise InputError("block sizes must be positive integers")

    @property
    def d(self):
        return len(self.sizes)

    @property
    def total(self):
        return sum(self.sizes)

    @property
    def largest(self):
        return max(self.sizes)

    def slices(self):
        out, start = [], 0
        for b in self.sizes:
            out.append(slice(start, start + b))
            start += b
        return out


def _mod1(values):
    return tuple(v - math.floor(v) for v in values)


@dataclass(frozen=True)
class Phase:
    """Point of T^b stored as floats in [0, 1), grouped by blocks."""

    coords: tuple
    blocks: BlockStructure

    def __post_init__(self):
        if len(self.coords) != self.blocks.total:
            raise InputError("phase length does not match block structure")
        object.__setattr__(self, "coords", _mod1(self.coords))

    def block(self, j):
        return self.coords[self.blocks.slices()[j]]

    def section(self, j):
        """All coordinates except block j (the x_j-complement section)."""
        sl = self.blocks.slices()[j]
        return self.coords[: sl.start] + self.coords[sl.stop:]

    def with_block(self, j, values):
        sl = self.blocks.slices()[j]
        if len(values) != sl.stop - sl.start:
            raise InputError("block replacement has wrong length")
        coords = self.coords[: sl.start] + tuple(values) + self.coords[sl.stop:]
        return Phase(coords, self.blocks)


@dataclass(frozen=True)
class Frequency:
    """Frequency vector on T^b with the same block structure as the phase."""

    coords: tuple
    blocks: BlockStructure

    def __post_init__(self):
        if len(self.coords) != self.blocks.total:
            raise InputError("frequency length does not match block structure")
        object.__setattr__(self, "coords", _mod1(self.coords))


def shift_phase(x, omega, n):
    """Shift block j of the phase by n_j * omega_j, mod 1, for each j."""
    if x.blocks != omega.blocks:
        raise InputError("phase and frequency block structures differ")
    if len(n) != x.blocks.d:
        raise InputError("lattice point dimension does not match blocks")
    coords = list(x.coords)
    for j, sl in enumerate(x.blocks.slices()):
        for i in range(sl.start, sl.stop):
            coords[i] = coords[i] + n[j] * omega.coords[i]
    return Phase(tuple(coords), x.blocks)


# ---------------------------------------------------------------------------
# trig potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrigPotential:
    """Real trig polynomial v(x) = sum_t a_t cos(2 pi k_t.x) + b_t sin(2 pi k_t.x).

    terms: tuple of (k, a, b) with k an integer tuple of length b.
    Evaluation is plain float trig over the stored terms; there is no
    truncation or approximation step anywhere.
    """

    terms: tuple
    b: int

    def __post_init__(self):
        for k, a, bb in self.terms:
            if len(k) != self.b:
                raise InputError("frequency vector length must equal b")
            if any(int(c) != c for c in k):
                raise InputError("term frequencies must be integers")

    def eval_coords(self, coords):
        v = 0.0
        for k, a, bb in self.terms:
            phase = 2.0 * math.pi * sum(ki * xi for ki, xi in zip(k, coords))
            if a:
                v += a * math.cos(phase)
            if bb:
                v += bb * math.sin(phase)
        return v

    def __call__(self, x):
        return self.eval_coords(x.coords)

    def eval_array(self, coord_arrays):
        """Vectorized eval_coords over b parallel coordinate arrays."""
        out = None
        for k, a, bb in self.terms:
            phase = 0.0
            for ki, arr in zip(k, coord_arrays):
                if ki:
                    phase = phase + (2.0 * math.pi * ki) * np.asarray(arr)
            if isinstance(phase, float):
                phase = np.zeros(np.broadcast(*[np.asarray(c) for c in
                                                coord_arrays]).shape)
            term = 0.0
            if a:
                term = term + a * np.cos(phase)
            if bb:
                term = term + bb * np.sin(phase)
            out = term if out is None else out + term
        if out is None:
            out = np.zeros(np.broadcast(*[np.asarray(c) for c in
                                          coord_arrays]).shape)
        return out

    def sup_bound(self):
        """Sum of coefficient magnitudes; an exact bound for sup |v|."""
        return sum(abs(a) + abs(bb) for _, a, bb in self.terms)

    def complex_strip_bound(self, width):
        """Bound for sup |v| over the complex strip |Im z_i| <= width."""
        out = 0.0
        for k, a, bb in self.terms:
            out += (abs(a) + abs(bb)) * math.exp(
                2.0 * math.pi * width * sum(abs(ki) for ki in k)
            )
        return out

    @staticmethod
    def cosine(b=1, axis=0, amplitude=1.0):
        k = tuple(1 if i == axis else 0 for i in range(b))
        return TrigPotential(((k, amplitude, 0.0),), b)

    @staticmethod
    def separable_cosines(blocks):
        """cos in the first coordinate of every block, summed."""
        b = blocks.total
        terms = []
        for sl in blocks.slices():
            k = tuple(1 if i == sl.start else 0 for i in range(b))
            terms.append((k, 1.0, 0.0))
        return TrigPotential(tuple(terms), b)


def evaluate_potential(v, x):
    return v(x)


def check_nondegeneracy(v, blocks, grid=64, sections=16, tol=1e-9, seed=0):
    """Estimate the worst per-block section oscillation of v.

    For each block j, sample `sections` random complements and scan block j
    on a `grid` mesh per coordinate; report the smallest observed oscillation
    (max - min).  Nondegenerate means every block clears tol.
    """
    rng = np.random.default_rng(seed)
    report = {"per_block": [], "nondegenerate": True}
    for j, sl in enumerate(blocks.slices()):
        bj = sl.stop - sl.start
        worst = math.inf
        witness = None
        complements = [tuple(rng.random(blocks.total - bj)) for _ in range(sections)]
        if blocks.total == bj:
            complements = [()]
        mesh = [np.arange(grid) / grid] * bj
        for sec in complements:
            vals = []
            for theta in itertools.product(*mesh):
                coords = list(sec[: sl.start]) + list(theta) + list(sec[sl.start:])
                vals.append(v.eval_coords(coords))
            osc = max(vals) - min(vals)
            if osc < worst:
                worst, witness = osc, sec
        report["per_block"].append(
            {"block": j, "min_oscillation": worst, "witness_section": witness}
        )
        if worst <= tol:
            report["nondegenerate"] = False
    return report


# ---------------------------------------------------------------------------
# Toeplitz kernels
# ---------------------------------------------------------------------------

_FAMILIES = ("laplacian_l1", "laplacian_sup", "exp_decay", "fourier_symbol")


@dataclass(frozen=True)
class ToeplitzKernel:
    """Symmetric convolution kernel S(n, n') = table[n - n'] with a decay
    certificate |S(m)| <= exp(prefactor_log - rho * |m|_sup), checked on
    construction for every stored entry.

    Unit-hopping families anchor the certificate at the hop range, which is
    what prefactor_log = rho encodes; exp_decay satisfies the bare bound with
    prefactor_log = 0.
    """

    family: str
    d: int
    rho: float
    table: tuple  # ((offset, value), ...) canonically sorted
    prefactor_log: float = 0.0
    truncation_radius: int = 0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise InputError("unknown kernel family %r" % (self.family,))
        if self.rho <= 0:
            raise InputError("decay rate must be positive")
        lookup = dict(self.table)
        for m, val in self.table:
            r = max(abs(c) for c in m) if any(m) else 0
            if r == 0:
                continue
            if abs(val) > math.exp(self.prefactor_log - self.rho * r) * (1 + 1e-12):
                raise InputError(
                    "kernel entry at %r violates its decay certificate" % (m,)
                )
            neg = tuple(-c for c in m)
            if lookup.get(neg) != val:
                raise InputError("kernel table must be symmetric under m -> -m")

    def entry(self, n, nprime):
        m = tuple(a - b for a, b in zip(n, nprime))
        if any(abs(c) > self.truncation_radius for c in m):
            return 0.0
        return dict(self.table).get(m, 0.0)

    def offsets(self):
        return self.table

    def schur_row_bound(self):
        """Row sum of |entries| over the infinite lattice (finite table)."""
        return sum(abs(v) for m, v in self.table if any(m))

    def diagonal(self):
        return dict(self.table).get((0,) * self.d, 0.0)

    @staticmethod
    def laplacian_l1(d, rho=1.0):
        table = []
        for i in range(d):
            for s in (-1, 1):
                m = tuple(s if j == i else 0 for j in range(d))
                table.append((m, 1.0))
        return ToeplitzKernel(
            "laplacian_l1", d, rho, tuple(sorted(table)), prefactor_log=rho,
            truncation_radius=1,
        )

    @staticmethod
    def laplacian_sup(d, rho=1.0):
        table = []
        for m in itertools.product((-1, 0, 1), repeat=d):
            if any(m):
                table.append((m, 1.0))
        return ToeplitzKernel(
            "laplacian_sup", d, rho, tuple(sorted(table)), prefactor_log=rho,
            truncation_radius=1,
        )

    @staticmethod
    def exp_decay(d, rho, truncation_radius=None):
        if truncation_radius is None:
            # far tail below 1e-14 so dropped entries never matter at 1e-8 scale
            truncation_radius = math.ceil(33.0 / rho)
        table = []
        for m in itertools.product(
            range(-truncation_radius, truncation_radius + 1), repeat=d
        ):
            if any(m):
                r = max(abs(c) for c in m)
                table.append((m, math.exp(-rho * r)))
        return ToeplitzKernel(
            "exp_decay", d, rho, tuple(sorted(table)), prefactor_log=0.0,
            truncation_radius=truncation_radius,
        )


def kernel_entry(kernel, n, nprime):
    if len(n) != kernel.d or len(nprime) != kernel.d:
        raise InputError("lattice point dimension mismatch")
    return kernel.entry(tuple(n), tuple(nprime))


def dual_kernel_from_symbol(symbol, d=None):
    """Kernel whose entries are the Fourier coefficients of an even symbol.

    symbol must be a TrigPotential in d variables with cosine terms only
    (sine terms make the coefficient table non-symmetric and are rejected:
    the dual operator would not be self-adjoint as a real kernel).
    """
    if d is None:
        d = symbol.b
    if d != symbol.b:
        raise InputError("symbol variable count must match kernel dimension")
    coeffs = {}
    for k, a, b in symbol.terms:
        if abs(b) > 0:
            raise InputError("symbol must be even (cosine terms only) for a "
                             "symmetric dual kernel")
        if not any(k):
            coeffs[k] = coeffs.get(k, 0.0) + a
            continue
        neg = tuple(-c for c in k)
        coeffs[k] = coeffs.get(k, 0.0) + a / 2.0
        coeffs[neg] = coeffs.get(neg, 0.0) + a / 2.0
    table = tuple(sorted((m, v) for m, v in coeffs.items() if v != 0.0))
    radius = max((max(abs(c) for c in m) for m, _ in table if any(m)), default=0)
    nonzero = [(m, v) for m, v in table if any(m)]
    prefactor_log = max(
        [0.0] + [math.log(abs(v)) for _, v in nonzero]
    ) + 1.0
    if nonzero:
        rho = min(
            (prefactor_log - math.log(abs(v))) / max(abs(c) for c in m)
            for m, v in nonzero
        )
    else:
        rho = 1.0
    return ToeplitzKernel(
        "fourier_symbol", d, rho, table, prefactor_log=prefactor_log,
        truncation_radius=radius,
    )


def symbol_of_kernel(kernel):
    """Even trig polynomial whose Fourier coefficients reproduce the table."""
    seen = set()
    terms = []
    for m, v in kernel.table:
        if not any(m):
            terms.append((m, v, 0.0))
            continue
        neg = tuple(-c for c in m)
        if neg in seen:
            continue
        seen.add(m)
        terms.append((max(m, neg), 2.0 * v, 0.0))
    return TrigPotential(tuple(sorted(terms)), kernel.d)


def zero_kernel(d):
    return dual_kernel_from_symbol(TrigPotential((), d), d)


# ---------------------------------------------------------------------------
# model configuration and assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelConfig:
    kernel: ToeplitzKernel
    potential: TrigPotential
    blocks: BlockStructure
    lam: float
    omega: Frequency

    def __post_init__(self):
        if self.lam <= 1.0:
            raise InputError("lambda must exceed 1")
        if self.kernel.d != self.blocks.d:
            raise InputError("kernel dimension must match block count")
        if self.potential.b != self.blocks.total:
            raise InputError("potential variable count must equal total block size")
        if self.omega.blocks != self.blocks:
            raise InputError("frequency block structure mismatch")

    @property
    def d(self):
        return self.blocks.d

    def potential_at(self, x, n):
        return self.potential(shift_phase(x, self.omega, n))

    def spectral_bound(self):
        """Certified bound for the spectrum of lambda^{-1} H."""
        return self.potential.sup_bound() + self.kernel.schur_row_bound() / self.lam \
            + abs(self.kernel.diagonal()) / self.lam


def sorted_points(region_or_points):
    return sorted(point_set_of(region_or_points))


def assemble_restricted(cfg, region_or_points, energy, x):
    """Dense symmetric matrix of lambda^{-1} H - E restricted to the region.

    Rows and columns follow lexicographic order on the region's points:
    entry (n, n') is lambda^{-1} S(n, n') plus (v(x + n omega) - E) on the
    diagonal.  Returns (matrix, points).
    """
    pts = sorted_points(region_or_points)
    if not pts:
        raise InputError("empty restriction region")
    size = len(pts)
    M = np.zeros((size, size))
    inv_lam = 1.0 / cfg.lam
    index = {p: i for i, p in enumerate(pts)}
    for m, val in cfg.kernel.table:
        if not any(m):
            continue
        for p, i in index.items():
            q = tuple(a + b for a, b in zip(p, m))
            j = index.get(q)
            if j is not None:
                M[i, j] += inv_lam * val
    diag_kernel = inv_lam * cfg.kernel.diagonal()
    for p, i in index.items():
        M[i, i] += diag_kernel + cfg.potential_at(x, p) - energy
    return M, pts


def matrix_to_csv(matrix, points, path):
    """Write a restricted matrix with its index map to CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "n_i", "n_j", "value"])
        n = len(points)
        for i in range(n):
            for j in range(n):
                w.writerow([i, j, repr(points[i]), repr(points[j]),
                            "%.17g" % matrix[i, j]])


# ---------------------------------------------------------------------------
# config file loading
# ---------------------------------------------------------------------------

def config_from_dict(obj):
    """Build a ModelConfig from the documented JSON shape.

    Keys: kernel.family, kernel.rho (and kernel.symbol_terms or
    kernel.truncation_radius when relevant), potential.terms, blocks,
    lambda, omega.
    """
    try:
        blocks = BlockStructure(tuple(int(b) for b in obj["blocks"]))
        kspec = obj["kernel"]
        family = kspec["family"]
        rho = float(kspec.get("rho", 1.0))
        d = blocks.d
        if family == "laplacian_l1":
            kernel = ToeplitzKernel.laplacian_l1(d, rho)
        elif family == "laplacian_sup":
            kernel = ToeplitzKernel.laplacian_sup(d, rho)
        elif family == "exp_decay":
            kernel = ToeplitzKernel.exp_decay(
                d, rho, kspec.get("truncation_radius")
            )
        elif family == "fourier_symbol":
            sym_terms = tuple(
                (tuple(int(c) for c in t["k"]), float(t.get("cos", 0.0)),
                 float(t.get("sin", 0.0)))
                for t in kspec["symbol_terms"]
            )
            kernel = dual_kernel_from_symbol(TrigPotential(sym_terms, d), d)
        else:
            raise InputError("unknown kernel family %r" % (family,))
        pot_terms = tuple(
            (tuple(int(c) for c in t["k"]), float(t.get("cos", 0.0)),
             float(t.get("sin", 0.0)))
            for t in obj["potential"]["terms"]
        )
        potential = TrigPotential(pot_terms, blocks.total)
        lam = float(obj["lambda"])
        omega = Frequency(tuple(float(w) for w in obj["omega"]), blocks)
        return ModelConfig(kernel, potential, blocks, lam, omega)
    except KeyError as exc:
        raise InputError("missing config key: %s" % (exc,)) from exc


def load_config(path):
    with open(path) as fh:
        obj = json.load(fh)
    return config_from_dict(obj.get("model", obj))
