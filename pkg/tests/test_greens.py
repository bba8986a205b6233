"""Green's function inversion contract and goodness checks."""

import math

import numpy as np
import pytest

from qplab.errors import InputError, SingularityError
from qplab.greens import (
    DEFECT_LIMIT,
    GreensData,
    compute_greens,
    good_fraction,
    goodness,
    goodness_of_region,
    operator_norm,
    schur_test_bound,
    shift_covariance_check,
)
from qplab.lattice import ElementaryRegion
from qplab.model import (
    BlockStructure,
    Frequency,
    ModelConfig,
    Phase,
    ToeplitzKernel,
    TrigPotential,
    assemble_restricted,
)

B1 = BlockStructure((1,))
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def make_config(lam=220.0, rho=3.0, d=1):
    blocks = BlockStructure((1,) * d)
    omegas = (GOLDEN, math.sqrt(2.0) - 1.0, math.sqrt(3.0) - 1.0)[:d]
    return ModelConfig(
        ToeplitzKernel.laplacian_l1(d, rho),
        TrigPotential.separable_cosines(blocks),
        blocks,
        lam,
        Frequency(omegas, blocks),
    )


def phase(*coords):
    return Phase(coords, BlockStructure((1,) * len(coords)))


class TestInversion:
    def test_defect_contract(self):
        cfg = make_config()
        g = compute_greens(cfg, ElementaryRegion((0,), 12), 1.4, phase(0.1))
        M, _ = assemble_restricted(cfg, ElementaryRegion((0,), 12), 1.4,
                                   phase(0.1))
        assert np.max(np.abs(M @ g.matrix - np.eye(len(g.points)))) <= DEFECT_LIMIT
        assert g.defect <= DEFECT_LIMIT
        assert np.all(g.matrix == g.matrix.T)

    def test_entry_lookup(self):
        cfg = make_config()
        g = compute_greens(cfg, [(0,), (1,), (2,)], 1.4, phase(0.1))
        assert g.entry((0,), (2,)) == g.matrix[0, 2]

    def test_singular_energy_raises(self):
        cfg = make_config()
        M, pts = assemble_restricted(cfg, ElementaryRegion((0,), 6), 0.0,
                                     phase(0.2))
        resonant = float(np.linalg.eigvalsh(M)[0])  # shift E onto an eigenvalue
        with pytest.raises(SingularityError) as info:
            compute_greens(cfg, ElementaryRegion((0,), 6), resonant, phase(0.2))
        assert info.value.condition_estimate > 1e12

    def test_condition_estimate_recorded(self):
        cfg = make_config()
        g = compute_greens(cfg, ElementaryRegion((0,), 8), 1.4, phase(0.3))
        direct = np.linalg.cond(g.matrix, 1)
        assert g.condition_estimate >= direct / 100.0


class TestNorms:
    def test_operator_norm_matches_eigs(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            A = rng.standard_normal((15, 15))
            A = A + A.T
            assert operator_norm(A) == pytest.approx(np.linalg.norm(A, 2))

    def test_schur_dominates_spectral(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            A = rng.standard_normal((12, 12))
            A = A + A.T
            assert operator_norm(A) <= schur_test_bound(A) + 1e-10

    def test_operator_norm_rejects_nonsymmetric(self):
        with pytest.raises(InputError):
            operator_norm(np.array([[0.0, 1.0], [0.0, 0.0]]))


class TestGoodness:
    def synthetic_greens(self, scale, rate, amp=1.0):
        pts = [(i,) for i in range(-scale, scale + 1)]
        n = len(pts)
        G = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                G[i, j] = amp * math.exp(-rate * abs(i - j))
        return GreensData(G, pts, 0.0, 1.0, 0.0)

    def test_detects_clean_decay(self):
        g = self.synthetic_greens(20, rate=2.0)
        rep = goodness(g, rho_bar=1.5, scale=20)
        assert rep.good and rep.norm_ok and rep.decay_ok
        assert rep.fitted_rate == pytest.approx(2.0, rel=1e-6)

    def test_flags_slow_decay(self):
        g = self.synthetic_greens(20, rate=0.5)
        rep = goodness(g, rho_bar=1.5, scale=20)
        assert not rep.decay_ok
        assert rep.worst_margin_log > 0
        assert rep.worst_pair is not None

    def test_norm_budget(self):
        # norm ~ sum of the kernel row, far above e^sqrt(2) for amp large
        g = self.synthetic_greens(2, rate=3.0, amp=100.0)
        rep = goodness(g, rho_bar=1.0, scale=2)
        assert not rep.norm_ok
        assert rep.norm_log > rep.norm_budget_log

    def test_factor_doubles_budgets(self):
        g = self.synthetic_greens(16, rate=1.0, amp=1.9)
        tight = goodness(g, rho_bar=1.0, scale=16, factor=1.0)
        doubled = goodness(g, rho_bar=1.0, scale=16, factor=2.0)
        assert not tight.decay_ok and doubled.decay_ok
        assert doubled.norm_budget_log == pytest.approx(
            math.log(2.0) + 4.0
        )

    def test_pairs_below_cutoff_ignored(self):
        # rate violation only at r < N/10 must not trip the check
        pts = [(0,), (1,), (40,)]
        G = np.array([[1.0, 5.0, 1e-30],
                      [5.0, 1.0, 1e-30],
                      [1e-30, 1e-30, 1.0]])
        rep = goodness(GreensData(G, pts, 0.0, 1.0, 0.0), 1.0, 40)
        assert rep.decay_ok

    def test_guards(self):
        g = self.synthetic_greens(4, rate=1.0)
        with pytest.raises(InputError):
            goodness(g, rho_bar=0.0, scale=4)
        with pytest.raises(InputError):
            goodness(g, rho_bar=1.0, scale=0)

    def test_json_round_trip(self):
        import json
        rep = goodness(self.synthetic_greens(10, 2.0), 1.0, 10)
        obj = json.loads(rep.to_json())
        assert obj["good"] is True
        assert obj["scale"] == 10


class TestCovariance:
    @pytest.mark.parametrize("shift", [(1,), (-3,), (7,)])
    def test_shift_covariance_1d(self, shift):
        cfg = make_config()
        err = shift_covariance_check(
            cfg, ElementaryRegion((0,), 10), 1.4, phase(0.123), shift
        )
        assert err <= 1e-9

    def test_shift_covariance_2d(self):
        cfg = make_config(lam=980.0, d=2)
        err = shift_covariance_check(
            cfg, ElementaryRegion((0, 0), 3), 1.4, phase(0.05, 0.41), (2, -1)
        )
        assert err <= 1e-9


class TestGoodFraction:
    def test_strong_coupling_mostly_good(self):
        cfg = make_config(lam=220.0)
        rng = np.random.default_rng(3)
        phases = [phase(float(u)) for u in rng.random(20)]
        frac = good_fraction(cfg, ElementaryRegion((0,), 5), 1.4, phases,
                             rho_bar=3.0, scale=5)
        assert frac >= 0.8

    def test_region_goodness_entry_point(self):
        cfg = make_config()
        rep = goodness_of_region(cfg, ElementaryRegion((0,), 5), 1.4,
                                 phase(0.21), 3.0, 5)
        assert rep.scale == 5
