"""Resolvent pasting, the smallness condition, and decay propagation."""

import math

import numpy as np
import pytest

from qplab.errors import HypothesisError, InputError
from qplab.gluing import (
    build_window_cover,
    calibrate_degrade_constant,
    coupling_kernel,
    load_degrade_constant,
    load_degrade_constants,
    ml_condition,
    ml_value,
    paste_norm,
    paste_norm_budget_log,
    propagate_decay,
    resolvent_residual,
    verify_cover_goodness,
)
from qplab.lattice import ElementaryRegion
from qplab.model import (
    BlockStructure,
    Frequency,
    ModelConfig,
    Phase,
    ToeplitzKernel,
    TrigPotential,
)

B1 = BlockStructure((1,))
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def make_config(lam=300.0, rho=3.0):
    return ModelConfig(
        ToeplitzKernel.laplacian_l1(1, rho),
        TrigPotential.cosine(1),
        B1,
        lam,
        Frequency((GOLDEN,), B1),
    )


def phase(u):
    return Phase((u,), B1)


class TestResolventIdentity:
    def test_residual_is_floating_noise(self):
        cfg = make_config()
        pts1 = [(i,) for i in range(-10, 0)]
        pts2 = [(i,) for i in range(0, 11)]
        res = resolvent_residual(cfg, pts1, pts2, 1.4, phase(0.3))
        assert res <= 1e-12

    def test_randomized_residuals(self):
        cfg = make_config()
        rng = np.random.default_rng(21)
        for _ in range(10):
            cut = int(rng.integers(-5, 6))
            pts1 = [(i,) for i in range(-12, cut)]
            pts2 = [(i,) for i in range(cut, 13)]
            e = float(rng.uniform(1.2, 1.8))
            res = resolvent_residual(cfg, pts1, pts2, e, phase(float(rng.random())))
            assert res <= 1e-8

    def test_overlap_rejected(self):
        cfg = make_config()
        with pytest.raises(InputError, match="disjoint"):
            coupling_kernel(cfg, [(0,), (1,)], [(1,), (2,)])

    def test_coupling_supported_on_interface(self):
        cfg = make_config()
        Gamma, pts = coupling_kernel(cfg, [(0,), (1,)], [(2,), (3,)])
        idx = {p: i for i, p in enumerate(pts)}
        assert Gamma[idx[(1,)], idx[(2,)]] == 1.0
        assert Gamma[idx[(0,)], idx[(1,)]] == 0.0
        assert Gamma[idx[(0,)], idx[(3,)]] == 0.0
        assert np.all(Gamma == Gamma.T)


class TestSmallness:
    # frozen values, cross-checked against the closed-form oracle below
    FROZEN = [
        ((10.0, 1.0, 1, 400), 7.062369884430861e-15),
        ((10.0, 1.0, 1, 4), 75.74465707334166),
        ((220.0, 3.0, 1, 5), 0.19985984768433343),
        ((300.0, 3.0, 1, 16), 0.018174249729066189),
    ]

    @staticmethod
    def closed_form(lam, rho, d, M):
        # d=1 tail has the exact form 2x/(1-x)^2 + 1/(1-x) with x = e^{-rho/2}
        assert d == 1
        x = math.exp(-0.5 * rho)
        tail = 2.0 * x / (1.0 - x) ** 2 + 1.0 / (1.0 - x)
        return (2.0 / lam) * math.exp(math.sqrt(M)) * (2 * M + 1) \
            * math.exp(-(3.0 * rho / 20.0) * M) * tail

    @pytest.mark.parametrize("args,value", FROZEN)
    def test_frozen_values(self, args, value):
        lam, rho, d, M = args
        assert ml_value(lam, rho, d, M) == pytest.approx(value, rel=1e-12)
        assert ml_value(lam, rho, d, M) == pytest.approx(
            self.closed_form(lam, rho, d, M), rel=1e-12
        )

    def test_example_scales(self):
        # lam=10, rho=1, d=1: fails at M=4, holds at M=400
        assert not ml_condition(10.0, 1.0, 1, 4, 4).satisfied
        assert ml_condition(10.0, 1.0, 1, 400, 400).satisfied

    def test_sup_over_range(self):
        rep = ml_condition(300.0, 3.0, 1, 4, 16)
        direct = max(ml_value(300.0, 3.0, 1, M) for M in range(4, 17))
        assert rep.sup_value == pytest.approx(direct, rel=1e-12)
        assert rep.m0 == 4 and rep.m1 == 16

    def test_large_range_matches_scan(self):
        # the candidate shortcut must agree with a full scan on a huge range
        rep = ml_condition(1e6, 2.0, 1, 1, 100_000)
        direct = max(ml_value(1e6, 2.0, 1, M)
                     for M in list(range(1, 200)) + [100_000])
        assert rep.sup_value == pytest.approx(direct, rel=1e-9)

    def test_bad_range_rejected(self):
        with pytest.raises(InputError):
            ml_condition(10.0, 1.0, 1, 0, 4)
        with pytest.raises(InputError):
            ml_condition(10.0, 1.0, 1, 5, 4)

    def test_budget_log_example(self):
        # d=1, M1=24: log(4 * 49 * e^sqrt(24)) = log 4 + log 49 + sqrt 24
        assert paste_norm_budget_log(24, 1) == pytest.approx(
            math.log(4.0) + math.log(49.0) + math.sqrt(24.0)
        )


class TestWindowCover:
    def test_cover_every_point(self):
        domain = ElementaryRegion((0,), 12)
        cover = build_window_cover(domain, 4, 4)
        assert set(cover.windows) == domain.point_set()
        for p, w in cover.windows.items():
            assert p in w.point_set()
            assert w.point_set() <= domain.point_set()

    def test_sparse_domain_fails(self):
        with pytest.raises(HypothesisError) as info:
            build_window_cover([(0,), (50,)], 2, 2)
        assert info.value.condition == "window-cover"

    def test_scale_of_out_of_range(self):
        with pytest.raises(InputError):
            build_window_cover(ElementaryRegion((0,), 8), 2, 4,
                               scale_of=lambda p: 7)

    def test_cover_goodness_lists_bad_points(self):
        cfg = make_config(lam=1.5)  # weak coupling: windows are not good
        domain = ElementaryRegion((0,), 8)
        cover = build_window_cover(domain, 4, 4)
        bad = verify_cover_goodness(cfg, cover, 0.0, phase(0.0), 3.0)
        assert len(bad) > 0


class TestPaste:
    def test_paste_norm_certified(self):
        cfg = make_config()
        g, bound = paste_norm(cfg, ElementaryRegion((0,), 16), 1.4,
                              phase(0.11), 2.4, 4, 4)
        assert bound.norm_log <= bound.norm_budget_log
        assert bound.ml_sup <= 0.5
        assert len(g.points) == 33

    def test_paste_smallness_gate(self):
        cfg = make_config(lam=10.0, rho=1.0)
        with pytest.raises(HypothesisError) as info:
            paste_norm(cfg, ElementaryRegion((0,), 16), 1.4, phase(0.11),
                       0.8, 4, 4)
        assert info.value.condition == "ml"

    def test_propagate_decay_rate(self):
        cfg = make_config()
        bound = propagate_decay(cfg, ElementaryRegion((0,), 16), 1.4,
                                phase(0.11), 2.4, 16, 16,
                                degrade_constant=1.0)
        assert bound.effective_rate == pytest.approx(2.4 - 1.0 / 4.0)
        assert bound.decay_violations == 0
        assert bound.checked_pairs > 0
        assert bound.ok

    def test_effective_rate_clipped_at_zero(self):
        cfg = make_config()
        bound = propagate_decay(cfg, ElementaryRegion((0,), 16), 1.4,
                                phase(0.11), 0.4, 16, 16,
                                degrade_constant=100.0)
        assert bound.effective_rate == 0.0

    def test_excluded_cluster_diameter_gate(self):
        cfg = make_config()
        excluded = frozenset({(-2,), (9,)})
        with pytest.raises(HypothesisError) as info:
            propagate_decay(cfg, ElementaryRegion((0,), 16), 1.4, phase(0.11),
                            2.4, 4, 4, excluded=excluded, excluded_diam_cap=5.0,
                            degrade_constant=1.0)
        assert info.value.condition == "excluded-diam"

    def test_excluded_points_need_no_window(self):
        cfg = make_config()
        # excluded skips the cover requirement for those points only
        excluded = frozenset({(0,), (1,)})
        bound = propagate_decay(cfg, ElementaryRegion((0,), 16), 1.4,
                                phase(0.11), 2.4, 4, 4, excluded=excluded,
                                excluded_diam_cap=16.0, degrade_constant=1.0)
        assert bound.decay_violations == 0

    def test_excluded_outside_domain_rejected(self):
        cfg = make_config()
        with pytest.raises(InputError):
            propagate_decay(cfg, ElementaryRegion((0,), 4), 1.4, phase(0.1),
                            2.4, 4, 4, excluded=frozenset({(99,)}),
                            degrade_constant=1.0)


class TestCalibration:
    def test_committed_constants_present(self):
        obj = load_degrade_constants()
        for family in ("laplacian_l1", "laplacian_sup", "exp_decay",
                       "fourier_symbol"):
            assert obj["families"][family]["constant"] > 0.0
        assert load_degrade_constant("laplacian_l1") > 0.0

    def test_unknown_family(self):
        with pytest.raises(InputError):
            load_degrade_constant("unknown")

    def test_calibration_covers_observed_shortfall(self):
        cfg = make_config()
        rng = np.random.default_rng(5)
        phases = [phase(float(u)) for u in rng.random(4)]
        out = calibrate_degrade_constant(
            cfg, ElementaryRegion((0,), 12), [1.4, 1.5], phases, 2.4, 4, 4
        )
        assert out["constant"] >= out["max_shortfall"]
        assert out["constant"] >= out["margin"]
        assert out["samples"] > 0
        # the calibrated constant certifies the observed data by construction
        eff = 2.4 - out["constant"] / 2.0
        bound = propagate_decay(cfg, ElementaryRegion((0,), 12), 1.4,
                                phases[0], 2.4, 4, 4,
                                degrade_constant=out["constant"])
        assert bound.effective_rate == pytest.approx(max(eff, 0.0))
        assert bound.decay_violations == 0
