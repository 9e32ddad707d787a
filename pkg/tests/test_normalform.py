"""formal_normalform: bundle detection, Ueda type, reduction certificates."""

import numpy as np
import pytest

from ellnbhd.jets import BivariateJet, JetDiffeo, invert_jet, jet_compose
from ellnbhd.lattice import LatticeParams, ModelSpec, model_jet
from ellnbhd.normalform import (
    canonical_P,
    detect_normal_bundle,
    reduce,
    ueda_type,
)

PARAMS = LatticeParams(1j)
Q = PARAMS.q


def serre_jet(order=8):
    return model_jet(ModelSpec(1), PARAMS, order)


def random_conjugate(rng, order=8, window=(-2, 2), size=0.25):
    """Phi^{-1} o F_{1,0,0} o Phi for a random tangent-to-identity Phi."""
    c1 = BivariateJet.zero((window[0], max(window[1], 1)), order)
    c1[1, 0] = 1.0
    c2 = BivariateJet.zero(window, order)
    c2[0, 1] = 1.0
    for m in range(window[0], window[1] + 1):
        for n in range(1, order + 1):
            c1[m, n] = size * (rng.standard_normal() + 1j * rng.standard_normal())
        for n in range(2, order + 1):
            c2[m, n] = size * (rng.standard_normal() + 1j * rng.standard_normal())
    phi = JetDiffeo(c1, c2, "curve")
    phi_inv = invert_jet(phi)
    cap = (-40, 40)
    F = jet_compose(phi_inv, jet_compose(serre_jet(order), phi, cap), cap)
    return F, phi


class TestBundleDetection:
    def test_model_is_trivial(self):
        index, a = detect_normal_bundle(serre_jet())
        assert index == 0 and abs(a - 1.0) < 1e-12

    def test_constant_lambda(self):
        F = JetDiffeo(
            BivariateJet.from_terms({(1, 0): Q}, y_order=3),
            BivariateJet.from_terms({(0, 1): 2.0}, y_order=3),
            "curve",
        )
        index, a = detect_normal_bundle(F)
        assert index == 0 and abs(a - 2.0) < 1e-12

    def test_degree_one_bundle(self):
        F = JetDiffeo(
            BivariateJet.from_terms({(1, 0): Q}, y_order=3),
            BivariateJet.from_terms({(1, 1): 1.0}, y_order=3),
            "curve",
        )
        index, a = detect_normal_bundle(F)
        assert index == 1 and a is None
        with pytest.raises(ValueError):
            reduce(F)


class TestUedaType:
    def test_model_k1(self):
        k, _ = ueda_type(serre_jet())
        assert k == 1

    def test_k2(self):
        # flow model of Ueda type 2 has vanishing y^2 constant
        F = model_jet(ModelSpec(2), PARAMS, 7)
        k, normalized = ueda_type(F)
        assert k == 2
        assert abs(normalized.comp2[0, 3] - 1.0) < 1e-10

    def test_linear_is_infinite_type(self):
        F = JetDiffeo(
            BivariateJet.from_terms({(1, 0): Q}, y_order=6),
            BivariateJet.variable_y(6),
            "curve",
        )
        k, _ = ueda_type(F, max_k=5)
        assert k == ">= 5"

    def test_hand_built_k2(self):
        # (qz, y + y^3 + ...) with zero y^2 constant: two reduction steps by hand
        # kill nothing at order 2, hit the constant 1 at order 3 -> k = 2
        F = JetDiffeo(
            BivariateJet.from_terms({(1, 0): Q}, y_order=6),
            BivariateJet.from_terms({(0, 1): 1.0, (0, 3): 1.0}, y_order=6),
            "curve",
        )
        k, _ = ueda_type(F)
        assert k == 2


class TestReduce:
    def test_model_reduces_to_itself(self):
        report = reduce(serre_jet(), order=8)
        assert report.certified
        assert abs(report.alpha) < 1e-10
        assert abs(report.beta - 1.0) < 1e-10
        assert report.psi.max_deviation_from_identity() < 1e-10

    def test_random_conjugate(self):
        rng = np.random.default_rng(0)
        F, _ = random_conjugate(rng, order=8)
        report = reduce(F, order=8)
        assert report.certified
        assert abs(report.alpha) < 1e-8
        assert abs(report.beta - 1.0) < 1e-8
        assert report.residual_max < 1e-10 * max(F.comp1.max_abs(), 1)

    def test_parabolic_shift(self):
        # (qz, y + y^2): invariants (alpha, beta) = (0, 0)
        F = JetDiffeo(
            BivariateJet.from_terms({(1, 0): Q}, y_order=6),
            BivariateJet.from_terms({(0, 1): 1.0, (0, 2): 1.0}, y_order=6),
            "curve",
        )
        report = reduce(F, order=6)
        assert abs(report.alpha) < 1e-10
        assert abs(report.beta) < 1e-10
        assert not report.certified

    def test_gauge_freedom_is_parabolic_reparametrization(self):
        rng = np.random.default_rng(1)
        F, _ = random_conjugate(rng, order=8)
        t = 0.37 - 0.11j
        rep0 = reduce(F, order=8, gauge_t=0.0)
        rep1 = reduce(F, order=8, gauge_t=t)
        # psi' o psi^{-1} = (z, y/(1 - t y))
        delta = jet_compose(rep1.psi, invert_jet(rep0.psi), (-60, 60))
        assert (delta.comp1 - BivariateJet.variable_z(8)).max_abs() < 1e-8
        expect = BivariateJet.zero((0, 0), 8)
        for n in range(1, 9):
            expect[0, n] = t ** (n - 1)
        got = delta.comp2
        for n in range(1, 9):
            assert abs(got[0, n] - expect[0, n]) < 1e-7, n
        t_rec = delta.comp2[0, 2]
        assert abs(t_rec - t) < 1e-8

    def test_invariance_under_preconjugation(self):
        rng = np.random.default_rng(2)
        base, _ = random_conjugate(rng, order=6)
        rep_base = reduce(base, order=6)
        for _ in range(3):
            _, phi = random_conjugate(rng, order=6, size=0.15)
            cap = (-60, 60)
            F2 = jet_compose(invert_jet(phi), jet_compose(base, phi, cap), cap)
            rep2 = reduce(F2, order=6)
            assert abs(rep2.alpha - rep_base.alpha) < 1e-8
            assert abs(rep2.beta - rep_base.beta) < 1e-8

    def test_autofit_finds_nu_mu(self):
        spec = ModelSpec(1, nu=0.2 - 0.05j, P=(0.1,))
        F = model_jet(spec, PARAMS, 8)
        report = reduce(F, order=8, auto_fit=True)
        assert report.certified
        assert abs(report.model.nu - spec.nu) < 1e-8
        assert abs((report.model.P[0] if report.model.P else 0) - 0.1) < 1e-8

    def test_report_json_round_trip(self):
        import json

        report = reduce(serre_jet(), order=6)
        data = json.loads(report.to_json())
        assert data["certified"] is True
        assert data["ueda_type"] == 1


class TestCanonicalP:
    def test_constant_fixed(self):
        assert canonical_P((2.0 + 1.0j,), 3) == (2.0 + 1.0j,)

    def test_two_element_orbit(self):
        rep1 = canonical_P((0.0, 1.0), 2)
        rep2 = canonical_P((0.0, -1.0), 2)
        assert rep1 == rep2  # orbit {X, -X} has one representative

    def test_zero(self):
        assert canonical_P((), 4) == ()

    def test_idempotent_and_orbit_constant(self):
        rng = np.random.default_rng(3)
        for kprime in (2, 3, 4):
            P = tuple(rng.standard_normal() + 1j * rng.standard_normal() for _ in range(kprime))
            rep = canonical_P(P, kprime)
            assert canonical_P(rep, kprime) == rep
            for j in range(kprime):
                mu = np.exp(2j * np.pi * j / kprime)
                rotated = tuple(c * mu**i for i, c in enumerate(P))
                got = canonical_P(rotated, kprime)
                assert all(abs(a - b) < 1e-10 for a, b in zip(got, rep))
