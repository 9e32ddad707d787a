"""series_core: arithmetic, composition, inversion, residues, round trips."""

import io

import numpy as np
import pytest

from ellnbhd.jets import (
    BivariateJet,
    JetDiffeo,
    TwoFormJet,
    corner_residues,
    invert_jet,
    jet_add,
    jet_compose,
    jet_mul,
    load_diffeo,
    load_jet,
    save_diffeo,
    save_jet,
)


def random_jet(rng, window=(-2, 3), y_order=4):
    m0, m1 = window
    c = rng.standard_normal((m1 - m0 + 1, y_order + 1)) + 1j * rng.standard_normal(
        (m1 - m0 + 1, y_order + 1)
    )
    return BivariateJet(m0, c)


def random_t2i_diffeo(rng, y_order=5, window=(-2, 2)):
    """Random curve-chart diffeo tangent to identity along y = 0."""
    phi = JetDiffeo.identity(window, y_order)
    c1 = BivariateJet.zero((window[0], max(window[1], 1)), y_order)
    c1[1, 0] = 1.0
    c2 = BivariateJet.zero(window, y_order)
    c2[0, 1] = 1.0
    for m in range(window[0], window[1] + 1):
        for n in range(1, y_order + 1):
            c1[m, n] = 0.3 * (rng.standard_normal() + 1j * rng.standard_normal())
        for n in range(2, y_order + 1):
            c2[m, n] = 0.3 * (rng.standard_normal() + 1j * rng.standard_normal())
    return JetDiffeo(c1, c2, phi.chart)


class TestArithmetic:
    def test_polynomial_product(self):
        one_plus = BivariateJet.from_terms({(0, 0): 1, (0, 1): 1}, y_order=2)
        one_minus = BivariateJet.from_terms({(0, 0): 1, (0, 1): -1}, y_order=2)
        prod = jet_mul(one_plus, one_minus)
        assert prod[0, 0] == 1 and prod[0, 1] == 0 and prod[0, 2] == -1

    def test_additive_identity(self):
        rng = np.random.default_rng(0)
        jet = random_jet(rng)
        zero = BivariateJet.zero(jet.window, jet.y_order)
        total = jet_add(jet, zero)
        assert (total - jet).max_abs() == 0.0

    def test_laurent_product(self):
        f = BivariateJet.from_terms({(1, 0): 1, (-1, 0): 1})
        g = BivariateJet.from_terms({(1, 0): 1})
        prod = jet_mul(f, g).truncate((-1, 2), None)
        assert prod[2, 0] == 1 and prod[0, 0] == 1 and prod[1, 0] == 0

    def test_mul_associative_exact(self):
        rng = np.random.default_rng(1)
        a, b, c = (random_jet(rng, (-1, 2), 3) for _ in range(3))
        left = jet_mul(jet_mul(a, b), c)
        right = jet_mul(a, jet_mul(b, c))
        assert (left - right).max_abs() < 1e-12 * max(left.max_abs(), 1)

    def test_truncation_monotone(self):
        rng = np.random.default_rng(2)
        a = random_jet(rng, (-1, 1), 6)
        b = random_jet(rng, (-1, 1), 6)
        low = jet_mul(a.truncate(None, 3), b.truncate(None, 3))
        high = jet_mul(a, b).truncate(None, 3)
        assert (low - high).max_abs() == 0.0

    def test_eval_matches_coefficients(self):
        jet = BivariateJet.from_terms({(-1, 0): 2.0, (0, 1): 1j, (2, 2): -1.0})
        z, y = 0.5 + 0.1j, 0.2 - 0.3j
        expected = 2.0 / z + 1j * y + (-1.0) * z**2 * y**2
        assert abs(jet.eval(z, y) - expected) < 1e-14


class TestComposition:
    def test_identity_neutral(self):
        rng = np.random.default_rng(3)
        phi = random_t2i_diffeo(rng)
        ident = JetDiffeo.identity(y_order=phi.y_order)
        out = jet_compose(ident, phi)
        assert (out.comp1 - phi.comp1).max_abs() < 1e-13
        assert (out.comp2 - phi.comp2).max_abs() < 1e-13

    def test_flow_property(self):
        # (z, y/(1-ty)) composed with itself is (z, y/(1-2ty))
        t = 0.37 + 0.21j
        N = 7
        y = BivariateJet.variable_y(N)
        geom = BivariateJet.zero((0, 0), N)
        for n in range(N + 1):
            geom[0, n] = t**n
        phi = JetDiffeo(BivariateJet.variable_z(N), y * geom, "curve")
        twice = jet_compose(phi, phi)
        expect = BivariateJet.zero((0, 0), N)
        for n in range(N + 1):
            expect[0, n] = (2 * t) ** n
        expect = y * expect
        assert (twice.comp2 - expect).max_abs() < 1e-12
        assert (twice.comp1 - BivariateJet.variable_z(N)).max_abs() < 1e-13

    def test_compose_associative(self):
        rng = np.random.default_rng(4)
        a, b, c = (random_t2i_diffeo(rng, 4, (-1, 1)) for _ in range(3))
        left = jet_compose(jet_compose(a, b), c)
        right = jet_compose(a, jet_compose(b, c))
        win = (-6, 6)
        for l, r in ((left.comp1, right.comp1), (left.comp2, right.comp2)):
            assert (l.truncate(win, None) - r.truncate(win, None)).max_abs() < 1e-10


class TestInversion:
    def test_reversion_oracle(self):
        # (z, y + y^2): second component inverse is the Lagrange reversion of w = y + y^2
        N = 8
        phi = JetDiffeo(
            BivariateJet.variable_z(N),
            BivariateJet.from_terms({(0, 1): 1, (0, 2): 1}, y_order=N),
            "curve",
        )
        inv = invert_jet(phi)
        # brute-force reversion: catalan-style alternating coefficients
        coeffs = _revert_series([0.0, 1.0, 1.0], N)
        for n in range(1, N + 1):
            assert abs(inv.comp2[0, n] - coeffs[n]) < 1e-11

    def test_identity(self):
        ident = JetDiffeo.identity(y_order=5)
        inv = invert_jet(ident)
        assert inv.max_deviation_from_identity() < 1e-14

    def test_linear(self):
        phi = JetDiffeo(
            BivariateJet.from_terms({(1, 0): 2.0}, y_order=3),
            BivariateJet.from_terms({(0, 1): 3.0}, y_order=3),
            "curve",
        )
        inv = invert_jet(phi)
        assert abs(inv.comp1[1, 0] - 0.5) < 1e-15
        assert abs(inv.comp2[0, 1] - 1 / 3) < 1e-15

    def test_round_trip_random(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            phi = random_t2i_diffeo(rng, 5, (-1, 1))
            inv = invert_jet(phi)
            rt = jet_compose(phi, inv)
            assert rt.max_deviation_from_identity() < 1e-12


def _revert_series(coeffs, order):
    """Power-series reversion by naive fixed point (independent oracle)."""
    w = np.zeros(order + 1, dtype=complex)
    w[1] = 1.0 / coeffs[1]
    for _ in range(order + 2):
        # y = g(w(y)) with g from coeffs: iterate w <- (y - sum_{k>=2} c_k w^k)/c_1
        comp = np.zeros(order + 1, dtype=complex)
        powk = np.zeros(order + 1, dtype=complex)
        powk[0] = 1.0
        for k in range(1, len(coeffs)):
            powk = np.convolve(powk, w)[: order + 1]
            comp += coeffs[k] * powk
        target = np.zeros(order + 1, dtype=complex)
        target[1] = 1.0
        w = w + (target - comp) / coeffs[1]
    return w


class TestResidues:
    def test_log_y_part(self):
        # alpha * f1(Y) (dX/X)^dY --> res_X = alpha f1(Y)
        alpha = 2.0 - 1.0j
        f1 = BivariateJet.from_terms({(0, 1): 3.0, (0, 2): -1.0}, y_order=3)
        form = TwoFormJet(alpha * f1, pole_x=True, pole_y=False)
        res_x, res_y = corner_residues(form)
        assert (res_x - alpha * f1).max_abs() < 1e-14
        assert res_y.max_abs() == 0.0

    def test_holomorphic_form(self):
        form = TwoFormJet(BivariateJet.constant(1.0, (0, 1), 1))
        res_x, res_y = corner_residues(form)
        assert res_x.max_abs() == 0.0 and res_y.max_abs() == 0.0

    def test_both_poles(self):
        # (X + Y) (dX/X)^(dY/Y): numerator restrictions are Y and X
        W = BivariateJet.from_terms({(1, 0): 1.0, (0, 1): 1.0}, y_order=1)
        res_x, res_y = corner_residues(TwoFormJet(W, pole_x=True, pole_y=True))
        assert abs(res_x[0, 1] - 1.0) < 1e-15 and abs(res_x[0, 0]) == 0.0
        assert abs(res_y[1, 0] - 1.0) < 1e-15 and abs(res_y[0, 0]) == 0.0


class TestSerialization:
    def test_jet_bit_exact(self):
        rng = np.random.default_rng(6)
        jet = random_jet(rng, (-3, 4), 5)
        buf = io.StringIO()
        save_jet(jet, buf)
        buf.seek(0)
        back = load_jet(buf)
        assert back.window == jet.window and back.y_order == jet.y_order
        assert np.array_equal(back.coeffs, jet.coeffs)

    def test_diffeo_round_trip(self, tmp_path):
        rng = np.random.default_rng(7)
        phi = random_t2i_diffeo(rng, 4, (-1, 1))
        path = str(tmp_path / "phi.jet")
        save_diffeo(phi, path)
        back = load_diffeo(path)
        assert back.chart == phi.chart
        assert np.array_equal(back.comp1.coeffs, phi.comp1.coeffs)
        assert np.array_equal(back.comp2.coeffs, phi.comp2.coeffs)

    def test_bad_header(self):
        with pytest.raises(Exception):
            load_jet(io.StringIO("nope\n"))
