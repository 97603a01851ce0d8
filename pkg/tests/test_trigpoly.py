import math

import numpy as np
import pytest
from hypothesis import given, settings
from scipy.integrate import quad

from apstab.freqlat import SemiModule
from apstab.trigpoly import (
    CertificationFailed,
    ShapeMismatch,
    TrigPoly,
    algebra,
    bohr_mean,
    bohr_spectrum,
    certify_in_lambda,
)
from conftest import B2, bounded_coefficient, decaying_coefficient, sample_times, trig_polys

ONE, R2 = B2.unit(0), B2.unit(1)
SQ2 = math.sqrt(2)


def direct_eval(p, t):
    """Reference evaluation term by term from exact frequencies."""
    return sum(c * np.exp(1j * float(f) * t) for f, c in p.terms())


class TestEval:
    def test_sum_of_exponentials_at_zero(self):
        assert bounded_coefficient().eval(0.0) == pytest.approx(2.0)

    def test_quasiperiodic_coefficient_at_zero(self):
        assert abs(decaying_coefficient().eval(0.0)) < 1e-15

    def test_quarter_turn(self):
        assert abs(TrigPoly.exp(ONE).eval(math.pi / 2) - 1j) < 1e-12

    def test_vectorised_matches_direct(self):
        p = decaying_coefficient()
        t = sample_times(50)
        expected = np.cos(t) + np.cos(SQ2 * t) - 2
        assert np.allclose(p.eval(t), expected, atol=1e-13)

    def test_error_bound_covers_rounding(self):
        p = TrigPoly.exp(R2 * 1000, 3.0) + TrigPoly.exp(ONE * 7, -1j)
        t = np.linspace(0, 1e4, 101)
        val, err = p.eval_with_error(t)
        import mpmath
        mpmath.mp.dps = 40
        exact = [3 * mpmath.expj(1000 * mpmath.sqrt(2) * mpmath.mpf(float(x)))
                 - 1j * mpmath.expj(7 * mpmath.mpf(float(x))) for x in t]
        diff = np.array([abs(complex(v) - complex(e)) for v, e in zip(val, exact)])
        assert np.all(diff <= err)

    def test_matrix_eval(self):
        A = TrigPoly.from_entries([[TrigPoly.cos(ONE), TrigPoly.constant(B2, 1.0)],
                                   [TrigPoly.constant(B2, 0.0), TrigPoly.sin(R2)]])
        M = A.eval(0.3)
        assert np.allclose(M, [[math.cos(0.3), 1], [0, math.sin(0.3 * SQ2)]])


class TestAlgebra:
    def test_cancellation(self):
        p = TrigPoly.exp(ONE) * TrigPoly.exp(-ONE)
        assert p == TrigPoly.constant(B2, 1.0)
        assert p.frequencies() == [B2.zero()]

    def test_square_of_two_exponentials(self):
        p = bounded_coefficient() ** 2
        expected = TrigPoly.from_terms(B2, [(ONE * 2, 1.0), (ONE + R2, 2.0), (R2 * 2, 1.0)])
        assert p == expected
        t = np.linspace(-5, 5, 10)
        assert np.allclose(p.eval(t), (np.exp(1j * t) + np.exp(1j * SQ2 * t)) ** 2, atol=1e-12)

    def test_real_part(self):
        assert algebra(TrigPoly.exp(ONE), None, "real_part") == TrigPoly.cos(ONE)

    def test_dispatch(self):
        p, q = TrigPoly.exp(ONE), TrigPoly.exp(R2)
        assert algebra(p, q, "add") == p + q
        assert algebra(p, q, "mul") == p * q
        assert algebra(p, None, "scale", 2j) == p.scale(2j)
        assert algebra(p, None, "conjugate") == TrigPoly.exp(-ONE)
        with pytest.raises(ValueError):
            algebra(p, q, "divide")

    def test_zero_coefficients_dropped(self):
        p = TrigPoly.exp(ONE) - TrigPoly.exp(ONE)
        assert len(p) == 0 and p.is_zero()

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            TrigPoly.constant(B2, np.ones(2)) + TrigPoly.constant(B2, np.ones(3))

    def test_matrix_product(self):
        A = TrigPoly.exp(ONE, np.array([[0, 1], [0, 0]], dtype=complex))
        v = TrigPoly.exp(R2, np.array([1.0, 2.0]))
        w = A @ v
        assert w == TrigPoly.exp(ONE + R2, np.array([2.0, 0.0]))

    def test_large_product_matches_direct(self):
        # big enough to use the FFT route
        rng = np.random.default_rng(3)
        terms = [(B2.freq(int(a), int(b)), complex(*rng.normal(size=2)))
                 for a, b in rng.integers(-40, 40, size=(120, 2))]
        p = TrigPoly.from_terms(B2, terms)
        q = p.conjugate()
        pq = p * q
        t = np.linspace(-3, 3, 7)
        assert np.allclose(pq.eval(t), p.eval(t) * q.eval(t), atol=1e-9 * p.l1_norm() ** 2)

    @settings(max_examples=60, deadline=None)
    @given(trig_polys(), trig_polys(), trig_polys())
    def test_ring_axioms(self, p, q, r):
        assert (p + q).allclose(q + p)
        assert (p * q).allclose(q * p)
        assert ((p + q) + r).allclose(p + (q + r))
        assert ((p * q) * r).allclose(p * (q * r), atol=1e-10)
        assert (p * (q + r)).allclose(p * q + p * r, atol=1e-10)

    @settings(max_examples=60, deadline=None)
    @given(trig_polys(), trig_polys())
    def test_spectrum_of_sum_and_product(self, p, q):
        sp, sq = bohr_spectrum(p), bohr_spectrum(q)
        assert bohr_spectrum(p + q) <= sp | sq
        assert bohr_spectrum(p * q) <= {a + b for a in sp for b in sq}

    @settings(max_examples=200, deadline=None)
    @given(trig_polys(), trig_polys())
    def test_eval_respects_product(self, p, q):
        t = sample_times(5, seed=len(p) + 7 * len(q))
        vp, ep = p.eval_with_error(t)
        vq, eq = q.eval_with_error(t)
        vpq, epq = (p * q).eval_with_error(t)
        slack = ep * np.abs(vq) + eq * np.abs(vp) + ep * eq + epq
        slack = slack + 64 * np.finfo(float).eps * (p.l1_norm() * q.l1_norm())
        assert np.all(np.abs(vpq - vp * vq) <= slack)


class TestBohr:
    def test_mean_of_constant_part(self):
        assert bohr_mean(decaying_coefficient(), B2.zero()) == pytest.approx(-2.0)

    def test_mean_at_absent_frequency(self):
        assert bohr_mean(TrigPoly.exp(ONE), R2) == 0

    def test_mean_against_quadrature(self):
        T = 200.0
        re = quad(lambda t: math.cos(t) * math.cos(t), -T, T, limit=2000)[0]
        im = quad(lambda t: -math.sin(t) * math.cos(t), -T, T, limit=2000)[0]
        numeric = complex(re, im) / (2 * T)
        exact = bohr_mean(TrigPoly.cos(ONE), ONE)
        assert abs(numeric - exact) < 5e-3

    def test_spectra(self):
        assert bohr_spectrum(decaying_coefficient()) == {B2.zero(), ONE, -ONE, R2, -R2}
        assert bohr_spectrum(bounded_coefficient()) == {ONE, R2}
        assert bohr_spectrum(TrigPoly.zero(B2)) == frozenset()

    @settings(max_examples=60, deadline=None)
    @given(trig_polys())
    def test_mean_nonzero_iff_in_spectrum(self, p):
        spec = bohr_spectrum(p)
        for c in [(0, 0), (1, 0), (0, 1), (-1, 2), (3, -3)]:
            f = B2.freq(*c)
            assert (bohr_mean(p, f) != 0) == (f in spec)


class TestCertificate:
    def test_constant(self):
        cert = certify_in_lambda(TrigPoly.constant(B2, 4.0), SemiModule.generated_by([ONE]), 3)
        assert cert.witnesses[B2.zero()].witness == (0,)

    def test_member_frequency(self):
        cert = certify_in_lambda(TrigPoly.exp(ONE + R2), SemiModule.generated_by([ONE, R2]), 2)
        assert cert.witnesses[ONE + R2].member

    def test_negative_frequency_fails_exactly(self):
        with pytest.raises(CertificationFailed) as info:
            certify_in_lambda(TrigPoly.exp(-ONE), SemiModule.generated_by([ONE, R2]), 10)
        assert info.value.exact == [True]

    def test_products_stay_certified(self):
        lam = SemiModule.generated_by([ONE, R2])
        p = TrigPoly.exp(ONE) + TrigPoly.constant(B2, 2.0)
        q = TrigPoly.exp(R2, 1j)
        certify_in_lambda(p, lam, 2)
        certify_in_lambda(q, lam, 2)
        certify_in_lambda(p * q, lam, 4)
