import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from apstab.apcalc import derivative
from apstab.evolve import LinearSystem, dopri5, rk_propagate
from apstab.scalar import (
    NotApplicable,
    ScalarEquation,
    StabilityConfig,
    ergodic_check,
    propagator,
    solve_resolvent,
    spectrum_report,
    stability_verdict,
    sup_propagator_bound,
)
from apstab.trigpoly import TrigPoly
from conftest import B2, SQ2, bounded_coefficient, decaying_coefficient, decaying_closed_form

ONE, R2 = B2.unit(0), B2.unit(1)
C = TrigPoly.constant
MN = math.exp(1 + 1 / SQ2)  # M = N for the quasi-periodic examples


@pytest.fixture(scope="module")
def eq2():
    return ScalarEquation(decaying_coefficient())


@pytest.fixture(scope="module")
def eq1():
    return ScalarEquation(bounded_coefficient())


class TestPropagator:
    def test_zero_coefficient(self):
        eq = ScalarEquation(TrigPoly.zero(B2))
        val, err = propagator(eq, 1.0, 5.0)
        assert val == 1 and err < 1e-15

    def test_closed_form(self, eq2):
        t = np.linspace(0, 20, 41)
        val, err = propagator(eq2, 0.0, t)
        expected = np.array([decaying_closed_form(x) for x in t])
        assert np.all(np.abs(val - expected) <= err + 1e-15 * expected)

    def test_matches_integrator(self, eq2):
        for t in (1.0, 5.0, 12.5, 20.0):
            x, _ = rk_propagate(LinearSystem.scalar(eq2.a), 0.0, t, [1.0], tol=1e-12)
            val, _ = propagator(eq2, 0.0, t)
            assert abs(x[0] - val) <= 1e-10 * abs(val)

    def test_almost_periodic_envelope(self, eq1):
        t = np.arange(0, 100.0001, 0.01)
        mod = np.abs(propagator(eq1, 0.0, t)[0])
        assert mod.min() >= math.exp(-(1 + 1 / SQ2)) - 1e-12
        assert mod.max() <= MN + 1e-12
        assert 0.18 <= mod.min() and mod.max() <= 5.52

    def test_cocycle(self, eq2):
        rng = np.random.default_rng(11)
        s, r, t = np.sort(rng.uniform(-20, 20, (3, 100)), axis=0)
        uts, _ = propagator(eq2, s, t)
        utr, _ = propagator(eq2, r, t)
        urs, _ = propagator(eq2, s, r)
        assert np.all(np.abs(utr * urs - uts) <= 1e-10 * np.abs(uts))

    def test_needs_forward_time(self, eq2):
        with pytest.raises(ValueError):
            propagator(eq2, 2.0, 1.0)


class TestSupBound:
    def test_decaying(self, eq2):
        b = sup_propagator_bound(eq2)
        assert b.status == "Bounded"
        assert b.bound == pytest.approx(math.exp(2 * (1 + 1 / SQ2)), rel=1e-12)
        assert b.bound == pytest.approx(30.4, abs=0.01)

    def test_growing(self):
        b = sup_propagator_bound(ScalarEquation(C(B2, 1.0) + TrigPoly.exp(ONE)))
        assert b.status == "Unbounded"

    def test_zero(self):
        assert sup_propagator_bound(ScalarEquation(TrigPoly.zero(B2))).bound == 1.0


class TestSpectrumReport:
    def test_two_positive_frequencies(self, eq1):
        rep = spectrum_report(eq1)
        assert rep.applicable and rep.route == "discrete-semimodule"
        assert rep.inclusion == "-i*Lambda U i*Lambda"
        assert rep.candidate(ONE + R2 * 2) and rep.candidate(-ONE)
        assert rep.candidate(R2 - ONE) is False

    def test_mean_extraction(self, eq2):
        rep = spectrum_report(eq2)
        assert rep.zero_in_spectrum
        assert rep.module_check.status == "Module"
        assert rep.route == "mean-extraction" and rep.inclusion == "i*Lambda"

    def test_inapplicable(self):
        rep = spectrum_report(ScalarEquation(TrigPoly.exp(-ONE) + TrigPoly.exp(R2)))
        assert rep.discreteness.status == "NonDiscrete"
        assert not rep.applicable and rep.inclusion is None
        assert rep.candidate(ONE) is None


class TestResolvent:
    def test_constant_equation(self):
        eq = ScalarEquation(C(B2, -1.0))
        sol = solve_resolvent(eq, 0.0, C(B2, 1.0))
        assert sol.u.approx.allclose(C(B2, 1.0), atol=1e-14)

    def test_rotating_forcing(self):
        eq = ScalarEquation(C(B2, -1.0))
        sol = solve_resolvent(eq, 1j, TrigPoly.exp(ONE))
        assert sol.u.approx.allclose(TrigPoly.exp(ONE, 1 / (1 + 2j)), atol=1e-14)
        assert sol.residual_bound < 1e-14

    def test_quasiperiodic_bound_and_residual(self, eq2):
        sol = solve_resolvent(eq2, 0.0, C(B2, 1.0))
        assert sol.u.sup_bound() <= MN * MN
        t = np.linspace(0, 50, 200)
        r = sol.residual(eq2).eval(t)
        assert np.max(np.abs(r)) <= sol.residual_bound + 1e-15
        assert sol.residual_bound <= 1e-6

    def test_solution_matches_integrator(self, eq2):
        sol = solve_resolvent(eq2, 0.0, C(B2, 1.0))
        a = eq2.a

        def rhs(t, y):
            return a.eval(t) * y + 1.0

        tr = dopri5(rhs, 0.0, 10.0, np.array([sol.u.eval(0.0)]), atol=1e-13, rtol=1e-12,
                    t_eval=np.linspace(0, 10, 21))
        assert np.max(np.abs(tr.states[:, 0] - sol.u.eval(tr.times))) < 1e-8

    def test_left_of_mean_rejected(self, eq2):
        with pytest.raises(NotApplicable):
            solve_resolvent(eq2, -3.0, C(B2, 1.0))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(-2, 2), st.integers(-2, 2), st.floats(0.0, 2.0), st.floats(-2, 2),
           st.integers(-2, 2), st.integers(-2, 2))
    def test_translation_covariance(self, i, j, re_mu, im_mu, fi, fj):
        eq = ScalarEquation(decaying_coefficient())
        lam = B2.freq(i, j)  # element of the module Z + Z sqrt(2)
        mu = complex(re_mu, im_mu)
        f = TrigPoly.exp(B2.freq(fi, fj)) + C(B2, 0.5)
        u = solve_resolvent(eq, mu, f, with_residual=False).u.approx
        shifted = TrigPoly.exp(lam) * u
        mu_shift = mu - 1j * float(lam)
        resid = derivative(shifted) - (eq.a - mu_shift) * shifted - TrigPoly.exp(lam) * f
        assert resid.l1_norm() <= 1e-8


class TestErgodic:
    def test_quasiperiodic_constant_forcing(self, eq2):
        res = ergodic_check(eq2, 0.0, C(B2, 1.0), [1.0, 0.1, 0.01])
        assert res.passed
        assert all(v <= a * (MN + 2 * MN * MN) for a, v in zip(res.alphas, res.values))
        assert list(res.values) == sorted(res.values, reverse=True)

    def test_constant_equation_values(self):
        eq = ScalarEquation(C(B2, -1.0))
        res = ergodic_check(eq, 0.0, C(B2, 1.0), [1.0, 0.1, 0.01])
        assert res.passed
        assert np.allclose(res.values, [a / (1 + a) for a in res.alphas], rtol=1e-12)

    @pytest.mark.parametrize("lam, f", [(1j, C(B2, 1.0)), (0.0, TrigPoly.exp(ONE))])
    def test_resonant_rotation_fails(self, lam, f):
        eq = ScalarEquation(C(B2, 1j))
        res = ergodic_check(eq, lam, f, [1.0, 0.1, 0.01])
        assert not res.passed
        assert np.allclose(res.values, 1.0, rtol=1e-12)

    def test_rotation_off_resonance_passes(self):
        # u = e^{it} / (alpha + i) for a = i, lam = i, f = e^{it}: alpha |u| -> 0
        eq = ScalarEquation(C(B2, 1j))
        res = ergodic_check(eq, 1j, TrigPoly.exp(ONE), [1.0, 0.1, 0.01])
        assert res.passed
        assert np.allclose(res.values, [a / abs(a + 1j) for a in res.alphas], rtol=1e-12)

    def test_bad_alphas(self, eq2):
        with pytest.raises(ValueError):
            ergodic_check(eq2, 0.0, C(B2, 1.0), [1.0, 0.0])


class TestVerdict:
    def test_strongly_stable(self, eq2):
        v = stability_verdict(eq2)
        assert v.status == "StronglyStable"
        for name in ("bounded-propagator", "countable-imaginary-spectrum", "ergodic-limit"):
            assert v.record(name).passed
        x, _ = rk_propagate(LinearSystem.scalar(eq2.a), 0.0, 10 / abs(eq2.mu0.real), [1.0])
        assert abs(x[0]) < 1e-4

    def test_bounded_almost_periodic(self, eq1):
        v = stability_verdict(eq1)
        assert v.status == "BoundedAlmostPeriodic"
        t = np.arange(0, 100.0001, 0.05)
        tr = dopri5(LinearSystem.scalar(eq1.a).rhs(), 0.0, 100.0, np.array([1.0]), t_eval=t)
        assert np.max(np.abs(tr.states)) <= sup_propagator_bound(eq1).bound

    def test_unbounded(self):
        v = stability_verdict(ScalarEquation(C(B2, 1.0) + TrigPoly.exp(ONE)))
        assert v.status == "Unbounded"
        assert not v.record("bounded-propagator").passed

    def test_inapplicable_spectrum_never_asserted(self):
        a = TrigPoly.exp(-ONE) + TrigPoly.exp(R2) + C(B2, -1.0)
        v = stability_verdict(ScalarEquation(a))
        rec = v.record("countable-imaginary-spectrum")
        assert rec.evidence["route"] in ("mean-extraction", "none")
        if rec.evidence["route"] == "none":
            assert v.status != "StronglyStable"

    def test_failing_trend_rule_blocks_verdict(self, eq2):
        from apstab.records import TrendRule
        cfg = StabilityConfig(alphas=(1.0, 0.5), rule=TrendRule())
        v = stability_verdict(eq2, cfg)
        assert v.status == "Inconclusive"
        assert not v.record("ergodic-limit").passed
