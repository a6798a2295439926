import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wanderlab.blaschke import BlaschkeFactor, FactorSchedule
from wanderlab.errors import PoleError, PreconditionError, StructuralError
from wanderlab.surgery import (
    JoukowskiMap,
    MuRule,
    SurgerySchedule,
    audit_no_revisit,
    certify_product,
    cond1_bound,
    cond1_triangle_bound,
    cond2_blaschke_bound,
    cond2_gamma_bound,
    cond2_gamma_sweep,
    interpolation_constant,
    omega_samples,
    surround_check,
    theta_sweep,
)
from wanderlab.wander import EpsilonRule


def reference_schedule(**kw):
    return SurgerySchedule(FactorSchedule.geometric(0.25), MuRule("geometric", 10.0, 2.0), **kw)


class TestJoukowski:
    def test_lambda_example(self):
        j = JoukowskiMap(100.0, 0.1)
        assert j.rho == pytest.approx(10.0)
        assert j.lam == pytest.approx(100 * 0.01 / 99, rel=1e-15)
        assert j.lam * (j.rho - 1 / j.rho) == pytest.approx(0.1, abs=1e-15)

    def test_semi_axes_from_sweep(self):
        j = JoukowskiMap(50.0, 0.1)
        big, small = j.semi_axes
        mod = lambda t: np.abs(j(j.r * np.exp(1j * t)))
        assert theta_sweep(mod, mode="max").value == pytest.approx(big, abs=1e-10)
        assert theta_sweep(mod, mode="min").value == pytest.approx(small, abs=1e-10)

    def test_pole(self):
        with pytest.raises(PoleError):
            JoukowskiMap(20.0, 0.1)(0)

    def test_needs_mu_r_above_one(self):
        with pytest.raises(PreconditionError):
            JoukowskiMap(5.0, 0.1)

    def test_log_ratio_matches_direct(self):
        j = JoukowskiMap(30.0, 0.1, eta=0.02)
        z = 0.1 * np.exp(1j * np.linspace(0, 6, 7))
        assert np.allclose(np.exp(j.log_ratio(z)), j(z) / z, rtol=1e-13)


class TestCond2:
    @pytest.mark.parametrize("rho, expected", [(2.0, 2 / 3), (10.0, 2 / 99)])
    def test_closed_form(self, rho, expected):
        j = JoukowskiMap(rho / 0.1, 0.1)
        assert cond2_gamma_bound(j) == pytest.approx(expected, rel=1e-14)
        sw = cond2_gamma_sweep(j)
        assert sw.value == pytest.approx(expected, abs=1e-9)
        assert abs(sw.argext - math.pi / 2) < 1e-3

    def test_sweep_matches_quotient_form(self):
        j = JoukowskiMap(30.0, 0.1, eta=0.05)
        t = np.linspace(0, np.pi, 100001)
        z = j.r * np.exp(1j * t)
        direct = np.max(np.abs(z * j.derivative(z) / j(z) - 1.0))
        assert cond2_gamma_sweep(j).value == pytest.approx(direct, rel=1e-9)

    def test_sweep_relative_accuracy_large_rho(self):
        j = JoukowskiMap(1e7, 0.1)
        assert cond2_gamma_sweep(j).value == pytest.approx(cond2_gamma_bound(j), rel=1e-14)

    def test_blaschke_near_one_is_small(self):
        assert cond2_blaschke_bound(BlaschkeFactor.from_deficit(1e-6), 0.2) < 1e-4

    def test_blaschke_product_rule_path(self):
        a, rp = 0.5, 0.2
        f = BlaschkeFactor(a)
        t = np.linspace(0, 2 * np.pi, 200001)
        z = rp * np.exp(1j * t)
        naive = np.max(np.abs(z * (1 / z + 1 / (z + a) - a / (1 + a * z)) - 1))
        assert cond2_blaschke_bound(a, rp) == pytest.approx(naive, abs=1e-10)
        assert np.max(np.abs(z * f.derivative(z) / f(z) - 1)) == pytest.approx(naive, abs=1e-10)

    def test_blaschke_stable_under_doubling(self):
        v1 = cond2_blaschke_bound(0.7, 0.2, samples=1024)
        v2 = cond2_blaschke_bound(0.7, 0.2, samples=2048)
        assert v1 == pytest.approx(v2, abs=1e-10)

    def test_budget_inflates(self):
        assert cond2_blaschke_bound(0.9, 0.2, 1e-4) > cond2_blaschke_bound(0.9, 0.2)


class TestCond1:
    def test_tiny_deficit(self):
        f = BlaschkeFactor.from_deficit(1e-8)
        assert cond1_bound(f, JoukowskiMap(1e5, 0.1), 0.2) < 1e-3

    def test_triangle_dominates(self):
        j = JoukowskiMap(1000.0, 0.1)
        for a in (0.9, 0.99, 0.999):
            assert cond1_triangle_bound(a, j, 0.2) >= cond1_bound(a, j, 0.2) - 1e-12

    def test_doubling(self):
        j = JoukowskiMap(1000.0, 0.1)
        v1 = cond1_bound(0.999, j, 0.2, samples=2048)
        v2 = cond1_bound(0.999, j, 0.2, samples=4096)
        assert v1 == pytest.approx(v2, abs=1e-9)

    def test_second_zero_inside_is_structural(self):
        with pytest.raises(StructuralError):
            cond1_bound(0.1, JoukowskiMap(100.0, 0.1), 0.2)


class TestInterpolation:
    def test_identity(self):
        assert interpolation_constant(0.0, 0.0, 0.1, 0.2) == (1.0, 1.0)

    def test_boundary(self):
        C, K = interpolation_constant(2 * math.log(2.0), 0.0, 0.1, 0.2, k=2)
        assert abs(C) < 1e-12

    def test_example(self):
        C, K = interpolation_constant(0.01, 0.02, 0.1, 0.2)
        expected = 1 - (0.01 / math.log(2) + 0.02)
        assert C == pytest.approx(expected, rel=1e-15)
        assert K == pytest.approx(1 / expected, rel=1e-15)

    def test_infeasible_has_no_K(self):
        assert interpolation_constant(1.0, 0.5, 0.1, 0.2)[1] is None

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0, 0.3), st.floats(0, 0.3), st.floats(0, 0.1), st.floats(0, 0.1))
    def test_monotone_in_deltas(self, d0, d1, e0, e1):
        C_a, _ = interpolation_constant(d0, d1, 0.1, 0.2)
        C_b, _ = interpolation_constant(d0 + e0, d1 + e1, 0.1, 0.2)
        assert C_b <= C_a + 1e-15

    def test_bad_radii(self):
        with pytest.raises(PreconditionError):
            interpolation_constant(0, 0, 0.2, 0.1)


class TestCertify:
    def test_degenerate_is_trivial(self):
        s = SurgerySchedule(FactorSchedule.constant(1 - 1e-15), MuRule("constant", 1e9),
                            epsilon=EpsilonRule("zero"))
        rep = certify_product(s, 12, theta_samples=512)
        assert all(rec["C"] > 0 for rec in rep.records)
        assert rep.K_infinity_partial == pytest.approx(1.0, abs=1e-6)

    def test_reference_certified(self):
        rep = certify_product(reference_schedule(), 40)
        assert rep.certified and rep.tail_bound < 1e-6
        K = [rec["K"] for rec in rep.records]
        assert all(k >= 1 for k in K)
        assert all(x >= y for x, y in zip(K[-20:], K[-19:]))

    def test_partial_product_grows(self):
        s = reference_schedule()
        p = [certify_product(s, N, theta_samples=512).K_infinity_partial for N in (8, 12)]
        assert p[1] >= p[0]

    def test_constant_is_infeasible(self):
        s = SurgerySchedule(FactorSchedule.constant(0.5), MuRule("geometric", 10.0, 2.0))
        rep = certify_product(s, 10, theta_samples=512)
        assert not rep.certified
        assert rep.infeasible_index == 5

    def test_csv_header(self):
        rep = certify_product(reference_schedule(), 7, theta_samples=256)
        assert rep.to_csv().splitlines()[0] == "n,delta0,delta1,C,K"
        assert len(rep.to_csv().splitlines()) == 4


class TestSurround:
    def test_touches(self):
        j = JoukowskiMap(100.0, 0.1)
        assert surround_check(j, 0.1)[1] == "touches"

    def test_eta_surrounds(self):
        j = JoukowskiMap(100.0, 0.1, eta=0.01)
        m, verdict = surround_check(j, 0.1)
        assert verdict == "surrounds" and m == pytest.approx(0.101, rel=1e-9)

    def test_shrunken_fails(self):
        j = JoukowskiMap(100.0, 0.1)
        assert surround_check(j, 0.1 / 0.99)[1] == "fails"


class TestAudit:
    def test_reference_visits_at_most_once(self, rng):
        s = reference_schedule()
        c = s.model.center(s.start_index)
        pts = c + 0.5 * np.sqrt(rng.random(60)) * np.exp(2j * np.pi * rng.random(60))
        rep = audit_no_revisit(s, pts, 30)
        assert rep.max_visits.max() <= 1
        assert rep.summary()["samples"] == 60

    def test_base_orbit_is_pole_capture(self):
        s = reference_schedule()
        rep = audit_no_revisit(s, [s.model.center(s.start_index)], 10)
        assert rep.status == ["pole"]

    def test_omega_never_enters(self, rng):
        s = reference_schedule()
        pts = omega_samples(s, 40, 30, rng)
        assert pts is not None
        rep = audit_no_revisit(s, pts, 30)
        assert not rep.entered_any().any()
