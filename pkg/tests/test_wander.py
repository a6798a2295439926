import math

import numpy as np
import pytest

from wanderlab.blaschke import BlaschkeFactor, CompositionState, FactorSchedule, compose, evaluate_factor
from wanderlab.errors import DomainError, IllConditionedError, PreconditionError
from wanderlab.hypgeo import disc_distance
from wanderlab.wander import (
    ChainModel,
    EpsilonRule,
    OrbitPairTrace,
    Perturbation,
    RadiiRule,
    classify,
    degree_check,
    equicontinuity_gap,
    invariance_check,
    landau_check,
    model_step,
    pair_trace,
    trace_csv,
    u_field,
)

GEOM = FactorSchedule.geometric(0.25)


def const_model(a, **kw):
    return ChainModel(FactorSchedule.constant(a), **kw)


class TestModel:
    def test_base_orbit(self):
        m = ChainModel(GEOM)
        z = 0j
        for n in range(20):
            z = model_step(m, n, z)
            assert z == 4 * (n + 1)

    def test_squaring_example(self):
        assert model_step(ChainModel(FactorSchedule.trivial()), 0, 0.5) == pytest.approx(4.25)

    def test_affine_composition_example(self):
        m = const_model(0.5)
        expected = 12 + evaluate_factor(BlaschkeFactor(0.5), 0.5)
        assert model_step(m, 2, 8.5) == pytest.approx(expected, abs=1e-14)
        assert expected == pytest.approx(12.4)

    def test_outside_disc(self):
        m = ChainModel(GEOM)
        with pytest.raises(DomainError):
            model_step(m, 1, 4 + 1.1j)

    def test_radii_invariants(self):
        for sched in (GEOM, FactorSchedule.harmonic()):
            m = ChainModel(sched)
            inner = [m.inner_radius(n) for n in range(30)]
            outer = [m.outer_radius(n) for n in range(30)]
            assert all(0 < r < 1 < R for r, R in zip(inner, outer))
            assert all(b >= a for a, b in zip(inner, inner[1:]))
            assert all(b <= a for a, b in zip(outer, outer[1:]))
        g = RadiiRule("geometric")
        assert g.gaps(GEOM, 0) == pytest.approx((0.1, 0.1))

    def test_budget_respected(self, rng):
        m = ChainModel(GEOM, perturbation=Perturbation(degree=4, seed=3))
        for n in (0, 3, 8):
            R = m.outer_radius(n)
            ring = R * np.exp(2j * np.pi * np.arange(512) / 512)
            pert = m.local_step(n, ring) - GEOM.factor(n + 1)(ring)
            # maximum modulus: the sup over the closed disc is attained on the circle
            assert np.max(np.abs(pert)) <= m.budget(n)
            gi, go = m.gaps(n + 1)
            assert m.budget(n) < (gi + go) / 4

    def test_budget_violation_detected(self):
        m = ChainModel(GEOM, perturbation=Perturbation(epsilon=EpsilonRule("geometric", scale=1.0, q=0.9)))
        with pytest.raises(DomainError):
            m.budget(3)

    def test_perturbation_is_seeded(self):
        a = ChainModel(GEOM, perturbation=Perturbation(seed=1))
        b = ChainModel(GEOM, perturbation=Perturbation(seed=1))
        c = ChainModel(GEOM, perturbation=Perturbation(seed=2))
        z = 0.3 + 0.2j
        assert a.local_step(2, z) == b.local_step(2, z)
        assert a.local_step(2, z) != c.local_step(2, z)

    def test_image_stays_in_next_disc(self, rng):
        m = ChainModel(GEOM, perturbation=Perturbation())
        for n in range(10):
            r = m.inner_radius(n)
            pts = r * np.sqrt(rng.random(300)) * np.exp(2j * np.pi * rng.random(300))
            img = m.local_step(n, pts)
            assert np.all(np.abs(img) < m.outer_radius(n + 1))


class TestTrace:
    def test_equal_points(self):
        tr = pair_trace(ChainModel(GEOM), 0.3, 0.3, 20)
        assert np.all(tr.values == 0)

    def test_matches_disc_composition(self, rng):
        m = ChainModel(FactorSchedule.harmonic())
        for _ in range(10):
            z0, w = 0.9 * np.sqrt(rng.random(2)) * np.exp(2j * np.pi * rng.random(2))
            tr = pair_trace(m, z0, w, 30)
            direct = [disc_distance(compose(m.schedule, n, z0), compose(m.schedule, n, w)) for n in range(31)]
            assert np.max(np.abs(tr.values - direct)) < 1e-12

    def test_absolute_coordinates_path(self):
        m = ChainModel(GEOM)
        z, w = 0.4 + 0.1j, -0.3j
        tr = pair_trace(m, z, w, 25)
        for n in range(25):
            z, w = model_step(m, n, z), model_step(m, n, w)
        u = disc_distance(z - m.center(25), w - m.center(25))
        assert abs(u - tr.values[25]) < 1e-12

    def test_bracket_contains_exact(self, rng):
        m = ChainModel(GEOM)
        for _ in range(10):
            z0, w = 0.9 * np.sqrt(rng.random(2)) * np.exp(2j * np.pi * rng.random(2))
            ex = pair_trace(m, z0, w, 40)
            br = pair_trace(m, z0, w, 40, mode="bracketed")
            assert np.all(br.lower <= ex.values + 1e-12)
            ok = ~np.isnan(br.upper)
            assert np.all(ex.values[ok] <= br.upper[ok] + 1e-12)

    def test_monotone(self, rng):
        m = ChainModel(FactorSchedule.constant(0.7))
        tr = pair_trace(m, 0.5, -0.6j, 80)
        assert np.all(np.diff(tr.values) <= 1e-12)
        assert np.all(tr.values >= 0)

    def test_exact_mode_rejects_perturbation(self):
        m = ChainModel(GEOM, perturbation=Perturbation())
        with pytest.raises(PreconditionError):
            pair_trace(m, 0.1, 0.2, 5)
        br = pair_trace(m, 0.1, 0.2, 5, mode="bracketed")
        assert br.values is None and len(br.lower) == 6

    def test_bad_mode_and_outside(self):
        with pytest.raises(PreconditionError):
            pair_trace(ChainModel(GEOM), 0.1, 0.2, 5, mode="fuzzy")
        with pytest.raises(DomainError):
            pair_trace(ChainModel(GEOM), 1.2, 0.2, 5)

    def test_escape_truncates(self):
        # a perturbation far beyond the budget rule pushes points outside
        m = ChainModel(FactorSchedule.constant(0.5), radii=RadiiRule(scale=0.01))

        class Loose(ChainModel):
            def local_step(self, n, zeta, mp=False):
                return 1.5 * zeta

        loose = Loose(m.schedule, radii=m.radii)
        tr = pair_trace(loose, 0.8, 0.9, 10)
        assert tr.escape_index == 1
        assert len(tr.values) == 1

    def test_collision_reported(self):
        # -a is a second preimage of 0, so the two orbits meet after one step
        m = const_model(0.5)
        tr = pair_trace(m, 0.0, -0.5, 10)
        assert tr.collision_index == 1
        assert np.all(tr.values[1:] == 0)

    def test_mp_agrees_with_double(self):
        m = ChainModel(GEOM)
        a = pair_trace(m, 0.2, 0.5, 20)
        b = pair_trace(m, 0.2, 0.5, 20, precision="auto")
        assert b.digits >= 30
        assert np.max(np.abs(a.values - b.values)) < 1e-13
        assert b.resolution < 1e-20

    def test_csv(self):
        csv = trace_csv(pair_trace(ChainModel(GEOM), 0.2, 0.5, 2))
        lines = csv.splitlines()
        assert lines[0] == "n,u_lower,u_exact,u_upper"
        assert lines[1].startswith("0,,0.693147180559945")
        br = trace_csv(pair_trace(ChainModel(GEOM), 0.2, 0.5, 2, mode="bracketed"))
        assert br.splitlines()[1].split(",")[2] == ""


class TestClassify:
    def test_constant_trace(self):
        v = classify([0.7] * 120)
        assert v.kind == "eventually_isometric" and v.isometry_onset == 0
        assert v.limit_estimate == 0.7

    def test_geometric_decay(self):
        v = classify(2.0 ** -np.arange(120))
        assert v.kind == "contracting" and v.limit_estimate == 0

    def test_strict_decrease_to_positive_limit(self):
        n = np.arange(41)
        v = classify(0.4 + 2.0**-n, window=10)
        assert v.kind == "semi_contracting"
        # Aitken removes the geometric tail exactly
        assert v.limit_estimate == pytest.approx(0.4, abs=1e-15)

    def test_flat_after_onset(self):
        u = np.concatenate([1 + 2.0 ** -np.arange(15), np.full(100, 1 + 2.0**-15)])
        v = classify(u)
        assert v.kind == "eventually_isometric" and v.isometry_onset == 15

    def test_undecided(self):
        # a long plateau followed by renewed decrease fits none of the three shapes
        u = np.concatenate([np.full(60, 2.0), 1 + 0.01 * np.arange(60, 0, -1)])
        v = classify(u, window=50)
        assert v.kind == "undecided"

    def test_short_horizon(self):
        with pytest.raises(PreconditionError):
            classify([1.0] * 50, window=50)

    def test_semi_example_from_model(self):
        tr = pair_trace(ChainModel(GEOM), 0.2, 0.5, 60, precision="auto")
        v = classify(tr, window=10, eps_flat=tr.resolution)
        assert v.kind == "semi_contracting" and v.limit_estimate > 0

    def test_verdict_json(self):
        import json

        rec = json.loads(classify([0.7] * 120).to_json())
        assert set(rec) == {"kind", "limit_estimate", "isometry_onset", "horizon", "eps_contract", "eps_flat", "window"}


class TestField:
    def test_single_point(self):
        f = u_field(ChainModel(GEOM), 0.2, [0.2], 10)
        assert f.values[0] == 0

    def test_gaps_monotone_and_positive(self):
        xs = np.linspace(-0.6, 0.6, 9)
        grid = (xs[None, :] + 1j * xs[:, None]).ravel()
        grid = grid[np.abs(grid - 0.2) > 1e-9]
        f = u_field(ChainModel(GEOM), 0.2, grid, 60)
        assert f.gap_violations() == 0
        assert f.values.min() > 0
        assert len(f.gaps) == 61

    def test_grand_orbit_zero(self):
        # -a_1 - z0-type preimages: b_1(w) = b_1(z0) for w the other root
        a = GEOM.a(1)
        z0 = 0.2
        target = z0 * (z0 + a) / (1 + a * z0)
        # w solves w (w + a) = target (1 + a w)
        coeffs = [1, a - a * target, -target]
        w = [r for r in np.roots(coeffs) if abs(r - z0) > 1e-6][0]
        f = u_field(ChainModel(GEOM), z0, [w, 0.5], 40)
        assert f.values[0] < 1e-10 and f.values[1] > 0.1

    def test_equicontinuity(self, rng):
        grid = 0.8 * np.sqrt(rng.random(40)) * np.exp(2j * np.pi * rng.random(40))
        assert equicontinuity_gap(ChainModel(FactorSchedule.harmonic()), 0.1, grid, 40) <= 1e-12

    def test_invariance(self, rng):
        grid = 0.8 * np.sqrt(rng.random(50)) * np.exp(2j * np.pi * rng.random(50))
        assert invariance_check(ChainModel(GEOM), 0.2, [0.2], 10) == 0
        assert invariance_check(ChainModel(GEOM), 0.2, grid, 60) < 1e-10
        pert = ChainModel(GEOM, perturbation=Perturbation())
        assert invariance_check(pert, 0.2, grid, 60) < 1e-10


class TestLandau:
    def test_guaranteed_arithmetic(self):
        rep = landau_check(BlaschkeFactor(0.5), 256)
        assert rep.guaranteed_radius == pytest.approx(2 * 0.433 * math.tanh(0.5) * 0.5, rel=1e-15)
        assert rep.guaranteed_radius == pytest.approx(0.2001, abs=1e-4)
        assert rep.passed

    def test_b09(self):
        rep = landau_check(BlaschkeFactor(0.9), 512)
        assert rep.guaranteed_radius == pytest.approx(0.3602, abs=1e-4)
        assert rep.measured_radius + rep.resolution >= rep.guaranteed_radius

    def test_small_a(self):
        rep = landau_check(BlaschkeFactor(1e-3), 256)
        assert rep.guaranteed_radius < 1e-3 and rep.passed

    def test_composition(self):
        st = CompositionState.at(FactorSchedule.geometric(0.5), 3)
        rep = landau_check(st, 256)
        assert rep.derivative_norm == pytest.approx(0.5 * 0.75 * 0.875)
        assert rep.passed

    def test_preconditions(self):
        with pytest.raises(PreconditionError):
            landau_check(BlaschkeFactor(0.0))
        with pytest.raises(TypeError):
            landau_check(lambda z: z)


class TestDegree:
    def test_center_target(self):
        m = const_model(0.5)
        assert degree_check(m, 3, [16.0], radius=0.9) == [2]

    def test_outside_target(self):
        m = const_model(0.5)
        assert degree_check(m, 3, [16 + 1.5]) == [0]

    def test_squaring(self, rng):
        m = ChainModel(FactorSchedule.trivial())
        r = m.inner_radius(2)
        t = 12 + 0.9 * r**2 * np.sqrt(rng.random(10)) * np.exp(2j * np.pi * rng.random(10))
        assert degree_check(m, 2, t) == [2] * 10

    def test_ill_conditioned(self):
        m = ChainModel(FactorSchedule.trivial())
        r = m.inner_radius(0)
        with pytest.raises(IllConditionedError):
            degree_check(m, 0, [4 + r**2])
