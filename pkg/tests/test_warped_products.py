"""Product-chart curvature, the CD(0,1) threshold, and the obstruction ODE."""

import math

import numpy as np
import pytest

from cdsplit import catalog
from cdsplit.chart_core import MetricSpec, ScalarField, metric_at, ricci_numeric
from cdsplit.errors import DimensionClash, DivergentThreshold, NonFinite, StepOverflow
from cdsplit.warped_products import (
    CustomFiber,
    EuclideanFiber,
    SphereFiber,
    SplitSpaceSpec,
    TorusFiber,
    TwistedProductSpec,
    mixed_partial_residual,
    radial_identity_N,
    riccati_obstruction,
    sphere_example_lambda,
    split_cd_threshold,
    twisted_ricci_analytic,
    validate_split,
)


def brute_force_sin_threshold():
    """Independent oracle for phi = sin r, n = 3: maximize -s e^s / 2 over
    s in [-1, 1] by dense scan."""
    s = np.linspace(-1.0, 1.0, 2_000_001)
    return float(np.max(-0.5 * s * np.exp(s)))


class TestFibers:
    def test_sphere_einstein_constant_realized(self):
        # numerical Ricci of the chart metric equals lambda_E * g inside the box
        for lam in (0.2, 1.0, 2.5):
            fiber = SphereFiber(dim=2, einstein_constant=lam)
            spec = MetricSpec(dim=2, g=fiber.metric, partials=fiber.partials)
            rng = np.random.default_rng(0)
            for _ in range(5):
                y = rng.uniform(-2.5, 2.5, 2)
                ric = ricci_numeric(spec, y)
                g = metric_at(spec, y)
                assert np.max(np.abs(ric - lam * g)) / max(1.0, np.max(np.abs(g))) < 1e-5

    def test_sphere_christoffel_matches_fd(self):
        from cdsplit.chart_core import christoffel

        fiber = SphereFiber(dim=3, einstein_constant=1.0)
        spec = MetricSpec(dim=3, g=fiber.metric, partials=fiber.partials)
        y = np.array([0.4, -1.1, 0.7])
        assert np.max(np.abs(christoffel(spec, y) - fiber.christoffel(y))) < 1e-12

    def test_sphere_distance_small_arcs(self):
        fiber = SphereFiber(dim=2, einstein_constant=1.0)
        # tiny chart displacement ~ chart metric length
        y = np.array([0.3, 0.2])
        d = np.array([1e-4, -2e-4])
        gl = fiber.metric(y)
        expected = math.sqrt(float(d @ gl @ d))
        assert fiber.distance(y, y + d) == pytest.approx(expected, rel=1e-3)

    def test_sphere_needs_dim_two(self):
        with pytest.raises(ValueError):
            SphereFiber(dim=1, einstein_constant=1.0)

    def test_torus_metric(self):
        fiber = TorusFiber(dim=2, periods=(2 * math.pi, 4 * math.pi))
        assert np.allclose(fiber.metric(np.zeros(2)), np.diag([1.0, 4.0]))
        assert fiber.distance(np.zeros(2), np.array([1.0, 1.0])) == pytest.approx(math.sqrt(5.0))

    def test_fiber_dimension_must_match(self):
        with pytest.raises(ValueError):
            SplitSpaceSpec(n=3, phi=math.sin, dphi=math.cos,
                           d2phi=lambda r: -math.sin(r), fiber=EuclideanFiber(3))


class TestTwistedRicci:
    def test_constant_twist_flat_fiber_is_flat(self):
        spec = TwistedProductSpec(n=3, psi=ScalarField.constant(0.7),
                                  fiber=EuclideanFiber(2))
        ric = twisted_ricci_analytic(spec, np.array([0.3, 1.0, -1.0]))
        assert np.max(np.abs(ric)) < 1e-14

    def test_hyperbolic_three_space_closed_form(self):
        # warp e^{2r} over a flat 2-d fiber: Ric = -2 g
        tw = catalog.hyperbolic_split(3).as_twisted()
        spec = tw.metric_spec()
        p = np.array([0.4, 0.8, -0.3])
        ric = twisted_ricci_analytic(tw, p)
        g = metric_at(spec, p)
        assert ric[0, 0] == pytest.approx(-2.0, abs=1e-12)
        assert np.max(np.abs(ric + 2.0 * g)) < 1e-10
        assert np.max(np.abs(ric[1:, 1:] + 2.0 * g[1:, 1:])) < 1e-10

    def test_polar_plane_as_twist_is_flat(self):
        # n = 2, psi = log r over a 1-d fiber realizes dr^2 + r^2 dtheta^2
        psi = ScalarField(
            value=lambda p: math.log(p[0]),
            grad=lambda p: np.array([1.0 / p[0], 0.0]),
            hess=lambda p: np.array([[-1.0 / p[0] ** 2, 0.0], [0.0, 0.0]]),
        )
        tw = TwistedProductSpec(n=2, psi=psi, fiber=EuclideanFiber(1))
        for r in (0.5, 1.0, 2.7):
            ric = twisted_ricci_analytic(tw, np.array([r, 0.3]))
            assert np.max(np.abs(ric)) < 1e-12

    def test_matches_numeric_on_builtins(self):
        rng = np.random.default_rng(42)
        for tw in catalog.builtin_product_charts():
            spec = tw.metric_spec()
            box = tw.fiber.safe_box
            for _ in range(10):
                p = np.empty(tw.n)
                p[0] = rng.uniform(-3.0, 3.0)
                for j in range(tw.n - 1):
                    lo, hi = box[j]
                    pad = 0.1 * (hi - lo)
                    p[1 + j] = rng.uniform(lo + pad, hi - pad)
                a = twisted_ricci_analytic(tw, p)
                b = ricci_numeric(spec, p)
                rel = np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(a)))
                assert rel < 1e-5, f"{tw.name} at {p}: rel err {rel}"

    def test_custom_fiber_falls_back_to_numeric(self):
        inner = catalog.sphere_chart(2, einstein_constant=1.0)
        tw = TwistedProductSpec(n=3, psi=ScalarField.constant(0.0),
                                fiber=CustomFiber(inner))
        p = np.array([0.0, 0.3, -0.2])
        ric = twisted_ricci_analytic(tw, p)
        g = metric_at(tw.metric_spec(), p)
        # product of a line with a unit sphere: fiber block Einstein, radial zero
        assert abs(ric[0, 0]) < 1e-7
        assert np.max(np.abs(ric[1:, 1:] - g[1:, 1:])) < 1e-5


class TestSplitThreshold:
    def test_constant_phi_zero(self):
        split = SplitSpaceSpec(n=3, phi=lambda r: 1.5, dphi=lambda r: 0.0,
                               d2phi=lambda r: 0.0, fiber=EuclideanFiber(2))
        rep = split_cd_threshold(split, (-10.0, 10.0))
        assert rep.value == pytest.approx(0.0, abs=1e-15)
        assert not rep.diverged

    def test_sin_profile_matches_brute_force(self):
        oracle = brute_force_sin_threshold()
        assert oracle == pytest.approx(0.5 * math.exp(-1.0), abs=1e-9)
        split = catalog.split_sin_sphere(0.5)
        rep = split_cd_threshold(split, (-10.0, 10.0))
        assert rep.value == pytest.approx(oracle, abs=1e-6)
        assert math.sin(rep.r_at) == pytest.approx(-1.0, abs=1e-6)
        assert not rep.diverged

    def test_cos_profile_same_supremum(self):
        split = SplitSpaceSpec(n=3, phi=math.cos, dphi=lambda r: -math.sin(r),
                               d2phi=lambda r: -math.cos(r),
                               fiber=SphereFiber(2, einstein_constant=1.0))
        rep = split_cd_threshold(split, (-10.0, 10.0))
        assert rep.value == pytest.approx(0.5 * math.exp(-1.0), abs=1e-6)

    def test_grid_density_invariance(self):
        split = catalog.split_sin_sphere(0.5)
        a = split_cd_threshold(split, (-10.0, 10.0), n_grid=201)
        b = split_cd_threshold(split, (-10.0, 10.0), n_grid=2001)
        assert abs(a.value - b.value) < 1e-6

    def test_convex_profile_flags_divergence(self):
        split = SplitSpaceSpec(n=3, phi=lambda r: r * r, dphi=lambda r: 2.0 * r,
                               d2phi=lambda r: 2.0, fiber=SphereFiber(2, 1.0))
        rep = split_cd_threshold(split, (0.0, 10.0))
        assert rep.diverged
        assert rep.value == pytest.approx(math.exp(100.0), rel=1e-6)
        with pytest.raises(DivergentThreshold):
            sphere_example_lambda(split, (0.0, 10.0))

    def test_overflowing_profile_raises(self):
        split = SplitSpaceSpec(n=3, phi=lambda r: r * r, dphi=lambda r: 2.0 * r,
                               d2phi=lambda r: 2.0, fiber=SphereFiber(2, 1.0))
        with pytest.raises(NonFinite):
            split_cd_threshold(split, (0.0, 40.0))

    def test_sphere_example_needs_sphere_fiber(self):
        with pytest.raises(ValueError):
            sphere_example_lambda(catalog.split_sin_torus(3), (-5.0, 5.0))

    def test_sphere_example_values(self):
        assert sphere_example_lambda(
            catalog.split_sin_sphere(1.0), (-10.0, 10.0)
        ) == pytest.approx(0.5 * math.exp(-1.0), abs=1e-6)
        flat_phi = SplitSpaceSpec(n=3, phi=lambda r: 0.0, dphi=lambda r: 0.0,
                                  d2phi=lambda r: 0.0, fiber=SphereFiber(2, 1.0))
        assert sphere_example_lambda(flat_phi, (-10.0, 10.0)) == pytest.approx(0.0, abs=1e-12)


class TestRiccatiObstruction:
    def test_exact_solution_regression(self):
        # y(0) = y'(0) = 0, a = 1: solution log cos t, escape at pi/2
        rep = riccati_obstruction(1.0, 0.0, 0.0, 3.0, dt=1e-3)
        assert rep.blow_up
        assert rep.blow_up_time == pytest.approx(math.pi / 2.0, abs=1e-3)
        mask = (rep.ts >= 0.0) & (rep.ts <= 1.45)
        err = np.max(np.abs(rep.ys[mask] - np.log(np.cos(rep.ts[mask]))))
        assert err <= 1e-6

    def test_blow_up_time_step_convergence(self):
        for dt in (1e-3, 5e-4):
            rep = riccati_obstruction(1.0, 0.0, 0.0, 3.0, dt=dt)
            assert abs(rep.blow_up_time - math.pi / 2.0) <= 1e-3

    def test_degenerate_coefficient_rejected(self):
        with pytest.raises(ValueError):
            riccati_obstruction(0.0, 0.0, 0.0, 1.0)

    def test_strong_initial_growth_still_obstructed(self):
        # concavity: solutions on all of R always escape; with y'(0) = 10 the
        # escape happens in the backward direction (forward the solution
        # grows without bound since y'^2 = e^{-2y} + 99 never vanishes)
        rep = riccati_obstruction(1.0, 0.0, 10.0, 50.0, dt=1e-3)
        assert rep.blow_up
        assert rep.blow_up_time < 0.0
        assert rep.blow_up_time >= -1.0
        # forward branch keeps climbing
        assert rep.ys[-1] > 100.0

    def test_trace_monotone_times_and_report_invariant(self):
        rep = riccati_obstruction(1.0, 0.0, 0.0, 2.0, dt=1e-3)
        assert np.all(np.diff(rep.ts) > 0)
        # final forward sample is at or below the detection threshold
        assert rep.ys[-1] <= rep.threshold_used
        assert rep.blow_up_time <= 2.0

    def test_velocity_guard_overflow(self):
        with pytest.raises(StepOverflow):
            riccati_obstruction(1.0, 0.0, 2e8, 1.0, dt=1e-3)

    def test_negative_initial_slope_fast_forward_escape(self):
        rep = riccati_obstruction(1.0, 0.0, -5.0, 10.0, dt=1e-3)
        assert rep.blow_up
        assert 0.0 < rep.blow_up_time < 1.0

    def test_larger_coefficient_scales_time(self):
        # y'' = -a e^{-2y} with zero data escapes sooner for larger a
        t1 = riccati_obstruction(1.0, 0.0, 0.0, 5.0).blow_up_time
        t4 = riccati_obstruction(4.0, 0.0, 0.0, 5.0).blow_up_time
        assert t4 < t1


class TestRadialIdentity:
    def test_vanishes_at_N_equal_one(self):
        split = catalog.split_sin_sphere(0.7)
        ana, num = radial_identity_N(split, 1.0, 1.3)
        assert ana == 0.0
        assert abs(num) < 1e-6

    def test_unit_slope_coefficient(self):
        # phi' = 1, n = 3, N = 0: coefficient (N-1)/((n-1)(n-N)) = -1/6
        split = SplitSpaceSpec(n=3, phi=lambda r: r, dphi=lambda r: 1.0,
                               d2phi=lambda r: 0.0, fiber=EuclideanFiber(2))
        ana, num = radial_identity_N(split, 0.0, 0.4)
        assert ana == pytest.approx(-1.0 / 6.0, abs=1e-12)
        assert num == pytest.approx(-1.0 / 6.0, abs=1e-6)

    def test_constant_phi_zero_for_all_N(self):
        split = SplitSpaceSpec(n=3, phi=lambda r: 2.0, dphi=lambda r: 0.0,
                               d2phi=lambda r: 0.0, fiber=SphereFiber(2, 1.0))
        for N in (-5.0, 0.0, 0.5, 1.0, math.inf):
            ana, num = radial_identity_N(split, N, 0.9)
            assert ana == 0.0
            assert abs(num) < 1e-7

    def test_matches_numeric_across_N(self):
        for split in (catalog.split_sin_sphere(0.4),
                      catalog.split_sin_sphere(0.4, f_L=catalog.bounded_fiber_density()),
                      catalog.split_sin_torus(3)):
            for N in (-5.0, -1.0, 0.0, 0.5, 1.0):
                for r in (-1.1, 0.6, 2.0):
                    ana, num = radial_identity_N(split, N, r)
                    assert abs(ana - num) <= 1e-6

    def test_dimension_clash(self):
        with pytest.raises(DimensionClash):
            radial_identity_N(catalog.split_sin_sphere(0.4), 3.0, 1.0)


class TestSplitValidation:
    def test_validate_split_accepts_consistent_profiles(self):
        assert validate_split(catalog.split_sin_sphere(0.5)) < 1e-6

    def test_validate_split_rejects_wrong_derivative(self):
        bad = SplitSpaceSpec(n=3, phi=math.sin, dphi=lambda r: 2.0 * math.cos(r),
                             d2phi=lambda r: -math.sin(r), fiber=EuclideanFiber(2))
        with pytest.raises(ValueError):
            validate_split(bad)


class TestMixedPartialResidual:
    def test_splitting_twist_has_no_mixed_partials(self):
        tw = catalog.split_sin_sphere(0.5, f_L=catalog.bounded_fiber_density()).as_twisted()
        rng = np.random.default_rng(1)
        pts = np.column_stack([rng.uniform(-3, 3, 20), rng.uniform(-2, 2, 20),
                               rng.uniform(-2, 2, 20)])
        assert mixed_partial_residual(tw, pts) <= 1e-12

    def test_genuine_twist_detected(self):
        tw = catalog.twisted_example(3)
        pts = np.array([[0.7, 0.5, 0.1]])
        assert mixed_partial_residual(tw, pts) > 1e-2
