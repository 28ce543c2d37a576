import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bakrylab.discretization import RadialGrid
from bakrylab.geometry import ModelSpace
from bakrylab.solver import ConstantSource, PDEProblem, solve
from bakrylab.errors import ClockError, DomainError, HypothesisViolation, StatsInconsistencyError
from bakrylab.estimates import (
    CylinderStats,
    EstimateCase,
    build_cutoff,
    compute_w,
    cylinder_stats,
    estimate_bracket,
    fit_constant,
    fit_harnack_constant,
    harnack_check,
    harnack_gamma,
    log_transform,
    source_terms,
    theorem11_report,
    transformed_residual,
)


def make_stats(**changes):
    values = dict(D=2.0, M_inf=0.5, beta=2.0, q_plus_norm=0.25, grad_q_norm=0.008, mu=2.0, K=0.0,
                  R=4.0, t0=1.0, T=1.0, alpha=2.0)
    values.update(changes)
    return CylinderStats(**values)


class TestEstimateCase:
    @pytest.mark.parametrize("alpha,expected", [
        (3.0, EstimateCase.SUPERLINEAR),
        (1.0, EstimateCase.SUPERLINEAR),
        (0.5, EstimateCase.SUBLINEAR),
        (0.0, EstimateCase.NONPOSITIVE),
        (-2.0, EstimateCase.NONPOSITIVE),
    ])
    def test_for_alpha(self, alpha, expected):
        assert EstimateCase.for_alpha(alpha) is expected
        assert expected.admits(alpha)

    def test_string_values(self):
        assert EstimateCase("0<alpha<1") is EstimateCase.SUBLINEAR


class TestCylinderStats:
    @pytest.mark.parametrize("changes", [{"M_inf": 0.0}, {"M_inf": 3.0}, {"beta": 0.5}])
    def test_inconsistent_stats(self, changes):
        with pytest.raises(StatsInconsistencyError):
            make_stats(**changes)

    def test_clock(self):
        stats = make_stats()
        assert stats.start == 0.0
        assert stats.clock(0.25) == pytest.approx(0.25)
        assert np.allclose(stats.clock(np.array([0.5, 1.0])), [0.5, 1.0])

    @pytest.mark.parametrize("t", [0.0, -0.5])
    def test_initial_slice_excluded(self, t):
        with pytest.raises(ClockError):
            make_stats().clock(t)

    def test_heat_run_stats(self, heat_solution):
        stats = cylinder_stats(heat_solution, 4.0)
        peak = float(heat_solution.frames[0, 0])
        assert stats.D == pytest.approx(1.05 * peak)
        assert stats.K == 0.0
        assert stats.q_plus_norm == 0.0 and stats.grad_q_norm == 0.0
        assert stats.mu == pytest.approx(2.0)
        assert stats.beta >= 1.0
        assert stats.M_inf == pytest.approx(float(np.min(heat_solution.frames[:, heat_solution.grid.within(4.0)])))

    def test_radius_limited_to_half_grid(self, heat_solution):
        with pytest.raises(DomainError):
            cylinder_stats(heat_solution, 5.0)

    def test_supplied_bound_below_maximum(self, heat_solution):
        with pytest.raises(HypothesisViolation) as info:
            cylinder_stats(heat_solution, 4.0, D=1e-3)
        assert info.value.point["r"] == 0.0


class TestLogTransform:
    def test_violation_carries_point(self, heat_solution):
        with pytest.raises(HypothesisViolation) as info:
            log_transform(heat_solution, 1e-3)
        assert set(info.value.point) == {"r", "t", "u"}
        assert info.value.point["u"] > 1e-3

    def test_nonpositive_bound(self, heat_solution):
        with pytest.raises(DomainError):
            log_transform(heat_solution, 0.0)

    def test_constant_solution(self, constant_solution):
        h = log_transform(constant_solution, 2.0 * (1.0 + 1e-12))
        assert np.allclose(h, 0.0, atol=1e-10)

    def test_transformed_equation_holds(self, heat_solution):
        stats = cylinder_stats(heat_solution, 4.0)
        assert transformed_residual(heat_solution, stats.D, 4.0) < 1e-2

    def test_transformed_residual_is_first_order_in_time(self):
        def residual(dt):
            grid = RadialGrid(4.0, 17)
            problem = PDEProblem(ModelSpace.euclidean(3), grid, 2.0, ConstantSource(-0.5), np.ones(grid.n),
                                 t0=1.0, T=1.0, dt=dt)
            return transformed_residual(solve(problem), 1.0)

        coarse, fine = residual(2e-4), residual(1e-4)
        assert fine <= 1e-3
        assert 1.8 < coarse / fine < 2.2

    def test_w_of_quadratic(self):
        grid = RadialGrid(4.0, 33)
        h = -0.1 * grid.nodes ** 2
        w = compute_w(grid, h, 2.0)
        assert np.allclose(w, (0.2 * grid.nodes) ** 2 / (2.0 + 0.1 * grid.nodes ** 2) ** 2)

    def test_w_requires_gap(self):
        grid = RadialGrid(4.0, 33)
        with pytest.raises(StatsInconsistencyError):
            compute_w(grid, np.zeros(grid.n), 0.5)
        mask = np.zeros(grid.n, dtype=bool)
        assert np.all(compute_w(grid, np.zeros(grid.n), 0.5, mask=mask) == 0.0)


class TestSourceTerms:
    def test_superlinear(self):
        A, B = source_terms(None, make_stats())
        assert A == pytest.approx(math.sqrt(2.0) * math.sqrt(2.0) * 0.5)
        assert B == pytest.approx(2.0 ** (1.0 / 3.0) * 0.2)

    def test_sublinear_uses_infimum(self):
        A, B = source_terms(None, make_stats(alpha=0.5))
        assert A == pytest.approx(math.sqrt(0.5) * 0.5 ** -0.25 * 0.5)
        assert B == pytest.approx(0.5 ** (-1.0 / 6.0) * 0.2)

    def test_nonpositive_drops_coefficient(self):
        A, B = source_terms(EstimateCase.NONPOSITIVE, make_stats(alpha=-1.0))
        assert A == pytest.approx(1.0)
        assert B == pytest.approx(0.5 ** (-2.0 / 3.0) * 0.2)

    def test_case_must_match_alpha(self):
        with pytest.raises(DomainError):
            source_terms(EstimateCase.SUBLINEAR, make_stats())

    def test_bracket(self):
        stats = make_stats(K=0.25)
        A, B = source_terms(None, stats)
        expected = math.sqrt(3.0 / 4.0) + 1.0 / math.sqrt(0.25) + 0.5 + A + B
        assert estimate_bracket(None, stats, 0.25) == pytest.approx(expected)


class TestGradientEstimate:
    def test_constant_solution_needs_no_constant(self, constant_solution):
        stats = cylinder_stats(constant_solution, 4.0)
        assert fit_constant(constant_solution, stats).C_fit == pytest.approx(0.0, abs=1e-10)

    def test_constant_is_stable_under_refinement(self, heat_solution, heat_solution_coarse):
        fine = fit_constant(heat_solution, cylinder_stats(heat_solution, 4.0)).C_fit
        coarse = fit_constant(heat_solution_coarse, cylinder_stats(heat_solution_coarse, 4.0)).C_fit
        assert fine > 0
        assert coarse == pytest.approx(fine, rel=0.05)

    def test_constant_grows_with_radius(self, heat_solution):
        # the gradient ratio peaks near r = R/2, so a larger cylinder sees a larger constant
        small = fit_constant(heat_solution, cylinder_stats(heat_solution, 2.0)).C_fit
        large = fit_constant(heat_solution, cylinder_stats(heat_solution, 4.0)).C_fit
        assert small < 0.9 * large

    def test_constant_is_scale_invariant(self, soliton_bump_solution):
        base = fit_constant(soliton_bump_solution, cylinder_stats(soliton_bump_solution, 4.0)).C_fit
        scaled_solution = soliton_bump_solution.scaled(7.0)
        scaled = fit_constant(scaled_solution, cylinder_stats(scaled_solution, 4.0)).C_fit
        assert scaled == pytest.approx(base, rel=1e-9)

    def test_fit_point_lies_in_half_ball(self, soliton_bump_solution):
        fit = fit_constant(soliton_bump_solution, cylinder_stats(soliton_bump_solution, 4.0))
        assert fit.worst_point["r"] <= 2.0
        assert fit.worst_point["t"] > soliton_bump_solution.times[0]

    def test_report(self, negative_power_solution):
        stats = cylinder_stats(negative_power_solution, 4.0)
        report = theorem11_report(negative_power_solution, stats)
        assert report.check == "theorem11"
        assert report.case == "alpha<=0"
        assert report.passed
        assert report.scalar == report.constant
        assert report.extra["stats"]["alpha"] == -1.0


class TestCutoff:
    @pytest.mark.parametrize("a,power", [(0.75, 3), (0.5, 2), (0.9, 7)])
    def test_power(self, a, power):
        assert build_cutoff(4.0, 1.0, 1.0, 1.0, a).power == power

    @pytest.mark.parametrize("R", [2.0, 4.0, 8.0])
    def test_properties(self, R):
        cutoff = build_cutoff(R, 1.0, 1.0, 1.0)
        assert all(cutoff.check_properties().values())

    def test_measured_constants_do_not_depend_on_radius(self):
        constants = [build_cutoff(R, 1.0, 1.0, 1.0).measure_constants(samples=128) for R in (2.0, 4.0, 8.0)]
        for key in ("C_0.5", "C_0.75", "C_t"):
            values = [c[key] for c in constants]
            assert all(math.isfinite(v) and v > 0 for v in values)
            assert values == pytest.approx([values[0]] * 3, rel=1e-9)

    def test_rise_ends_at_tau_when_early(self):
        cutoff = build_cutoff(4.0, 1.0, 1.0, 0.25)
        assert cutoff.rise_end == 0.25
        assert cutoff.xi(0.25) == 1.0
        assert cutoff.xi(0.0) == 0.0

    def test_derivatives_match_differences(self):
        cutoff = build_cutoff(4.0, 1.0, 1.0, 1.0)
        r = np.linspace(0.0, 5.0, 2001)
        eta = cutoff.eta(r)
        assert np.allclose(cutoff.eta_r(r), np.gradient(eta, r), atol=1e-3)
        assert np.allclose(cutoff.eta_rr(r)[5:-5], np.gradient(np.gradient(eta, r), r)[5:-5], atol=1e-2)

    @pytest.mark.parametrize("args", [
        (1.5, 1.0, 1.0, 1.0, 0.75),
        (4.0, 0.0, 1.0, 1.0, 0.75),
        (4.0, 1.0, 1.0, 0.0, 0.75),
        (4.0, 1.0, 1.0, 1.5, 0.75),
        (4.0, 1.0, 1.0, 1.0, 1.0),
    ])
    def test_invalid_cutoff(self, args):
        with pytest.raises(DomainError):
            build_cutoff(*args)


class TestHarnack:
    def test_gamma_at_zero_distance(self):
        assert harnack_gamma(0.0, 0.5, make_stats(), 1.0) == 1.0

    @settings(max_examples=50)
    @given(r1=st.floats(0.0, 10.0), dr=st.floats(0.0, 10.0), t=st.floats(0.05, 1.0), C=st.floats(0.0, 5.0))
    def test_gamma_monotone(self, r1, dr, t, C):
        stats = make_stats()
        near = harnack_gamma(r1, t, stats, C)
        far = harnack_gamma(r1 + dr, t, stats, C)
        assert 0.0 <= far <= near <= 1.0

    @settings(max_examples=50)
    @given(t1=st.floats(0.05, 0.9), dt=st.floats(0.0, 0.1), r=st.floats(0.0, 5.0))
    def test_gamma_grows_with_time(self, t1, dt, r):
        stats = make_stats()
        assert harnack_gamma(r, t1, stats, 1.0) <= harnack_gamma(r, t1 + dt, stats, 1.0) + 1e-15

    def test_negative_inputs(self):
        with pytest.raises(DomainError):
            harnack_gamma(1.0, 0.5, make_stats(), -1.0)
        with pytest.raises(DomainError):
            harnack_gamma(-1.0, 0.5, make_stats(), 1.0)

    def test_fitted_constant_passes_and_hundredth_fails(self, heat_solution):
        stats = cylinder_stats(heat_solution, 4.0)
        fit = fit_harnack_constant(heat_solution, stats)
        assert fit.C_fit > 0
        for k in (100, 250, 500):
            t = float(heat_solution.times[k])
            assert harnack_check(heat_solution, stats, fit.C_fit, t).passed
        weakened = harnack_check(heat_solution, stats, fit.C_fit / 100, float(heat_solution.times[-1]))
        assert not weakened.passed
        assert weakened.worst_margin < 0

    def test_gradient_constant_is_too_small_for_harnack(self, heat_solution):
        # C_fit only controls the half ball; Harnack pairs span the whole grid
        stats = cylinder_stats(heat_solution, 4.0)
        gradient = fit_constant(heat_solution, stats)
        harnack = fit_harnack_constant(heat_solution, stats)
        assert harnack.C_fit > gradient.C_fit
        for k in (100, 250, 500):
            t = float(heat_solution.times[k])
            assert not harnack_check(heat_solution, stats, gradient.C_fit, t).passed

    def test_report_shape(self, heat_solution):
        stats = cylinder_stats(heat_solution, 4.0)
        report = harnack_check(heat_solution, stats, 1.0, float(heat_solution.times[-1]))
        assert report.constant_name == "C_used"
        assert set(report.worst_point) == {"rx", "ry", "t", "across_pole"}
        assert report.scalar == report.worst_margin

    def test_time_must_be_a_frame(self, heat_solution):
        stats = cylinder_stats(heat_solution, 4.0)
        with pytest.raises(DomainError):
            harnack_check(heat_solution, stats, 1.0, 1.2505)
