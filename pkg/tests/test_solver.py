import math

import numpy as np
import pytest

from bakrylab.discretization import RadialGrid, weighted_inner_product
from bakrylab.errors import DomainError, PositivityLossError
from bakrylab.geometry import ModelSpace
from bakrylab.solver import (
    ConstantSource,
    GaussianBump,
    PDEProblem,
    ScaledSource,
    SeparableSource,
    SpaceTimeSolution,
    TabulatedSource,
    pde_residual,
    solve,
    step,
)

from .conftest import heat_kernel, heat_problem, soliton_bump_problem


def spatially_constant_problem(alpha, q, u0=1.0, T=0.5, dt=0.01, reaction="exact", space=None):
    grid = RadialGrid(6.0, 33)
    return PDEProblem(
        space=space or ModelSpace.euclidean(3),
        grid=grid,
        alpha=alpha,
        q=ConstantSource(q),
        u0=np.full(grid.n, u0),
        t0=T,
        T=T,
        dt=dt,
        reaction=reaction,
    )


def bernoulli(t, q, alpha, u0=1.0):
    if alpha == 1.0:
        return u0 * math.exp(q * t)
    return (u0 ** (1.0 - alpha) + (1.0 - alpha) * q * t) ** (1.0 / (1.0 - alpha))


class TestClosedForm:
    @pytest.mark.parametrize("alpha", [2.0, 1.0, 0.5, -1.0])
    @pytest.mark.parametrize("q", [0.5, -0.5])
    def test_constant_data_follows_ode(self, alpha, q):
        """The exact reaction flow meets the 1e-5 target; explicit Euler reaction does not at this dt."""
        solution = solve(spatially_constant_problem(alpha, q))
        for k in (1, solution.times.size // 2, solution.times.size - 1):
            expected = bernoulli(solution.elapsed[k], q, alpha)
            assert np.allclose(solution.frames[k], expected, rtol=1e-5, atol=0)

    def test_constant_data_on_curved_spaces(self, builtin_space):
        solution = solve(spatially_constant_problem(2.0, -0.5, space=builtin_space))
        assert np.allclose(solution.frames[-1], bernoulli(0.5, -0.5, 2.0), rtol=1e-5)

    def test_euler_reaction_is_first_order(self):
        def error(dt):
            solution = solve(spatially_constant_problem(2.0, 0.5, dt=dt, reaction="euler"))
            return abs(solution.frames[-1, 0] - bernoulli(0.5, 0.5, 2.0))

        assert 1.8 < error(0.02) / error(0.01) < 2.2


class TestHeatKernel:
    def test_matches_heat_kernel(self, heat_solution):
        nodes = heat_solution.grid.nodes
        expected = heat_kernel(nodes, 1.5)
        error = np.max(np.abs(heat_solution.frames[-1] - expected)) / np.max(expected)
        assert error <= 1e-4

    def test_spatial_refinement_reduces_error(self, heat_solution, heat_solution_coarse):
        def error(solution):
            expected = heat_kernel(solution.grid.nodes, 1.5)
            return np.max(np.abs(solution.frames[-1] - expected))

        assert error(heat_solution_coarse) / error(heat_solution) > 3.0

    def test_single_backward_euler_step(self):
        problem = heat_problem(theta=1.0)
        state = step(problem, problem.u0, 1.0)
        expected = heat_kernel(problem.grid.nodes, 1.001)
        assert np.max(np.abs(state - expected)) / np.max(expected) <= 1e-4

    def test_residual_is_small(self, heat_solution):
        assert pde_residual(heat_solution) < 1e-5

    def test_mass_is_conserved(self, heat_solution):
        first = heat_solution.frames[0]
        last = heat_solution.frames[-1]
        ones = np.ones_like(first)
        mass0 = weighted_inner_product(heat_solution.space, heat_solution.grid, first, ones)
        mass1 = weighted_inner_product(heat_solution.space, heat_solution.grid, last, ones)
        assert mass1 == pytest.approx(mass0, rel=1e-12)

    def test_frames_and_clock(self, heat_solution):
        assert heat_solution.times[0] == pytest.approx(1.0)
        assert heat_solution.times[-1] == pytest.approx(1.5)
        assert heat_solution.elapsed[0] == 0.0
        assert heat_solution.frame_index(1.25) == 250
        with pytest.raises(DomainError):
            heat_solution.frame_index(1.2505)


class TestStepControl:
    def test_step_halving_recovers_positivity(self):
        solution = solve(spatially_constant_problem(1.0, -2.0, T=0.6, dt=0.6, reaction="euler"))
        assert solution.dt_history == pytest.approx([0.3, 0.3])
        assert np.allclose(solution.frames[-1], 0.16)
        assert solution.times.size == 2

    def test_hopeless_sink_raises(self):
        with pytest.raises(PositivityLossError) as info:
            solve(spatially_constant_problem(1.0, -1e6, T=0.1, dt=0.01, reaction="euler"))
        assert info.value.time == pytest.approx(0.0)

    def test_exact_reaction_reports_blowdown(self):
        # u^2 = 1 - t reaches zero at t = 1
        problem = spatially_constant_problem(-1.0, -0.5, T=1.5, dt=0.5)
        with pytest.raises(PositivityLossError):
            solve(problem)

    def test_step_keeps_constants(self):
        problem = spatially_constant_problem(1.0, 0.0)
        state = step(problem, np.full(problem.grid.n, 3.0), 0.0)
        assert np.allclose(state, 3.0, rtol=1e-14)

    def test_euler_reaction_step_on_constants(self):
        problem = spatially_constant_problem(1.0, 0.3, reaction="euler")
        state = step(problem, np.full(problem.grid.n, 2.0), 0.0)
        assert np.allclose(state, 2.0 * (1.0 + 0.3 * problem.dt), rtol=1e-12)

    def test_step_rejects_nonpositive_state(self):
        problem = spatially_constant_problem(1.0, 0.0)
        with pytest.raises(PositivityLossError):
            step(problem, np.zeros(problem.grid.n), 0.0)


class TestProblem:
    def test_scaling_is_exact(self):
        problem = soliton_bump_problem(n=33, dt=0.01)
        base = solve(problem)
        scaled = solve(problem.scaled(3.0))
        assert np.allclose(scaled.frames, 3.0 * base.frames, rtol=1e-10)

    def test_scaled_solution_matches_problem(self):
        base = solve(soliton_bump_problem(n=33, dt=0.01))
        scaled = base.scaled(2.0)
        assert scaled.problem.q.value(np.array([0.0]), 0.0)[0] == pytest.approx(0.25)
        assert np.allclose(scaled.frames, 2.0 * base.frames)

    @pytest.mark.parametrize("changes", [
        {"T": 0.0},
        {"dt": 0.0},
        {"dt": 2.0},
        {"theta": 0.4},
        {"reaction": "implicit"},
        {"alpha": float("inf")},
    ])
    def test_invalid_problem(self, changes):
        grid = RadialGrid(4.0, 17)
        options = dict(space=ModelSpace.euclidean(3), grid=grid, alpha=1.0, q=ConstantSource(0.0),
                       u0=np.ones(grid.n), t0=1.0, T=1.0, dt=0.1)
        options.update(changes)
        with pytest.raises(DomainError):
            PDEProblem(**options)

    def test_nonpositive_initial_data(self):
        grid = RadialGrid(4.0, 17)
        u0 = np.ones(grid.n)
        u0[5] = 0.0
        with pytest.raises(DomainError):
            PDEProblem(ModelSpace.euclidean(3), grid, 1.0, ConstantSource(0.0), u0, 1.0, 1.0, 0.1)

    def test_describe(self):
        described = soliton_bump_problem(n=33).describe()
        assert described["space"]["kind"] == "gaussian_soliton"
        assert described["q"] == {"kind": "gaussian_bump", "amplitude": 0.5, "center": 0.0, "width": 1.0}

    def test_solution_rejects_nonpositive_frames(self):
        problem = soliton_bump_problem(n=33)
        frames = np.ones((2, 33))
        frames[1, 3] = -1.0
        with pytest.raises(PositivityLossError):
            SpaceTimeSolution(np.array([0.0, 0.5]), frames, problem)


class TestSources:
    def test_gaussian_bump_derivative(self):
        bump = GaussianBump(2.0, 1.0, 0.5)
        r = np.linspace(0.0, 3.0, 301)
        numeric = np.gradient(bump.value(r, 0.0), r, edge_order=2)
        assert np.allclose(bump.radial_derivative(r, 0.0), numeric, atol=1e-3)

    def test_gaussian_bump_width(self):
        with pytest.raises(DomainError):
            GaussianBump(1.0, 0.0, 0.0)

    def test_scaling_preserves_kind(self):
        assert ConstantSource(2.0).scaled(0.5) == ConstantSource(1.0)
        assert GaussianBump(1.0).scaled(3.0).amplitude == 3.0
        separable = SeparableSource.bump_in_time(1.0, 0.0, 1.0)
        assert isinstance(separable.scaled(2.0), ScaledSource)
        assert separable.scaled(2.0).value(np.array([0.0]), 5.0)[0] == pytest.approx(2.0)

    def test_is_zero(self):
        assert ConstantSource(0.0).is_zero()
        assert not GaussianBump(1.0).is_zero()
        assert ScaledSource(GaussianBump(1.0), 0.0).is_zero()

    def test_separable_temporal_factors(self):
        exponential = SeparableSource.bump_in_time(1.0, 0.0, 1.0, temporal="exponential", rate=-1.0)
        assert exponential.value(np.array([0.0]), 2.0)[0] == pytest.approx(math.exp(-2.0))
        linear = SeparableSource.bump_in_time(1.0, 0.0, 1.0, temporal="linear", rate=0.5)
        assert linear.radial_derivative(np.array([1.0]), 2.0)[0] == pytest.approx(-2.0 * math.exp(-1.0) * 2.0)
        with pytest.raises(DomainError):
            SeparableSource.bump_in_time(1.0, 0.0, 1.0, temporal="periodic")

    def test_tabulated_source_from_csv(self, tmp_path):
        path = tmp_path / "q.csv"
        lines = ["r,t,value"]
        for r in np.linspace(0.0, 4.0, 9):
            for t in np.linspace(0.0, 1.0, 5):
                lines.append(f"{r},{t},{2.0 * r + t}")
        path.write_text("\n".join(lines) + "\n")

        source = TabulatedSource.from_csv(path)
        r = np.array([0.25, 1.3, 3.9])
        assert np.allclose(source.value(r, 0.6), 2.0 * r + 0.6)
        assert np.allclose(source.radial_derivative(r, 0.6), 2.0)
        assert source.describe()["shape"] == [9, 5]

    def test_tabulated_source_needs_full_grid(self, tmp_path):
        path = tmp_path / "q.csv"
        path.write_text("r,t,value\n0,0,1\n1,0,1\n0,1,1\n")
        with pytest.raises(DomainError):
            TabulatedSource.from_csv(path)
