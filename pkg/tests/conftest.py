"""Shared fixtures: model spaces, grids, closed-form oracles and solved runs."""

import math

import numpy as np
import pytest

from bakrylab.discretization import RadialGrid
from bakrylab.geometry import ModelSpace
from bakrylab.solver import ConstantSource, GaussianBump, PDEProblem, solve


def heat_kernel(r, t, dimension=3):
    """Euclidean heat kernel (4 pi t)^(-N/2) exp(-r^2 / 4t)."""
    r = np.asarray(r, dtype=float)
    return (4.0 * math.pi * t) ** (-dimension / 2.0) * np.exp(-r ** 2 / (4.0 * t))


def heat_problem(n=257, dt=1e-3, theta=0.5, r_max=8.0):
    """Heat kernel started at t = 1 and run to t0 = 1.5."""
    grid = RadialGrid(r_max, n)
    return PDEProblem(
        space=ModelSpace.euclidean(3),
        grid=grid,
        alpha=1.0,
        q=ConstantSource(0.0),
        u0=heat_kernel(grid.nodes, 1.0),
        t0=1.5,
        T=0.5,
        dt=dt,
        theta=theta,
    )


def constant_problem(value=2.0, space=None, n=65, T=0.5, dt=0.01):
    grid = RadialGrid(8.0, n)
    return PDEProblem(
        space=space or ModelSpace.hyperbolic(3),
        grid=grid,
        alpha=1.0,
        q=ConstantSource(0.0),
        u0=np.full(n, value),
        t0=0.0,
        T=T,
        dt=dt,
    )


def soliton_bump_problem(n=129, dt=1e-3):
    """alpha = 2 with a Gaussian bump source on the shrinking soliton."""
    grid = RadialGrid(8.0, n)
    return PDEProblem(
        space=ModelSpace.gaussian_soliton(3, 0.5),
        grid=grid,
        alpha=2.0,
        q=GaussianBump(0.5, 0.0, 1.0),
        u0=1.0 + 0.5 * np.exp(-grid.nodes ** 2),
        t0=0.5,
        T=0.5,
        dt=dt,
    )


def negative_power_problem(n=129, dt=1e-3):
    """alpha = -1 with a constant negative source."""
    grid = RadialGrid(8.0, n)
    return PDEProblem(
        space=ModelSpace.euclidean(3),
        grid=grid,
        alpha=-1.0,
        q=ConstantSource(-0.5),
        u0=2.0 + np.exp(-grid.nodes ** 2),
        t0=0.5,
        T=0.5,
        dt=dt,
    )


@pytest.fixture(scope="session")
def heat_solution():
    return solve(heat_problem())


@pytest.fixture(scope="session")
def heat_solution_coarse():
    return solve(heat_problem(n=129))


@pytest.fixture(scope="session")
def soliton_bump_solution():
    return solve(soliton_bump_problem())


@pytest.fixture(scope="session")
def negative_power_solution():
    return solve(negative_power_problem())


@pytest.fixture(scope="session")
def constant_solution():
    return solve(constant_problem())


@pytest.fixture(params=["euclidean", "hyperbolic", "gaussian_soliton"])
def builtin_space(request):
    return {
        "euclidean": ModelSpace.euclidean(3),
        "hyperbolic": ModelSpace.hyperbolic(3, 1.0),
        "gaussian_soliton": ModelSpace.gaussian_soliton(3, 0.5),
    }[request.param]
