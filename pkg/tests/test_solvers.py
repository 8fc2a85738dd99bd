"""Constrained and penalized solves against closed-form oracles."""

import math

import numpy as np
import pytest

from thinlab import (
    BoundaryCondition,
    GridSpec,
    LimitProblem,
    ObstacleProblem,
    ScalarField,
    energy_of,
    solve_eps_problem,
    solve_limit_problem,
)


def column_grid(nz=256):
    # y,x-independent data on a thin 3-D box: effectively a 1-D column
    return GridSpec(dimension=3, extent=(1.0, 1.0), height=1.0,
                    shape=(2, 2, nz), weight_exponent=0.0,
                    energy_exponent=2.0)


def box3(n=17, a=0.0, p=2.0):
    return GridSpec(dimension=3, extent=(1.0, 1.0), height=1.0,
                    shape=(n, n, n), weight_exponent=a, energy_exponent=p)


def box2(ny=41, nz=21, a=0.5, p=2.0):
    return GridSpec(dimension=2, extent=(1.0,), height=0.5,
                    shape=(ny, nz), weight_exponent=a, energy_exponent=p)


class TestPenalizedColumn:
    """min int_0^1 |u'|^2 dz + c*(1-u(0))_+^2 with u(1)=0.

    The minimizer is affine, u(0) = c/(2+c), and the value is c/(c+2).
    """

    @pytest.mark.parametrize("c", [0.5, 1.0, 2.0, 4.0])
    def test_value_matches_closed_form(self, c):
        grid = column_grid()
        prob = LimitProblem.from_regime(grid, lam=c, mean_gamma=1.0,
                                        psi=1.0,
                                        sigma=BoundaryCondition(("top",), 0.0))
        rep = solve_limit_problem(prob)
        assert rep.converged
        expect = c / (c + 2.0)
        assert abs(rep.total_energy - expect) < 1e-10

    def test_minimizer_is_affine(self):
        c = 2.0
        grid = column_grid(nz=64)
        prob = LimitProblem.from_regime(grid, lam=c, mean_gamma=1.0,
                                        psi=1.0,
                                        sigma=BoundaryCondition(("top",), 0.0))
        rep = solve_limit_problem(prob)
        z = grid.axis(2)
        u0 = c / (2.0 + c)
        exact = np.broadcast_to(u0 * (1.0 - z), grid.shape)
        assert np.abs(rep.field.values - exact).max() < 1e-8

    def test_value_increasing_in_coefficient(self):
        grid = column_grid(nz=64)
        vals = []
        for c in (0.25, 0.5, 1.0, 2.0, 4.0, 8.0):
            prob = LimitProblem.from_regime(
                grid, lam=c, mean_gamma=1.0, psi=1.0,
                sigma=BoundaryCondition(("top",), 0.0))
            vals.append(solve_limit_problem(prob).total_energy)
        assert all(b > a for a, b in zip(vals, vals[1:]))


class TestHardConstraint:
    def test_full_bottom_affine_solution(self):
        # u >= 1 on all of {z=0}, u = 0 on top: discrete solution is 1-z
        grid = box3()
        prob = ObstacleProblem(grid=grid, obstacles="all", psi=1.0,
                               sigma=BoundaryCondition(("top",), 0.0))
        rep = solve_eps_problem(prob)
        z = grid.axis(2)
        exact = np.broadcast_to(1.0 - z, grid.shape)
        assert abs(rep.total_energy - 1.0) < 1e-9
        assert np.abs(rep.field.values - exact).max() < 1e-6

    def test_hard_limit_equals_full_bottom_obstacle(self):
        grid = box3(n=9)
        sigma = BoundaryCondition(("top",), 0.0)
        hard = solve_limit_problem(
            LimitProblem(grid, coefficient=math.inf, psi=1.0, sigma=sigma))
        obs = solve_eps_problem(
            ObstacleProblem(grid=grid, obstacles="all", psi=1.0, sigma=sigma))
        assert np.isclose(hard.total_energy, obs.total_energy, atol=1e-9)

    def test_constraint_active_set_reported(self):
        grid = box3(n=9)
        prob = ObstacleProblem(grid=grid, obstacles="all", psi=1.0,
                               sigma=BoundaryCondition(("top",), 0.0))
        rep = solve_eps_problem(prob)
        assert rep.feasibility <= 1e-12
        assert rep.complementarity < 1e-6


class TestKkt:
    def test_interior_residual_small_2d(self):
        grid = box2()
        mask = np.zeros(grid.shape[:-1], dtype=bool)
        mask[10:20] = True
        prob = ObstacleProblem(grid=grid, obstacles=mask, psi=0.5,
                               sigma=BoundaryCondition(("top",), 1.0),
                               witness=1.0)
        rep = solve_eps_problem(prob)
        assert rep.converged
        assert rep.feasibility <= 1e-12
        # scaled stationarity residual at free interior nodes
        assert rep.max_free_residual < 1e-5

    def test_solution_between_obstacle_floor_and_witness_max(self):
        grid = box2()
        mask = np.zeros(grid.shape[:-1], dtype=bool)
        mask[15:25] = True
        prob = ObstacleProblem(grid=grid, obstacles=mask, psi=0.5,
                               sigma=BoundaryCondition(("top",), 0.0),
                               witness=0.5)
        rep = solve_eps_problem(prob)
        v = rep.field.values
        assert v.min() >= -1e-10
        assert v.max() <= 0.5 + 1e-10


class TestMonotonicity:
    def test_energy_monotone_in_constraint_set(self):
        # larger active set => larger minimum
        grid = box2(ny=33, nz=17)
        sigma = BoundaryCondition(("top",), 0.0)
        energies = []
        for width in (4, 8, 16, 32):
            mask = np.zeros(grid.shape[:-1], dtype=bool)
            mask[:width] = True
            prob = ObstacleProblem(grid=grid, obstacles=mask, psi=0.75,
                                   sigma=sigma, witness=0.75)
            energies.append(solve_eps_problem(prob).total_energy)
        assert all(b >= a - 1e-12 for a, b in zip(energies, energies[1:]))

    def test_sandwich_free_penalized_hard(self):
        grid = box2(ny=33, nz=17)
        sigma = BoundaryCondition(("top",), 0.0)
        kw = dict(psi=0.75, sigma=sigma)
        free = solve_limit_problem(LimitProblem(grid, coefficient=0.0, **kw))
        pen = solve_limit_problem(LimitProblem(grid, coefficient=2.0, **kw))
        hard = solve_limit_problem(
            LimitProblem(grid, coefficient=math.inf, **kw))
        assert free.total_energy <= pen.total_energy + 1e-12
        assert pen.total_energy <= hard.total_energy + 1e-12


class TestConvexity:
    def test_midpoint_energy_below_average(self):
        # the quadratic objective is convex: E((u+v)/2) <= (E(u)+E(v))/2
        grid = box2(ny=17, nz=9)
        rng = np.random.default_rng(17)
        for _ in range(100):
            u = rng.standard_normal(grid.shape)
            v = rng.standard_normal(grid.shape)
            prob = LimitProblem(grid, coefficient=1.5, psi=0.25)
            em = energy_of(prob, ScalarField(grid, 0.5 * (u + v)))
            ea = energy_of(prob, ScalarField(grid, u))
            eb = energy_of(prob, ScalarField(grid, v))
            assert em <= 0.5 * (ea + eb) + 1e-10


class TestEnergyOf:
    def test_infeasible_field_is_plus_infinity(self):
        grid = box2(ny=9, nz=5)
        mask = np.ones(grid.shape[:-1], dtype=bool)
        prob = ObstacleProblem(grid=grid, obstacles=mask, psi=1.0,
                               witness=1.0)
        u = ScalarField(grid, np.zeros(grid.shape))
        assert energy_of(prob, u) == math.inf

    def test_dirichlet_mismatch_rejected(self):
        grid = box2(ny=9, nz=5)
        prob = LimitProblem(grid, coefficient=1.0, psi=0.0,
                            sigma=BoundaryCondition(("top",), 1.0))
        u = ScalarField(grid, np.zeros(grid.shape))
        with pytest.raises(ValueError):
            energy_of(prob, u)

    def test_minimizer_energy_matches_report(self):
        grid = box2(ny=17, nz=9)
        prob = LimitProblem(grid, coefficient=1.0, psi=0.5,
                            sigma=BoundaryCondition(("top",), 0.0))
        rep = solve_limit_problem(prob)
        assert np.isclose(energy_of(prob, rep.field), rep.total_energy,
                          atol=1e-12)

    def test_minimizer_beats_competitors(self):
        grid = box2(ny=17, nz=9)
        prob = LimitProblem(grid, coefficient=1.0, psi=0.5,
                            sigma=BoundaryCondition(("top",), 0.0))
        rep = solve_limit_problem(prob)
        best = energy_of(prob, rep.field)
        rng = np.random.default_rng(23)
        top = grid.shape[-1] - 1
        for _ in range(20):
            v = rep.field.values + 0.01 * rng.standard_normal(grid.shape)
            v[..., top] = 0.0  # keep the Dirichlet data
            assert energy_of(prob, ScalarField(grid, v)) >= best - 1e-12


class TestValidation:
    def test_witness_must_dominate_psi(self):
        grid = box2(ny=9, nz=5)
        with pytest.raises(ValueError):
            ObstacleProblem(grid=grid, obstacles="all", psi=1.0, witness=0.5)

    def test_sigma_cannot_touch_bottom(self):
        grid = box2(ny=9, nz=5)
        with pytest.raises(ValueError):
            ObstacleProblem(grid=grid, obstacles=None, psi=0.0,
                            sigma=BoundaryCondition(("bottom",), 0.0))

    def test_unknown_obstacle_selector(self):
        grid = box2(ny=9, nz=5)
        with pytest.raises(ValueError):
            ObstacleProblem(grid=grid, obstacles="everything", psi=0.0)
