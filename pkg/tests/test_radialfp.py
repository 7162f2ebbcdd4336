"""
Radial Fokker-Planck, dual equation and barrier tests.

Run with: pytest tests/test_radialfp.py
Long barrier runs are marked slow.
"""
import math

import numpy as np
import pytest

from src.errors import CFLError, ConfigurationError, InputError, RegimeError
from src.grids import RadialProfile
from src.potential import build_potential
from src.radialfp import (
    BarrierSpec,
    FlatPotential,
    MassCheckReport,
    RadialGrid,
    RadialTrajectory,
    barrier_spec,
    boundary_lower_bound,
    check_barrier,
    comparison_check,
    duality_check,
    duality_refinement,
    fp_dt_limit,
    radial_mass_profile,
    ring_mass_profile,
    run_barrier,
    solve_dual,
    solve_Mu,
    solve_u,
    stage1_initial,
    stage1_mass_check,
    stage2_initial,
    stage2_mass_check,
)


class TestGrid:
    """Radial grid geometry and resolution rules."""

    def test_volumes(self):
        grid = RadialGrid(r_max=10.0, n=40)
        assert grid.volumes.sum() == pytest.approx(math.pi * 100.0)
        assert grid.centers[0] == pytest.approx(0.125)

    def test_for_params(self, quick_params):
        grid = RadialGrid.for_params(quick_params)
        assert grid.r_max == pytest.approx(4.0 * quick_params.R0)
        assert grid.dr <= quick_params.r0 / 10.0 + 1e-12
        grid.validate(build_potential(quick_params))

    def test_validate(self, quick_params):
        pot = build_potential(quick_params)
        with pytest.raises(ConfigurationError, match="4 R0"):
            RadialGrid(r_max=2.0 * pot.R0, n=2000).validate(pot)
        with pytest.raises(ConfigurationError, match="resolve"):
            RadialGrid(r_max=4.0 * pot.R0, n=50).validate(pot)
        RadialGrid(r_max=1.0, n=2).validate(FlatPotential())


class TestFokkerPlanck:
    """u and M_u."""

    def test_heat_equation(self):
        grid = RadialGrid(r_max=10.0, n=400)
        t0, T = 1.0, 1.0
        u0 = np.exp(-grid.centers ** 2 / (4.0 * t0)) / (4.0 * math.pi * t0)
        traj = solve_u(FlatPotential(), u0, T, grid, save_times=[T])
        exact = np.exp(-grid.centers ** 2 / (4.0 * (t0 + T))) / (4.0 * math.pi * (t0 + T))
        assert np.abs(traj.values[-1] - exact).max() <= 5e-3 * exact.max()

    def test_conservation_and_sign(self, quick_params):
        pot = build_potential(quick_params)
        grid = RadialGrid.for_params(quick_params)
        profile = ring_mass_profile(quick_params.with_updates(L=6.0), grid)
        traj = solve_Mu(pot, profile, 5.0, grid, save_times=[1.0, 5.0])
        assert list(traj.times) == [0.0, 1.0, 5.0]
        for M in traj.values:
            assert M[0] == 0.0
            assert np.all(np.diff(M) >= -1e-9 * quick_params.M0)
            assert M[-1] == pytest.approx(quick_params.M0, rel=1e-9)

    def test_mass_moves_inward(self, quick_params):
        pot = build_potential(quick_params)
        grid = RadialGrid.for_params(quick_params)
        profile = ring_mass_profile(quick_params.with_updates(L=6.0), grid)
        traj = solve_Mu(pot, profile, 5.0, grid, save_times=[5.0])
        inner = np.interp(4.0, traj.nodes, traj.values[-1])
        assert inner > np.interp(4.0, traj.nodes, traj.values[0])

    def test_rejects_bad_profiles(self, quick_params):
        pot = build_potential(quick_params)
        grid = RadialGrid.for_params(quick_params)
        shifted = RadialProfile(r=np.array([0.0, 28.0]), values=np.array([1.0, 2.0]))
        with pytest.raises(InputError, match="expected 0"):
            solve_Mu(pot, shifted, 1.0, grid)
        falling = RadialProfile(r=np.array([0.0, 5.0, 28.0]), values=np.array([0.0, 2.0, 1.0]))
        with pytest.raises(InputError, match="nondecreasing"):
            solve_Mu(pot, falling, 1.0, grid)

    def test_dt_above_limit(self, quick_params):
        pot = build_potential(quick_params)
        grid = RadialGrid.for_params(quick_params)
        with pytest.raises(CFLError):
            solve_u(pot, np.zeros(grid.n), 1.0, grid, dt=2.0 * fp_dt_limit(pot, grid))

    def test_negative_u0(self):
        grid = RadialGrid(r_max=1.0, n=4)
        with pytest.raises(InputError):
            solve_u(FlatPotential(), np.array([1.0, -1.0, 0.0, 0.0]), 1.0, grid)


class TestDual:
    """The dual equation and the duality identity."""

    def test_maximum_principle(self, quick_params):
        pot = build_potential(quick_params)
        grid = RadialGrid.for_params(quick_params)
        traj = solve_dual(pot, stage1_initial(quick_params.R0), 10.0, grid, save_times=[2.0, 10.0])
        for f in traj.values:
            assert f.min() >= -1e-10 and f.max() <= 1.0 + 1e-12
            assert np.all(np.diff(f) <= 1e-9)

    def test_rejects_increasing_f0(self, quick_params):
        grid = RadialGrid.for_params(quick_params)
        rising = RadialProfile(r=np.array([0.0, 28.0]), values=np.array([0.0, 1.0]))
        with pytest.raises(InputError, match="nonincreasing"):
            solve_dual(build_potential(quick_params), rising, 1.0, grid)

    def test_flat_duality(self):
        grid = RadialGrid(r_max=20.0, n=200)
        u0 = np.exp(-grid.centers ** 2)
        f0 = RadialProfile(r=np.array([0.0, 3.0, 5.0, 20.0]), values=np.array([1.0, 1.0, 0.0, 0.0]))
        # a shared dt makes the two discrete evolutions exact adjoints away from r_max
        u = solve_u(FlatPotential(), u0, 2.0, grid, save_times=[2.0], dt=1e-3)
        f = solve_dual(FlatPotential(), f0, 2.0, grid, save_times=[2.0], dt=1e-3)
        assert duality_check(u, f, 2.0) < 1e-6

    def test_grid_mismatch(self):
        a = RadialTrajectory(RadialGrid(1.0, 4), np.zeros(4), np.array([0.0]), np.zeros((1, 4)))
        b = RadialTrajectory(RadialGrid(2.0, 4), np.zeros(4), np.array([0.0]), np.zeros((1, 4)))
        with pytest.raises(InputError, match="mismatch"):
            duality_check(a, b, 0.0)

    def test_refinement(self, quick_params):
        table = duality_refinement(quick_params, levels=(1, 2))
        assert list(table["level"]) == [1, 2]
        assert table["cells"].iloc[1] > table["cells"].iloc[0]
        assert (table["discrepancy"] < 1e-2).all()

    def test_trajectory_lookup(self):
        grid = RadialGrid(1.0, 2)
        traj = RadialTrajectory(grid, grid.centers, np.array([0.0, 1.0]), np.array([[0.0, 0.0], [2.0, 4.0]]))
        assert traj.at(0.5) == pytest.approx([1.0, 2.0])
        with pytest.raises(InputError):
            traj.index(0.5)
        with pytest.raises(InputError):
            traj.at(1.5)


class TestBarrierSpec:
    """Subsolution profiles and schedule."""

    def test_boundary_bound(self):
        assert boundary_lower_bound(16.0) == pytest.approx(1.0 - 1.5 ** -2)
        assert boundary_lower_bound(32.0) > boundary_lower_bound(16.0)
        with pytest.raises(RegimeError):
            boundary_lower_bound(15.0)

    def test_stage1_profile(self, reference_params):
        spec = barrier_spec(reference_params, 1)
        R0 = spec.R0
        assert spec.omega(R0) == pytest.approx(0.5)
        assert spec.omega(1.5 * R0) == pytest.approx(0.0)
        assert spec.omega(0.0) == pytest.approx(0.5)
        assert spec.phi(0.0) == pytest.approx(1.0)
        assert spec.phi(100.0) < 1.0
        assert spec.bound_radius(0.0) == pytest.approx(1.25 * R0)
        assert spec.anchor == R0 and spec.level == 0.25

    def test_stage2_schedule(self, reference_params):
        spec = barrier_spec(reference_params, 2)
        v0 = reference_params.v0
        assert spec.d0 == pytest.approx(2.0 / v0)
        assert spec.d1 == pytest.approx(4.0 / v0)
        assert spec.t0 == 0.0  # L < R0
        assert spec.t_star == pytest.approx(16.0 / v0 * (4.0 * spec.R0 - 4.0 / v0))
        assert spec.phi(spec.t_star) == pytest.approx(spec.phi(2.0 * spec.t_star))
        assert spec.phi(spec.t_star) == pytest.approx((spec.d1 - spec.d0) / (4.0 * spec.R0 - spec.d0))
        assert not spec.bound_applies(0.5 * spec.t_star)
        assert spec.bound_applies(spec.t_star)
        assert 2 ** spec.K0 * spec.d0 >= spec.R0 - 1.0

    def test_far_start(self, reference_params):
        far = barrier_spec(reference_params.with_updates(L=40.0), 2)
        assert far.t0 == pytest.approx(64.0 * 9.0 ** 2 / 32.0)
        assert far.start == far.t0

    def test_initial_sandwich(self):
        spec = BarrierSpec(stage=1, R0=15.0, gamma=32.0, v0=1.0, L=10.0)
        f0 = stage1_initial(15.0)
        spec.check_initial(f0.r, f0.values)
        with pytest.raises(InputError):
            spec.check_initial(f0.r, 0.5 * f0.values)
        stage2 = BarrierSpec(stage=2, R0=15.0, gamma=32.0, v0=1.0, L=10.0)
        g0 = stage2_initial(1.0)
        stage2.check_initial(g0.r, g0.values)

    def test_stage_number(self):
        with pytest.raises(ConfigurationError):
            BarrierSpec(stage=3, R0=15.0, gamma=32.0, v0=1.0, L=10.0)


class TestBarrierRuns:
    """Lower bounds on computed dual solutions."""

    def test_stage1_early(self, quick_params):
        pot = build_potential(quick_params)
        spec = barrier_spec(quick_params, 1)
        grid = RadialGrid.for_params(quick_params)
        traj = solve_dual(pot, spec.initial(), 5.0, grid, save_times=np.linspace(0.0, 5.0, 6))
        report = check_barrier(traj, spec, pot)
        assert report.passed
        assert len(report.rows) == 6
        assert {"t", "bound_margin", "anchor_value", "boundary_margin", "subsolution_margin"} <= set(report.to_frame())
        assert report.extras["t_star"] == pytest.approx(spec.t_star)

    @pytest.mark.slow
    def test_stage1(self, barrier_params):
        _, report = run_barrier(barrier_params, 1, save_count=41)
        assert report.passed, report.to_frame().nsmallest(3, "bound_margin")

    @pytest.mark.slow
    def test_stage2(self, barrier_params):
        _, report = run_barrier(barrier_params, 2, save_count=41)
        assert report.passed, report.to_frame().nsmallest(3, "bound_margin")
        assert report.extras["boundary_ratio"] >= 0.5
        assert report.extras["c2_ratio"] <= 2.0


class TestMassChecks:
    """Stage mass fractions and the 2D comparison."""

    def trajectory(self, fractions, M0, radius, times):
        grid = RadialGrid(r_max=2.0 * radius, n=4)
        nodes = grid.edges
        values = np.array([np.interp(nodes, [0.0, radius, 2.0 * radius], [0.0, f * M0, M0]) for f in fractions])
        return RadialTrajectory(grid, nodes, np.asarray(times, dtype=float), values, kind="M")

    def test_stage1_report(self, reference_params):
        traj = self.trajectory([0.1, 0.3, 0.5], reference_params.M0, 2.0 * reference_params.R0, [0.0, 1.0, 2.0])
        report = stage1_mass_check(traj, reference_params)
        assert report.after == 0.0
        assert not report.passed
        assert report.worst == pytest.approx(0.1)

    def test_stage2_fitted_constant(self, reference_params):
        spec = barrier_spec(reference_params, 2)
        times = [0.0, 0.5 * spec.t_star, spec.t_star, 2.0 * spec.t_star]
        traj = self.trajectory([0.0, 0.1, 0.25, 0.3], reference_params.M0, 5.0 / reference_params.v0, times)
        report = stage2_mass_check(traj, reference_params)
        assert report.passed
        assert report.fitted_C1 == pytest.approx(spec.t_star * reference_params.v0 ** 2 / reference_params.gamma)

    def test_report_without_times(self):
        report = MassCheckReport(radius=1.0, level=0.2, after=5.0, times=np.array([0.0, 1.0]), fractions=np.array([0.5, 0.5]))
        assert not report.passed
        assert math.isnan(report.worst)

    def test_radial_mass_profile(self):
        grid = RadialGrid(r_max=10.0, n=20)
        radii = np.array([0.0, 1.0, 2.0, 4.0])
        masses = np.array([0.0, 1.0, 0.9, 3.0])
        profile = radial_mass_profile(radii, masses, grid)
        assert profile.values[0] == 0.0
        assert np.all(np.diff(profile.values) >= 0)
        assert profile.values[-1] == pytest.approx(3.0)

    def test_comparison(self, reference_params):
        grid = RadialGrid(r_max=10.0, n=4)
        mu = RadialTrajectory(grid, grid.edges, np.array([0.0, 1.0]), np.tile(np.linspace(0.0, 8.0, 5), (2, 1)), kind="M")
        M = np.array([[4.0], [3.5]])
        report = comparison_check([5.0], [0.0, 1.0], M, mu, reference_params)
        assert report.passed
        assert report.worst_margin == pytest.approx(3.5 - 4.0 + math.pi * reference_params.theta)
        with pytest.raises(InputError, match="disjoint"):
            comparison_check([5.0], [2.0, 3.0], M, mu, reference_params)
