"""
Parameter, cutoff and initial-data tests.

Run with: pytest tests/test_model.py
"""
import math

import numpy as np
import pytest

from src.errors import ConfigurationError, RegimeError
from src.grids import Grid2D
from src.model import (
    InitialKind,
    PhysicalParams,
    Regime,
    build_params,
    default_grid,
    domain_half_width,
    load_config,
    make_initial,
    plateau,
    psi,
    regime_of,
    rescale,
)

REFERENCE_FILE = """# reference point
chi = 1
v0 = 0.5
eps = 0.05
theta = 0.25
sigma = 0.0078125
M0 = 200
L = 12
t_max = 400
kind = offset-bump
"""


class TestParams:
    """Derived quantities and the regime gate."""

    def test_derived(self, reference_params):
        p = reference_params
        assert p.gamma == pytest.approx(32.0)
        assert p.R0 == pytest.approx(31.0)
        assert p.r0 == pytest.approx(0.5 / 32.0 + 1.0 / math.sqrt(2.0))
        assert p.beta == pytest.approx(0.5)
        assert p.delta == pytest.approx(0.05)
        assert p.half_mass == pytest.approx(math.pi / 4.0)
        assert p.regime() == Regime.MID

    def test_gate_rejects_fast_cells(self):
        with pytest.raises(RegimeError, match="v0"):
            build_params(chi=1.0, v0=1.5, eps=0.05, theta=0.25, sigma=0.25 / 32.0, M0=200.0, L=12.0)

    def test_gate_rejects_weak_attraction(self):
        with pytest.raises(RegimeError, match="gamma"):
            build_params(chi=1.0, v0=0.5, eps=0.05, theta=0.25, sigma=0.25 / 8.0, M0=200.0, L=12.0)

    def test_gate_rejects_small_mass(self):
        with pytest.raises(RegimeError, match="M0"):
            build_params(chi=1.0, v0=0.5, eps=0.05, theta=0.25, sigma=0.25 / 32.0, M0=100.0, L=12.0)

    def test_gate_can_be_skipped(self):
        p = build_params(check_regime=False, chi=1.0, v0=1.0, eps=0.05, theta=0.25, sigma=0.25 / 16.0, M0=0.0, L=2.0)
        assert p.M0 == 0.0
        with pytest.raises(RegimeError, match="nonnegative"):
            build_params(check_regime=False, chi=1.0, v0=1.0, eps=0.05, theta=0.25, sigma=0.25 / 16.0, M0=-1.0, L=2.0)

    def test_beta_must_match(self):
        with pytest.raises(RegimeError, match="beta"):
            build_params(chi=1.0, v0=0.5, eps=0.05, theta=0.25, sigma=0.25 / 32.0, M0=200.0, L=12.0, beta=0.4)

    def test_with_updates_recomputes_cutoff(self, reference_params):
        p = reference_params.with_updates(v0=0.8)
        assert p.beta == pytest.approx(0.8)
        assert p.delta == pytest.approx(0.08)
        assert p.R0 == pytest.approx(32.0 / 1.6 - 1.0)

    def test_regime_boundaries(self):
        assert regime_of(2.0, 0.5, 31.0) == Regime.NEAR
        assert regime_of(31.0, 0.5, 31.0) == Regime.MID
        assert regime_of(31.5, 0.5, 31.0) == Regime.FAR

    def test_rescale_identity_units(self):
        physical = PhysicalParams(
            kappa=1.0, chi=1.0, v0=0.5, eps=0.05, a=1.0, sigma=0.25 / 32.0,
            theta=0.25, l=1.0, L=12.0, M0=200.0, beta=0.5, delta=0.05,
        )
        p = rescale(physical)
        assert p.gamma == pytest.approx(32.0)
        assert p.v0 == pytest.approx(0.5)
        assert p.delta == pytest.approx(0.05)

    def test_rescale_lengths(self):
        physical = PhysicalParams(
            kappa=2.0, chi=2.0, v0=1.0, eps=0.1, a=1.0, sigma=0.25 / 32.0,
            theta=0.25, l=1.0, L=12.0, M0=200.0, beta=0.5, delta=0.05,
        )
        p = rescale(physical)
        assert p.chi == pytest.approx(1.0)
        assert p.v0 == pytest.approx(0.5)
        assert p.eps == pytest.approx(0.05)


class TestCutoff:
    """Ψ is linear, bridged, then capped."""

    def test_shape(self, reference_params):
        spec = reference_params.cutoff()
        z = np.linspace(0.0, 3.0 * spec.beta, 3001)
        values = psi(z, spec)
        assert np.all(np.diff(values) >= -1e-15)
        assert np.all(values >= np.minimum(spec.chi * z, spec.v0) - 1e-15)
        assert np.all(values <= spec.v0 + 1e-15)
        below = z <= spec.bridge_start
        assert np.allclose(values[below], spec.chi * z[below])
        assert np.allclose(values[z >= spec.beta], spec.v0)

    def test_continuous_at_joins(self, reference_params):
        spec = reference_params.cutoff()
        for z in (spec.bridge_start, spec.beta):
            assert float(psi(z - 1e-10, spec)) == pytest.approx(float(psi(z + 1e-10, spec)), abs=1e-8)


class TestConfig:
    """Flat parameter files."""

    def test_load(self, tmp_path):
        path = tmp_path / "reference.env"
        path.write_text(REFERENCE_FILE)
        params, options = load_config(str(path))
        assert params.gamma == pytest.approx(32.0)
        assert options == {"t_max": "400", "kind": "offset-bump"}

    def test_keys_are_case_sensitive(self, tmp_path):
        path = tmp_path / "bad.env"
        path.write_text(REFERENCE_FILE.replace("L = 12", "l = 12"))
        with pytest.raises(ConfigurationError, match="Unknown keys"):
            load_config(str(path))

    def test_non_numeric(self, tmp_path):
        path = tmp_path / "bad.env"
        path.write_text(REFERENCE_FILE.replace("eps = 0.05", "eps = small"))
        with pytest.raises(ConfigurationError, match="Non-numeric"):
            load_config(str(path))

    def test_regime_violation_is_reported(self, tmp_path):
        path = tmp_path / "bad.env"
        path.write_text(REFERENCE_FILE.replace("v0 = 0.5", "v0 = 2"))
        with pytest.raises(RegimeError):
            load_config(str(path))

    def test_to_config_round_trip(self, tmp_path, reference_params):
        path = tmp_path / "out.env"
        path.write_text(reference_params.to_config())
        params, _ = load_config(str(path))
        assert params == reference_params


class TestInitialData:
    """Ring and bump data on the 2D grid."""

    def test_plateau(self):
        r = np.array([0.0, 0.9, 0.95, 1.0, 1.2])
        eta = plateau(r, 0.05)
        assert eta[0] == 1.0 and eta[1] == 1.0 and eta[2] == 1.0
        assert eta[3] == 0.0 and eta[4] == 0.0

    def test_domain_covers_reach(self, quick_params):
        assert domain_half_width(quick_params) >= quick_params.L + 5.0 / quick_params.v0

    def test_radial_ring(self, quick_params):
        data = make_initial(quick_params)
        grid = data.rho1.grid
        assert data.rho1.mass() == pytest.approx(quick_params.M0, rel=1e-12)
        theta = quick_params.theta
        assert 7.0 * math.pi * theta / 4.0 <= data.rho2.mass() <= 2.0 * math.pi * theta
        assert data.rho2.max() <= 2.0 * theta * (1.0 + 1e-12)

        R = grid.radius()
        pad = math.sqrt(2.0) * grid.h
        assert np.all(data.rho1.values[R < quick_params.L / 2.0 - pad] == 0.0)
        assert np.all(data.rho1.values[R > quick_params.L + pad] == 0.0)
        assert np.all(data.rho1.values >= 0.0)

    def test_zero_mass(self, quick_params):
        empty = build_params(check_regime=False, **{**quick_params.model_dump(), "M0": 0.0})
        data = make_initial(empty)
        reference = make_initial(quick_params)
        assert not np.any(data.rho1.values)
        assert data.rho1.grid == reference.rho1.grid
        assert np.array_equal(data.rho2.values, reference.rho2.values)

    def test_offset_bump_seed(self, quick_params):
        first = make_initial(quick_params, InitialKind.OFFSET_BUMP, seed=7)
        second = make_initial(quick_params, InitialKind.OFFSET_BUMP, seed=7)
        assert first.angle == second.angle
        assert np.array_equal(first.rho1.values, second.rho1.values)

        X, Y = first.rho1.grid.mesh()
        mass = first.rho1.values.sum()
        cx = (X * first.rho1.values).sum() / mass
        cy = (Y * first.rho1.values).sum() / mass
        expected = 0.75 * quick_params.L
        assert cx == pytest.approx(expected * math.cos(first.angle), abs=0.05)
        assert cy == pytest.approx(expected * math.sin(first.angle), abs=0.05)

    def test_coarse_grid_rejected(self, quick_params):
        grid = Grid2D.with_spacing(domain_half_width(quick_params), 0.25)
        with pytest.raises(ConfigurationError, match="coarse"):
            make_initial(quick_params, grid=grid)

    def test_small_domain_rejected(self, quick_params):
        with pytest.raises(ConfigurationError, match="cover"):
            make_initial(quick_params, grid=Grid2D(n=64, half_width=4.0))

    def test_default_grid_spacing(self, quick_params):
        grid = default_grid(quick_params, 8)
        assert grid.h <= 0.125 + 1e-12
        assert grid.half_width >= domain_half_width(quick_params)
