"""
Dominating potential tests.

Run with: pytest tests/test_potential.py
"""
import math

import numpy as np
import pytest

from src.errors import InputError, RegimeError
from src.model import Params
from src.potential import (
    build_potential,
    default_r_grid,
    sample_grid,
    standard_samples,
    verify_domination,
)


class TestPotential:
    """Shape of dH and H."""

    def test_gate(self):
        weak = Params.model_construct(
            chi=1.0, v0=1.0, eps=0.0, theta=0.25, sigma=0.25 / 8.0, M0=40.0, L=2.0, beta=1.0, delta=0.1, delta0=0.05,
        )
        with pytest.raises(RegimeError, match="gamma"):
            build_potential(weak)

    def test_branches(self, reference_params):
        pot = build_potential(reference_params)
        v0 = reference_params.v0
        assert pot.dH(0.5 * pot.r0) == pytest.approx(v0)
        assert pot.dH(2.0) == pytest.approx(-v0)
        assert pot.dH(pot.R0 - 2.0) == pytest.approx(-v0)
        r = 2.0 * pot.R0
        assert pot.dH(r) == pytest.approx(-pot.gamma / (4.0 * r))

    def test_dH_continuous(self, reference_params):
        pot = build_potential(reference_params)
        for joint in (pot.r0, 1.0, pot.R0 - 1.0, pot.R0):
            assert pot.dH(joint - 1e-9) == pytest.approx(pot.dH(joint + 1e-9), abs=1e-6)

    def test_H_integrates_dH(self, reference_params):
        pot = build_potential(reference_params)
        r = np.array([0.3, pot.r0 + 0.1, 0.95, 5.0, pot.R0 - 0.5, pot.R0 + 3.0])
        step = 1e-5
        slope = (pot.H(r + step) - pot.H(r - step)) / (2.0 * step)
        assert slope == pytest.approx(pot.dH(r), abs=1e-5)

    def test_H_continuous(self, reference_params):
        pot = build_potential(reference_params)
        for joint in (pot.r0, 1.0, pot.R0 - 1.0, pot.R0):
            assert pot.H(joint - 1e-10) == pytest.approx(pot.H(joint + 1e-10), abs=1e-7)

    def test_far_field(self, reference_params):
        pot = build_potential(reference_params)
        r = 3.0 * pot.R0
        assert pot.H(r) == pytest.approx(-0.25 * pot.gamma * math.log(r))

    def test_weights(self, reference_params):
        pot = build_potential(reference_params)
        R = 2.0 * pot.R0
        exponent = 2.0 - 0.25 * pot.gamma
        assert pot.tail_weight(R) == pytest.approx(2.0 * math.pi * R ** exponent / -exponent)
        assert pot.tail_weight(4.0) > pot.tail_weight(8.0) > 0
        assert pot.annulus_weight(4.0, 8.0) == pytest.approx(pot.tail_weight(4.0) - pot.tail_weight(8.0))


class TestDomination:
    """dH against the boundary drift of test densities."""

    def test_reduced_form_holds(self, quick_params):
        pot = build_potential(quick_params)
        samples = standard_samples(quick_params, n_random=3, n_extremal=2, seed=1, grid=sample_grid(32))
        report = verify_domination(pot, quick_params, samples, default_r_grid(quick_params, 8), angles=64)
        assert report.rows
        assert report.passed, report.violations[:3]
        frame = report.to_frame()
        assert list(frame.columns) == ["r", "g_id", "lhs", "rhs", "margin", "rhs_literal", "margin_literal"]
        assert set(frame["g_id"]) >= {"full-ball", "extremal-sup"}

    def test_samples_are_members(self, quick_params):
        samples = standard_samples(quick_params, n_random=5, n_extremal=3, seed=2, grid=sample_grid(32))
        assert len(samples) == 1 + 3 + 5
        assert len({s.gid for s in samples}) == len(samples)

    def test_radii_above_r0(self, quick_params):
        pot = build_potential(quick_params)
        samples = standard_samples(quick_params, n_random=0, n_extremal=1, grid=sample_grid(32))
        with pytest.raises(InputError, match="r0"):
            verify_domination(pot, quick_params, samples, [0.5 * quick_params.r0])
