"""
Sweep, fit and report tests.

Run with: pytest tests/test_harness.py
"""
import logging
import math
import os

import numpy as np
import pandas as pd
import pytest

from src import harness
from src.config import settings
from src.errors import ConfigurationError, FitError, RegimeError, SimulationError
from src.model import Regime
from src.pde2d import Diagnostics

SWEEP_FILE = """name = far
chi = 1
v0 = 1
eps = 0.05
theta = 0.25
sigma = 0.015625
M0 = 40
L = 2
t_max = 0.2
cells_per_unit = 8
seeds = 0, 1
axis.L = 2, 3
axis.eps = 0.05, 0.1, 0.2
"""


def synthetic_frame(regime="far", factor=3.0, censored=False):
    L = np.array([20.0, 30.0, 40.0, 60.0])
    gamma = 16.0
    bound = L ** 2 / gamma + gamma + 1.0
    return pd.DataFrame({
        "index": np.arange(len(L)),
        "L": L,
        "eps": 0.05,
        "M0": 40.0,
        "regime": regime,
        "tau": factor * bound,
        "censored": censored,
        "bound_far": bound,
        "bound_far_shifted": 0.5 * bound,
        "tau_D": 10.0 * factor * bound,
        "censored_D": [False, False, True, False],
        "error": "",
    })


class TestBounds:
    """Regime bound expressions."""

    def test_terms(self, reference_params):
        terms = harness.bound_terms(reference_params)
        reaction = 1.0 / (0.05 * 0.25 * 200.0)
        assert terms["near"] == pytest.approx(4.0 + reaction)
        assert terms["mid"] == pytest.approx(24.0 + reaction)
        assert terms["far"] == pytest.approx(144.0 / 32.0 + 128.0 + reaction)
        assert terms["far_shifted"] == pytest.approx(128.0 + reaction)
        assert harness.regime_bound(reference_params) == terms["mid"]

    def test_no_reaction(self, reference_params):
        assert harness.bound_terms(reference_params.with_updates(eps=0.0))["near"] == math.inf

    def test_shifted_variant(self, reference_params):
        far = reference_params.with_updates(L=40.0)
        terms = harness.bound_terms(far)
        assert harness.regime_bound(far, "shifted") == terms["far_shifted"]
        assert harness.regime_bound(far) == terms["far"]


class TestSweepSpec:
    """Sweep files and point expansion."""

    def test_load(self, tmp_path):
        path = tmp_path / "far.env"
        path.write_text(SWEEP_FILE)
        spec = harness.load_sweep(str(path))
        assert spec.name == "far"
        assert spec.seeds == [0, 1]
        points = spec.points()
        assert len(points) == 2 * 3 * 2
        assert [i for i, _, _ in points] == list(range(12))
        assert {p.L for _, p, _ in points} == {2.0, 3.0}

    def test_gamma_axis(self, quick_params):
        spec = harness.SweepSpec(base=quick_params, axes=[("gamma", [16.0, 32.0])], t_max=1.0)
        gammas = [p.gamma for _, p, _ in spec.points()]
        assert gammas == pytest.approx([16.0, 32.0])

    def test_fingerprint(self, quick_params):
        a = harness.SweepSpec(base=quick_params, t_max=1.0)
        b = harness.SweepSpec(base=quick_params, t_max=1.0)
        c = harness.SweepSpec(base=quick_params, t_max=2.0)
        assert a.fingerprint() == b.fingerprint() != c.fingerprint()

    def test_missing_t_max(self, tmp_path):
        path = tmp_path / "bad.env"
        path.write_text(SWEEP_FILE.replace("t_max = 0.2\n", ""))
        with pytest.raises(ConfigurationError, match="t_max"):
            harness.load_sweep(str(path))

    def test_unknown_axis(self, tmp_path):
        path = tmp_path / "bad.env"
        path.write_text(SWEEP_FILE + "axis.speed = 1, 2\n")
        with pytest.raises(ConfigurationError, match="axis"):
            harness.load_sweep(str(path))

    def test_point_outside_regime(self, tmp_path):
        path = tmp_path / "bad.env"
        path.write_text(SWEEP_FILE + "axis.v0 = 0.5, 2\n")
        with pytest.raises(RegimeError, match="sweep point"):
            harness.load_sweep(str(path))


class TestRunSweep:
    """Pool, store and resume."""

    def fake_point(self, calls):
        def simulate(params, t_max, kind, seed, cells_per_unit, baseline):
            calls.append((params.L, seed))
            return {"L": params.L, "seed": seed, "tau": params.L ** 2, "censored": False}
        return simulate

    def test_resume(self, tmp_path, monkeypatch, quick_params):
        calls = []
        monkeypatch.setattr(harness, "simulate_point", self.fake_point(calls))
        spec = harness.SweepSpec(base=quick_params, axes=[("L", [2.0, 3.0])], t_max=1.0)
        db = str(tmp_path / "sweeps.db")

        first = harness.run_sweep(spec, str(tmp_path / "out"), workers=1, db_path=db)
        assert len(calls) == 2
        assert first.failed == 0
        assert list(first.frame["tau"]) == [4.0, 9.0]
        assert os.path.exists(first.csv_path)

        second = harness.run_sweep(spec, None, workers=1, db_path=db)
        assert len(calls) == 2
        assert second.fingerprint == first.fingerprint
        assert second.frame.equals(first.frame)

    def test_resume_is_logged(self, tmp_path, monkeypatch, quick_params, caplog):
        monkeypatch.setattr(harness, "simulate_point", self.fake_point([]))
        spec = harness.SweepSpec(base=quick_params, axes=[("L", [2.0, 3.0])], t_max=1.0)
        db = str(tmp_path / "sweeps.db")
        caplog.set_level(logging.INFO, logger="src.harness")

        harness.run_sweep(spec, None, workers=1, db_path=db)
        assert "Resuming" not in caplog.text
        caplog.clear()
        harness.run_sweep(spec, None, workers=1, db_path=db)
        assert f"Resuming sweep '{spec.name}'" in caplog.text
        assert "with 2 stored points" in caplog.text

    def test_failures_recorded(self, tmp_path, monkeypatch, quick_params):
        def explode(*args):
            raise SimulationError("non-finite density")

        monkeypatch.setattr(harness, "simulate_point", explode)
        spec = harness.SweepSpec(base=quick_params, t_max=1.0)
        with pytest.raises(SimulationError, match="every point"):
            harness.run_sweep(spec, None, workers=1, db_path=str(tmp_path / "sweeps.db"))

    def test_simulate_point(self, monkeypatch, quick_params):
        monkeypatch.setattr(settings, "baseline_horizon_factor", 2.0)
        monkeypatch.setattr(settings, "baseline_min_horizon", 0.05)
        row = harness.simulate_point(quick_params, 0.1, cells_per_unit=8)
        assert row["censored"]
        assert row["tau"] == 0.1
        assert row["baseline_horizon"] == pytest.approx(0.2)
        assert row["censored_D"]
        assert row["regime"] == "mid"
        assert row["bound"] == row["bound_mid"]

    def test_baseline_when_already_half_depleted(self, monkeypatch, quick_params):
        horizons = []

        def fake_run(initial, params, T_max, stop=None, config=None):
            horizons.append(T_max)
            return None, Diagnostics(times=[0.0, T_max], mass2=[0.1, 0.1])

        monkeypatch.setattr(harness, "run", fake_run)
        row = harness.simulate_point(quick_params, 0.1, cells_per_unit=8)
        assert row["tau"] == 0.0 and not row["censored"]
        assert horizons[1] == settings.baseline_min_horizon
        assert row["baseline_horizon"] == settings.baseline_min_horizon
        assert row["tau_D"] == 0.0 and not row["censored_D"]


class TestFits:
    """Scaling and reaction fits."""

    def test_far_fit(self):
        fit = harness.fit_scaling(synthetic_frame(), Regime.FAR)
        assert fit.C == pytest.approx(3.0)
        assert fit.points == 4
        assert fit.stability == pytest.approx(1.0)
        assert fit.offset == pytest.approx(3.0 * 17.0)
        assert fit.slope_corrected == pytest.approx(2.0)
        assert 0 < fit.slope < 2.0

    def test_shifted_variant(self):
        fit = harness.fit_scaling(synthetic_frame(), Regime.FAR, variant="shifted")
        assert fit.C == pytest.approx(6.0)
        assert fit.to_row()["variant"] == "shifted"

    def test_fit_errors(self):
        with pytest.raises(FitError, match="no points"):
            harness.fit_scaling(synthetic_frame(regime="mid"), Regime.FAR)
        with pytest.raises(FitError, match="censored"):
            harness.fit_scaling(synthetic_frame(censored=True), Regime.FAR)
        with pytest.raises(FitError, match="need 5"):
            harness.fit_scaling(synthetic_frame(), Regime.FAR, min_points=5)

    def test_failed_rows_are_skipped(self):
        frame = synthetic_frame()
        frame.loc[0, "error"] = "SimulationError: boom"
        frame.loc[0, "tau"] = 1e9
        fit = harness.fit_scaling(frame, Regime.FAR, min_points=3)
        assert fit.C == pytest.approx(3.0)

    def test_reaction_fit(self):
        eps = np.array([0.01, 0.02, 0.05, 0.1, 100.0])
        frame = pd.DataFrame({"eps": eps, "tau": 10.0 + 2.0 / eps, "censored": False, "error": ""})
        fit = harness.fit_reaction_scaling(frame)
        assert fit.plateau == pytest.approx(10.02)
        assert fit.slope == pytest.approx(-1.0, abs=0.01)
        assert fit.spread < 1.01

    def test_risky_report(self):
        frame = synthetic_frame()
        frame["eps"] = [0.001, 0.001, 0.05, 0.05]
        report = harness.risky_reaction_report(frame)
        assert list(report["risky"]) == [True, True, False, False]
        assert report["ratio"].to_numpy() == pytest.approx(10.0)
        assert list(report["ratio_is_lower_bound"]) == [False, False, True, False]

    def test_fit_directory(self, tmp_path):
        harness.write_csv(synthetic_frame(), str(tmp_path / "sweep.csv"))
        fits, risky = harness.fit_directory(str(tmp_path))
        assert {(f.regime, f.variant) for f in fits} == {(Regime.FAR, "standard"), (Regime.FAR, "shifted")}
        for name in ("fit.csv", "risky.csv", "summary.txt"):
            assert (tmp_path / name).exists()
        summary = (tmp_path / "summary.txt").read_text()
        assert "regime far (standard): C = 3" in summary
        assert "note: near/standard: no points in regime near" in summary

    def test_fit_directory_missing(self, tmp_path):
        with pytest.raises(ConfigurationError):
            harness.fit_directory(str(tmp_path))
