"""
Parameter sweeps, half-time scaling fits and reports.

A sweep runs every point of a cartesian product of parameter axes twice:
with chemotaxis (τ) and as a diffusion-only baseline (τ_D). Points run in a
process pool, are cached in the sqlite store and merged by index.
"""
import hashlib
import itertools
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, field_validator

from . import store
from .config import parse_list, read_flat_file, settings
from .errors import ConfigurationError, FitError, RegimeError, SimulationError
from .model import InitialKind, Params, Regime, build_params, default_grid, make_initial, regime_of
from .pde2d import SimConfig, half_time, run

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.10g"
PARAM_COLUMNS = ["chi", "v0", "eps", "theta", "sigma", "M0", "L"]
DERIVED_AXES = ("gamma",)  # gamma sets sigma = theta chi / gamma
RISKY_LEVEL = 0.2


# ============ Bound expressions ============

def bound_terms(params: Params) -> Dict[str, float]:
    """The three regime bounds of the half-time estimate plus the (L − R0)² variant."""
    v0, gamma = params.v0, params.gamma
    reaction = math.inf if params.eps * params.M0 == 0 else 1.0 / (params.eps * v0 ** 2 * params.M0)
    return {
        "near": v0 ** -2 + reaction,
        "mid": params.L / v0 + reaction,
        "far": params.L ** 2 / gamma + gamma / v0 ** 2 + reaction,
        "far_shifted": max(params.L - params.R0, 0.0) ** 2 / gamma + gamma / v0 ** 2 + reaction,
    }


def regime_bound(params: Params, variant: str = "standard") -> float:
    terms = bound_terms(params)
    regime = params.regime()
    if regime == Regime.FAR and variant == "shifted":
        return terms["far_shifted"]
    return terms[regime.value]


# ============ Sweep spec ============

class SweepSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "sweep"
    base: Params
    axes: List[Tuple[str, List[float]]] = []
    cells_per_unit: int = settings.cells_per_unit
    t_max: float
    seeds: List[int] = [0]
    kind: InitialKind = InitialKind.RADIAL_RING
    baseline: bool = True

    @field_validator("axes")
    @classmethod
    def _known_axes(cls, axes):
        for name, values in axes:
            if name not in PARAM_COLUMNS and name not in DERIVED_AXES:
                raise ValueError(f"unknown sweep axis: {name}")
            if not values:
                raise ValueError(f"axis {name} has no values")
        return axes

    def points(self) -> List[Tuple[int, Params, int]]:
        """(index, params, seed) for every point; any point outside the regime fails here."""
        names = [name for name, _ in self.axes]
        grids = [values for _, values in self.axes]
        out = []
        index = 0
        for combo in itertools.product(*grids):
            changes = {}
            for name, value in zip(names, combo):
                if name == "gamma":
                    theta = changes.get("theta", self.base.theta)
                    chi = changes.get("chi", self.base.chi)
                    changes["sigma"] = theta * chi / value
                else:
                    changes[name] = value
            try:
                params = self.base.with_updates(**changes) if changes else self.base
            except RegimeError as e:
                raise RegimeError(f"sweep point {dict(zip(names, combo))}: {e}") from e
            for seed in self.seeds:
                out.append((index, params, seed))
                index += 1
        return out

    def fingerprint(self) -> str:
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()


def load_sweep(path: str) -> SweepSpec:
    """Flat sweep file: base parameter keys, `axis.<name> = v1, v2, ...` and run options."""
    values = read_flat_file(path)
    axes = []
    for key in list(values):
        if key.startswith("axis."):
            raw = values.pop(key)
            try:
                axes.append((key[len("axis."):], [float(v) for v in parse_list(raw)]))
            except ValueError as e:
                raise ConfigurationError(f"Non-numeric axis value in {path}: {key} = {raw}") from e

    options = {}
    for key in ("name", "cells_per_unit", "t_max", "seeds", "kind", "baseline"):
        if key in values:
            options[key] = values.pop(key)
    if "t_max" not in options:
        raise ConfigurationError(f"Sweep file {path} needs t_max")
    if values.pop("units", "dimensionless") != "dimensionless":
        raise ConfigurationError("sweep files are dimensionless")

    unknown = sorted(set(values) - set(Params.model_fields))
    if unknown:
        raise ConfigurationError(f"Unknown keys in {path}: {', '.join(unknown)}")
    try:
        base = build_params(**{k: float(v) for k, v in values.items()})
        spec = SweepSpec(
            name=options.get("name", os.path.splitext(os.path.basename(path))[0]),
            base=base,
            axes=axes,
            cells_per_unit=int(options.get("cells_per_unit", settings.cells_per_unit)),
            t_max=float(options["t_max"]),
            seeds=[int(s) for s in parse_list(options.get("seeds", "0"))],
            kind=InitialKind(options.get("kind", InitialKind.RADIAL_RING.value)),
            baseline=options.get("baseline", "true").lower() in ("1", "true", "yes"),
        )
    except (ValueError, TypeError) as e:
        if isinstance(e, RegimeError):
            raise
        raise ConfigurationError(f"Invalid sweep file {path}: {e}") from e

    spec.points()  # regime gate for every point before launch
    return spec


# ============ Running points ============

def simulate_point(
    params: Params,
    t_max: float,
    kind: InitialKind = InitialKind.RADIAL_RING,
    seed: Optional[int] = None,
    cells_per_unit: Optional[int] = None,
    baseline: bool = True,
) -> Dict[str, object]:
    """One sweep row: τ, the baseline τ_D, bound terms and flags."""
    grid = default_grid(params, cells_per_unit)
    initial = make_initial(params, kind, grid, seed)

    _, diag = run(initial, params, t_max)
    tau = half_time(diag, params.theta)
    censored = diag.censored(params.theta)

    row: Dict[str, object] = {k: getattr(params, k) for k in PARAM_COLUMNS}
    row.update({
        "seed": seed,
        "gamma": params.gamma,
        "R0": params.R0,
        "regime": params.regime().value,
        "tau": tau if not censored else t_max,
        "censored": censored,
        "partial": diag.partial,
        "cumulative_h": diag.cumulative_h[-1] if diag.cumulative_h else 0.0,
        "leakage": diag.leakage[-1] if diag.leakage else 0.0,
    })

    if baseline:
        horizon = max(
            settings.baseline_horizon_factor * (tau if not censored else t_max),
            settings.baseline_min_horizon,
        )
        _, base_diag = run(initial, params, horizon, config=SimConfig(chemotaxis=False))
        base_censored = base_diag.censored(params.theta)
        row.update({
            "tau_D": horizon if base_censored else half_time(base_diag, params.theta),
            "censored_D": base_censored,
            "baseline_horizon": horizon,
        })

    terms = bound_terms(params)
    row.update({f"bound_{k}": v for k, v in terms.items()})
    row["bound"] = regime_bound(params)
    return row


def _run_point_task(payload: Dict) -> Tuple[int, Dict, Optional[str], float]:
    """Process-pool entry point; failures come back as an error string."""
    start = time.perf_counter()
    index = payload["index"]
    try:
        params = build_params(**payload["params"])
        row = simulate_point(
            params,
            payload["t_max"],
            InitialKind(payload["kind"]),
            payload["seed"],
            payload["cells_per_unit"],
            payload["baseline"],
        )
        error = None
    except Exception as e:
        row = {}
        error = f"{type(e).__name__}: {e}"
    return index, row, error, time.perf_counter() - start


@dataclass
class SweepResult:
    fingerprint: str
    frame: pd.DataFrame
    failed: int = 0
    csv_path: Optional[str] = None


def run_sweep(
    spec: SweepSpec,
    out_dir: Optional[str] = None,
    workers: Optional[int] = None,
    db_path: Optional[str] = None,
) -> SweepResult:
    """Run every point not already stored, then write sweep.csv sorted by point index."""
    workers = workers or settings.sweep_workers
    fingerprint = spec.fingerprint()
    points = spec.points()

    store.init_db(db_path)
    previous = next((s for s in store.list_sweeps(db_path) if s["fingerprint"] == fingerprint), None)
    if previous:
        logger.info(
            f"Resuming sweep '{previous['name']}' registered {previous['created_at']} "
            f"with {previous['points']} stored points"
        )
    store.register_sweep(fingerprint, spec.name, spec.model_dump(mode="json"), db_path)
    done = store.get_points(fingerprint, db_path)
    payloads = [
        {
            "index": index,
            "params": params.model_dump(),
            "seed": seed,
            "kind": spec.kind.value,
            "t_max": spec.t_max,
            "cells_per_unit": spec.cells_per_unit,
            "baseline": spec.baseline,
        }
        for index, params, seed in points
        if index not in done
    ]
    logger.info(
        f"Sweep '{spec.name}' ({fingerprint[:12]}): {len(points)} points, "
        f"{len(points) - len(payloads)} stored, {len(payloads)} to run on {workers} workers"
    )

    def record(index, row, error, wall):
        params = next(p for i, p, _ in points if i == index).model_dump()
        store.save_point(fingerprint, index, params, row, error, wall, db_path)
        if error:
            logger.warning(f"  point {index} failed after {wall:.1f}s: {error}")
        else:
            logger.info(f"  point {index} done in {wall:.1f}s: tau={row.get('tau'):.5g}")

    if workers <= 1 or len(payloads) <= 1:
        for payload in payloads:
            record(*_run_point_task(payload))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_point_task, payload) for payload in payloads]
            for future in as_completed(futures):
                record(*future.result())

    stored = store.get_points(fingerprint, db_path)
    rows = []
    failed = 0
    for index, _, _ in points:
        entry = stored[index]
        row = {"index": index, **entry["result"], "error": entry["error"] or ""}
        failed += bool(entry["error"])
        rows.append(row)
    if points and failed == len(points):
        raise SimulationError(f"every point of sweep '{spec.name}' failed")

    frame = pd.DataFrame(rows).sort_values("index").reset_index(drop=True)
    result = SweepResult(fingerprint=fingerprint, frame=frame, failed=failed)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        result.csv_path = os.path.join(out_dir, "sweep.csv")
        write_csv(frame, result.csv_path)
    return result


def write_csv(frame: pd.DataFrame, path: str):
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote {path} ({len(frame)} rows)")


# ============ Fits ============

@dataclass
class ScalingFit:
    regime: Regime
    C: float
    points: int
    variant: str = "standard"
    slope: float = math.nan
    slope_corrected: float = math.nan
    offset: float = math.nan
    stability: float = math.nan  # max/min of τ/bound across distinct L
    residuals: pd.DataFrame = field(default_factory=pd.DataFrame)

    def to_row(self) -> Dict[str, object]:
        return {
            "regime": self.regime.value,
            "variant": self.variant,
            "points": self.points,
            "C": self.C,
            "slope": self.slope,
            "slope_corrected": self.slope_corrected,
            "offset": self.offset,
            "stability": self.stability,
        }


def _usable(frame: pd.DataFrame) -> pd.DataFrame:
    if frame.empty:
        return frame
    ok = frame.copy()
    if "error" in ok:
        ok = ok[ok["error"].fillna("") == ""]
    return ok


def fit_scaling(frame: pd.DataFrame, regime: Regime, min_points: int = 4, variant: str = "standard") -> ScalingFit:
    """
    Max-ratio constant C = max τ/bound over the regime's uncensored points,
    plus log-log slopes of τ against L (raw, and after removing the offset a of τ ≈ a + bL²).
    """
    regime = Regime(regime)
    rows = _usable(frame)
    if not rows.empty:
        rows = rows[rows["regime"] == regime.value]
    if rows.empty:
        raise FitError(f"no points in regime {regime.value}")
    uncensored = rows[~rows["censored"].astype(bool)]
    if uncensored.empty:
        raise FitError(f"all {len(rows)} points in regime {regime.value} are censored")
    if len(uncensored) < min_points:
        raise FitError(f"regime {regime.value} has {len(uncensored)} uncensored points, need {min_points}")

    if regime == Regime.FAR and variant == "shifted":
        bound = uncensored["bound_far_shifted"].to_numpy(dtype=float)
    else:
        bound = uncensored[f"bound_{regime.value}"].to_numpy(dtype=float)
    tau = uncensored["tau"].to_numpy(dtype=float)
    ratio = tau / bound
    C = float(ratio.max())

    residuals = pd.DataFrame({
        "index": uncensored["index"].to_numpy() if "index" in uncensored else np.arange(len(tau)),
        "L": uncensored["L"].to_numpy(dtype=float),
        "tau": tau,
        "bound": bound,
        "ratio": ratio,
        "slack": C * bound - tau,
    })
    fit = ScalingFit(regime=regime, C=C, points=len(tau), variant=variant, residuals=residuals)

    L = residuals["L"].to_numpy()
    if np.unique(L).size >= 2:
        fit.slope = float(np.polyfit(np.log(L), np.log(tau), 1)[0])
        design = np.column_stack([np.ones_like(L), L ** 2])
        (a, _), *_ = np.linalg.lstsq(design, tau, rcond=None)
        fit.offset = float(a)
        shifted = tau - a
        if np.all(shifted > 0):
            fit.slope_corrected = float(np.polyfit(np.log(L), np.log(shifted), 1)[0])
        by_L = residuals.groupby("L")["ratio"].max()
        fit.stability = float(by_L.max() / by_L.min())

    logger.info(f"Fit {regime.value}/{variant}: C={C:.4g} over {fit.points} points, slope={fit.slope:.3g}")
    return fit


@dataclass
class ReactionFit:
    plateau: float
    products: pd.DataFrame
    spread: float  # max/min of (τ − plateau)·ε
    slope: float  # of log(τ − plateau) against log ε; −1 for a pure 1/ε law


def fit_reaction_scaling(frame: pd.DataFrame, min_points: int = 3) -> ReactionFit:
    """τ − τ_plateau against ε, the plateau taken at the largest ε."""
    rows = _usable(frame)
    if not rows.empty:
        rows = rows[~rows["censored"].astype(bool)]
    if len(rows) < min_points:
        raise FitError(f"reaction fit needs {min_points} uncensored points, got {len(rows)}")
    rows = rows.sort_values("eps")
    eps = rows["eps"].to_numpy(dtype=float)
    tau = rows["tau"].to_numpy(dtype=float)
    plateau = float(tau[-1])
    excess = tau[:-1] - plateau
    if np.any(excess <= 0):
        raise FitError("half-time does not decrease toward the large-eps plateau")
    products = pd.DataFrame({"eps": eps[:-1], "tau": tau[:-1], "excess": excess, "excess_eps": excess * eps[:-1]})
    spread = float(products["excess_eps"].max() / products["excess_eps"].min())
    slope = float(np.polyfit(np.log(eps[:-1]), np.log(excess), 1)[0]) if len(excess) >= 2 else math.nan
    return ReactionFit(plateau=plateau, products=products, spread=spread, slope=slope)


def risky_reaction_report(frame: pd.DataFrame) -> pd.DataFrame:
    """τ_D/τ per point; a censored baseline makes the ratio a lower bound."""
    columns = ["index", "M0_eps", "risky", "tau", "tau_D", "ratio", "ratio_is_lower_bound"]
    rows = _usable(frame)
    if rows.empty or "tau_D" not in rows:
        return pd.DataFrame(columns=columns)
    report = pd.DataFrame({
        "index": rows["index"].to_numpy() if "index" in rows else np.arange(len(rows)),
        "M0_eps": (rows["M0"] * rows["eps"]).to_numpy(dtype=float),
        "tau": rows["tau"].to_numpy(dtype=float),
        "tau_D": rows["tau_D"].to_numpy(dtype=float),
    })
    report["risky"] = report["M0_eps"] <= RISKY_LEVEL
    report["ratio"] = report["tau_D"] / report["tau"]
    report["ratio_is_lower_bound"] = rows["censored_D"].astype(bool).to_numpy()
    return report[columns]


# ============ Reports ============

def fit_directory(in_dir: str, min_points: int = 4) -> Tuple[List[ScalingFit], pd.DataFrame]:
    """Fit every regime present in <in_dir>/sweep.csv; writes fit.csv, risky.csv and summary.txt."""
    path = os.path.join(in_dir, "sweep.csv")
    if not os.path.exists(path):
        raise ConfigurationError(f"No sweep.csv in {in_dir}")
    frame = pd.read_csv(path, keep_default_na=False, na_values=[""])
    if "error" in frame:
        frame["error"] = frame["error"].fillna("")

    fits = []
    notes = []
    for regime in Regime:
        variants = ("standard", "shifted") if regime == Regime.FAR else ("standard",)
        for variant in variants:
            try:
                fits.append(fit_scaling(frame, regime, min_points, variant))
            except FitError as e:
                notes.append(f"{regime.value}/{variant}: {e}")

    risky = risky_reaction_report(frame)
    reaction = None
    if "eps" in frame and frame["eps"].nunique() >= 3:
        try:
            reaction = fit_reaction_scaling(frame)
        except FitError as e:
            notes.append(f"reaction: {e}")

    write_csv(pd.DataFrame([f.to_row() for f in fits]), os.path.join(in_dir, "fit.csv"))
    write_csv(risky, os.path.join(in_dir, "risky.csv"))
    write_summary(os.path.join(in_dir, "summary.txt"), frame, fits, reaction, risky, notes)
    return fits, risky


def write_summary(
    path: str,
    frame: pd.DataFrame,
    fits: Sequence[ScalingFit],
    reaction: Optional[ReactionFit],
    risky: pd.DataFrame,
    notes: Sequence[str] = (),
):
    lines = [f"points: {len(frame)}"]
    if "censored" in frame:
        lines.append(f"censored: {int(frame['censored'].astype(bool).sum())}")
    for fit in fits:
        lines.append(
            f"regime {fit.regime.value} ({fit.variant}): C = {fit.C:.4g} over {fit.points} points; "
            f"slope {fit.slope:.3g}, corrected {fit.slope_corrected:.3g}, stability {fit.stability:.3g}"
        )
    if reaction is not None:
        lines.append(
            f"reaction: plateau {reaction.plateau:.4g}, (tau - plateau) eps spread {reaction.spread:.3g}, "
            f"slope {reaction.slope:.3g}"
        )
    for _, row in risky.iterrows():
        sign = ">=" if row["ratio_is_lower_bound"] else "="
        lines.append(f"point {int(row['index'])}: M0 eps = {row['M0_eps']:.3g}, tau_D/tau {sign} {row['ratio']:.3g}")
    lines.extend(f"note: {n}" for n in notes)
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")
    logger.info(f"Wrote {path}")
