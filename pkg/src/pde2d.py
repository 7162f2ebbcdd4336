"""
Explicit 2D solver for the flux-limited chemotaxis-reaction system.

rho1 diffuses, drifts with b = (∇c/|∇c|)Ψ(|∇c|) and reacts with rho2;
rho2 only reacts. One step: finite-volume transport of rho1 with zero-flux
walls, then the exact local solution of the reaction pair
rho1' = rho2' = -eps rho1 rho2 in every cell.
"""
import logging
import math
import os
import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from . import arrays
from .chemo import DriftField, assemble_drift, grad_c_2d
from .config import settings
from .errors import CFLError, SimulationError
from .grids import Field2D, Grid2D, check_radius, disk_overlap
from .model import InitialData, Params

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SimState:
    """Immutable snapshot; step() returns a new one."""
    t: float
    rho1: Field2D
    rho2: Field2D
    params: Params
    chemotaxis: bool = True
    exact_drift: bool = False
    drift: Optional[DriftField] = None
    drift_mass: float = 0.0  # mass2 when the cached drift was computed
    steps: int = 0
    cumulative_h: float = 0.0

    @property
    def grid(self) -> Grid2D:
        return self.rho1.grid


@dataclass
class Diagnostics:
    probe_radii: List[float] = field(default_factory=list)
    times: List[float] = field(default_factory=list)
    mass1: List[float] = field(default_factory=list)
    mass2: List[float] = field(default_factory=list)
    h: List[float] = field(default_factory=list)
    cumulative_h: List[float] = field(default_factory=list)
    leakage: List[float] = field(default_factory=list)
    M_probe: List[List[float]] = field(default_factory=list)
    partial: bool = False
    wall_time_s: float = 0.0

    def record(self, state: SimState, weights: Sequence[np.ndarray]):
        grid = state.grid
        rho1 = state.rho1.values
        mass1 = float(rho1.sum() * grid.cell_area)
        self.times.append(state.t)
        self.mass1.append(mass1)
        self.mass2.append(state.rho2.mass())
        self.h.append(reaction_rate(state))
        self.cumulative_h.append(state.cumulative_h)
        self.leakage.append(boundary_fraction(state.rho1))
        self.M_probe.append([float(np.sum(w * rho1)) for w in weights])

    def __len__(self):
        return len(self.times)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            "t": self.times,
            "mass1": self.mass1,
            "mass2": self.mass2,
            "h": self.h,
            "cumulative_h": self.cumulative_h,
            "leakage": self.leakage,
        })
        probes = np.asarray(self.M_probe).reshape(len(self.times), len(self.probe_radii))
        for k, r in enumerate(self.probe_radii):
            frame[f"M@{r:.6g}"] = probes[:, k]
        return frame

    def probe_array(self) -> np.ndarray:
        return np.asarray(self.M_probe, dtype=float).reshape(len(self.times), len(self.probe_radii))

    def censored(self, theta: float) -> bool:
        """True when the run ended with mass2 still above pi theta."""
        return bool(self.mass2) and self.mass2[-1] > math.pi * theta


@dataclass
class SimConfig:
    chemotaxis: bool = True
    exact_drift: bool = settings.exact_drift
    cfl_safety: float = settings.cfl_safety
    record_mass_fraction: float = settings.record_mass_fraction
    record_dt: Optional[float] = None  # longest gap between samples; default T_max / 200
    drift_refresh_fraction: float = settings.drift_refresh_fraction
    probe_radii: Optional[Sequence[float]] = None
    wall_clock_budget_s: float = settings.wall_clock_budget_s
    snapshot_dir: Optional[str] = None
    snapshot_count: int = 0
    log_every: int = 2000


# ============ Diagnostics helpers ============

def reaction_rate(state: SimState) -> float:
    """h = eps ∫ rho1 rho2."""
    grid = state.grid
    return float(state.params.eps * np.sum(state.rho1.values * state.rho2.values) * grid.cell_area)


def boundary_fraction(rho1: Field2D, rings: int = 2) -> float:
    """Share of rho1 mass in the outermost cell rings."""
    values = rho1.values
    total = values.sum()
    if total <= 0:
        return 0.0
    interior = values[rings:-rings, rings:-rings].sum()
    return float((total - interior) / total)


def local_mass(state: SimState, r: float) -> float:
    """M(r, t) by exact circle-cell overlap."""
    check_radius(state.grid, r)
    return float(np.sum(disk_overlap(state.grid, r) * state.rho1.values))


def default_probe_radii(params: Params, grid: Grid2D, count: Optional[int] = None) -> List[float]:
    count = count or settings.probe_count
    top = min(1.25 * params.L, 0.95 * grid.half_width)
    radii = set(np.round(np.linspace(1.0, top, count), 6).tolist())
    if 5.0 / params.v0 < top:
        radii.add(round(5.0 / params.v0, 6))
    return sorted(radii)


# ============ Stepping ============

def transport_limit(grid: Grid2D, v0: float, chemotaxis: bool = True) -> float:
    """dt bound 0.25 h² / (1 + v0 h / 2) for diffusion plus capped drift."""
    h = grid.h
    speed = v0 if chemotaxis else 0.0
    return 0.25 * h * h / (1.0 + 0.5 * speed * h)


def _face_drift(drift: DriftField) -> Tuple[np.ndarray, np.ndarray]:
    bx = 0.5 * (drift.bx[1:, :] + drift.bx[:-1, :])
    by = 0.5 * (drift.by[:, 1:] + drift.by[:, :-1])
    return bx, by


def _outflow_limit(grid: Grid2D, drift: Optional[DriftField]) -> float:
    """Largest dt keeping every transport coefficient nonnegative."""
    h = grid.h
    out = np.full((grid.n, grid.n), 4.0 / (h * h))
    if drift is not None and drift.bx is not None:
        fx, fy = _face_drift(drift)
        out[:-1, :] += np.maximum(fx, 0.0) / h
        out[1:, :] += np.maximum(-fx, 0.0) / h
        out[:, :-1] += np.maximum(fy, 0.0) / h
        out[:, 1:] += np.maximum(-fy, 0.0) / h
    return float(1.0 / out.max())


def refresh_drift(state: SimState, force: bool = False, fraction: Optional[float] = None) -> SimState:
    """Recompute the cached drift when rho2 mass moved by more than the refresh fraction."""
    if not state.chemotaxis:
        return state
    if fraction is None:
        fraction = settings.drift_refresh_fraction
    mass2 = state.rho2.mass()
    stale = (
        state.drift is None
        or force
        or state.exact_drift
        or abs(mass2 - state.drift_mass) > fraction * state.drift_mass
    )
    if not stale:
        return state
    raw = grad_c_2d(state.rho2, state.params.sigma)
    drift = assemble_drift(raw, state.params.cutoff())
    return replace(state, drift=drift, drift_mass=mass2)


def stable_dt(state: SimState, safety: float = 1.0) -> float:
    """Largest admissible dt for the current state, scaled by safety."""
    p = state.params
    limit = min(
        transport_limit(state.grid, p.v0, state.chemotaxis),
        _outflow_limit(state.grid, state.drift if state.chemotaxis else None),
    )
    peak = state.rho2.max()
    if p.eps > 0 and peak > 0:
        limit = min(limit, 0.5 / (p.eps * peak))
    return safety * limit


def _react(rho1: np.ndarray, rho2: np.ndarray, eps: float, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Exact solution of rho1' = rho2' = -eps rho1 rho2 over dt.

    rho2 is multiplied by exp(-eps ∫ rho1); with k = rho1 - rho2 conserved this is
    rho2 / (1 + eps dt rho1 expm1(x)/x), x = eps k dt. Returns (rho2_new, decrement).
    """
    if eps == 0:
        return rho2, np.zeros_like(rho2)
    x = np.clip(eps * (rho1 - rho2) * dt, -700.0, 700.0)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    ratio = np.where(small, 1.0 + 0.5 * x, np.expm1(safe) / safe)
    rho2_new = rho2 / (1.0 + eps * dt * rho1 * ratio)
    return rho2_new, rho2 - rho2_new


def step(state: SimState, dt: float) -> SimState:
    """One explicit step: transport of rho1, then the paired reaction update."""
    if state.drift is None:
        state = refresh_drift(state)
    limit = stable_dt(state)
    if dt > limit * (1.0 + 1e-12):
        raise CFLError(f"dt = {dt:.6g} exceeds the stability limit {limit:.6g}", settings.cfl_safety * limit)

    grid = state.grid
    h = grid.h
    rho1 = state.rho1.values

    # fluxes through interior faces; walls carry none
    flux_x = -(rho1[1:, :] - rho1[:-1, :]) / h
    flux_y = -(rho1[:, 1:] - rho1[:, :-1]) / h
    if state.chemotaxis and state.drift is not None:
        fx, fy = _face_drift(state.drift)
        flux_x += np.maximum(fx, 0.0) * rho1[:-1, :] + np.minimum(fx, 0.0) * rho1[1:, :]
        flux_y += np.maximum(fy, 0.0) * rho1[:, :-1] + np.minimum(fy, 0.0) * rho1[:, 1:]

    div = np.zeros_like(rho1)
    div[:-1, :] += flux_x
    div[1:, :] -= flux_x
    div[:, :-1] += flux_y
    div[:, 1:] -= flux_y
    moved = rho1 - (dt / h) * div

    rho2_new, decrement = _react(moved, state.rho2.values, state.params.eps, dt)
    rho1_new = moved - decrement

    if not (np.all(np.isfinite(rho1_new)) and np.all(np.isfinite(rho2_new))):
        raise SimulationError(f"non-finite density at t={state.t:.6g}", _dump(state))

    return replace(
        state,
        t=state.t + dt,
        rho1=Field2D(rho1_new, grid),
        rho2=Field2D(rho2_new, grid),
        steps=state.steps + 1,
        cumulative_h=state.cumulative_h + float(decrement.sum() * grid.cell_area),
    )


def _dump(state: SimState) -> Optional[str]:
    directory = os.path.join(settings.output_dir, "dumps", f"t{state.t:.6g}")
    try:
        arrays.write_field(directory, "rho1", state.rho1, state.t)
        arrays.write_field(directory, "rho2", state.rho2, state.t)
    except OSError as e:
        logger.error(f"State dump failed: {e}")
        return None
    return directory


# ============ Runs ============

def initial_state(initial: InitialData, params: Params, config: Optional[SimConfig] = None) -> SimState:
    config = config or SimConfig()
    return SimState(
        t=0.0,
        rho1=initial.rho1,
        rho2=initial.rho2,
        params=params,
        chemotaxis=config.chemotaxis,
        exact_drift=config.exact_drift,
    )


def half_depleted(params: Params) -> Callable[[Diagnostics], bool]:
    level = math.pi * params.theta
    return lambda diag: bool(diag.mass2) and diag.mass2[-1] <= level


def run(
    initial: InitialData,
    params: Params,
    T_max: float,
    stop: Optional[Callable[[Diagnostics], bool]] = None,
    config: Optional[SimConfig] = None,
) -> Tuple[SimState, Diagnostics]:
    """
    Advance until stop(diag) holds or T_max is reached.

    A sample is recorded whenever mass2 has moved by record_mass_fraction of its
    initial value, or record_dt has elapsed, and always at the end.
    """
    config = config or SimConfig()
    state = initial_state(initial, params, config)
    grid = state.grid
    radii = list(config.probe_radii) if config.probe_radii is not None else default_probe_radii(params, grid)
    for r in radii:
        check_radius(grid, r, "probe radius")
    diag = Diagnostics(probe_radii=radii)
    if T_max <= 0:
        return state, diag

    weights = [disk_overlap(grid, r) for r in radii]
    stop = stop or half_depleted(params)
    record_dt = config.record_dt or T_max / 200.0
    mass_step = config.record_mass_fraction * max(state.rho2.mass(), 1e-300)

    snapshot_times = []
    if config.snapshot_dir and config.snapshot_count > 0:
        snapshot_times = list(np.linspace(0.0, T_max, config.snapshot_count))

    start = time.perf_counter()
    diag.record(state, weights)
    last_t = state.t
    last_mass = diag.mass2[-1]
    logger.info(
        f"Run start: grid {grid.n}^2 (h={grid.h:.4g}), T_max={T_max:.4g}, "
        f"chemotaxis={state.chemotaxis}, probes={len(radii)}"
    )

    def write_snapshots():
        while snapshot_times and state.t >= snapshot_times[0] - 1e-12:
            snapshot_times.pop(0)
            tag = f"{state.steps:08d}"
            arrays.write_field(config.snapshot_dir, f"rho1_{tag}", state.rho1, state.t)
            arrays.write_field(config.snapshot_dir, f"rho2_{tag}", state.rho2, state.t)

    write_snapshots()
    while state.t < T_max:
        state = refresh_drift(state, fraction=config.drift_refresh_fraction)
        dt = min(stable_dt(state, config.cfl_safety), T_max - state.t)
        state = step(state, dt)

        write_snapshots()

        mass2 = state.rho2.mass()
        if abs(last_mass - mass2) >= mass_step or state.t - last_t >= record_dt or state.t >= T_max:
            diag.record(state, weights)
            last_t, last_mass = state.t, mass2
            if stop(diag):
                break

        if state.steps % config.log_every == 0:
            logger.info(f"  step {state.steps}: t={state.t:.5g}, mass2={mass2:.6g}, dt={dt:.3g}")
        if state.steps % 100 == 0:
            if time.perf_counter() - start > config.wall_clock_budget_s:
                logger.warning(f"Wall-clock budget {config.wall_clock_budget_s:.0f}s exceeded at t={state.t:.5g}")
                diag.partial = True
                if diag.times[-1] != state.t:
                    diag.record(state, weights)
                break

    diag.wall_time_s = time.perf_counter() - start
    logger.info(f"Run done: t={state.t:.5g}, steps={state.steps}, samples={len(diag)}, {diag.wall_time_s:.1f}s")
    if diag.leakage and diag.leakage[-1] > 1e-6:
        logger.warning(f"rho1 mass near the walls: {diag.leakage[-1]:.3g} of total")
    return state, diag


def half_time(diag: Diagnostics, theta: float) -> float:
    """
    Last time mass2 >= pi theta, linear between samples; inf if never crossed.
    """
    level = math.pi * theta
    times = np.asarray(diag.times, dtype=float)
    mass2 = np.asarray(diag.mass2, dtype=float)
    if mass2.size == 0:
        return math.inf
    if np.any(np.diff(mass2) > 1e-12 * mass2[0]):
        raise SimulationError("mass2 is not monotone nonincreasing; half-time is undefined")

    above = np.nonzero(mass2 >= level)[0]
    if above.size == 0:
        return 0.0
    k = int(above[-1])
    if k == mass2.size - 1:
        return float(times[k]) if mass2[k] <= level else math.inf
    m0, m1 = mass2[k], mass2[k + 1]
    return float(times[k] + (m0 - level) / (m0 - m1) * (times[k + 1] - times[k]))
