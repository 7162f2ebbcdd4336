"""
Radial auxiliary problems.

u solves the Fokker-Planck equation ∂_t u = Δu − ∇·(u∇H); its local mass
M_u(r, t) = ∫_{B_r} u is what rho1 is compared against. f solves the dual
equation ∂_t f = Δf + ∇H·∇f = e^{-H}∇·(e^H∇f). Both live on finite-volume
annuli [r_{i-1/2}, r_{i+1/2}] with a zero-width face at r = 0, so the 1/r term
needs no special treatment.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.interpolate import PchipInterpolator

from .config import settings
from .errors import CFLError, ConfigurationError, InputError, RegimeError, SimulationError
from .grids import RadialProfile
from .model import Params, _bump, _smooth_step, plateau
from .potential import PotentialH, build_potential

logger = logging.getLogger(__name__)

MONOTONE_TOL = 1e-8
NEGATIVE_TOL = 1e-10
ALLOWANCE = 0.02  # of M0, for the comparison with the 2D run


@dataclass(frozen=True)
class FlatPotential:
    """H ≡ 0: pure diffusion, used to cross-check against heat-equation closed forms."""

    def H(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    def dH(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))


Potential = Union[PotentialH, FlatPotential]


# ============ Grid ============

@dataclass(frozen=True)
class RadialGrid:
    r_max: float
    n: int

    def __post_init__(self):
        if self.n < 2 or not self.r_max > 0:
            raise ConfigurationError(f"Radial grid needs n >= 2 and r_max > 0 (got n={self.n}, r_max={self.r_max})")

    @property
    def dr(self) -> float:
        return self.r_max / self.n

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, self.r_max, self.n + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[1:] + e[:-1])

    @property
    def volumes(self) -> np.ndarray:
        e = self.edges
        return math.pi * (e[1:] ** 2 - e[:-1] ** 2)

    def validate(self, pot: Potential):
        """r_max must reach 4 R0 and dr must resolve r0."""
        if not isinstance(pot, PotentialH):
            return
        if self.r_max < 4.0 * pot.R0 - 1e-9:
            raise ConfigurationError(f"r_max = {self.r_max:.4g} is below 4 R0 = {4.0 * pot.R0:.4g}")
        if self.dr > pot.r0 / 10.0 + 1e-12:
            raise ConfigurationError(f"dr = {self.dr:.4g} does not resolve r0/10 = {pot.r0 / 10.0:.4g}")

    @classmethod
    def for_params(cls, params: Params, refine: int = 1) -> "RadialGrid":
        r_max = settings.radial_extent_factor * params.R0
        dr = params.r0 / (settings.radial_cells_per_r0 * refine)
        return cls(r_max=r_max, n=int(math.ceil(r_max / dr)))


@dataclass
class RadialTrajectory:
    """Saved states of a radial solve; values[k] lives on `nodes` at times[k]."""
    grid: RadialGrid
    nodes: np.ndarray
    times: np.ndarray
    values: np.ndarray
    kind: str = "f"

    def index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise InputError(f"t = {t:.6g} is not a saved time of this {self.kind} trajectory")
        return k

    def profile(self, k: int) -> RadialProfile:
        return RadialProfile(r=self.nodes, values=self.values[k], t=float(self.times[k]))

    def at(self, t: float) -> np.ndarray:
        """Values at time t, linear between saved times."""
        if t < self.times[0] - 1e-12 or t > self.times[-1] + 1e-12:
            raise InputError(f"t = {t:.6g} outside [{self.times[0]:.6g}, {self.times[-1]:.6g}]")
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        k = min(max(k, 0), len(self.times) - 2) if len(self.times) > 1 else 0
        if len(self.times) == 1:
            return self.values[0]
        t0, t1 = self.times[k], self.times[k + 1]
        w = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
        return (1.0 - w) * self.values[k] + w * self.values[k + 1]


# ============ Operators ============

def _dual_coefficients(pot: Potential, grid: RadialGrid) -> Tuple[np.ndarray, np.ndarray]:
    """
    f_i' = f_i + dt [a_i (f_{i-1} - f_i) + c_i (f_{i+1} - f_i)].

    Face weights e^{H_face - H_i} make V e^H (f' - f) a sum of antisymmetric face fluxes.
    The last c couples to the Dirichlet value at r_max over a half cell.
    """
    edges = grid.edges
    H_c = np.asarray(pot.H(grid.centers), dtype=float)
    H_e = np.asarray(pot.H(edges), dtype=float)
    area = 2.0 * math.pi * edges
    V = grid.volumes
    dr = grid.dr

    a = area[:-1] * np.exp(H_e[:-1] - H_c) / (V * dr)
    c = area[1:] * np.exp(H_e[1:] - H_c) / (V * dr)
    c[-1] *= 2.0
    return a, c


def dual_dt_limit(a: np.ndarray, c: np.ndarray) -> float:
    """Keeps f and its successive differences convex combinations of old values."""
    pointwise = a + c
    differences = c[:-1] + a[1:]
    return float(1.0 / max(pointwise.max(), differences.max()))


def _fp_faces(pot: Potential, grid: RadialGrid) -> Tuple[np.ndarray, np.ndarray]:
    inner = grid.edges[1:-1]
    return 2.0 * math.pi * inner, np.asarray(pot.dH(inner), dtype=float)


def fp_dt_limit(pot: Potential, grid: RadialGrid) -> float:
    area, b = _fp_faces(pot, grid)
    out = np.zeros(grid.n)
    out[:-1] += area * (1.0 / grid.dr + np.maximum(b, 0.0))
    out[1:] += area * (1.0 / grid.dr - np.minimum(b, 0.0))
    return float(1.0 / (out / grid.volumes).max())


def _march(
    values: np.ndarray,
    advance: Callable[[np.ndarray, float], np.ndarray],
    dt: float,
    T: float,
    save_times: Optional[Sequence[float]],
    check: Callable[[np.ndarray, float], None],
) -> Tuple[np.ndarray, np.ndarray]:
    if save_times is None:
        save_times = np.linspace(0.0, T, 101)
    targets = sorted({0.0, float(T), *(float(s) for s in save_times if 0.0 <= s <= T)})

    saved = [values.copy()]
    t = 0.0
    steps = 0
    for target in targets[1:]:
        while t < target - 1e-12 * max(1.0, target):
            h = min(dt, target - t)
            values = advance(values, h)
            t += h
            steps += 1
        t = target
        check(values, t)
        saved.append(values.copy())
    logger.debug(f"  radial march: {steps} steps to T={T:.5g}")
    return np.array(targets), np.array(saved)


def _resolve_dt(limit: float, dt: Optional[float]) -> float:
    if dt is None:
        return settings.cfl_safety * limit
    if dt > limit * (1.0 + 1e-12):
        raise CFLError(f"dt = {dt:.6g} exceeds the radial stability limit {limit:.6g}", settings.cfl_safety * limit)
    return dt


# ============ Fokker-Planck for u and M_u ============

def solve_u(
    pot: Potential,
    u0: np.ndarray,
    T: float,
    grid: RadialGrid,
    save_times: Optional[Sequence[float]] = None,
    dt: Optional[float] = None,
) -> RadialTrajectory:
    """
    Conservative upwind scheme for ∂_t u = Δu − ∇·(u∇H), zero flux at r_max.

    u0 holds cell averages on grid.centers.
    """
    grid.validate(pot)
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (grid.n,):
        raise InputError(f"u0 has shape {u0.shape}, grid has {grid.n} cells")
    if np.any(u0 < 0):
        raise InputError("u0 must be nonnegative")

    area, b = _fp_faces(pot, grid)
    bp = np.maximum(b, 0.0)
    bm = np.minimum(b, 0.0)
    V = grid.volumes
    dr = grid.dr
    step_dt = _resolve_dt(fp_dt_limit(pot, grid), dt)
    mass0 = float(np.sum(u0 * V))

    def advance(u, h):
        flux = area * ((u[:-1] - u[1:]) / dr + bp * u[:-1] + bm * u[1:])
        du = np.zeros_like(u)
        du[:-1] -= flux
        du[1:] += flux
        return u + h * du / V

    def check(u, t):
        if not np.all(np.isfinite(u)):
            raise SimulationError(f"non-finite u at t={t:.6g}")
        scale = max(float(u.max()), 1e-300)
        if u.min() < -MONOTONE_TOL * scale:
            raise SimulationError(f"M_u lost monotonicity at t={t:.6g} (min u = {u.min():.3g})")
        mass = float(np.sum(u * V))
        if abs(mass - mass0) > 1e-6 * max(mass0, 1e-300):
            raise SimulationError(f"u mass drifted from {mass0:.10g} to {mass:.10g}")

    logger.info(f"Fokker-Planck solve: {grid.n} cells (dr={dr:.4g}), T={T:.5g}, dt={step_dt:.3g}")
    times, values = _march(u0.copy(), advance, step_dt, T, save_times, check)
    return RadialTrajectory(grid=grid, nodes=grid.centers, times=times, values=values, kind="u")


def masses_to_density(M: RadialProfile, grid: RadialGrid) -> np.ndarray:
    """Cell averages of u whose local mass matches M at every edge."""
    edge_mass = M(grid.edges)
    return np.diff(edge_mass) / grid.volumes


def solve_Mu(
    pot: Potential,
    M0_profile: RadialProfile,
    T: float,
    grid: Optional[RadialGrid] = None,
    save_times: Optional[Sequence[float]] = None,
    dt: Optional[float] = None,
) -> RadialTrajectory:
    """
    M_u(r, t) on grid edges; M_u(0) = 0 and M_u(r_max) stays at the total mass.
    """
    if grid is None:
        if not isinstance(pot, PotentialH):
            raise ConfigurationError("a radial grid is required for a flat potential")
        grid = RadialGrid(r_max=4.0 * pot.R0, n=int(math.ceil(40.0 * pot.R0 / pot.r0)))
    edge_mass = M0_profile(grid.edges)
    if abs(edge_mass[0]) > 1e-12 * max(abs(edge_mass).max(), 1.0):
        raise InputError(f"M0_profile(0) = {edge_mass[0]:.3g}, expected 0")
    if np.any(np.diff(edge_mass) < -1e-12 * max(edge_mass.max(), 1.0)):
        raise InputError("M0_profile must be nondecreasing in r")

    u0 = np.maximum(masses_to_density(M0_profile, grid), 0.0)
    u_traj = solve_u(pot, u0, T, grid, save_times, dt)
    M = np.concatenate([np.zeros((len(u_traj.times), 1)), np.cumsum(u_traj.values * grid.volumes, axis=1)], axis=1)
    return RadialTrajectory(grid=grid, nodes=grid.edges, times=u_traj.times, values=M, kind="M")


# ============ Dual equation ============

def solve_dual(
    pot: Potential,
    f0: RadialProfile,
    T: float,
    grid: RadialGrid,
    save_times: Optional[Sequence[float]] = None,
    dt: Optional[float] = None,
) -> RadialTrajectory:
    """
    Explicit scheme for ∂_t f = Δf + ∇H·∇f with symmetry at 0 and f(r_max) held at f0(r_max).
    """
    grid.validate(pot)
    values = np.asarray(f0(grid.centers), dtype=float)
    if np.any(values < 0):
        raise InputError("f0 must be nonnegative")
    if np.any(np.diff(values) > MONOTONE_TOL):
        raise InputError("f0 must be nonincreasing in r")

    far = float(f0(grid.r_max))
    a, c = _dual_coefficients(pot, grid)
    step_dt = _resolve_dt(dual_dt_limit(a, c), dt)

    def advance(f, h):
        left = np.empty_like(f)
        left[0] = f[0]
        left[1:] = f[:-1]
        right = np.empty_like(f)
        right[:-1] = f[1:]
        right[-1] = far
        return f + h * (a * (left - f) + c * (right - f))

    def check(f, t):
        if not np.all(np.isfinite(f)):
            raise SimulationError(f"non-finite f at t={t:.6g}")
        if f.min() < -NEGATIVE_TOL:
            raise SimulationError(f"f went negative at t={t:.6g} (min {f.min():.3g})")

    logger.info(f"Dual solve: {grid.n} cells (dr={grid.dr:.4g}), T={T:.5g}, dt={step_dt:.3g}")
    times, saved = _march(values, advance, step_dt, T, save_times, check)
    return RadialTrajectory(grid=grid, nodes=grid.centers, times=times, values=saved, kind="f")


def dual_invariant(f_traj: RadialTrajectory, pot: Potential) -> np.ndarray:
    """∫ f e^H dx at every saved time, in units of e^{max H}."""
    H = np.asarray(pot.H(f_traj.grid.centers), dtype=float)
    weights = f_traj.grid.volumes * np.exp(H - H.max())
    return f_traj.values @ weights


def duality_check(u_traj: RadialTrajectory, f_traj: RadialTrajectory, t: float) -> float:
    """|∫f0 u(t) − ∫f(t) u0| / ∫f0 u(t)."""
    if u_traj.grid != f_traj.grid:
        raise InputError(f"grid mismatch: {u_traj.grid} vs {f_traj.grid}")
    V = u_traj.grid.volumes
    ku = u_traj.index(t)
    kf = f_traj.index(t)
    forward = float(np.sum(V * f_traj.values[0] * u_traj.values[ku]))
    backward = float(np.sum(V * f_traj.values[kf] * u_traj.values[0]))
    if forward == 0:
        return 0.0 if backward == 0 else math.inf
    return abs(forward - backward) / forward


def ring_density(params: Params, grid: RadialGrid) -> np.ndarray:
    """Radial ring data with mass M0 on L/2 < r <= L, as cell averages."""
    shape = _bump((grid.centers - 7.0 * params.L / 8.0) / (params.L / 8.0))
    total = float(np.sum(shape * grid.volumes))
    if total == 0:
        raise ConfigurationError(f"ring at L = {params.L:.4g} is not resolved by dr = {grid.dr:.4g}")
    return shape * (params.M0 / total)


def ring_mass_profile(params: Params, grid: RadialGrid) -> RadialProfile:
    u0 = ring_density(params, grid)
    M = np.concatenate([[0.0], np.cumsum(u0 * grid.volumes)])
    return RadialProfile(r=grid.edges, values=M)


def duality_refinement(params: Params, levels: Sequence[int] = (1, 2, 4)) -> pd.DataFrame:
    """Discrepancy of the duality identity at t = R0²/γ for ring u0 and plateau f0, per refinement level."""
    pot = build_potential(params)
    t = params.R0 ** 2 / params.gamma
    rows = []
    for level in levels:
        grid = RadialGrid.for_params(params, refine=level)
        u_traj = solve_u(pot, ring_density(params, grid), t, grid, save_times=[t])
        f_traj = solve_dual(pot, stage1_initial(params.R0), t, grid, save_times=[t])
        rows.append({"level": level, "cells": grid.n, "dr": grid.dr, "discrepancy": duality_check(u_traj, f_traj, t)})
        logger.info(f"  level {level}: {grid.n} cells, discrepancy {rows[-1]['discrepancy']:.3e}")
    return pd.DataFrame(rows)


# ============ Barriers ============

def boundary_lower_bound(gamma: float) -> float:
    """1 − (3/2)^{2−γ/4}: lower bound for f on |x| = R0 during stage 1."""
    if gamma < 16:
        raise RegimeError(f"boundary bound needs gamma >= 16 (got {gamma:.4g})")
    value = 1.0 - 1.5 ** (2.0 - gamma / 4.0)
    assert value > 0.5
    return value


def stage1_initial(R0: float) -> RadialProfile:
    """Smooth f0 between 1 on B_{3R0/2} and 0 outside B_{2R0}."""
    r = np.linspace(0.0, 2.0 * R0, 801)
    return RadialProfile(r=r, values=plateau(r / (2.0 * R0), 0.25))


def stage2_initial(v0: float) -> RadialProfile:
    """1 on B_{4/v0}, decreasing smoothly to 0 at 5/v0."""
    d1 = 4.0 / v0
    outer = 5.0 / v0
    r = np.concatenate([[0.0], np.linspace(d1, outer, 401)])
    return RadialProfile(r=r, values=_smooth_step((outer - r) / (outer - d1)))


@dataclass(frozen=True)
class BarrierSpec:
    """
    Subsolution ω_φ(r, t) = ω(a + φ(t)(r − a)) for the dual equation.

    Stage 1 anchors at a = R0, stage 2 at a = d0 = 2/v0. Both ω are linear
    from 1/2 at the anchor down to 0 (at 3R0/2 and d1 = 4/v0 respectively).
    """
    stage: int
    R0: float
    gamma: float
    v0: float
    L: float

    def __post_init__(self):
        if self.stage not in (1, 2):
            raise ConfigurationError(f"barrier stage must be 1 or 2 (got {self.stage})")

    @property
    def d0(self) -> float:
        return 2.0 / self.v0

    @property
    def d1(self) -> float:
        return 4.0 / self.v0

    @property
    def t0(self) -> float:
        return 64.0 * max(self.L - self.R0, 0.0) ** 2 / self.gamma

    @property
    def t_star(self) -> float:
        return 16.0 / self.v0 * (4.0 * self.R0 - self.d1) + self.t0

    @property
    def anchor(self) -> float:
        return self.R0 if self.stage == 1 else self.d0

    @property
    def start(self) -> float:
        """Absolute time at which the dual solve starts."""
        return 0.0 if self.stage == 1 else self.t0

    @property
    def level(self) -> float:
        return 0.25 if self.stage == 1 else 0.2

    @property
    def K0(self) -> int:
        """Smallest k with 2^k d0 >= R0 - 1."""
        return max(int(math.ceil(math.log2((self.R0 - 1.0) / self.d0))), 0)

    def omega(self, r):
        r = np.asarray(r, dtype=float)
        if self.stage == 1:
            s = (r - self.R0) / self.R0
        else:
            s = 0.5 * (r - self.d0) / (self.d1 - self.d0)
        return np.clip(0.5 - s, 0.0, 0.5)

    def phi(self, t):
        t = np.asarray(t, dtype=float)
        if self.stage == 1:
            return 2.0 * self.R0 / np.sqrt(4.0 * self.R0 ** 2 + self.gamma * np.maximum(t, 0.0))
        elapsed = np.clip(t, self.t0, self.t_star) - self.t0
        return 1.0 / (1.0 + self.v0 * elapsed / (16.0 * (self.d1 - self.d0)))

    def omega_phi(self, r, t):
        a = self.anchor
        return self.omega(a + self.phi(t) * (np.asarray(r, dtype=float) - a))

    def bound_radius(self, t: float) -> float:
        if self.stage == 1:
            return self.R0 + math.sqrt(4.0 * self.R0 ** 2 + self.gamma * t) / 8.0
        return 2.0 * self.R0

    def bound_applies(self, t: float) -> bool:
        return self.stage == 1 or t >= self.t_star - 1e-9

    def initial(self) -> RadialProfile:
        return stage1_initial(self.R0) if self.stage == 1 else stage2_initial(self.v0)

    def horizon(self) -> float:
        """Dual-time length of a run covering the bound: 64R0²/γ or 1.1 (t* − t0)."""
        if self.stage == 1:
            return 64.0 * self.R0 ** 2 / self.gamma
        return 1.1 * (self.t_star - self.t0)

    def check_initial(self, r: np.ndarray, f0: np.ndarray, tol: float = 1e-9):
        """Sandwich on f0: stage 1 between 1_{B_{3R0/2}} and 1_{B_{2R0}}, stage 2 between 1_{B_{d1}} and 1 with support in B_{5/v0}."""
        if self.stage == 1:
            inner, outer = 1.5 * self.R0, 2.0 * self.R0
        else:
            inner, outer = self.d1, 5.0 / self.v0
        if np.any(f0 > 1.0 + tol) or np.any(f0 < -tol):
            raise InputError("barrier initial data must lie in [0, 1]")
        if np.any(f0[r <= inner] < 1.0 - tol):
            raise InputError(f"barrier initial data must equal 1 on B_{inner:.4g}")
        if np.any(f0[r >= outer] > tol):
            raise InputError(f"barrier initial data must vanish outside B_{outer:.4g}")


def barrier_spec(params: Params, stage: int) -> BarrierSpec:
    return BarrierSpec(stage=stage, R0=params.R0, gamma=params.gamma, v0=params.v0, L=params.L)


@dataclass
class BarrierReport:
    stage: int
    rows: List[dict] = field(default_factory=list)
    extras: Dict[str, float] = field(default_factory=dict)
    tol: float = 1e-9

    @property
    def worst_margin(self) -> float:
        margins = [row["bound_margin"] for row in self.rows if not math.isnan(row["bound_margin"])]
        return min(margins) if margins else math.inf

    @property
    def passed(self) -> bool:
        if self.worst_margin < -self.tol:
            return False
        if self.stage == 1:
            return all(row["boundary_margin"] >= -self.tol for row in self.rows)
        return True

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)


def check_barrier(f_traj: RadialTrajectory, spec: BarrierSpec, pot: Optional[PotentialH] = None) -> BarrierReport:
    """
    Pointwise lower bound of the stage at every saved time.

    Stage 1: f ≥ 1/4 on B_{R0 + √(4R0²+γt)/8} and f(R0) ≥ boundary_lower_bound(γ) − 0.02.
    Stage 2: f ≥ 1/5 on B_{2R0} once t ≥ t*, with f(d0) reported.
    The subsolution margin min(f − ω_φ) beyond the anchor is reported next to both.
    """
    r = f_traj.nodes
    spec.check_initial(r, f_traj.values[0])

    report = BarrierReport(stage=spec.stage)
    floor = boundary_lower_bound(spec.gamma) - 0.02 if spec.stage == 1 else math.nan
    beyond = r >= spec.anchor

    for k, tau in enumerate(f_traj.times):
        f = f_traj.values[k]
        t = spec.start + float(tau)
        radius = min(spec.bound_radius(t), r[-1])
        inside = r <= radius

        bound_margin = math.nan
        if spec.bound_applies(t) and np.any(inside):
            bound_margin = float(f[inside].min() - spec.level)

        anchor_value = float(np.interp(spec.anchor, r, f))
        report.rows.append({
            "t": t,
            "bound_radius": spec.bound_radius(t),
            "bound_margin": bound_margin,
            "anchor_value": anchor_value,
            "boundary_margin": anchor_value - floor if spec.stage == 1 else math.nan,
            "subsolution_margin": float((f[beyond] - spec.omega_phi(r[beyond], t)).min()),
        })

    report.extras["K0"] = float(spec.K0)
    report.extras["t_star"] = spec.t_star
    report.extras["t0"] = spec.t0
    if spec.stage == 2 and pot is not None:
        ratio = pot.annulus_weight(spec.d0, spec.d1) / pot.tail_weight(spec.d0)
        report.extras["boundary_ratio"] = ratio
        report.extras["c2_ratio"] = 1.0 / ratio

    logger.info(
        f"Barrier stage {spec.stage}: {len(report.rows)} times, worst margin {report.worst_margin:.4g}, "
        f"passed={report.passed}"
    )
    return report


def run_barrier(params: Params, stage: int, refine: int = 1, save_count: int = 101) -> Tuple[RadialTrajectory, BarrierReport]:
    pot = build_potential(params)
    spec = barrier_spec(params, stage)
    grid = RadialGrid.for_params(params, refine=refine)
    T = spec.horizon()
    f_traj = solve_dual(pot, spec.initial(), T, grid, save_times=np.linspace(0.0, T, save_count))
    return f_traj, check_barrier(f_traj, spec, pot)


# ============ Mass checks ============

@dataclass
class MassCheckReport:
    radius: float
    level: float  # fraction of M0
    after: float  # check applies for t >= after
    times: np.ndarray
    fractions: np.ndarray
    fitted_C1: float = math.nan

    @property
    def passed(self) -> bool:
        mask = self.times >= self.after - 1e-9
        return bool(np.all(self.fractions[mask] >= self.level)) if np.any(mask) else False

    @property
    def worst(self) -> float:
        mask = self.times >= self.after - 1e-9
        return float(self.fractions[mask].min()) if np.any(mask) else math.nan


def _mass_fraction(mu_traj: RadialTrajectory, radius: float, M0: float) -> np.ndarray:
    if radius > mu_traj.nodes[-1]:
        raise InputError(f"radius {radius:.4g} beyond the radial grid")
    return np.array([np.interp(radius, mu_traj.nodes, M) for M in mu_traj.values]) / M0


def stage1_mass_check(mu_traj: RadialTrajectory, params: Params) -> MassCheckReport:
    """∫_{B_{2R0}} u ≥ M0/4 once t ≥ 64(L − R0)²/γ."""
    radius = 2.0 * params.R0
    return MassCheckReport(
        radius=radius,
        level=0.25,
        after=barrier_spec(params, 2).t0,
        times=mu_traj.times,
        fractions=_mass_fraction(mu_traj, radius, params.M0),
    )


def stage2_mass_check(mu_traj: RadialTrajectory, params: Params) -> MassCheckReport:
    """
    M_u(5/v0, t) ≥ M0/5 for t ≥ t*; also the smallest C1 with the bound holding
    from C1 γ/v0² + t0 on.
    """
    spec = barrier_spec(params, 2)
    radius = 5.0 / params.v0
    fractions = _mass_fraction(mu_traj, radius, params.M0)
    below = np.nonzero(fractions < 0.2)[0]
    if below.size == 0:
        hit = mu_traj.times[0]
    elif below[-1] == len(fractions) - 1:
        hit = math.inf
    else:
        hit = mu_traj.times[below[-1] + 1]
    C1 = max(hit - spec.t0, 0.0) * params.v0 ** 2 / params.gamma
    return MassCheckReport(
        radius=radius,
        level=0.2,
        after=spec.t_star,
        times=mu_traj.times,
        fractions=fractions,
        fitted_C1=C1,
    )


# ============ Comparison with the 2D run ============

@dataclass
class ComparisonReport:
    theta: float
    M0: float
    rows: List[dict] = field(default_factory=list)
    allowance: float = ALLOWANCE

    @property
    def worst_margin(self) -> float:
        return min((row["margin"] for row in self.rows), default=math.inf)

    @property
    def passed(self) -> bool:
        return self.worst_margin >= -self.allowance * self.M0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows)


def radial_mass_profile(radii: np.ndarray, masses: np.ndarray, grid: RadialGrid) -> RadialProfile:
    """Monotone PCHIP fit of sampled local masses, evaluated on the radial grid edges."""
    masses = np.maximum.accumulate(np.maximum(np.asarray(masses, dtype=float), 0.0))
    fit = PchipInterpolator(radii, masses, extrapolate=False)
    edges = grid.edges
    values = np.where(edges <= radii[-1], fit(np.minimum(edges, radii[-1])), masses[-1])
    values[0] = 0.0
    return RadialProfile(r=edges, values=np.maximum.accumulate(values))


def comparison_check(
    probe_radii: Sequence[float],
    times: Sequence[float],
    M: np.ndarray,
    mu_traj: RadialTrajectory,
    params: Params,
    allowance: float = ALLOWANCE,
) -> ComparisonReport:
    """
    M(r, t) ≥ M_u(r, t) − πθ at every probe and shared time, within allowance·M0.

    M has shape (len(times), len(probe_radii)).
    """
    times = np.asarray(times, dtype=float)
    M = np.asarray(M, dtype=float)
    lo, hi = mu_traj.times[0], mu_traj.times[-1]
    shared = (times >= lo - 1e-12) & (times <= hi + 1e-12)
    if not np.any(shared):
        raise InputError(f"time ranges are disjoint: run [{times.min():.4g}, {times.max():.4g}], radial [{lo:.4g}, {hi:.4g}]")

    report = ComparisonReport(theta=params.theta, M0=params.M0, allowance=allowance)
    slack = math.pi * params.theta
    for k in np.nonzero(shared)[0]:
        Mu = mu_traj.at(float(times[k]))
        for j, r in enumerate(probe_radii):
            mu_r = float(np.interp(r, mu_traj.nodes, Mu))
            report.rows.append({
                "t": float(times[k]),
                "r": float(r),
                "M": float(M[k, j]),
                "M_u": mu_r,
                "margin": float(M[k, j]) - mu_r + slack,
            })
    logger.info(f"Comparison: {len(report.rows)} points, worst margin {report.worst_margin:.4g} (allowance {allowance * params.M0:.4g})")
    return report


def compare_with_run(state0, diag, params: Params, grid: Optional[RadialGrid] = None, samples: int = 256) -> ComparisonReport:
    """Solve M_u from the 2D initial local masses and compare along the run's samples."""
    from .pde2d import local_mass

    grid = grid or RadialGrid.for_params(params)
    reach = math.sqrt(2.0) * state0.grid.half_width * (1.0 - 1e-12)
    radii = np.linspace(0.0, reach, samples)
    masses = np.array([0.0] + [local_mass(state0, r) for r in radii[1:]])
    profile = radial_mass_profile(radii, masses, grid)

    pot = build_potential(params)
    T = float(diag.times[-1]) if diag.times else 0.0
    mu_traj = solve_Mu(pot, profile, T, grid, save_times=diag.times)
    return comparison_check(diag.probe_radii, diag.times, diag.probe_array(), mu_traj, params)
