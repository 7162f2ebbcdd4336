"""
Dominating radial potential H and the domination check.

dH bounds the worst inward chemotactic drift on every circle |x| = r:
  v0 on [0, r0], a bridge down to -v0 on [r0, 1], -v0 up to R0 - 1,
  a bridge on [R0 - 1, R0], and -gamma/(4r) beyond.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import integrate

from .chemo import (
    CASE2_LOWER,
    DensityFamilySpec,
    boundary_drift,
    extremal_drift,
    greedy_fill,
    point_gradient_matrix,
)
from .config import settings
from .errors import InputError, RegimeError
from .grids import Field2D, Grid2D
from .model import Params, psi

logger = logging.getLogger(__name__)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


def _integrate_from(func, r: np.ndarray, b: float) -> np.ndarray:
    """∫_r^b func(s) ds for an array of lower limits, Gauss-Legendre on each interval."""
    half = 0.5 * (b - r)
    mid = 0.5 * (b + r)
    s = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    return half * (func(s) * _GL_WEIGHTS[None, :]).sum(axis=1)


@dataclass(frozen=True)
class PotentialH:
    gamma: float
    v0: float
    R0: float
    r0: float
    I1: float = 0.0  # ∫ eta1 over [R0 - 1, R0]
    I2: float = 0.0  # ∫ eta2 over [r0, 1]

    # ============ Bridges ============

    def eta1(self, r):
        """−v0 + (−γ/(4r) + v0)·S: between −v0 and −γ/(4r), C¹ at both ends."""
        r = np.asarray(r, dtype=float)
        outer = -self.gamma / (4.0 * r)
        return -self.v0 + (outer + self.v0) * _smoothstep(r - (self.R0 - 1.0))

    def eta2(self, r):
        """Hermite bridge from +v0 at r0 down to −v0 at 1."""
        r = np.asarray(r, dtype=float)
        return self.v0 - 2.0 * self.v0 * _smoothstep((r - self.r0) / (1.0 - self.r0))

    # ============ dH and H ============

    def dH(self, r):
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, 1.0)
        out = np.select(
            [r > self.R0, r >= self.R0 - 1.0, r > 1.0, r >= self.r0],
            [-self.gamma / (4.0 * safe), self.eta1(safe), -self.v0, self.eta2(safe)],
            default=self.v0,
        )
        return out if out.ndim else float(out)

    @property
    def H_R0(self) -> float:
        return -0.25 * self.gamma * math.log(self.R0)

    def H(self, r):
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.empty_like(r_arr)
        R0, v0 = self.R0, self.v0
        H_inner = self.H_R0 - self.I1  # H(R0 - 1)
        H_one = H_inner + v0 * (R0 - 2.0)  # H(1)
        H_r0 = H_one - self.I2

        far = r_arr > R0
        out[far] = -0.25 * self.gamma * np.log(r_arr[far])

        bridge1 = (r_arr >= R0 - 1.0) & ~far
        if np.any(bridge1):
            out[bridge1] = self.H_R0 - _integrate_from(self.eta1, r_arr[bridge1], R0)

        flat = (r_arr > 1.0) & (r_arr < R0 - 1.0)
        out[flat] = H_inner + v0 * (R0 - 1.0 - r_arr[flat])

        bridge2 = (r_arr >= self.r0) & (r_arr <= 1.0)
        if np.any(bridge2):
            out[bridge2] = H_one - _integrate_from(self.eta2, r_arr[bridge2], 1.0)

        core = r_arr < self.r0
        out[core] = H_r0 - v0 * (self.r0 - r_arr[core])

        return out if np.ndim(r) else float(out[0])

    def tail_weight(self, R: float) -> float:
        """∫_{|x| >= R} e^H dx."""
        exponent = 2.0 - 0.25 * self.gamma
        beyond = 2.0 * math.pi * max(R, self.R0) ** exponent / (-exponent)
        if R >= self.R0:
            return beyond
        inside, _ = integrate.quad(lambda s: s * math.exp(self.H(s)), R, self.R0, limit=400,
                                   points=[p for p in (self.r0, 1.0, self.R0 - 1.0) if R < p < self.R0])
        return beyond + 2.0 * math.pi * inside

    def annulus_weight(self, a: float, b: float) -> float:
        """∫_{a <= |x| <= b} e^H dx."""
        return self.tail_weight(a) - self.tail_weight(b)


def build_potential(params: Params) -> PotentialH:
    """Branch constants by Gauss-Legendre quadrature of the two bridges."""
    if params.gamma < 16 or params.v0 > 1:
        raise RegimeError(f"potential needs gamma >= 16 and v0 <= 1 (gamma={params.gamma:.4g}, v0={params.v0:.4g})")
    if params.R0 <= 1:
        raise RegimeError(f"R0 = {params.R0:.4g} must exceed 1")

    pot = PotentialH(gamma=params.gamma, v0=params.v0, R0=params.R0, r0=params.r0)
    I1 = float(_integrate_from(pot.eta1, np.array([params.R0 - 1.0]), params.R0)[0])
    I2 = float(_integrate_from(pot.eta2, np.array([params.r0]), 1.0)[0])
    pot = PotentialH(gamma=params.gamma, v0=params.v0, R0=params.R0, r0=params.r0, I1=I1, I2=I2)
    logger.debug(f"Potential built: R0={pot.R0:.4g}, r0={pot.r0:.4g}, I1={I1:.6g}, I2={I2:.3g}")
    return pot


# ============ Test densities ============

@dataclass(frozen=True)
class Sample:
    gid: str
    g: Field2D


def sample_grid(cells: Optional[int] = None) -> Grid2D:
    return Grid2D(n=cells or settings.domination_sample_cells, half_width=1.0)


def inside_cells(grid: Grid2D) -> np.ndarray:
    """Cells lying entirely in the closed unit ball."""
    X, Y = grid.mesh()
    h = grid.h
    return np.hypot(np.abs(X) + h / 2, np.abs(Y) + h / 2) <= 1.0


def full_ball_sample(family: DensityFamilySpec, grid: Grid2D) -> Sample:
    values = np.where(inside_cells(grid), family.cap, 0.0)
    return Sample("full-ball", Field2D(values, grid))


def extremal_set_sample(r: float, family: DensityFamilySpec, grid: Grid2D, sub: int = 4) -> Sample:
    """Greedy level-set fill at radius r restricted to cells inside the ball."""
    mask = inside_cells(grid)
    X, Y = grid.mesh()
    offsets = ((np.arange(sub) + 0.5) / sub - 0.5) * grid.h
    mean_V = np.zeros(int(mask.sum()))
    for ox in offsets:
        for oy in offsets:
            dx = X[mask] + ox - r
            d2 = dx * dx + (Y[mask] + oy) ** 2
            mean_V += np.where(d2 > 0, dx / (2.0 * math.pi * np.where(d2 > 0, d2, 1.0)), 0.0)
    mean_V /= sub * sub

    areas = np.full(mean_V.shape, grid.cell_area)
    values = grid.zeros()
    values[mask] = greedy_fill(mean_V, areas, family.cap, family.mass_lo)
    return Sample(f"extremal-r{r:.4f}", Field2D(values, grid))


def random_sample(index: int, family: DensityFamilySpec, grid: Grid2D, rng: np.random.Generator) -> Sample:
    """Cap-respecting mixture of Gaussian bumps with mass drawn in the admissible range."""
    mask = inside_cells(grid)
    X, Y = grid.mesh()
    u = np.zeros_like(X)
    for _ in range(int(rng.integers(1, 6))):
        rad = math.sqrt(rng.uniform(0.0, 1.0))
        ang = rng.uniform(0.0, 2.0 * math.pi)
        width = rng.uniform(0.1, 0.6)
        u += rng.uniform(0.2, 1.0) * np.exp(-((X - rad * math.cos(ang)) ** 2 + (Y - rad * math.sin(ang)) ** 2) / (2 * width ** 2))
    u = np.where(mask, u / u[mask].max(), 0.0)

    max_mass = family.cap * mask.sum() * grid.cell_area
    target = rng.uniform(family.mass_lo, min(family.mass_hi, 0.98 * max_mass))

    lo, hi = 0.0, 1.0
    while family.cap * np.minimum(1.0, hi * u).sum() * grid.cell_area < target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if family.cap * np.minimum(1.0, mid * u).sum() * grid.cell_area < target:
            lo = mid
        else:
            hi = mid
    values = family.cap * np.minimum(1.0, hi * u)
    return Sample(f"random-{index:02d}", Field2D(values, grid))


def standard_samples(
    params: Params,
    n_random: Optional[int] = None,
    n_extremal: Optional[int] = None,
    seed: int = 0,
    grid: Optional[Grid2D] = None,
) -> List[Sample]:
    """Full ball, Case-2 extremal sets and random members of the family."""
    family = DensityFamilySpec(params.theta)
    grid = grid or sample_grid()
    n_random = settings.domination_random_members if n_random is None else n_random
    n_extremal = settings.domination_extremal_sets if n_extremal is None else n_extremal

    samples = [full_ball_sample(family, grid)]
    for r in np.linspace(CASE2_LOWER + 0.05, 1.0, n_extremal):
        samples.append(extremal_set_sample(float(r), family, grid))
    rng = np.random.default_rng(seed)
    for k in range(n_random):
        samples.append(random_sample(k, family, grid, rng))
    return samples


# ============ Domination ============

@dataclass
class DominationReport:
    rows: List[dict] = field(default_factory=list)
    tolerance: float = 1e-9

    @property
    def violations(self) -> List[dict]:
        return [row for row in self.rows if row["margin"] < -self.tolerance]

    @property
    def literal_violations(self) -> List[dict]:
        return [row for row in self.rows if row["margin_literal"] < -self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.violations

    def worst_margin(self) -> float:
        return min((row["margin"] for row in self.rows), default=math.inf)

    def to_frame(self) -> pd.DataFrame:
        columns = ["r", "g_id", "lhs", "rhs", "margin", "rhs_literal", "margin_literal"]
        return pd.DataFrame(self.rows, columns=columns)


def default_r_grid(params: Params, count: int = 40) -> np.ndarray:
    return np.geomspace(params.r0 * (1.0 + 1e-3), 4.0 * params.R0, count)


def verify_domination(
    pot: PotentialH,
    params: Params,
    samples: Sequence[Sample],
    r_grid: Sequence[float],
    angles: Optional[int] = None,
    include_extremal: bool = True,
) -> DominationReport:
    """
    Check dH(r) >= boundary drift on |x| = r for every sample.

    `rhs` caps the outward normal component, Ψ(|∇c·n|)·sign(∇c·n), which is the
    quantity the extremal analysis bounds. `rhs_literal` applies the cap to the full
    gradient; tangential components can push it above -v0, so it is reported apart.
    """
    family = DensityFamilySpec(params.theta)
    cutoff = params.cutoff()
    angles = angles or settings.domination_angles
    report = DominationReport()

    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(r_grid <= pot.r0 * (1.0 + 1e-3) - 1e-15):
        raise InputError("r_grid must stay above r0 (1 + 1e-3)")
    for sample in samples:
        family.check_member(sample.g)

    phi = 2.0 * math.pi * np.arange(angles) / angles
    nx = np.cos(phi)
    ny = np.sin(phi)

    groups = {}
    for sample in samples:
        groups.setdefault(sample.g.grid, []).append(sample)

    for r in r_grid:
        lhs = float(pot.dH(r))
        points = np.stack([r * nx, r * ny], axis=1)
        for grid, members in groups.items():
            cells = np.zeros((grid.n, grid.n), dtype=bool)
            for sample in members:
                cells |= sample.g.values != 0
            Kx, Ky = point_gradient_matrix(points, grid, cells, params.sigma)
            G = np.stack([sample.g.values[cells] for sample in members], axis=1)
            gx = Kx @ G
            gy = Ky @ G
            reduced = boundary_drift(gx, gy, nx[:, None], ny[:, None], cutoff, radial_projection=True).max(axis=0)
            literal = boundary_drift(gx, gy, nx[:, None], ny[:, None], cutoff).max(axis=0)
            for k, sample in enumerate(members):
                report.rows.append({
                    "r": float(r),
                    "g_id": sample.gid,
                    "lhs": lhs,
                    "rhs": float(reduced[k]),
                    "margin": lhs - float(reduced[k]),
                    "rhs_literal": float(literal[k]),
                    "margin_literal": lhs - float(literal[k]),
                })

        if include_extremal and samples and r > CASE2_LOWER:
            sup = extremal_drift(float(r), family, params.sigma)
            rhs = float(np.sign(sup) * psi(abs(sup), cutoff))
            report.rows.append({
                "r": float(r), "g_id": "extremal-sup", "lhs": lhs, "rhs": rhs, "margin": lhs - rhs,
                "rhs_literal": rhs, "margin_literal": lhs - rhs,
            })

    logger.info(
        f"Domination: {len(report.rows)} checks, {len(report.violations)} violations, "
        f"{len(report.literal_violations)} literal-form violations, worst margin {report.worst_margin():.3g}"
    )
    return report
