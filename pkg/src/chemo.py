"""
Chemoattractant gradient and extremal drifts.

The chemical solves -sigma Δc = rho2 in free space, so
grad c = (1/sigma) K * rho2 with K(z) = -z / (2 pi |z|^2).
Grid convolutions use the cell-averaged kernel on a zero-padded doubled grid.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np
import scipy.fft as sp_fft
from scipy import integrate, optimize

from .errors import DomainError, InputError, ResolutionError
from .grids import Field2D, Grid2D, RadialProfile
from .model import CutoffSpec, psi

logger = logging.getLogger(__name__)

SQRT_HALF = 1.0 / math.sqrt(2.0)
CASE2_LOWER = math.sqrt(2.0) - 1.0


@dataclass(frozen=True)
class DensityFamilySpec:
    """Densities supported in B(0,1), capped at 2 theta, mass in [pi theta, 2 pi theta]."""
    theta: float

    def __post_init__(self):
        if self.theta <= 0:
            raise InputError("theta must be positive")

    @property
    def cap(self) -> float:
        return 2.0 * self.theta

    @property
    def mass_lo(self) -> float:
        return math.pi * self.theta

    @property
    def mass_hi(self) -> float:
        return 2.0 * math.pi * self.theta

    def check_member(self, g: Field2D, tol: float = 1e-9) -> None:
        """Raise InputError unless g lies in the family (support judged by cell corners)."""
        grid = g.grid
        X, Y = grid.mesh()
        h = grid.h
        far = np.hypot(np.abs(X) + h / 2, np.abs(Y) + h / 2)
        if np.any(g.values[far > 1.0 + tol] != 0.0):
            raise InputError("sample has support outside the unit ball")
        if g.values.min() < 0 or g.values.max() > self.cap * (1 + tol):
            raise InputError(f"sample violates 0 <= g <= {self.cap:.6g}")
        mass = g.mass()
        if not self.mass_lo * (1 - tol) <= mass <= self.mass_hi * (1 + tol):
            raise InputError(f"sample mass {mass:.6g} outside [{self.mass_lo:.6g}, {self.mass_hi:.6g}]")


@dataclass(frozen=True)
class DriftField:
    """Raw gradient (gx, gy) and, once assembled, the capped drift (bx, by)."""
    gx: np.ndarray
    gy: np.ndarray
    grid: Grid2D
    bx: Optional[np.ndarray] = None
    by: Optional[np.ndarray] = None

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.gx, self.gy)


# ============ Kernel ============

def influence_V(x, y, r):
    """V(x, y; r) = (1/2π)(x − r)/((x − r)² + y²)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = x - r
    d2 = dx * dx + y * y
    if np.any(d2 == 0):
        raise DomainError(f"V is singular at ({r}, 0)")
    return dx / (2.0 * math.pi * d2)


def level_set_circle(b: float, r: float) -> Tuple[float, float]:
    """Centre on the x-axis and radius of {V = b}, b != 0."""
    if b == 0:
        raise DomainError("the level set V = 0 is the line x = r")
    return r + 1.0 / (4.0 * math.pi * b), 1.0 / (4.0 * math.pi * abs(b))


def _corner_primitive(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """F with ∂²F/∂x∂y = x/(x²+y²), dropping terms that cancel in corner sums."""
    r2 = x * x + y * y
    safe_r2 = np.where(r2 > 0, r2, 1.0)
    safe_x = np.where(x != 0, x, 1.0)
    log_term = np.where(r2 > 0, 0.5 * y * np.log(safe_r2), 0.0)
    atan_term = np.where(x != 0, x * np.arctan(y / safe_x), 0.0)
    return log_term + atan_term


def _box_integral(x0, x1, y0, y1):
    """∫∫ over [x0,x1]x[y0,y1] of x/(x²+y²)."""
    return (
        _corner_primitive(x1, y1)
        - _corner_primitive(x0, y1)
        - _corner_primitive(x1, y0)
        + _corner_primitive(x0, y0)
    )


def cell_gradient_kernel(dx, dy, h: float, sigma: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    (1/sigma)·∫ grad G over an h x h cell centred at offset (dx, dy).

    Exact for piecewise-constant densities, including the singular cell.
    """
    dx = np.asarray(dx, dtype=float)
    dy = np.asarray(dy, dtype=float)
    scale = -1.0 / (2.0 * math.pi * sigma)
    kx = scale * _box_integral(dx - h / 2, dx + h / 2, dy - h / 2, dy + h / 2)
    ky = scale * _box_integral(dy - h / 2, dy + h / 2, dx - h / 2, dx + h / 2)
    return kx, ky


class GradientSolver:
    """
    Free-space grad c on a fixed grid.

    The kernel transform is built once per grid, as in the doubled-grid Green
    function convolution; `direct=True` sums the same kernel explicitly.
    """

    def __init__(self, grid: Grid2D, sigma: float):
        self.grid = grid
        self.sigma = sigma
        n = grid.n
        offsets = (np.arange(2 * n) - (n - 1)) * grid.h
        OX, OY = np.meshgrid(offsets, offsets, indexing="ij")
        kx, ky = cell_gradient_kernel(OX, OY, grid.h, sigma)
        # index 2n-1 holds offset n, never reached by a grid pair
        kx[-1, :] = kx[:, -1] = 0.0
        ky[-1, :] = ky[:, -1] = 0.0
        self._kx = kx
        self._ky = ky
        self._kx_hat = sp_fft.rfft2(kx)
        self._ky_hat = sp_fft.rfft2(ky)

    def gradient(self, rho2: np.ndarray, direct: bool = False) -> Tuple[np.ndarray, np.ndarray]:
        n = self.grid.n
        if direct:
            return self._direct(rho2)

        padded = np.zeros((2 * n, 2 * n))
        padded[:n, :n] = rho2
        rho_hat = sp_fft.rfft2(padded)
        shape = padded.shape
        gx = sp_fft.irfft2(rho_hat * self._kx_hat, s=shape)[n - 1:2 * n - 1, n - 1:2 * n - 1]
        gy = sp_fft.irfft2(rho_hat * self._ky_hat, s=shape)[n - 1:2 * n - 1, n - 1:2 * n - 1]
        return gx, gy

    def _direct(self, rho2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        n = self.grid.n
        gx = np.zeros((n, n))
        gy = np.zeros((n, n))
        for i, j in zip(*np.nonzero(rho2)):
            # target p gets kernel offset p - q, stored at index p - q + n - 1
            gx += rho2[i, j] * self._kx[n - 1 - i:2 * n - 1 - i, n - 1 - j:2 * n - 1 - j]
            gy += rho2[i, j] * self._ky[n - 1 - i:2 * n - 1 - i, n - 1 - j:2 * n - 1 - j]
        return gx, gy


SOLVER_CACHE_SIZE = 8


@lru_cache(maxsize=SOLVER_CACHE_SIZE)
def get_solver(grid: Grid2D, sigma: float) -> GradientSolver:
    return GradientSolver(grid, sigma)


def grad_c_2d(rho2: Field2D, sigma: float, direct: bool = False) -> DriftField:
    """Raw grad c for a cell-averaged rho2."""
    grid = rho2.grid
    values = rho2.values
    edge = np.concatenate([values[0, :], values[-1, :], values[:, 0], values[:, -1]])
    if np.any(edge != 0):
        logger.warning("rho2 touches the grid boundary; free-space gradient sees a truncated source")

    if not np.any(values):
        return DriftField(gx=grid.zeros(), gy=grid.zeros(), grid=grid)

    gx, gy = get_solver(grid, sigma).gradient(values, direct=direct)
    return DriftField(gx=gx, gy=gy, grid=grid)


def assemble_drift(field: DriftField, cutoff: CutoffSpec) -> DriftField:
    """b = (grad c/|grad c|) Ψ(|grad c|); zero where the gradient vanishes."""
    mag = field.magnitude()
    speed = psi(mag, cutoff)
    safe = np.where(mag > 0, mag, 1.0)
    scale = np.where(mag > 0, speed / safe, 0.0)
    return DriftField(gx=field.gx, gy=field.gy, grid=field.grid, bx=scale * field.gx, by=scale * field.gy)


def grad_c_radial(rho2: RadialProfile, r, sigma: float):
    """∂_r c = −(1/(σ r)) ∫_0^r s ρ₂(s) ds; 0 at r = 0."""
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.zeros_like(r_arr)
    pos = r_arr > 0
    if np.any(pos):
        out[pos] = -rho2.moment(r_arr[pos]) / (sigma * r_arr[pos])
    return out if np.ndim(r) else float(out[0])


# ============ Boundary drift at points ============

def point_gradient_matrix(points: np.ndarray, grid: Grid2D, cells: np.ndarray, sigma: float):
    """
    Matrices (Kx, Ky) of shape (points, cells) mapping cell values to grad c at points.

    `cells` is a boolean mask selecting the source cells of the grid.
    """
    X, Y = grid.mesh()
    cx = X[cells]
    cy = Y[cells]
    dx = points[:, 0:1] - cx[None, :]
    dy = points[:, 1:2] - cy[None, :]
    return cell_gradient_kernel(dx, dy, grid.h, sigma)


def boundary_drift(gx, gy, nx, ny, cutoff: CutoffSpec, radial_projection: bool = False):
    """
    Outward component of the capped drift at boundary points.

    Default is Ψ(|∇c|)(∇c·n)/|∇c|; with radial_projection the cap is applied to
    the normal component alone, Ψ(|∇c·n|)·sign(∇c·n).
    """
    normal = gx * nx + gy * ny
    if radial_projection:
        return np.sign(normal) * psi(np.abs(normal), cutoff)
    mag = np.hypot(gx, gy)
    safe = np.where(mag > 0, mag, 1.0)
    return np.where(mag > 0, psi(mag, cutoff) * normal / safe, 0.0)


# ============ Extremal drift over the family ============

def _lens_geometry(r: float, rho: float):
    """Disk D through (r, 0) with centre (r - rho, 0): x-range and chord half-height of B(0,1) ∩ D."""
    c = r - rho
    lo = max(-1.0, c - rho)
    hi = min(1.0, r)

    def height(x):
        s_ball = math.sqrt(max(1.0 - x * x, 0.0))
        s_disk = math.sqrt(max(rho * rho - (x - c) ** 2, 0.0))
        return min(s_ball, s_disk)

    # x where the two circles cross, used as a quadrature breakpoint
    cross = (1.0 - rho * rho + c * c) / (2.0 * c) if c != 0 else 0.0
    points = [cross] if lo < cross < hi else None
    return lo, hi, height, points


def _lens_area(r: float, rho: float) -> float:
    lo, hi, height, points = _lens_geometry(r, rho)
    if hi <= lo:
        return 0.0
    value, _ = integrate.quad(lambda x: 2.0 * height(x), lo, hi, points=points, limit=200)
    return value


def _lens_field(r: float, rho: float) -> float:
    """∫ V over B(0,1) ∩ D, using ∫_{-Y}^{Y} (x−r)/((x−r)²+y²) dy = 2 arctan(Y/(x−r))."""
    lo, hi, height, points = _lens_geometry(r, rho)
    if hi <= lo:
        return 0.0

    def inner(x):
        dx = x - r
        if dx == 0:
            return -0.5 if height(x) > 0 else 0.0
        return math.atan(height(x) / dx) / math.pi

    value, _ = integrate.quad(inner, lo, hi, points=points, limit=200)
    return value


def _outer_extremal(r: float, family: DensityFamilySpec, sigma: float) -> float:
    """
    Exact sup for r > 1.

    The optimal set is B(0,1) minus the part of a level-set disk through (r, 0)
    whose intersection with the ball has area pi/2.
    """
    target = 0.5 * math.pi
    rho_lo = 0.5 * (r - 1.0) + 1e-12
    rho_hi = 0.5 * (r + 1.0)
    while _lens_area(r, rho_hi) < target:
        rho_hi *= 2.0
    rho = optimize.brentq(lambda p: _lens_area(r, p) - target, rho_lo, rho_hi, xtol=1e-13)
    full_ball = -1.0 / (2.0 * r)
    return (family.cap / sigma) * (full_ball - _lens_field(r, rho))


def extremal_drift(r: float, family: DensityFamilySpec, sigma: float) -> float:
    """
    sup over the family of (1/σ)∫ g V(·; r).

    On (√2−1, 1] this is −(θ/σ)(r − 1/√2); for r > 1 the level-set optimum is
    computed by root finding and always lies in the outer bracket.
    """
    if r <= CASE2_LOWER:
        raise DomainError(f"extremal drift is only characterized for r > sqrt(2) - 1 (got r = {r})")
    ratio = family.theta / sigma  # equals gamma/chi
    if r <= 1.0:
        return -ratio * (r - SQRT_HALF)
    return _outer_extremal(r, family, sigma)


def extremal_bracket(r: float, family: DensityFamilySpec, sigma: float) -> Tuple[float, float]:
    """[γ/(χ(1−r)), −γ/(2χ(1+r))] for r > 1."""
    ratio = family.theta / sigma
    return ratio / (1.0 - r), -ratio / (2.0 * (1.0 + r))


def greedy_fill(values: np.ndarray, areas: np.ndarray, cap: float, mass: float) -> np.ndarray:
    """Densities filling cells in decreasing `values` order at `cap` until `mass` is reached."""
    order = np.argsort(-values, kind="stable")
    cell_mass = cap * areas[order]
    before = np.concatenate([[0.0], np.cumsum(cell_mass)[:-1]])
    fill = np.clip((mass - before) / cell_mass, 0.0, 1.0)
    density = np.zeros_like(values)
    density[order] = cap * fill
    return density


def brute_force_extremal(
    r: float,
    family: DensityFamilySpec,
    sigma: float,
    n_radial: int = 300,
    n_angular: int = 600,
    sub: int = 4,
) -> float:
    """
    Greedy oracle on a polar discretization of B(0,1).

    Cells are ranked by their sub-sampled mean of V and filled at the cap until
    the mass reaches pi theta.
    """
    cell_area = math.pi / (n_radial * n_angular)
    if family.cap * cell_area > family.mass_lo / 100.0:
        raise ResolutionError(
            f"polar cells too coarse: cell mass {family.cap * cell_area:.3g} > pi theta / 100"
        )

    dr = 1.0 / n_radial
    dphi = 2.0 * math.pi / n_angular
    frac = (np.arange(sub) + 0.5) / sub
    radii = (np.arange(n_radial)[:, None] + frac[None, :]).ravel() * dr
    angles = (np.arange(n_angular)[:, None] + frac[None, :]).ravel() * dphi
    RR, AA = np.meshgrid(radii, angles, indexing="ij")
    xs = RR * np.cos(AA)
    ys = RR * np.sin(AA)
    dx = xs - r
    V = dx / (2.0 * math.pi * (dx * dx + ys * ys))

    # area-weighted mean of V per cell (weights ∝ radius)
    weighted = (V * RR).reshape(n_radial, sub, n_angular, sub).sum(axis=(1, 3))
    weights = RR.reshape(n_radial, sub, n_angular, sub).sum(axis=(1, 3))
    mean_V = weighted / weights

    edges = np.arange(n_radial + 1) * dr
    areas = np.repeat((0.5 * (edges[1:] ** 2 - edges[:-1] ** 2) * dphi)[:, None], n_angular, axis=1)

    g = greedy_fill(mean_V.ravel(), areas.ravel(), family.cap, family.mass_lo)
    return float(np.sum(g * mean_V.ravel() * areas.ravel()) / sigma)
