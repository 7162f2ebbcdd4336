"""
Grid and profile containers shared by the solvers.

Grid2D is a uniform cell-centred square grid centred on the origin.
Field2D pairs cell values with their grid. RadialProfile samples a function
of r >= 0 and integrates its piecewise-linear interpolant exactly.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigurationError, DomainError


@dataclass(frozen=True)
class Grid2D:
    """Square grid [-half_width, half_width]^2 with n x n cells."""
    n: int
    half_width: float

    def __post_init__(self):
        if self.n < 2 or self.half_width <= 0:
            raise ConfigurationError(f"Invalid grid: n={self.n}, half_width={self.half_width}")

    @property
    def h(self) -> float:
        return 2.0 * self.half_width / self.n

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @property
    def centers(self) -> np.ndarray:
        """1D cell-centre coordinates (same along x and y)."""
        return -self.half_width + (np.arange(self.n) + 0.5) * self.h

    def mesh(self):
        """(X, Y) arrays indexed [i, j] with i along x."""
        c = self.centers
        return np.meshgrid(c, c, indexing="ij")

    def radius(self) -> np.ndarray:
        X, Y = self.mesh()
        return np.hypot(X, Y)

    def zeros(self) -> np.ndarray:
        return np.zeros((self.n, self.n))

    @classmethod
    def with_spacing(cls, half_width: float, h: float) -> "Grid2D":
        """Smallest grid with spacing <= h covering the half-width (extent is rounded up)."""
        n = int(np.ceil(2.0 * half_width / h - 1e-9))
        return cls(n=n, half_width=0.5 * n * h)


@dataclass(frozen=True)
class Field2D:
    """Cell-averaged scalar field on a Grid2D."""
    values: np.ndarray
    grid: Grid2D

    def __post_init__(self):
        if self.values.shape != (self.grid.n, self.grid.n):
            raise ConfigurationError(
                f"Field shape {self.values.shape} does not match grid {self.grid.n}x{self.grid.n}"
            )

    def mass(self) -> float:
        return float(self.values.sum() * self.grid.cell_area)

    def max(self) -> float:
        return float(self.values.max())


@dataclass(frozen=True)
class RadialProfile:
    """
    Samples of a radial function at nondecreasing nodes r.

    Repeated nodes encode jumps: the segment between them has zero width.
    """
    r: np.ndarray
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if self.r.shape != self.values.shape or self.r.ndim != 1:
            raise ConfigurationError("RadialProfile needs matching 1D node and value arrays")
        if np.any(np.diff(self.r) < 0):
            raise ConfigurationError("RadialProfile nodes must be nondecreasing")

    def __call__(self, r) -> np.ndarray:
        return np.interp(r, self.r, self.values)

    @classmethod
    def step(cls, height: float, radius: float, r_max: float) -> "RadialProfile":
        """height on [0, radius], zero beyond."""
        return cls(
            r=np.array([0.0, radius, radius, max(r_max, radius)]),
            values=np.array([height, height, 0.0, 0.0]),
        )

    def moment(self, r) -> np.ndarray:
        """
        Exact ∫_0^r s f(s) ds of the piecewise-linear interpolant.

        Beyond the last node the profile is treated as zero.
        """
        r = np.atleast_1d(np.asarray(r, dtype=float))
        a = self.r[:-1]
        b = self.r[1:]
        fa = self.values[:-1]
        fb = self.values[1:]

        out = np.zeros_like(r)
        for k, rk in enumerate(r):
            upper = np.clip(rk, a, b)
            out[k] = _linear_moment(a, upper, fa, fb, b).sum()
        return out


def _linear_moment(a, upper, fa, fb, b):
    """∫_a^upper s·f(s) ds with f linear on [a, b], vectorized over segments."""
    width = b - a
    safe = np.where(width > 0, width, 1.0)
    slope = np.where(width > 0, (fb - fa) / safe, 0.0)
    # f(s) = fa + slope (s - a)
    c0 = fa - slope * a
    return c0 * (upper**2 - a**2) / 2.0 + slope * (upper**3 - a**3) / 3.0


# ============ Circle / cell overlap ============

def _sector_primitive(x: np.ndarray, R: float) -> np.ndarray:
    """∫ sqrt(R² - x²) dx."""
    xc = np.clip(x / R, -1.0, 1.0)
    return 0.5 * R * R * (xc * np.sqrt(1.0 - xc * xc) + np.arcsin(xc))


def _quadrant_area(X: np.ndarray, Y: np.ndarray, R: float) -> np.ndarray:
    """Area of {|p| <= R, p_x <= X, p_y <= Y}."""
    Xc = np.clip(X, -R, R)
    Yc = np.clip(Y, -R, R)
    w = np.sqrt(np.maximum(R * R - Yc * Yc, 0.0))

    # |x| < w: chord from -s to Y, length Y + s
    lo = -w
    hi = np.clip(Xc, -w, w)
    inner = Yc * (hi - lo) + _sector_primitive(hi, R) - _sector_primitive(lo, R)

    # |x| >= w: the full chord (2s) when Y >= 0, nothing when Y < 0
    left_hi = np.minimum(Xc, -w)
    left = 2.0 * (_sector_primitive(left_hi, R) - _sector_primitive(-R, R))
    right_lo = w
    right = np.where(Xc > w, 2.0 * (_sector_primitive(Xc, R) - _sector_primitive(right_lo, R)), 0.0)
    outer = np.where(Yc >= 0.0, left + right, 0.0)
    return inner + outer


def disk_overlap(grid: Grid2D, R: float) -> np.ndarray:
    """
    Exact area of each cell inside the disk of radius R about the origin.

    Only cells straddling the circle are computed; others are 0 or h².
    """
    if R <= 0:
        return grid.zeros()

    h = grid.h
    X, Y = grid.mesh()
    ax = np.abs(X)
    ay = np.abs(Y)
    near = np.hypot(np.maximum(ax - h / 2, 0.0), np.maximum(ay - h / 2, 0.0))
    far = np.hypot(ax + h / 2, ay + h / 2)

    area = np.where(far <= R, h * h, 0.0)
    cut = (near < R) & (far > R)
    if np.any(cut):
        x0 = X[cut] - h / 2
        x1 = X[cut] + h / 2
        y0 = Y[cut] - h / 2
        y1 = Y[cut] + h / 2
        area[cut] = (
            _quadrant_area(x1, y1, R)
            - _quadrant_area(x0, y1, R)
            - _quadrant_area(x1, y0, R)
            + _quadrant_area(x0, y0, R)
        )
    return area


def check_radius(grid: Grid2D, r: float, what: Optional[str] = "radius"):
    if r > np.sqrt(2.0) * grid.half_width:
        raise DomainError(f"{what} {r:.6g} lies beyond the grid (half-width {grid.half_width:.6g})")
