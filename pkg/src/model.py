"""
Model parameters, rescaling, the sensitivity cutoff and initial data.

Params is the dimensionless bundle every solver consumes. Construction
enforces the admitted regime: v0 <= 1, gamma >= 16, M0 v0^2 >= 40 pi theta,
unless build_params is told to skip it.
"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, ValidationError, ValidationInfo, model_validator

from .config import format_flat, read_flat_file, settings
from .errors import ConfigurationError, RegimeError
from .grids import Field2D, Grid2D

logger = logging.getLogger(__name__)

SQRT_HALF = 1.0 / math.sqrt(2.0)


class Regime(str, Enum):
    """Distance regimes of the half-time bound."""
    NEAR = "near"  # L <= 1/v0
    MID = "mid"    # 1/v0 < L <= R0
    FAR = "far"    # L > R0


class InitialKind(str, Enum):
    RADIAL_RING = "radial-ring"
    OFFSET_BUMP = "offset-bump"


# ============ Parameters ============

class PhysicalParams(BaseModel):
    """Parameters with physical dimensions."""
    model_config = ConfigDict(frozen=True)

    kappa: float
    chi: float
    v0: float
    eps: float
    a: float
    sigma: float
    theta: float
    l: float  # noqa: E741
    L: float
    M0: float
    beta: float
    delta: float

    @model_validator(mode="after")
    def _check(self):
        for name, value in self.model_dump().items():
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive (got {value})")
        if abs(self.chi * self.beta - self.v0) > 1e-12 * abs(self.v0):
            raise ValueError(f"chi*beta = {self.chi * self.beta!r} differs from v0 = {self.v0!r}")
        return self


class Params(BaseModel):
    """
    Dimensionless parameters.

    gamma, R0 and r0 are derived; beta defaults to v0/chi and delta to beta/10.
    """
    model_config = ConfigDict(frozen=True)

    chi: float
    v0: float
    eps: float
    theta: float
    sigma: float
    M0: float
    L: float
    beta: Optional[float] = None
    delta: Optional[float] = None
    delta0: float = 0.05

    @model_validator(mode="after")
    def _check(self, info: ValidationInfo):
        for name in ("chi", "v0", "theta", "sigma", "L"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        if self.eps < 0 or self.M0 < 0:
            raise ValueError("eps and M0 must be nonnegative")

        beta = self.v0 / self.chi
        if self.beta is None:
            object.__setattr__(self, "beta", beta)
        elif abs(self.beta - beta) > 1e-12 * beta:
            raise ValueError(f"beta must equal v0/chi = {beta!r}")
        if self.delta is None:
            object.__setattr__(self, "delta", self.beta / 10.0)
        if not 0 < self.delta < self.beta:
            raise ValueError("delta must lie in (0, beta)")
        if not 0 < self.delta0 < 1:
            raise ValueError("delta0 must lie in (0, 1)")

        if info.context and not info.context.get("check_regime", True):
            return self
        violated = regime_violations(self.v0, self.gamma, self.M0, self.theta)
        if violated:
            raise ValueError("outside the admitted regime: " + "; ".join(violated))
        return self

    @property
    def gamma(self) -> float:
        return self.theta * self.chi / self.sigma

    @property
    def R0(self) -> float:
        return self.gamma / (2.0 * self.v0) - 1.0

    @property
    def r0(self) -> float:
        return self.v0 / self.gamma + SQRT_HALF

    @property
    def half_mass(self) -> float:
        """pi * theta, the depletion level defining the half-time."""
        return math.pi * self.theta

    def regime(self) -> Regime:
        return regime_of(self.L, self.v0, self.R0)

    def cutoff(self) -> "CutoffSpec":
        return CutoffSpec(chi=self.chi, v0=self.v0, beta=self.beta, delta=self.delta)

    def summary(self) -> Dict[str, float]:
        return {
            "gamma": self.gamma,
            "beta": self.beta,
            "R0": self.R0,
            "r0": self.r0,
            "one_over_v0": 1.0 / self.v0,
            "M0_eps": self.M0 * self.eps,
            "regime": self.regime().value,
        }

    def to_config(self) -> str:
        values = {"units": "dimensionless"}
        values.update(self.model_dump())
        return format_flat(values)

    def with_updates(self, **changes) -> "Params":
        """Validated copy with some fields replaced; derived beta/delta are recomputed."""
        data = self.model_dump()
        data.update(changes)
        if "beta" not in changes:
            data["beta"] = None
        if "delta" not in changes:
            data["delta"] = None
        return build_params(**data)


def regime_violations(v0: float, gamma: float, M0: float, theta: float):
    violated = []
    if v0 > 1.0:
        violated.append(f"v0 <= 1 (v0 = {v0:.6g})")
    if gamma < 16.0:
        violated.append(f"gamma >= 16 (gamma = {gamma:.6g})")
    if M0 * v0 * v0 < 40.0 * math.pi * theta:
        violated.append(f"M0 v0^2 >= 40 pi theta ({M0 * v0 * v0:.6g} < {40.0 * math.pi * theta:.6g})")
    return violated


def regime_of(L: float, v0: float, R0: float) -> Regime:
    if L <= 1.0 / v0:
        return Regime.NEAR
    if L <= R0:
        return Regime.MID
    return Regime.FAR


def build_params(check_regime: bool = True, **values) -> Params:
    """
    Construct Params, turning pydantic validation failures into RegimeError.

    check_regime=False skips the regime gate only (e.g. M0 = 0 test data); the
    positivity and beta/delta checks still apply.
    """
    try:
        return Params.model_validate(values, context={"check_regime": check_regime})
    except ValidationError as e:
        raise RegimeError(_first_message(e)) from e


def rescale(p: PhysicalParams) -> Params:
    """Dimensionless parameters from physical ones."""
    chi = p.chi / p.kappa
    v0 = p.v0 * p.l / p.kappa
    params = build_params(
        chi=chi,
        v0=v0,
        eps=p.eps * p.l * p.l / p.kappa,
        theta=p.theta,
        sigma=p.sigma / (p.l * p.l * p.a),
        M0=p.M0 / (p.l * p.l),
        L=p.L / p.l,
        beta=v0 / chi,
        delta=p.delta * p.l,
    )
    logger.debug(f"Rescaled parameters: {params.summary()}")
    return params


def _first_message(e: ValidationError) -> str:
    errors = e.errors()
    if not errors:
        return str(e)
    return str(errors[0].get("msg", e)).removeprefix("Value error, ")


# ============ Config files ============

OPTION_KEYS = ("units", "kind", "seed", "cells_per_unit", "t_max")


def load_config(path: str) -> Tuple[Params, Dict[str, str]]:
    """
    Parse a flat parameter file into Params plus run options.

    `units = physical` rescales; anything else is read as dimensionless.
    """
    values = read_flat_file(path)
    options = {k: values.pop(k) for k in OPTION_KEYS if k in values}
    units = options.get("units", "dimensionless")

    model = PhysicalParams if units == "physical" else Params
    unknown = sorted(set(values) - set(model.model_fields))
    if unknown:
        raise ConfigurationError(f"Unknown keys in {path}: {', '.join(unknown)}")

    try:
        numbers = {k: float(v) for k, v in values.items()}
    except ValueError as e:
        raise ConfigurationError(f"Non-numeric value in {path}: {e}") from e

    if units == "physical":
        try:
            physical = PhysicalParams(**numbers)
        except ValidationError as e:
            raise ConfigurationError(_first_message(e)) from e
        params = rescale(physical)
    elif units == "dimensionless":
        params = build_params(**numbers)
    else:
        raise ConfigurationError(f"Unknown units: {units}")

    logger.info(f"Loaded {path}: gamma={params.gamma:.4g}, R0={params.R0:.4g}, regime={params.regime().value}")
    return params, options


# ============ Sensitivity cutoff ============

@dataclass(frozen=True)
class CutoffSpec:
    """Linear slope chi up to beta - delta, cubic bridge, then capped at v0."""
    chi: float
    v0: float
    beta: float
    delta: float

    @property
    def bridge_start(self) -> float:
        return self.beta - self.delta


def psi(z, spec: CutoffSpec) -> np.ndarray:
    """
    Drift magnitude for gradient magnitude z >= 0.

    On (beta - delta, beta) the bridge is the cubic Hermite interpolant matching
    value and slope at both ends: chi z + chi delta s^2 (1 - s), s = (z - beta + delta)/delta,
    which stays above chi z and is nondecreasing.
    """
    z = np.asarray(z, dtype=float)
    s = np.clip((z - spec.bridge_start) / spec.delta, 0.0, 1.0)
    bridge = spec.chi * z + spec.chi * spec.delta * s * s * (1.0 - s)
    return np.where(z <= spec.bridge_start, spec.chi * z, np.where(z >= spec.beta, spec.v0, bridge))


# ============ Initial data ============

@dataclass(frozen=True)
class InitialData:
    kind: InitialKind
    rho1: Field2D
    rho2: Field2D
    angle: float = 0.0


def domain_half_width(params: Params) -> float:
    """Truncated square domain; always covers B(0, L + 5/v0)."""
    return max(2.0 * params.L, 8.0 / params.v0, params.L + 5.0 / params.v0)


def default_grid(params: Params, cells_per_unit: Optional[int] = None) -> Grid2D:
    cells = cells_per_unit or settings.cells_per_unit
    return Grid2D.with_spacing(domain_half_width(params), 1.0 / cells)


def _bump(s: np.ndarray) -> np.ndarray:
    """Compactly supported mollifier on (-1, 1)."""
    inside = np.abs(s) < 1.0
    safe = np.where(inside, 1.0 - s * s, 1.0)
    return np.where(inside, np.exp(1.0 - 1.0 / safe), 0.0)


def _smooth_step(s: np.ndarray) -> np.ndarray:
    """C-infinity step: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    pos = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    neg = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return pos / (pos + neg)


def plateau(r: np.ndarray, delta0: float) -> np.ndarray:
    """eta: 1 on B(0, 1 - delta0), 0 outside B(0, 1)."""
    return _smooth_step((1.0 - r) / delta0)


def _cell_average(grid: Grid2D, func, sub: int = 4, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Average func(x, y) over each cell with sub x sub midpoint samples."""
    X, Y = grid.mesh()
    if mask is None:
        mask = np.ones_like(X, dtype=bool)
    out = grid.zeros()
    xs = X[mask]
    ys = Y[mask]
    acc = np.zeros_like(xs)
    offsets = ((np.arange(sub) + 0.5) / sub - 0.5) * grid.h
    for ox in offsets:
        for oy in offsets:
            acc += func(xs + ox, ys + oy)
    out[mask] = acc / (sub * sub)
    return out


def make_initial(
    params: Params,
    kind: InitialKind = InitialKind.RADIAL_RING,
    grid: Optional[Grid2D] = None,
    seed: Optional[int] = None,
) -> InitialData:
    """
    Build rho1 (mass M0 in L/2 < |x| <= L) and rho2 = 2 theta eta.

    The offset bump is centred at distance 3L/4; a seed rotates it by a random angle.
    """
    grid = grid or default_grid(params)
    kind = InitialKind(kind)

    cells_across = 2.0 / grid.h
    if cells_across < 16:
        raise ConfigurationError(
            f"Grid too coarse: {cells_across:.1f} cells across the unit ball (need >= 16)"
        )
    if grid.half_width < params.L + 5.0 / params.v0 - 1e-12:
        raise ConfigurationError(
            f"Grid half-width {grid.half_width:.4g} does not cover B(0, L + 5/v0 = {params.L + 5.0 / params.v0:.4g})"
        )

    R = grid.radius()
    pad = np.sqrt(2.0) * grid.h

    # rho2: sub-sampled plateau so the cell averages respect 7 pi theta/4 <= mass <= 2 pi theta
    near_ball = R < 1.0 + pad
    eta = _cell_average(grid, lambda x, y: plateau(np.hypot(x, y), params.delta0), sub=8, mask=near_ball)
    rho2 = 2.0 * params.theta * eta

    angle = 0.0
    if kind == InitialKind.RADIAL_RING:
        mid = 7.0 * params.L / 8.0
        half = params.L / 8.0
        support = (R > 0.75 * params.L - pad) & (R < params.L + pad)
        shape = _cell_average(grid, lambda x, y: _bump((np.hypot(x, y) - mid) / half), mask=support)
    else:
        if seed is not None:
            angle = float(np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi))
        cx = 0.75 * params.L * np.cos(angle)
        cy = 0.75 * params.L * np.sin(angle)
        radius = params.L / 4.0
        X, Y = grid.mesh()
        support = np.hypot(X - cx, Y - cy) < radius + pad
        shape = _cell_average(grid, lambda x, y: _bump(np.hypot(x - cx, y - cy) / radius), mask=support)

    total = shape.sum() * grid.cell_area
    if params.M0 == 0 or total == 0:
        rho1 = grid.zeros()
    else:
        rho1 = shape * (params.M0 / total)

    data = InitialData(kind=kind, rho1=Field2D(rho1, grid), rho2=Field2D(rho2, grid), angle=angle)
    logger.info(
        f"Initial data ({kind.value}): grid {grid.n}^2, h={grid.h:.4g}, "
        f"mass1={data.rho1.mass():.6g}, mass2={data.rho2.mass():.6g}"
    )
    return data
