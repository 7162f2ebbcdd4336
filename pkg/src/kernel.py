"""
Lower bound on the fundamental solution of drift-diffusion with bounded drift.

Γ_t + b·∇Γ = ΔΓ with |b| ≤ B is bounded below by a product of one-dimensional
factors built from a shifted Gaussian and erfc. This module evaluates that
bound, its scale-free constant a(C3) at t = v0⁻², the series constant C2, and
checks the bound against a direct numerical solve.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial
from scipy import optimize
from scipy.interpolate import RegularGridInterpolator

from .chemo import assemble_drift, grad_c_2d
from .errors import DomainError, InputError, ResolutionError
from .grids import Field2D
from .model import Params

logger = logging.getLogger(__name__)

C2_MASS = 1.0 / 40.0  # mass fraction near the attractant

# ============ erfc ============
# Rational approximations from the SunPro/FreeBSD libm erf/erfc.

ERX = 8.45062911510467529297e-01
EFX = 1.28379167095512586316e-01

_PP = Polynomial([1.28379167095512558561e-01, -3.25042107247001499370e-01, -2.84817495755985104766e-02,
                  -5.77027029648944159157e-03, -2.37630166566501626084e-05])
_QQ = Polynomial([1.0, 3.97917223959155352819e-01, 6.50222499887672944485e-02, 5.08130628187576562776e-03,
                  1.32494738004321644526e-04, -3.96022827877536812320e-06])

_PA = Polynomial([-2.36211856075265944077e-03, 4.14856118683748331666e-01, -3.72207876035701323847e-01,
                  3.18346619901161753674e-01, -1.10894694282396677476e-01, 3.54783043256182359371e-02,
                  -2.16637559486879084300e-03])
_QA = Polynomial([1.0, 1.06420880400844228286e-01, 5.40397917702171048937e-01, 7.18286544141962662868e-02,
                  1.26171219808761642112e-01, 1.36370839120290507362e-02, 1.19844998467991074170e-02])

_RA = Polynomial([-9.86494403484714822705e-03, -6.93858572707181764372e-01, -1.05586262253232909814e01,
                  -6.23753324503260060396e01, -1.62396669462573470355e02, -1.84605092906711035994e02,
                  -8.12874355063065934246e01, -9.81432934416914548592e00])
_SA = Polynomial([1.0, 1.96512716674392571292e01, 1.37657754143519042600e02, 4.34565877475229228821e02,
                  6.45387271733267880336e02, 4.29008140027567833386e02, 1.08635005541779435134e02,
                  6.57024977031928170135e00, -6.04244152148580987438e-02])

_RB = Polynomial([-9.86494292470009928597e-03, -7.99283237680523006574e-01, -1.77579549177547519889e01,
                  -1.60636384855821916062e02, -6.37566443368389627722e02, -1.02509513161107724954e03,
                  -4.83519191608651397019e02])
_SB = Polynomial([1.0, 3.03380607434824582924e01, 3.25792512996573918826e02, 1.53672958608443695994e03,
                  3.19985821950859553908e03, 2.55305040643316442583e03, 4.74528541206955367215e02,
                  -2.24409524465858183362e01])


def _erfc_tail(x: np.ndarray, r: Polynomial, s: Polynomial) -> np.ndarray:
    # x is split into a float32 head so head² is exact; exp(-x²) keeps full relative accuracy
    z = 1.0 / (x * x)
    head = x.astype(np.float32).astype(np.float64)
    return np.exp(-head * head - 0.5625) * np.exp((head - x) * (head + x) + r(z) / s(z)) / x


def _erfc_right(x: np.ndarray) -> np.ndarray:
    """erfc on x >= 0."""
    bins = np.count_nonzero(x >= np.array([[0.84375], [1.25], [1.0 / 0.35], [28.0]]), axis=0)
    out = np.empty_like(x)

    small = bins == 0
    if np.any(small):
        xs = x[small]
        z = xs * xs
        erf = np.where(xs < 2.0 ** -28, xs + EFX * xs, xs + xs * (_PP(z) / _QQ(z)))
        out[small] = 1.0 - erf

    mid = bins == 1
    if np.any(mid):
        s = x[mid] - 1.0
        out[mid] = 1.0 - ERX - _PA(s) / _QA(s)

    near = bins == 2
    if np.any(near):
        out[near] = _erfc_tail(x[near], _RA, _SA)

    far = bins == 3
    if np.any(far):
        out[far] = _erfc_tail(x[far], _RB, _SB)

    out[bins == 4] = 0.0
    return out


def erfc(x):
    """(2/√π)∫_x^∞ e^{-y²} dy; scalar in, scalar out."""
    arr = np.asarray(x, dtype=float)
    flat = arr.ravel()
    out = np.full_like(flat, np.nan)
    ok = ~np.isnan(flat)
    pos = ok & (flat >= 0)
    neg = ok & (flat < 0)
    if np.any(pos):
        out[pos] = _erfc_right(flat[pos])
    if np.any(neg):
        out[neg] = 2.0 - _erfc_right(-flat[neg])
    out = out.reshape(arr.shape)
    return float(out) if out.ndim == 0 else out


# ============ The bound ============

@dataclass(frozen=True)
class KernelBoundQuery:
    x: Tuple[float, float]
    y: Tuple[float, float]
    t: float
    s: float = 0.0
    B: float = 0.0

    def __post_init__(self):
        if not self.t > self.s:
            raise DomainError(f"kernel bound needs t > s (t={self.t}, s={self.s})")
        if self.s < 0:
            raise DomainError(f"s must be nonnegative (got {self.s})")
        if self.B < 0:
            raise InputError(f"drift bound B must be nonnegative (got {self.B})")

    @property
    def elapsed(self) -> float:
        return self.t - self.s


def bound_factor(d, tau: float, B: float):
    """One coordinate of the product: Gaussian shifted by B tau minus (B/4) erfc(...)."""
    d = np.abs(np.asarray(d, dtype=float))
    gauss = np.exp(-(d + B * tau) ** 2 / (4.0 * tau)) / math.sqrt(4.0 * math.pi * tau)
    if B == 0:
        return gauss
    return gauss - 0.25 * B * erfc(d / math.sqrt(4.0 * tau) + 0.5 * B * math.sqrt(tau))


def gamma_lower_bound(q: KernelBoundQuery) -> float:
    """Product bound for Γ(x, y, t, s); negative values mean the bound is vacuous."""
    tau = q.elapsed
    value = 1.0
    for xi, yi in zip(q.x, q.y):
        value *= float(bound_factor(xi - yi, tau, q.B))
    return value


def heat_kernel(x, y, tau: float) -> float:
    d2 = (x[0] - y[0]) ** 2 + (x[1] - y[1]) ** 2
    return math.exp(-d2 / (4.0 * tau)) / (4.0 * math.pi * tau)


def harnack_constant(C3: float, v0: float = 1.0, samples: int = 201) -> float:
    """
    a(C3) = inf of the bound / v0² over |x_i − y_i| <= C3/v0, |x − y| <= C3/v0, t = v0⁻².

    Grid search over the quarter disk, then a bounded scalar refinement along the
    arc |x − y| = C3/v0 where the minimum sits. A nonpositive infimum returns 0.
    """
    if not C3 > 0:
        raise InputError(f"C3 must be positive (got {C3})")
    tau = 1.0 / v0 ** 2
    R = C3 / v0
    d = np.linspace(0.0, R, samples)
    f = bound_factor(d, tau, v0)
    D1, D2 = np.meshgrid(d, d, indexing="ij")
    inside = D1 ** 2 + D2 ** 2 <= R * R * (1.0 + 1e-12)
    values = np.outer(f, f)
    grid_min = float(values[inside].min())

    def on_arc(alpha):
        return float(bound_factor(R * math.cos(alpha), tau, v0) * bound_factor(R * math.sin(alpha), tau, v0))

    angles = np.linspace(0.0, 0.5 * math.pi, samples)
    arc = np.array([on_arc(a) for a in angles])
    k = int(np.argmin(arc))
    lo = angles[max(k - 1, 0)]
    hi = angles[min(k + 1, samples - 1)]
    refined = optimize.minimize_scalar(on_arc, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    best = min(grid_min, float(arc[k]), float(refined.fun))

    a = best / v0 ** 2
    if a <= 0:
        logger.warning(f"Kernel bound is vacuous for C3={C3:.4g}: infimum {a:.3g}")
        return 0.0
    return a


def harnack_scale_deviation(C3: float, v0s: Sequence[float] = (0.25, 0.5, 1.0)) -> float:
    """Largest relative spread of a(C3) across v0 values."""
    values = np.array([harnack_constant(C3, v0) for v0 in v0s])
    ref = values[-1]
    if ref == 0:
        return float(np.abs(values).max())
    return float(np.abs(values - ref).max() / ref)


def c2_series(tol: float = 1e-15) -> float:
    """Σ_k 4^k e^{2(1−2^k)}."""
    total = 0.0
    k = 0
    while True:
        term = 4.0 ** k * math.exp(2.0 * (1.0 - 2.0 ** k))
        total += term
        if term < tol:
            return total
        k += 1


# ============ Assembled constants ============

def c2_constant_check(params: Params) -> Tuple[float, float, bool]:
    """M0/20 − πθ against c2 M0 with c2 = 1/40; holds whenever M0 v0² >= 40πθ and v0 <= 1."""
    lhs = params.M0 / 20.0 - math.pi * params.theta
    rhs = C2_MASS * params.M0
    return lhs, rhs, lhs >= rhs - 1e-12 * params.M0


def exceptional_set_bound(a: float, params: Params) -> float:
    """Measure bound 2πθ/(a c2 v0² M0) for the set where rho1 < c2 a v0² M0 near the attractant."""
    if a <= 0:
        return math.inf
    return 2.0 * math.pi * params.theta / (a * C2_MASS * params.v0 ** 2 * params.M0)


def total_time_bound(params: Params, C: float) -> float:
    """t* + v0⁻² + C/(ε v0² M0)."""
    from .radialfp import barrier_spec

    t_star = barrier_spec(params, 2).t_star
    if params.eps == 0 or params.M0 == 0:
        return math.inf
    return t_star + params.v0 ** -2 + C / (params.eps * params.v0 ** 2 * params.M0)


# ============ Numerical kernel ============

Drift = Union[Tuple[float, float], Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]]


@dataclass
class KernelCheck:
    x: Tuple[float, float]
    y: Tuple[float, float]
    t: float
    B: float
    pde_value: float
    bound: float
    heat: float
    allowance: float

    @property
    def passed(self) -> bool:
        return self.pde_value >= self.bound - self.allowance


def snapshot_drift(rho2: Field2D, params: Params) -> Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]:
    """Capped chemotactic drift of a frozen rho2, bilinear between cell centres, zero off the grid."""
    drift = assemble_drift(grad_c_2d(rho2, params.sigma), params.cutoff())
    centers = rho2.grid.centers
    ix = RegularGridInterpolator((centers, centers), drift.bx, bounds_error=False, fill_value=0.0)
    iy = RegularGridInterpolator((centers, centers), drift.by, bounds_error=False, fill_value=0.0)

    def field(X, Y):
        pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
        return ix(pts).reshape(X.shape), iy(pts).reshape(X.shape)

    return field


def kernel_bound_vs_pde(
    drift: Drift,
    B: float,
    x: Tuple[float, float],
    y: Tuple[float, float],
    t: float,
    width: Optional[float] = None,
    resolution: int = 20,
    allowance_fraction: float = 0.02,
) -> KernelCheck:
    """
    Solve φ_t = Δφ − b·∇φ from a narrow Gaussian at y and compare φ(x, t) with the bound.

    The Gaussian of width w is the zero-drift kernel at time w²/2, so the solve
    runs from there to t. Dirichlet zero at the box edge; upwind drift terms.
    """
    query = KernelBoundQuery(x=tuple(x), y=tuple(y), t=t, B=B)
    root_t = math.sqrt(t)
    width = width if width is not None else root_t / 10.0
    if width > root_t / 10.0 + 1e-15:
        raise ResolutionError(f"mollifier width {width:.4g} exceeds sqrt(t)/10 = {root_t / 10.0:.4g}")

    h = min(root_t / resolution, width / 2.0)
    distance = math.hypot(x[0] - y[0], x[1] - y[1])
    half = distance + B * t + 6.0 * math.sqrt(2.0 * t) + 4.0 * width
    n = int(math.ceil(2.0 * half / h))
    h = 2.0 * half / n
    offsets = -half + (np.arange(n) + 0.5) * h
    coords = (y[0] + offsets, y[1] + offsets)
    X, Y = np.meshgrid(coords[0], coords[1], indexing="ij")

    if callable(drift):
        bx, by = drift(X, Y)
    else:
        bx = np.full_like(X, float(drift[0]))
        by = np.full_like(X, float(drift[1]))
    if np.max(np.hypot(bx, by)) > B * (1.0 + 1e-12) + 1e-15:
        raise InputError(f"drift exceeds its bound B = {B:.4g} (max {np.max(np.hypot(bx, by)):.4g})")

    phi = np.exp(-((X - y[0]) ** 2 + (Y - y[1]) ** 2) / (2.0 * width ** 2))
    phi /= phi.sum() * h * h

    dt = 0.9 / (4.0 / h ** 2 + (np.abs(bx) + np.abs(by)).max() / h)
    start = 0.5 * width ** 2
    remaining = t - start
    steps = 0
    bxp, bxm = np.maximum(bx, 0.0), np.minimum(bx, 0.0)
    byp, bym = np.maximum(by, 0.0), np.minimum(by, 0.0)
    while remaining > 1e-14:
        step = min(dt, remaining)
        padded = np.pad(phi, 1)
        c = padded[1:-1, 1:-1]
        east, west = padded[2:, 1:-1], padded[:-2, 1:-1]
        north, south = padded[1:-1, 2:], padded[1:-1, :-2]
        lap = (east + west + north + south - 4.0 * c) / h ** 2
        # -b·∇φ, upwinded for transport with velocity b
        adv = (bxp * (c - west) + bxm * (east - c) + byp * (c - south) + bym * (north - c)) / h
        phi = c + step * (lap - adv)
        remaining -= step
        steps += 1

    sampler = RegularGridInterpolator(coords, phi)
    pde_value = float(sampler([[x[0], x[1]]])[0])
    heat = heat_kernel(x, y, t)
    bound = gamma_lower_bound(query)
    logger.debug(f"Kernel solve: {n}^2 cells, {steps} steps, pde={pde_value:.4g}, bound={bound:.4g}")
    return KernelCheck(
        x=tuple(x), y=tuple(y), t=t, B=B,
        pde_value=pde_value, bound=bound, heat=heat,
        allowance=allowance_fraction * heat,
    )


def kernel_table(C3_values: Sequence[float] = (1.0, 2.0, 5.0, 10.0)):
    """Rows of a(C3) with the scale-invariance spread."""
    return [
        {"C3": C3, "a": harnack_constant(C3), "scale_deviation": harnack_scale_deviation(C3)}
        for C3 in C3_values
    ]
