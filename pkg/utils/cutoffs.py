"""
Radial cutoff weights with analytic derivatives up to fourth order.

Both profiles are built from the two-sided exponential blend

    S(t) = e^{-1/t} / (e^{-1/t} + e^{-1/(1-t)}) = expit(1/(1-t) - 1/t),  0 < t < 1,

which is C^infinity, 0 for t <= 0 and 1 for t >= 1.

    psi_R(r) = S(2 r/R - 1)                         (0 inside R/2, 1 outside R)
    phi_R(r) = R^2 theta(r/R),  theta' = 2 rho chi(rho),  chi = 1 - S(rho - 1)

so theta = rho^2 on [0, 1], theta is constant beyond 2 and theta'' <= 2.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np
from scipy import integrate, special

from models.exceptions import DomainError, StructuralError
from utils.spectral import Grid

logger = logging.getLogger('Cutoffs')

# Inside (0, EDGE) the blend is below e^{-999}; evaluating the derivative formulas there overflows
EDGE = 1e-3
WEIGHT_KINDS = ("psi", "phi", "constant")


def smooth_step(t: np.ndarray) -> List[np.ndarray]:
    """S and its first four derivatives at t"""
    t = np.asarray(t, dtype=float)
    out = [np.where(t > 0.5, 1.0, 0.0)] + [np.zeros_like(t) for _ in range(4)]
    inner = (t > EDGE) & (t < 1.0 - EDGE)
    if not np.any(inner):
        return out

    u = t[inner]
    a, b = 1.0 / (1.0 - u), 1.0 / u
    h1 = a ** 2 + b ** 2
    h2 = 2 * (a ** 3 - b ** 3)
    h3 = 6 * (a ** 4 + b ** 4)
    h4 = 24 * (a ** 5 - b ** 5)
    sig = special.expit(a - b)
    s1 = sig * (1 - sig)
    s2 = s1 * (1 - 2 * sig)
    s3 = s1 * (1 - 6 * sig + 6 * sig ** 2)
    s4 = s1 * (1 - 2 * sig) * (1 - 12 * sig + 12 * sig ** 2)

    out[0][inner] = sig
    out[1][inner] = s1 * h1
    out[2][inner] = s2 * h1 ** 2 + s1 * h2
    out[3][inner] = s3 * h1 ** 3 + 3 * s2 * h1 * h2 + s1 * h3
    out[4][inner] = s4 * h1 ** 4 + 6 * s3 * h1 ** 2 * h2 + s2 * (3 * h2 ** 2 + 4 * h1 * h3) + s1 * h4
    return out


def psi_profile(rho: np.ndarray) -> List[np.ndarray]:
    """vartheta(rho) = S(2 rho - 1) and its rho-derivatives"""
    steps = smooth_step(2 * np.asarray(rho, dtype=float) - 1)
    return [2 ** k * steps[k] for k in range(5)]


def plateau(rho: np.ndarray) -> List[np.ndarray]:
    """chi(rho) = 1 - S(rho - 1) and its derivatives"""
    steps = smooth_step(np.asarray(rho, dtype=float) - 1)
    return [1.0 - steps[0]] + [-steps[k] for k in range(1, 5)]


def _theta_band(rho: np.ndarray) -> np.ndarray:
    """1 + int_1^rho 2 t chi(t) dt for rho in [1, 2]"""
    if rho.size == 0:
        return rho
    span = rho - 1.0

    def integrand(u):
        t = 1.0 + u * span
        return 2 * t * plateau(t)[0] * span

    value, _ = integrate.quad_vec(integrand, 0.0, 1.0, epsabs=1e-14, epsrel=1e-13)
    return 1.0 + value


def phi_profile(rho: np.ndarray) -> Tuple[List[np.ndarray], float]:
    """theta(rho) and its first four derivatives, plus the plateau value theta(2)"""
    rho = np.asarray(rho, dtype=float)
    chi = plateau(rho)
    terminal = float(_theta_band(np.array([2.0]))[0])

    theta = np.empty_like(rho)
    core = rho <= 1.0
    band = (rho > 1.0) & (rho < 2.0)
    theta[core] = rho[core] ** 2
    theta[band] = _theta_band(rho[band])
    theta[rho >= 2.0] = terminal

    d1 = 2 * rho * chi[0]
    d2 = 2 * chi[0] + 2 * rho * chi[1]
    d3 = 4 * chi[1] + 2 * rho * chi[2]
    d4 = 6 * chi[2] + 2 * rho * chi[3]
    return [theta, d1, d2, d3, d4], terminal


@dataclass(frozen=True, eq=False)
class Weight:
    """Real radial weight sampled on a grid with derivative fields to order four"""
    grid: Grid
    R: float
    kind: str
    value: np.ndarray
    grad: Tuple[np.ndarray, ...]
    laplacian: np.ndarray
    hessian: Dict[Tuple[int, int], np.ndarray]
    bilaplacian: np.ndarray
    profile_terminal: float
    radial_derivatives: Tuple[np.ndarray, ...] = field(default=())
    derivative_order: int = 4

    def hessian_entry(self, j: int, k: int) -> np.ndarray:
        return self.hessian[(min(j, k), max(j, k))]

    @property
    def gradient_magnitude(self) -> np.ndarray:
        return np.sqrt(sum(g ** 2 for g in self.grad))

    @property
    def hessian_magnitude(self) -> np.ndarray:
        total = np.zeros(self.grid.shape)
        for (j, k), entry in self.hessian.items():
            total += (1 if j == k else 2) * entry ** 2
        return np.sqrt(total)

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "Weight":
        zero = np.zeros(grid.shape)
        return cls(
            grid=grid, R=0.0, kind="constant",
            value=np.full(grid.shape, float(c)),
            grad=tuple(zero for _ in range(grid.dim)),
            laplacian=zero,
            hessian={(j, k): zero for j in range(grid.dim) for k in range(j, grid.dim)},
            bilaplacian=zero,
            profile_terminal=float(c),
            radial_derivatives=(zero, zero, zero, zero),
        )


def _check_radius(grid: Grid, R: float):
    if not R > 1:
        raise DomainError(f"cutoff radius must exceed 1, got R = {R}")
    if not 2 * R < grid.half_length:
        raise DomainError(
            f"cutoff support 2R = {2 * R} wraps around the periodic box (L = {grid.half_length})")


def _assemble(grid: Grid, R: float, kind: str, f: List[np.ndarray], inner: np.ndarray,
              inner_fields: Dict[str, object], terminal: float) -> Weight:
    """Cartesian derivative fields of a radial function outside `inner`.

    f holds the radial profile and its r-derivatives sampled at |x|; inside
    `inner` the supplied exact fields are used instead.
    """
    d = grid.dim
    x = grid.coordinates
    r = np.where(inner, 1.0, grid.radius)
    f0, f1, f2, f3, f4 = f

    slope = f1 / r
    grad = tuple(np.where(inner, inner_fields["grad"][j], x[j] * slope) for j in range(d))

    hessian = {}
    for j in range(d):
        for k in range(j, d):
            outer = x[j] * x[k] / r ** 2 * (f2 - slope)
            if j == k:
                outer = outer + slope
            hessian[(j, k)] = np.where(inner, inner_fields["hessian"][j == k], outer)

    laplacian = np.where(inner, inner_fields["laplacian"], f2 + (d - 1) * slope)
    g1 = f3 + (d - 1) * (f2 / r - f1 / r ** 2)
    g2 = f4 + (d - 1) * (f3 / r - 2 * f2 / r ** 2 + 2 * f1 / r ** 3)
    bilaplacian = np.where(inner, inner_fields["bilaplacian"], g2 + (d - 1) * g1 / r)

    weight = Weight(grid=grid, R=float(R), kind=kind,
                    value=np.where(inner, inner_fields["value"], f0),
                    grad=grad, laplacian=laplacian, hessian=hessian, bilaplacian=bilaplacian,
                    profile_terminal=terminal, radial_derivatives=(f1, f2, f3, f4))
    for array in (weight.value, weight.laplacian, weight.bilaplacian, *weight.grad, *hessian.values()):
        array.setflags(write=False)
    return weight


def make_psi(grid: Grid, R: float) -> Weight:
    """Exterior cutoff psi_R: 0 for r <= R/2, 1 for r >= R"""
    _check_radius(grid, R)
    rho = grid.radius / R
    profile = psi_profile(rho)
    f = [profile[0]] + [profile[k] / R ** k for k in range(1, 5)]
    inner = grid.radius <= R / 2
    zero = np.zeros(grid.shape)
    inner_fields = {"value": zero, "grad": [zero] * grid.dim, "hessian": {True: zero, False: zero},
                    "laplacian": zero, "bilaplacian": zero}
    logger.debug(f"Built psi weight R = {R} on {grid}")
    return _assemble(grid, R, "psi", f, inner, inner_fields, terminal=1.0)


def make_phi(grid: Grid, R: float) -> Weight:
    """Localized |x|^2: phi_R = r^2 for r <= R, constant for r >= 2R"""
    _check_radius(grid, R)
    rho = grid.radius / R
    theta, terminal = phi_profile(rho)
    f = [R ** 2 * theta[0]] + [R ** (2 - k) * theta[k] for k in range(1, 5)]
    inner = grid.radius <= R
    r_squared = sum(x ** 2 for x in grid.coordinates)
    zero = np.zeros(grid.shape)
    inner_fields = {
        "value": r_squared,
        "grad": [2 * x for x in grid.coordinates],
        "hessian": {True: np.full(grid.shape, 2.0), False: zero},
        "laplacian": np.full(grid.shape, 2.0 * grid.dim),
        "bilaplacian": zero,
    }
    logger.debug(f"Built phi weight R = {R}, plateau theta(2) = {terminal:.12g}")
    return _assemble(grid, R, "phi", f, inner, inner_fields, terminal=terminal)


@dataclass
class WeightPropertyReport:
    min_second_derivative_gap: float
    min_radial_slope_gap: float
    min_laplacian_gap: float
    support_violations: Dict[str, float]
    derivative_scales: Dict[int, float]
    hessian_consistency: float
    profile_terminal: float


def derivative_sup_norms(weight: Weight) -> Dict[int, float]:
    """||nabla^k phi||_inf for k = 0..4.

    k <= 2 use the exact gradient length and Hessian Frobenius norm; k = 3, 4
    use the radial envelope sum_j |f^(j)| / r^(k-j), which is exact in d = 1
    and vanishes where phi = r^2.
    """
    envelope = _envelopes(weight)
    return {
        0: float(np.max(np.abs(weight.value))),
        1: float(np.max(weight.gradient_magnitude)),
        2: float(np.max(weight.hessian_magnitude)),
        3: float(np.max(envelope[3])),
        4: float(np.max(envelope[4])),
    }


def _envelopes(weight: Weight) -> Dict[int, np.ndarray]:
    grid = weight.grid
    f1, f2, f3, f4 = weight.radial_derivatives
    derivatives = {1: f1, 2: f2, 3: f3, 4: f4}
    exact_core = grid.radius <= weight.R
    r = np.where(exact_core, 1.0, grid.radius)
    envelopes = {}
    for k in (3, 4):
        if grid.dim == 1:
            env = np.abs(derivatives[k])
        else:
            env = sum(np.abs(derivatives[j]) / r ** (k - j) for j in range(1, k + 1))
        envelopes[k] = np.where(exact_core, 0.0, env)
    return envelopes


def verify_weight_properties(weight: Weight) -> WeightPropertyReport:
    """Pointwise checks of the phi_R construction"""
    if weight.kind != "phi":
        raise StructuralError(f"verify_weight_properties needs a phi weight, got {weight.kind}")
    grid, R = weight.grid, weight.R
    r = grid.radius
    f1, f2 = weight.radial_derivatives[0], weight.radial_derivatives[1]
    positive = r > 0
    slope = np.where(positive, f1 / np.where(positive, r, 1.0), 2.0)

    outside_2R = r >= 2 * R
    envelope = _envelopes(weight)
    band_free = (r < R) | outside_2R

    def masked_max(array, mask):
        return float(np.max(np.abs(array[mask]), initial=0.0))

    violations = {
        "gradient_outside_2R": masked_max(weight.gradient_magnitude, outside_2R),
        "hessian_outside_2R": masked_max(weight.hessian_magnitude, outside_2R),
        "third_outside_band": masked_max(envelope[3], band_free),
        "fourth_outside_band": masked_max(envelope[4], band_free),
    }

    scales = {k: value * R ** (k - 2) for k, value in derivative_sup_norms(weight).items()}

    consistency = 0.0
    x = grid.coordinates
    rr = np.where(positive, r, 1.0)
    for (j, k), entry in weight.hessian.items():
        delta = 1.0 if j == k else 0.0
        expected = (delta / rr - x[j] * x[k] / rr ** 3) * f1 + x[j] * x[k] / rr ** 2 * f2
        consistency = max(consistency, masked_max(entry - expected, positive))

    return WeightPropertyReport(
        min_second_derivative_gap=float(np.min(2.0 - f2)),
        min_radial_slope_gap=float(np.min(2.0 - slope)),
        min_laplacian_gap=float(np.min(2.0 * grid.dim - weight.laplacian)),
        support_violations=violations,
        derivative_scales=scales,
        hessian_consistency=consistency,
        profile_terminal=weight.profile_terminal,
    )
