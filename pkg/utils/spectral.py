"""
Periodic pseudospectral representation of fields on the box [-L, L)^d.

Conventions:
    x_j  = -L + j*h,  h = 2L/n
    xi_k = pi*k/L,    k in [-n/2, n/2) (FFT order)
    c_k  = (1/N) * sum_j u_j exp(-i xi_k . (x_j + L))   ("forward" normalisation)

With this normalisation a constant field c has the single coefficient c at
xi = 0, and Plancherel reads  int |u|^2 dx = (2L)^d * sum |c_k|^2.
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Callable, Iterable, Optional, Tuple

import numpy as np
from scipy import fft as sp_fft
from scipy import signal

from models.exceptions import DomainError, StructuralError, UnsupportedOperationError
from models.schemas import PhysicsParams

logger = logging.getLogger('SpectralCore')

MIN_POINTS = 16
SUPPORTED_DIMS = (1, 2, 3)
# Mass fraction outside |x_j| <= L/2 above which a field is flagged as poorly localized
SUPPORT_LEAK_TOL = 1e-8


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid with n points per axis on [-L, L)^d"""
    dim: int
    points_per_dim: int
    half_length: float

    def __post_init__(self):
        if self.dim not in SUPPORTED_DIMS:
            raise StructuralError(f"Grid dimension must be one of {SUPPORTED_DIMS}, got {self.dim}")
        n = self.points_per_dim
        if n < MIN_POINTS or n & (n - 1):
            raise StructuralError(f"points_per_dim must be a power of two >= {MIN_POINTS}, got {n}")
        if not self.half_length > 0:
            raise DomainError(f"half_length must be positive, got {self.half_length}")

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.points_per_dim,) * self.dim

    @property
    def size(self) -> int:
        return self.points_per_dim ** self.dim

    @property
    def spacing(self) -> float:
        return 2 * self.half_length / self.points_per_dim

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    @property
    def volume(self) -> float:
        return (2 * self.half_length) ** self.dim

    @cached_property
    def axis(self) -> np.ndarray:
        return _readonly(-self.half_length + self.spacing * np.arange(self.points_per_dim))

    @cached_property
    def wavenumber_axis(self) -> np.ndarray:
        n = self.points_per_dim
        return _readonly(sp_fft.fftfreq(n, d=1.0 / n) * np.pi / self.half_length)

    @cached_property
    def coordinates(self) -> Tuple[np.ndarray, ...]:
        mesh = np.meshgrid(*([self.axis] * self.dim), indexing="ij")
        return tuple(_readonly(m) for m in mesh)

    @cached_property
    def radius(self) -> np.ndarray:
        return _readonly(np.sqrt(sum(x ** 2 for x in self.coordinates)))

    @cached_property
    def wavevectors(self) -> Tuple[np.ndarray, ...]:
        mesh = np.meshgrid(*([self.wavenumber_axis] * self.dim), indexing="ij")
        return tuple(_readonly(m) for m in mesh)

    @cached_property
    def xi_squared(self) -> np.ndarray:
        return _readonly(sum(k ** 2 for k in self.wavevectors))

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes where some axis sits at the Nyquist index -n/2"""
        n = self.points_per_dim
        k = sp_fft.fftfreq(n, d=1.0 / n)
        mask = np.zeros(self.shape, dtype=bool)
        for axis in range(self.dim):
            shape = [1] * self.dim
            shape[axis] = n
            mask |= (k == -n // 2).reshape(shape)
        return _readonly(mask)


class Field:
    """Complex state on a Grid.

    Either representation may be supplied; the other one is computed on first
    access and cached. Stored arrays are read-only so operations stay pure.
    """

    def __init__(self, grid: Grid, values: Optional[np.ndarray] = None,
                 spectral: Optional[np.ndarray] = None,
                 accuracy_flags: Iterable[str] = ()):
        if values is None and spectral is None:
            raise StructuralError("Field needs physical values or spectral coefficients")
        self.grid = grid
        self._values = self._coerce(values) if values is not None else None
        self._spectral = self._coerce(spectral) if spectral is not None else None
        self.accuracy_flags = tuple(accuracy_flags)

    def _coerce(self, array) -> np.ndarray:
        array = np.array(array, dtype=np.complex128)
        if array.size != self.grid.size:
            raise StructuralError(
                f"Field has {array.size} entries but the grid holds {self.grid.size}")
        return _readonly(array.reshape(self.grid.shape))

    @classmethod
    def from_function(cls, grid: Grid, func: Callable[..., np.ndarray]) -> "Field":
        """Sample func(x_1, ..., x_d) on the grid"""
        return cls(grid, values=np.broadcast_to(func(*grid.coordinates), grid.shape))

    @classmethod
    def from_spectral(cls, grid: Grid, coefficients: np.ndarray) -> "Field":
        return cls(grid, spectral=coefficients)

    @classmethod
    def zeros(cls, grid: Grid) -> "Field":
        return cls(grid, values=np.zeros(grid.shape, dtype=np.complex128))

    @property
    def values(self) -> np.ndarray:
        if self._values is None:
            self._values = _readonly(sp_fft.ifftn(self._spectral, norm="forward"))
        return self._values

    @property
    def spectral(self) -> np.ndarray:
        if self._spectral is None:
            self._spectral = _readonly(sp_fft.fftn(self._values, norm="forward"))
        return self._spectral

    @property
    def has_spectral(self) -> bool:
        return self._spectral is not None

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values=values)

    def conj(self) -> "Field":
        return Field(self.grid, values=np.conj(self.values))

    def inner(self, other: "Field") -> complex:
        """<u, v> = int conj(u) v dx by grid quadrature"""
        self._check_same_grid(other)
        return complex(np.vdot(self.values, other.values) * self.grid.cell_volume)

    def is_real(self, tol: float = 0.0) -> bool:
        return bool(np.max(np.abs(self.values.imag), initial=0.0) <= tol)

    def _check_same_grid(self, other: "Field"):
        if not isinstance(other, Field) or other.grid != self.grid:
            raise StructuralError("Fields live on different grids")

    def __add__(self, other: "Field") -> "Field":
        self._check_same_grid(other)
        return Field(self.grid, values=self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        self._check_same_grid(other)
        return Field(self.grid, values=self.values - other.values)

    def __mul__(self, scalar) -> "Field":
        if not np.isscalar(scalar):
            return NotImplemented
        return Field(self.grid, values=scalar * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, values=-self.values)

    def __repr__(self):
        return f"Field(grid={self.grid!r}, flags={self.accuracy_flags})"


def transform(field: Field, direction: str) -> Field:
    """Materialise one representation of the field.

    `to_spectral` computes the forward DFT, `to_physical` the inverse; the
    returned Field carries the requested representation eagerly.
    """
    if not isinstance(field, Field) or field.grid is None:
        raise StructuralError("transform expects a Field")
    if direction == "to_spectral":
        return Field(field.grid, spectral=field.spectral, accuracy_flags=field.accuracy_flags)
    if direction == "to_physical":
        return Field(field.grid, values=field.values, accuracy_flags=field.accuracy_flags)
    raise StructuralError(f"Unknown transform direction: {direction}")


@dataclass(frozen=True)
class Multiplier:
    """Fourier multiplier: frac_laplacian(beta) |xi|^(2 beta), resolvent(m) 1/(|xi|^2 + m),
    gradient(axis) i xi_axis"""
    kind: str
    parameter: float

    def __post_init__(self):
        if self.kind == "frac_laplacian":
            if self.parameter < 0:
                raise DomainError(f"frac_laplacian power must be >= 0, got {self.parameter}")
        elif self.kind == "resolvent":
            if not self.parameter > 0:
                raise DomainError(f"resolvent shift m must be positive, got {self.parameter}")
        elif self.kind == "gradient":
            if int(self.parameter) != self.parameter or self.parameter < 0:
                raise DomainError(f"gradient axis must be a non-negative integer, got {self.parameter}")
        else:
            raise StructuralError(f"Unknown multiplier kind: {self.kind}")

    def symbol(self, grid: Grid) -> np.ndarray:
        return _symbol(grid, self.kind, float(self.parameter))


def frac_laplacian(beta: float) -> Multiplier:
    return Multiplier("frac_laplacian", float(beta))


def resolvent(m: float) -> Multiplier:
    return Multiplier("resolvent", float(m))


def gradient_component(axis: int) -> Multiplier:
    """d/dx_j with j = axis + 1: axis is zero-based like numpy, so axis 0 is x_1 and d - 1 is x_d"""
    return Multiplier("gradient", axis)


@lru_cache(maxsize=64)
def _symbol(grid: Grid, kind: str, parameter: float) -> np.ndarray:
    if kind == "frac_laplacian":
        return _readonly(np.power(grid.xi_squared, parameter))
    if kind == "resolvent":
        return _readonly(1.0 / (grid.xi_squared + parameter))
    axis = int(parameter)
    if axis >= grid.dim:
        raise StructuralError(f"gradient axis {axis} out of range for a {grid.dim}-d grid")
    # The Nyquist mode has no signed partner; dropping it keeps derivatives of real fields real
    sym = np.where(grid.nyquist_mask, 0.0, 1j * grid.wavevectors[axis])
    return _readonly(sym)


def apply_multiplier(field: Field, symbol: Multiplier) -> Field:
    return Field.from_spectral(field.grid, field.spectral * symbol.symbol(field.grid))


def gradient(field: Field) -> Tuple[Field, ...]:
    return tuple(apply_multiplier(field, gradient_component(j)) for j in range(field.grid.dim))


def lp_norm(field: Field, p: float) -> float:
    if p < 1:
        raise DomainError(f"L^p norm needs p >= 1, got {p}")
    modulus = np.abs(field.values)
    if math.isinf(p):
        return float(np.max(modulus, initial=0.0))
    return float((np.sum(modulus ** p) * field.grid.cell_volume) ** (1.0 / p))


def hdot_norm(field: Field, nu: float) -> float:
    """Homogeneous Sobolev norm || |xi|^nu u_hat ||_{L^2} via Plancherel"""
    if nu < 0:
        raise DomainError(f"Sobolev index must be >= 0, got {nu}")
    weight = frac_laplacian(nu).symbol(field.grid)
    return float(np.sqrt(field.grid.volume * np.sum(weight * np.abs(field.spectral) ** 2)))


def h_norm(field: Field, nu: float) -> float:
    if nu < 0:
        raise DomainError(f"Sobolev index must be >= 0, got {nu}")
    weight = (1.0 + field.grid.xi_squared) ** nu
    return float(np.sqrt(field.grid.volume * np.sum(weight * np.abs(field.spectral) ** 2)))


def norm(field: Field, kind: str, order: float = 2.0) -> float:
    """Dispatch on kind: 'Lp' (order = p), 'Hdot' or 'H' (order = nu)"""
    if kind == "Lp":
        return lp_norm(field, order)
    if kind == "Hdot":
        return hdot_norm(field, order)
    if kind == "H":
        return h_norm(field, order)
    raise StructuralError(f"Unknown norm kind: {kind}")


def mass(field: Field) -> float:
    return float(np.sum(np.abs(field.values) ** 2) * field.grid.cell_volume)


def spectral_mass(field: Field) -> float:
    """Plancherel side of the mass"""
    return float(field.grid.volume * np.sum(np.abs(field.spectral) ** 2))


def _box_mask(grid: Grid, half_width: float) -> np.ndarray:
    inside = np.ones(grid.shape, dtype=bool)
    for x in grid.coordinates:
        inside &= np.abs(x) <= half_width
    return inside


def periodization_leak(field: Field) -> float:
    """Fraction of mass outside the box |x_j| <= L/2"""
    density = np.abs(field.values) ** 2
    total = float(np.sum(density))
    if total == 0.0:
        return 0.0
    outside = ~_box_mask(field.grid, field.grid.half_length / 2)
    return float(np.sum(density[outside]) / total)


def rescale(field: Field, lam: float, params: PhysicsParams) -> Field:
    """Scaling map u -> lam^(2s/alpha) u(lam x) for dyadic lam = 2^k.

    Outside the box the field is taken to vanish; the result carries the
    `support_overflow` flag when that assumption loses more than
    SUPPORT_LEAK_TOL of the mass.
    """
    if not lam > 0:
        raise UnsupportedOperationError(f"rescale needs a positive dyadic factor, got {lam}")
    exponent = math.log2(lam)
    k = int(round(exponent))
    if abs(exponent - k) > 1e-12:
        raise UnsupportedOperationError(f"rescale only supports lam = 2^k, got {lam}")

    grid = field.grid
    if k == 0:
        return Field(grid, values=field.values, accuracy_flags=field.accuracy_flags)

    n = grid.points_per_dim
    amplitude = lam ** (2 * params.s / params.alpha)
    values = field.values
    if k > 0:
        factor = 2 ** k
        # lam*x_j lands on grid index factor*j - (factor-1)*n/2
        index = factor * np.arange(n) - (factor - 1) * n // 2
        valid = (index >= 0) & (index < n)
        sampled = np.zeros(grid.shape, dtype=np.complex128)
        target = np.ix_(*([np.flatnonzero(valid)] * grid.dim))
        source = np.ix_(*([index[valid]] * grid.dim))
        sampled[target] = values[source]
        # The whole box maps inside [-lam L, lam L); the zero extension is the only assumption
        lost = periodization_leak(field)
    else:
        factor = 2 ** (-k)
        fine = values
        for axis in range(grid.dim):
            fine = signal.resample(fine, n * factor, axis=axis)
        offset = (factor - 1) * n // 2
        window = tuple(slice(offset, offset + n) for _ in range(grid.dim))
        sampled = fine[window]
        lost = _outside_fraction(field, grid.half_length / factor)

    flags = list(field.accuracy_flags)
    if lost > SUPPORT_LEAK_TOL:
        logger.warning(f"rescale by {lam}: {lost:.2e} of the mass falls outside the sampled box")
        flags.append("support_overflow")
    return Field(grid, values=amplitude * sampled, accuracy_flags=flags)


def _outside_fraction(field: Field, half_width: float) -> float:
    density = np.abs(field.values) ** 2
    total = float(np.sum(density))
    if total == 0.0:
        return 0.0
    return float(np.sum(density[~_box_mask(field.grid, half_width)]) / total)
