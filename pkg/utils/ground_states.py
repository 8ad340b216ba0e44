"""
Ground states and the sharp constants built from them.

Q solves (-Delta)^s Q + Q - |Q|^alpha Q = 0 (Petviashvili iteration);
W solves (-Delta)^s W = |W|^(s*-2) W and is taken from the explicit
power-law family kappa (1 + |x|^2)^(-(d-2s)/2).
"""
import itertools
import logging
import math
import os
from typing import Dict, Optional

import numpy as np
from scipy import fft as sp_fft
from scipy import special

from models.exceptions import ConvergenceError, DomainError
from models.schemas import Criticality, GroundStateSolution, PhysicsParams, ThresholdData
from utils.invariants import conserved_report
from utils.spectral import Field, Grid, apply_multiplier, frac_laplacian, hdot_norm, lp_norm

# Polynomial tails of W make periodization the dominant error below this box size
MIN_W_HALF_LENGTH = 40.0
MIN_TOLERANCE = 1e-12
POSITIVITY_TOL = 1e-12


def profile_norms(field: Field, params: PhysicsParams) -> Dict[str, float]:
    """X = ||(-Delta)^(s/2) u||^2, Y = ||u||_{alpha+2}^{alpha+2}, M = ||u||^2 plus E and K"""
    report = conserved_report(field, params)
    return {
        "mass": report.mass,
        "hs_norm": report.hs_norm,
        "X": report.hs_norm ** 2,
        "Y": report.l_alpha2_norm ** (params.alpha + 2),
        "energy": report.energy,
        "K": report.K,
    }


def pohozaev_residuals(norms: Dict[str, float], params: PhysicsParams):
    d, s, alpha = params.dim, params.s, params.alpha
    X = norms["X"]
    first = abs(X - d * alpha / (2 * s * (alpha + 2)) * norms["Y"]) / X
    second = abs(X - d * alpha / (4 * s - (d - 2 * s) * alpha) * norms["mass"]) / X
    return first, second


def _symmetrize(values: np.ndarray) -> np.ndarray:
    """Average over coordinate reflections and axis permutations"""
    for axis in range(values.ndim):
        mirrored = np.roll(np.flip(values, axis=axis), 1, axis=axis)
        values = 0.5 * (values + mirrored)
    if values.ndim > 1:
        perms = list(itertools.permutations(range(values.ndim)))
        values = sum(np.transpose(values, p) for p in perms) / len(perms)
    return values


def _equation_residual(field: Field, params: PhysicsParams, power: Optional[float] = None,
                       mass: bool = True) -> float:
    """||(-Delta)^s u + u - |u|^power u|| / ||u||; W drops the mass term and uses power s* - 2"""
    u = field.values
    power = params.alpha if power is None else power
    dispersed = apply_multiplier(field, frac_laplacian(params.s)).values
    residual = dispersed - np.abs(u) ** power * u
    if mass:
        residual = residual + u
    return float(np.linalg.norm(residual) / np.linalg.norm(u))


class GroundStateSolver:
    """Solves for Q and W and derives the threshold data of each regime"""

    def __init__(self):
        self.logger = logging.getLogger('GroundStateSolver')

    def default_tolerance(self) -> float:
        return float(os.getenv("FNLS_GS_TOL", "1e-11"))

    def default_max_iter(self) -> int:
        return int(os.getenv("FNLS_GS_MAX_ITER", "5000"))

    def initial_guess(self, grid: Grid) -> Field:
        """Gaussian of unit mass"""
        values = np.exp(-0.5 * grid.radius ** 2)
        values = values / math.sqrt(np.sum(values ** 2) * grid.cell_volume)
        return Field(grid, values=values)

    def solve_Q(self, grid: Grid, params: PhysicsParams, tol: Optional[float] = None,
                max_iter: Optional[int] = None, initial: Optional[Field] = None) -> GroundStateSolution:
        """Petviashvili iteration

            Q <- M^gamma F^-1[ F(|Q|^alpha Q) / (|xi|^(2s) + 1) ],  gamma = (alpha+1)/alpha
            M  = <((-Delta)^s + 1) Q, Q> / <|Q|^alpha Q, Q>

        until the relative L^2 update falls below tol.
        """
        tol = self.default_tolerance() if tol is None else tol
        max_iter = self.default_max_iter() if max_iter is None else max_iter
        if params.criticality in (Criticality.ENERGY_CRITICAL, Criticality.ENERGY_SUPERCRITICAL):
            raise DomainError(f"solve_Q has no ground state for {params.criticality.value} parameters")
        if grid.dim != params.dim:
            raise DomainError(f"grid is {grid.dim}-d but params describe d = {params.dim}")
        if tol < MIN_TOLERANCE:
            raise DomainError(f"tolerance must be >= {MIN_TOLERANCE}, got {tol}")

        alpha = params.alpha
        exponent = (alpha + 1) / alpha
        linear = frac_laplacian(params.s).symbol(grid) + 1.0
        current = (initial if initial is not None else self.initial_guess(grid)).values.real
        if not np.any(current):
            raise ConvergenceError("Petviashvili iteration started from the zero field")

        trace = []
        converged = False
        iterations = 0
        for iterations in range(1, max_iter + 1):
            spectral = sp_fft.fftn(current, norm="forward")
            nonlinear = sp_fft.fftn(np.abs(current) ** alpha * current, norm="forward")
            numerator = float(np.sum(linear * np.abs(spectral) ** 2))
            denominator = float(np.sum(np.conj(spectral) * nonlinear).real)
            if not denominator > 0 or not np.isfinite(numerator):
                raise ConvergenceError(
                    f"degenerate Petviashvili iterate at step {iterations} "
                    f"(<N(Q), Q> = {denominator:.3e})", residual_trace=trace)
            factor = (numerator / denominator) ** exponent
            updated = factor * sp_fft.ifftn(nonlinear / linear, norm="forward").real
            updated = _symmetrize(updated)

            change = float(np.linalg.norm(updated - current) / np.linalg.norm(updated))
            trace.append(change)
            current = updated
            if change < tol:
                converged = True
                break

        if not converged:
            self.logger.error(f"Petviashvili stalled at update {trace[-1]:.3e} after {max_iter} steps")
            raise ConvergenceError(
                f"ground state did not converge within {max_iter} iterations "
                f"(last update {trace[-1]:.3e})", residual_trace=trace)

        if current.min() < -POSITIVITY_TOL * current.max():
            raise ConvergenceError(
                f"converged profile is not positive (min {current.min():.3e})", residual_trace=trace)

        profile = Field(grid, values=current)
        norms = profile_norms(profile, params)
        residuals = pohozaev_residuals(norms, params)
        diagnostics = {"equation_residual": _equation_residual(profile, params)}
        self.logger.info(
            f"Q converged in {iterations} iterations for {params.to_dict()} "
            f"(Pohozaev {residuals[0]:.2e}, {residuals[1]:.2e})")
        return GroundStateSolution(profile=profile, params=params, norms=norms,
                                   pohozaev_residuals=residuals, iterations=iterations,
                                   converged=True, kind="Q", residual_trace=trace,
                                   diagnostics=diagnostics)

    def make_W(self, grid: Grid, params: PhysicsParams) -> GroundStateSolution:
        """kappa (1 + |x|^2)^(-(d-2s)/2) with kappa fitted so that
        ||(-Delta)^(s/2) W||^2 = ||W||_{s*}^{s*} on this grid"""
        if params.criticality != Criticality.ENERGY_CRITICAL:
            raise DomainError(f"make_W needs energy-critical parameters, got {params.criticality.value}")
        if params.dim < 2:
            raise DomainError("make_W needs d >= 2")
        if grid.dim != params.dim:
            raise DomainError(f"grid is {grid.dim}-d but params describe d = {params.dim}")
        if grid.half_length < MIN_W_HALF_LENGTH:
            raise DomainError(
                f"energy-critical runs need half_length >= {MIN_W_HALF_LENGTH}, got {grid.half_length}")

        d, s = params.dim, params.s
        s_star = params.critical_sobolev_exponent
        unit = Field(grid, values=(1.0 + grid.radius ** 2) ** (-(d - 2 * s) / 2))
        a = hdot_norm(unit, s) ** 2
        b = lp_norm(unit, s_star) ** s_star
        kappa = (a / b) ** (1 / (s_star - 2))
        analytic = (2 ** (2 * s) * special.gamma((d + 2 * s) / 2)
                    / special.gamma((d - 2 * s) / 2)) ** (1 / (s_star - 2))

        profile = kappa * unit
        norms = profile_norms(profile, params)
        identity = abs(norms["X"] - norms["Y"]) / norms["X"]
        diagnostics = {
            "kappa": kappa,
            "kappa_analytic": float(analytic),
            "kappa_relative_gap": abs(kappa - analytic) / analytic,
            "equation_residual": _equation_residual(profile, params, power=s_star - 2, mass=False),
        }
        self.logger.info(f"W fitted with kappa = {kappa:.8g} (closed form {analytic:.8g})")
        return GroundStateSolution(profile=profile, params=params, norms=norms,
                                   pohozaev_residuals=(identity, identity), iterations=0,
                                   converged=True, kind="W", diagnostics=diagnostics)

    def intercritical_thresholds(self, Q: GroundStateSolution) -> ThresholdData:
        params = Q.params
        if not Q.converged or Q.kind != "Q":
            raise DomainError("intercritical_thresholds needs a converged Q")
        if params.criticality != Criticality.INTERCRITICAL:
            raise DomainError(f"threshold data are defined for intercritical powers, got {params.criticality.value}")

        d, s, alpha, sigma = params.dim, params.s, params.alpha, params.sigma
        X, M, Y = Q.norms["X"], Q.norms["mass"], Q.norms["Y"]
        c_gn = Y / (M ** ((4 * s - (d - 2 * s) * alpha) / (4 * s)) * X ** (d * alpha / (4 * s)))
        x0 = math.sqrt(X) * M ** (sigma / 2)
        c_gn_relation = 2 * s * (alpha + 2) / (d * alpha) * x0 ** (-(d * alpha - 4 * s) / (2 * s))
        x0_formula = (2 * s * (alpha + 2) / (d * alpha * c_gn)) ** (2 * s / (d * alpha - 4 * s))
        threshold = Q.norms["energy"] * M ** sigma

        data = ThresholdData(
            regime=Criticality.INTERCRITICAL, params=params, sharp_constant=c_gn,
            critical_point=x0, threshold_energy=threshold,
            delta_formula_inputs={"X_Q": X, "M_Q": M, "E_Q": Q.norms["energy"], "sigma": sigma})
        data.consistency = {
            "sharp_constant_gap": abs(c_gn - c_gn_relation) / c_gn,
            "critical_point_gap": abs(x0 - x0_formula) / x0,
            "threshold_gap": abs(threshold_functions(x0, data) - threshold) / threshold,
        }
        self.logger.debug(f"Intercritical thresholds: C_GN = {c_gn:.10g}, x0 = {x0:.10g}")
        return data

    def energy_critical_thresholds(self, W: GroundStateSolution) -> ThresholdData:
        params = W.params
        if W.kind != "W" or params.criticality != Criticality.ENERGY_CRITICAL:
            raise DomainError("energy_critical_thresholds needs the energy-critical profile W")
        d, s = params.dim, params.s
        s_star = params.critical_sobolev_exponent
        X, Y, E = W.norms["X"], W.norms["Y"], W.norms["energy"]

        c_se = X ** (-s / d)
        c_se_lebesgue = (Y ** (1 / s_star)) ** (-s_star * s / d)
        c_se_energy = (s / (d * E)) ** (s / d)
        y0 = c_se ** (-s_star / (s_star - 2))

        data = ThresholdData(
            regime=Criticality.ENERGY_CRITICAL, params=params, sharp_constant=c_se,
            critical_point=y0, threshold_energy=E,
            delta_formula_inputs={"X_W": X, "E_W": E})
        data.consistency = {
            "sharp_constant_lebesgue_gap": abs(c_se - c_se_lebesgue) / c_se,
            "sharp_constant_energy_gap": abs(c_se - c_se_energy) / c_se,
            "critical_point_gap": abs(y0 - math.sqrt(X)) / y0,
            "threshold_gap": abs(threshold_functions(y0, data) - E) / E,
            "energy_relation_gap": abs(E - s / d * c_se ** (-d / s)) / E,
        }
        return data


def threshold_functions(value: float, data: ThresholdData) -> float:
    """f(x) = x^2/2 - C_GN x^(d alpha/2s)/(alpha+2) or g(y) = y^2/2 - C_SE^s* y^s*/s*"""
    if value < 0:
        raise DomainError(f"threshold functions take a nonnegative argument, got {value}")
    params = data.params
    if data.regime == Criticality.INTERCRITICAL:
        power = params.dim * params.alpha / (2 * params.s)
        return value ** 2 / 2 - data.sharp_constant * value ** power / (params.alpha + 2)
    s_star = params.critical_sobolev_exponent
    return value ** 2 / 2 - data.sharp_constant ** s_star * value ** s_star / s_star


def gagliardo_nirenberg_quotient(field: Field, params: PhysicsParams) -> float:
    """||u||_{alpha+2}^{alpha+2} / (||u||^a ||(-Delta)^(s/2) u||^b), maximised by Q"""
    d, s, alpha = params.dim, params.s, params.alpha
    norms = profile_norms(field, params)
    if norms["mass"] == 0 or norms["X"] == 0:
        raise DomainError("Gagliardo-Nirenberg quotient is undefined for this field")
    return norms["Y"] / (norms["mass"] ** ((4 * s - (d - 2 * s) * alpha) / (4 * s))
                         * norms["X"] ** (d * alpha / (4 * s)))


def sobolev_quotient(field: Field, params: PhysicsParams) -> float:
    """||u||_{s*} / ||(-Delta)^(s/2) u||, maximised by W"""
    s_star = params.critical_sobolev_exponent
    if s_star is None:
        raise DomainError("the Sobolev quotient needs d > 2s")
    seminorm = hdot_norm(field, params.s)
    if seminorm == 0:
        raise DomainError("Sobolev quotient is undefined for constant fields")
    return lp_norm(field, s_star) / seminorm


ground_state_solver = GroundStateSolver()
