"""
m-integral representation of (-Delta)^s and the localized virial identities.

    x^s = (sin(pi s)/pi) * int_0^inf m^(s-1) x/(x+m) dm

Auxiliary fields u_m = c_s (-Delta + m)^(-1) u with c_s = sqrt(sin(pi s)/pi)
turn commutators with (-Delta)^s into m-integrals of local expressions.
"""
import logging
import math
import os
from dataclasses import dataclass
from typing import Dict, Iterable, Optional

import numpy as np
from scipy import special

from models.exceptions import DomainError, QuadratureValidationError, StructuralError
from models.schemas import LemmaBound, PhysicsParams, VirialReport
from utils.cutoffs import Weight
from utils.spectral import (Field, apply_multiplier, frac_laplacian, gradient, h_norm,
                            hdot_norm, lp_norm, resolvent)

logger = logging.getLogger('Balakrishnan')

MIN_ORDER = 32
SYMBOL_TOL = 1e-8
SYMBOL_CHECK_POINTS = np.logspace(-2, 2, 50)


def default_order() -> int:
    return int(os.getenv("FNLS_QUADRATURE_ORDER", "256"))


def c_s(s: float) -> float:
    return math.sqrt(math.sin(math.pi * s) / math.pi)


@dataclass(frozen=True, eq=False)
class MQuadrature:
    """Nodes m_k and weights w_k with sum_k w_k f(m_k) ~ int_0^inf f(m) dm"""
    s: float
    nodes: np.ndarray
    weights: np.ndarray
    order: int
    max_symbol_error: float = 0.0
    worst_x: float = 1.0

    @property
    def pairs(self):
        return list(zip(self.nodes.tolist(), self.weights.tolist()))

    def integrate(self, values: np.ndarray) -> float:
        return float(np.dot(self.weights, values))

    def symbol(self, x) -> np.ndarray:
        """Quadrature approximation of x^s"""
        x = np.asarray(x, dtype=float)[..., None]
        integrand = self.nodes ** (self.s - 1) * x / (x + self.nodes)
        return math.sin(math.pi * self.s) / math.pi * np.sum(self.weights * integrand, axis=-1)


def build_quadrature(s: float, order: Optional[int] = None) -> MQuadrature:
    """Gauss-Jacobi rule in t for m = t/(1-t).

    The Jacobi weight t^(s-1) (1-t)^(-s) absorbs the endpoint behaviour of the
    m^(s-1) and m^s integrands, leaving smooth functions of t.
    """
    order = default_order() if order is None else int(order)
    if not 0.5 < s < 1:
        raise DomainError(f"quadrature needs s in (1/2, 1), got {s}")
    if order < MIN_ORDER:
        raise DomainError(f"quadrature order must be >= {MIN_ORDER}, got {order}")

    y, jacobi_weights = special.roots_jacobi(order, -s, s - 1)
    t = (1 + y) / 2
    nodes = t / (1 - t)
    weights = jacobi_weights * t ** (1 - s) * (1 - t) ** (s - 2)

    quad = MQuadrature(s=s, nodes=nodes, weights=weights, order=order)
    exact = SYMBOL_CHECK_POINTS ** s
    errors = np.abs(quad.symbol(SYMBOL_CHECK_POINTS) - exact) / exact
    worst = int(np.argmax(errors))
    max_error, worst_x = float(errors[worst]), float(SYMBOL_CHECK_POINTS[worst])
    if not max_error <= SYMBOL_TOL:
        raise QuadratureValidationError(
            f"m-quadrature (s = {s}, order = {order}) misses x^s by {max_error:.3e} at x = {worst_x:.4g}",
            worst_x=worst_x, max_error=max_error)

    logger.debug(f"Built m-quadrature s = {s}, order = {order}, symbol error {max_error:.2e}")
    for array in (nodes, weights):
        array.setflags(write=False)
    return MQuadrature(s=s, nodes=nodes, weights=weights, order=order,
                       max_symbol_error=max_error, worst_x=worst_x)


def auxiliary_field(field: Field, m: float, s: float) -> Field:
    """u_m = c_s (-Delta + m)^(-1) u"""
    if not m > 0:
        raise DomainError(f"auxiliary field needs m > 0, got {m}")
    return c_s(s) * apply_multiplier(field, resolvent(m))


def _check_quadrature(quad: MQuadrature, params: PhysicsParams):
    if not math.isclose(quad.s, params.s, rel_tol=1e-14):
        raise StructuralError(f"quadrature built for s = {quad.s}, params use s = {params.s}")


def _m_integrals(field: Field, quad: MQuadrature, weight: Optional[Weight],
                 wanted: Iterable[str]) -> Dict[str, complex]:
    """int_0^inf m^s F(u_m) dm for each requested local expression F.

    laplacian     int (Delta phi - mean) |u_m|^2
    transport     int conj(u_m) grad phi . grad u_m
    bilaplacian   int (Delta^2 phi - mean) |u_m|^2
    hessian       sum_jk int d_jk phi conj(d_j u_m) d_k u_m
    gradient_energy  int |grad u_m|^2

    Nodes are reduced in a fixed order so results are reproducible.
    """
    wanted = tuple(wanted)
    grid = field.grid
    dim = grid.dim
    needs_gradient = any(w in wanted for w in ("transport", "hessian", "gradient_energy"))
    symbols = [1j * k for k in grid.wavevectors]
    nyquist = grid.nyquist_mask

    # Zero-mean copies keep the 1/m growth of the u_m zero mode out of the integrands
    centred = {}
    if weight is not None:
        centred["laplacian"] = weight.laplacian - np.mean(weight.laplacian)
        centred["bilaplacian"] = weight.bilaplacian - np.mean(weight.bilaplacian)

    totals = {name: 0j for name in wanted}
    coefficients = field.spectral * c_s(quad.s)
    dx = grid.cell_volume
    for m, w in zip(quad.nodes, quad.weights):
        spectral = coefficients / (grid.xi_squared + m)
        aux = Field.from_spectral(grid, spectral).values
        if needs_gradient:
            aux_grad = [Field.from_spectral(grid, np.where(nyquist, 0.0, sym * spectral)).values
                        for sym in symbols]
        scale = w * m ** quad.s * dx
        density = None
        for name in wanted:
            if name in ("laplacian", "bilaplacian"):
                if density is None:
                    density = np.abs(aux) ** 2
                value = np.sum(centred[name] * density)
            elif name == "transport":
                value = np.sum(np.conj(aux) * sum(weight.grad[j] * aux_grad[j] for j in range(dim)))
            elif name == "hessian":
                value = 0j
                for j in range(dim):
                    for k in range(dim):
                        value += np.sum(weight.hessian_entry(j, k) * np.conj(aux_grad[j]) * aux_grad[k])
            elif name == "gradient_energy":
                value = sum(np.sum(np.abs(g) ** 2) for g in aux_grad)
            else:
                raise StructuralError(f"Unknown m-integral: {name}")
            totals[name] += scale * value
    return totals


def auxiliary_identity_check(field: Field, params: PhysicsParams, quad: MQuadrature):
    """int m^s ||grad u_m||^2 dm against s ||(-Delta)^(s/2) u||^2"""
    _check_quadrature(quad, params)
    lhs = _m_integrals(field, quad, None, ("gradient_energy",))["gradient_energy"].real
    rhs = params.s * hdot_norm(field, params.s) ** 2
    residual = abs(lhs - rhs) / max(rhs, np.finfo(float).tiny)
    if lhs == 0.0 and rhs == 0.0:
        residual = 0.0
    return lhs, rhs, residual


def _check_weight(field: Field, weight: Weight, order: int):
    if weight.grid != field.grid:
        raise StructuralError("weight and field live on different grids")
    if weight.derivative_order < order:
        raise StructuralError(
            f"weight carries derivatives to order {weight.derivative_order}, {order} required")


def _weight_flux(field: Field, weight: Weight) -> complex:
    """int conj(u) grad phi . grad u"""
    grads = gradient(field)
    transport = sum(weight.grad[j] * grads[j].values for j in range(field.grid.dim))
    return complex(np.sum(np.conj(field.values) * transport) * field.grid.cell_volume)


def virial_actions(field: Field, weight: Weight, params: PhysicsParams,
                   quad: MQuadrature) -> VirialReport:
    """V_phi, M_phi and the right sides of both localized virial identities"""
    _check_weight(field, weight, 4)
    _check_quadrature(quad, params)
    alpha = params.alpha
    density = np.abs(field.values) ** 2
    dx = field.grid.cell_volume

    V = float(np.sum(weight.value * density) * dx)
    M = 2 * _weight_flux(field, weight).imag

    ints = _m_integrals(field, quad, weight, ("laplacian", "transport", "bilaplacian", "hessian"))
    dV = -1j * ints["laplacian"] - 2j * ints["transport"]

    bilaplacian_term = -ints["bilaplacian"].real
    hessian_term = 4 * ints["hessian"].real
    nonlinear_term = -(2 * alpha / (alpha + 2)) * float(
        np.sum(weight.laplacian * density ** ((alpha + 2) / 2)) * dx)
    breakdown = {"bilaplacian": bilaplacian_term, "hessian": hessian_term,
                 "nonlinear": nonlinear_term}
    dM = bilaplacian_term + hessian_term + nonlinear_term

    if abs(dV.imag) > 1e-10 * max(abs(dV.real), 1.0):
        logger.warning(f"dV/dt assembled with imaginary part {dV.imag:.3e}")
    return VirialReport(V_value=V, M_value=M, dV_dt_rhs=float(dV.real), dM_dt_rhs=dM,
                        term_breakdown=breakdown, dV_dt_imag=float(dV.imag))


def commutator_rate(field: Field, weight: Weight, params: PhysicsParams) -> float:
    """dV_phi/dt evaluated directly as 2 Im int phi conj(u) (-Delta)^s u"""
    _check_weight(field, weight, 0)
    dispersed = apply_multiplier(field, frac_laplacian(params.s)).values
    integral = np.sum(weight.value * np.conj(field.values) * dispersed) * field.grid.cell_volume
    return float(2 * integral.imag)


def flow_rates(field: Field, weight: Weight, params: PhysicsParams):
    """(dV_phi/dt, dM_phi/dt) from u_t = -i((-Delta)^s u - |u|^alpha u)"""
    _check_weight(field, weight, 1)
    u = field.values
    dispersed = apply_multiplier(field, frac_laplacian(params.s)).values
    u_t = Field(field.grid, values=-1j * (dispersed - np.abs(u) ** params.alpha * u))
    dx = field.grid.cell_volume

    dV = 2 * float(np.sum(weight.value * np.conj(u) * u_t.values).real) * dx
    grads, grads_t = gradient(field), gradient(u_t)
    flux_t = sum(weight.grad[j] * grads[j].values for j in range(field.grid.dim))
    flux = sum(weight.grad[j] * grads_t[j].values for j in range(field.grid.dim))
    dM = 2 * float(np.sum(np.conj(u_t.values) * flux_t + np.conj(u) * flux).imag) * dx
    return dV, dM


def _bound(name: str, lhs: float, rhs: float) -> LemmaBound:
    if lhs == 0.0:
        ratio = 0.0
    elif rhs == 0.0:
        ratio = math.inf
    else:
        ratio = lhs / rhs
    return LemmaBound(name=name, lhs=lhs, rhs=rhs, ratio=ratio)


def lemma_bound_report(field: Field, weight: Weight, params: PhysicsParams,
                       quad: MQuadrature) -> Dict[str, LemmaBound]:
    """Left sides of the commutator estimates next to their norm products.

    The constants in these estimates are not fixed, so only the empirical ratio
    lhs / rhs is reported.
    """
    _check_weight(field, weight, 4)
    _check_quadrature(quad, params)
    s = params.s
    ints = _m_integrals(field, quad, weight, ("laplacian", "transport", "bilaplacian"))

    grad_sup = float(np.max(weight.gradient_magnitude))
    lap_sup = float(np.max(np.abs(weight.laplacian)))
    bilap_sup = float(np.max(np.abs(weight.bilaplacian)))
    w1_sup = grad_sup + float(np.max(weight.hessian_magnitude))

    mass_norm = lp_norm(field, 2.0)
    half = hdot_norm(field, 0.5)
    hs_hom = hdot_norm(field, s)
    dV = (-1j * ints["laplacian"] - 2j * ints["transport"]).real

    bounds = [
        _bound("weight_flux", abs(_weight_flux(field, weight)),
               (grad_sup + lap_sup) * (half ** 2 + mass_norm * half)),
        _bound("laplacian_commutator", abs(ints["laplacian"].real),
               lap_sup ** (2 * s - 1) * grad_sup ** (2 - 2 * s) * mass_norm ** 2),
        _bound("transport_commutator", abs(ints["transport"]), w1_sup * h_norm(field, 0.5) ** 2),
        _bound("bilaplacian_commutator", abs(ints["bilaplacian"].real),
               bilap_sup ** s * lap_sup ** (1 - s) * mass_norm ** 2),
        _bound("virial_rate", abs(dV), w1_sup * h_norm(field, s) ** 2),
        _bound("interpolation", half ** 2,
               hs_hom ** (1 / s) * mass_norm ** (2 - 1 / s)),
    ]
    return {b.name: b for b in bounds}
