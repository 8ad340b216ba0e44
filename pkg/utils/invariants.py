"""Conserved functionals, the virial quantity K, criticality exponents and the
exponent-pair arithmetic of the local theory."""
import logging
import math
from typing import Optional, Tuple

import numpy as np

from models.exceptions import AdmissibilityError, DomainError, StructuralError
from models.schemas import (AdmissiblePair, ConservedReport, Criticality, CriticalityReport,
                            LocalTheoryExponents, NonradialLocalTheory, PhysicsParams)
from utils.spectral import Field, hdot_norm, lp_norm

logger = logging.getLogger('Invariants')

ADMISSIBLE_KINDS = ("schrodinger", "radial", "fractional")
LWP_MODES = ("radial_subcritical", "radial_critical")
EQUALITY_TOL = 1e-12


def conserved_report(field: Field, params: PhysicsParams) -> ConservedReport:
    """Mass, energy, K and the two norms entering them"""
    if field.grid.dim != params.dim:
        raise StructuralError(f"Field is {field.grid.dim}-d but params describe d = {params.dim}")
    d, s, alpha = params.dim, params.s, params.alpha
    mass = lp_norm(field, 2.0) ** 2
    hs = hdot_norm(field, s)
    nonlinear = lp_norm(field, alpha + 2)
    nonlinear_power = nonlinear ** (alpha + 2)
    energy = 0.5 * hs ** 2 - nonlinear_power / (alpha + 2)
    K = 0.5 * s * hs ** 2 - d * alpha / (4 * (alpha + 2)) * nonlinear_power
    return ConservedReport(mass=mass, energy=energy, K=K, hs_norm=hs, l_alpha2_norm=nonlinear)


def k_identity_residual(report: ConservedReport, params: PhysicsParams) -> float:
    """Relative defect of K = s E - (d alpha - 4s)/(4(alpha+2)) ||u||^(alpha+2)"""
    d, s, alpha = params.dim, params.s, params.alpha
    nonlinear_power = report.l_alpha2_norm ** (alpha + 2)
    expected = s * report.energy - (d * alpha - 4 * s) / (4 * (alpha + 2)) * nonlinear_power
    scale = max(abs(report.K), s * report.hs_norm ** 2, nonlinear_power, np.finfo(float).tiny)
    return abs(report.K - expected) / scale


def virial_rate(report: ConservedReport, params: PhysicsParams) -> Tuple[float, float]:
    """Right side of the global virial identity, as 16K and as
    4 d alpha E - 2 (d alpha - 4s) ||(-Delta)^(s/2) u||^2"""
    d, s, alpha = params.dim, params.s, params.alpha
    direct = 16 * report.K
    alternate = 4 * d * alpha * report.energy - 2 * (d * alpha - 4 * s) * report.hs_norm ** 2
    return direct, alternate


def energy_critical_k(report: ConservedReport, params: PhysicsParams) -> float:
    """K = ds/(d-2s) E - s^2/(d-2s) ||(-Delta)^(s/2) u||^2, valid at the energy-critical power"""
    if params.criticality != Criticality.ENERGY_CRITICAL:
        raise DomainError("energy_critical_k needs energy-critical parameters")
    d, s = params.dim, params.s
    return d * s / (d - 2 * s) * report.energy - s ** 2 / (d - 2 * s) * report.hs_norm ** 2


def classify_criticality(params: PhysicsParams) -> CriticalityReport:
    return CriticalityReport(
        criticality=params.criticality,
        s_c=params.s_c,
        sigma=params.sigma,
        alpha_star=params.alpha_star,
        alpha_star_upper=params.alpha_star_upper,
    )


def gamma_pq(d: int, s: float, p: float, q: float) -> float:
    return d / 2 - d / q - 2 * s / p


def _inverse(x: float) -> float:
    return 0.0 if math.isinf(x) else 1.0 / x


def admissible_pair(d: int, s: float, p: float, q: float, kind: str) -> AdmissiblePair:
    """Check (p, q) against the admissibility condition of `kind`.

    Raises AdmissibilityError naming the failed condition.
    """
    if kind not in ADMISSIBLE_KINDS:
        raise StructuralError(f"Unknown admissibility kind: {kind}")
    if not (2 <= p <= math.inf):
        raise AdmissibilityError(f"p = {p} outside [2, inf]", condition="p_range")
    if not (2 <= q < math.inf):
        raise AdmissibilityError(f"q = {q} outside [2, inf)", condition="q_range")

    inv_p, inv_q = _inverse(p), 1.0 / q
    if kind == "schrodinger":
        if 2 * inv_p + d * inv_q > d / 2 + EQUALITY_TOL:
            raise AdmissibilityError(
                f"2/p + d/q = {2 * inv_p + d * inv_q} exceeds d/2 = {d / 2}",
                condition="schrodinger_inequality")
        # (p, q, d) = (2, inf, 2) is the forbidden endpoint; q < inf already excludes it
    else:
        if kind == "radial":
            lhs, rhs = 2 * inv_p + (2 * d - 1) * inv_q, (2 * d - 1) / 2
            if lhs > rhs + EQUALITY_TOL:
                raise AdmissibilityError(
                    f"2/p + (2d-1)/q = {lhs} exceeds (2d-1)/2 = {rhs}",
                    condition="radial_inequality")
        else:
            lhs = 2 * s * inv_p + d * inv_q
            if abs(lhs - d / 2) > EQUALITY_TOL:
                raise AdmissibilityError(
                    f"2s/p + d/q = {lhs} differs from d/2 = {d / 2}",
                    condition="fractional_equality")
        if d > 1.5 and math.isclose(p, 2.0) and math.isclose(q, (4 * d - 2) / (2 * d - 3)):
            raise AdmissibilityError("endpoint (2, (4d-2)/(2d-3)) is excluded",
                                     condition="radial_endpoint")

    return AdmissiblePair(p=p, q=q, gamma_pq=gamma_pq(d, s, p, q), kind=kind)


def lwp_exponents(params: PhysicsParams, gamma: Optional[float], mode: str) -> LocalTheoryExponents:
    """Exponent pair used by the radial local theory.

    Hypotheses beyond the stated preconditions (d >= 2, s >= d/(2d-1) and the
    regularity condition) are reported as notes rather than enforced.
    """
    d, s, alpha = params.dim, params.s, params.alpha
    notes = []
    if d < 2:
        notes.append("radial Strichartz estimates assume d >= 2")
    if s < d / (2 * d - 1):
        notes.append(f"radial estimates without loss assume s >= d/(2d-1) = {d / (2 * d - 1):.6g}")

    if mode == "radial_subcritical":
        if gamma is None:
            raise DomainError("radial_subcritical needs a regularity index gamma")
        if not 0 <= gamma < d / 2:
            raise DomainError(f"hypothesis 0 <= gamma < d/2 violated (gamma = {gamma}, d/2 = {d / 2})")
        if not gamma > params.s_c:
            raise DomainError(f"hypothesis gamma > s_c violated (gamma = {gamma}, s_c = {params.s_c})")
        p = 4 * s * (alpha + 2) / (alpha * (d - 2 * gamma))
        q = d * (alpha + 2) / (d + alpha * gamma)
        contraction = 1 - alpha * (d - 2 * gamma) / (4 * s)
        regularity_index = gamma
    elif mode == "radial_critical":
        if params.s_c < 0:
            raise DomainError(f"hypothesis s_c >= 0 violated (s_c = {params.s_c})")
        p = alpha + 2
        q = 2 * d * (alpha + 2) / (d * (alpha + 2) - 4 * s)
        contraction = None
        regularity_index = params.s_c
    else:
        raise StructuralError(f"Unknown local theory mode: {mode}")

    if not _is_even_integer(alpha) and math.ceil(regularity_index) > alpha + 1:
        notes.append(f"regularity condition ceil(gamma) <= alpha + 1 fails for gamma = {regularity_index}")

    pair = admissible_pair(d, s, p, q, "fractional")
    logger.debug(f"lwp_exponents({mode}) -> p = {pair.p}, q = {pair.q}")
    return LocalTheoryExponents(p=pair.p, q=pair.q, mode=mode, gamma=gamma,
                                contraction_exponent=contraction, notes=tuple(notes))


def nonradial_local_theory(params: PhysicsParams, p: Optional[float] = None) -> NonradialLocalTheory:
    """Regularity threshold and critical pair of the local theory without symmetry.

    In d = 2 the critical pair is a one-parameter family; pass 2 < p < alpha to
    select a member.
    """
    d, s, alpha = params.dim, params.s, params.alpha
    notes = []
    if d == 1:
        threshold = 0.5 - 2 * s / max(alpha, 4.0)
        floor = max(alpha, 4.0)
    else:
        threshold = d / 2 - 2 * s / max(alpha, 2.0)
        floor = max(alpha, 2.0)

    critical_pair = None
    minimal_alpha = 4.0 if d == 1 else 2.0
    if params.s_c < 0 or alpha <= minimal_alpha:
        notes.append(f"critical theory needs s_c >= 0 and alpha > {minimal_alpha}")
    elif d == 1:
        critical_pair = (4.0, math.inf)
    elif d == 2:
        if p is None:
            notes.append("d = 2 critical pair needs a choice 2 < p < alpha")
        elif not 2 < p < alpha:
            raise DomainError(f"d = 2 critical pair needs 2 < p < alpha, got p = {p}")
        else:
            critical_pair = (p, 2 * p / (p - 2))
    else:
        critical_pair = (2.0, 2 * d / (d - 2))

    return NonradialLocalTheory(gamma_threshold=threshold, time_exponent_floor=floor,
                                critical_pair=critical_pair, notes=tuple(notes))


def _is_even_integer(x: float) -> bool:
    return float(x).is_integer() and int(x) % 2 == 0


def regularity_note(params: PhysicsParams, gamma: Optional[float] = None) -> str:
    """ceil(gamma) <= alpha + 1 at gamma = max(s, s_c) unless given; void for even integer alpha"""
    gamma = max(params.s, params.s_c) if gamma is None else gamma
    if _is_even_integer(params.alpha):
        return f"alpha = {params.alpha:g} is an even integer; no regularity condition"
    ceiling = math.ceil(gamma)
    relation = "<=" if ceiling <= params.alpha + 1 else ">"
    return f"ceil(gamma) = {ceiling} {relation} alpha + 1 = {params.alpha + 1:g} at gamma = {gamma:.6g}"
