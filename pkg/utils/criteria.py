"""
Blow-up criteria for initial data and the lower bounds delta with
sup_t K(u(t)) <= -delta.

Intercritical comparisons use the scale-invariant products
E(u) M(u)^sigma and ||(-Delta)^(s/2) u|| M(u)^(sigma/2); energy-critical ones
compare E and the gradient norm with those of W directly. All inequalities
are strict.
"""
import logging
from typing import Optional, Sequence

from models.exceptions import DomainError, StructuralError
from models.schemas import (CriteriaVerdict, Criticality, DeltaBound, PhysicsParams,
                            ThresholdData, TrajectoryRecord)
from utils.dynamics import monitor_k_bound
from utils.invariants import conserved_report, regularity_note
from utils.spectral import Field

logger = logging.getLogger('Criteria')

CHECK_NAMES = ("E_negative", "intercritical_energy_product", "intercritical_gradient_product",
               "energy_critical_energy", "energy_critical_gradient")


def _check_thresholds(params: PhysicsParams, thresholds: Optional[ThresholdData]):
    if thresholds is None:
        return
    if thresholds.params != params:
        raise StructuralError(
            f"threshold data computed for {thresholds.params.to_dict()}, data use {params.to_dict()}")
    if thresholds.regime != params.criticality:
        raise StructuralError(
            f"threshold data are {thresholds.regime.value}, parameters are {params.criticality.value}")


def _negative_energy_branch(energy: float, params: PhysicsParams) -> bool:
    return energy < 0 and (params.alpha >= params.alpha_star or params.is_mass_critical)


def classify(u0: Field, params: PhysicsParams,
             thresholds: Optional[ThresholdData] = None) -> CriteriaVerdict:
    _check_thresholds(params, thresholds)
    report = conserved_report(u0, params)
    energy, mass, hs = report.energy, report.mass, report.hs_norm
    regime = params.criticality
    checks = {name: False for name in CHECK_NAMES}
    checks["E_negative"] = energy < 0
    provenance = {"energy": energy, "mass": mass, "hs_norm": hs, "K": report.K,
                  "alpha": params.alpha, "alpha_star": params.alpha_star}

    if regime == Criticality.INTERCRITICAL and thresholds is not None:
        sigma = params.sigma
        energy_product = energy * mass ** sigma
        gradient_product = hs * mass ** (sigma / 2)
        checks["intercritical_energy_product"] = energy_product < thresholds.threshold_energy
        checks["intercritical_gradient_product"] = gradient_product > thresholds.critical_point
        provenance.update({"energy_product": energy_product, "gradient_product": gradient_product,
                           "threshold_energy": thresholds.threshold_energy,
                           "critical_point": thresholds.critical_point})
    elif regime == Criticality.ENERGY_CRITICAL and thresholds is not None:
        checks["energy_critical_energy"] = energy < thresholds.threshold_energy
        checks["energy_critical_gradient"] = hs > thresholds.critical_point
        provenance.update({"threshold_energy": thresholds.threshold_energy,
                           "critical_point": thresholds.critical_point})

    met = (_negative_energy_branch(energy, params)
           or (checks["intercritical_energy_product"] and checks["intercritical_gradient_product"])
           or (checks["energy_critical_energy"] and checks["energy_critical_gradient"]))

    delta = None
    metadata = {}
    if met:
        bound = delta_bound(u0, params, thresholds)
        delta = bound.delta
        provenance["rho_max"] = bound.rho_max
        metadata["delta_branch"] = bound.branch

    metadata.update({
        "regularity": regularity_note(params),
        "alpha_below_4s": str(params.alpha < 4 * params.s),
        "scope": "criterion checked on the initial data; the hypothesis concerns the whole lifespan",
    })
    verdict = CriteriaVerdict(criticality=regime, checks=checks, delta=delta,
                              verdict="criterion_met" if met else "not_covered",
                              provenance=provenance, metadata=metadata)
    logger.info(f"classify: {verdict.verdict} ({regime.value}, E = {energy:.6g})")
    return verdict


def delta_bound(u0: Field, params: PhysicsParams, thresholds: Optional[ThresholdData] = None,
                rho: Optional[float] = None) -> DeltaBound:
    """delta for the branch u0 falls in, with the largest admissible rho"""
    _check_thresholds(params, thresholds)
    report = conserved_report(u0, params)
    d, s, alpha = params.dim, params.s, params.alpha
    energy, mass = report.energy, report.mass

    if _negative_energy_branch(energy, params):
        return DeltaBound(delta=-s * energy, rho=None, rho_max=None, branch="negative_energy")

    regime = params.criticality
    if thresholds is None:
        raise DomainError("non-negative energy needs threshold data for a delta bound")

    if regime == Criticality.INTERCRITICAL:
        sigma = params.sigma
        gradient_product = report.hs_norm * mass ** (sigma / 2)
        if not gradient_product > thresholds.critical_point:
            raise DomainError("gradient product does not exceed the ground-state value")
        rho_max = 1 - energy * mass ** sigma / thresholds.threshold_energy
        inputs = thresholds.delta_formula_inputs
        scale = (d * alpha - 4 * s) / 8 * inputs["X_Q"] * (inputs["M_Q"] / mass) ** sigma
        branch = "intercritical"
    elif regime == Criticality.ENERGY_CRITICAL:
        if not report.hs_norm > thresholds.critical_point:
            raise DomainError("gradient norm does not exceed that of W")
        rho_max = 1 - energy / thresholds.threshold_energy
        scale = s ** 2 / (d - 2 * s) * thresholds.delta_formula_inputs["X_W"]
        branch = "energy_critical"
    else:
        raise DomainError(f"no threshold criterion for {regime.value} data with E >= 0")

    rho_max = min(rho_max, 1.0)
    if not rho_max > 0:
        raise DomainError(f"no admissible rho: energy at or above the threshold (rho_max = {rho_max:.3e})")
    if rho is None:
        rho = rho_max
    elif not 0 < rho <= rho_max:
        raise DomainError(f"rho must lie in (0, {rho_max:.6g}], got {rho}")
    return DeltaBound(delta=rho * scale, rho=rho, rho_max=rho_max, branch=branch)


def attach_monitor_evidence(verdict: CriteriaVerdict, records: Sequence[TrajectoryRecord],
                            rel_tol: float = 1e-3) -> CriteriaVerdict:
    """Upgrade evidence to numeric when the computed window keeps K <= -delta"""
    if verdict.delta is None:
        return verdict
    consistent, sup_k = monitor_k_bound(records, verdict.delta, rel_tol)
    verdict.provenance["sup_K_monitored"] = sup_k
    verdict.provenance["monitored_until"] = records[-1].t
    if consistent:
        verdict.evidence = "numeric"
    else:
        logger.warning(f"monitored sup K = {sup_k:.6g} above -delta = {-verdict.delta:.6g}")
    return verdict
