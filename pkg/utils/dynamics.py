"""
Split-step time integration of

    i u_t - (-Delta)^s u = -|u|^alpha u

with conservation monitoring, exterior-mass and virial monitors, and the
gradient-growth blow-up detector.
"""
import logging
import math
import os
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sp_fft

from models.exceptions import DomainError, IntegrationError
from models.schemas import (BlowupReport, PhysicsParams, StoppingReason, TrajectoryRecord,
                            VirialEstimate)
from utils.artifact_store import write_csv
from utils.balakrishnan import MQuadrature, build_quadrature, virial_actions
from utils.cutoffs import Weight, make_phi, make_psi
from utils.invariants import conserved_report
from utils.spectral import Field, Grid, hdot_norm, periodization_leak

MAX_DT = 1e-2
DRIFT_TOL = 1e-6
ALIAS_FLAG_TOL = 1e-10
LEAK_FLAG_TOL = 1e-8
REFINEMENT_TOL = 0.05
MIN_FIT_SAMPLES = 10


@lru_cache(maxsize=32)
def _linear_propagator(grid: Grid, s: float, dt: float) -> np.ndarray:
    propagator = np.exp(-1j * dt * np.power(grid.xi_squared, s))
    propagator.setflags(write=False)
    return propagator


@lru_cache(maxsize=16)
def _dealias_mask(grid: Grid) -> np.ndarray:
    """Modes kept by the 2/3 rule: every |k_j| <= n/3"""
    n = grid.points_per_dim
    index = np.abs(sp_fft.fftfreq(n, d=1.0 / n))
    keep = np.ones(grid.shape, dtype=bool)
    for axis in range(grid.dim):
        shape = [1] * grid.dim
        shape[axis] = n
        keep &= (index <= n / 3).reshape(shape)
    keep.setflags(write=False)
    return keep


@dataclass
class MonitorConfig:
    """What evolve samples besides the conserved quantities.

    radius feeds the exterior-mass columns; virial adds M_phi and dM/dt with
    phi at the same radius. Every radius in estimate_radii gets V_psi and the
    localized virial estimate on each sample (needs q_exponent).
    """
    radius: Optional[float] = None
    virial: bool = False
    q_exponent: Optional[float] = None
    blowup_factor: Optional[float] = None
    drift_tol: float = DRIFT_TOL
    # the 2/3 mask truncates resolved profiles too; opt in near blow-up
    dealias: bool = False
    quadrature_order: Optional[int] = None
    estimate_radii: Tuple[float, ...] = ()

    def growth_threshold(self) -> float:
        if self.blowup_factor is not None:
            return float(self.blowup_factor)
        return float(os.getenv("FNLS_BLOWUP_FACTOR", "20"))


class FlowIntegrator:
    """Strang splitting with fixed step and per-sample diagnostics"""

    def __init__(self):
        self.logger = logging.getLogger('FlowIntegrator')

    def _step(self, values: np.ndarray, grid: Grid, dt: float, params: PhysicsParams,
              dealias: bool, nonlinear: bool) -> Tuple[np.ndarray, float]:
        """One Strang step; returns the new values and the mass removed by dealiasing"""
        tail = 0.0
        keep = _dealias_mask(grid) if dealias else None
        if nonlinear:
            values = values * np.exp(0.5j * dt * np.abs(values) ** params.alpha)
        spectral = sp_fft.fftn(values, norm="forward")
        if keep is not None:
            tail += grid.volume * float(np.sum(np.abs(spectral[~keep]) ** 2))
            spectral = np.where(keep, spectral, 0.0)
        spectral = spectral * _linear_propagator(grid, params.s, dt)
        values = sp_fft.ifftn(spectral, norm="forward")
        if nonlinear:
            values = values * np.exp(0.5j * dt * np.abs(values) ** params.alpha)
            if keep is not None:
                spectral = sp_fft.fftn(values, norm="forward")
                tail += grid.volume * float(np.sum(np.abs(spectral[~keep]) ** 2))
                values = sp_fft.ifftn(np.where(keep, spectral, 0.0), norm="forward")
        return values, tail

    def strang_step(self, field: Field, dt: float, params: PhysicsParams,
                    dealias: bool = False, nonlinear: bool = True) -> Field:
        """Nonlinear half step, exact linear step, nonlinear half step"""
        if not dt > 0:
            raise DomainError(f"time step must be positive, got {dt}")
        values, tail = self._step(field.values, field.grid, dt, params, dealias, nonlinear)
        if not np.all(np.isfinite(values)):
            raise IntegrationError("non-finite values after a Strang step", last_state=field)
        if tail > ALIAS_FLAG_TOL:
            self.logger.debug(f"dealiasing removed mass {tail:.3e}")
        return Field(field.grid, values=values)

    def evolve(self, u0: Field, params: PhysicsParams, dt: float, t_end: float,
               sample_every: int = 1, monitors: Optional[MonitorConfig] = None,
               quad: Optional[MQuadrature] = None
               ) -> Tuple[List[TrajectoryRecord], BlowupReport]:
        """Integrate to t_end, stopping early on gradient growth or mass-drift breach"""
        monitors = monitors or MonitorConfig()
        if not 0 < dt <= MAX_DT:
            raise DomainError(f"time step must lie in (0, {MAX_DT}], got {dt}")
        if not t_end > 0:
            raise DomainError(f"t_end must be positive, got {t_end}")
        if int(sample_every) != sample_every or sample_every < 1:
            raise DomainError(f"sample_every must be a positive integer, got {sample_every}")

        grid = u0.grid
        psi = make_psi(grid, monitors.radius) if monitors.radius is not None else None
        phi = None
        if monitors.virial:
            if monitors.radius is None:
                raise DomainError("virial monitoring needs a monitor radius")
            phi = make_phi(grid, monitors.radius)
            quad = quad or build_quadrature(params.s, monitors.quadrature_order)
        estimate_weights = []
        if monitors.estimate_radii:
            if monitors.q_exponent is None:
                raise DomainError("virial estimate monitoring needs q_exponent")
            interpolation_eta(params.alpha, monitors.q_exponent)
            quad = quad or build_quadrature(params.s, monitors.quadrature_order)
            estimate_weights = [(float(R), make_psi(grid, R), make_phi(grid, R))
                                for R in monitors.estimate_radii]

        threshold = monitors.growth_threshold()
        steps = int(math.ceil(t_end / dt - 1e-9))
        mass0 = float(np.sum(np.abs(u0.values) ** 2) * grid.cell_volume)
        hs0 = hdot_norm(u0, params.s)

        estimate_args = (estimate_weights, monitors.q_exponent)
        records = [self._record(u0, 0.0, params, mass0, 0.0, psi, phi, quad, estimate_args=estimate_args)]
        values = u0.values
        tail_since_record = 0.0
        reason = StoppingReason.T_END_REACHED
        t_star = None
        growth = 1.0
        t = 0.0
        self.logger.info(f"evolve {params.to_dict()} on n = {grid.points_per_dim}, dt = {dt}, {steps} steps")

        for k in range(1, steps + 1):
            previous = values
            values, tail = self._step(values, grid, dt, params, monitors.dealias, True)
            t = k * dt
            if not np.all(np.isfinite(values)):
                raise IntegrationError(f"non-finite values at t = {t:.6g}",
                                       last_state=Field(grid, values=previous), t=t - dt)
            tail_since_record += tail
            current = Field(grid, values=values)

            hs = hdot_norm(current, params.s)
            growth = hs / hs0 if hs0 > 0 else 1.0
            drift = abs(float(np.sum(np.abs(values) ** 2) * grid.cell_volume) - mass0) / mass0 if mass0 > 0 else 0.0

            stop = None
            if growth >= threshold:
                stop, t_star = StoppingReason.GRADIENT_GROWTH, t
                self.logger.warning(f"gradient growth {growth:.2f} >= {threshold} at t = {t:.6g}")
            elif drift > monitors.drift_tol:
                stop = StoppingReason.DRIFT_BREACH
                self.logger.warning(f"mass drift {drift:.3e} exceeds {monitors.drift_tol} at t = {t:.6g}; under-resolved")

            if stop is not None or k % sample_every == 0 or k == steps:
                flags = ("drift_breach",) if stop == StoppingReason.DRIFT_BREACH else ()
                records.append(self._record(current, t, params, mass0, tail_since_record,
                                            psi, phi, quad, flags, estimate_args))
                tail_since_record = 0.0
            if stop is not None:
                reason = stop
                break

        report = BlowupReport(triggered=reason == StoppingReason.GRADIENT_GROWTH,
                              t_star_estimate=t_star, growth_factor=growth, stopping_reason=reason)
        if report.triggered:
            try:
                report.fit_exponent = growth_exponent_fit(records)
            except DomainError as e:
                self.logger.debug(f"no growth fit: {e}")
        self.logger.info(f"evolve stopped at t = {t:.6g}: {reason.value}, growth {growth:.3g}")
        return records, report

    def _record(self, field: Field, t: float, params: PhysicsParams, mass0: float, tail: float,
                psi: Optional[Weight], phi: Optional[Weight], quad: Optional[MQuadrature],
                extra_flags: Tuple[str, ...] = (), estimate_args=((), None)) -> TrajectoryRecord:
        conserved = conserved_report(field, params)
        drift = abs(conserved.mass - mass0) / mass0 if mass0 > 0 else 0.0
        flags = list(extra_flags)
        if tail > ALIAS_FLAG_TOL:
            flags.append("alias_tail")
            self.logger.debug(f"t = {t:.6g}: dealiasing tail {tail:.3e}")
        if periodization_leak(field) > LEAK_FLAG_TOL:
            flags.append("periodization_leak")

        nan = float("nan")
        indicator, v_psi = exterior_mass(field, psi.R, psi) if psi is not None else (nan, nan)
        virial = virial_actions(field, phi, params, quad) if phi is not None else None
        weights, q_exponent = estimate_args
        v_psi_by_radius, estimates = {}, {}
        for R, psi_R, phi_R in weights:
            v_psi_by_radius[str(R)] = exterior_mass(field, R, psi_R)[1]
            estimates[str(R)] = virial_estimate_monitor(field, R, params, quad, q_exponent, phi=phi_R)
        return TrajectoryRecord(t=t, conserved=conserved, hs_norm=conserved.hs_norm,
                                exterior_mass=indicator, v_psi=v_psi, mass_drift=drift,
                                alias_tail=tail, virial=virial, resolution_flags=tuple(flags),
                                v_psi_by_radius=v_psi_by_radius, estimates=estimates)

    def detect_singularity(self, initial: Callable[..., np.ndarray], params: PhysicsParams,
                           grid: Grid, dt: float, t_end: float,
                           monitors: Optional[MonitorConfig] = None) -> BlowupReport:
        """Run at (dt, n) and (dt/2, 2n); a blow-up is reported only if both
        trigger with t_star within REFINEMENT_TOL of each other"""
        coarse_field = Field.from_function(grid, initial)
        _, coarse = self.evolve(coarse_field, params, dt, t_end, sample_every=max(1, int(0.01 / dt)),
                                monitors=monitors)
        if not coarse.triggered:
            return coarse

        fine_grid = Grid(grid.dim, 2 * grid.points_per_dim, grid.half_length)
        fine_field = Field.from_function(fine_grid, initial)
        _, fine = self.evolve(fine_field, params, dt / 2, t_end, sample_every=max(1, int(0.02 / dt)),
                              monitors=monitors)

        refinement = {"coarse_t_star": coarse.t_star_estimate, "fine_t_star": fine.t_star_estimate,
                      "fine_triggered": fine.triggered}
        resolved = False
        if fine.triggered:
            gap = abs(fine.t_star_estimate - coarse.t_star_estimate) / coarse.t_star_estimate
            refinement["relative_gap"] = gap
            resolved = gap <= REFINEMENT_TOL
        if not resolved:
            self.logger.warning(f"blow-up at t = {coarse.t_star_estimate:.6g} not confirmed under refinement")

        return BlowupReport(triggered=resolved,
                            t_star_estimate=coarse.t_star_estimate if resolved else None,
                            growth_factor=coarse.growth_factor,
                            stopping_reason=coarse.stopping_reason,
                            fit_exponent=coarse.fit_exponent, resolved=resolved,
                            refinement=refinement)


def exterior_mass(field: Field, R: float, psi: Optional[Weight] = None) -> Tuple[float, float]:
    """(int_{|x| >= R} |u|^2, V_psi_R(u)); the first never exceeds the second"""
    if not R < field.grid.half_length:
        raise DomainError(f"exterior radius R = {R} must be below half_length {field.grid.half_length}")
    psi = psi if psi is not None else make_psi(field.grid, R)
    density = np.abs(field.values) ** 2
    dx = field.grid.cell_volume
    indicator = float(np.sum(density[field.grid.radius >= R]) * dx)
    v_psi = float(np.sum(psi.value * density) * dx)
    return indicator, v_psi


def exterior_growth_constant(records: Sequence[TrajectoryRecord], R: float) -> float:
    """Smallest C >= 0 with V_psi_R(u(t)) <= V_psi_R(u0) + C t / R on every record"""
    key = str(float(R))
    if not records or key not in records[0].v_psi_by_radius:
        raise DomainError(f"no V_psi samples for R = {R}; add it to estimate_radii")
    start = records[0].v_psi_by_radius[key]
    rates = [(r.v_psi_by_radius[key] - start) * R / (r.t - records[0].t)
             for r in records[1:] if r.t > records[0].t]
    return max([0.0] + rates)


def interpolation_eta(alpha: float, q: float) -> float:
    """eta with 1/(alpha+2) = eta/2 + (1-eta)/q"""
    if not q > alpha + 2:
        raise DomainError(f"q_exponent must exceed alpha + 2 = {alpha + 2}, got {q}")
    if math.isinf(q):
        return 2 / (alpha + 2)
    return (1 / (alpha + 2) - 1 / q) / (0.5 - 1 / q)


def virial_estimate_monitor(field: Field, R: float, params: PhysicsParams, quad: MQuadrature,
                            q_exponent: float, phi: Optional[Weight] = None) -> VirialEstimate:
    """dM_phi_R/dt <= 16K + C R^-2 ||u||^2_{L2(|x|>=R)} + C ||u||^(eta(alpha+2))_{L2(|x|>=R)}"""
    eta = interpolation_eta(params.alpha, q_exponent)
    report = virial_actions(field, phi if phi is not None else make_phi(field.grid, R), params, quad)
    sixteen_K = 16 * conserved_report(field, params).K
    outside, _ = exterior_mass(field, R)
    quadratic = outside / R ** 2
    power = outside ** (eta * (params.alpha + 2) / 2)

    excess = report.dM_dt_rhs - sixteen_K
    remainder = quadratic + power
    if excess <= 0:
        required = 0.0
    elif remainder > 0:
        required = excess / remainder
    else:
        required = math.inf
    return VirialEstimate(lhs=report.dM_dt_rhs, sixteen_K=sixteen_K, quadratic_remainder=quadratic,
                          power_remainder=power, eta=eta, slack=sixteen_K + remainder - report.dM_dt_rhs,
                          required_constant=required)


def _series(trajectory) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(trajectory, tuple) and len(trajectory) == 2:
        times, values = trajectory
        return np.asarray(times, dtype=float), np.asarray(values, dtype=float)
    return (np.array([r.t for r in trajectory], dtype=float),
            np.array([r.hs_norm for r in trajectory], dtype=float))


def growth_exponent_fit(trajectory, window: Optional[Tuple[float, float]] = None) -> float:
    """Least-squares slope of log hs_norm against log t.

    trajectory is a list of TrajectoryRecord or a (times, hs_values) pair.
    """
    times, values = _series(trajectory)
    keep = times > 0
    if window is not None:
        keep &= (times >= window[0]) & (times <= window[1])
    times, values = times[keep], values[keep]
    if times.size < MIN_FIT_SAMPLES:
        raise DomainError(f"growth fit needs >= {MIN_FIT_SAMPLES} samples with t > 0, got {times.size}")
    if not np.all(np.diff(values) > 0):
        raise DomainError("hs_norm is not increasing over the fit window")
    slope, _ = np.polyfit(np.log(times), np.log(values), 1)
    return float(slope)


def monitor_k_bound(records: Sequence[TrajectoryRecord], delta: float,
                    rel_tol: float = 1e-3) -> Tuple[bool, float]:
    """Whether sup K over the records stays below -delta (up to rel_tol |delta|)"""
    if not records:
        raise DomainError("monitor_k_bound needs at least one record")
    sup_k = max(r.conserved.K for r in records)
    return sup_k <= -delta + rel_tol * abs(delta), float(sup_k)


def write_diagnostics(records: Sequence[TrajectoryRecord], path) -> None:
    write_csv([r.as_row() for r in records], path)


flow_integrator = FlowIntegrator()
