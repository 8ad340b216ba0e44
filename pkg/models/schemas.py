import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Tuple

from models.exceptions import DomainError

if TYPE_CHECKING:
    from utils.spectral import Field

# Relative tolerance used when deciding whether α sits exactly on a critical exponent
EXPONENT_TOL = 1e-12


class Criticality(Enum):
    MASS_SUBCRITICAL = "mass-subcritical"
    MASS_CRITICAL = "mass-critical"
    INTERCRITICAL = "intercritical"
    ENERGY_CRITICAL = "energy-critical"
    ENERGY_SUPERCRITICAL = "energy-supercritical"


class StoppingReason(Enum):
    GRADIENT_GROWTH = "gradient_growth"
    DRIFT_BREACH = "drift_breach"
    T_END_REACHED = "t_end_reached"


@dataclass(frozen=True)
class PhysicsParams:
    """Dimension d, dispersion order s and nonlinearity power α of the model"""
    dim: int
    s: float
    alpha: float

    def __post_init__(self):
        errors = []
        if not isinstance(self.dim, int) or self.dim < 1:
            errors.append(f"dim must be a positive integer, got {self.dim!r}")
        if not 0.5 < self.s < 1.0:
            errors.append(f"s must lie in (1/2, 1), got {self.s}")
        if not self.alpha > 0:
            errors.append(f"alpha must be positive, got {self.alpha}")
        if errors:
            raise DomainError("; ".join(errors))

    @property
    def s_c(self) -> float:
        return self.dim / 2 - 2 * self.s / self.alpha

    @property
    def alpha_star(self) -> float:
        return 4 * self.s / self.dim

    @property
    def alpha_star_upper(self) -> Optional[float]:
        # Only finite when d > 2s, i.e. never in d = 1
        if self.dim > 2 * self.s:
            return 4 * self.s / (self.dim - 2 * self.s)
        return None

    @property
    def is_mass_critical(self) -> bool:
        return math.isclose(self.alpha, self.alpha_star, rel_tol=EXPONENT_TOL)

    @property
    def criticality(self) -> Criticality:
        if self.is_mass_critical:
            return Criticality.MASS_CRITICAL
        if self.alpha < self.alpha_star:
            return Criticality.MASS_SUBCRITICAL
        upper = self.alpha_star_upper
        if upper is None:
            return Criticality.INTERCRITICAL
        if math.isclose(self.alpha, upper, rel_tol=EXPONENT_TOL):
            return Criticality.ENERGY_CRITICAL
        if self.alpha < upper:
            return Criticality.INTERCRITICAL
        return Criticality.ENERGY_SUPERCRITICAL

    @property
    def sigma(self) -> Optional[float]:
        """(s − s_c)/s_c; undefined (None) at the mass-critical power"""
        if self.is_mass_critical:
            return None
        d, s, a = self.dim, self.s, self.alpha
        if self.criticality == Criticality.ENERGY_CRITICAL:
            return 0.0
        return (4 * s - (d - 2 * s) * a) / (d * a - 4 * s)

    @property
    def critical_sobolev_exponent(self) -> Optional[float]:
        """s* = 2d/(d − 2s), the Lebesgue exponent of the energy-critical problem"""
        if self.dim > 2 * self.s:
            return 2 * self.dim / (self.dim - 2 * self.s)
        return None

    def to_dict(self) -> Dict[str, Any]:
        return {"dim": self.dim, "s": self.s, "alpha": self.alpha}


@dataclass(frozen=True)
class CriticalityReport:
    criticality: Criticality
    s_c: float
    sigma: Optional[float]
    alpha_star: float
    alpha_star_upper: Optional[float]


@dataclass(frozen=True)
class ConservedReport:
    mass: float
    energy: float
    K: float
    hs_norm: float
    l_alpha2_norm: float


@dataclass(frozen=True)
class AdmissiblePair:
    p: float
    q: float
    gamma_pq: float
    kind: str


@dataclass(frozen=True)
class LocalTheoryExponents:
    p: float
    q: float
    mode: str
    gamma: Optional[float]
    contraction_exponent: Optional[float]
    notes: Tuple[str, ...] = ()


@dataclass(frozen=True)
class NonradialLocalTheory:
    gamma_threshold: float
    time_exponent_floor: float
    critical_pair: Optional[Tuple[float, float]]
    notes: Tuple[str, ...] = ()


@dataclass
class VirialReport:
    V_value: float
    M_value: float
    dV_dt_rhs: float
    dM_dt_rhs: float
    term_breakdown: Dict[str, float]
    dV_dt_imag: float = 0.0


@dataclass
class VirialEstimate:
    """dM/dt against 16K plus the two exterior remainders R^-2 m_ext and m_ext^(eta(alpha+2)/2)"""
    lhs: float
    sixteen_K: float
    quadratic_remainder: float
    power_remainder: float
    eta: float
    slack: float
    required_constant: float


@dataclass(frozen=True)
class LemmaBound:
    name: str
    lhs: float
    rhs: float
    ratio: float


@dataclass
class GroundStateSolution:
    profile: "Field"
    params: PhysicsParams
    norms: Dict[str, float]
    pohozaev_residuals: Tuple[float, float]
    iterations: int
    converged: bool
    kind: str = "Q"
    residual_trace: List[float] = field(default_factory=list)
    diagnostics: Dict[str, float] = field(default_factory=dict)


@dataclass
class ThresholdData:
    regime: Criticality
    params: PhysicsParams
    sharp_constant: float
    critical_point: float
    threshold_energy: float
    delta_formula_inputs: Dict[str, float]
    consistency: Dict[str, float] = field(default_factory=dict)


@dataclass
class TrajectoryRecord:
    t: float
    conserved: ConservedReport
    hs_norm: float
    exterior_mass: float
    v_psi: float
    mass_drift: float
    alias_tail: float = 0.0
    virial: Optional[VirialReport] = None
    resolution_flags: Tuple[str, ...] = ()
    # keyed by str(float(R)) for every radius with an estimate monitor
    v_psi_by_radius: Dict[str, float] = field(default_factory=dict)
    estimates: Dict[str, VirialEstimate] = field(default_factory=dict)

    def as_row(self) -> Dict[str, float]:
        """One diagnostics CSV row; virial columns are NaN on unsampled steps"""
        nan = float("nan")
        return {
            "t": self.t,
            "mass": self.conserved.mass,
            "energy": self.conserved.energy,
            "K": self.conserved.K,
            "hs_norm": self.hs_norm,
            "l_alpha2_norm": self.conserved.l_alpha2_norm,
            "exterior_mass_R": self.exterior_mass,
            "V_psi": self.v_psi,
            "M_phi": self.virial.M_value if self.virial else nan,
            "dM_dt_rhs": self.virial.dM_dt_rhs if self.virial else nan,
            "mass_drift": self.mass_drift,
            "alias_tail": self.alias_tail,
        }


@dataclass
class BlowupReport:
    triggered: bool
    t_star_estimate: Optional[float]
    growth_factor: float
    stopping_reason: StoppingReason
    fit_exponent: Optional[float] = None
    resolved: Optional[bool] = None
    refinement: Dict[str, Any] = field(default_factory=dict)


@dataclass
class CriteriaVerdict:
    criticality: Criticality
    checks: Dict[str, bool]
    delta: Optional[float]
    verdict: str
    provenance: Dict[str, Optional[float]]
    evidence: str = "analytic"
    metadata: Dict[str, str] = field(default_factory=dict)

    @property
    def criterion_met(self) -> bool:
        return self.verdict == "criterion_met"


@dataclass(frozen=True)
class DeltaBound:
    delta: float
    rho: Optional[float]
    rho_max: Optional[float]
    branch: str


@dataclass
class RunConfig:
    """Parsed run configuration; sections mirror the JSON document"""
    physics: Dict[str, Any]
    grid: Dict[str, Any]
    time: Dict[str, Any]
    initial: Dict[str, Any]
    monitors: Dict[str, Any]
    outputs: Dict[str, Any]
    seed: int = 0
    sweep: Optional[Dict[str, Any]] = None

    def physics_params(self) -> PhysicsParams:
        return PhysicsParams(int(self.physics["dim"]), float(self.physics["s"]),
                             float(self.physics["alpha"]))

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "physics": dict(self.physics),
            "grid": dict(self.grid),
            "time": dict(self.time),
            "initial": dict(self.initial),
            "monitors": dict(self.monitors),
            "outputs": dict(self.outputs),
            "seed": self.seed,
        }
        if self.sweep is not None:
            data["sweep"] = dict(self.sweep)
        return data
