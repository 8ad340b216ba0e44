"""
Run configuration: JSON document -> RunConfig, with every precondition
checked in a single pass.
"""
import copy
import itertools
import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from models.exceptions import ConfigValidationError, DomainError, FNLSError
from models.schemas import Criticality, GroundStateSolution, PhysicsParams, RunConfig
from utils.artifact_store import read_snapshot
from utils.ground_states import ground_state_solver
from utils.spectral import MIN_POINTS, SUPPORTED_DIMS, Field, Grid

logger = logging.getLogger('RunConfig')

COMMANDS = ("ground-state", "evolve", "verify", "classify", "sweep")
INITIAL_TYPES = ("gaussian", "ground_state_multiple", "snapshot")
SECTIONS = ("physics", "grid", "time", "initial", "monitors", "outputs", "seed", "sweep")

DEFAULT_CONFIG: Dict[str, Any] = {
    "physics": {"dim": 1, "s": 0.6, "alpha": 3.0},
    "grid": {"n": 1024, "L": 40.0},
    "time": {"dt": 1e-3, "t_end": 1.0, "sample_every": 10},
    "initial": {"type": "ground_state_multiple", "c": 1.2},
    "monitors": {"R": [10.0], "q_exponent": 10.0, "virial": False, "dealias": False,
                 "blowup_factor": None, "flow_check": False},
    "outputs": {"directory": None},
    "seed": 0,
}

INITIAL_DEFAULTS = {
    "gaussian": {"amplitude": 1.0, "width": 1.0, "center": 0.0, "momentum": 0.0},
    "ground_state_multiple": {"c": 1.0},
    "snapshot": {},
}


def default_config() -> Dict[str, Any]:
    return copy.deepcopy(DEFAULT_CONFIG)


def _merge(data: Dict[str, Any]) -> Dict[str, Any]:
    merged = default_config()
    for section, value in data.items():
        if isinstance(value, dict) and isinstance(merged.get(section), dict) and section != "initial":
            merged[section].update(value)
        else:
            merged[section] = copy.deepcopy(value)
    initial = merged.get("initial")
    if isinstance(initial, dict) and initial.get("type") in INITIAL_DEFAULTS:
        merged["initial"] = {**INITIAL_DEFAULTS[initial["type"]], **initial}
    return merged


def _is_int(value) -> bool:
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool)


def _is_number(value) -> bool:
    return isinstance(value, (int, float, np.integer, np.floating)) and not isinstance(value, bool) \
        and math.isfinite(float(value))


def collect_errors(data: Dict[str, Any]) -> List[str]:
    """Every violated precondition of a merged configuration"""
    errors = []
    for section in data:
        if section not in SECTIONS:
            errors.append(f"unknown section '{section}'")
    for section in ("physics", "grid", "time", "monitors", "outputs"):
        if not isinstance(data.get(section), dict):
            errors.append(f"section '{section}' must be an object, got {data.get(section)!r}")
            data = {**data, section: {}}

    physics = data["physics"]
    before = len(errors)
    params = None
    dim, s, alpha = physics.get("dim"), physics.get("s"), physics.get("alpha")
    if not _is_int(dim) or dim not in SUPPORTED_DIMS:
        errors.append(f"physics.dim must be one of {SUPPORTED_DIMS}, got {dim!r}")
    if not _is_number(s) or not 0.5 < s < 1:
        errors.append(f"physics.s must lie in (1/2, 1), got {s!r}")
    if not _is_number(alpha) or not alpha > 0:
        errors.append(f"physics.alpha must be positive, got {alpha!r}")
    if len(errors) == before:
        params = PhysicsParams(int(dim), float(s), float(alpha))

    grid = data["grid"]
    n, L = grid.get("n"), grid.get("L")
    if not _is_int(n) or n < MIN_POINTS or n & (n - 1):
        errors.append(f"grid.n must be a power of two >= {MIN_POINTS}, got {n!r}")
    if not _is_number(L) or not L > 0:
        errors.append(f"grid.L must be positive, got {L!r}")
        L = None

    time = data["time"]
    dt, t_end, sample_every = time.get("dt"), time.get("t_end"), time.get("sample_every")
    if not _is_number(dt) or not 0 < dt <= 1e-2:
        errors.append(f"time.dt must lie in (0, 1e-2], got {dt!r}")
    if not _is_number(t_end) or not t_end > 0:
        errors.append(f"time.t_end must be positive, got {t_end!r}")
    if not _is_int(sample_every) or sample_every < 1:
        errors.append(f"time.sample_every must be a positive integer, got {sample_every!r}")

    errors.extend(_initial_errors(data.get("initial"), params))

    monitors = data["monitors"]
    radii = monitors.get("R", [])
    if not isinstance(radii, list):
        errors.append(f"monitors.R must be a list, got {radii!r}")
        radii = []
    for R in radii:
        if not _is_number(R) or not R > 1:
            errors.append(f"monitors.R entries must exceed 1, got {R!r}")
        elif L is not None and not 2 * R < L:
            errors.append(f"monitors.R = {R} needs 2R < grid.L = {L}")
    q = monitors.get("q_exponent")
    if q is not None:
        if not _is_number(q):
            errors.append(f"monitors.q_exponent must be a number, got {q!r}")
        elif _is_number(alpha) and not q > alpha + 2:
            errors.append(f"monitors.q_exponent must exceed alpha + 2 = {alpha + 2}, got {q}")
    factor = monitors.get("blowup_factor")
    if factor is not None and (not _is_number(factor) or not factor > 1):
        errors.append(f"monitors.blowup_factor must exceed 1, got {factor!r}")
    for flag in ("virial", "dealias", "flow_check"):
        if not isinstance(monitors.get(flag), bool):
            errors.append(f"monitors.{flag} must be true or false, got {monitors.get(flag)!r}")

    if not _is_int(data.get("seed")):
        errors.append(f"seed must be an integer, got {data.get('seed')!r}")

    if data.get("sweep") is not None:
        errors.extend(_sweep_errors(data["sweep"], data))
    return errors


def _initial_errors(initial, params: Optional[PhysicsParams]) -> List[str]:
    if not isinstance(initial, dict) or initial.get("type") not in INITIAL_TYPES:
        kind = initial.get("type") if isinstance(initial, dict) else initial
        return [f"initial.type must be one of {INITIAL_TYPES}, got {kind!r}"]
    errors = []
    kind = initial["type"]
    if kind == "gaussian":
        if not _is_number(initial.get("width")) or not initial["width"] > 0:
            errors.append(f"initial.width must be positive, got {initial.get('width')!r}")
        if not _is_number(initial.get("amplitude")):
            errors.append(f"initial.amplitude must be a number, got {initial.get('amplitude')!r}")
    elif kind == "ground_state_multiple":
        if not _is_number(initial.get("c")) or not initial["c"] > 0:
            errors.append(f"initial.c must be positive, got {initial.get('c')!r}")
        if params is not None and params.criticality in (Criticality.ENERGY_CRITICAL,
                                                          Criticality.ENERGY_SUPERCRITICAL):
            errors.append(f"ground_state_multiple needs a ground state Q; none for {params.criticality.value}")
    else:
        path = initial.get("path")
        if not isinstance(path, str) or not Path(path).is_file():
            errors.append(f"initial.path must name an existing snapshot, got {path!r}")
    return errors


def _sweep_errors(sweep, data: Dict[str, Any]) -> List[str]:
    if not isinstance(sweep, dict):
        return [f"sweep must be an object, got {sweep!r}"]
    errors = []
    command = sweep.get("command")
    if command not in COMMANDS or command == "sweep":
        errors.append(f"sweep.command must be one of {[c for c in COMMANDS if c != 'sweep']}, got {command!r}")
    parameters = sweep.get("parameters")
    if not isinstance(parameters, dict) or not parameters:
        return errors + ["sweep.parameters must map dotted keys to value lists"]
    for key, values in parameters.items():
        section = key.split(".", 1)[0]
        if "." not in key or not isinstance(data.get(section), dict):
            errors.append(f"sweep parameter '{key}' must be <section>.<key> of an object section")
        if not isinstance(values, list) or not values:
            errors.append(f"sweep parameter '{key}' needs a non-empty list of values")
    return errors


def parse_config(data: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Merge with defaults and validate; raises ConfigValidationError listing every violation"""
    merged = _merge(data or {})
    errors = collect_errors(merged)
    if errors:
        for error in errors:
            logger.error(f"config: {error}")
        raise ConfigValidationError(errors)
    return RunConfig(physics=merged["physics"], grid=merged["grid"], time=merged["time"],
                     initial=merged["initial"], monitors=merged["monitors"],
                     outputs=merged["outputs"], seed=int(merged["seed"]),
                     sweep=merged.get("sweep"))


def load_config(path) -> RunConfig:
    if path is None:
        return parse_config({})
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigValidationError([f"cannot read config {path}: {e}"])
    if not isinstance(data, dict):
        raise ConfigValidationError([f"config {path} must hold a JSON object"])
    return parse_config(data)


def expand_sweep(config: RunConfig) -> List[Tuple[str, Dict[str, Any], RunConfig]]:
    """(run id, overrides, config) for each point of the Cartesian product, in sorted-key order"""
    if config.sweep is None:
        raise DomainError("config has no sweep section")
    parameters = config.sweep["parameters"]
    keys = sorted(parameters)
    runs = []
    for index, combo in enumerate(itertools.product(*(parameters[k] for k in keys))):
        data = config.to_dict()
        data.pop("sweep", None)
        overrides = dict(zip(keys, combo))
        for key, value in overrides.items():
            section, field_name = key.split(".", 1)
            data[section][field_name] = value
        runs.append((f"run_{index:04d}", overrides, parse_config(data)))
    return runs


def build_grid(config: RunConfig) -> Grid:
    return Grid(int(config.physics["dim"]), int(config.grid["n"]), float(config.grid["L"]))


def initial_field(config: RunConfig, grid: Optional[Grid] = None,
                  ground_state: Optional[GroundStateSolution] = None) -> Field:
    """Initial data described by the `initial` section; a precomputed Q is reused"""
    grid = grid or build_grid(config)
    params = config.physics_params()
    initial = config.initial
    kind = initial["type"]
    if kind == "gaussian":
        center = initial["center"]
        centers = center if isinstance(center, list) else [center] * grid.dim
        if len(centers) != grid.dim:
            raise ConfigValidationError([f"initial.center needs {grid.dim} entries, got {len(centers)}"])
        r2 = sum((x - c) ** 2 for x, c in zip(grid.coordinates, centers))
        values = initial["amplitude"] * np.exp(-r2 / initial["width"] ** 2)
        values = values * np.exp(1j * initial["momentum"] * grid.coordinates[0])
        return Field(grid, values=values)
    if kind == "ground_state_multiple":
        Q = ground_state if ground_state is not None else ground_state_solver.solve_Q(grid, params)
        return float(initial["c"]) * Q.profile
    field, s, alpha = read_snapshot(initial["path"])
    if field.grid != grid:
        raise ConfigValidationError([f"snapshot grid {field.grid} differs from the configured grid {grid}"])
    if (s, alpha) != (params.s, params.alpha):
        logger.warning(f"snapshot written for s = {s}, alpha = {alpha}; running with {params.to_dict()}")
    return field


def describe_error(error: FNLSError) -> List[str]:
    return list(getattr(error, "errors", None) or [str(error)])
