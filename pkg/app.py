import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from dotenv import load_dotenv

from models.exceptions import DomainError, FNLSError
from models.schemas import Criticality, RunConfig
from utils import flow_integrator, ground_state_solver, sweep_pipeline, verification_manager
from utils.artifact_store import write_json, write_snapshot
from utils.balakrishnan import build_quadrature
from utils.criteria import attach_monitor_evidence, classify
from utils.dynamics import MonitorConfig, exterior_growth_constant, write_diagnostics
from utils.run_config import COMMANDS, build_grid, describe_error, initial_field, load_config

# Load environment variables
load_dotenv()

logger = logging.getLogger('FNLSLab')

# K <= -0.99 delta along the computed window
FLOW_CHECK_TOL = 1e-2


def setup_logging(output_dir: Path, verbose: bool = False):
    """Log to stdout and to fnls_lab.log in the output directory"""
    output_dir.mkdir(parents=True, exist_ok=True)
    level = logging.DEBUG if verbose else getattr(logging, os.getenv("FNLS_LOG_LEVEL", "INFO").upper(),
                                                  logging.INFO)
    logging.basicConfig(
        level=level,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(output_dir / 'fnls_lab.log'),
            logging.StreamHandler()
        ],
        force=True
    )


def monitor_config(config: RunConfig, virial: Optional[bool] = None) -> MonitorConfig:
    monitors = config.monitors
    radius = monitors["R"][0] if monitors["R"] else None
    virial = (monitors["virial"] if virial is None else virial) and radius is not None
    estimate_radii = tuple(monitors["R"]) if virial and monitors["q_exponent"] is not None else ()
    return MonitorConfig(radius=radius, virial=virial,
                         q_exponent=monitors["q_exponent"], blowup_factor=monitors["blowup_factor"],
                         dealias=monitors["dealias"], estimate_radii=estimate_radii)


def run_ground_state(config: RunConfig, output_dir: Path) -> Dict:
    """Ground state snapshot plus its norms and threshold data"""
    params = config.physics_params()
    grid = build_grid(config)
    regime = params.criticality
    thresholds = None
    if regime == Criticality.ENERGY_CRITICAL:
        solution = ground_state_solver.make_W(grid, params)
        thresholds = ground_state_solver.energy_critical_thresholds(solution)
    else:
        solution = ground_state_solver.solve_Q(grid, params)
        if regime == Criticality.INTERCRITICAL:
            thresholds = ground_state_solver.intercritical_thresholds(solution)

    write_snapshot(solution.profile, params, output_dir / "ground_state.fnls")
    summary = {
        "kind": solution.kind,
        "params": params.to_dict(),
        "criticality": regime,
        "norms": solution.norms,
        "pohozaev_residuals": solution.pohozaev_residuals,
        "iterations": solution.iterations,
        "converged": solution.converged,
        "final_update": solution.residual_trace[-1] if solution.residual_trace else None,
        "diagnostics": solution.diagnostics,
        "thresholds": thresholds,
    }
    write_json(summary, output_dir / "thresholds.json")
    return {"success": True, "command": "ground-state", **summary}


def run_evolve(config: RunConfig, output_dir: Path) -> Dict:
    """Diagnostics CSV and blow-up report for one trajectory"""
    params = config.physics_params()
    grid = build_grid(config)
    u0 = initial_field(config, grid)
    monitors = monitor_config(config)
    quad = build_quadrature(params.s) if monitors.virial else None
    records, report = flow_integrator.evolve(u0, params, float(config.time["dt"]),
                                             float(config.time["t_end"]),
                                             int(config.time["sample_every"]), monitors, quad)
    write_diagnostics(records, output_dir / "diagnostics.csv")

    estimates, virial_monitor = {}, {}
    for R in monitors.estimate_radii:
        key = str(float(R))
        along = [record.estimates[key] for record in records]
        estimates[key] = along[0]
        virial_monitor[key] = {
            "min_slack": min(e.slack for e in along),
            "max_required_constant": max(e.required_constant for e in along),
            "exterior_growth_constant": exterior_growth_constant(records, R),
        }
    flags = sorted({flag for record in records for flag in record.resolution_flags})
    payload = {
        "params": params.to_dict(),
        "blowup": report,
        "samples": len(records),
        "final": records[-1].as_row(),
        "resolution_flags": flags,
        "initial_virial_estimates": estimates,
        "virial_monitor": virial_monitor,
    }
    write_json(payload, output_dir / "blowup_report.json")
    return {"success": True, "command": "evolve", **payload}


def run_verify(config: RunConfig, output_dir: Path) -> Dict:
    report = verification_manager.run_verification(config)
    write_json(report, output_dir / "verification.json")
    return {**report, "command": "verify"}


def run_classify(config: RunConfig, output_dir: Path) -> Dict:
    """Criteria verdict for the initial data, optionally confirmed along the flow"""
    params = config.physics_params()
    grid = build_grid(config)
    regime = params.criticality
    ground_state, thresholds = None, None
    if regime == Criticality.INTERCRITICAL:
        ground_state = ground_state_solver.solve_Q(grid, params)
        thresholds = ground_state_solver.intercritical_thresholds(ground_state)
    elif regime == Criticality.ENERGY_CRITICAL:
        thresholds = ground_state_solver.energy_critical_thresholds(
            ground_state_solver.make_W(grid, params))

    u0 = initial_field(config, grid, ground_state=ground_state)
    verdict = classify(u0, params, thresholds)
    if config.monitors["flow_check"] and verdict.delta is not None:
        records, _ = flow_integrator.evolve(u0, params, float(config.time["dt"]),
                                            float(config.time["t_end"]),
                                            int(config.time["sample_every"]),
                                            monitor_config(config, virial=False))
        verdict = attach_monitor_evidence(verdict, records, FLOW_CHECK_TOL)

    write_json(verdict, output_dir / "verdict.json")
    return {"success": True, "command": "classify", "verdict": verdict}


COMMAND_HANDLERS = {
    "ground-state": run_ground_state,
    "evolve": run_evolve,
    "verify": run_verify,
    "classify": run_classify,
}

for _command, _handler in COMMAND_HANDLERS.items():
    sweep_pipeline.register_handler(_command, _handler)


def run(command: str, config: RunConfig, output_dir: Path, threads: Optional[int] = None) -> Tuple[int, Dict]:
    """Run one command; returns (exit status, result dict)"""
    output_dir.mkdir(parents=True, exist_ok=True)
    if command == "sweep":
        if config.sweep is None:
            raise DomainError("the sweep command needs a `sweep` section in the config")
        result = sweep_pipeline.run_sweep(config, output_dir, threads)
        if not result["success"]:
            return 1, result
        verified = [entry.get("overall_passed", True) for entry in result["index"]["runs"]]
        return (0 if all(verified) else 2), result

    result = COMMAND_HANDLERS[command](config, output_dir)
    if command == "verify" and not result["overall_passed"]:
        return 2, result
    return 0, result


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fnls-lab",
        description="Spectral lab for the focusing fractional nonlinear Schrodinger equation")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="JSON run configuration (defaults apply when omitted)")
    parser.add_argument("--output", help="output directory (FNLS_OUTPUT_DIR, default fnls_output)")
    parser.add_argument("--threads", type=int, help="sweep workers (FNLS_THREADS, default 1)")
    parser.add_argument("--verbose", action="store_true", help="DEBUG logging")
    return parser


def _output_dir(args: argparse.Namespace, config: Optional[RunConfig]) -> Path:
    if args.output:
        return Path(args.output)
    if config is not None and config.outputs.get("directory"):
        return Path(config.outputs["directory"])
    return Path(os.getenv("FNLS_OUTPUT_DIR", "fnls_output"))


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print(f"❌ --threads must be positive, got {args.threads}")
        return 1

    config = None
    try:
        config = load_config(args.config)
    except FNLSError as e:
        error = e
    else:
        error = None

    output_dir = _output_dir(args, config)
    setup_logging(output_dir, args.verbose)

    if error is None:
        try:
            status, result = run(args.command, config, output_dir, args.threads)
        except FNLSError as e:
            error = e

    if error is not None:
        errors = describe_error(error)
        logger.error(f"{args.command} failed: {error}")
        write_json({"success": False, "command": args.command, "error": type(error).__name__,
                    "errors": errors}, output_dir / "error.json")
        print(f"❌ {args.command} failed ({type(error).__name__})")
        for message in errors:
            print(f"   - {message}")
        return 1

    if status == 0:
        print(f"✅ {args.command} finished; artifacts in {output_dir}")
    elif status == 2:
        print(f"❌ {args.command}: verification checks failed; see {output_dir}")
    else:
        print(f"❌ {args.command}: some runs failed; see {output_dir / 'index.json'}")
    return status


if __name__ == "__main__":
    sys.exit(main())
