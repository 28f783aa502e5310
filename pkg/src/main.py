#!/usr/bin/env python3
"""
Command-line entry point of the biharmonic wave map simulator.

    biwave run <config>
    biwave sweep <config> --eps 1e-1,1e-2,1e-3 [--jobs K]
    biwave converge <config> --mode dt|grid [--levels L]

Exit codes: 0 success, 1 configuration error, 2 blow-up, 3 convergence failure.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from src.config import PROJECT_NAME, VERSION, check_dt_guidance, load_sim_config
from src.exceptions import BiwaveError, ConfigError, ConvergenceFailure, NonFinite
from src.experiments.snapshots import write_snapshot
from src.experiments.studies import run_convergence, run_single, run_sweep
from src.models.sim_models import SimConfig

logger = logging.getLogger("biwave.main")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NONFINITE = 2
EXIT_CONVERGENCE = 3


def _output_dir(args: argparse.Namespace, config: SimConfig) -> Path:
    if args.output_dir:
        return Path(args.output_dir)
    if config.output.diagnostics:
        return Path(config.output.diagnostics).parent
    return Path(args.config).parent


def _fail(message: str, code: int) -> int:
    print(f"{PROJECT_NAME}: error: {message}", file=sys.stderr)
    return code


def cmd_run(args: argparse.Namespace) -> int:
    config = load_sim_config(args.config)
    check_dt_guidance(config)
    try:
        result = run_single(config)
    except NonFinite as e:
        if not config.output.snapshots and e.last_good is not None:
            path = _output_dir(args, config) / "last_good.bin"
            write_snapshot(path, e.last_good, config.grid, config.integrator.penalty.epsilon)
        return _fail(str(e), EXIT_NONFINITE)

    last = result.trajectory.records[-1]
    print(f"t={last.t!r} E_eps={last.energy_penalized!r} penalty_mass={last.penalty_mass!r}")
    return EXIT_OK


def _parse_epsilons(raw: str) -> List[float]:
    try:
        return [float(item) for item in raw.split(",") if item.strip()]
    except ValueError as e:
        raise ConfigError(f"bad --eps list {raw!r}: {e}") from e


def cmd_sweep(args: argparse.Namespace) -> int:
    config = load_sim_config(args.config)
    epsilons = _parse_epsilons(args.eps)
    summary = run_sweep(config, epsilons, jobs=args.jobs, output_dir=_output_dir(args, config))

    print("epsilon,status,max_mass_ratio,max_constraint_l2,max_charge_drift,max_energy_ratio")
    for m in summary.members:
        print(f"{m.epsilon!r},{m.status},{m.max_mass_ratio},{m.max_constraint_l2},{m.max_charge_drift},{m.max_energy_ratio}")
    if summary.slope is not None:
        print(f"constraint slope: {summary.slope:.4f}")
    for eps_a, eps_b, distance in summary.distances:
        print(f"distance eps={eps_a!r} vs eps={eps_b!r}: {distance:.6e}")
    if not summary.succeeded:
        return _fail("every sweep member failed", EXIT_NONFINITE)
    return EXIT_OK


def cmd_converge(args: argparse.Namespace) -> int:
    config = load_sim_config(args.config)
    report = run_convergence(config, mode=args.mode, levels=args.levels, output_dir=_output_dir(args, config))
    print("level,dt,N,error,order")
    for row in report.levels:
        print(f"{row.level},{row.dt!r},{'x'.join(map(str, row.points))},{row.error!r},{row.order}")
    report.raise_for_failure()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog=PROJECT_NAME, description="Biharmonic wave maps into spheres by penalization")
    parser.add_argument("--version", action="version", version=f"{PROJECT_NAME} {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="run one simulation")
    run_parser.set_defaults(handler=cmd_run)

    sweep_parser = sub.add_parser("sweep", help="run one simulation per epsilon and summarize")
    sweep_parser.add_argument("--eps", required=True, help="comma-separated decreasing epsilons")
    sweep_parser.add_argument("--jobs", type=int, default=1, help="members run concurrently")
    sweep_parser.set_defaults(handler=cmd_sweep)

    converge_parser = sub.add_parser("converge", help="dt or grid self-convergence study")
    converge_parser.add_argument("--mode", choices=("dt", "grid"), default="dt")
    converge_parser.add_argument("--levels", type=int, default=4)
    converge_parser.set_defaults(handler=cmd_converge)

    for child in (run_parser, sweep_parser, converge_parser):
        child.add_argument("config", help="config file or diagnostics file with an embedded config")
        child.add_argument("--output-dir", default=None, help="directory for study outputs")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments and dispatch to a subcommand.

    Returns:
        int: Process exit code
    """
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return _fail(str(e), EXIT_CONFIG)
    except ConvergenceFailure as e:
        return _fail(str(e), EXIT_CONVERGENCE)
    except NonFinite as e:
        return _fail(str(e), EXIT_NONFINITE)
    except BiwaveError as e:
        return _fail(str(e), EXIT_CONFIG)


if __name__ == "__main__":
    sys.exit(main())
