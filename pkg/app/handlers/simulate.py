"""simulate command: seeded trajectory ensembles written as JSONL (and optionally CSV)."""

import argparse
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from ..core import ensemble
from ..core.diffusive import DiffusiveStepConfig
from ..core.discrete import require_valid
from ..core.logger import get_logger, log_config_dict
from ..core.model import build_decomposition
from ..core.numlin import DensityMatrix, Superoperator
from ..core.serialization import (
    Trajectory,
    load_model_file,
    parse_theta0,
    to_kraus_model,
    to_lindblad_model,
    trajectory_filename,
    trajectory_header,
    write_trajectory_csv,
    write_trajectory_jsonl,
)
from ..models import KrausModelFile, RunConfig

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class PreparedRun:
    """Everything a run needs after the model file has been loaded."""

    config: RunConfig
    theta0: DensityMatrix
    runner: ensemble.TrajectoryRunner
    model_hash: str
    # L for continuous runs, T for Kraus chains
    generator: Superoperator
    jumps: Tuple[Superoperator, ...] = ()


def add_run_arguments(parser: argparse.ArgumentParser, out_required: bool):
    """Flags shared by simulate and verify."""
    parser.add_argument("--model", type=Path, required=True, help="Model file (JSON)")
    parser.add_argument("--unraveling", choices=["jump", "diffusive", "discrete"], required=True)
    parser.add_argument("--theta0", required=True, help="basis:n, plus, mixed or a JSON matrix of [re, im] pairs")
    parser.add_argument("--horizon", type=float, help="Final time (jump, diffusive)")
    parser.add_argument("--dt", type=float, help="Euler-Maruyama step (diffusive)")
    parser.add_argument("--grid-step", type=float, dest="grid_step", help="Output grid step")
    parser.add_argument("--steps", type=int, help="Number of measurements (discrete)")
    parser.add_argument("--trajectories", type=int, required=True, help="Ensemble size")
    parser.add_argument("--seed", type=int, required=True, help="64-bit run seed")
    parser.add_argument("--out", type=Path, required=out_required, help="Output directory")
    parser.add_argument("--workers", type=int, default=None, help="Worker processes")
    parser.add_argument("--csv", action="store_true", help="Also write per-trajectory CSV")


def register(subparsers: argparse._SubParsersAction):
    """Add the simulate subcommand."""
    parser = subparsers.add_parser("simulate", help="Simulate a seeded trajectory ensemble")
    add_run_arguments(parser, out_required=True)
    parser.set_defaults(handler=handle)


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Validated run configuration from parsed flags."""
    fields = {
        name: getattr(args, name)
        for name in ("model", "unraveling", "theta0", "horizon", "dt", "grid_step", "steps",
                     "trajectories", "seed", "out", "workers", "csv")
        if getattr(args, name, None) is not None
    }
    return RunConfig(**fields)


def prepare_run(config: RunConfig) -> PreparedRun:
    """Load the model, parse the initial state and build the per-trajectory runner."""
    schema, digest = load_model_file(config.model)
    logger.debug(f"Model {log_config_dict(schema.to_dict())}, run {config.echo()}")
    theta0 = parse_theta0(config.theta0, schema.dim)

    if isinstance(schema, KrausModelFile):
        if config.unraveling != "discrete":
            raise ValueError(f"A Kraus model only supports the discrete unraveling, not {config.unraveling}")
        kraus = require_valid(to_kraus_model(schema))
        runner = ensemble.discrete_runner(kraus, theta0, config.steps)
        return PreparedRun(config, theta0, runner, digest, kraus.channel())

    if config.unraveling == "discrete":
        raise ValueError("The discrete unraveling needs a Kraus model file")
    model, choice = to_lindblad_model(schema)
    decomposition = build_decomposition(model, choice)
    if config.unraveling == "jump":
        runner = ensemble.jump_runner(decomposition, theta0, config.horizon, config.grid_step)
    else:
        step_config = DiffusiveStepConfig(dt=config.dt, grid_step=config.grid_step)
        runner = ensemble.diffusive_runner(model, theta0, config.horizon, step_config)
    return PreparedRun(config, theta0, runner, digest, decomposition.generator, decomposition.jumps)


async def run_prepared(prepared: PreparedRun) -> List[Trajectory]:
    """Run the configured ensemble."""
    config = prepared.config
    return await ensemble.run_ensemble(prepared.runner, config.trajectories, config.seed, config.workers)


def write_outputs(prepared: PreparedRun, trajectories: Sequence[Trajectory], out: Optional[Path] = None) -> List[Path]:
    """One JSONL file per trajectory, plus CSV when requested."""
    config = prepared.config
    out = out or config.out
    echo = config.echo()
    written = []
    for index, trajectory in enumerate(trajectories):
        header = trajectory_header(echo, prepared.model_hash, index, config.seed)
        written.append(write_trajectory_jsonl(out / trajectory_filename(index), header, trajectory))
        if config.csv:
            written.append(write_trajectory_csv(out / trajectory_filename(index, "csv"), trajectory))
    logger.info(f"Wrote {len(written)} files to {out}")
    return written


async def handle(args: argparse.Namespace) -> int:
    """Simulate and write trajectory files."""
    config = config_from_args(args)
    prepared = prepare_run(config)
    trajectories = await run_prepared(prepared)
    write_outputs(prepared, trajectories)
    return 0
