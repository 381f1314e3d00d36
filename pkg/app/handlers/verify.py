"""verify command: run an ensemble and test it against the ergodic theorems."""

import argparse
from pathlib import Path
from typing import Optional

from ..core.ergodic import discrete_mean_projector, ergodic_report, mean_projector
from ..core.logger import get_logger
from ..models import EquilibriumReport, RunConfig, VerificationThresholds
from .simulate import add_run_arguments, config_from_args, prepare_run, run_prepared

logger = get_logger(__name__)

CONTINUOUS_METHODS = ("spectral", "quadrature")
DISCRETE_METHODS = ("spectral", "cesaro")


def register(subparsers: argparse._SubParsersAction):
    """Add the verify subcommand."""
    parser = subparsers.add_parser("verify", help="Verify ergodic properties on a simulated ensemble")
    add_run_arguments(parser, out_required=False)
    parser.add_argument("--thresholds", type=Path, help="Thresholds file (JSON)")
    parser.add_argument("--method", choices=["spectral", "quadrature", "cesaro"], default="spectral",
                        help="Mean projector method (cesaro for discrete runs, quadrature for continuous ones)")
    parser.set_defaults(handler=handle)


def load_thresholds(path: Optional[Path]) -> VerificationThresholds:
    """Thresholds from a JSON file, or the defaults."""
    if path is None:
        return VerificationThresholds()
    return VerificationThresholds.model_validate_json(path.read_text(encoding="utf-8"))


def check_method(method: str, config: RunConfig) -> str:
    """The projector method, if it applies to the run's unraveling."""
    allowed = DISCRETE_METHODS if config.unraveling == "discrete" else CONTINUOUS_METHODS
    if method not in allowed:
        raise ValueError(f"Projector method {method} does not apply to the {config.unraveling} unraveling; use one of {allowed}")
    return method


async def handle(args: argparse.Namespace) -> int:
    """Print the report as JSON; exit 1 unless every thresholded statistic passes."""
    thresholds = load_thresholds(args.thresholds)
    config = config_from_args(args)
    method = check_method(args.method, config)
    prepared = prepare_run(config)
    trajectories = await run_prepared(prepared)

    if config.unraveling == "discrete":
        projector = discrete_mean_projector(prepared.generator, method)
    else:
        projector = mean_projector(prepared.generator, method)

    report: EquilibriumReport = ergodic_report(
        trajectories, projector, prepared.theta0, thresholds,
        generator=prepared.generator, jumps=prepared.jumps,
    )
    text = report.model_dump_json(indent=2)
    if config.out is not None:
        config.out.mkdir(parents=True, exist_ok=True)
        (config.out / "report.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    if not report.passed:
        logger.warning(f"Verification failed: {[s.name for s in report.failures()]}")
    return 0 if report.passed else 1
