"""validate command: structural checks of a model file."""

import argparse
from pathlib import Path

import numpy as np

from ..core.discrete import validate_kraus
from ..core.logger import get_logger
from ..core.model import ModelValidationError, model_checks
from ..core.serialization import load_model_file, to_kraus_model, to_lindblad_model
from ..models import CheckResult, KrausModelFile, ValidationReport

logger = get_logger(__name__)


def register(subparsers: argparse._SubParsersAction):
    """Add the validate subcommand."""
    parser = subparsers.add_parser("validate", help="Check model invariants")
    parser.add_argument("model", type=Path, help="Model file (JSON)")
    parser.set_defaults(handler=handle)


def validate_model(path: Path) -> ValidationReport:
    """Run every structural check on a Lindblad or Kraus model file."""
    schema, _ = load_model_file(path)

    if isinstance(schema, KrausModelFile):
        result = validate_kraus(to_kraus_model(schema))
        check = CheckResult(
            name="kraus_completeness",
            passed=result.ok,
            deviation=result.max_deviation,
            tolerance=result.tolerance,
        )
        return ValidationReport(model_path=str(path), model_kind="kraus", passed=result.ok, checks=[check])

    try:
        model, choice = to_lindblad_model(schema)
    except ModelValidationError as e:
        deviation = e.deviation if np.isfinite(e.deviation) else None
        check = CheckResult(name=e.invariant, passed=False, deviation=deviation)
        return ValidationReport(model_path=str(path), model_kind="lindblad", passed=False, checks=[check], error=str(e))

    checks = [
        CheckResult(name=c.name, passed=c.passed, deviation=c.deviation, tolerance=c.tolerance)
        for c in model_checks(model, choice)
    ]
    return ValidationReport(
        model_path=str(path),
        model_kind="lindblad",
        passed=all(c.passed for c in checks),
        checks=checks,
    )


async def handle(args: argparse.Namespace) -> int:
    """Print the validation report; exit 1 on any failed check."""
    report = validate_model(args.model)
    for check in report.checks:
        if not check.passed:
            logger.warning(f"Check failed: {check.name} (deviation {check.deviation})")
    print(report.model_dump_json(indent=2))
    return 0 if report.passed else 1
