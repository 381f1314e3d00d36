"""equilibria command: mean projector, equilibrium basis and spectral gap."""

import argparse
from pathlib import Path

import numpy as np

from ..core.discrete import require_valid
from ..core.ergodic import discrete_mean_projector, equilibrium_basis, mean_projector
from ..core.logger import get_logger
from ..core.model import build_decomposition
from ..core.serialization import load_model_file, to_kraus_model, to_lindblad_model
from ..models import EquilibriumSummary, KrausModelFile
from ..models.model_file import complex_matrix_to_pairs

logger = get_logger(__name__)


def register(subparsers: argparse._SubParsersAction):
    """Add the equilibria subcommand."""
    parser = subparsers.add_parser("equilibria", help="Print the equilibrium space of a model")
    parser.add_argument("model", type=Path, help="Model file (JSON)")
    parser.set_defaults(handler=handle)


def summarize_equilibria(path: Path) -> EquilibriumSummary:
    """Compute P by both methods, report their agreement and the equilibrium basis."""
    schema, _ = load_model_file(path)
    if isinstance(schema, KrausModelFile):
        channel = require_valid(to_kraus_model(schema)).channel()
        primary = discrete_mean_projector(channel, "spectral")
        secondary = discrete_mean_projector(channel, "cesaro")
        kind = "kraus"
    else:
        model, choice = to_lindblad_model(schema)
        generator = build_decomposition(model, choice).generator
        primary = mean_projector(generator, "spectral")
        secondary = mean_projector(generator, "quadrature")
        kind = "lindblad"

    agreement = float(np.max(np.abs(primary.projector.matrix - secondary.projector.matrix)))
    space = equilibrium_basis(primary)
    logger.info(f"Equilibrium space of dimension {space.dimension}, method agreement {agreement:.3e}")
    return EquilibriumSummary(
        model_kind=kind,
        unique=space.unique,
        dimension=space.dimension,
        states=[complex_matrix_to_pairs(state.matrix) for state in space.states],
        method=primary.method,
        spectral_gap=primary.spectral_gap,
        idempotence_residual=primary.idempotence_residual,
        invariance_residual=primary.invariance_residual,
        method_agreement=agreement,
    )


async def handle(args: argparse.Namespace) -> int:
    """Print the equilibrium summary as JSON."""
    print(summarize_equilibria(args.model).model_dump_json(indent=2))
    return 0
