"""Command handlers, one module per subcommand."""

from . import equilibria, simulate, validate, verify

COMMANDS = (validate, equilibria, simulate, verify)

__all__ = ["COMMANDS", "equilibria", "simulate", "validate", "verify"]
