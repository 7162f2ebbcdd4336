"""
Exception types raised across the toolkit.

Every error the CLI is expected to report cleanly derives from ChemoreactError.
"""
from typing import Optional


class ChemoreactError(Exception):
    """Base class for expected, reportable failures."""


class RegimeError(ChemoreactError, ValueError):
    """Parameters fall outside the admitted regime."""


class ConfigurationError(ChemoreactError, ValueError):
    """Bad config file, unknown key, or unusable grid."""


class DomainError(ChemoreactError, ValueError):
    """Argument outside the domain of a formula."""


class ResolutionError(ChemoreactError, ValueError):
    """Discretization too coarse for the requested accuracy."""


class InputError(ChemoreactError, ValueError):
    """Input data violates a precondition (membership, sandwich, grid match)."""


class FitError(ChemoreactError, ValueError):
    """Not enough usable points to fit."""


class CFLError(ChemoreactError, ValueError):
    """Time step exceeds the stability limit."""

    def __init__(self, message: str, suggested_dt: float):
        super().__init__(f"{message} (suggested dt <= {suggested_dt:.6g})")
        self.suggested_dt = suggested_dt


class SimulationError(ChemoreactError, RuntimeError):
    """A run produced invalid numbers and was aborted."""

    def __init__(self, message: str, dump_path: Optional[str] = None):
        if dump_path:
            message = f"{message} (state dumped to {dump_path})"
        super().__init__(message)
        self.dump_path = dump_path
