"""Exception types.  Each carries the CLI exit code it maps to."""
from __future__ import annotations


class ChemolabError(Exception):
    exit_code = 1


class ConfigError(ChemolabError, ValueError):
    exit_code = 1


class BlowupError(ChemolabError, FloatingPointError):
    """Non-finite or runaway values during time stepping."""

    exit_code = 2

    def __init__(self, message: str, time: float | None = None, epsilon: float | None = None):
        self.time = time
        self.epsilon = epsilon
        parts = [message]
        if time is not None:
            parts.append(f"t={time:.6g}")
        if epsilon is not None:
            parts.append(f"eps={epsilon:.6g}")
        super().__init__(" ".join(parts))


class CFLError(BlowupError):
    pass


class PositivityError(BlowupError):
    """Chemical concentration fell below the admissible floor."""


class StructureError(ChemolabError, ValueError):
    """Input field lacks a structural property the operation needs (e.g. zero curl)."""

    exit_code = 3


class ConsistencyError(StructureError):
    pass


class InvariantViolation(ChemolabError):
    exit_code = 3


class DegenerateFitError(ChemolabError, ValueError):
    exit_code = 3


class SnapshotFormatError(ChemolabError, IOError):
    exit_code = 4
