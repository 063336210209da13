"""Exception taxonomy.

Every failure the library raises deliberately derives from GridGraphError so
callers can distinguish our diagnostics from genuine bugs. Budget exhaustion is
not an error anywhere; long-running operations report it as a termination
reason and return their best state.
"""
from __future__ import annotations


class GridGraphError(Exception):
    """Base class for all errors raised by this package."""


class GraphStructureError(GridGraphError):
    """Malformed graph input or program: dangling endpoints, self-loops,
    undeclared attributes, dimension mismatches."""


class CaseParseError(GridGraphError):
    """Case text could not be parsed. Carries the 1-based line number (and
    column where meaningful) of the offending token."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.line = line
        self.column = column


class CaseNotFoundError(GridGraphError):
    """Named case is neither a readable file nor a bundled case."""


class ModelError(GridGraphError):
    """Electrically invalid model: no slack, several slacks in one island,
    isolated buses, branch endpoints that do not exist."""


class ConditioningError(GridGraphError):
    """Numerically hopeless input for the requested operation: zero series
    impedance at assembly, x = 0 in the reactance-only coefficient build,
    singular Newton Jacobian."""


class NotSpdError(GridGraphError):
    """Coefficient operator is not symmetric positive definite (detected via
    a nonpositive curvature p'Ap during conjugate-gradient iteration)."""


class DivergenceError(GridGraphError):
    """Iteration is blowing up: voltage magnitude collapsed below 1e-6 or the
    residual grew by more than 1e3x its initial value."""
