"""Exception hierarchy shared across the toolkit.

Data/validation problems and backend/transport problems are kept on separate
branches so callers (and the CLI exit-code mapping) can tell them apart.
"""

from __future__ import annotations


class TofkitError(Exception):
    """Base class for all toolkit errors."""


class DataError(TofkitError):
    """Invalid input data, file contents, or structural validation failure."""


class BackendError(TofkitError):
    """Remote oracle/backend failure (transport, auth, malformed response)."""


class CorpusError(DataError):
    pass


class MermaidError(DataError):
    """Mermaid text could not be parsed."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            loc = f"line {line}" + (f", col {column}" if column is not None else "")
            message = f"{loc}: {message}"
        super().__init__(message)


class UnsupportedDirectionError(MermaidError):
    pass


class InvalidFlowchartError(DataError):
    """A flowchart failed structural validation."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid flowchart: " + "; ".join(self.violations))


class InfeasibleInstanceError(DataError):
    pass


class NumericalFailureError(TofkitError):
    pass


class BudgetExceededError(TofkitError):
    pass


class PathExplosionError(TofkitError):
    pass


class LabelerError(DataError):
    def __init__(self, dialogue_id: str, cause: Exception):
        self.dialogue_id = dialogue_id
        self.cause = cause
        super().__init__(f"labeler failed on dialogue {dialogue_id!r}: {cause}")


class OracleFailureError(BackendError):
    def __init__(self, dialogue_id: str, pair_index: int, cause: Exception):
        self.dialogue_id = dialogue_id
        self.pair_index = pair_index
        self.cause = cause
        super().__init__(
            f"oracle failed on dialogue {dialogue_id!r}, pair {pair_index}: {cause}"
        )


class AuthError(BackendError):
    pass


class TransportError(BackendError):
    pass


class MalformedResponseError(BackendError):
    pass
