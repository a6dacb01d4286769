"""Exception hierarchy.

Each category maps to a distinct CLI exit code (see ``asindy.cli``).
"""


class AsindyError(Exception):
    exit_code = 1


class DomainError(AsindyError, ValueError):
    """Input outside the domain of an operation (non-finite, out of range)."""

    exit_code = 2


class ConfigError(AsindyError, ValueError):
    exit_code = 2


class DataError(AsindyError, ValueError):
    """Logged data unusable for the requested computation."""

    exit_code = 3


class SolverError(AsindyError):
    exit_code = 4


class ConstraintError(SolverError):
    pass


class ModelLoadError(AsindyError):
    exit_code = 3


class SimulationDivergence(AsindyError):
    """Non-finite or out-of-envelope vehicle state."""

    exit_code = 5

    def __init__(self, message, step_index=None):
        super().__init__(message)
        self.step_index = step_index


class AdaptationDivergence(SimulationDivergence):
    pass
