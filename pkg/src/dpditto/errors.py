"""Exception hierarchy shared by all modules."""


class DPDittoError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(DPDittoError, ValueError):
    pass


class InvalidPartitionError(DPDittoError, ValueError):
    pass


class InvalidBudgetError(DPDittoError, ValueError):
    pass


class InvalidAggregationError(DPDittoError, ValueError):
    pass


class UnsupportedMetricError(DPDittoError, TypeError):
    pass


class InfeasibleDesignError(DPDittoError, ValueError):
    pass


class SingularDesignError(DPDittoError, ValueError):
    pass


class InsufficientTrialsError(DPDittoError, ValueError):
    pass


class DegenerateProblemError(DPDittoError, ValueError):
    pass


class InternalConsistencyError(DPDittoError, RuntimeError):
    """A closed form left the parameter regime its derivation covers."""


class IDXFormatError(DPDittoError, ValueError):
    pass


class ConsistencyError(DPDittoError, ValueError):
    pass


class ConfigError(DPDittoError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class NumericalError(DPDittoError, FloatingPointError):
    """Non-finite value detected during training or search."""

    def __init__(self, message: str, round: int | None = None, client: int | None = None):
        self.round = round
        self.client = client
        where = []
        if round is not None:
            where.append(f"round {round}")
        if client is not None:
            where.append(f"client {client}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)
