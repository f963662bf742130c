"""Exception hierarchy shared by every fedsim module."""


class FedSimError(Exception):
    """Base class for all simulator errors."""


class ConfigError(FedSimError, ValueError):
    """Invalid configuration, argument or data shape."""


class NumericError(FedSimError, ArithmeticError):
    """Non-finite values or loss of precision beyond tolerance."""


class AggregationError(FedSimError, ValueError):
    """Aggregation coefficients outside their admissible range."""


class IngestionError(FedSimError, ValueError):
    """Malformed IDX input."""


class SchedulerError(FedSimError, RuntimeError):
    """Channel protocol violation."""


class StalenessError(FedSimError, ValueError):
    """Staleness weight requested for a zero iteration gap."""


class SolverError(FedSimError, ValueError):
    """The aggregation-coefficient recursion has no admissible solution."""


class ReportError(FedSimError, ValueError):
    """Metrics files cannot be compared."""


class SimulationComplete(FedSimError):
    """Raised when the event queue is exhausted."""
