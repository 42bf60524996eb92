"""Exception hierarchy shared by all engine modules."""

from __future__ import annotations


class FaultEngineError(Exception):
    """Base class for data errors raised by the engine."""


class TopologyError(FaultEngineError, ValueError):
    """Malformed topology document or invalid graph structure."""


class CycleError(TopologyError):
    """Raised by operations that require an acyclic dependency graph."""

    def __init__(self, cycle: list[str]):
        self.cycle = list(cycle)
        super().__init__("dependency graph has a directed cycle: " + " -> ".join(self.cycle + self.cycle[:1]))


class LogFormatError(FaultEngineError, ValueError):
    """Malformed alarm log, poll snapshot or report file."""


class InsufficientDataError(FaultEngineError, ValueError):
    """Not enough observations to estimate a quantity."""


class DegenerateSampleError(FaultEngineError, ValueError):
    """All samples identical; the Weibull shape MLE diverges."""


class ConvergenceError(FaultEngineError, RuntimeError):
    """An iterative estimator failed to converge."""


class UnexplainedAlarmError(FaultEngineError, ValueError):
    """No suspect can explain an alarming device (zero Bayes denominator)."""

    def __init__(self, device: str):
        self.device = device
        super().__init__(f"no suspect with positive marginal explains alarming device {device!r}")


class ConfigError(FaultEngineError, ValueError):
    """Invalid simulator or pipeline configuration."""
