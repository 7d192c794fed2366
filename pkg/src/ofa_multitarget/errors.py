"""Exception hierarchy shared by every module."""

from __future__ import annotations


class ConfigurationError(ValueError):
    """Malformed design space, experiment config, or CLI invocation."""


class InvalidConfigError(ValueError):
    """An architecture value is not a member of its choice list."""


class IncompatibleParentsError(ValueError):
    """Crossover parents belong to different design spaces."""


class SpaceTooLargeError(ValueError):
    """Exhaustive enumeration requested for a space above the cap."""


class IncompleteTableError(LookupError):
    """The latency table has no entry for an active block."""

    def __init__(self, descriptor: tuple) -> None:
        self.descriptor = descriptor
        super().__init__(
            "latency table has no entry for block "
            "(unit=%s, slot=%s, kernel=%s, expand=%s, resolution=%s)" % descriptor
        )


class SearchError(RuntimeError):
    """Base class for failures raised while searching."""


class InfeasibleTargetError(SearchError):
    """No config can meet the latency target."""

    def __init__(self, target_ms: float, min_latency_ms: float) -> None:
        self.target_ms = target_ms
        self.min_latency_ms = min_latency_ms
        super().__init__(
            f"latency target {target_ms:g} ms is below the minimal config "
            f"latency {min_latency_ms!r} ms"
        )


class ConstraintTooTightError(SearchError):
    """A candidate kept failing the latency constraint past max_reject."""


class WarmStartError(ValueError):
    """A warm-start seed violates the target it is injected into."""
