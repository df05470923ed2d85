"""Exception hierarchy shared across the package."""


class FalsifyError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(FalsifyError, ValueError):
    """An argument lies outside its documented domain."""


class ConfigError(FalsifyError, ValueError):
    """A campaign or scenario configuration is invalid."""


class CycleError(ConfigError):
    """A rulebook edge set contains a cycle."""

    def __init__(self, cycle: list[int]):
        self.cycle = list(cycle)
        path = " -> ".join(str(i) for i in self.cycle)
        super().__init__(f"rulebook edges contain a cycle: {path}")


class StateError(FalsifyError, RuntimeError):
    """An operation was called on an object in the wrong state."""


class SpecError(FalsifyError, ValueError):
    """A monitor specification references unknown agents or metrics."""
