"""Exception hierarchy."""


class ShellabError(Exception):
    """Base class for package errors."""


class DomainError(ShellabError, ValueError):
    """Invalid argument: out-of-range index, mismatched shapes, bad parameter."""


class ConfigError(ShellabError, ValueError):
    """Configuration failed schema validation; ``pointer`` locates the key."""

    def __init__(self, message, pointer=""):
        super().__init__(message)
        self.pointer = pointer


class NumericalError(ShellabError, RuntimeError):
    """A computation failed numerically (blow-up, degenerate fit, ...)."""


class BlowUpError(NumericalError):
    """Solution magnitude exceeded the blow-up guard."""


class StepSizeError(NumericalError):
    """Time step violates the stability guard for the explicit quadratic term."""


class DegenerateFitError(NumericalError):
    """Too few usable points for a regression."""
