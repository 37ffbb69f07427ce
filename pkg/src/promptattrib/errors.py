"""Exception types shared across the package."""


class PromptAttribError(Exception):
    """Base class for all package errors."""


class DataFormatError(PromptAttribError):
    """A data file failed to parse or violated a schema constraint."""


class ConfigError(PromptAttribError):
    """A run configuration is missing, malformed, or out of range."""


class BudgetError(PromptAttribError):
    """A token budget is too small for the requested rendering."""

    def __init__(self, message: str, required_minimum: int | None = None):
        super().__init__(message)
        self.required_minimum = required_minimum


class VerbalizerError(PromptAttribError):
    """Label word sets could not be resolved against the vocabulary."""


class BackendError(PromptAttribError):
    """A backend forward pass or checkpoint was rejected."""


class TrainingError(PromptAttribError):
    """Training aborted (bad inputs or divergence)."""
