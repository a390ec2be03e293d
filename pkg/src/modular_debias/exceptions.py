"""Custom exceptions for modular-debias."""

from pathlib import Path


class ModularDebiasError(Exception):
    """Base exception for modular-debias."""


class ConfigError(ModularDebiasError):
    """Exception raised for invalid configuration or command-line usage."""


class InputFileError(ConfigError):
    """Exception raised when a required input file cannot be found."""

    def __init__(self, path: Path | str) -> None:
        """Initialize InputFileError.

        Args:
            path: The missing path

        """
        super().__init__(f"Input file not found: {path}")
        self.path = Path(path)


class DumpError(ModularDebiasError):
    """Exception raised when a knowledge-base dump cannot be read."""


class PairListError(ModularDebiasError):
    """Exception raised for counterfactual pairs that violate their invariants."""


class PairConflictError(PairListError):
    """Exception raised when pair terms map a surface string to two counterparts."""


class ProposerError(ModularDebiasError):
    """Exception raised when the pair proposer cannot be reached or answers badly."""

    def __init__(self, message: str, status_code: int | None = None) -> None:
        """Initialize ProposerError.

        Args:
            message: Error message
            status_code: HTTP status code if applicable

        """
        super().__init__(message)
        self.status_code = status_code


class ModelConfigError(ModularDebiasError):
    """Exception raised for inconsistent model, adapter or wiring configuration."""


class InputShapeError(ModularDebiasError):
    """Exception raised when tensors do not match the model's dimensions."""


class CheckpointError(ModularDebiasError):
    """Exception raised when a checkpoint archive cannot be written or restored."""


class TrainingError(ModularDebiasError):
    """Exception raised when an optimization run diverges."""

    def __init__(self, message: str, step: int, learning_rate: float) -> None:
        """Initialize TrainingError.

        Args:
            message: Error message
            step: Optimizer step at which training stopped
            learning_rate: Learning rate in effect at that step

        """
        super().__init__(f"{message} (step {step}, learning rate {learning_rate:.3e})")
        self.step = step
        self.learning_rate = learning_rate


class DatasetError(ModularDebiasError):
    """Exception raised for malformed dataset files."""

    def __init__(self, message: str, line_number: int | None = None) -> None:
        """Initialize DatasetError.

        Args:
            message: Error message
            line_number: 1-based line number of the offending row, if any

        """
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class MetricError(ModularDebiasError):
    """Exception raised when a metric's preconditions do not hold."""


class UndefinedMetricError(MetricError):
    """Exception raised when a metric is undefined for its input (e.g. one class only)."""


class ReportError(ModularDebiasError):
    """Exception raised when bias reports cannot be combined or parsed."""


class FingerprintMismatchError(ModularDebiasError):
    """Exception raised when a dataset no longer matches its recorded fingerprint."""
