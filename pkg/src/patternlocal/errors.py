"""Exception types raised across the package."""


class PatternLocalError(Exception):
    """Base class for all package errors."""


class InvalidInputError(PatternLocalError, ValueError):
    """Input array has the wrong shape, is empty or holds non-finite values."""


class InvalidParameterError(PatternLocalError, ValueError):
    """A configuration value is outside its admissible range."""


class DegenerateWeightsError(PatternLocalError, ValueError):
    """Sample weights sum to zero (or are otherwise unusable)."""


class SingularSystemError(PatternLocalError, ArithmeticError):
    """A linear system that must be solved exactly is rank deficient."""

    def __init__(self, message, rank=None, size=None):
        super().__init__(message)
        self.rank = rank
        self.size = size


class DegenerateNeighborhoodError(DegenerateWeightsError):
    """No training point falls inside the support of a compact kernel."""

    def __init__(self, message, nearest_distance=None):
        super().__init__(message)
        self.nearest_distance = nearest_distance


class DegenerateResponseError(PatternLocalError, ArithmeticError):
    """The surrogate response has zero variance and no regularization."""


class GenerationError(PatternLocalError, RuntimeError):
    """Synthetic data could not be generated within the retry budget."""

    def __init__(self, message, retries=None):
        super().__init__(message)
        self.retries = retries


class UnsupportedOperationError(PatternLocalError, TypeError):
    """Operation not defined for this kind of object."""


class ModelGradientError(PatternLocalError, ArithmeticError):
    """A model produced a non-finite output or gradient."""


class TrainingError(PatternLocalError, RuntimeError):
    """Training diverged."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class StudyError(PatternLocalError, RuntimeError):
    """A hyperparameter study produced no usable trial."""


class ConfigError(PatternLocalError, ValueError):
    """Experiment configuration is malformed."""
