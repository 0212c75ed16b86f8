"""Exception types shared across modules."""


class DimensionMismatch(ValueError):
    pass


class BudgetExceeded(RuntimeError):
    """Raised when an enumeration or convolution outgrows its budget.

    `partial` holds whatever was completed (for ball enumeration: the ball at
    `completed_radius`).
    """

    def __init__(self, message, partial=None, completed_radius=None):
        super().__init__(message)
        self.partial = partial
        self.completed_radius = completed_radius


class FreenessViolation(RuntimeError):
    """Two distinct reduced words gave the same matrix."""

    def __init__(self, word_a, word_b, matrix):
        super().__init__(f"words {word_a} and {word_b} both evaluate to {matrix}")
        self.words = (word_a, word_b)
        self.matrix = matrix


class ManifestError(ValueError):
    """Manifest validation failure; `path` names the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path
