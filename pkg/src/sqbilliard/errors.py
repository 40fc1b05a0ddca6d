"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


class TruncationError(RuntimeError):
    """The truncated eigenbasis misses more norm than the declared budget.

    Attributes
    ----------
    achieved : float
        Retained norm ``sum |c|^2``.
    reference : float
        Norm of the projected function inside the box.
    suggested_n_max : tuple of int
        Per-axis cutoff that would satisfy the budget.
    """

    def __init__(self, message, achieved, reference, suggested_n_max):
        super().__init__(message)
        self.achieved = achieved
        self.reference = reference
        self.suggested_n_max = suggested_n_max


class NodeProximityError(ValueError):
    """The probability density at the requested point is below the node threshold."""

    def __init__(self, message, density, threshold):
        super().__init__(message)
        self.density = density
        self.threshold = threshold
