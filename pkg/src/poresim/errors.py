class PoresimError(ValueError):
    """Base class for all library errors."""


class InvalidInputError(PoresimError):
    pass


class InvalidParameterError(PoresimError):
    pass


class OutOfRangeError(PoresimError):
    pass


class UnsatisfiableTargetError(PoresimError):
    """Requested area ratio cannot be reached inside the warp circle."""


class StrengthRangeError(PoresimError):
    """Solved warp strength falls outside the monotone domain (-3, 1)."""

    def __init__(self, message, admissible=None):
        super().__init__(message)
        self.admissible = admissible
