"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Array shapes do not line up."""


class NumericError(ArithmeticError):
    """A non-finite value appeared during a numeric computation.

    ``layer`` is the index of the layer where it was first seen, when known.
    """

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer
