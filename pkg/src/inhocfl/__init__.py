"""Explanation-guided (in-hoc) federated learning for slice CPU allocation."""

from .errors import NumericError, ShapeError

__version__ = "0.1.0"

__all__ = ["NumericError", "ShapeError", "__version__"]
