"""Mean curvature flow of submanifolds across Riemannian submersions."""

from .errors import GeometryError
from .spaces import AmbientSpace, Kind, TangentVector

__version__ = "0.1.0"

__all__ = ["AmbientSpace", "GeometryError", "Kind", "TangentVector"]
