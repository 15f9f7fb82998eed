"""Exception hierarchy. Every numerical failure carries a stable ``code``."""


class GeometryError(Exception):
    code = "GEOMETRY_ERROR"


class ConstraintViolation(GeometryError):
    code = "CONSTRAINT_VIOLATION"


class StencilError(GeometryError):
    code = "STENCIL_ERROR"


class IntegrationError(GeometryError):
    code = "INTEGRATION_ERROR"


class UnsupportedSpace(GeometryError):
    code = "UNSUPPORTED_SPACE"


class DegenerateNeighborhood(GeometryError):
    code = "DEGENERATE_NEIGHBORHOOD"


class NotInvariant(GeometryError):
    code = "NOT_INVARIANT"


class MeshCollapse(GeometryError):
    code = "MESH_COLLAPSE"


class CFLViolation(GeometryError):
    code = "CFL_VIOLATION"


class ConfigError(ValueError):
    """Malformed scenario configuration (not a numerical failure)."""

    code = "CONFIG_ERROR"

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class AuditFailed(GeometryError):
    """The minimal-fiber hypothesis did not certify; conclusions are not tested."""

    code = "AUDIT_FAILED"
