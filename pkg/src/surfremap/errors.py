"""Exception types raised across the package."""


class SurfremapError(Exception):
    """Base class for all package errors."""


class ConfigError(SurfremapError):
    """Invalid configuration or command arguments."""


class DimensionMismatchError(SurfremapError):
    """Array shapes do not agree with the operation's contract."""


class NonFiniteError(SurfremapError):
    """Input contains NaN or infinite entries."""


class SingularMatrixError(SurfremapError):
    """A triangular factor has an exactly zero diagonal entry."""


class DegenerateNormalError(SurfremapError):
    """Normal vector too short to define a tangent frame."""


class InsufficientStencilError(SurfremapError):
    """The mesh cannot supply the minimum number of stencil points."""


class MissingFieldContextError(SurfremapError):
    """Data-dependent weights were requested without field context."""


class ElementNotFoundError(SurfremapError):
    """No element of the mesh contains the query point."""


class OpenMeshError(SurfremapError):
    """Operation requires a closed (watertight) mesh."""


class NotOnSphereError(SurfremapError):
    """Point is not on the unit sphere within tolerance."""


class NonPositiveError(SurfremapError):
    """Quantity required to be strictly positive is not."""
