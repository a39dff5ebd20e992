"""Exception hierarchy shared across the package."""


class TetMPMError(Exception):
    """Base class for all package errors."""


class ParseError(TetMPMError):
    """A mesh or scene file line could not be parsed."""


class ConfigError(TetMPMError):
    """A configuration value or key is invalid."""


class DegenerateError(TetMPMError):
    """A tetrahedron has (numerically) zero volume."""


class OutOfGridError(TetMPMError):
    """A position falls outside the representable node range of a grid."""


class NonInvertibleError(TetMPMError):
    """A deformation gradient has non-positive determinant."""


class FactorizationError(TetMPMError):
    """The implicit system matrix could not be factorized."""


class DegeneratePrimitiveError(TetMPMError):
    """A deformed contact primitive is flat or inverted."""


class EmptySupportError(TetMPMError):
    """A contact proxy vertex has no active grid node in its kernel support."""
