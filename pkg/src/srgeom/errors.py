"""Exception types shared across the toolkit."""


class GeometryError(Exception):
    """Base class for all srgeom errors."""


class ExprSyntaxError(GeometryError):
    """Malformed expression source.

    Attributes
    ----------
    offset : int
        Byte offset into the source where parsing failed.
    expected : str
        Human-readable hint of what the parser expected.
    """

    def __init__(self, message, offset, expected=""):
        self.offset = offset
        self.expected = expected
        hint = f" (expected {expected})" if expected else ""
        super().__init__(f"{message} at offset {offset}{hint}")


class UnknownVariable(GeometryError):
    def __init__(self, name, offset=-1):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown variable {name!r} at offset {offset}")


class DomainError(GeometryError):
    """Evaluation left the real domain (division by zero, sqrt of a
    negative, log of a non-positive, ...).  Carries the byte offset of the
    offending AST node when it originated from parsed source."""

    def __init__(self, message, offset=-1):
        self.offset = offset
        super().__init__(f"{message} (node offset {offset})")


class SingularFrame(GeometryError):
    """Frame matrix is numerically singular at the evaluation point."""


class GradingViolation(GeometryError):
    def __init__(self, message, triple=None):
        self.triple = triple
        super().__init__(message)


class JacobiViolation(GeometryError):
    def __init__(self, message, triple=None):
        self.triple = triple
        super().__init__(message)


class NotHorizontal(GeometryError):
    """A vector expected to lie in the horizontal bundle does not."""


class ZeroGradient(GeometryError):
    """The defining function has (numerically) vanishing full gradient, so
    the hypersurface is not smooth/embedded at this point."""


class NotOnSurface(GeometryError):
    """Point is too far from the zero level set for the requested query."""


class CharacteristicPoint(GeometryError):
    """Operation requires a noncharacteristic point."""


class ExtensionFailure(GeometryError):
    """Could not build a smooth local extension (degenerate orthogonalization)."""


class NotCarnot(GeometryError):
    """Operation is only valid on manifolds certified as Carnot groups."""


class NotTangent(GeometryError):
    """Supplied field is not tangent to the hypersurface at the point."""


class NewtonDivergence(GeometryError):
    """Newton projection onto the surface failed to converge."""


class StepFailure(GeometryError):
    """Curve integration failed (frame degenerated or constraints violated)."""

    def __init__(self, message, time=None):
        self.time = time
        suffix = f" at t={time}" if time is not None else ""
        super().__init__(message + suffix)


class CharacteristicEncounter(GeometryError):
    """Curve integration reached a (near-)characteristic point."""

    def __init__(self, message, point=None, time=None):
        self.point = point
        self.time = time
        super().__init__(message)


class NearOrigin(GeometryError):
    """Ratio invariant undefined: |x| too small along the curve."""


class ConfigError(GeometryError):
    """Bad manifold/hypersurface configuration file."""
