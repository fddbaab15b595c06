"""Exception types shared across the package."""


class SuperTransportError(Exception):
    """Base class for all library errors."""


class DimensionError(SuperTransportError):
    """Operands live over different algebras or incompatible shapes."""


class ParityError(SuperTransportError):
    """A value violates its declared Z/2 grading."""


class CapabilityError(SuperTransportError):
    """A derivative oracle cannot supply the requested order."""


class ResolutionError(SuperTransportError):
    """A grid is too coarse for the requested operation."""


class DomainError(SuperTransportError):
    """Evaluation or integration left the admissible window."""


class DegreeError(SuperTransportError):
    """A form degree exceeds the chart dimension."""


class CompatibilityError(SuperTransportError):
    """Two paths fail the overlap condition required for gluing."""


class OrientationError(SuperTransportError):
    """A reparametrization is not strictly increasing."""


class UnderdeterminedError(SuperTransportError):
    """A probe set does not span the directions needed for recovery."""


class ConfigError(SuperTransportError):
    """A run configuration failed schema validation."""
