"""Custom exceptions for the mrbasset library."""


class MRBassetError(Exception):
    """Base class for all mrbasset errors."""
    pass


class ValidationError(MRBassetError):
    """Raised when a physical input quantity is invalid."""

    def __init__(self, field: str, value, message: str = None):
        self.field = field
        self.value = value
        super().__init__(message or f"Invalid value for '{field}': {value!r}")


class DomainError(MRBassetError):
    """Raised when an argument lies outside the domain of an operation."""
    pass


class OutOfDomainError(DomainError):
    """Raised when a flow field is evaluated outside its box."""

    def __init__(self, coordinate, domain=None):
        self.coordinate = coordinate
        self.domain = domain
        super().__init__(f"Position {coordinate} lies outside the flow domain {domain}")


class CapabilityError(MRBassetError):
    """Raised when an object lacks a capability an operation requires."""
    pass


class OracleError(MRBassetError):
    """Raised when a numerical oracle fails to converge."""
    pass


class StepFailureError(MRBassetError):
    """Raised when the fixed-point iteration at a node does not converge."""

    def __init__(self, node: int, message: str = None):
        self.node = node
        super().__init__(message or f"Fixed-point iteration failed at node {node}")


class BlowUpError(MRBassetError):
    """Raised when the solver state becomes non-finite."""

    def __init__(self, node: int):
        self.node = node
        super().__init__(f"Non-finite solver state at node {node}")


class ConfigurationError(MRBassetError):
    """Raised when an experiment configuration is invalid."""
    pass
