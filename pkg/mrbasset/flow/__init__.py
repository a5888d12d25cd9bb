"""Velocity fields, derived forcing terms and their bound constants."""

from typing import Any, Dict, List

from ..config import FlowSection
from ..exceptions import ConfigurationError
from .base import Domain, FlowField, FlowSample
from .bounds import MATRIX_NORMS, FieldBounds, estimate_bounds, matrix_norm
from .derived import DerivedFields, DerivedSample, derived_fields, uniform_forcing
from .double_gyre import DoubleGyre
from .simple import QuiescentFlow, UniformAcceleration


def eval_double_gyre(p: DoubleGyre, x, t, order: int = 3, strict: bool = True) -> FlowSample:
    """Velocity and every derivative block of the double gyre at (x, t)."""
    return p.evaluate(x, t, order=order, strict=strict)


class FlowFactory:
    """Factory for creating flow fields by configuration name."""

    @staticmethod
    def create_flow(name: str = "double_gyre", **params) -> FlowField:
        """Create a flow field.

        Args:
            name: double_gyre, quiescent or uniform_acceleration
            **params: constructor arguments of the chosen field

        Returns:
            FlowField instance

        Raises:
            ConfigurationError: If the name is unknown
        """
        key = name.lower()
        if key == "double_gyre":
            return DoubleGyre(**params)
        elif key == "quiescent":
            return QuiescentFlow(**params)
        elif key == "uniform_acceleration":
            return UniformAcceleration(**params)
        else:
            raise ConfigurationError(f"Unsupported flow field: {name}")

    @staticmethod
    def from_section(section: FlowSection) -> FlowField:
        """Create the flow described by a [flow] config section."""
        if section.name.lower() == "double_gyre":
            return DoubleGyre(A=section.amplitude, omega=section.omega, alpha=section.alpha)
        return FlowFactory.create_flow(section.name)

    @staticmethod
    def from_description(description: Dict[str, Any]) -> FlowField:
        """Rebuild a field from the dictionary its ``describe()`` returned."""
        data = dict(description)
        name = str(data.pop("name", ""))
        if name == "double_gyre":
            return DoubleGyre(A=data["amplitude"], omega=data["omega"], alpha=data["alpha"])
        elif name == "quiescent":
            return QuiescentFlow(dimension=int(data.get("dimension", 2)))
        elif name == "uniform_acceleration":
            return UniformAcceleration(tuple(data["acceleration"]))
        raise ConfigurationError(f"Cannot rebuild flow field from {description!r}")

    @staticmethod
    def get_available_flows() -> List[str]:
        return ["double_gyre", "quiescent", "uniform_acceleration"]


__all__ = [
    "Domain",
    "FlowField",
    "FlowSample",
    "DoubleGyre",
    "QuiescentFlow",
    "UniformAcceleration",
    "DerivedFields",
    "DerivedSample",
    "derived_fields",
    "uniform_forcing",
    "FieldBounds",
    "MATRIX_NORMS",
    "estimate_bounds",
    "matrix_norm",
    "eval_double_gyre",
    "FlowFactory",
]
