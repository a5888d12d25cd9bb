# mrbasset/config.py

import configparser
import hashlib
import io
import logging
import math
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Tuple, Union

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)


class InternalConfig:
    # Internal numerical defaults (not exposed through the experiment file)

    # Talbot inversion
    talbot_nodes = 32
    talbot_rtol = 1e-8  # agreement required between N and 2N nodes
    talbot_atol = 1e-15
    talbot_roundoff_factor = 10.0  # multiple of the estimated round-off also accepted
    talbot_min_kappa = 0.1  # below this the near-cut peak of the transform defeats the contour

    # Voigt-function quadrature
    voigt_half_width = 12.0  # integration window [-w, w] after the Gaussian substitution
    voigt_epsabs = 1e-15
    voigt_epsrel = 1e-12
    voigt_limit = 400
    voigt_kappa_margin = 0.05  # warn within this distance of kappa = 0 or kappa = 2

    # Gauss-Legendre order for per-interval kernel moments
    gauss_order = 8

    # Bound estimation
    bounds_grid = (801, 401, 128)
    bounds_refinement_tol = 0.01
    bounds_matrix_norm = "frobenius"

    # Fixed-point closure at the new node
    picard_tol = 1e-10
    picard_max_iters = 50
    max_nodes = 500_000

    # Positions within this distance of the box count as inside
    domain_slack = 1e-12

    threads_env_var = "MRBASSET_THREADS"

    # Relative |w| spread below which an ensemble counts as position independent
    position_spread_tol = 0.05


@dataclass(frozen=True)
class FlowSection:
    name: str = "double_gyre"
    amplitude: float = 0.1
    omega: float = math.pi
    alpha: float = 0.01


@dataclass(frozen=True)
class ParticlesSection:
    R: Tuple[float, ...] = (2.0 / 3.0, 1.0 / 3.0, 1.0)
    st_factor: float = 0.01  # St = st_factor * R, i.e. mu = 1 / st_factor
    reynolds: float = 1.0
    gravity: Tuple[float, ...] = (0.0, 0.0)


@dataclass(frozen=True)
class EnsembleSection:
    box: Tuple[float, ...] = (0.2, 1.8, 0.2, 0.8)
    nx: int = 5
    ny: int = 3
    w0: Tuple[float, ...] = (10.0, 10.0)
    t0: float = 0.0


@dataclass(frozen=True)
class SolverSection:
    backend: str = "fractional_direct"
    dt: float = 5e-3
    tau_end: float = 1000.0
    picard_tol: float = InternalConfig.picard_tol
    picard_max_iters: int = InternalConfig.picard_max_iters
    faxen: bool = False
    max_nodes: int = InternalConfig.max_nodes


@dataclass(frozen=True)
class EnvelopeSection:
    tol: float = 1e-6
    omit_eps2: bool = True
    slope_window: Tuple[float, ...] = (100.0, 1000.0)
    fig4_R: Tuple[float, ...] = (0.1, 1.0 / 3.0, 2.0 / 3.0, 1.0, 1.9)
    fig4_dt: float = 1e-2
    fig4_tau_end: float = 1000.0
    plateau_tau: float = 1e6


@dataclass(frozen=True)
class BoundsSection:
    nx: int = InternalConfig.bounds_grid[0]
    ny: int = InternalConfig.bounds_grid[1]
    nt: int = InternalConfig.bounds_grid[2]
    refinement_tol: float = InternalConfig.bounds_refinement_tol
    matrix_norm: str = InternalConfig.bounds_matrix_norm


@dataclass(frozen=True)
class RestartSection:
    R: float = 1.0
    tau1: float = 5.0
    horizon: float = 5.0
    chain_tau_end: float = 20.0


@dataclass(frozen=True)
class RelaxationSection:
    kappas: Tuple[float, ...] = (0.5, 1.0, 1.5, 2.0, 2.5)
    tau_min: float = 1e-3
    tau_max: float = 1e3
    points: int = 200


@dataclass(frozen=True)
class VerifySection:
    frozen_kappas: Tuple[float, ...] = (0.5, math.sqrt(3.0), 2.0, 2.5)
    frozen_dt: float = 1e-3
    frozen_tau_end: float = 20.0
    convergence_dts: Tuple[float, ...] = (0.02, 0.01, 0.005)
    agreement_tau_end: float = 100.0


@dataclass(frozen=True)
class OutputSection:
    directory: str = "results"
    seed: int = 0
    threads: int = 1
    curve_stride: int = 20
    trajectory_stride: int = 10


_SECTIONS = {
    "flow": FlowSection,
    "particles": ParticlesSection,
    "ensemble": EnsembleSection,
    "solver": SolverSection,
    "envelope": EnvelopeSection,
    "bounds": BoundsSection,
    "restart": RestartSection,
    "relaxation": RelaxationSection,
    "verify": VerifySection,
    "output": OutputSection,
}

# Keys that never change results and are left out of the config hash
_NON_SEMANTIC = {("output", "directory"), ("output", "threads")}


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete description of an experiment run, stored as an INI file."""

    flow: FlowSection = field(default_factory=FlowSection)
    particles: ParticlesSection = field(default_factory=ParticlesSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    solver: SolverSection = field(default_factory=SolverSection)
    envelope: EnvelopeSection = field(default_factory=EnvelopeSection)
    bounds: BoundsSection = field(default_factory=BoundsSection)
    restart: RestartSection = field(default_factory=RestartSection)
    relaxation: RelaxationSection = field(default_factory=RelaxationSection)
    verify: VerifySection = field(default_factory=VerifySection)
    output: OutputSection = field(default_factory=OutputSection)

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        """Parse INI text, rejecting unknown sections and keys.

        Args:
            text: INI formatted configuration

        Returns:
            Parsed configuration; missing keys keep their defaults

        Raises:
            ConfigurationError: If a section, key or value is invalid
        """
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str  # keys are case sensitive ("R")
        try:
            parser.read_string(text)
        except configparser.Error as e:
            raise ConfigurationError(f"Unreadable configuration: {e}") from e

        sections: Dict[str, Any] = {}
        for name in parser.sections():
            if name not in _SECTIONS:
                raise ConfigurationError(f"Unknown section [{name}]")
            section_cls = _SECTIONS[name]
            defaults = section_cls()
            known = {f.name: f for f in fields(section_cls)}
            values = {}
            for key, raw in parser.items(name):
                if key not in known:
                    raise ConfigurationError(f"Unknown key '{key}' in section [{name}]")
                values[key] = _parse_value(name, key, raw, getattr(defaults, key))
            sections[name] = section_cls(**values)

        config = cls(**sections)
        config.validate()
        return config

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
        """Load a configuration file."""
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"Configuration file not found: {path}")
        logger.info(f"Loading experiment configuration from {path}")
        return cls.from_text(path.read_text(encoding="utf-8"))

    def to_text(self, semantic_only: bool = False) -> str:
        """Serialize to canonical INI text."""
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        for name in _SECTIONS:
            section = getattr(self, name)
            parser.add_section(name)
            for f in fields(section):
                if semantic_only and (name, f.name) in _NON_SEMANTIC:
                    continue
                parser.set(name, f.name, _format_value(getattr(section, f.name)))
        buffer = io.StringIO()
        parser.write(buffer)
        return buffer.getvalue()

    def dump(self, path: Union[str, Path]) -> Path:
        """Write the configuration file."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_text(), encoding="utf-8")
        return path

    def config_hash(self) -> str:
        """SHA-256 of the semantic part of the configuration."""
        return hashlib.sha256(self.to_text(semantic_only=True).encode("utf-8")).hexdigest()

    def with_section(self, name: str, **changes) -> "ExperimentConfig":
        """Return a copy with some keys of one section replaced."""
        if name not in _SECTIONS:
            raise ConfigurationError(f"Unknown section [{name}]")
        return replace(self, **{name: replace(getattr(self, name), **changes)})

    def validate(self) -> None:
        """Check cross-field consistency.

        Raises:
            ConfigurationError: If the configuration cannot describe a run
        """
        if len(self.ensemble.box) != 4:
            raise ConfigurationError("ensemble.box needs four numbers: x0, x1, y0, y1")
        x0, x1, y0, y1 = self.ensemble.box
        if not (x0 <= x1 and y0 <= y1):
            raise ConfigurationError(f"ensemble.box is not ordered: {self.ensemble.box}")
        if self.ensemble.nx < 1 or self.ensemble.ny < 1:
            raise ConfigurationError("ensemble.nx and ensemble.ny must be positive")
        if len(self.ensemble.w0) != len(self.particles.gravity):
            raise ConfigurationError("ensemble.w0 and particles.gravity must have the same dimension")
        if self.solver.backend not in ("fractional_direct", "mild_volterra"):
            raise ConfigurationError(f"Unknown solver backend: {self.solver.backend}")
        if self.solver.dt <= 0 or self.solver.tau_end < self.solver.dt:
            raise ConfigurationError("solver.dt must be positive and not exceed solver.tau_end")
        if self.solver.picard_tol <= 0 or self.solver.picard_max_iters < 1:
            raise ConfigurationError("solver.picard_tol and solver.picard_max_iters must be positive")
        if len(self.envelope.slope_window) != 2:
            raise ConfigurationError("envelope.slope_window needs two numbers")
        if self.bounds.matrix_norm not in ("frobenius", "spectral"):
            raise ConfigurationError(f"Unknown matrix norm: {self.bounds.matrix_norm}")
        if len(self.verify.convergence_dts) < 3:
            raise ConfigurationError("verify.convergence_dts needs at least three steps")
        if self.output.curve_stride < 1 or self.output.trajectory_stride < 1:
            raise ConfigurationError("output strides must be at least 1")
        if self.output.threads < 1:
            raise ConfigurationError("output.threads must be at least 1")
        if any(r <= 0 or r >= 2 for r in self.particles.R + self.envelope.fig4_R + (self.restart.R,)):
            raise ConfigurationError("Density ratios R must lie in (0, 2)")


def _parse_value(section: str, key: str, raw: str, default: Any) -> Any:
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = raw.lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return _parse_number(raw)
        if isinstance(default, tuple):
            if not raw:
                return ()
            return tuple(_parse_number(item) for item in raw.split(","))
        return raw
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigurationError(f"Invalid value for {section}.{key}: {raw!r}") from e


def _parse_number(text: str) -> float:
    text = text.strip()
    if text.lower() == "pi":
        return math.pi
    if "/" in text:
        return float(Fraction(text))
    return float(text)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)
