"""Trajectory results, table export and checkpoints."""

import json
import logging
import math
from dataclasses import dataclass, fields as dataclass_fields
from pathlib import Path
from typing import Any, Dict, Optional, Union

import numpy as np
import pandas as pd

from ..exceptions import ConfigurationError, DomainError
from ..flow import FlowFactory
from ..flow.derived import DerivedFields, derived_fields
from ..params import ParticleParams
from .base import SolverConfig
from .history import HistoryBuffer

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1

_BUFFER_ARRAYS = ("w", "y", "f", "g", "sum_w", "sum_f")


@dataclass
class TrajectoryRecord:
    """One simulated particle path.

    ``tau`` is absolute scaled time and t_phys = t0 + eps tau. The memory of
    the run starts at ``origin`` (0 for a fresh run, tau1 after a restart
    that discards history); ``history`` keeps the full solver state needed
    to continue the run exactly.
    """

    tau: np.ndarray
    y: np.ndarray
    w: np.ndarray
    v: np.ndarray
    t0: float
    params: ParticleParams
    config: SolverConfig
    fields: DerivedFields
    history: HistoryBuffer
    origin: float = 0.0
    domain_exit: bool = False
    exit_tau: Optional[float] = None

    @classmethod
    def from_history(
        cls,
        history: HistoryBuffer,
        fields: DerivedFields,
        config: SolverConfig,
        origin: float = 0.0,
    ) -> "TrajectoryRecord":
        from .core import recover_particle_velocity_from

        history = history.trimmed()
        params = fields.params
        tau = origin + history.tau
        t0 = history.t0 - params.eps * origin
        exit_node = history.exit_node
        return cls(
            tau=tau,
            y=history.y.copy(),
            w=history.w.copy(),
            v=recover_particle_velocity_from(fields, history.y, history.w, t0 + params.eps * tau),
            t0=t0,
            params=params,
            config=config,
            fields=fields,
            history=history,
            origin=origin,
            domain_exit=exit_node >= 0,
            exit_tau=float(tau[exit_node]) if exit_node >= 0 else None,
        )

    def __len__(self) -> int:
        return len(self.tau)

    @property
    def step(self) -> float:
        return self.history.step

    @property
    def t_phys(self) -> np.ndarray:
        return self.t0 + self.params.eps * self.tau

    @property
    def tau_end(self) -> float:
        return float(self.tau[-1])

    @property
    def w0_norm(self) -> float:
        return float(np.linalg.norm(self.w[0]))

    def speed(self) -> np.ndarray:
        """|w| at every node."""
        return np.linalg.norm(self.w, axis=1)

    def node_index(self, tau1: float) -> int:
        """Index of the node at scaled time tau1.

        Raises:
            DomainError: If tau1 is not a node of this record
        """
        if not math.isfinite(tau1):
            raise DomainError(f"tau1 must be finite, got {tau1!r}")
        k = int(round((tau1 - self.origin) / self.step))
        if k < 0 or k >= len(self.tau) or abs(self.tau[k] - tau1) > 1e-6 * self.step:
            raise DomainError(f"tau1={tau1} is not a node of the record's grid [{self.tau[0]}, {self.tau[-1]}]")
        return k

    def to_dataframe(self, envelope=None, asymptotic_bound: Optional[float] = None) -> pd.DataFrame:
        """Tabulate the trajectory.

        Columns: tau, t_phys, y1.., w1.., abs_w, v1.., envelope, asymptotic_bound.
        Missing envelope values are left empty.
        """
        data: Dict[str, Any] = {"tau": self.tau, "t_phys": self.t_phys}
        for i in range(self.y.shape[1]):
            data[f"y{i + 1}"] = self.y[:, i]
        for i in range(self.w.shape[1]):
            data[f"w{i + 1}"] = self.w[:, i]
        data["abs_w"] = self.speed()
        for i in range(self.v.shape[1]):
            data[f"v{i + 1}"] = self.v[:, i]
        if envelope is not None:
            values = np.asarray(getattr(envelope, "values", envelope), dtype=float)
            if values.shape != self.tau.shape:
                raise DomainError(f"Envelope has {values.size} values, trajectory has {self.tau.size} nodes")
            data["envelope"] = values
        else:
            data["envelope"] = np.full(self.tau.shape, np.nan)
        data["asymptotic_bound"] = np.full(self.tau.shape, np.nan if asymptotic_bound is None else asymptotic_bound)
        return pd.DataFrame(data)

    def to_csv(self, path: Union[str, Path], envelope=None, asymptotic_bound: Optional[float] = None) -> Path:
        """Write the trajectory table; floats use the shortest round-trip representation."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_dataframe(envelope, asymptotic_bound).to_csv(path, index=False)
        logger.info(f"Wrote trajectory table {path}")
        return path

    def slice(self, tau0: float, tau1: float) -> pd.DataFrame:
        """Rows of the trajectory table with tau0 <= tau <= tau1."""
        table = self.to_dataframe()
        return table[(table["tau"] >= tau0) & (table["tau"] <= tau1)].reset_index(drop=True)

    def summary(self) -> Dict[str, Any]:
        speed = self.speed()
        return {
            "nodes": len(self.tau),
            "tau_end": self.tau_end,
            "final_abs_w": float(speed[-1]),
            "max_abs_w": float(speed.max()),
            "domain_exit": self.domain_exit,
            "exit_tau": self.exit_tau,
            "backend": self.config.backend,
        }

    def __str__(self) -> str:
        return f"Trajectory of {len(self.tau)} nodes to tau={self.tau_end:.6g}, final |w|={self.speed()[-1]:.6g}"

    def __repr__(self) -> str:
        return (
            f"TrajectoryRecord(nodes={len(self.tau)}, backend='{self.config.backend}', "
            f"R={self.params.R:.6g}, origin={self.origin}, domain_exit={self.domain_exit})"
        )


def save_checkpoint(record: TrajectoryRecord, path: Union[str, Path]) -> Path:
    """Write a compressed ``.npz`` checkpoint.

    Exact continuation needs the entire history buffer, so every stored
    node is saved, together with a JSON metadata entry holding the
    parameters, solver settings and flow description.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    history = record.history
    metadata = {
        "format_version": CHECKPOINT_VERSION,
        "params": record.params.to_dict(),
        "config": record.config.to_dict(),
        "flow": record.fields.field.describe(),
        "faxen": record.fields.faxen,
        "origin": record.origin,
        "step": history.step,
        "t0": history.t0,
        "eps": history.eps,
        "filled": history.filled,
        "exit_node": history.exit_node,
    }
    arrays = {name: getattr(history, name)[: history.filled] for name in _BUFFER_ARRAYS}
    np.savez_compressed(path, metadata=np.array(json.dumps(metadata, sort_keys=True)), **arrays)
    logger.info(f"Saved checkpoint with {history.filled} nodes to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> TrajectoryRecord:
    """Read a checkpoint written by save_checkpoint.

    Raises:
        ConfigurationError: If the file is missing or not a checkpoint of a known version
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        if "metadata" not in data.files:
            raise ConfigurationError(f"{path} is not a trajectory checkpoint")
        metadata = json.loads(str(data["metadata"]))
        arrays = {name: np.array(data[name]) for name in _BUFFER_ARRAYS}
    if metadata.get("format_version") != CHECKPOINT_VERSION:
        raise ConfigurationError(f"Unsupported checkpoint version {metadata.get('format_version')!r}")

    params = ParticleParams.from_dict(metadata["params"])
    known = {f.name for f in dataclass_fields(SolverConfig)}
    config = SolverConfig(**{k: v for k, v in metadata["config"].items() if k in known})
    field = FlowFactory.from_description(metadata["flow"])
    fields = derived_fields(field, params, faxen=bool(metadata["faxen"]))
    history = HistoryBuffer(
        step=float(metadata["step"]),
        t0=float(metadata["t0"]),
        eps=float(metadata["eps"]),
        filled=int(metadata["filled"]),
        exit_node=int(metadata["exit_node"]),
        **arrays,
    )
    logger.info(f"Loaded checkpoint with {history.filled} nodes from {path}")
    return TrajectoryRecord.from_history(history, fields, config, origin=float(metadata["origin"]))
