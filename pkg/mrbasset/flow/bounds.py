"""Empirical bound constants L_A, L_B, L_M and L_c of the derived fields."""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..config import InternalConfig
from ..exceptions import DomainError
from ..utils.parallel import ordered_map
from .derived import DerivedFields

logger = logging.getLogger(__name__)

MATRIX_NORMS = ("frobenius", "spectral")

_KEYS = ("L_A", "L_B", "L_M", "L_c")


@dataclass(frozen=True)
class FieldBounds:
    """Sup-norm bounds of the derived fields and a Lipschitz estimate.

    Attributes:
        L_A, L_B: max |A_u|, max |B_u|
        L_M: max matrix norm of M_u (see matrix_norm)
        L_c: max norm of the spatial gradients of A_u, B_u, M_u; None if unknown
        grid: (nx, ny, nt) sampling resolution, (0, 0, 0) for given constants
        faxen: whether the Faxen corrections were included
        R: density ratio the fields were built for
        matrix_norm: frobenius or spectral
        refinement_delta: largest relative change against the half-resolution grid
        coarse: the same constants on the half-resolution grid
        warnings: advisory messages attached during estimation
    """

    L_A: float
    L_B: float
    L_M: float
    L_c: Optional[float] = None
    grid: Tuple[int, int, int] = (0, 0, 0)
    faxen: bool = False
    R: float = math.nan
    matrix_norm: str = InternalConfig.bounds_matrix_norm
    refinement_delta: float = 0.0
    coarse: Dict[str, float] = field(default_factory=dict)
    warnings: Tuple[str, ...] = ()

    def __post_init__(self):
        for name in _KEYS:
            value = getattr(self, name)
            if value is None and name == "L_c":
                continue
            if not (math.isfinite(value) and value >= 0.0):
                raise DomainError(f"{name} must be non-negative and finite, got {value!r}")

    @classmethod
    def given(
        cls, L_A: float, L_B: float, L_M: float, L_c: Optional[float] = None, R: float = math.nan
    ) -> "FieldBounds":
        """Bounds supplied directly instead of sampled."""
        return cls(L_A=L_A, L_B=L_B, L_M=L_M, L_c=L_c, R=R)

    @property
    def sampled(self) -> bool:
        return self.grid != (0, 0, 0)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["grid"] = list(self.grid)
        data["warnings"] = list(self.warnings)
        return data


def matrix_norm(M: np.ndarray, kind: str = "frobenius") -> np.ndarray:
    """Norm of the trailing (n, n) matrices of M.

    ``spectral`` is the largest singular value; for 2x2 matrices it is
    evaluated in closed form from the Frobenius norm and the determinant.
    """
    M = np.asarray(M, dtype=float)
    if kind == "frobenius":
        return np.sqrt(np.sum(M * M, axis=(-2, -1)))
    if kind != "spectral":
        raise DomainError(f"Unknown matrix norm: {kind}")
    if M.shape[-2:] == (2, 2):
        frob2 = np.sum(M * M, axis=(-2, -1))
        det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
        disc = np.sqrt(np.maximum(frob2 * frob2 - 4.0 * det * det, 0.0))
        return np.sqrt(0.5 * (frob2 + disc))
    return np.linalg.norm(M, ord=2, axis=(-2, -1))


def _slice_stats(A, B, M, dx, dy, norm: str) -> Dict[str, float]:
    stats = {
        "L_A": float(np.max(np.linalg.norm(A, axis=-1))),
        "L_B": float(np.max(np.linalg.norm(B, axis=-1))),
        "L_M": float(np.max(matrix_norm(M, norm))),
    }
    if A.shape[0] < 2 or A.shape[1] < 2:
        stats["L_c"] = 0.0
        return stats
    lipschitz = 0.0
    for values in (A, B, M):
        d_dy, d_dx = np.gradient(values, dy, dx, axis=(0, 1))
        # Frobenius norm of the full derivative tensor
        size = np.sqrt(np.sum(d_dx * d_dx + d_dy * d_dy, axis=tuple(range(2, values.ndim))))
        lipschitz = max(lipschitz, float(np.max(size)))
    stats["L_c"] = lipschitz
    return stats


def estimate_bounds(
    fields: DerivedFields,
    grid: Optional[Tuple[int, int, int]] = None,
    horizon: Optional[float] = None,
    t_start: float = 0.0,
    refinement_tol: Optional[float] = None,
    norm: Optional[str] = None,
    workers: int = 1,
    show_progress: Optional[bool] = None,
) -> FieldBounds:
    """Sample the derived fields over the domain and one period (or a horizon).

    The fine grid has nx x ny points on the domain box and nt time slices;
    the refinement companion is the nested grid made of every second point
    and every second slice, so its maxima never exceed the fine ones.

    Args:
        fields: derived fields of a two-dimensional flow
        grid: (nx, ny, nt); odd nx, ny keep the companion grid nested on the box edges
        horizon: time window for aperiodic fields
        t_start: first sampled time
        refinement_tol: relative change above which a warning is attached
        norm: matrix norm for L_M
        workers: threads sampling time slices
        show_progress: tqdm progress bar

    Returns:
        FieldBounds

    Raises:
        DomainError: If the field has no period and no horizon is given, has no
            bounding box while varying in space, or the grid is too small
    """
    nx, ny, nt = grid or InternalConfig.bounds_grid
    refinement_tol = InternalConfig.bounds_refinement_tol if refinement_tol is None else refinement_tol
    norm = norm or InternalConfig.bounds_matrix_norm
    if norm not in MATRIX_NORMS:
        raise DomainError(f"Unknown matrix norm: {norm}")
    if nx < 3 or ny < 3 or nt < 2:
        raise DomainError(f"Bound grid must be at least 3 x 3 x 2, got {(nx, ny, nt)}")

    period = fields.field.period
    if period is not None:
        times = t_start + period * np.arange(nt) / nt
    elif horizon is not None and horizon > 0:
        times = t_start + np.linspace(0.0, horizon, nt)
    else:
        raise DomainError("Bound estimation needs a periodic field or a finite time horizon")

    domain = fields.field.domain
    if domain is None:
        if not fields.uniform:
            raise DomainError("Bound estimation needs a bounded domain for spatially varying fields")
        xs = ys = np.zeros(1)
    else:
        if domain.dimension != 2:
            raise DomainError("Bound estimation samples two-dimensional boxes only")
        xs = np.linspace(domain.lower[0], domain.upper[0], nx)
        ys = np.linspace(domain.lower[1], domain.upper[1], ny)
    dx = xs[1] - xs[0] if xs.size > 1 else 1.0
    dy = ys[1] - ys[0] if ys.size > 1 else 1.0
    X, Y = np.meshgrid(xs, ys)
    points = np.stack([X, Y], axis=-1) if domain is not None else np.zeros((1, 1, fields.dimension))

    def one_slice(k: int) -> Tuple[Dict[str, float], Optional[Dict[str, float]]]:
        sample = fields.evaluate(points, times[k], strict=False)
        fine = _slice_stats(sample.A, sample.B, sample.M, dx, dy, norm)
        if k % 2:
            return fine, None
        sub = (slice(None, None, 2), slice(None, None, 2))
        coarse = _slice_stats(sample.A[sub], sample.B[sub], sample.M[sub], 2 * dx, 2 * dy, norm)
        return fine, coarse

    logger.info(f"Estimating field bounds on a {nx} x {ny} x {nt} grid ({norm} norm, faxen={fields.faxen})")
    results = ordered_map(one_slice, range(nt), workers=workers, desc="bounds", show_progress=show_progress)

    fine = {key: max(r[0][key] for r in results) for key in _KEYS}
    coarse = {key: max(r[1][key] for r in results if r[1] is not None) for key in _KEYS}

    delta = 0.0
    for key in _KEYS:
        if fine[key] > 0.0:
            delta = max(delta, abs(fine[key] - coarse[key]) / fine[key])
    warnings = []
    if delta > refinement_tol:
        message = f"Bound refinement delta {delta:.3g} exceeds tolerance {refinement_tol:.3g}"
        logger.warning(message)
        warnings.append(message)

    bounds = FieldBounds(
        L_A=fine["L_A"],
        L_B=fine["L_B"],
        L_M=fine["L_M"],
        L_c=fine["L_c"],
        grid=(int(nx), int(ny), int(nt)),
        faxen=fields.faxen,
        R=fields.params.R,
        matrix_norm=norm,
        refinement_delta=delta,
        coarse=coarse,
        warnings=tuple(warnings),
    )
    logger.info(
        f"Bounds for R={fields.params.R:.6g}: L_A={bounds.L_A:.6g}, L_B={bounds.L_B:.6g}, "
        f"L_M={bounds.L_M:.6g}, L_c={bounds.L_c:.6g}"
    )
    return bounds
