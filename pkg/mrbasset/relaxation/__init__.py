"""Fractional relaxation kernels and their oracles."""

from .kernel import (
    BACKENDS,
    KernelTable,
    RelaxationKernel,
    grid_step,
    laplace_transform,
    mittag_leffler_half,
    mittag_leffler_half_asymptotic,
    phi,
    phi_asymptotic,
    psi,
    psi_asymptotic,
    psi_grid,
    uniform_grid,
)
from .oracles import inverse_laplace_oracle, voigt_functions, voigt_oracle

__all__ = [
    "BACKENDS",
    "KernelTable",
    "RelaxationKernel",
    "grid_step",
    "inverse_laplace_oracle",
    "laplace_transform",
    "mittag_leffler_half",
    "mittag_leffler_half_asymptotic",
    "phi",
    "phi_asymptotic",
    "psi",
    "psi_asymptotic",
    "psi_grid",
    "uniform_grid",
    "voigt_functions",
    "voigt_oracle",
]
