"""shellab: a spectral laboratory for GOY/Sabra shell models of turbulence.

Simulates the viscous small-noise dynamics and the inviscid controlled
(skeleton) equation at finite truncation, minimises the quadratic control
energy that governs small-noise event probabilities, and checks the operator
identities and vanishing-viscosity limits numerically.
"""

__version__ = "0.1.0"

from .backend import KERNEL_BACKEND
from .spectral import (
    GOY,
    SABRA,
    ModelParams,
    ShellState,
    bilinear_B,
    enstrophy_b,
    identity_report,
    inner_h,
    norm_alpha,
    norm_ladder,
    wavenumber,
)

__all__ = [
    "GOY",
    "SABRA",
    "KERNEL_BACKEND",
    "ModelParams",
    "ShellState",
    "bilinear_B",
    "enstrophy_b",
    "identity_report",
    "inner_h",
    "norm_alpha",
    "norm_ladder",
    "wavenumber",
    "__version__",
]
