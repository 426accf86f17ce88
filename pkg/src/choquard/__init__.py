"""Equivariant critical points of magnetic Choquard functionals on periodic grids."""

from .params import ProblemParams, lambda_set, validate
from .field import Grid, PotentialPair, make_potentials
from .riesz import RieszKernel, D, riesz_convolve
from .energy import EnergyContext, J, residual
from .symmetry import SymmetrySpec, symmetrize, equivariance_defect, winding_number
from .radial import RadialMesh, RadialOperator, solve_ground_state, decay_fit
from .solver import SolveConfig, solve

__all__ = [
    "ProblemParams", "lambda_set", "validate", "Grid", "PotentialPair", "make_potentials",
    "RieszKernel", "D", "riesz_convolve", "EnergyContext", "J", "residual", "SymmetrySpec",
    "symmetrize", "equivariance_defect", "winding_number", "RadialMesh", "RadialOperator",
    "solve_ground_state", "decay_fit", "SolveConfig", "solve",
]
__version__ = "0.1.0"
