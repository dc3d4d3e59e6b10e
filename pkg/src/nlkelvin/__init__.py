"""Nonlocal optimal design of scalar diffusion via two-point fluxes."""

from .design import DesignResult, kappa_subproblem, optimize_design, verify_saddle
from .geometry import Domain, Mesh, PairList, build_mesh, build_pairs
from .kernel import KernelFamily, KernelSpec, check_normalization, kernel_value, sphere_moment
from .local import LocalGrid, divergence_residual, optimize_local_design, solve_local
from .material import AveragingScheme, Bounds, DesignField, check_admissible, pair_conductivity
from .operators import NonlocalOperators, build_operators
from .solvers import (SourceField, StateSolution, assemble_stiffness, infsup_constant, make_source,
                      poincare_constant, solve_kelvin, solve_kelvin_kkt, solve_primal, stability_ratio)

__version__ = "0.1.0"
