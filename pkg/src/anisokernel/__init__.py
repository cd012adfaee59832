"""Nonlocal anisotropic Dirichlet problems: kernels, FE assembly, spectra,
multiplicity solves, and executable qualitative checks."""

from .assembly import (ConfigurationError, ExteriorTrace, GramMatrix,
                       QuadConfig, assemble_exterior_coupling, assemble_gram,
                       assemble_load, assemble_mass, solve_dirichlet,
                       tail_weight)
from .geometry import Domain, FeSpace, Field, build_mesh
from .kernel import (AngularDensity, KernelSpec, MultiplierQuad,
                     QuadratureFailure, check_structural_properties,
                     kernel_eval, multiplier_eval)
from .pointwise import (ClosedFormFunction, DivergenceError, PointwiseQuad,
                        lk_pointwise_pv, lk_pointwise_sd)
from .report import PropertyVerdict, SolveReport
from .spectral import EigenResult, eigenpairs, spectral_report
from .variational import (CriticalPoint, MountainPassCollapse,
                          NonlinearitySpec, functional_gradient,
                          functional_value, minimize, mountain_pass,
                          solve_three, truncate)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
