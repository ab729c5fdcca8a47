"""Full-rank and PGD solvers for linearized rarefied channel flows."""

__version__ = "0.1.0"

from .discretization import DiscretizationSet, build_discretization, preset
from .errors import ConvergenceError, NearSingularError, NumericalError, OutOfRangeError
from .fullrank import (DistributionField, MacroFields, SolveReport, compute_moments, flow_rate_GP,
                       flow_rate_GT, solve_full_rank)
from .grids import (AngularGrid, DeltaGrid, VelocityGrid, build_angular_grid, build_delta_grid,
                    build_velocity_grid, equilibrium_feq)
from .mesh import (TriMesh, generate_disk_mesh, generate_square_mesh, generate_trapezoid_mesh,
                   load_mesh, save_mesh)
from .pgd import (EnrichmentReport, PGDModeSet, load_modes, pgd_enrich, pgd_enrich_parametric,
                  reconstruct_h, reconstruct_macro, save_modes)
from .postprocess import svd_amplitudes, tpd_solve
from .transport import dg_transport_solve

__all__ = [
    "AngularGrid", "ConvergenceError", "DeltaGrid", "DiscretizationSet", "DistributionField",
    "EnrichmentReport", "MacroFields", "NearSingularError", "NumericalError", "OutOfRangeError",
    "PGDModeSet", "SolveReport", "TriMesh", "VelocityGrid", "build_angular_grid",
    "build_delta_grid", "build_discretization", "build_velocity_grid", "compute_moments",
    "dg_transport_solve", "equilibrium_feq", "flow_rate_GP", "flow_rate_GT",
    "generate_disk_mesh", "generate_square_mesh", "generate_trapezoid_mesh", "load_mesh",
    "load_modes", "pgd_enrich", "pgd_enrich_parametric", "preset", "reconstruct_h",
    "reconstruct_macro", "save_mesh", "save_modes", "solve_full_rank", "svd_amplitudes",
    "tpd_solve",
]
