"""Multiscale FEM-BEM contact of rough interfaces."""

from .errors import (ContactSolverError, CorrectionError, FembemError, FitError, MeshError,
                     NonConvergenceError, ParameterError, SurfaceFormatError, SurfaceShapeError)
from .rough_surface import (RoughSurface, SurfaceStats, composite_topography, generate_rmd,
                            read_surface_xyz, surface_stats, write_surface_xyz)
from .micro_bem import (CompositeElastic, ContactSolver, composite_moduli, corrected_pressure,
                        flat_punch_alpha, shape_factor, solve_normal_contact,
                        subtract_elastic_curve)
from .macro_fem import ConstitutiveResponse, MacroModel, newton_solve
from .scale_coupling import (CouplingState, PowerLawFit, cqn_response, fit_power_law,
                             offline_sample_curve, qn_response, san_response)
from .bench import BenchmarkConfig, run_alpha_table, run_benchmark, run_offline_fit

__version__ = "0.1.0"
