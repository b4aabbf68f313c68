# -*- coding: utf-8 -*-

"""
Monolithic optimal control of fluid-structure interaction on fictitious
domains: mixed finite elements, one shared velocity field for fluid and
solid, and a per-step coupled state/adjoint solve for displacement- and
velocity-tracking objectives.
"""

from .mesh import (Mesh, MeshError, InvertedElementError,
                   generate_unit_square, generate_disc, load_msh, move_mesh)
from .fespace import (FESpace, FieldCoefficients, QuadratureRule, build_space,
                      eval_basis, integrate, interpolate_function, l2_norm,
                      quadrature_rule)
from .linalg import (SparseMatrix, LinearSolveError, SingularMatrixError,
                     lu_solve, spadd, sptranspose, triple_product)
from .assembly import (BlockLayout, MatrixTerm, VectorTerm, apply_dirichlet,
                       assemble_matrix, assemble_vector, dirichlet_values,
                       semi_lagrangian_history)
from .coupling import (CouplingError, InterpolationMatrix, PointLocator,
                       build_interpolation, compose_system, locate_point,
                       mixed_interpolation)
from .solvers import (BarrierInfeasibleError, BoundaryConditions, ControlSpec,
                      FlowState, FsiState, Materials, StepReport,
                      cavity_objective, load_checkpoint, make_flow_state,
                      make_fsi_state, rotation_objective, save_checkpoint,
                      oscillation_stats, step_control, step_flow_control,
                      step_forward)

__version__ = "0.1.0"
