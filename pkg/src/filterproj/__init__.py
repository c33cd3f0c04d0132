"""Filter-stabilised projection solver for 2D incompressible flow on a MAC grid."""
from .filters import (FilterSpec, IndicatorKind, apply_filter, apply_G,
                      check_stability_conditions, dissipation_pair, eval_indicator)
from .grid import (CellTensorField, FaceVectorField, StaggeredGrid, make_grid,
                   random_divfree_field, random_field)
from .linsolve import SolverConfig, SolveStats, bicgstab_solve, cg_solve, dense_solve
from .operators import (advect, divergence, grad_tensor, gradient_p, h1_seminorm, hneg1_norm,
                        inner, l2_norm, var_diffusion)
from .stepper import (FlowState, StepperConfig, StepReport, advance, filter_relax_step,
                      momentum_step, projection_step, run)

__version__ = "0.1.0"
