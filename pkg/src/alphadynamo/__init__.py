"""Alpha-effect dynamo instability: spectral fields, alpha tensor, Bloch eigenproblem, MHD runs."""

from .alpha import (AlphaTensor, CorrectorSolver, alpha2, alpha_direct, alpha_series,
                    apply_script_a, auto_rm, critical_rm, decompose, solve_corrector,
                    spectral_radius, working_rm)
from .bloch import BlochOperator, assemble, convergence_sweep, eigensolve_near, kernel_check
from .config import TOL, Tolerances
from .errors import DynamoError, NumericalError, ValidationError
from .evolution import (MhdState, estimate_rho, linearized_rhs, make_big_torus,
                        nonlinear_rhs, run_instability, step)
from .fields import (FourierVectorField, TorusSpec, cross_convolve, curl, divergence,
                     inv_laplacian, laplacian, leray_project, mean, norm_hs, norm_l2)
from .large_scale import (LargeScaleMode, a_xi, diagonalize_sym, find_xi, in_cone,
                          lambda_pm, predict_mode)
from .perturbation import PerturbationPlan, build_v, choose_deltas, perturb, truncate_flow, vfields
from .pipeline import PipelineConfig, presets, run_pipeline

__version__ = "0.1.0"
