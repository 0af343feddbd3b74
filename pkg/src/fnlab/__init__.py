"""fnlab: a desk-scale laboratory for sup-norm estimates of fully nonlinear
cone-operator equations on flat Hermitian model geometries."""

__version__ = "0.1.0"

from .cone_ops import (ConeSpec, GammaCone, PMACone, ConeIntersection,
                       OperatorSpec, monge_ampere, hessian, pma,
                       positive_combination, sigma, in_cone, f_value,
                       f_gradient, gamma_certificate)
from .geometry import Mesh, torus_mesh, ball_mesh, chart_ball
from .fields import (ScalarField, HermitianField, EntropyReport, dd_bar,
                     endo_eigenvalues, laplacian, integrate, entropy,
                     sup_normalize, identity_metric, save_field, load_field)
from .solvers import (DirichletProblem, SolveReport, solve_periodic_fnl,
                      solve_dirichlet_cma, solve_dirichlet_rma,
                      solve_dirichlet_linear)

__all__ = [name for name in dir() if not name.startswith("_")]
