"""
GPWPC Package

Laguerre generalized piecewise-polynomial chaos for parametric elliptic
problems with log-Laplace inputs.

Modules:
- measures: generalized Laplace / gamma laws, sampling, B_r and K integrals
- laguerre_basis: orthonormal Laguerre polynomials, Gauss rules, piecewise bases
- multiindex: multi-indices, sparsity weights, index sets Lambda(xi)
- sparse_grid: sparse interpolation I_Lambda and quadrature Q_Lambda
- pde_model: 1-D FEM model with a log-Laplace coefficient
- gpc_analysis: expansion coefficients and sparsity diagnostics
- least_squares: weighted least squares and generated quadrature
- study: convergence studies and rate fits
- load: CSV/JSON/SQL outputs and reports
"""

from .config import StudyConfig, load_config
from .gpc_analysis import best_n_term, compute_coefficients, sparsity_report, truncate_S_Lambda
from .least_squares import draw_design, fit_bochner, fit_scalar, ls_quadrature
from .load import DataLoader, emit, load_records
from .multiindex import MultiIndex, WeightConfig, build_Lambda, choose_xi_for_budget
from .pde_model import FieldSpec, Mesh, solve
from .sparse_grid import SparseInterpolant, build_grid, sparse_quadrature
from .study import StudyRecord, fit_rate, run_study

__version__ = "1.0.0"
__author__ = "GPWPC Toolkit Team"

__all__ = [
    "StudyConfig", "load_config",
    "best_n_term", "compute_coefficients", "sparsity_report", "truncate_S_Lambda",
    "draw_design", "fit_bochner", "fit_scalar", "ls_quadrature",
    "DataLoader", "emit", "load_records",
    "MultiIndex", "WeightConfig", "build_Lambda", "choose_xi_for_budget",
    "FieldSpec", "Mesh", "solve",
    "SparseInterpolant", "build_grid", "sparse_quadrature",
    "StudyRecord", "fit_rate", "run_study",
]
