"""Lagrangian lower bounds with supporting-hyperplane cuts for the CDT problem."""
from .bounds import (
    BOUND_NAMES, BoundReport, GapCertificate, diagnose_multiplicity, lb_dual, lb_one_cut,
    lb_one_opt, lb_two_cut, lb_two_opt, one_cut_from_dual, relative_gap, run_pipeline, upper_bound,
)
from .errors import AssumptionError, CdtError, NumericalError, ParseError, ValidationError
from .lagrangian import CutRegion, RelaxationSolution, h_value, nullspace_reduce, solve_relaxation
from .model import (
    CdtInstance, Cut, example1, lambda_hat, perturb_cut, project_to_boundary, supporting_cut,
)
from .trs import TrsProblem, TrsSolution, solve_both, trs_global, trs_local_nonglobal

__version__ = "0.1.0"
