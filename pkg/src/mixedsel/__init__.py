"""Sparse linear mixed-effects models: likelihood, penalties, solvers and model selection."""
from mixedsel.errors import (DegenerateSample, FactorizationFailure, InvalidPenaltyParams, InvalidSpec,
                             MixedSelError, NewtonSingular, ParseError, SchemaError, SingularDesign)
from mixedsel.likelihood import (assemble_omega, beta_gls, evaluate, fisher_gamma, grad, hessian_beta,
                                 hessian_cross, hessian_gamma, lipschitz_bound, nll)
from mixedsel.problem import GroupBlock, LMEProblem, Params
from mixedsel.regularizers import (CAD, L1, SCAD, ALasso, BlockRegularizer, L0Ball, NoPenalty, adaptive_weights,
                                   penalty_value, prox_block, prox_l0_topk, prox_scalar, prox_scalar_boxed)
from mixedsel.solvers import FitResult, SolverConfig, get_solver, msr3_fast_fit, msr3_fit, pgd_fit
from mixedsel.selection import (AIC, BIC, InfoCriterion, SelectionReport, Support, info_criterion, l0_path,
                                lambda_path, refit_best, select_model, support_metrics)
from mixedsel.simulation import SyntheticSpec, generate
from mixedsel.data_io import read_csv, write_csv, write_report_json

__version__ = "0.1.0"
