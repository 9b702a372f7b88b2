"""Compositional stochastic saddle point algorithm (CSSPA) with baselines,
a full-batch reference solver and fairness benchmark problems."""
from ._jit import JIT_ENABLED
from .baselines import PenaltyConfig, penalty_cscgd_run, scgd_run
from .model import (AssumptionConstants, ConfigError, DomainError, FeasibleSet, ProblemInstance,
                    Schedule, alpha_at, beta_at, delta_at, theta_for_horizon)
from .oracles import Composition, DatasetOracle, StochasticOracleSet, assemble_problem
from .projections import project, project_orthant
from .quadratic import build_quadratic_problem
from .reference import (ConvergenceError, FullBatchEvaluator, ReferenceSolution, eval_constraints,
                        eval_objective, solve_reference)
from .solver import (DivergenceError, QuasiGradient, SolverState, TraceRecord,
                     assemble_quasi_gradient, run, step, update_trackers)

__version__ = "0.1.0"
