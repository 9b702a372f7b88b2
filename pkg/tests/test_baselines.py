import numpy as np
import pytest

from csspa.baselines import PenaltyConfig, penalty_cscgd_run, scgd_run
from csspa.fair_spam import SpamSyntheticSpec, build_spam_problem, generate_spam_synthetic
from csspa.model import ConfigError, DomainError, Schedule
from csspa.quadratic import build_quadratic_problem
from csspa.reference import FullBatchEvaluator
from csspa.solver import run


def test_scgd_unconstrained_minimum():
    problem = build_quadratic_problem(noise_std=0.0, constrained=False)
    x_hat, trace = scgd_run(problem, Schedule(horizon=10 ** 4), init={"x1": [3.0]})
    assert abs(x_hat[0]) <= 0.05
    assert all(r.lambda_norm is None for r in trace)


def test_scgd_rejects_constraints(quad):
    with pytest.raises(DomainError):
        scgd_run(quad, Schedule(horizon=10))


def test_scgd_matches_csspa_without_constraints():
    sched = Schedule(horizon=5000, delta_scale=0.0)
    a = build_quadratic_problem(noise_std=0.2, constrained=False, seed=3)
    b = build_quadratic_problem(noise_std=0.2, constrained=False, seed=3)
    x_a, _, tr_a = run(a, sched, trace_stride=1)
    x_b, tr_b = scgd_run(b, sched, trace_stride=1)
    assert x_a.tobytes() == x_b.tobytes()
    assert [r.t for r in tr_a] == [r.t for r in tr_b]


def test_scgd_decreases_spam_objective():
    data = generate_spam_synthetic(SpamSyntheticSpec(n_points=200, d_features=5))
    problem = build_spam_problem(data, constrained=False)
    ev = FullBatchEvaluator.from_problem(problem)
    x_hat, _ = scgd_run(problem, Schedule(horizon=20000, alpha0=0.01))
    assert ev.objective_value(x_hat) <= ev.objective_value(np.zeros(problem.n))


def test_penalty_config_validation():
    with pytest.raises(ConfigError):
        PenaltyConfig(horizon=10, penalty_weight=0.0)
    with pytest.raises(ConfigError):
        PenaltyConfig(horizon=10, penalty_form="cubic")
    with pytest.raises(ConfigError):
        penalty_cscgd_run(build_quadratic_problem(), Schedule(horizon=10))
    assert PenaltyConfig(horizon=5).to_dict()["penalty_form"] == "squared_hinge"


def test_penalty_bias_and_weight():
    # penalized minimiser of x^2 + rho (1 - x)_+^2 is rho / (rho + 1)
    cfg = PenaltyConfig(horizon=10 ** 5, penalty_weight=10.0)
    x10, trace = penalty_cscgd_run(build_quadratic_problem(seed=0), cfg)
    assert abs(x10[0] - 1.0) <= 0.2
    assert all(r.lambda_norm is None for r in trace)
    # a stiff penalty needs alpha * 2 rho < 1 to avoid bouncing between the box walls
    big = PenaltyConfig(horizon=10 ** 5, alpha0=1e-5, penalty_weight=1e4)
    x_big, _ = penalty_cscgd_run(build_quadratic_problem(seed=0), big)
    assert abs(x_big[0] - 1.0) < abs(x10[0] - 1.0)


def test_penalty_hinge_form_runs(quad):
    x_hat, _ = penalty_cscgd_run(quad.with_seed(1),
                                 PenaltyConfig(horizon=20000, penalty_weight=5.0, penalty_form="hinge"))
    assert abs(x_hat[0] - 1.0) < 0.3


def test_penalty_reduces_violation_from_infeasible_start(quad):
    ev = FullBatchEvaluator.from_problem(quad)
    x_hat, _ = penalty_cscgd_run(quad.with_seed(2), PenaltyConfig(horizon=20000),
                                 init={"x1": [-5.0]})
    assert ev.max_violation(x_hat) < ev.max_violation([-5.0])
