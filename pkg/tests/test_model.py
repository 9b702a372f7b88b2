import math

import numpy as np
import pytest

from csspa.model import (AssumptionConstants, ConfigError, DomainError, FeasibleSet, Schedule,
                         alpha_at, beta_at, delta_at, theta_for_horizon)


def five_terms(alpha, beta, t, T):
    """Independent evaluation of the delta_t lower bound from plain callables."""
    a_t, a_n, a_T = alpha(t), alpha(t + 1), alpha(T)
    b_t, b_n = beta(t), beta(t + 1)
    terms = [a_t / b_t, a_t ** 2 / (a_n * b_n), a_t ** 2 / (a_T * b_n), 1 / a_n - 1 / a_t, a_t]
    return sum(terms) / a_t


class TestAlphaBeta:
    def test_alpha_examples(self):
        assert alpha_at(Schedule(horizon=10), 4) == pytest.approx(0.353553, abs=1e-6)
        assert alpha_at(Schedule(horizon=10), 1) == 1.0
        s = Schedule(horizon=16, alpha0=0.5, beta0=1.0, mode="constant_in_t")
        assert all(alpha_at(s, t) == pytest.approx(0.0625) for t in range(1, 17))

    def test_beta_examples(self):
        assert beta_at(Schedule(horizon=10), 4) == 0.5
        assert beta_at(Schedule(horizon=10), 1) == 1.0
        with pytest.raises(ConfigError):
            beta_at(Schedule(horizon=10, beta0=2.0, alpha0=1.0), 1)

    @pytest.mark.parametrize("t", [0, 11, 2.5])
    def test_out_of_range_t(self, t):
        s = Schedule(horizon=10)
        for fn in (alpha_at, beta_at, delta_at):
            with pytest.raises(DomainError):
                fn(s, t)

    def test_monotone_and_ordered(self):
        for mode in ("per_iteration", "constant_in_t"):
            alpha, beta, _ = Schedule(horizon=500, alpha0=0.7, a=0.8, b=0.4, mode=mode).arrays()
            assert np.all(np.diff(alpha) <= 0) and np.all(np.diff(beta) <= 0)
            assert np.all(alpha <= beta)


class TestDelta:
    def test_single_step_value(self):
        # hand evaluation: 1 + 2^1.25 + 2^0.5 + (2^0.75 - 1) + 1
        expected = 1 + 2 ** 1.25 + 2 ** 0.5 + (2 ** 0.75 - 1) + 1
        assert expected == pytest.approx(6.4744, abs=5e-5)
        assert delta_at(Schedule(horizon=1), 1) == pytest.approx(expected, rel=1e-14)

    def test_independent_evaluation(self):
        s = Schedule(horizon=4, a=0.5, b=0.5)
        value = five_terms(lambda t: t ** -0.5, lambda t: t ** -0.5, 2, 4)
        assert delta_at(s, 2) == pytest.approx(value, rel=1e-14)
        assert value == pytest.approx(7.434513, abs=1e-6)

    def test_equality_every_t(self):
        s = Schedule(horizon=50, alpha0=0.3, a=0.75, beta0=0.9, b=0.5)
        for t in range(1, 51):
            ref = five_terms(lambda u: 0.3 * u ** -0.75, lambda u: 0.9 * u ** -0.5, t, 50)
            assert delta_at(s, t) == pytest.approx(ref, rel=1e-13)

    def test_constant_mode_and_scale(self):
        s = Schedule(horizon=9, mode="constant_in_t", delta_scale=0.25)
        ref = five_terms(lambda u: 9 ** -0.75, lambda u: 9 ** -0.5, 3, 9)
        assert delta_at(s, 3) == pytest.approx(0.25 * ref, rel=1e-14)

    def test_zero_scale(self):
        s = Schedule(horizon=20, delta_scale=0.0)
        assert all(delta_at(s, t) == 0.0 for t in range(1, 21))


class TestScheduleValidation:
    def test_a_below_b_rejected(self):
        with pytest.raises(ConfigError, match="a ≥ b"):
            Schedule(horizon=10, a=0.4, b=0.6)

    @pytest.mark.parametrize("kw", [{"horizon": 0}, {"horizon": 2.5}, {"alpha0": 0},
                                    {"a": 1.0}, {"b": 0.0}, {"mode": "weird"},
                                    {"delta_scale": -1}])
    def test_bad_fields(self, kw):
        with pytest.raises(ConfigError):
            Schedule(**{"horizon": 10, **kw})

    def test_validate_catches_alpha_above_beta(self):
        with pytest.raises(ConfigError, match="alpha_t > beta_t"):
            Schedule(horizon=10, alpha0=2.0, beta0=1.0).validate()
        with pytest.raises(ConfigError, match="beta_t exceeds 1"):
            Schedule(horizon=10, alpha0=1.0, beta0=1.5).validate()


def test_theta_policy():
    assert theta_for_horizon(0.1, 10 ** 4) == pytest.approx(0.01)
    assert theta_for_horizon(0.0, 123) == 0.0
    with pytest.raises(ConfigError):
        theta_for_horizon(-1.0, 10)


class TestFeasibleSet:
    def test_box_requires_order(self):
        with pytest.raises(ConfigError):
            FeasibleSet.box([1.0, 0.0], [0.0, 1.0])

    def test_ball_requires_positive_radius(self):
        with pytest.raises(ConfigError):
            FeasibleSet.l2_ball([0.0], 0.0)

    def test_contains(self):
        box = FeasibleSet.box(-1, 1, dim=3)
        assert box.contains([0.5, -1, 1]) and not box.contains([1.1, 0, 0])
        ball = FeasibleSet.l2_ball([0, 0], 1.0)
        assert ball.contains([0.6, 0.8]) and not ball.contains([1, 1])
        assert FeasibleSet.nonneg_orthant(2).contains([0, 3])

    def test_problem_dimension_checks(self, quad):
        from dataclasses import replace
        with pytest.raises(ConfigError):
            replace(quad, tightening=-0.1)
        with pytest.raises(ConfigError):
            replace(quad, feasible_set=FeasibleSet.box(-1, 1, dim=2))


def test_assumption_constants():
    c = AssumptionConstants(C_f=1.0, C_g=4.0, D_x=2.0, sigma0=0.5)
    assert c.tightening_cost_bound(0.1) == pytest.approx(0.1 * 2 * math.sqrt(4) * 2 / 0.5)
    assert c.dual_norm_bound(2) == pytest.approx(2 * math.sqrt(8) * 2 / 0.5)
    with pytest.raises(ConfigError):
        AssumptionConstants(C_f=-1.0)
    with pytest.raises(ConfigError, match="missing"):
        AssumptionConstants(C_f=1.0).violation_factor()
