"""Comparator solvers.

``scgd_run`` is two-timescale stochastic compositional gradient descent for
problems without constraints.  ``penalty_cscgd_run`` runs the same descent on
F + sum_j rho * penalty(L_j + theta), with the constraint composition tracked
by w exactly as in CSSPA; no dual variable is kept.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import ConfigError, DomainError, ProblemInstance, Schedule
from .solver import (DivergenceError, _Records, _resolve_init, build_trace, fused_run,
                     RUN_CHUNK)

PENALTY_FORMS = {"squared_hinge": kernels.MODE_PENALTY_SQUARED, "hinge": kernels.MODE_PENALTY_HINGE}


@dataclass(frozen=True)
class PenaltyConfig(Schedule):
    """A :class:`Schedule` plus the penalty weight rho and its shape.

    ``squared_hinge`` adds rho * max(0, L_j + theta)^2, ``hinge`` adds
    rho * max(0, L_j + theta).  ``delta_scale`` is unused.
    """

    penalty_weight: float = 10.0
    penalty_form: str = "squared_hinge"

    def __post_init__(self):
        super().__post_init__()
        if not self.penalty_weight > 0:
            raise ConfigError("penalty_weight must be > 0")
        if self.penalty_form not in PENALTY_FORMS:
            raise ConfigError(f"penalty_form must be one of {sorted(PENALTY_FORMS)}")

    def to_dict(self):
        out = super().to_dict()
        out.update(penalty_weight=self.penalty_weight, penalty_form=self.penalty_form)
        return out


def scgd_fused(problem: ProblemInstance, schedule: Schedule, state, trace_stride: int):
    """Advance ``state`` in place to t = T + 1 with the compiled SCGD loop.

    Returns the raw per-record arrays, like :func:`~csspa.solver.fused_run`.
    """
    if trace_stride < 1:
        raise ConfigError("trace_stride must be >= 1")
    T = schedule.horizon
    alphas, betas, _ = schedule.arrays()
    oracles = problem.oracles
    obj = oracles.objective
    fs_args = problem.feasible_set.kernel_args()
    rec = _Records.allocate(state.t, T, trace_stride, problem.n, problem.m, 1)
    rec_pos = np.zeros(1, dtype=np.int64)
    status = np.zeros(2, dtype=np.int64)
    t = state.t
    while t <= T:
        count = min(RUN_CHUNK, T - t + 1)
        (r_xi, n_xi), (r_ze, n_ze), _, _ = oracles.take(count)
        sl = slice(t - 1, t - 1 + count)
        kernels.scgd_loop(obj.inner, obj.outer, obj.data, obj.params,
                          state.x, state.y, state.x_sum, t, T, alphas[sl], betas[sl],
                          *fs_args, r_xi, n_xi, r_ze, n_ze,
                          trace_stride, rec_pos, rec.t, rec.xbar, rec.x, rec.y, status)
        if status[0] != kernels.OK:
            raise DivergenceError(kernels.STATUS_NAMES[int(status[0])], int(status[1]))
        t += count
    state.t = T + 1
    return rec


def scgd_run(problem: ProblemInstance, schedule: Schedule, init=None, trace_stride: int = 100,
             evaluator=None, f_star=None):
    """SCGD on an unconstrained compositional problem; returns (x_hat, trace).

    Consumes the xi and zeta streams exactly like CSSPA does, so with a shared
    seed the iterates agree with a J = 0 CSSPA run bit for bit.
    """
    if problem.J != 0:
        raise DomainError(f"scgd_run needs an unconstrained problem (J = 0), got J = {problem.J}")
    schedule.validate()
    state = _resolve_init(problem, init)
    rec = scgd_fused(problem, schedule, state, trace_stride)
    trace = build_trace(problem, schedule, rec, evaluator, f_star, has_dual=False, has_w=False)
    return rec.xbar[-1].copy(), trace


def penalty_cscgd_run(problem: ProblemInstance, penalty_config: PenaltyConfig, init=None,
                      trace_stride: int = 100, evaluator=None, f_star=None):
    """Penalty-reformulation comparator; returns (x_hat, trace)."""
    if not isinstance(penalty_config, PenaltyConfig):
        raise ConfigError("penalty_cscgd_run needs a PenaltyConfig")
    penalty_config.validate()
    state = _resolve_init(problem, init)
    if problem.J:
        state.lam[:] = 0.0
    rec = fused_run(problem, penalty_config, state, trace_stride,
                    mode=PENALTY_FORMS[penalty_config.penalty_form],
                    rho=penalty_config.penalty_weight)
    trace = build_trace(problem, penalty_config, rec, evaluator, f_star, has_dual=False)
    return rec.xbar[-1].copy(), trace
