"""The compositional stochastic saddle point algorithm (CSSPA).

One iteration, in order:

1. draw xi_t, zeta_t, phi_t, psi_t;
2. trackers  y_{t+1} = (1 - beta_t) y_t + beta_t g(x_t; xi_t),
             w_{t+1} = (1 - beta_t) w_t + beta_t h(x_t; phi_t);
3. primal    x_{t+1} = Proj_X(x_t - alpha_t * [grad g grad f(y_{t+1})
                                 + sum_j lam_j grad h grad l_j(w_{t+1})]);
4. dual      lam_{t+1} = [lam_t (1 - alpha_t^2 delta_t)
                          + alpha_t (l_j(w_{t+1}) + theta)]_+.

The output is the plain average of x_1..x_T.

:func:`step` is a readable one-iteration reference built from the oracle
interface.  :func:`run` executes the same arithmetic in a fused compiled loop
and consumes the same draws, so both paths give identical iterates.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional

import numpy as np

from . import kernels
from .model import ConfigError, DomainError, ProblemInstance, Schedule, alpha_at, beta_at, delta_at
from .projections import project

RUN_CHUNK = 1 << 16


class DivergenceError(RuntimeError):
    """An iterate became non-finite or broke an invariant."""

    def __init__(self, quantity: str, t: int):
        super().__init__(f"divergence at t={t}: {quantity}")
        self.quantity = quantity
        self.t = t


@dataclass
class SolverState:
    """Iterates (x_t, lam_t, y_t, w_t) at counter t.

    ``x_sum`` is x_1 + ... + x_t, so ``x_sum / t`` is the running average.
    """

    t: int
    x: np.ndarray
    lam: np.ndarray
    y: np.ndarray
    w: np.ndarray
    x_sum: np.ndarray

    def average(self) -> np.ndarray:
        return self.x_sum / self.t

    def copy(self) -> "SolverState":
        return SolverState(self.t, self.x.copy(), self.lam.copy(), self.y.copy(),
                           self.w.copy(), self.x_sum.copy())


@dataclass(frozen=True)
class TraceRecord:
    """Diagnostics at iteration t.

    ``lambda_norm`` is ||lam_{t+1}|| (None for solvers without duals).
    Tracker errors are ||y_{t+1} - g-bar(x_t)|| and ||w_{t+1} - h-bar(x_t)||;
    ``gap`` and ``max_violation`` refer to the running average x_sum / t.
    """

    t: int
    alpha_t: float
    beta_t: float
    delta_t: float
    lambda_norm: Optional[float] = None
    tracker_err_y: Optional[float] = None
    tracker_err_w: Optional[float] = None
    gap: Optional[float] = None
    max_violation: Optional[float] = None


@dataclass(frozen=True)
class Samples:
    """Oracle draws for one iteration.

    Inner samples are taken at x_t; outer samples at the advanced trackers.
    """

    g_value: np.ndarray
    g_jac: np.ndarray
    f_grad: np.ndarray
    h_value: np.ndarray
    h_jac: np.ndarray
    l_value: np.ndarray
    l_grad: np.ndarray


@dataclass(frozen=True)
class QuasiGradient:
    primal: np.ndarray
    dual: np.ndarray


def update_trackers(state: SolverState, beta_t: float, inner_obj_sample, inner_con_sample):
    """Convex-combination tracker step; returns (y_next, w_next)."""
    if not 0.0 < beta_t <= 1.0:
        raise DomainError(f"beta_t must lie in (0, 1], got {beta_t}")
    g = np.asarray(inner_obj_sample, dtype=float)
    h = np.asarray(inner_con_sample, dtype=float)
    if g.shape != state.y.shape or h.shape != state.w.shape:
        raise DomainError("tracker sample has the wrong dimension")
    return (1.0 - beta_t) * state.y + beta_t * g, (1.0 - beta_t) * state.w + beta_t * h


def assemble_quasi_gradient(state_after_tracker: SolverState, samples: Samples, theta: float,
                            alpha_t: float, delta_t: float) -> QuasiGradient:
    """Primal and dual quasi-gradients.

    ``state_after_tracker`` carries x_t and lam_t with the trackers already at
    y_{t+1}, w_{t+1}.  The dual entry is l_j + theta - alpha_t delta_t lam_j,
    so the dual update reads lam + alpha_t * dual.
    """
    s = state_after_tracker
    n, J = s.x.shape[0], s.lam.shape[0]
    g_jac = np.asarray(samples.g_jac, dtype=float)
    f_grad = np.asarray(samples.f_grad, dtype=float)
    if g_jac.shape != (n, s.y.shape[0]) or f_grad.shape != s.y.shape:
        raise DomainError("objective sample dimensions do not match the state")
    primal = g_jac @ f_grad
    l_value = np.asarray(samples.l_value, dtype=float).reshape(-1)
    if l_value.shape[0] != J:
        raise DomainError(f"expected {J} constraint values, got {l_value.shape[0]}")
    if J:
        h_jac = np.asarray(samples.h_jac, dtype=float)
        l_grad = np.asarray(samples.l_grad, dtype=float)
        if h_jac.shape != (n, s.w.shape[0]) or l_grad.shape != (s.w.shape[0], J):
            raise DomainError("constraint sample dimensions do not match the state")
        primal = primal + h_jac @ (l_grad @ s.lam)
    dual = l_value + theta - alpha_t * delta_t * s.lam
    return QuasiGradient(primal=primal, dual=dual)


def _check(name, v, t):
    if not np.all(np.isfinite(v)):
        raise DivergenceError(name, t)


def init_state(problem: ProblemInstance, x1=None, lam1=None, y1=None, w1=None) -> SolverState:
    """Initial state; missing pieces follow the defaults.

    x_1 = Proj_X(0) (or the projection of ``x1``), lam_1 = 0, and the
    trackers start at one inner sample each, taken at x_1.  Sampling for the
    trackers uses dedicated draws from the problem's xi/phi streams.
    """
    fs = problem.feasible_set
    x = project(fs, np.zeros(problem.n) if x1 is None else x1)
    lam = np.zeros(problem.J) if lam1 is None else np.array(lam1, dtype=float, ndmin=1)
    if lam.shape != (problem.J,) or np.any(lam < 0):
        raise ConfigError("lam1 must have length J and be nonnegative")
    oracles = problem.oracles
    y = oracles.sample_objective_inner(x)[0].copy() if y1 is None else np.array(y1, dtype=float, ndmin=1)
    w = oracles.sample_constraint_inner(x)[0].copy() if w1 is None else np.array(w1, dtype=float, ndmin=1)
    if y.shape != (problem.m,) or w.shape != (oracles.constraint_inner_dim,):
        raise ConfigError("tracker initial values have the wrong dimension")
    return SolverState(t=1, x=x, lam=lam, y=y, w=w, x_sum=x.copy())


def _resolve_init(problem, init) -> SolverState:
    if init is None:
        return init_state(problem)
    if isinstance(init, SolverState):
        state = init.copy()
        if not problem.feasible_set.contains(state.x):
            state.x_sum = state.x_sum - state.x
            state.x = project(problem.feasible_set, state.x)
            state.x_sum = state.x_sum + state.x
        if np.any(state.lam < 0):
            raise ConfigError("initial lambda must be nonnegative")
        return state
    if isinstance(init, dict):
        return init_state(problem, **init)
    raise ConfigError("init must be None, a SolverState or a dict of x1/lam1/y1/w1")


def step(state: SolverState, schedule: Schedule, problem: ProblemInstance):
    """One CSSPA iteration; returns (state_next, TraceRecord)."""
    t = state.t
    alpha, beta, delta = alpha_at(schedule, t), beta_at(schedule, t), delta_at(schedule, t)
    theta = problem.tightening
    oracles = problem.oracles

    g_val, g_jac = oracles.sample_objective_inner(state.x)
    h_val, h_jac = oracles.sample_constraint_inner(state.x)
    y_next, w_next = update_trackers(state, beta, g_val, h_val)
    _check("objective tracker y", y_next, t)
    _check("constraint tracker w", w_next, t)
    _, f_grad = oracles.sample_objective_outer(y_next)
    l_val, l_grad = oracles.sample_constraint_outer(w_next)

    advanced = replace(state, y=y_next, w=w_next)
    qg = assemble_quasi_gradient(advanced, Samples(g_val, g_jac, f_grad, h_val, h_jac, l_val, l_grad),
                                 theta, alpha, delta)
    x_next = state.x - alpha * qg.primal
    _check("primal iterate x", x_next, t)
    x_next = project(problem.feasible_set, x_next)
    lam_next = np.maximum(state.lam * (1.0 - alpha * alpha * delta) + alpha * (l_val + theta), 0.0)
    _check("dual iterate lambda", lam_next, t)

    nxt = SolverState(t=t + 1, x=x_next, lam=lam_next, y=y_next, w=w_next,
                      x_sum=state.x_sum + x_next)
    lam_norm = float(np.linalg.norm(lam_next)) if problem.J else 0.0
    return nxt, TraceRecord(t=t, alpha_t=alpha, beta_t=beta, delta_t=delta, lambda_norm=lam_norm)


@dataclass
class _Records:
    t: np.ndarray
    xbar: np.ndarray
    x: np.ndarray
    y: np.ndarray
    w: np.ndarray
    lam: np.ndarray

    @classmethod
    def allocate(cls, t0, horizon, stride, n, m, d):
        count = sum(1 for t in _record_times(t0, horizon, stride))
        return cls(np.zeros(count, dtype=np.int64), np.zeros((count, n)), np.zeros((count, n)),
                   np.zeros((count, m)), np.zeros((count, d)), np.zeros(count))


def _record_times(t0, horizon, stride):
    first = ((t0 + stride - 1) // stride) * stride
    times = list(range(first, horizon + 1, stride))
    if not times or times[-1] != horizon:
        times.append(horizon)
    return times


def fused_run(problem: ProblemInstance, schedule: Schedule, state: SolverState, trace_stride: int,
              mode: int = kernels.MODE_CSSPA, rho: float = 0.0):
    """Advance ``state`` in place to t = T + 1 with the compiled loop.

    Returns the raw per-record arrays.
    """
    if trace_stride < 1:
        raise ConfigError("trace_stride must be >= 1")
    T = schedule.horizon
    if state.t > T:
        raise ConfigError(f"state is already past the horizon (t={state.t}, T={T})")
    alphas, betas, deltas = schedule.arrays()
    oracles = problem.oracles
    obj, con = oracles.objective, oracles.constraint
    fs_args = problem.feasible_set.kernel_args()
    rec = _Records.allocate(state.t, T, trace_stride, problem.n, problem.m, con.inner_dim)
    rec_pos = np.zeros(1, dtype=np.int64)
    status = np.zeros(2, dtype=np.int64)
    x, lam, y, w, x_sum = state.x, state.lam, state.y, state.w, state.x_sum
    theta = float(problem.tightening)
    t = state.t
    while t <= T:
        count = min(RUN_CHUNK, T - t + 1)
        (r_xi, n_xi), (r_ze, n_ze), (r_ph, n_ph), (r_ps, n_ps) = oracles.take(count)
        sl = slice(t - 1, t - 1 + count)
        kernels.saddle_loop(mode, obj.inner, obj.outer, obj.data, obj.params,
                            con.inner, con.outer, con.data, con.params,
                            x, lam, y, w, x_sum, t, T,
                            alphas[sl], betas[sl], deltas[sl], theta, float(rho),
                            *fs_args, r_xi, n_xi, r_ze, n_ze, r_ph, n_ph, r_ps, n_ps,
                            trace_stride, rec_pos, rec.t, rec.xbar, rec.x, rec.y, rec.w, rec.lam,
                            status)
        if status[0] != kernels.OK:
            raise DivergenceError(kernels.STATUS_NAMES[int(status[0])], int(status[1]))
        t += count
    state.t = T + 1
    return rec


def build_trace(problem, schedule, rec: _Records, evaluator=None, f_star=None,
                has_dual=True, has_w=True) -> List[TraceRecord]:
    """Turn raw records into :class:`TraceRecord` objects.

    Tracker errors need ``evaluator``; the gap additionally needs ``f_star``.
    The violation is measured on the original constraints (theta = 0).
    """
    alphas, betas, deltas = schedule.arrays()
    out = []
    for k in range(rec.t.shape[0]):
        t = int(rec.t[k])
        err_y = err_w = gap = viol = None
        if evaluator is not None:
            err_y = float(np.linalg.norm(rec.y[k] - evaluator.inner_objective(rec.x[k])[0]))
            if has_w and problem.J:
                err_w = float(np.linalg.norm(rec.w[k] - evaluator.inner_constraint(rec.x[k])[0]))
            if f_star is not None:
                gap = evaluator.objective_value(rec.xbar[k]) - float(f_star)
            viol = evaluator.max_violation(rec.xbar[k])
        out.append(TraceRecord(t=t, alpha_t=float(alphas[t - 1]), beta_t=float(betas[t - 1]),
                               delta_t=float(deltas[t - 1]) if has_dual else 0.0,
                               lambda_norm=float(rec.lam[k]) if has_dual else None,
                               tracker_err_y=err_y, tracker_err_w=err_w, gap=gap,
                               max_violation=viol))
    return out


def run(problem: ProblemInstance, schedule: Schedule, init=None, trace_stride: int = 100,
        evaluator=None, f_star: Optional[float] = None):
    """Run CSSPA from t = init.t (normally 1) through the horizon T.

    Parameters
    ----------
    init : None, SolverState or dict
        None uses :func:`init_state` defaults; a dict is forwarded to it.
    trace_stride : int
        A record is kept every ``trace_stride`` iterations and at t = T.
    evaluator : FullBatchEvaluator, optional
        Enables tracker errors and violations in the trace; with ``f_star``
        also the optimality gap.

    Returns
    -------
    x_hat, final_state, trace
        ``x_hat`` is (x_1 + ... + x_T) / T.
    """
    schedule.validate()
    state = _resolve_init(problem, init)
    rec = fused_run(problem, schedule, state, trace_stride)
    x_hat = rec.xbar[-1].copy()
    return x_hat, state, build_trace(problem, schedule, rec, evaluator, f_star)
