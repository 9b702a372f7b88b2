"""Deterministic full-batch evaluation and a high-accuracy reference solver.

Expectations are exact averages over a frozen sample set: every record of a
composition's data, with noise at its mean (zero).  For dataset problems this
is the empirical problem; for the analytic test problems, whose noise enters
linearly, it is the exact expectation.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from . import kernels
from .model import ConfigError, DomainError, FeasibleSet
from .oracles import Composition
from .projections import project


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (final KKT residual {residual:.3e})")
        self.residual = residual


class FullBatchEvaluator:
    """Exact F, L_j, their gradients, and the (augmented) Lagrangian."""

    def __init__(self, objective: Composition, constraint: Composition):
        self.objective_comp = objective
        self.constraint_comp = constraint
        self.n = objective.decision_dim
        self.J = constraint.num_outputs
        self._rows_o = np.arange(objective.n_rows, dtype=np.int64)
        self._rows_c = np.arange(constraint.n_rows, dtype=np.int64)
        self._outer_rows_o = self._rows_o if objective.outer_uses_row else self._rows_o[:1]
        self._outer_rows_c = self._rows_c if constraint.outer_uses_row else self._rows_c[:1]
        self._zeros = [np.zeros(objective.inner_noise_dim), np.zeros(objective.outer_noise_dim),
                       np.zeros(constraint.inner_noise_dim), np.zeros(constraint.outer_noise_dim)]

    @classmethod
    def from_problem(cls, problem) -> "FullBatchEvaluator":
        return cls(problem.oracles.objective, problem.oracles.constraint)

    def _point(self, x):
        x = np.ascontiguousarray(np.asarray(x, dtype=float).ravel())
        if x.shape[0] != self.n:
            raise DomainError(f"expected a point of length {self.n}, got {x.shape[0]}")
        return x

    # inner expectations ------------------------------------------------
    def _mean_inner(self, c, x, rows, noise, jac):
        x = self._point(x)
        if c.batch_inner is not None:
            val, jacobian = c.batch_inner(x, c.data, c.params)
            return val, (jacobian if jac else np.zeros((0, 0)))
        return kernels.mean_inner(c.inner, x, c.data, c.params, rows, noise, jac)

    def inner_objective(self, x, jac=False):
        """g-bar(x) and, if requested, its n x m jacobian."""
        return self._mean_inner(self.objective_comp, x, self._rows_o, self._zeros[0], jac)

    def inner_constraint(self, x, jac=False):
        return self._mean_inner(self.constraint_comp, x, self._rows_c, self._zeros[2], jac)

    # objective and constraints -----------------------------------------
    def objective(self, x):
        """(F(x), grad F(x))."""
        gbar, gjac = self.inner_objective(x, jac=True)
        c = self.objective_comp
        value, fgrad = kernels.mean_outer_objective(c.outer, gbar, c.data, c.params,
                                                    self._outer_rows_o, self._zeros[1])
        return float(value), gjac @ fgrad

    def objective_value(self, x) -> float:
        gbar, _ = self.inner_objective(x)
        c = self.objective_comp
        value, _ = kernels.mean_outer_objective(c.outer, gbar, c.data, c.params,
                                                self._outer_rows_o, self._zeros[1])
        return float(value)

    def constraints(self, x):
        """(L(x) of length J, n x J jacobian)."""
        if self.J == 0:
            return np.zeros(0), np.zeros((self.n, 0))
        hbar, hjac = self.inner_constraint(x, jac=True)
        c = self.constraint_comp
        values, lgrad = kernels.mean_outer_constraint(c.outer, hbar, c.data, c.params,
                                                      self._outer_rows_c, self._zeros[3])
        return values, hjac @ lgrad

    def constraint_values(self, x):
        if self.J == 0:
            return np.zeros(0)
        hbar, _ = self.inner_constraint(x)
        c = self.constraint_comp
        values, _ = kernels.mean_outer_constraint(c.outer, hbar, c.data, c.params,
                                                  self._outer_rows_c, self._zeros[3])
        return values

    def max_violation(self, x) -> float:
        vals = self.constraint_values(x)
        return float(max(0.0, vals.max())) if vals.size else 0.0

    # Lagrangians --------------------------------------------------------
    def lagrangian(self, x, lam, theta=0.0):
        """F + sum_j lam_j (L_j + theta) with gradients in x and lambda."""
        return self.augmented_lagrangian(x, lam, 0.0, 0.0, theta)

    def augmented_lagrangian(self, x, lam, alpha, delta, theta=0.0):
        """F + sum_j lam_j (L_j + theta) - (alpha * delta / 2) ||lam||^2.

        Returns (value, gradient in x, gradient in lambda).
        """
        lam = np.asarray(lam, dtype=float).reshape(self.J)
        F, gF = self.objective(x)
        L, jac = self.constraints(x)
        shifted = L + theta
        value = F + lam @ shifted - 0.5 * alpha * delta * (lam @ lam)
        return float(value), gF + jac @ lam, shifted - alpha * delta * lam


def eval_objective(evaluator: FullBatchEvaluator, x):
    return evaluator.objective(x)


def eval_constraints(evaluator: FullBatchEvaluator, x):
    return evaluator.constraints(x)


@dataclass
class ReferenceSolution:
    x_star: np.ndarray
    lambda_star: np.ndarray
    f_star: float
    kkt_residual: float
    theta: float = 0.0
    seed: Optional[int] = None

    def to_dict(self):
        out = asdict(self)
        out["x_star"] = np.asarray(self.x_star).tolist()
        out["lambda_star"] = np.asarray(self.lambda_star).tolist()
        return out

    @classmethod
    def from_dict(cls, data):
        return cls(x_star=np.asarray(data["x_star"], dtype=float),
                   lambda_star=np.asarray(data["lambda_star"], dtype=float),
                   f_star=float(data["f_star"]), kkt_residual=float(data["kkt_residual"]),
                   theta=float(data.get("theta", 0.0)), seed=data.get("seed"))


def save_reference(path, solution: ReferenceSolution):
    Path(path).write_text(json.dumps(solution.to_dict(), indent=2) + "\n")


def load_reference(path) -> ReferenceSolution:
    return ReferenceSolution.from_dict(json.loads(Path(path).read_text()))


def kkt_residual(evaluator: FullBatchEvaluator, feasible_set: FeasibleSet, x, lam, theta=0.0):
    """max(stationarity, primal infeasibility, complementarity) for (P_theta).

    Stationarity is ||x - Proj_X(x - grad F - sum_j lam_j grad L_j)||.
    """
    lam = np.asarray(lam, dtype=float).reshape(evaluator.J)
    _, gF = evaluator.objective(x)
    L, jac = evaluator.constraints(x)
    grad = gF + jac @ lam
    stationarity = float(np.linalg.norm(x - project(feasible_set, x - grad)))
    c = L + theta
    infeasibility = float(np.max(np.maximum(c, 0.0))) if c.size else 0.0
    complementarity = float(np.sum(lam * np.abs(c))) if c.size else 0.0
    return max(stationarity, infeasibility, complementarity)


def solve_reference(evaluator: FullBatchEvaluator, feasible_set: FeasibleSet, theta=0.0,
                    tol=1e-6, x0=None, max_outer=60, rho0=10.0, seed=None) -> ReferenceSolution:
    """Solve (P_theta) on the frozen sample set by an augmented Lagrangian method.

    Inner problems are minimised with L-BFGS-B (box bounds passed through);
    an l2-ball feasible set is handled as one more multiplier-penalised
    constraint.  Stops once :func:`kkt_residual` <= ``tol``.
    """
    if not tol > 0:
        raise ConfigError("tol must be > 0")
    n, J = evaluator.n, evaluator.J
    x = project(feasible_set, np.zeros(n) if x0 is None else x0)
    lam = np.zeros(J)
    ball = feasible_set.kind == "l2_ball"
    mu_ball = 0.0
    rho = rho0
    bounds = None
    if feasible_set.kind == "box":
        bounds = list(zip(feasible_set.lower, feasible_set.upper))

    def merit(v):
        F, gF = evaluator.objective(v)
        L, jac = evaluator.constraints(v)
        shifted = np.maximum(lam + rho * (L + theta), 0.0)
        value = F + (shifted @ shifted - lam @ lam) / (2 * rho)
        grad = gF + jac @ shifted
        if ball:
            diff = v - feasible_set.center
            q = diff @ diff - feasible_set.radius ** 2
            sb = max(mu_ball + rho * q, 0.0)
            value += (sb * sb - mu_ball * mu_ball) / (2 * rho)
            grad = grad + 2.0 * sb * diff
        return value, grad

    residual = np.inf
    prev_infeas = np.inf
    for _ in range(max_outer):
        res = minimize(merit, x, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"maxiter": 50000, "maxfun": 60000, "maxcor": 100,
                                "ftol": 1e-16, "gtol": 1e-13})
        x = res.x
        L = evaluator.constraint_values(x)
        lam = np.maximum(lam + rho * (L + theta), 0.0)
        infeas = float(np.max(np.maximum(L + theta, 0.0))) if J else 0.0
        if ball:
            diff = x - feasible_set.center
            q = diff @ diff - feasible_set.radius ** 2
            mu_ball = max(mu_ball + rho * q, 0.0)
            infeas = max(infeas, q)
        xp = project(feasible_set, x)
        residual = kkt_residual(evaluator, feasible_set, xp, lam, theta)
        if residual <= tol:
            x = xp
            break
        if infeas > 0.25 * prev_infeas and rho < 1e8:
            rho *= 10.0
        prev_infeas = infeas
    else:
        raise ConvergenceError("reference solver did not reach the requested tolerance", residual)
    return ReferenceSolution(x_star=x, lambda_star=lam, f_star=evaluator.objective_value(x),
                             kkt_residual=residual, theta=float(theta), seed=seed)
