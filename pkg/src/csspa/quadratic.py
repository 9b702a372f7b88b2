"""Compositional quadratic test problem with a known saddle point.

    g(x; xi) = x + s_g * xi          f(y; zeta) = ||y||^2 + s_f * zeta . y
    h(x; phi) = x + s_h * phi        l(w) = 1 - w[0]

so F(x) = ||x||^2 and L(x) = 1 - x[0].  In one dimension, with X = [-10, 10],
the solution of min x^2 s.t. 1 - x <= 0 is x* = 1 with multiplier 2, and
the tightened problem has x^theta = 1 + theta.

The noise enters every map linearly, so evaluating at zero noise gives the
exact expectations.
"""
import numpy as np

from ._jit import njit
from .model import FeasibleSet
from .oracles import Composition, assemble_problem, null_constraint


@njit
def quad_inner_obj(x, data, params, row, noise, want_jac):
    val = x + params[0] * noise
    if want_jac:
        return val, np.eye(x.shape[0])
    return val, np.zeros((0, 0))


@njit
def quad_outer_obj(y, data, params, row, noise):
    value = 0.0
    for i in range(y.shape[0]):
        value += y[i] * y[i] + params[1] * noise[i] * y[i]
    return value, 2.0 * y + params[1] * noise


@njit
def quad_inner_con(x, data, params, row, noise, want_jac):
    val = x + params[0] * noise
    if want_jac:
        return val, np.eye(x.shape[0])
    return val, np.zeros((0, 0))


@njit
def quad_outer_con(w, data, params, row, noise):
    vals = np.empty(1)
    grads = np.zeros((w.shape[0], 1))
    vals[0] = 1.0 - w[0]
    grads[0, 0] = -1.0
    return vals, grads


def quadratic_objective(dim=1, noise_std=0.1, outer_noise_std=0.0) -> Composition:
    return Composition(quad_inner_obj, quad_outer_obj, np.zeros((1, 1)),
                       np.array([noise_std, outer_noise_std]), decision_dim=dim,
                       inner_dim=dim, inner_noise_dim=dim, outer_noise_dim=dim,
                       name="quadratic")


def quadratic_constraint(dim=1, noise_std=0.1) -> Composition:
    return Composition(quad_inner_con, quad_outer_con, np.zeros((1, 1)),
                       np.array([noise_std]), decision_dim=dim, inner_dim=dim,
                       num_outputs=1, inner_noise_dim=dim, name="one_minus_x")


def build_quadratic_problem(noise_std=0.1, outer_noise_std=0.0, dim=1, constrained=True,
                            bound=10.0, seed=0, tightening=0.0):
    """The quadratic test instance on the box [-bound, bound]^dim."""
    objective = quadratic_objective(dim, noise_std, outer_noise_std)
    constraint = quadratic_constraint(dim, noise_std) if constrained else null_constraint(dim)
    return assemble_problem(
        objective, constraint, FeasibleSet.box(-bound, bound, dim=dim), seed=seed,
        tightening=tightening, name="quadratic_test",
        description={"noise_std": noise_std, "outer_noise_std": outer_noise_std,
                     "dim": dim, "constrained": constrained, "bound": bound})
