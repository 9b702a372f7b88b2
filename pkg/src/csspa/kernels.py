"""Fused inner loops.

These run the whole iteration sequence for a block of pre-drawn samples
without returning to Python.  Oracle kernels are passed in as arguments;
under numba each distinct kernel tuple gets its own specialisation.

A loop that hits a non-finite value or a broken invariant stops early and
writes a code from ``STATUS_NAMES`` to ``status[0]`` and the offending t to
``status[1]``.
"""
import numpy as np

from ._jit import njit
from .model import BALL, BOX
from .projections import project_inplace

MODE_CSSPA = 0
MODE_PENALTY_SQUARED = 1
MODE_PENALTY_HINGE = 2

OK = 0
BAD_Y = 1
BAD_W = 2
BAD_X = 3
BAD_LAMBDA = 4
LEFT_SET = 5
NEGATIVE_LAMBDA = 6

STATUS_NAMES = {
    BAD_Y: "objective tracker y",
    BAD_W: "constraint tracker w",
    BAD_X: "primal iterate x",
    BAD_LAMBDA: "dual iterate lambda",
    LEFT_SET: "primal iterate x left the feasible set",
    NEGATIVE_LAMBDA: "dual iterate lambda became negative",
}


@njit
def _all_finite(v):
    for i in range(v.shape[0]):
        if not np.isfinite(v[i]):
            return False
    return True


@njit
def _inside(x, kind, lower, upper, center, radius):
    if kind == BOX:
        for i in range(x.shape[0]):
            if x[i] < lower[i] or x[i] > upper[i]:
                return False
    elif kind == BALL:
        sq = 0.0
        for i in range(x.shape[0]):
            sq += (x[i] - center[i]) ** 2
        if np.sqrt(sq) > radius * (1.0 + 1e-12):
            return False
    return True


@njit
def saddle_loop(mode, g_fn, f_fn, data_o, params_o, h_fn, l_fn, data_c, params_c,
                x, lam, y, w, x_sum, t0, horizon,
                alphas, betas, deltas, theta, rho,
                pkind, lower, upper, center, radius,
                rows_xi, noise_xi, rows_zeta, noise_zeta,
                rows_phi, noise_phi, rows_psi, noise_psi,
                stride, rec_pos, rec_t, rec_xbar, rec_x, rec_y, rec_w, rec_lam,
                status):
    """Run ``len(alphas)`` iterations starting at global index ``t0``.

    State arrays (x, lam, y, w, x_sum) are updated in place; on entry
    ``x_sum`` holds x_1 + ... + x_t0.  ``mode`` selects the dual update
    (CSSPA) or a fixed penalty weight in place of lambda.
    """
    n_steps = alphas.shape[0]
    J = lam.shape[0]
    coef = np.zeros(J)
    for i in range(n_steps):
        t = t0 + i
        a_t = alphas[i]
        b_t = betas[i]
        x_t = x.copy()

        g_val, g_jac = g_fn(x, data_o, params_o, rows_xi[i], noise_xi[i], True)
        h_val, h_jac = h_fn(x, data_c, params_c, rows_phi[i], noise_phi[i], True)
        y[:] = (1.0 - b_t) * y + b_t * g_val
        w[:] = (1.0 - b_t) * w + b_t * h_val
        if not _all_finite(y):
            status[0] = BAD_Y
            status[1] = t
            return
        if not _all_finite(w):
            status[0] = BAD_W
            status[1] = t
            return

        f_val, f_grad = f_fn(y, data_o, params_o, rows_zeta[i], noise_zeta[i])
        l_val, l_grad = l_fn(w, data_c, params_c, rows_psi[i], noise_psi[i])

        direction = g_jac @ f_grad
        if J > 0:
            for j in range(J):
                if mode == MODE_CSSPA:
                    coef[j] = lam[j]
                elif mode == MODE_PENALTY_SQUARED:
                    coef[j] = 2.0 * rho * max(0.0, l_val[j] + theta)
                else:
                    coef[j] = rho if l_val[j] + theta > 0.0 else 0.0
            direction = direction + h_jac @ (l_grad @ coef)

        x[:] = x - a_t * direction
        # check before projecting: a clamp would hide an infinite step
        if not _all_finite(x):
            status[0] = BAD_X
            status[1] = t
            return
        project_inplace(x, pkind, lower, upper, center, radius)
        if not _inside(x, pkind, lower, upper, center, radius):
            status[0] = LEFT_SET
            status[1] = t
            return

        if mode == MODE_CSSPA:
            shrink = 1.0 - a_t * a_t * deltas[i]
            for j in range(J):
                lam[j] = max(0.0, lam[j] * shrink + a_t * (l_val[j] + theta))
                if not np.isfinite(lam[j]):
                    status[0] = BAD_LAMBDA
                    status[1] = t
                    return
                if lam[j] < 0.0:
                    status[0] = NEGATIVE_LAMBDA
                    status[1] = t
                    return

        if t % stride == 0 or t == horizon:
            k = rec_pos[0]
            rec_t[k] = t
            rec_xbar[k] = x_sum / t
            rec_x[k] = x_t
            rec_y[k] = y
            rec_w[k] = w
            sq = 0.0
            for j in range(J):
                sq += lam[j] * lam[j]
            rec_lam[k] = np.sqrt(sq)
            rec_pos[0] = k + 1
        x_sum += x


@njit
def scgd_loop(g_fn, f_fn, data_o, params_o, x, y, x_sum, t0, horizon, alphas, betas,
              pkind, lower, upper, center, radius,
              rows_xi, noise_xi, rows_zeta, noise_zeta,
              stride, rec_pos, rec_t, rec_xbar, rec_x, rec_y, status):
    """Plain stochastic compositional gradient descent (no constraints)."""
    n_steps = alphas.shape[0]
    for i in range(n_steps):
        t = t0 + i
        a_t = alphas[i]
        b_t = betas[i]
        x_t = x.copy()
        g_val, g_jac = g_fn(x, data_o, params_o, rows_xi[i], noise_xi[i], True)
        y[:] = (1.0 - b_t) * y + b_t * g_val
        if not _all_finite(y):
            status[0] = BAD_Y
            status[1] = t
            return
        f_val, f_grad = f_fn(y, data_o, params_o, rows_zeta[i], noise_zeta[i])
        direction = g_jac @ f_grad
        x[:] = x - a_t * direction
        # check before projecting: a clamp would hide an infinite step
        if not _all_finite(x):
            status[0] = BAD_X
            status[1] = t
            return
        project_inplace(x, pkind, lower, upper, center, radius)
        if t % stride == 0 or t == horizon:
            k = rec_pos[0]
            rec_t[k] = t
            rec_xbar[k] = x_sum / t
            rec_x[k] = x_t
            rec_y[k] = y
            rec_pos[0] = k + 1
        x_sum += x


@njit
def mean_inner(fn, x, data, params, rows, noise, want_jac):
    """Average of an inner kernel over the records ``rows`` at zero noise."""
    val, jac = fn(x, data, params, rows[0], noise, want_jac)
    val = val.copy()
    jac = jac.copy()
    for r in range(1, rows.shape[0]):
        v, g = fn(x, data, params, rows[r], noise, want_jac)
        val += v
        if want_jac:
            jac += g
    k = rows.shape[0]
    return val / k, jac / k


@njit
def mean_outer_objective(fn, z, data, params, rows, noise):
    value, grad = fn(z, data, params, rows[0], noise)
    grad = grad.copy()
    for r in range(1, rows.shape[0]):
        v, g = fn(z, data, params, rows[r], noise)
        value += v
        grad += g
    k = rows.shape[0]
    return value / k, grad / k


@njit
def mean_outer_constraint(fn, z, data, params, rows, noise):
    value, grad = fn(z, data, params, rows[0], noise)
    value = value.copy()
    grad = grad.copy()
    for r in range(1, rows.shape[0]):
        v, g = fn(z, data, params, rows[r], noise)
        value += v
        grad += g
    k = rows.shape[0]
    return value / k, grad / k
