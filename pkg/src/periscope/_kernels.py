"""Compiled inner loops for the conditional recursions.

Every kernel takes the interleaved parameter vector
``theta = (a_0, b_0, c_0, ..., a_{nu-1}, b_{nu-1}, c_{nu-1})`` and a flag
``squared`` selecting the recursion form: with ``squared`` the lagged
observation enters squared and the likelihood numerator is the squared
observation (conditional-variance model); without it both enter linearly
(conditional-duration model).
"""

import numpy as np
from numba import njit


@njit(cache=True)
def recursion_path(theta, x, x_init, r_init, squared):
    """Conditional recursion values r_t for t = 0..len(x)-1."""
    n = x.size
    nu = theta.size // 3
    out = np.empty(n)
    prev_x = x_init
    prev_r = r_init
    for t in range(n):
        k = t % nu
        reg = prev_x * prev_x if squared else prev_x
        rt = theta[3 * k] + theta[3 * k + 1] * reg + theta[3 * k + 2] * prev_r
        out[t] = rt
        prev_x = x[t]
        prev_r = rt
    return out


@njit(cache=True)
def qmle_value(theta, x, x_init, r_init, squared):
    """Mean of log(r_t) + num_t / r_t; +inf on a non-positive or non-finite r_t."""
    n = x.size
    nu = theta.size // 3
    prev_x = x_init
    prev_r = r_init
    acc = 0.0
    for t in range(n):
        k = t % nu
        reg = prev_x * prev_x if squared else prev_x
        rt = theta[3 * k] + theta[3 * k + 1] * reg + theta[3 * k + 2] * prev_r
        if not np.isfinite(rt) or rt <= 0.0:
            return np.inf
        num = x[t] * x[t] if squared else x[t]
        acc += np.log(rt) + num / rt
        prev_x = x[t]
        prev_r = rt
    return acc / n


@njit(cache=True)
def qmle_value_grad(theta, x, x_init, r_init, squared):
    """Objective and its gradient via the forward derivative recursion."""
    n = x.size
    p = theta.size
    nu = p // 3
    grad = np.zeros(p)
    d = np.zeros(p)
    prev_x = x_init
    prev_r = r_init
    acc = 0.0
    for t in range(n):
        k = t % nu
        reg = prev_x * prev_x if squared else prev_x
        c = theta[3 * k + 2]
        for j in range(p):
            d[j] *= c
        d[3 * k] += 1.0
        d[3 * k + 1] += reg
        d[3 * k + 2] += prev_r
        rt = theta[3 * k] + theta[3 * k + 1] * reg + c * prev_r
        if not np.isfinite(rt) or rt <= 0.0:
            return np.inf, grad
        num = x[t] * x[t] if squared else x[t]
        acc += np.log(rt) + num / rt
        w = (1.0 - num / rt) / rt
        for j in range(p):
            grad[j] += w * d[j]
        prev_x = x[t]
        prev_r = rt
    return acc / n, grad / n


@njit(cache=True)
def derivative_path(theta, x, x_init, r_init, squared):
    """Recursion values and their parameter derivatives, shape (n,), (n, 3*nu)."""
    n = x.size
    p = theta.size
    nu = p // 3
    out = np.empty(n)
    dout = np.zeros((n, p))
    d = np.zeros(p)
    prev_x = x_init
    prev_r = r_init
    for t in range(n):
        k = t % nu
        reg = prev_x * prev_x if squared else prev_x
        c = theta[3 * k + 2]
        for j in range(p):
            d[j] *= c
        d[3 * k] += 1.0
        d[3 * k + 1] += reg
        d[3 * k + 2] += prev_r
        rt = theta[3 * k] + theta[3 * k + 1] * reg + c * prev_r
        out[t] = rt
        for j in range(p):
            dout[t, j] = d[j]
        prev_x = x[t]
        prev_r = rt
    return out, dout


@njit(cache=True)
def simulate_recursion(theta, innovations, x_init, r_init, squared):
    """Simulate the observation and recursion paths from given innovations.

    Returns (x, r, diverged_at); diverged_at is -1 on success, else the first
    index where the recursion left (0, inf).
    """
    n = innovations.size
    nu = theta.size // 3
    x = np.empty(n)
    r = np.empty(n)
    prev_x = x_init
    prev_r = r_init
    for t in range(n):
        k = t % nu
        reg = prev_x * prev_x if squared else prev_x
        rt = theta[3 * k] + theta[3 * k + 1] * reg + theta[3 * k + 2] * prev_r
        if not np.isfinite(rt) or rt <= 0.0:
            return x, r, t
        xt = innovations[t] * np.sqrt(rt) if squared else innovations[t] * rt
        if not np.isfinite(xt):
            return x, r, t
        x[t] = xt
        r[t] = rt
        prev_x = xt
        prev_r = rt
    return x, r, -1
