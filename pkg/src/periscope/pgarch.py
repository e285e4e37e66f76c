"""Simulation, Gaussian quasi-likelihood estimation, asymptotic covariance,
and forecasting for the periodic conditional-variance model of order (1,1).

The observation equation is ``y_t = eps_t * sqrt(h_t)`` with
``h_t = omega_{t mod nu} + alpha_{t mod nu} * y_{t-1}**2 + beta_{t mod nu} * h_{t-1}``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.special import gammaln

from . import optimize as _opt
from ._kernels import (
    derivative_path,
    qmle_value,
    qmle_value_grad,
    recursion_path,
    simulate_recursion,
)
from .core import (
    Family,
    FitResult,
    InnovationSpec,
    Law,
    ModelKind,
    ModelSpec,
    SpecificationError,
    flatten,
    unflatten,
)

__all__ = [
    "VariancePath",
    "DivergenceError",
    "NumericsError",
    "CovarianceError",
    "InferenceWarning",
    "sample_ged",
    "simulate",
    "variance_path",
    "qmle_objective",
    "fit",
    "asymptotic_covariance",
    "forecast",
]

_BOUND_LO = 1e-8
_BOUND_HI = 1e3


class DivergenceError(RuntimeError):
    """The simulated recursion left (0, inf)."""

    def __init__(self, index: int):
        super().__init__(f"recursion diverged at index {index}")
        self.index = index


class NumericsError(RuntimeError):
    """An internal invariant failed (non-positive or non-finite recursion value)."""


class CovarianceError(RuntimeError):
    """The information matrix is singular; covariance is unavailable."""


class InferenceWarning(UserWarning):
    """An estimate sits on its positivity bound; asymptotic inference may be invalid."""


def _rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


# ---------------------------------------------------------------------------
# innovations
# ---------------------------------------------------------------------------

def ged_scale(shape: float) -> float:
    """Scale constant making the generalized error density unit-variance."""
    lg = gammaln(1.0 / shape) - gammaln(3.0 / shape)
    return math.sqrt(2.0 ** (-2.0 / shape) * math.exp(lg))


def sample_ged(shape: float, size: int, rng=None) -> np.ndarray:
    """Zero-mean unit-variance generalized-error draws with tail exponent ``shape``.

    Uses the exact gamma transform: |x| = scale * (2 G)**(1/shape) with
    G ~ Gamma(1/shape, 1) and an independent random sign.
    """
    if not shape > 0:
        raise SpecificationError("ged shape must be > 0")
    rng = _rng(rng)
    g = rng.gamma(1.0 / shape, 1.0, size=size)
    signs = rng.integers(0, 2, size=size) * 2 - 1
    return signs * ged_scale(shape) * (2.0 * g) ** (1.0 / shape)


def _draw_innovations(inn: InnovationSpec, size: int, rng) -> np.ndarray:
    if inn.law is Law.STD_NORMAL:
        return rng.standard_normal(size)
    if inn.law is Law.GED:
        return sample_ged(inn.shape, size, rng)
    raise SpecificationError(
        f"innovation law {inn.law.value!r} is not a real-valued law for a variance model"
    )


# ---------------------------------------------------------------------------
# paths and objective
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VariancePath:
    """A simulated trajectory: returns ``y``, conditional variances ``h``, and
    the pre-sample pair ``start = (y_init, h_init)`` that seeds estimation on
    this stretch of data."""

    h: np.ndarray
    y: np.ndarray
    start: Tuple[float, float]

    def __post_init__(self):
        h = np.asarray(self.h, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if h.size != y.size:
            raise SpecificationError("h and y must have equal length")
        if np.any(~(h > 0)):
            raise SpecificationError("conditional variances must be positive")
        for a in (h, y):
            a.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "start", (float(self.start[0]), float(self.start[1])))


def _check_theta(theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size == 0 or theta.size % 3:
        raise SpecificationError("theta must be an interleaved vector of length 3*nu")
    if np.any(theta[0::3] <= 0) or np.any(theta[1::3] < 0) or np.any(theta[2::3] < 0):
        raise SpecificationError("theta violates positivity: intercepts > 0, others >= 0")
    return theta


def simulate(
    spec: ModelSpec,
    n_total: int,
    burn_in: int = 0,
    start: Optional[Tuple[float, float]] = None,
    innovations: Optional[np.ndarray] = None,
    rng=None,
) -> VariancePath:
    """Simulate ``n_total`` steps and discard the first ``burn_in``.

    The returned path's ``start`` holds the last burn-in observation and
    variance, so estimation on the returned data reproduces the generating
    recursion exactly.  ``innovations`` overrides the innovation draws (test
    hook); otherwise they come from ``spec.innovation`` and are reproducible
    given its seed.
    """
    if spec.kind is not ModelKind.PGARCH:
        raise SpecificationError("simulate expects a PGARCH spec")
    if not (n_total > burn_in >= 0):
        raise SpecificationError("need n_total > burn_in >= 0")
    theta = flatten(spec)
    if start is None:
        start = (0.0, float(np.mean(spec.array(Family.OMEGA))))
    if innovations is None:
        innovations = _draw_innovations(
            spec.innovation, n_total, _rng(spec.innovation.seed if rng is None else rng)
        )
    else:
        innovations = np.asarray(innovations, dtype=float)
        if innovations.size < n_total:
            raise SpecificationError("innovations must supply at least n_total draws")
        innovations = innovations[:n_total]
    y, h, bad = simulate_recursion(theta, innovations, float(start[0]), float(start[1]), True)
    if bad >= 0:
        raise DivergenceError(bad)
    if burn_in:
        return VariancePath(
            h=h[burn_in:], y=y[burn_in:], start=(y[burn_in - 1], h[burn_in - 1])
        )
    return VariancePath(h=h, y=y, start=start)


def variance_path(theta, y, start) -> np.ndarray:
    """Conditional variances implied by ``theta`` along observed data ``y``."""
    theta = _check_theta(theta)
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise SpecificationError("y must be non-empty")
    h = recursion_path(theta, y, float(start[0]), float(start[1]), True)
    if not np.all(np.isfinite(h)) or np.any(h <= 0):
        bad = int(np.nonzero(~(np.isfinite(h) & (h > 0)))[0][0])
        raise NumericsError(f"conditional variance left (0, inf) at index {bad}")
    return h


def qmle_objective(theta, y, start) -> float:
    """Gaussian quasi-likelihood criterion: mean of log(h_t) + y_t**2 / h_t."""
    theta = _check_theta(theta)
    y = np.asarray(y, dtype=float)
    return float(qmle_value(theta, y, float(start[0]), float(start[1]), True))


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------

def _to_z(theta: np.ndarray) -> np.ndarray:
    z = theta.copy()
    z[0::3] = np.log(theta[0::3])
    return z


def _from_z(z: np.ndarray) -> np.ndarray:
    theta = z.copy()
    theta[0::3] = np.exp(z[0::3])
    return theta


def _z_bounds(nu: int) -> np.ndarray:
    b = np.empty((3 * nu, 2))
    b[0::3] = (math.log(_BOUND_LO), math.log(_BOUND_HI))
    b[1::3] = (_BOUND_LO, _BOUND_HI)
    b[2::3] = (_BOUND_LO, _BOUND_HI)
    return b


def default_start(y: np.ndarray, nu: int) -> Tuple[float, float]:
    """Pre-sample values from the data: the last observation of the first
    period and its square."""
    return float(y[nu - 1]), float(y[nu - 1]) ** 2


def _run_qmle(x, nu, start, config, x0, squared):
    """Shared quasi-likelihood driver for both recursion forms."""
    x = np.asarray(x, dtype=float)
    if nu < 1:
        raise SpecificationError("nu must be a positive integer")
    if x.size == 0 or x.size % nu:
        raise SpecificationError("data length must be a positive multiple of nu")
    if np.allclose(x, 0.0):
        raise SpecificationError("data are identically zero; the model is degenerate")
    cfg = (config or _opt.OptimizerConfig()).with_bounds(_z_bounds(nu))
    y_init, r_init = float(start[0]), float(start[1])

    def objective_z(z):
        return qmle_value(_from_z(z), x, y_init, r_init, squared)

    def value_and_grad_z(z):
        theta = _from_z(z)
        val, g = qmle_value_grad(theta, x, y_init, r_init, squared)
        g = g.copy()
        g[0::3] *= theta[0::3]
        return val, g

    if cfg.global_init.enabled:
        z0 = _opt.global_search(objective_z, cfg.bounds, cfg)
    elif x0 is not None:
        z0 = _to_z(_check_theta(np.asarray(x0, dtype=float)))
    else:
        scale = float(np.var(x)) if squared else float(np.mean(x))
        scale = max(scale, _BOUND_LO)
        z0 = np.empty(3 * nu)
        z0[0::3] = math.log(0.1 * scale)
        z0[1::3] = 0.1 if squared else 0.3
        z0[2::3] = 0.8 if squared else 0.5
    res = _opt.minimize(objective_z, z0, cfg, value_and_grad=value_and_grad_z)
    return _from_z(res.x), res


def fit(
    y,
    nu: int,
    start: Optional[Tuple[float, float]] = None,
    config: Optional[_opt.OptimizerConfig] = None,
    x0=None,
) -> FitResult:
    """Quasi-maximum likelihood fit of the periodic variance model.

    ``len(y)`` must be an exact multiple of ``nu``.  Starting values come
    from ``x0`` if given, from the configured global search when enabled, or
    from a moment heuristic.  Non-convergence is reported through the result
    flag (and a warning), not an exception.  The returned spec carries the
    standard-normal working law of the quasi-likelihood.
    """
    y = np.asarray(y, dtype=float)
    if start is None:
        start = default_start(y, nu)
    theta_hat, res = _run_qmle(y, nu, start, config, x0, squared=True)
    cov, m4 = asymptotic_covariance(theta_hat, y, start)
    h = variance_path(theta_hat, y, start)
    residuals = y / np.sqrt(h)
    spec = unflatten(ModelKind.PGARCH, theta_hat, innovation=InnovationSpec(Law.STD_NORMAL))
    return FitResult(
        spec=spec,
        cov=cov,
        objective=res.fun,
        n_cycles=y.size // nu,
        residuals=residuals,
        fourth_moment=m4,
        converged=res.converged,
        n_iter=res.n_iter,
    )


def _information_blocks(theta, x, start, squared, weights=None):
    """Average outer product of the scaled derivative recursion.

    Returns the 3*nu x 3*nu matrix (1/N) * sum_t w_t / r_t**2 * grad_t grad_t'
    together with the recursion path.  ``weights`` defaults to 1.
    """
    nu = theta.size // 3
    n_cycles = x.size // nu
    r, dr = derivative_path(theta, x, float(start[0]), float(start[1]), squared)
    if not np.all(np.isfinite(r)) or np.any(r <= 0):
        raise NumericsError("recursion left (0, inf) while accumulating derivatives")
    w = dr / r[:, None]
    if weights is None:
        mat = w.T @ w / n_cycles
    else:
        mat = w.T @ (w * weights[:, None]) / n_cycles
    return 0.5 * (mat + mat.T), r


def _checked_inverse(mat: np.ndarray, label: str) -> np.ndarray:
    try:
        inv = np.linalg.inv(mat)
    except np.linalg.LinAlgError as exc:
        raise CovarianceError(f"{label} is singular") from exc
    if not np.all(np.isfinite(inv)) or np.linalg.cond(mat) > 1e14:
        raise CovarianceError(f"{label} is numerically singular")
    return inv


def _warn_if_on_boundary(theta: np.ndarray):
    if np.any(theta[1::3] <= _BOUND_LO * 10) or np.any(theta[2::3] <= _BOUND_LO * 10):
        warnings.warn(
            "an estimate sits on its positivity bound; asymptotic inference "
            "assumes interior parameters",
            InferenceWarning,
            stacklevel=3,
        )


def asymptotic_covariance(theta, y, start):
    """Per-family covariance blocks of sqrt(N)*(estimate - truth).

    The information matrix is accumulated from the forward derivative
    recursion, scaled by the moment estimate of the innovation fourth moment,
    inverted, and split into the intercept / lag-observation / lag-recursion
    blocks by stride-3 indexing.  Returns ``(blocks, fourth_moment)``.
    """
    theta = _check_theta(theta)
    y = np.asarray(y, dtype=float)
    _warn_if_on_boundary(theta)
    dmat, h = _information_blocks(theta, y, start, squared=True)
    residuals = y / np.sqrt(h)
    m4 = float(np.mean(residuals**4))
    sigma = (m4 - 1.0) * _checked_inverse(dmat, "the information matrix")
    sigma = 0.5 * (sigma + sigma.T)
    blocks = {
        Family.OMEGA: sigma[0::3, 0::3],
        Family.ALPHA: sigma[1::3, 1::3],
        Family.BETA: sigma[2::3, 2::3],
    }
    return blocks, m4


# ---------------------------------------------------------------------------
# forecasting
# ---------------------------------------------------------------------------

def forecast(spec: ModelSpec, last: Tuple[float, float], horizon: int) -> np.ndarray:
    """Variance forecasts 1..horizon from the end of a complete period.

    The one-step forecast uses the next season's full recursion on
    ``last = (y, h)``; further steps propagate through the mean recursion
    ``omega + (alpha + beta) * h`` with the season advancing each step.
    """
    if spec.kind is not ModelKind.PGARCH:
        raise SpecificationError("forecast expects a PGARCH spec")
    if horizon < 1:
        raise SpecificationError("horizon must be >= 1")
    omega = spec.array(Family.OMEGA)
    alpha = spec.array(Family.ALPHA)
    beta = spec.array(Family.BETA)
    y_last, h_last = float(last[0]), float(last[1])
    if not h_last > 0:
        raise SpecificationError("h_last must be positive")
    out = np.empty(horizon)
    out[0] = omega[0] + alpha[0] * y_last**2 + beta[0] * h_last
    for ell in range(2, horizon + 1):
        k = (ell - 1) % spec.nu
        out[ell - 1] = omega[k] + (alpha[k] + beta[k]) * out[ell - 2]
    return out
