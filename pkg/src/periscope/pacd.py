"""Simulation, exponential quasi-likelihood estimation, innovation-variance
estimation, sandwich covariance, and forecasting for the periodic
conditional-duration model of order (1,1).

The observation equation is ``u_t = psi_t * xi_t`` with
``psi_t = lambda_{t mod nu} + gamma_{t mod nu} * u_{t-1} + delta_{t mod nu} * psi_{t-1}``
and unit-mean innovations whose variance varies with the season.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import optimize as _opt
from ._kernels import qmle_value, recursion_path, simulate_recursion
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
from .pgarch import (
    CovarianceError,
    DivergenceError,
    NumericsError,
    _check_theta,
    _checked_inverse,
    _information_blocks,
    _rng,
    _run_qmle,
    _warn_if_on_boundary,
)

__all__ = [
    "DurationPath",
    "sample_gamma_unit_mean",
    "simulate",
    "duration_path",
    "eqmle_objective",
    "fit",
    "estimate_sigma_sq",
    "estimate_lambda_diag",
    "asymptotic_covariance",
    "forecast",
]


def sample_gamma_unit_mean(sigma_sq, size: Optional[int] = None, rng=None) -> np.ndarray:
    """Unit-mean gamma draws with variance ``sigma_sq`` (shape = rate = 1/sigma_sq).

    ``sigma_sq`` may be a scalar or an array broadcast over the draws.
    """
    sigma_sq = np.asarray(sigma_sq, dtype=float)
    if np.any(~(sigma_sq > 0)):
        raise SpecificationError("sigma_sq must be strictly positive")
    rng = _rng(rng)
    shape = 1.0 / sigma_sq
    return rng.gamma(shape, sigma_sq, size=size)


@dataclass(frozen=True)
class DurationPath:
    """A simulated trajectory: durations ``u``, conditional durations ``psi``,
    and the pre-sample pair ``start = (u_init, psi_init)``."""

    psi: np.ndarray
    u: np.ndarray
    start: Tuple[float, float]

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=float)
        u = np.asarray(self.u, dtype=float)
        if psi.size != u.size:
            raise SpecificationError("psi and u must have equal length")
        if np.any(~(psi > 0)) or np.any(~(u >= 0)):
            raise SpecificationError("psi must be positive and u non-negative")
        for a in (psi, u):
            a.setflags(write=False)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "start", (float(self.start[0]), float(self.start[1])))


def _draw_innovations(spec: ModelSpec, size: int, rng) -> np.ndarray:
    inn = spec.innovation
    if inn.law is Law.UNIT_EXPONENTIAL:
        return rng.exponential(1.0, size=size)
    if inn.law is Law.GAMMA_UNIT_MEAN:
        sigma_sq = spec.array(Family.SIGMA_SQ)
        per_step = sigma_sq[np.arange(size) % spec.nu]
        return sample_gamma_unit_mean(per_step, rng=rng)
    raise SpecificationError(
        f"innovation law {inn.law.value!r} is not a positive law for a duration model"
    )


def simulate(
    spec: ModelSpec,
    n_total: int,
    burn_in: int = 0,
    start: Optional[Tuple[float, float]] = None,
    innovations: Optional[np.ndarray] = None,
    rng=None,
) -> DurationPath:
    """Simulate ``n_total`` steps and discard the first ``burn_in``; the
    returned ``start`` holds the last burn-in duration and conditional
    duration.  ``innovations`` overrides the draws (test hook)."""
    if spec.kind is not ModelKind.PACD:
        raise SpecificationError("simulate expects a PACD spec")
    if not (n_total > burn_in >= 0):
        raise SpecificationError("need n_total > burn_in >= 0")
    eta = flatten(spec)
    if start is None:
        lam = float(np.mean(spec.array(Family.LAMBDA)))
        start = (lam, lam)
    if innovations is None:
        innovations = _draw_innovations(
            spec, n_total, _rng(spec.innovation.seed if rng is None else rng)
        )
    else:
        innovations = np.asarray(innovations, dtype=float)
        if innovations.size < n_total:
            raise SpecificationError("innovations must supply at least n_total draws")
        innovations = innovations[:n_total]
    u, psi, bad = simulate_recursion(eta, innovations, float(start[0]), float(start[1]), False)
    if bad >= 0:
        raise DivergenceError(bad)
    if burn_in:
        return DurationPath(
            psi=psi[burn_in:], u=u[burn_in:], start=(u[burn_in - 1], psi[burn_in - 1])
        )
    return DurationPath(psi=psi, u=u, start=start)


def duration_path(eta, u, start) -> np.ndarray:
    """Conditional durations implied by ``eta`` along observed durations ``u``."""
    eta = _check_theta(eta)
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        raise SpecificationError("u must be non-empty")
    psi = recursion_path(eta, u, float(start[0]), float(start[1]), False)
    if not np.all(np.isfinite(psi)) or np.any(psi <= 0):
        bad = int(np.nonzero(~(np.isfinite(psi) & (psi > 0)))[0][0])
        raise NumericsError(f"conditional duration left (0, inf) at index {bad}")
    return psi


def eqmle_objective(eta, u, start) -> float:
    """Exponential quasi-likelihood criterion: mean of log(psi_t) + u_t / psi_t."""
    eta = _check_theta(eta)
    u = np.asarray(u, dtype=float)
    return float(qmle_value(eta, u, float(start[0]), float(start[1]), False))


def default_start(u: np.ndarray, nu: int) -> Tuple[float, float]:
    """Pre-sample values from the data: both set to the last duration of the
    first period."""
    return float(u[nu - 1]), float(u[nu - 1])


def estimate_sigma_sq(u, psi_hat, nu: int) -> np.ndarray:
    """Per-season innovation variances from relative fitting errors.

    sigma_sq[k] is the mean over cycles of ((u - psi_hat) / psi_hat)**2 at
    season ``k``.  Returned as a plain vector: an exact fit gives zeros, which
    the strictly positive variance family would reject.
    """
    u = np.asarray(u, dtype=float)
    psi_hat = np.asarray(psi_hat, dtype=float)
    if u.size != psi_hat.size or u.size % nu:
        raise SpecificationError("u and psi_hat must have equal length divisible by nu")
    rel = ((u - psi_hat) / psi_hat) ** 2
    return rel.reshape(-1, nu).mean(axis=0)


def estimate_lambda_diag(xi_hat, sigma_sq_hat, nu: int) -> np.ndarray:
    """Per-season variances of the squared centered residuals around their
    season variance: the diagonal of the innovation-variance covariance."""
    xi_hat = np.asarray(xi_hat, dtype=float)
    sigma_sq_hat = np.asarray(sigma_sq_hat, dtype=float)
    if xi_hat.size % nu or sigma_sq_hat.size != nu:
        raise SpecificationError("need len(xi_hat) divisible by nu and len(sigma_sq_hat) == nu")
    dev = (xi_hat - 1.0) ** 2
    return ((dev.reshape(-1, nu) - sigma_sq_hat) ** 2).mean(axis=0)


def fit(
    u,
    nu: int,
    start: Optional[Tuple[float, float]] = None,
    config: Optional[_opt.OptimizerConfig] = None,
    x0=None,
) -> FitResult:
    """Exponential quasi-maximum likelihood fit of the periodic duration model.

    The recursion coefficients are estimated first; the per-season innovation
    variances are then plugged in from the residuals, and the sandwich
    covariance is built around them.  The returned spec carries the estimated
    unit-mean gamma innovation law.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0):
        raise SpecificationError("durations must be non-negative")
    if start is None:
        start = default_start(u, nu)
    eta_hat, res = _run_qmle(u, nu, start, config, x0, squared=False)
    psi_hat = duration_path(eta_hat, u, start)
    residuals = u / psi_hat
    sigma_sq = estimate_sigma_sq(u, psi_hat, nu)
    if np.any(sigma_sq <= 0):
        raise SpecificationError(
            "estimated innovation variance is zero; the data admit no duration model"
        )
    lam_diag = estimate_lambda_diag(residuals, sigma_sq, nu)
    cov = asymptotic_covariance(eta_hat, u, start, sigma_sq)
    cov[Family.SIGMA_SQ] = np.diag(lam_diag)
    spec = unflatten(
        ModelKind.PACD,
        eta_hat,
        innovation=InnovationSpec(Law.GAMMA_UNIT_MEAN),
        sigma_sq=sigma_sq,
    )
    return FitResult(
        spec=spec,
        cov=cov,
        objective=res.fun,
        n_cycles=u.size // nu,
        residuals=residuals,
        fourth_moment=None,
        converged=res.converged,
        n_iter=res.n_iter,
    )


def asymptotic_covariance(eta, u, start, sigma_sq_hat):
    """Sandwich covariance blocks of sqrt(N)*(estimate - truth).

    Builds the unweighted and variance-weighted information matrices from the
    derivative recursion and returns the stride-3 blocks of
    inv(G) @ K @ inv(G) for the intercept / lag-duration / lag-recursion
    families.
    """
    eta = _check_theta(eta)
    u = np.asarray(u, dtype=float)
    sigma_sq_hat = np.asarray(sigma_sq_hat, dtype=float)
    nu = eta.size // 3
    if sigma_sq_hat.size != nu:
        raise SpecificationError("sigma_sq_hat must have length nu")
    _warn_if_on_boundary(eta)
    gmat, _ = _information_blocks(eta, u, start, squared=False)
    weights = sigma_sq_hat[np.arange(u.size) % nu]
    kmat, _ = _information_blocks(eta, u, start, squared=False, weights=weights)
    ginv = _checked_inverse(gmat, "the outer-product matrix")
    xi = ginv @ kmat @ ginv
    xi = 0.5 * (xi + xi.T)
    return {
        Family.LAMBDA: xi[0::3, 0::3],
        Family.GAMMA: xi[1::3, 1::3],
        Family.DELTA: xi[2::3, 2::3],
    }


def forecast(spec: ModelSpec, last: Tuple[float, float], horizon: int) -> np.ndarray:
    """Duration forecasts 1..horizon from the end of a complete period."""
    if spec.kind is not ModelKind.PACD:
        raise SpecificationError("forecast expects a PACD spec")
    if horizon < 1:
        raise SpecificationError("horizon must be >= 1")
    lam = spec.array(Family.LAMBDA)
    gam = spec.array(Family.GAMMA)
    dlt = spec.array(Family.DELTA)
    u_last, psi_last = float(last[0]), float(last[1])
    if not psi_last > 0:
        raise SpecificationError("psi_last must be positive")
    out = np.empty(horizon)
    out[0] = lam[0] + gam[0] * u_last + dlt[0] * psi_last
    for ell in range(2, horizon + 1):
        k = (ell - 1) % spec.nu
        out[ell - 1] = lam[k] + (gam[k] + dlt[k]) * out[ell - 2]
    return out
