"""Model-adequacy and forecast-quality statistics, plus a Monte-Carlo
estimator of the top Lyapunov exponent of the random coefficient products
that govern stability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional

import numpy as np
from scipy.stats import chi2

from .core import Family, Law, ModelKind, ModelSpec, SpecificationError
from .pacd import sample_gamma_unit_mean
from .pgarch import _rng, sample_ged

__all__ = [
    "acf",
    "ljung_box",
    "LjungBoxResult",
    "forecast_errors",
    "ForecastErrors",
    "ForecastReport",
    "descriptive_stats",
    "DescriptiveStats",
    "season_slices",
    "lyapunov_estimate",
]


def acf(x, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags 1..max_lag (mean-removed, biased
    normalization by the lag-0 sum of squares)."""
    x = np.asarray(x, dtype=float)
    if not 1 <= max_lag < x.size:
        raise SpecificationError("need len(x) > max_lag >= 1")
    centered = x - x.mean()
    denom = float(centered @ centered)
    if denom == 0.0:
        raise SpecificationError("series has zero variance")
    return np.array(
        [float(centered[:-k] @ centered[k:]) / denom for k in range(1, max_lag + 1)]
    )


class LjungBoxResult(NamedTuple):
    statistic: float
    p_value: float


def ljung_box(x, lag: int) -> LjungBoxResult:
    """Portmanteau test of no autocorrelation up to ``lag``.

    Q = n(n+2) * sum_k rho_k**2 / (n-k), referred to a chi-square with
    ``lag`` degrees of freedom (no fitted-parameter correction).
    """
    x = np.asarray(x, dtype=float)
    n = x.size
    rho = acf(x, lag)
    k = np.arange(1, lag + 1)
    q = float(n * (n + 2) * np.sum(rho**2 / (n - k)))
    return LjungBoxResult(statistic=q, p_value=float(chi2.sf(q, lag)))


class ForecastErrors(NamedTuple):
    rmsfe: float
    mafe: float


def forecast_errors(actual, predicted) -> ForecastErrors:
    """Root-mean-square and mean-absolute errors of paired forecasts."""
    actual = np.asarray(actual, dtype=float)
    predicted = np.asarray(predicted, dtype=float)
    if actual.size != predicted.size or actual.size == 0:
        raise SpecificationError("actual and predicted must be non-empty and paired")
    diff = actual - predicted
    return ForecastErrors(
        rmsfe=float(np.sqrt(np.mean(diff**2))), mafe=float(np.mean(np.abs(diff)))
    )


@dataclass(frozen=True)
class ForecastReport:
    """Point forecasts over a holdout window with their error summary."""

    horizon: int
    predicted: np.ndarray
    actual: np.ndarray
    rmsfe: float
    mafe: float

    @classmethod
    def build(cls, actual, predicted) -> "ForecastReport":
        err = forecast_errors(actual, predicted)
        return cls(
            horizon=len(np.atleast_1d(predicted)),
            predicted=np.asarray(predicted, dtype=float),
            actual=np.asarray(actual, dtype=float),
            rmsfe=err.rmsfe,
            mafe=err.mafe,
        )


@dataclass(frozen=True)
class DescriptiveStats:
    minimum: float
    maximum: float
    mean: float
    std_dev: float
    kurtosis: float
    skewness: float


def descriptive_stats(x) -> DescriptiveStats:
    """Location, spread, and moment-based shape statistics.

    The standard deviation is the sample (n-1) estimate; skewness and
    kurtosis are plain moment ratios with kurtosis on the non-excess
    convention (a normal sample is near 3).  Shape statistics are NaN for a
    constant series.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise SpecificationError("x must be non-empty")
    mean = float(x.mean())
    centered = x - mean
    m2 = float(np.mean(centered**2))
    if m2 == 0.0:
        skew = kurt = float("nan")
    else:
        skew = float(np.mean(centered**3) / m2**1.5)
        kurt = float(np.mean(centered**4) / m2**2)
    sd = float(x.std(ddof=1)) if x.size > 1 else float("nan")
    return DescriptiveStats(
        minimum=float(x.min()),
        maximum=float(x.max()),
        mean=mean,
        std_dev=sd,
        kurtosis=kurt,
        skewness=skew,
    )


def season_slices(x, nu: int) -> List[np.ndarray]:
    """Per-season subseries: element k collects x[t] with t % nu == k."""
    x = np.asarray(x, dtype=float)
    if nu < 1:
        raise SpecificationError("nu must be positive")
    return [x[k::nu] for k in range(nu)]


# ---------------------------------------------------------------------------
# Lyapunov exponent
# ---------------------------------------------------------------------------

def _spectral_norms(p: np.ndarray) -> np.ndarray:
    """Largest singular values of a batch of 2x2 matrices (closed form)."""
    fro2 = np.einsum("nij,nij->n", p, p)
    det = p[:, 0, 0] * p[:, 1, 1] - p[:, 0, 1] * p[:, 1, 0]
    inner = np.sqrt(np.maximum(fro2**2 - 4.0 * det**2, 0.0))
    return np.sqrt(np.maximum((fro2 + inner) / 2.0, 0.0))


def _innovation_matrix(spec: ModelSpec, n_paths: int, n_steps: int, rng) -> np.ndarray:
    inn = spec.innovation
    size = (n_paths, n_steps)
    if spec.kind is ModelKind.PGARCH:
        if inn.law is Law.STD_NORMAL:
            return rng.standard_normal(size)
        if inn.law is Law.GED:
            return sample_ged(inn.shape, size, rng)
    else:
        if inn.law is Law.UNIT_EXPONENTIAL:
            return rng.exponential(1.0, size=size)
        if inn.law is Law.GAMMA_UNIT_MEAN:
            sigma_sq = spec.array(Family.SIGMA_SQ)
            per_step = np.broadcast_to(sigma_sq[np.arange(n_steps) % spec.nu], size)
            return sample_gamma_unit_mean(per_step, rng=rng)
    raise SpecificationError(f"innovation law {inn.law.value!r} does not match {spec.kind.value}")


def lyapunov_estimate(
    spec: ModelSpec,
    n_steps: int,
    n_paths: int = 32,
    seed: int = 0,
    innovations: Optional[np.ndarray] = None,
) -> float:
    """Monte-Carlo per-step growth rate of the random coefficient products.

    Each step multiplies by the 2x2 matrix [[b*e, c*e], [b, c]] built from the
    season's lag coefficients (e is the squared innovation for the variance
    model, the raw innovation for the duration model).  Products are
    renormalized by their spectral norm every period to avoid overflow, and
    the average of log-norm / n_steps over paths is returned.  Negative
    values indicate stability; multiply by nu for the per-cycle exponent.
    """
    if n_steps < 10 * spec.nu:
        raise SpecificationError("n_steps must be at least 10*nu")
    if n_paths < 1:
        raise SpecificationError("n_paths must be >= 1")
    if spec.kind is ModelKind.PGARCH:
        bvec = spec.array(Family.ALPHA)
        cvec = spec.array(Family.BETA)
        square = True
    else:
        bvec = spec.array(Family.GAMMA)
        cvec = spec.array(Family.DELTA)
        square = False
    if innovations is None:
        eps = _innovation_matrix(spec, n_paths, n_steps, _rng(seed))
    else:
        eps = np.broadcast_to(np.asarray(innovations, dtype=float), (n_paths, n_steps))
    e = eps**2 if square else eps

    prod = np.broadcast_to(np.eye(2), (n_paths, 2, 2)).copy()
    logs = np.zeros(n_paths)
    step = np.empty((n_paths, 2, 2))
    for t in range(n_steps):
        k = t % spec.nu
        step[:, 0, 0] = bvec[k] * e[:, t]
        step[:, 0, 1] = cvec[k] * e[:, t]
        step[:, 1, 0] = bvec[k]
        step[:, 1, 1] = cvec[k]
        prod = step @ prod
        if (t + 1) % spec.nu == 0 or t == n_steps - 1:
            norms = _spectral_norms(prod)
            with np.errstate(divide="ignore"):
                logs += np.log(norms)
            safe = np.where(norms > 0, norms, 1.0)
            prod /= safe[:, None, None]
    return float(np.mean(logs) / n_steps)
