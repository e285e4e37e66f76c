"""Cosine/sine representation of periodic parameter vectors, covariance
propagation, Bonferroni-corrected coefficient tests, and parsimonious model
reconstruction.

Two matrices matter here.  ``orthonormal_basis(nu)`` is the real orthonormal
harmonic basis (row 0 constant, then interleaved cosine and sine rows);
``build_transform(nu)`` rescales its rows so the transformed vector holds the
mean level followed by the cosine/sine amplitudes of each harmonic, i.e. the
coefficients of

    x_t = f_0 + sum_r [ f_{2r-1} cos(2 pi r t / nu) + f_{2r} sin(2 pi r t / nu) ].

The rescaled map is intentionally not orthogonal; Z statistics are invariant
to the rescaling, so tests carried out on the amplitude scale agree with
tests on the orthonormal scale.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Dict, Optional

import numpy as np
from scipy.stats import norm

from .core import Family, FitResult, ModelSpec, PeriodicVector, SpecificationError

__all__ = [
    "FourierCoefs",
    "Reduction",
    "FourierReduction",
    "PositivityError",
    "UntestableCoefficientWarning",
    "orthonormal_basis",
    "build_transform",
    "inverse_transform",
    "analyze",
    "synthesize",
    "propagate_covariance",
    "bonferroni_threshold",
    "z_scores",
    "significance_mask",
    "reduce_model",
]


class PositivityError(ValueError):
    """A reconstructed parameter vector violates its positivity class."""

    def __init__(self, family: Family, season: int, value: float):
        super().__init__(
            f"reconstructed {family.value}[{season}] = {value:.6g} violates positivity"
        )
        self.family = family
        self.season = season
        self.value = value


class UntestableCoefficientWarning(UserWarning):
    """A coefficient had non-positive variance and was retained untested."""


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def _amplitude_scaling(nu: int) -> np.ndarray:
    d = np.full(nu, np.sqrt(2.0 / nu))
    d[0] = nu**-0.5
    if nu % 2 == 0:
        d[-1] = nu**-0.5
    return d


@lru_cache(maxsize=None)
def orthonormal_basis(nu: int) -> np.ndarray:
    """Real orthonormal harmonic basis of order ``nu``.

    Materialized by pairing the conjugate rows of the unitary discrete
    Fourier matrix; the imaginary parts must cancel to below 1e-10, which is
    asserted rather than assumed.
    """
    if nu < 1:
        raise SpecificationError("nu must be a positive integer")
    t = np.arange(nu)
    dft = np.exp(-2j * np.pi * np.outer(t, t) / nu) / np.sqrt(nu)
    pair = np.zeros((nu, nu), dtype=complex)
    pair[0, 0] = 1.0
    for r in range(1, (nu - 1) // 2 + 1):
        pair[2 * r - 1, r] = 2**-0.5
        pair[2 * r - 1, nu - r] = 2**-0.5
        pair[2 * r, r] = 1j * 2**-0.5
        pair[2 * r, nu - r] = -1j * 2**-0.5
    if nu % 2 == 0:
        pair[nu - 1, nu // 2] = 1.0
    basis = pair @ dft
    worst = np.abs(basis.imag).max()
    if worst >= 1e-10:
        raise AssertionError(f"imaginary parts failed to cancel: {worst:g}")
    out = np.ascontiguousarray(basis.real)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def build_transform(nu: int) -> np.ndarray:
    """Amplitude-scale coefficient map: row 0 averages (entries 1/nu), and a
    constant vector transforms to (level, 0, ..., 0)."""
    t = _amplitude_scaling(nu)[:, None] * orthonormal_basis(nu)
    t = np.ascontiguousarray(t)
    t.setflags(write=False)
    return t


@lru_cache(maxsize=None)
def inverse_transform(nu: int) -> np.ndarray:
    """Exact inverse of :func:`build_transform` (basis transpose, rescaled)."""
    t = orthonormal_basis(nu).T / _amplitude_scaling(nu)[None, :]
    t = np.ascontiguousarray(t)
    t.setflags(write=False)
    return t


@dataclass(frozen=True)
class FourierCoefs:
    """Amplitude-scale coefficients of one parameter family, optionally with
    their propagated covariance and significance mask."""

    coefs: np.ndarray
    cov: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None
    alpha_level: Optional[float] = None
    family: Optional[Family] = None

    def __post_init__(self):
        coefs = np.asarray(self.coefs, dtype=float)
        coefs.setflags(write=False)
        object.__setattr__(self, "coefs", coefs)
        if self.cov is not None:
            cov = np.asarray(self.cov, dtype=float)
            if cov.shape != (coefs.size, coefs.size):
                raise SpecificationError("cov must be square of matching order")
            cov.setflags(write=False)
            object.__setattr__(self, "cov", cov)
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.size != coefs.size or not mask[0]:
                raise SpecificationError("mask must match coefs and always retain index 0")
            mask.setflags(write=False)
            object.__setattr__(self, "mask", mask)

    @property
    def nu(self) -> int:
        return self.coefs.size

    def masked(self) -> np.ndarray:
        """Coefficients with unretained entries set to zero."""
        if self.mask is None:
            return self.coefs.copy()
        return np.where(self.mask, self.coefs, 0.0)


def analyze(x) -> FourierCoefs:
    """Amplitude-scale coefficients of a periodic vector."""
    family = None
    if isinstance(x, PeriodicVector):
        family = x.family
        x = x.values
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise SpecificationError("x must be a non-empty vector")
    return FourierCoefs(coefs=build_transform(x.size) @ x, family=family)


def synthesize(f: FourierCoefs, nu: Optional[int] = None):
    """Reconstruct the periodic vector; the mask, when present, zeroes the
    unretained coefficients first.  Returns a PeriodicVector when the family
    is known, else a plain array."""
    if nu is not None and nu != f.nu:
        raise SpecificationError(f"coefficient order {f.nu} does not match nu={nu}")
    x = inverse_transform(f.nu) @ f.masked()
    if f.family is not None:
        return PeriodicVector(f.family, x)
    return x


def propagate_covariance(gamma: np.ndarray, nu: Optional[int] = None) -> np.ndarray:
    """Covariance of the amplitude-scale coefficients given the covariance of
    the parameter vector (congruence by the coefficient map)."""
    gamma = np.asarray(gamma, dtype=float)
    if gamma.ndim != 2 or gamma.shape[0] != gamma.shape[1]:
        raise SpecificationError("gamma must be square")
    if nu is not None and gamma.shape[0] != nu:
        raise SpecificationError("gamma order does not match nu")
    t = build_transform(gamma.shape[0])
    r = t @ gamma @ t.T
    return 0.5 * (r + r.T)


# ---------------------------------------------------------------------------
# significance testing
# ---------------------------------------------------------------------------

def bonferroni_threshold(alpha: float, n_tests: int) -> float:
    """Two-sided standard-normal critical value at family-wise level ``alpha``
    split over ``n_tests`` simultaneous tests."""
    if not 0 < alpha < 1:
        raise SpecificationError("alpha must lie in (0, 1)")
    if n_tests < 1:
        raise SpecificationError("n_tests must be >= 1")
    return float(norm.ppf(1.0 - alpha / (2.0 * n_tests)))


def z_scores(coefs: np.ndarray, cov: np.ndarray, n_cycles: int) -> np.ndarray:
    """Z statistics coef / sqrt(var / N); index 0 is never tested (NaN).

    Entries with non-positive variance are NaN as well.
    """
    coefs = np.asarray(coefs, dtype=float)
    var = np.diag(np.asarray(cov, dtype=float)) / float(n_cycles)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(var > 0, coefs / np.sqrt(var), np.nan)
    z[0] = np.nan
    return z


def significance_mask(
    coefs,
    cov,
    n_cycles: int,
    alpha: float = 0.05,
    n_tests: Optional[int] = None,
) -> np.ndarray:
    """Boolean retention mask from Bonferroni-corrected two-sided Z tests.

    Index 0 (the mean level) is always retained.  Tested indices with
    non-positive variance cannot be assessed and are retained conservatively,
    with a warning.
    """
    coefs = np.asarray(coefs, dtype=float)
    if n_cycles < 1:
        raise SpecificationError("n_cycles must be >= 1")
    m = coefs.size
    if n_tests is None:
        n_tests = m - 1
    mask = np.ones(m, dtype=bool)
    if m == 1 or n_tests == 0:
        return mask
    threshold = bonferroni_threshold(alpha, n_tests)
    var = np.diag(np.asarray(cov, dtype=float)) / float(n_cycles)
    for i in range(1, m):
        if var[i] > 0:
            mask[i] = abs(coefs[i]) / np.sqrt(var[i]) > threshold
        else:
            warnings.warn(
                f"coefficient {i} has non-positive variance and is retained untested",
                UntestableCoefficientWarning,
                stacklevel=2,
            )
            mask[i] = True
    return mask


# ---------------------------------------------------------------------------
# model reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Reduction:
    """A parsimonious model plus the per-family coefficient diagnostics."""

    spec: ModelSpec
    coefs: Dict[Family, "FourierCoefs"]
    alpha: float

    @property
    def n_parameters(self) -> int:
        return int(sum(c.mask.sum() for c in self.coefs.values()))

    @property
    def collapsed(self) -> bool:
        """True when only the mean levels survive (constant-parameter model)."""
        return self.n_parameters == len(self.coefs)


@dataclass(frozen=True)
class FourierReduction(Reduction):
    pass


def _validated_vector(family: Family, values: np.ndarray) -> PeriodicVector:
    try:
        return PeriodicVector(family, values)
    except SpecificationError:
        arr = np.asarray(values, dtype=float)
        strict = family in (Family.OMEGA, Family.LAMBDA, Family.SIGMA_SQ)
        bad = np.nonzero(~(arr > 0) if strict else arr < 0)[0]
        season = int(bad[0]) if bad.size else 0
        raise PositivityError(family, season, float(arr[season])) from None


def reduce_model(fit: FitResult, alpha: float = 0.05) -> FourierReduction:
    """Compress every parameter family of a fitted model to its significant
    harmonics and rebuild the model from the retained coefficients.

    Fails loudly (:class:`PositivityError`) if a masked reconstruction leaves
    the family's positivity class; nothing is clipped silently.
    """
    if not fit.cov:
        raise SpecificationError("fit carries no covariance blocks")
    reduced_params = {}
    tables: Dict[Family, FourierCoefs] = {}
    for family, vec in fit.spec.params.items():
        gamma = fit.cov[family]
        f = analyze(vec)
        r = propagate_covariance(gamma, vec.nu)
        mask = significance_mask(f.coefs, r, fit.n_cycles, alpha)
        f = replace(f, cov=r, mask=mask, alpha_level=alpha)
        tables[family] = f
        reduced_params[family] = _validated_vector(family, inverse_transform(f.nu) @ f.masked())
    spec = ModelSpec(fit.spec.kind, reduced_params, fit.spec.innovation)
    return FourierReduction(spec=spec, coefs=tables, alpha=alpha)
