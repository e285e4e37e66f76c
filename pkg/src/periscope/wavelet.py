"""Orthogonal discrete wavelet transform of periodic parameter vectors,
periodic extension to power-of-two length, covariance propagation,
coefficient tests, and parsimonious reconstruction.

The transform matrix stacks the single scaling row first, then detail rows
from the coarsest resolution down to the finest, matching the pyramid with
periodic boundary handling.  Matrices are materialized explicitly (the
periods here are tiny and the covariance conjugation needs them anyway) and
cached per (family, order).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np

from ._filters import SCALING_FILTERS
from .core import Family, FitResult, ModelSpec, PeriodicVector, SpecificationError
from .harmonic import (
    PositivityError,
    Reduction,
    _validated_vector,
    significance_mask,
)

__all__ = [
    "WaveletSpec",
    "WaveletCoefs",
    "WaveletReduction",
    "transform_matrix",
    "dwt",
    "idwt",
    "periodic_extend",
    "propagate_covariance",
    "significance_mask",
    "reduce_model",
    "SUPPORTED_FAMILIES",
]

SUPPORTED_FAMILIES = tuple(SCALING_FILTERS)

_NAME_RE = re.compile(r"^(D|LA)\(?(\d+)\)?$", re.IGNORECASE)


@dataclass(frozen=True)
class WaveletSpec:
    """A named orthonormal wavelet family with periodic boundary handling.

    ``family`` accepts the extremal-phase names D1..D10 (Haar is D1) and the
    least-asymmetric names LA4..LA10, case-insensitively and with optional
    parentheses ("D(8)", "la5", "haar").
    """

    family: str
    boundary: str = "periodic"

    def __post_init__(self):
        name = str(self.family).strip()
        if name.lower() == "haar":
            name = "D1"
        else:
            m = _NAME_RE.match(name)
            if m:
                name = f"{m.group(1).upper()}{int(m.group(2))}"
        if name not in SCALING_FILTERS:
            raise SpecificationError(
                f"unsupported wavelet family {self.family!r}; "
                f"choose one of {', '.join(SUPPORTED_FAMILIES)}"
            )
        if self.boundary != "periodic":
            raise SpecificationError("only periodic boundary handling is supported")
        object.__setattr__(self, "family", name)

    @property
    def scaling_filter(self) -> np.ndarray:
        return SCALING_FILTERS[self.family]

    @property
    def wavelet_filter(self) -> np.ndarray:
        g = self.scaling_filter
        L = g.size
        return (-1.0) ** np.arange(L) * g[::-1]


_MATRIX_CACHE: Dict[Tuple[str, int], np.ndarray] = {}


def _analysis_operators(spec: WaveletSpec, m: int) -> Tuple[np.ndarray, np.ndarray]:
    """One pyramid level on length ``m``: (scaling, detail) operators m/2 x m."""
    g = spec.scaling_filter
    h = spec.wavelet_filter
    L = g.size
    smat = np.zeros((m // 2, m))
    dmat = np.zeros((m // 2, m))
    for t in range(m // 2):
        for l in range(L):
            smat[t, (2 * t + l) % m] += g[l]
            dmat[t, (2 * t + l - L + 2) % m] += h[l]
    return smat, dmat


def transform_matrix(spec: WaveletSpec, M: int) -> np.ndarray:
    """The M x M orthogonal analysis matrix, scaling row first, then detail
    blocks ordered coarse to fine."""
    if M < 2 or M & (M - 1):
        raise SpecificationError("M must be a power of two >= 2")
    key = (spec.family, M)
    cached = _MATRIX_CACHE.get(key)
    if cached is not None:
        return cached
    cur = np.eye(M)
    details = []
    m = M
    while m >= 2:
        smat, dmat = _analysis_operators(spec, m)
        details.append(dmat @ cur)
        cur = smat @ cur
        m //= 2
    w = np.vstack([cur] + details[::-1])
    err = np.abs(w @ w.T - np.eye(M)).max()
    if err > 1e-10:
        raise AssertionError(f"analysis matrix failed orthogonality: {err:g}")
    w = np.ascontiguousarray(w)
    w.setflags(write=False)
    _MATRIX_CACHE[key] = w
    return w


@dataclass(frozen=True)
class WaveletCoefs:
    """Wavelet coefficients of one (possibly extended) parameter family."""

    coefs: np.ndarray
    cov: Optional[np.ndarray] = None
    mask: Optional[np.ndarray] = None
    alpha_level: Optional[float] = None
    original_nu: Optional[int] = None
    family: Optional[Family] = None

    def __post_init__(self):
        coefs = np.asarray(self.coefs, dtype=float)
        if coefs.size < 2 or coefs.size & (coefs.size - 1):
            raise SpecificationError("coefficient length must be a power of two")
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
    def order(self) -> int:
        return self.coefs.size

    def masked(self) -> np.ndarray:
        if self.mask is None:
            return self.coefs.copy()
        return np.where(self.mask, self.coefs, 0.0)


def dwt(x, spec: WaveletSpec) -> WaveletCoefs:
    """Analysis transform of a power-of-two-length vector."""
    family = None
    if isinstance(x, PeriodicVector):
        family = x.family
        x = x.values
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise SpecificationError("x must be a vector")
    w = transform_matrix(spec, x.size)
    return WaveletCoefs(coefs=w @ x, family=family, original_nu=x.size)


def idwt(w: WaveletCoefs, spec: WaveletSpec) -> np.ndarray:
    """Inverse transform; the mask, when present, zeroes unretained entries
    first.  Returns the full extended-length vector."""
    mat = transform_matrix(spec, w.order)
    return mat.T @ w.masked()


def periodic_extend(x, gamma: Optional[np.ndarray] = None):
    """Wrap a length-nu vector (and optionally its covariance) to the nearest
    power-of-two length M >= nu: entry i maps to i mod nu.  Identity when nu
    is already a power of two."""
    if isinstance(x, PeriodicVector):
        x = x.values
    x = np.asarray(x, dtype=float)
    nu = x.size
    if nu < 1:
        raise SpecificationError("x must be non-empty")
    M = 1
    while M < nu:
        M *= 2
    M = max(M, 2)
    idx = np.arange(M) % nu
    x_ext = x[idx]
    if gamma is None:
        return x_ext, None
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (nu, nu):
        raise SpecificationError("gamma must be nu x nu")
    return x_ext, gamma[np.ix_(idx, idx)]


def propagate_covariance(gamma_ext: np.ndarray, spec: WaveletSpec) -> np.ndarray:
    """Covariance of the wavelet coefficients (orthogonal conjugation)."""
    gamma_ext = np.asarray(gamma_ext, dtype=float)
    if gamma_ext.ndim != 2 or gamma_ext.shape[0] != gamma_ext.shape[1]:
        raise SpecificationError("gamma_ext must be square")
    w = transform_matrix(spec, gamma_ext.shape[0])
    r = w @ gamma_ext @ w.T
    return 0.5 * (r + r.T)


@dataclass(frozen=True)
class WaveletReduction(Reduction):
    """A parsimonious model from wavelet-coefficient thresholding."""

    wavelet: WaveletSpec = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.wavelet is None:
            raise SpecificationError("wavelet spec is required")


def reduce_model(fit: FitResult, spec: WaveletSpec, alpha: float = 0.05) -> WaveletReduction:
    """Compress every family of a fitted model to its significant wavelet
    coefficients: extend periodically, transform, test all detail
    coefficients, invert, and keep the leading nu entries.

    Positivity violations in the reconstruction raise
    :class:`periscope.harmonic.PositivityError`.
    """
    if not fit.cov:
        raise SpecificationError("fit carries no covariance blocks")
    nu = fit.spec.nu
    reduced_params = {}
    tables: Dict[Family, WaveletCoefs] = {}
    for family, vec in fit.spec.params.items():
        x_ext, gamma_ext = periodic_extend(vec.values, fit.cov[family])
        w = dwt(x_ext, spec)
        r = propagate_covariance(gamma_ext, spec)
        mask = significance_mask(w.coefs, r, fit.n_cycles, alpha, n_tests=w.order - 1)
        w = replace(w, cov=r, mask=mask, alpha_level=alpha, original_nu=nu, family=family)
        tables[family] = w
        reduced_params[family] = _validated_vector(family, idwt(w, spec)[:nu])
    model = ModelSpec(fit.spec.kind, reduced_params, fit.spec.innovation)
    return WaveletReduction(spec=model, coefs=tables, alpha=alpha, wavelet=spec)
