"""Shared domain types: periodic parameter vectors, model specifications,
fit results, and JSON persistence.

All containers are immutable after construction (arrays are stored with the
writeable flag cleared) and safe to share across threads or processes.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Optional, Sequence, Union

import numpy as np

__all__ = [
    "Family",
    "ModelKind",
    "Law",
    "PeriodicVector",
    "InnovationSpec",
    "ModelSpec",
    "FitResult",
    "SpecificationError",
    "SchemaError",
    "StabilityWarning",
    "flatten",
    "unflatten",
    "save_model",
    "load_model",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = "periscope/1"


class SpecificationError(ValueError):
    """A domain object violates one of its invariants."""


class SchemaError(ValueError):
    """A persisted model file does not conform to the JSON schema."""


class StabilityWarning(UserWarning):
    """The product of the persistence coefficients over one period is >= 1."""


class Family(str, Enum):
    OMEGA = "Omega"
    ALPHA = "Alpha"
    BETA = "Beta"
    LAMBDA = "Lambda"
    GAMMA = "Gamma"
    DELTA = "Delta"
    SIGMA_SQ = "SigmaSq"


#: families whose entries must be strictly positive
_STRICT_POSITIVE = frozenset({Family.OMEGA, Family.LAMBDA, Family.SIGMA_SQ})
#: families whose entries must be non-negative
_NON_NEGATIVE = frozenset({Family.ALPHA, Family.BETA, Family.GAMMA, Family.DELTA})


class ModelKind(str, Enum):
    PGARCH = "PGARCH"
    PACD = "PACD"


#: parameter families required by each model kind, in recursion order
MODEL_FAMILIES = {
    ModelKind.PGARCH: (Family.OMEGA, Family.ALPHA, Family.BETA),
    ModelKind.PACD: (Family.LAMBDA, Family.GAMMA, Family.DELTA, Family.SIGMA_SQ),
}

#: families entering the interleaved quasi-likelihood parameter vector
THETA_FAMILIES = {
    ModelKind.PGARCH: (Family.OMEGA, Family.ALPHA, Family.BETA),
    ModelKind.PACD: (Family.LAMBDA, Family.GAMMA, Family.DELTA),
}

#: family multiplying the lagged observation / the lagged recursion value
PERSISTENCE_FAMILY = {ModelKind.PGARCH: Family.BETA, ModelKind.PACD: Family.DELTA}


class Law(str, Enum):
    GED = "ged"
    GAMMA_UNIT_MEAN = "gamma_unit_mean"
    STD_NORMAL = "std_normal"
    UNIT_EXPONENTIAL = "unit_exponential"


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise SpecificationError(f"{name} must be a non-empty 1-d real sequence")
    if not np.all(np.isfinite(arr)):
        raise SpecificationError(f"{name} must be finite")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PeriodicVector:
    """One periodically varying parameter family of period ``nu``.

    ``values[k]`` is the coefficient applying to every time index ``t`` with
    ``t % nu == k``.  Positivity requirements depend on the family: intercept
    and innovation-variance families must be strictly positive, the remaining
    recursion coefficients non-negative.
    """

    family: Family
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        arr = _frozen_array(self.values, f"params.{self.family.value}")
        if self.family in _STRICT_POSITIVE:
            bad = np.nonzero(~(arr > 0.0))[0]
            if bad.size:
                raise SpecificationError(
                    f"params.{self.family.value}[{bad[0]}] must be > 0, got {arr[bad[0]]!r}"
                )
        elif self.family in _NON_NEGATIVE:
            bad = np.nonzero(arr < 0.0)[0]
            if bad.size:
                raise SpecificationError(
                    f"params.{self.family.value}[{bad[0]}] must be >= 0, got {arr[bad[0]]!r}"
                )
        object.__setattr__(self, "values", arr)

    @property
    def nu(self) -> int:
        return self.values.size

    def value(self, t: int) -> float:
        """Coefficient governing time index ``t`` (periodic access)."""
        return float(self.values[t % self.nu])

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class InnovationSpec:
    """Innovation distribution descriptor plus the simulation seed.

    ``ged`` is zero-mean unit-variance with tail exponent ``shape``;
    ``gamma_unit_mean`` has mean one and per-season variance taken from the
    model's innovation-variance family; the two remaining laws are the
    parameter-free quasi-likelihood reference distributions.
    """

    law: Law = Law.STD_NORMAL
    shape: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "law", Law(self.law))
        if self.law is Law.GED:
            if self.shape is None or not (self.shape > 0):
                raise SpecificationError("ged innovation requires shape > 0")
        elif self.shape is not None:
            raise SpecificationError(f"law {self.law.value!r} takes no shape parameter")
        if not (0 <= int(self.seed) < 2**64):
            raise SpecificationError("seed must fit in 64 unsigned bits")
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class ModelSpec:
    """A fully specified periodic conditional-variance or duration model."""

    kind: ModelKind
    params: Mapping[Family, PeriodicVector]
    innovation: InnovationSpec = field(default_factory=InnovationSpec)

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        params = {Family(k): v for k, v in dict(self.params).items()}
        required = set(MODEL_FAMILIES[self.kind])
        if set(params) != required:
            missing = sorted(f.value for f in required - set(params))
            extra = sorted(f.value for f in set(params) - required)
            raise SpecificationError(
                f"{self.kind.value} requires families {sorted(f.value for f in required)}; "
                f"missing {missing}, unexpected {extra}"
            )
        for fam, vec in params.items():
            if not isinstance(vec, PeriodicVector):
                vec = PeriodicVector(fam, vec)
                params[fam] = vec
            if vec.family is not fam:
                raise SpecificationError(
                    f"params[{fam.value}] holds a {vec.family.value} vector"
                )
        nus = {v.nu for v in params.values()}
        if len(nus) != 1:
            raise SpecificationError(f"all families must share one period, got {sorted(nus)}")
        object.__setattr__(self, "params", params)
        persistence = params[PERSISTENCE_FAMILY[self.kind]].values
        if float(np.prod(persistence)) >= 1.0:
            warnings.warn(
                f"product of {PERSISTENCE_FAMILY[self.kind].value} over one period is >= 1; "
                "the model may not be stable",
                StabilityWarning,
                stacklevel=2,
            )

    @property
    def nu(self) -> int:
        return next(iter(self.params.values())).nu

    def array(self, family: Family) -> np.ndarray:
        """The length-``nu`` coefficient vector of one family."""
        return self.params[Family(family)].values


@dataclass(frozen=True)
class FitResult:
    """Point estimates plus asymptotic covariance blocks from one model fit.

    ``cov[family]`` is the nu-by-nu asymptotic covariance of
    ``sqrt(N) * (estimate - truth)`` for that family; ``n_cycles`` is N.
    ``residuals`` is ``None`` for results reloaded from disk (the file format
    does not persist them).
    """

    spec: ModelSpec
    cov: Mapping[Family, np.ndarray]
    objective: float
    n_cycles: int
    residuals: Optional[np.ndarray] = None
    fourth_moment: Optional[float] = None
    converged: bool = True
    n_iter: int = 0

    def __post_init__(self):
        cov = {}
        nu = self.spec.nu
        for fam, block in dict(self.cov).items():
            fam = Family(fam)
            block = np.asarray(block, dtype=float)
            if block.shape != (nu, nu):
                raise SpecificationError(f"cov[{fam.value}] must be {nu}x{nu}")
            if not np.allclose(block, block.T, atol=1e-8 * max(1.0, np.abs(block).max())):
                raise SpecificationError(f"cov[{fam.value}] must be symmetric")
            if np.any(np.diag(block) < 0):
                raise SpecificationError(f"cov[{fam.value}] has negative diagonal entries")
            block = block.copy()
            block.setflags(write=False)
            cov[fam] = block
        object.__setattr__(self, "cov", cov)
        if self.n_cycles < 1:
            raise SpecificationError("n_cycles must be positive")
        if self.residuals is not None:
            res = _frozen_array(self.residuals, "residuals")
            if res.size != self.n_cycles * nu:
                raise SpecificationError(
                    f"residuals must have length n_cycles*nu = {self.n_cycles * nu}"
                )
            object.__setattr__(self, "residuals", res)


# ---------------------------------------------------------------------------
# flatten / unflatten
# ---------------------------------------------------------------------------

def flatten(spec: ModelSpec) -> np.ndarray:
    """Interleave the recursion families season by season.

    Returns the length ``3*nu`` vector ``(a_0, b_0, c_0, a_1, b_1, c_1, ...)``
    where ``(a, b, c)`` are the intercept, lag-observation, and lag-recursion
    families.  The innovation-variance family of a duration model is estimated
    separately and is not part of this vector.
    """
    fams = THETA_FAMILIES[spec.kind]
    stacked = np.stack([spec.array(f) for f in fams], axis=1)
    return stacked.reshape(-1)


def unflatten(
    kind: ModelKind,
    theta: Sequence[float],
    innovation: Optional[InnovationSpec] = None,
    sigma_sq: Optional[Sequence[float]] = None,
) -> ModelSpec:
    """Inverse of :func:`flatten`.

    ``sigma_sq`` must be supplied for duration models (it travels alongside
    the interleaved vector, not inside it).
    """
    kind = ModelKind(kind)
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size % 3 != 0 or theta.size == 0:
        raise SpecificationError("theta must have length 3*nu")
    nu = theta.size // 3
    fams = THETA_FAMILIES[kind]
    params = {
        fam: PeriodicVector(fam, theta[i::3]) for i, fam in enumerate(fams)
    }
    if kind is ModelKind.PACD:
        if sigma_sq is None:
            raise SpecificationError("PACD requires sigma_sq alongside theta")
        params[Family.SIGMA_SQ] = PeriodicVector(Family.SIGMA_SQ, sigma_sq)
    elif sigma_sq is not None:
        raise SpecificationError("sigma_sq is only meaningful for PACD")
    if innovation is None:
        innovation = InnovationSpec()
    return ModelSpec(kind, params, innovation)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def _innovation_to_json(inn: InnovationSpec) -> dict:
    out = {"law": inn.law.value, "seed": inn.seed}
    if inn.shape is not None:
        out["shape"] = inn.shape
    return out


def save_model(spec: ModelSpec, fit: Optional[FitResult], path) -> None:
    """Write ``spec`` (and optionally ``fit``) as schema ``periscope/1`` JSON.

    Floats are serialized through their shortest round-tripping decimal form
    (at most 17 significant digits), so ``load_model(save_model(x)) == x``
    bit-exactly.
    """
    doc = {
        "schema": SCHEMA_VERSION,
        "kind": spec.kind.value,
        "nu": spec.nu,
        "params": {fam.value: spec.array(fam).tolist() for fam in MODEL_FAMILIES[spec.kind]},
        "innovation": _innovation_to_json(spec.innovation),
        "fit": None,
    }
    if fit is not None:
        if fit.spec.kind is not spec.kind or fit.spec.nu != spec.nu:
            raise SpecificationError("fit does not belong to the given spec")
        doc["fit"] = {
            "cov": {fam.value: block.tolist() for fam, block in fit.cov.items()},
            "objective": fit.objective,
            "fourth_moment": fit.fourth_moment,
            "n_cycles": fit.n_cycles,
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def _require(doc: dict, key: str, types, where: str):
    if key not in doc:
        raise SchemaError(f"missing field {where}{key}")
    val = doc[key]
    if not isinstance(val, types):
        raise SchemaError(f"field {where}{key} has wrong type {type(val).__name__}")
    return val


def load_model(path):
    """Read a model file; returns ``(ModelSpec, FitResult | None)``.

    Invariant violations in the stored numbers are reported with the JSON
    field path (e.g. ``params.Omega[0]``).
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("top-level JSON value must be an object")
    schema = _require(doc, "schema", str, "")
    if schema != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema {schema!r}, expected {SCHEMA_VERSION!r}")
    kind_raw = _require(doc, "kind", str, "")
    try:
        kind = ModelKind(kind_raw)
    except ValueError:
        raise SchemaError(f"unknown kind {kind_raw!r}") from None
    nu = _require(doc, "nu", int, "")
    if isinstance(nu, bool) or nu < 1:
        raise SchemaError("nu must be a positive integer")
    params_doc = _require(doc, "params", dict, "")
    params = {}
    for fam in MODEL_FAMILIES[kind]:
        vals = _require(params_doc, fam.value, list, "params.")
        if len(vals) != nu:
            raise SchemaError(f"params.{fam.value} must have length nu = {nu}")
        try:
            params[fam] = PeriodicVector(fam, vals)
        except SpecificationError as exc:
            raise SchemaError(str(exc)) from exc
    inn_doc = _require(doc, "innovation", dict, "")
    try:
        law = Law(_require(inn_doc, "law", str, "innovation."))
        innovation = InnovationSpec(
            law=law,
            shape=inn_doc.get("shape"),
            seed=inn_doc.get("seed", 0),
        )
    except (ValueError, SpecificationError) as exc:
        raise SchemaError(f"innovation: {exc}") from exc
    spec = ModelSpec(kind, params, innovation)

    fit_doc = doc.get("fit")
    if fit_doc is None:
        return spec, None
    if not isinstance(fit_doc, dict):
        raise SchemaError("fit must be an object or null")
    cov_doc = _require(fit_doc, "cov", dict, "fit.")
    cov = {}
    for name, block in cov_doc.items():
        try:
            fam = Family(name)
        except ValueError:
            raise SchemaError(f"fit.cov has unknown family {name!r}") from None
        cov[fam] = np.asarray(block, dtype=float)
    objective = _require(fit_doc, "objective", (int, float), "fit.")
    n_cycles = _require(fit_doc, "n_cycles", int, "fit.")
    fourth = fit_doc.get("fourth_moment")
    if fourth is not None and not isinstance(fourth, (int, float)):
        raise SchemaError("fit.fourth_moment must be a number or null")
    try:
        fit = FitResult(
            spec=spec,
            cov=cov,
            objective=float(objective),
            n_cycles=n_cycles,
            fourth_moment=None if fourth is None else float(fourth),
        )
    except SpecificationError as exc:
        raise SchemaError(f"fit: {exc}") from exc
    return spec, fit
