"""Seeded replication harness for the four simulation designs: data
generation, estimation started at the truth, coefficient compression, and
holdout forecast comparison of the full versus reduced model.

Each study is deterministic given its master seed; replication seeds are
spawned from it, so results do not depend on the worker count.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, Optional, Union

import numpy as np

from . import harmonic, pacd, pgarch
from . import wavelet as _wavelet
from .core import Family, InnovationSpec, Law, ModelKind, ModelSpec, PeriodicVector, flatten
from .diagnostics import forecast_errors
from .harmonic import PositivityError
from .wavelet import WaveletCoefs, WaveletSpec, dwt, idwt, periodic_extend

__all__ = ["StudyDesign", "ReplicationRecord", "StudyResult", "STUDIES", "run_study"]


@dataclass(frozen=True)
class StudyDesign:
    name: str
    kind: ModelKind
    nu: int
    n_cycles: int
    burn_in: int
    innovation_law: Law
    innovation_shape: Optional[float]
    params: Dict[Family, np.ndarray]
    reduction: Union[str, WaveletSpec]  # "fourier" or a wavelet spec
    alpha: float = 0.05

    @property
    def theta_families(self):
        fams = [Family.OMEGA, Family.ALPHA, Family.BETA]
        if self.kind is ModelKind.PACD:
            fams = [Family.LAMBDA, Family.GAMMA, Family.DELTA, Family.SIGMA_SQ]
        return fams

    def spec(self, seed: int) -> ModelSpec:
        return ModelSpec(
            self.kind,
            {f: PeriodicVector(f, v) for f, v in self.params.items()},
            InnovationSpec(self.innovation_law, self.innovation_shape, seed=seed),
        )

    def true_coefs(self) -> Dict[Family, np.ndarray]:
        """Transform-space truth per family."""
        out = {}
        for fam, vec in self.params.items():
            if self.reduction == "fourier":
                out[fam] = harmonic.build_transform(self.nu) @ vec
            else:
                x_ext, _ = periodic_extend(vec)
                out[fam] = dwt(x_ext, self.reduction).coefs
        return out


def _harmonic_design(nu: int, level: float, amp: float, wave: str) -> np.ndarray:
    t = np.arange(nu)
    osc = np.sin(2 * np.pi * t / nu) if wave == "sin" else np.cos(2 * np.pi * t / nu)
    return level + amp * osc


def _wavelet_design(wspec: WaveletSpec, coefs) -> np.ndarray:
    w = np.zeros(8)
    w[: len(coefs)] = coefs
    return idwt(WaveletCoefs(coefs=w), wspec)


def _designs() -> Dict[str, StudyDesign]:
    d5 = WaveletSpec("D5")
    d8 = WaveletSpec("D8")
    return {
        "fourier-pgarch": StudyDesign(
            name="fourier-pgarch",
            kind=ModelKind.PGARCH,
            nu=7,
            n_cycles=570,
            burn_in=399,
            innovation_law=Law.GED,
            innovation_shape=1.8,
            params={
                Family.OMEGA: _harmonic_design(7, 0.70, 0.45, "sin"),
                Family.ALPHA: _harmonic_design(7, 0.60, 0.15, "sin"),
                Family.BETA: _harmonic_design(7, 0.35, 0.20, "sin"),
            },
            reduction="fourier",
        ),
        "fourier-pacd": StudyDesign(
            name="fourier-pacd",
            kind=ModelKind.PACD,
            nu=7,
            n_cycles=284,
            burn_in=196,
            innovation_law=Law.GAMMA_UNIT_MEAN,
            innovation_shape=None,
            params={
                Family.LAMBDA: _harmonic_design(7, 0.55, 0.45, "cos"),
                Family.GAMMA: _harmonic_design(7, 0.65, 0.14, "cos"),
                Family.DELTA: _harmonic_design(7, 0.32, 0.18, "cos"),
                Family.SIGMA_SQ: _harmonic_design(7, 0.40, 0.30, "cos"),
            },
            reduction="fourier",
        ),
        "wavelet-pgarch": StudyDesign(
            name="wavelet-pgarch",
            kind=ModelKind.PGARCH,
            nu=8,
            n_cycles=499,
            burn_in=400,
            innovation_law=Law.GED,
            innovation_shape=1.8,
            params={
                Family.OMEGA: _wavelet_design(d8, [2.0, 1.0]),
                Family.ALPHA: _wavelet_design(d8, [1.9, 0.5]),
                Family.BETA: _wavelet_design(d8, [0.85, 0.35]),
            },
            reduction=d8,
        ),
        "wavelet-pacd": StudyDesign(
            name="wavelet-pacd",
            kind=ModelKind.PACD,
            nu=8,
            n_cycles=249,
            burn_in=200,
            innovation_law=Law.GAMMA_UNIT_MEAN,
            innovation_shape=None,
            params={
                Family.LAMBDA: _wavelet_design(d5, [1.9, 1.2]),
                Family.GAMMA: _wavelet_design(d5, [2.0, 0.3]),
                Family.DELTA: _wavelet_design(d5, [0.84, 0.40]),
                Family.SIGMA_SQ: _wavelet_design(d5, [1.20, 0.70]),
            },
            reduction=d5,
        ),
    }


STUDIES = _designs()


@dataclass(frozen=True)
class ReplicationRecord:
    masked_coefs: Dict[Family, np.ndarray]
    retained: Dict[Family, np.ndarray]
    n_parameters: int
    rmsfe_full: float
    rmsfe_reduced: float
    mafe_full: float
    mafe_reduced: float


def run_replication(design: StudyDesign, seed: int) -> ReplicationRecord:
    """One seeded pass: simulate, fit from the truth, reduce, forecast."""
    spec_true = design.spec(seed)
    n_est = design.n_cycles * design.nu
    n_total = design.burn_in + n_est + design.nu
    theta_true = flatten(spec_true)

    if design.kind is ModelKind.PGARCH:
        path = pgarch.simulate(spec_true, n_total, design.burn_in)
        data, holdout = path.y[:n_est], path.y[n_est:]
        fit = pgarch.fit(data, design.nu, start=path.start, x0=theta_true)
        model_path, model_forecast = pgarch.variance_path, pgarch.forecast
        observation_forecast = np.sqrt  # forecast of y is the conditional scale
    else:
        path = pacd.simulate(spec_true, n_total, design.burn_in)
        data, holdout = path.u[:n_est], path.u[n_est:]
        fit = pacd.fit(data, design.nu, start=path.start, x0=theta_true)
        model_path, model_forecast = pacd.duration_path, pacd.forecast
        observation_forecast = lambda fc: fc  # forecast of u is psi itself

    if design.reduction == "fourier":
        red = harmonic.reduce_model(fit, design.alpha)
    else:
        red = _wavelet.reduce_model(fit, design.reduction, design.alpha)

    masked = {fam: c.masked() for fam, c in red.coefs.items()}
    retained = {fam: np.asarray(c.mask, dtype=bool) for fam, c in red.coefs.items()}

    def holdout_errors(model: ModelSpec):
        r = model_path(flatten(model), data, path.start)
        fc = model_forecast(model, (data[-1], r[-1]), design.nu)
        return forecast_errors(holdout, observation_forecast(fc))

    err_full = holdout_errors(fit.spec)
    err_red = holdout_errors(red.spec)
    return ReplicationRecord(
        masked_coefs=masked,
        retained=retained,
        n_parameters=red.n_parameters,
        rmsfe_full=err_full.rmsfe,
        rmsfe_reduced=err_red.rmsfe,
        mafe_full=err_full.mafe,
        mafe_reduced=err_red.mafe,
    )


@dataclass(frozen=True)
class StudyResult:
    design: StudyDesign
    replications: int
    true_coefs: Dict[Family, np.ndarray]
    mean_coefs: Dict[Family, np.ndarray]
    rmse: Dict[Family, np.ndarray]
    retention_rate: Dict[Family, np.ndarray]
    mean_rmsfe_full: float
    mean_rmsfe_reduced: float
    mean_mafe_full: float
    mean_mafe_reduced: float
    invalid_reductions: int = 0

    @property
    def rmsfe_gain_pct(self) -> float:
        """Positive when the reduced model forecasts better on average."""
        return 100.0 * (1.0 - self.mean_rmsfe_reduced / self.mean_rmsfe_full)

    @property
    def mafe_gain_pct(self) -> float:
        return 100.0 * (1.0 - self.mean_mafe_reduced / self.mean_mafe_full)


def _replication_task(args):
    """Worker body; a positivity failure in the reduction yields None."""
    design, seed = args
    try:
        return run_replication(design, seed)
    except PositivityError:
        return None


def run_study(
    design: Union[str, StudyDesign],
    replications: int,
    seed: int = 0,
    workers: int = 1,
) -> StudyResult:
    """Run seeded replications of one design and aggregate transform-space
    estimates, RMSEs, retention rates, and forecast-error summaries.

    A replication whose masked reconstruction violates positivity yields no
    valid reduced model; such draws are discarded, counted in
    ``invalid_reductions``, and replaced from the same seed stream, keeping
    the run deterministic in (design, replications, seed).
    """
    if isinstance(design, str):
        design = STUDIES[design]
    if replications < 1:
        raise ValueError("replications must be >= 1")
    root = np.random.SeedSequence(seed)
    records = []
    rejected = 0
    attempts = 0
    while len(records) < replications:
        if attempts > 4 * replications:
            raise RuntimeError("too many invalid reductions; the design looks degenerate")
        batch = replications - len(records)
        seeds = [int(s.generate_state(1)[0]) for s in root.spawn(batch)]
        tasks = [(design, s) for s in seeds]
        attempts += batch
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                out = list(pool.map(_replication_task, tasks))
        else:
            out = [_replication_task(t) for t in tasks]
        for rec in out:
            if rec is None:
                rejected += 1
            else:
                records.append(rec)

    fams = design.theta_families
    true_coefs = design.true_coefs()
    mean_coefs, rmse, retention = {}, {}, {}
    for fam in fams:
        stack = np.stack([r.masked_coefs[fam] for r in records])
        kept = np.stack([r.retained[fam] for r in records])
        mean_coefs[fam] = stack.mean(axis=0)
        rmse[fam] = np.sqrt(np.mean((stack - true_coefs[fam]) ** 2, axis=0))
        retention[fam] = kept.mean(axis=0)
    return StudyResult(
        design=design,
        replications=replications,
        true_coefs=true_coefs,
        mean_coefs=mean_coefs,
        rmse=rmse,
        retention_rate=retention,
        mean_rmsfe_full=float(np.mean([r.rmsfe_full for r in records])),
        mean_rmsfe_reduced=float(np.mean([r.rmsfe_reduced for r in records])),
        mean_mafe_full=float(np.mean([r.mafe_full for r in records])),
        mean_mafe_reduced=float(np.mean([r.mafe_reduced for r in records])),
        invalid_reductions=rejected,
    )
