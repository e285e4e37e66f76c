"""Bounded derivative-free minimization plus a population-based global
initializer for the quasi-likelihood objectives.

The local stage is a bound-projected simplex search; when a gradient callback
is supplied and polishing is enabled, the simplex solution is refined with a
bounded quasi-Newton pass.  Covariance matrices are never derived from the
optimizer; they come from the analytic information-matrix path.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

__all__ = [
    "GlobalInitConfig",
    "OptimizerConfig",
    "MinimizeResult",
    "ConvergenceWarning",
    "minimize",
    "global_search",
]


class ConvergenceWarning(UserWarning):
    """The local optimizer stopped on its iteration budget."""


@dataclass(frozen=True)
class GlobalInitConfig:
    enabled: bool = False
    population: int = 100
    generations: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.enabled and self.population < 4:
            raise ValueError("global search needs a population of at least 4")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 20000
    tol_obj: float = 1e-8
    tol_step: float = 1e-6
    bounds: Optional[np.ndarray] = None  # shape (n, 2) rows [lo, hi]
    global_init: GlobalInitConfig = field(default_factory=GlobalInitConfig)
    polish: bool = True

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be positive")
        if not (self.tol_obj > 0 and self.tol_step > 0):
            raise ValueError("tolerances must be > 0")
        if self.bounds is not None:
            b = np.asarray(self.bounds, dtype=float)
            if b.ndim != 2 or b.shape[1] != 2 or np.any(b[:, 0] >= b[:, 1]):
                raise ValueError("bounds must be (n, 2) with lo < hi per coordinate")
            object.__setattr__(self, "bounds", b)

    def with_bounds(self, bounds) -> "OptimizerConfig":
        return replace(self, bounds=np.asarray(bounds, dtype=float))


@dataclass(frozen=True)
class MinimizeResult:
    x: np.ndarray
    fun: float
    converged: bool
    n_iter: int


def _clip(x: np.ndarray, bounds: Optional[np.ndarray]) -> np.ndarray:
    if bounds is None:
        return x
    return np.clip(x, bounds[:, 0], bounds[:, 1])


def _guarded(objective, bounds):
    def fun(x):
        v = objective(_clip(np.asarray(x, dtype=float), bounds))
        return v if np.isfinite(v) else np.inf

    return fun


def minimize(
    objective: Callable[[np.ndarray], float],
    x0: Sequence[float],
    config: Optional[OptimizerConfig] = None,
    value_and_grad: Optional[Callable[[np.ndarray], Tuple[float, np.ndarray]]] = None,
) -> MinimizeResult:
    """Minimize ``objective`` from ``x0`` under the per-coordinate box bounds.

    The result never exceeds the starting objective, all iterates respect the
    bounds, and the run is deterministic in (x0, config).  Non-finite values
    away from the start are treated as rejected (+inf) trial points; a
    non-finite value at ``x0`` itself is an error.
    """
    cfg = config or OptimizerConfig()
    x0 = _clip(np.asarray(x0, dtype=float), cfg.bounds)
    fun = _guarded(objective, cfg.bounds)
    f0 = fun(x0)
    if not np.isfinite(f0):
        raise ValueError("objective is not finite at the starting point")

    scipy_bounds = None if cfg.bounds is None else [tuple(row) for row in cfg.bounds]
    res = _scipy_minimize(
        fun,
        x0,
        method="Nelder-Mead",
        bounds=scipy_bounds,
        options={
            "maxiter": cfg.max_iters,
            "maxfev": cfg.max_iters,
            "xatol": cfg.tol_step,
            "fatol": cfg.tol_obj,
            "adaptive": True,
        },
    )
    best_x, best_f = _clip(res.x, cfg.bounds), float(res.fun)
    converged = bool(res.success)
    n_iter = int(res.nit)

    if cfg.polish and value_and_grad is not None:
        def fun_grad(x):
            v, g = value_and_grad(_clip(np.asarray(x, dtype=float), cfg.bounds))
            if not np.isfinite(v):
                return np.inf, np.zeros_like(g)
            return v, g

        pol = _scipy_minimize(
            fun_grad,
            best_x,
            jac=True,
            method="L-BFGS-B",
            bounds=scipy_bounds,
            options={"maxiter": cfg.max_iters, "ftol": cfg.tol_obj * 1e-2},
        )
        if np.isfinite(pol.fun) and pol.fun < best_f:
            best_x, best_f = _clip(pol.x, cfg.bounds), float(pol.fun)
            converged = converged or bool(pol.success)
        n_iter += int(pol.nit)

    if best_f > f0:  # never leave the caller worse off than where it started
        best_x, best_f = x0, f0
    if not converged:
        warnings.warn(
            "optimizer stopped on its iteration budget before meeting tolerances",
            ConvergenceWarning,
            stacklevel=2,
        )
    return MinimizeResult(x=best_x, fun=best_f, converged=converged, n_iter=n_iter)


def global_search(
    objective: Callable[[np.ndarray], float],
    bounds,
    config: Optional[OptimizerConfig] = None,
) -> np.ndarray:
    """Population search over the box: tournament selection, blend crossover,
    Gaussian mutation, single-elite survival.  Returns the best point found;
    deterministic given the configured seed."""
    cfg = config or OptimizerConfig(global_init=GlobalInitConfig(enabled=True))
    gcfg = cfg.global_init
    if gcfg.population < 4:
        raise ValueError("population must be at least 4")
    bounds = np.asarray(bounds, dtype=float)
    lo, hi = bounds[:, 0], bounds[:, 1]
    width = hi - lo
    ndim = lo.size
    rng = np.random.default_rng(gcfg.seed)
    fun = _guarded(objective, bounds)

    pop = lo + rng.random((gcfg.population, ndim)) * width
    fit = np.array([fun(ind) for ind in pop])

    mut_sd = 0.05 * width
    for _ in range(gcfg.generations):
        order = np.argsort(fit)
        elite = pop[order[0]].copy()
        elite_f = fit[order[0]]

        def pick_parent():
            cand = rng.integers(0, gcfg.population, size=3)
            return pop[cand[np.argmin(fit[cand])]]

        children = np.empty_like(pop)
        children[0] = elite
        for i in range(1, gcfg.population):
            pa, pb = pick_parent(), pick_parent()
            cmin = np.minimum(pa, pb)
            cmax = np.maximum(pa, pb)
            spread = cmax - cmin
            child = rng.uniform(cmin - 0.5 * spread, cmax + 0.5 * spread + 1e-300)
            mutate = rng.random(ndim) < 0.1
            child = np.where(mutate, child + rng.normal(0.0, mut_sd), child)
            children[i] = np.clip(child, lo, hi)
        pop = children
        fit = np.array([fun(ind) for ind in pop])
        if fit[0] > elite_f:  # elitism: generation best never regresses
            pop[0], fit[0] = elite, elite_f

    return pop[np.argmin(fit)].copy()
