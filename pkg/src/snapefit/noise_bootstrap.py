"""Percentage noise injection and bootstrap replication of fits.

"x% Gaussian noise" means i.i.d. N(0, sigma^2) with
sigma = level * population std of the clean field values, applied per
field.  Bootstrap replication refits the model over perturbed datasets and
reports the elementwise mean and the coefficient of variation
cov% = 100 * sd / |mean| over converged replicates, with the SAMPLE
(n-1 denominator) standard deviation.

Two modes:
  fresh    -- replicate i fits clean data + noise drawn from seed + i
              (how replicated-noise tables are produced from simulations);
  residual -- fit the given (noisy) data once, then resample the fit
              residuals with replacement onto the fitted surface and refit
              (the measured-data fallback).

Replicate seeds are base seed + index, so results are independent of
execution order or parallelism.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .datasets import FieldData
from .errors import ArgumentError, BootstrapError, SnapeError
from .model import ModelSpec
from .solver import AdmmConfig, fit
from .tensor_basis import BasisSpec, Grid

__all__ = ["NoiseSpec", "BootstrapResult", "add_noise", "bootstrap"]


@dataclass(frozen=True)
class NoiseSpec:
    """Noise level as a fraction of the clean signal's population std."""

    level: float
    seed: int = 0

    def __post_init__(self):
        if not self.level >= 0:
            raise ArgumentError(f"noise level must be nonnegative, got {self.level}")
        if int(self.seed) != self.seed:
            raise ArgumentError(f"seed must be an integer, got {self.seed!r}")


def add_noise(clean: FieldData, spec: NoiseSpec) -> FieldData:
    """Additive Gaussian noise, sigma = level * population std per field;
    bit-reproducible for a given seed (fields perturbed in declared order)."""
    rng = np.random.default_rng(int(spec.seed))
    noisy = {}
    for name, values in clean.fields.items():
        sigma = spec.level * float(np.std(values))
        noisy[name] = values + rng.normal(0.0, sigma, values.size)
    return FieldData(grid=clean.grid, fields=noisy)


@dataclass
class BootstrapResult:
    theta_names: Tuple[str, ...]
    replicates: np.ndarray  # (n_reps, q); non-finite rows mark failed replicates
    theta_mean: np.ndarray
    cov_percent: np.ndarray
    converged_flags: np.ndarray  # bool per replicate
    seeds: Tuple[int, ...]
    mode: str
    noise_level: float
    config: AdmmConfig

    @property
    def n_failed(self) -> int:
        return int(np.sum(~self.converged_flags))


def replicate_statistics(replicates: np.ndarray, converged_flags) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and cov% over converged replicates; sd uses ddof=1 and a zero
    spread maps to 0% regardless of the mean."""
    flags = np.asarray(converged_flags, dtype=bool)
    good = np.asarray(replicates, dtype=float)[flags]
    mean = good.mean(axis=0)
    sd = good.std(axis=0, ddof=1) if good.shape[0] > 1 else np.zeros(good.shape[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        cov = np.where(sd == 0.0, 0.0, 100.0 * sd / np.abs(mean))
    return mean, cov


def _run_one(payload):
    """One replicate: build the perturbed observations and fit.

    Module-level so process pools can pickle it; returns
    (theta or None, converged flag).
    """
    (mode, data, model, spec, cfg, level, seed, fitted_surface, residuals) = payload
    try:
        if mode == "fresh":
            noisy = add_noise(data, NoiseSpec(level=level, seed=seed))
        else:
            rng = np.random.default_rng(int(seed))
            y0 = data.values(model.target)
            idx = rng.integers(0, y0.size, y0.size)
            resampled = fitted_surface + residuals[idx]
            fields = dict(data.fields)
            fields[model.target] = resampled
            noisy = FieldData(grid=data.grid, fields=fields)
        exo = {name: noisy.values(name) for name in model.exogenous}
        result = fit(
            noisy.values(model.target), model, spec, noisy.grid,
            exogenous=exo or None, cfg=cfg,
        )
        return result.theta, bool(result.converged)
    except SnapeError:
        return None, False


def bootstrap(
    data: FieldData,
    mode: str,
    model: ModelSpec,
    spec: BasisSpec,
    grid: Optional[Grid] = None,
    cfg: Optional[AdmmConfig] = None,
    n_reps: int = 10,
    noise: Optional[NoiseSpec] = None,
    jobs: int = 1,
) -> BootstrapResult:
    """Replicated fitting with per-replicate seeds base+index.

    Parameters
    ----------
    data : FieldData
        Clean data for fresh mode; the measured (noisy) data for residual
        mode.
    mode : "fresh" | "residual"
    grid : optional, must equal data.grid when given (the data carry their
        own sample locations).
    noise : NoiseSpec; level is the fresh-noise fraction (unused by
        residual mode), seed is the replication base seed.
    jobs : replicates run in separate processes when > 1; results are
        identical for any jobs value.
    """
    if mode not in ("fresh", "residual"):
        raise ArgumentError(f"mode must be 'fresh' or 'residual', got {mode!r}")
    if grid is not None and grid != data.grid:
        raise ArgumentError("grid argument disagrees with data.grid")
    if int(n_reps) != n_reps or n_reps < 1:
        raise ArgumentError(f"n_reps must be a positive integer, got {n_reps!r}")
    n_reps = int(n_reps)
    if int(jobs) != jobs or jobs < 1:
        raise ArgumentError(f"jobs must be a positive integer, got {jobs!r}")
    jobs = int(jobs)
    noise = noise if noise is not None else NoiseSpec(level=0.0, seed=0)
    cfg = cfg or AdmmConfig()
    cfg.validate()
    if model.target not in data.field_names:
        raise ArgumentError(
            f"data has no field {model.target!r}; fields are {data.field_names}"
        )

    fitted_surface = None
    residuals = None
    if mode == "residual":
        exo = {name: data.values(name) for name in model.exogenous}
        base = fit(data.values(model.target), model, spec, data.grid,
                   exogenous=exo or None, cfg=cfg)
        if not base.converged:
            raise BootstrapError(
                "residual bootstrap needs a converged base fit; it did not converge"
            )
        from .constraints import ConstraintBuilder

        builder = ConstraintBuilder(model, spec, data.grid, exo or None)
        fitted_surface = builder.basis_matrix @ base.beta
        residuals = data.values(model.target) - fitted_surface

    seeds = tuple(int(noise.seed) + i for i in range(n_reps))
    payloads = [
        (mode, data, model, spec, cfg, noise.level, s, fitted_surface, residuals)
        for s in seeds
    ]
    if jobs == 1:
        outcomes = [_run_one(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_run_one, payloads))

    q = len(model.theta_names)
    replicates = np.full((n_reps, q), np.nan)
    flags = np.zeros(n_reps, dtype=bool)
    for i, (theta, ok) in enumerate(outcomes):
        if theta is not None:
            replicates[i] = theta
        flags[i] = ok
    failed = int(np.sum(~flags))
    if failed * 2 > n_reps:
        raise BootstrapError(
            f"{failed} of {n_reps} replicates failed to converge; "
            "refusing to report statistics"
        )
    mean, cov = replicate_statistics(replicates, flags)
    return BootstrapResult(
        theta_names=model.theta_names,
        replicates=replicates,
        theta_mean=mean,
        cov_percent=cov,
        converged_flags=flags,
        seeds=seeds,
        mode=mode,
        noise_level=float(noise.level),
        config=cfg,
    )
