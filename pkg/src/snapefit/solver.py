"""Alternating-direction solver for simultaneous smoothing and coefficient
estimation.

The problem: given flattened observations y on a grid, find spline
coefficients beta and equation coefficients theta minimizing

    (1/2) ||y - B beta||^2
    subject to   F(beta, theta) + r = 0,

where F(beta, theta) = A_fixed beta + sum_j theta_j A_j beta - f samples
the equation on the grid and r is a relaxation variable penalized through
(1/(2 mu)) ||r||^2.  The scaled augmented Lagrangian

    L = (1/2)||y - B beta||^2 + (1/(2 mu))||r||^2
        + (rho/2)||F + r + u||^2 - (rho/2)||u||^2

is minimized one block at a time; every block update below is the exact
minimizer of L in that block with the others held fixed:

    r      <-  -(mu rho / (1 + mu rho)) (F + u)
    beta   <-  solve[(B^T B + rho C^T C + ridge I) beta
                     = B^T y + rho C^T (f - r - u)],   C = A_fixed + sum theta_j A_j
    theta_j <- -(a_j . (v_fixed + sum_{l!=j} theta_l a_l + r + u)) / (a_j . a_j)
               (cyclic, declaration order; a_j = A_j beta, v_fixed = A_fixed beta - f)
    u      <-  u + gamma (F + r)

Term matrices are refrozen at the current beta once per iteration, before
the r update.  Iterations stop when the largest relative theta change and
the primal residual rms both fall under their tolerances; running out of
iterations returns a result with converged=False rather than raising.

The beta solve keeps a Cholesky factor of the normal matrix and reuses it
across iterations through iterative refinement with exact (sparse) matrix
products, refactoring only when refinement stalls; solutions are exact to
roundoff either way.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .constraints import ConstraintBuilder, ConstraintMatrices
from .errors import ArgumentError, DegenerateTermError, NumericalError
from .model import ModelSpec
from .tensor_basis import BasisSpec, Grid

__all__ = [
    "AdmmConfig",
    "FitResult",
    "ConvergenceStatus",
    "fit",
    "r_step",
    "beta_step",
    "theta_step",
    "dual_step",
    "check_convergence",
    "resolve_ridge",
    "NormalSystem",
]


@dataclass(frozen=True)
class AdmmConfig:
    """Solver knobs; defaults follow the method's standard settings."""

    rho: float = 1.0
    mu: float = 1.0
    gamma: float = 1.0
    ridge: Optional[float] = None  # None: 1e-10 * trace(B^T B) / m
    theta0: Optional[Sequence[float]] = None  # None: zeros
    tol_theta: float = 1e-8
    tol_primal: float = 1e-6
    max_iter: int = 5000

    def validate(self) -> None:
        if not self.rho > 0:
            raise ArgumentError(f"rho must be positive, got {self.rho}")
        if not self.mu > 0:
            raise ArgumentError(f"mu must be positive, got {self.mu}")
        if not 0 < self.gamma <= 2:
            raise ArgumentError(f"gamma must lie in (0, 2], got {self.gamma}")
        if self.ridge is not None and not self.ridge >= 0:
            raise ArgumentError(f"ridge must be nonnegative, got {self.ridge}")
        if not (self.tol_theta > 0 and self.tol_primal > 0):
            raise ArgumentError("tolerances must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise ArgumentError(f"max_iter must be a positive integer, got {self.max_iter}")


class ConvergenceStatus(enum.Enum):
    CONTINUE = "continue"
    CONVERGED = "converged"


@dataclass
class FitResult:
    theta: np.ndarray
    theta_names: tuple
    beta: np.ndarray
    converged: bool
    iterations: int
    primal_residual: float
    data_misfit: float
    theta_trace: np.ndarray
    primal_trace: np.ndarray
    config: AdmmConfig
    factorizations: int = 0


def resolve_ridge(cfg: AdmmConfig, mats: ConstraintMatrices) -> float:
    if cfg.ridge is not None:
        return float(cfg.ridge)
    btb = mats._builder.btb
    return 1e-10 * float(btb.diagonal().sum()) / mats.m


class NormalSystem:
    """Cached-factor solver for M(theta) x = rhs with
    M = B^T B + rho C(theta)^T C(theta) + ridge I.

    Solutions are refined against exact sparse products of the CURRENT M;
    the dense Cholesky factor is rebuilt only when refinement stalls, so a
    slowly drifting M is factored a handful of times per fit.
    """

    def __init__(self, refine_tol: float = 1e-12, max_refine: int = 50):
        self.refine_tol = refine_tol
        self.max_refine = max_refine
        self._chol = None
        self.factorizations = 0

    def _matvec(self, mats, theta, rho, ridge, v):
        out = mats._builder.btb @ v
        out += rho * mats.constraint_rmatvec(theta, mats.constraint_matvec(theta, v))
        out += ridge * v
        return out

    def _refactor(self, mats, theta, rho, ridge):
        M = mats.normal_matrix(theta, rho, ridge)
        try:
            self._chol = scipy.linalg.cho_factor(M, lower=True, overwrite_a=True, check_finite=False)
        except scipy.linalg.LinAlgError as exc:
            raise NumericalError(f"normal matrix factorization failed: {exc}") from exc
        self.factorizations += 1

    def solve(self, mats, theta, rho, ridge, rhs):
        fresh = self._chol is None
        if fresh:
            self._refactor(mats, theta, rho, ridge)
        x = scipy.linalg.cho_solve(self._chol, rhs, check_finite=False)
        res = rhs - self._matvec(mats, theta, rho, ridge, x)
        prev = np.linalg.norm(res)
        target = self.refine_tol * max(float(np.linalg.norm(rhs)), 1e-300)
        for _ in range(self.max_refine):
            if prev <= target:
                break
            dx = scipy.linalg.cho_solve(self._chol, res, check_finite=False)
            cand = x + dx
            cand_res = rhs - self._matvec(mats, theta, rho, ridge, cand)
            nr = np.linalg.norm(cand_res)
            if nr <= 0.5 * prev:
                x, res, prev = cand, cand_res, nr
                continue
            if fresh:
                # roundoff floor with an exact factor: accept the better iterate
                if nr < prev:
                    x = cand
                break
            self._refactor(mats, theta, rho, ridge)
            fresh = True
            x = scipy.linalg.cho_solve(self._chol, rhs, check_finite=False)
            res = rhs - self._matvec(mats, theta, rho, ridge, x)
            prev = np.linalg.norm(res)
        if not np.all(np.isfinite(x)):
            raise NumericalError("beta solve produced non-finite values")
        return x


def r_step(mats: ConstraintMatrices, beta, theta, u, cfg: AdmmConfig) -> np.ndarray:
    """Exact minimizer of L in r at fixed (beta, theta, u)."""
    F = mats.residual(beta, theta)
    kappa = cfg.mu * cfg.rho / (1.0 + cfg.mu * cfg.rho)
    return -kappa * (F + u)


def beta_step(
    mats: ConstraintMatrices,
    y,
    theta,
    r,
    u,
    cfg: AdmmConfig,
    ridge: Optional[float] = None,
    system: Optional[NormalSystem] = None,
) -> np.ndarray:
    """Exact minimizer of L in beta at fixed (theta, r, u)."""
    if ridge is None:
        ridge = resolve_ridge(cfg, mats)
    rhs = mats._builder.basis_matrix.T @ np.asarray(y, float).ravel()
    rhs += cfg.rho * mats.constraint_rmatvec(theta, mats.f - r - u)
    if system is None:
        system = NormalSystem()
    return system.solve(mats, theta, cfg.rho, ridge, rhs)


def _theta_coordinate(a_j, work, name, scale):
    """Shared closed form: minimize over one coefficient given the rest.

    work = v_fixed + sum_{l != j} theta_l a_l + r + u; scale is the
    squared size ||A_j||_F^2 ||beta||^2 the action is judged against.
    """
    d_j = float(a_j @ a_j)
    if d_j <= 1e-28 * scale or d_j == 0.0:
        raise DegenerateTermError(
            f"term {name!r} has numerically zero action at the current surface; "
            "its coefficient is not identifiable"
        )
    return -float(a_j @ work) / d_j


def theta_step(mats: ConstraintMatrices, beta, theta, r, u, j: int) -> float:
    """Exact minimizer of L in theta_j at fixed (beta, other thetas, r, u)."""
    theta = np.asarray(theta, dtype=float)
    beta = np.asarray(beta, dtype=float)
    a = mats.free_matvecs(beta)
    work = mats.fixed_matvec(beta) - mats.f + r + u
    for l, t in enumerate(theta):
        if l != j:
            work += t * a[l]
    scale = mats.free[j].frob_norm_sq() * float(beta @ beta)
    return _theta_coordinate(a[j], work, mats.theta_names[j], scale)


def dual_step(mats: ConstraintMatrices, beta, theta, r, u, cfg: AdmmConfig) -> np.ndarray:
    return u + cfg.gamma * (mats.residual(beta, theta) + r)


def check_convergence(theta_prev, theta, primal_rms: float, cfg: AdmmConfig) -> ConvergenceStatus:
    """Converged when the largest relative theta change and the primal
    residual rms are both under tolerance."""
    theta_prev = np.asarray(theta_prev, float)
    theta = np.asarray(theta, float)
    denom = np.maximum(1.0, np.abs(theta_prev))
    rel = float(np.max(np.abs(theta - theta_prev) / denom)) if theta.size else 0.0
    if rel < cfg.tol_theta and primal_rms < cfg.tol_primal:
        return ConvergenceStatus.CONVERGED
    return ConvergenceStatus.CONTINUE


def fit(
    y,
    model: ModelSpec,
    spec: BasisSpec,
    grid: Grid,
    exogenous=None,
    cfg: Optional[AdmmConfig] = None,
) -> FitResult:
    """Estimate spline coefficients and equation coefficients jointly.

    Parameters
    ----------
    y : array_like
        Observations of the target field, flattened first-axis-slowest
        (grid shape arrays are accepted and flattened).
    model, spec, grid : the equation, basis, and sample locations.
    exogenous : mapping of exogenous field name to flattened values.
    cfg : AdmmConfig, optional.

    Returns
    -------
    FitResult with converged=False (never an exception) when max_iter runs
    out before the tolerances are met.
    """
    cfg = cfg or AdmmConfig()
    cfg.validate()
    builder = ConstraintBuilder(model, spec, grid, exogenous)
    n, m = builder.n, builder.m
    y = np.asarray(y, dtype=float)
    if y.size != n:
        raise ArgumentError(f"y has {y.size} values for {n} grid points")
    y = y.ravel()
    if not np.all(np.isfinite(y)):
        raise ArgumentError("y contains non-finite values")

    q = len(model.theta_names)
    if cfg.theta0 is None:
        theta = np.zeros(q)
    else:
        theta = np.asarray(cfg.theta0, dtype=float)
        if theta.shape != (q,):
            raise ArgumentError(f"theta0 has shape {theta.shape}, model has {q} free terms")
        theta = theta.copy()

    bt_y = builder.basis_matrix.T @ y
    if cfg.ridge is not None:
        ridge = float(cfg.ridge)
    else:
        ridge = 1e-10 * float(builder.btb.diagonal().sum()) / m

    # beta init: ridge least squares fit of the surface to the data alone
    M0 = builder.btb.toarray()
    M0[np.diag_indices(m)] += ridge
    try:
        chol0 = scipy.linalg.cho_factor(M0, lower=True, overwrite_a=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(f"initial surface solve failed: {exc}") from exc
    beta = scipy.linalg.cho_solve(chol0, bt_y, check_finite=False)
    del M0, chol0

    r = np.zeros(n)
    u = np.zeros(n)
    kappa = cfg.mu * cfg.rho / (1.0 + cfg.mu * cfg.rho)
    system = NormalSystem()
    sqrt_n = float(np.sqrt(n))

    theta_trace = np.empty((cfg.max_iter, q))
    primal_trace = np.empty(cfg.max_iter)
    converged = False
    iterations = 0
    primal = np.inf

    for it in range(int(cfg.max_iter)):
        mats = builder.snapshot(beta)  # refreeze nonlinear factors

        F = mats.residual(beta, theta)
        r = -kappa * (F + u)

        rhs = bt_y + cfg.rho * mats.constraint_rmatvec(theta, mats.f - r - u)
        beta = system.solve(mats, theta, cfg.rho, ridge, rhs)

        v_fixed = mats.fixed_matvec(beta) - mats.f
        a = mats.free_matvecs(beta)
        beta_sq = float(beta @ beta)
        theta_prev = theta.copy()
        for j in range(q):
            work = v_fixed + r + u
            for l in range(q):
                if l != j:
                    work += theta[l] * a[l]
            scale = mats.free[j].frob_norm_sq() * beta_sq
            theta[j] = _theta_coordinate(a[j], work, mats.theta_names[j], scale)

        F = v_fixed.copy()
        for j in range(q):
            F += theta[j] * a[j]
        u = u + cfg.gamma * (F + r)

        primal = float(np.linalg.norm(F + r)) / sqrt_n
        theta_trace[it] = theta
        primal_trace[it] = primal
        iterations = it + 1
        if check_convergence(theta_prev, theta, primal, cfg) is ConvergenceStatus.CONVERGED:
            converged = True
            break

    data_misfit = float(np.linalg.norm(y - builder.basis_matrix @ beta))
    return FitResult(
        theta=theta,
        theta_names=model.theta_names,
        beta=beta,
        converged=converged,
        iterations=iterations,
        primal_residual=primal,
        data_misfit=data_misfit,
        theta_trace=theta_trace[:iterations].copy(),
        primal_trace=primal_trace[:iterations].copy(),
        config=cfg,
        factorizations=system.factorizations,
    )
