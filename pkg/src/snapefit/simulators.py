"""Deterministic reference simulators at desk scale.

Four generators produce the gridded data the estimator is exercised on:
two forced/unforced oscillators (classical RK4), a 2D wave equation
(explicit leapfrog, Dirichlet in x, Neumann in y), and a viscous Burgers
equation (Godunov upwind advection + Crank-Nicolson diffusion on a
periodic domain).  No RNG anywhere: same setup, same bytes.  Output grids
are exactly the requested grids; any internal refinement marches on a
finer grid whose points contain the output points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .datasets import FieldData
from .errors import ArgumentError, SimulationError
from .expressions import evaluate, parse_expression, variables
from .tensor_basis import Grid

__all__ = [
    "Duffing",
    "VanDerPol",
    "OdeSetup",
    "simulate_ode",
    "WaveSetup",
    "simulate_wave2d",
    "BurgersSetup",
    "simulate_burgers",
]


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise ArgumentError(f"{name} parameters must be finite, got {v!r}")


@dataclass(frozen=True)
class Duffing:
    """x_tt + theta1 x_t + theta2 x + theta3 x^3 = amplitude cos(omega t)."""

    theta1: float = 0.5
    theta2: float = -1.0
    theta3: float = 1.0
    amplitude: float = 0.42
    omega: float = 1.0

    # canonical study starts from rest away from the origin
    default_ic = (1.0, 0.0)

    def __post_init__(self):
        _require_finite("Duffing", self.theta1, self.theta2, self.theta3,
                        self.amplitude, self.omega)

    def acceleration(self, t: float, x: float, v: float) -> float:
        return (
            self.amplitude * math.cos(self.omega * t)
            - self.theta1 * v - self.theta2 * x - self.theta3 * x ** 3
        )


@dataclass(frozen=True)
class VanDerPol:
    """x_tt + theta1 x_t + theta2 x^2 x_t + theta3 x = 0."""

    theta1: float = -8.0
    theta2: float = 8.0
    theta3: float = 1.0

    default_ic = (2.0, 0.0)

    def __post_init__(self):
        _require_finite("VanDerPol", self.theta1, self.theta2, self.theta3)

    def acceleration(self, t: float, x: float, v: float) -> float:
        return -(self.theta1 * v + self.theta2 * x * x * v + self.theta3 * x)


@dataclass(frozen=True)
class OdeSetup:
    """Oscillator, initial state, and the output time grid.

    ``substeps`` internal RK4 steps are taken per output interval; the
    default targets an internal dt of at most 1e-3.
    """

    model: object
    x0: Optional[float] = None
    v0: Optional[float] = None
    t0: float = 0.0
    t1: float = 20.0
    steps: int = 2001
    substeps: Optional[int] = None

    def __post_init__(self):
        if not hasattr(self.model, "acceleration"):
            raise ArgumentError(f"model {self.model!r} has no acceleration rule")
        if int(self.steps) != self.steps or self.steps < 2:
            raise ArgumentError(f"steps must be an integer >= 2, got {self.steps!r}")
        if not (math.isfinite(self.t0) and math.isfinite(self.t1) and self.t1 > self.t0):
            raise ArgumentError(f"need finite t1 > t0, got [{self.t0}, {self.t1}]")
        if self.substeps is not None and (int(self.substeps) != self.substeps or self.substeps < 1):
            raise ArgumentError(f"substeps must be a positive integer, got {self.substeps!r}")
        if self.x0 is None:
            object.__setattr__(self, "x0", float(self.model.default_ic[0]))
        if self.v0 is None:
            object.__setattr__(self, "v0", float(self.model.default_ic[1]))
        _require_finite("initial state", self.x0, self.v0)

    def resolved_substeps(self) -> int:
        if self.substeps is not None:
            return int(self.substeps)
        dt_out = (self.t1 - self.t0) / (self.steps - 1)
        return max(1, math.ceil(dt_out / 1e-3 - 1e-12))


def simulate_ode(setup: OdeSetup) -> FieldData:
    """Classical 4th-order Runge-Kutta on the first-order system (x, v)."""
    t = np.linspace(setup.t0, setup.t1, setup.steps)
    sub = setup.resolved_substeps()
    dt = (setup.t1 - setup.t0) / ((setup.steps - 1) * sub)
    accel = setup.model.acceleration

    x, v = float(setup.x0), float(setup.v0)
    out = np.empty(setup.steps)
    out[0] = x
    for n in range(setup.steps - 1):
        tn = t[n]
        try:
            for k in range(sub):
                tk = tn + k * dt
                k1x = v
                k1v = accel(tk, x, v)
                k2x = v + 0.5 * dt * k1v
                k2v = accel(tk + 0.5 * dt, x + 0.5 * dt * k1x, k2x)
                k3x = v + 0.5 * dt * k2v
                k3v = accel(tk + 0.5 * dt, x + 0.5 * dt * k2x, k3x)
                k4x = v + dt * k3v
                k4v = accel(tk + dt, x + dt * k3x, k4x)
                x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
                v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        except OverflowError:
            x = math.inf
        if not (math.isfinite(x) and math.isfinite(v)):
            raise SimulationError(f"state blew up near t = {t[n + 1]:.6g}")
        out[n + 1] = x
    return FieldData(grid=Grid([("t", t)]), fields={"x": out})


def _default_wave_u0(x, y):
    return 3.0 * np.sin(np.pi * x) * np.exp(np.sin(0.5 * np.pi * y))


def _default_wave_v0(x, y):
    return np.arctan(np.cos(0.5 * np.pi * x))


@dataclass(frozen=True)
class WaveSetup:
    """u_tt = theta1 u_xx + theta2 u_yy on [-1,1]^2, t in [0, t_end].

    Dirichlet u = 0 at x = +-1, Neumann du/dy = 0 at y = +-1.  theta are
    squared propagation speeds; the leapfrog time step must satisfy
    dt <= h / sqrt(theta1 + theta2) with h the smallest grid spacing.
    """

    theta1: float = 1.0
    theta2: float = 1.0
    nx: int = 50
    ny: int = 50
    nt: int = 100
    t_end: float = 10.0
    substeps: Optional[int] = None
    ic_u: Optional[Callable] = None
    ic_v: Optional[Callable] = None

    def __post_init__(self):
        _require_finite("wave", self.theta1, self.theta2, self.t_end)
        if self.theta1 < 0 or self.theta2 < 0 or self.theta1 + self.theta2 <= 0:
            raise ArgumentError(
                f"wave coefficients are squared speeds: need theta >= 0 with a "
                f"positive sum, got ({self.theta1}, {self.theta2})"
            )
        for name, n in (("nx", self.nx), ("ny", self.ny)):
            if int(n) != n or n < 3:
                raise ArgumentError(f"{name} must be an integer >= 3, got {n!r}")
        if int(self.nt) != self.nt or self.nt < 2:
            raise ArgumentError(f"nt must be an integer >= 2, got {self.nt!r}")
        if self.t_end <= 0:
            raise ArgumentError(f"t_end must be positive, got {self.t_end}")
        if self.substeps is not None and (int(self.substeps) != self.substeps or self.substeps < 1):
            raise ArgumentError(f"substeps must be a positive integer, got {self.substeps!r}")

    def cfl_limit(self) -> float:
        h = min(2.0 / (self.nx - 1), 2.0 / (self.ny - 1))
        return h / math.sqrt(self.theta1 + self.theta2)

    def resolved_substeps(self) -> int:
        dt_out = self.t_end / (self.nt - 1)
        limit = self.cfl_limit()
        if self.substeps is not None:
            if dt_out / self.substeps > limit:
                raise ArgumentError(
                    f"time step {dt_out / self.substeps:.4g} violates the CFL "
                    f"bound {limit:.4g}"
                )
            return int(self.substeps)
        # a little margin keeps the marginally stable modes quiet
        return max(1, math.ceil(dt_out / (0.9 * limit)))


def simulate_wave2d(setup: WaveSetup) -> FieldData:
    """Explicit leapfrog; first step from the initial-velocity Taylor
    expansion u1 = u0 + dt v0 + dt^2/2 (theta1 u0_xx + theta2 u0_yy)."""
    x = np.linspace(-1.0, 1.0, setup.nx)
    y = np.linspace(-1.0, 1.0, setup.ny)
    t = np.linspace(0.0, setup.t_end, setup.nt)
    hx = x[1] - x[0]
    hy = y[1] - y[0]
    sub = setup.resolved_substeps()
    dt = setup.t_end / ((setup.nt - 1) * sub)

    xx, yy = np.meshgrid(x, y, indexing="ij")
    u0_fn = setup.ic_u if setup.ic_u is not None else _default_wave_u0
    v0_fn = setup.ic_v if setup.ic_v is not None else _default_wave_v0
    u_prev = np.asarray(u0_fn(xx, yy), dtype=float) + np.zeros_like(xx)
    v0 = np.asarray(v0_fn(xx, yy), dtype=float) + np.zeros_like(xx)
    if not (np.all(np.isfinite(u_prev)) and np.all(np.isfinite(v0))):
        raise ArgumentError("initial conditions must be finite")

    th1, th2 = setup.theta1, setup.theta2

    def lap(u):
        out = np.zeros_like(u)
        out[1:-1, :] += th1 * (u[2:, :] - 2.0 * u[1:-1, :] + u[:-2, :]) / hx**2
        out[:, 1:-1] += th2 * (u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2]) / hy**2
        # Neumann mirror in y: ghost value equals the inner neighbour
        out[:, 0] += th2 * 2.0 * (u[:, 1] - u[:, 0]) / hy**2
        out[:, -1] += th2 * 2.0 * (u[:, -2] - u[:, -1]) / hy**2
        return out

    def pin(u):
        u[0, :] = 0.0
        u[-1, :] = 0.0
        return u

    u_prev = pin(u_prev)
    frames = np.empty((setup.nx, setup.ny, setup.nt))
    frames[:, :, 0] = u_prev
    u_cur = pin(u_prev + dt * v0 + 0.5 * dt**2 * lap(u_prev))

    step = 1
    for n in range(1, setup.nt):
        while step < n * sub:
            u_next = pin(2.0 * u_cur - u_prev + dt**2 * lap(u_cur))
            u_prev, u_cur = u_cur, u_next
            step += 1
        if not np.all(np.isfinite(u_cur)):
            raise SimulationError(f"wave state blew up near t = {t[n]:.6g}")
        frames[:, :, n] = u_cur
    grid = Grid([("x", x), ("y", y), ("t", t)])
    return FieldData(grid=grid, fields={"u": frames.ravel()})


@dataclass(frozen=True)
class BurgersSetup:
    """u_t + theta1 u u_x + theta2 u_xx = 0, periodic on [-8, 8].

    theta2 is signed: the effective viscosity is -theta2, which must be
    positive.  The march runs on a grid refined `refine`-fold in space
    (the output points are a subset) with the advective time step capped
    at `cfl` times the explicit bound.
    """

    theta1: float = 1.0
    theta2: float = -0.1
    nx: int = 256
    nt: int = 101
    t_end: float = 10.0
    ic: str = "exp(-pow(x+2,2))"
    refine: int = 16
    cfl: float = 0.4

    def __post_init__(self):
        _require_finite("Burgers", self.theta1, self.theta2, self.t_end)
        if not -self.theta2 > 0:
            raise ArgumentError(
                f"theta2 is a signed diffusion: -theta2 must be positive, got {self.theta2}"
            )
        if int(self.nx) != self.nx or self.nx < 3:
            raise ArgumentError(f"nx must be an integer >= 3, got {self.nx!r}")
        if int(self.nt) != self.nt or self.nt < 2:
            raise ArgumentError(f"nt must be an integer >= 2, got {self.nt!r}")
        if self.t_end <= 0:
            raise ArgumentError(f"t_end must be positive, got {self.t_end}")
        if int(self.refine) != self.refine or self.refine < 1:
            raise ArgumentError(f"refine must be a positive integer, got {self.refine!r}")
        if not 0 < self.cfl <= 1:
            raise ArgumentError(f"cfl must lie in (0, 1], got {self.cfl}")
        ast = parse_expression(self.ic)
        extra = variables(ast) - {"x"}
        if extra:
            raise ArgumentError(
                f"initial profile may only use 'x', found {sorted(extra)}"
            )


def _godunov_flux(u: np.ndarray, theta1: float) -> np.ndarray:
    """Exact Riemann flux of f(u) = theta1 u^2 / 2 between u[i] and u[i+1]
    (periodic); the argmin/argmax of the parabola sits at u = 0."""
    if theta1 == 0.0:
        return np.zeros_like(u)
    ur = np.roll(u, -1)

    def f(w):
        return 0.5 * theta1 * w * w

    if theta1 > 0:
        return np.maximum(f(np.maximum(u, 0.0)), f(np.minimum(ur, 0.0)))
    return np.minimum(f(np.minimum(u, 0.0)), f(np.maximum(ur, 0.0)))


def simulate_burgers(setup: BurgersSetup) -> FieldData:
    """Godunov upwind advection, Crank-Nicolson diffusion (one LU, reused)."""
    a, b = -8.0, 8.0
    x_out = np.linspace(a, b, setup.nx)
    n_cells = setup.refine * (setup.nx - 1)
    h = (b - a) / n_cells
    x_int = a + h * np.arange(n_cells)

    u = evaluate(parse_expression(setup.ic), {"x": x_int}) + np.zeros(n_cells)
    if not np.all(np.isfinite(u)):
        raise ArgumentError("initial profile evaluates to non-finite values")
    initial_range = float(np.max(np.abs(u)))
    blow_up = 10.0 * max(initial_range, 1e-12)

    nu = -setup.theta2
    dt_out = setup.t_end / (setup.nt - 1)
    speed = abs(setup.theta1) * max(initial_range, 1e-12)
    dt_adv = setup.cfl * h / speed if speed > 0 else dt_out
    sub = max(1, math.ceil(dt_out / min(dt_adv, dt_out) - 1e-12))
    dt = dt_out / sub

    lap = sp.diags([1.0, -2.0, 1.0], [-1, 0, 1], shape=(n_cells, n_cells), format="lil")
    lap[0, -1] = 1.0
    lap[-1, 0] = 1.0
    lap = (lap / h**2).tocsc()
    eye = sp.identity(n_cells, format="csc")
    solve_cn = spla.splu((eye - 0.5 * nu * dt * lap).tocsc()).solve
    rhs_mat = (eye + 0.5 * nu * dt * lap).tocsr()

    frames = np.empty((setup.nx, setup.nt))

    def record(col, u):
        frames[:-1, col] = u[:: setup.refine]
        frames[-1, col] = u[0]  # x = 8 is the periodic image of x = -8

    record(0, u)
    for n in range(1, setup.nt):
        for _ in range(sub):
            flux = _godunov_flux(u, setup.theta1)
            u = u - dt / h * (flux - np.roll(flux, 1))
            u = solve_cn(rhs_mat @ u)
        if float(np.max(np.abs(u))) > blow_up:
            raise SimulationError(
                f"Burgers state grew past 10x the initial range near "
                f"t = {n * dt_out:.6g}"
            )
        record(n, u)

    grid = Grid([("x", x_out), ("t", np.linspace(0.0, setup.t_end, setup.nt))])
    return FieldData(grid=grid, fields={"u": frames.ravel()})
