"""Command-line front end: simulate, fit, bootstrap, reconstruct, inspect.

Everything is deterministic: one --seed flag (default 0) drives all
randomness, so the same argv against the same files produces byte-identical
result files.  Diagnostics go to stderr; results go to files (or stdout for
`inspect`).

Exit codes: 0 success, 1 usage error (including missing input files),
2 malformed data/model files, 3 solver non-convergence, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import sys
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .datasets import (
    FieldData,
    read_grid,
    read_result,
    write_grid,
    write_result,
)
from .errors import (
    ArgumentError,
    BootstrapError,
    ConvergenceError,
    DataFormatError,
    ModelError,
    NumericalError,
    ParseError,
    SimulationError,
)
from .model import ModelSpec, parse_model
from .noise_bootstrap import NoiseSpec, bootstrap
from .simulators import (
    BurgersSetup,
    Duffing,
    OdeSetup,
    VanDerPol,
    WaveSetup,
    simulate_burgers,
    simulate_ode,
    simulate_wave2d,
)
from .solver import AdmmConfig, FitResult, fit
from .splines import make_uniform_knots
from .tensor_basis import BasisSpec, Grid, assemble_grid_sparse, default_basis, eval_at_points

__all__ = ["main"]


def _err(message: str) -> None:
    print(message, file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    # usage problems are exit code 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _axis_assignment(text: str):
    name, sep, value = text.partition("=")
    if not sep or not name or not value:
        raise argparse.ArgumentTypeError(
            f"expected axis=integer (e.g. x=20), got {text!r}"
        )
    try:
        count = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer in {text!r}")
    return name, count


def load_model(path_or_name: str) -> ModelSpec:
    """Read a model file; bare names fall back to the shipped catalogue
    (burgers, duffing, vanderpol, wave2d, kdv, ks, navier_stokes)."""
    path = Path(path_or_name)
    if path.is_file():
        return parse_model(path.read_text(encoding="utf-8"))
    name = path.name if path.name.endswith(".model") else path.name + ".model"
    if path_or_name == path.name:  # bare name, no directory part
        shipped = resources.files("snapefit").joinpath("models").joinpath(name)
        if shipped.is_file():
            return parse_model(shipped.read_text(encoding="utf-8"))
    raise FileNotFoundError(2, "no such model file", path_or_name)


def _resolve_basis(grid: Grid, model: ModelSpec, knots_args, order_args) -> BasisSpec:
    """Per-axis knot counts / orders, defaulting to the built-in sizing."""
    knots_map = dict(knots_args or [])
    order_map = dict(order_args or [])
    unknown = (set(knots_map) | set(order_map)) - set(grid.axis_names)
    if unknown:
        raise ArgumentError(
            f"--knots/--order name axes {sorted(unknown)} not present in the "
            f"data grid {grid.axis_names}"
        )
    derivs = {name: md for name, md in zip(model.axes, model.max_derivs)}
    axes = []
    for name, coords in zip(grid.axis_names, grid.coordinates):
        md = derivs.get(name, 0)
        k = knots_map.get(name, int(np.clip(coords.size // 4, 10, 60)))
        order = order_map.get(name, max(md + 2, 4))
        axes.append((name, make_uniform_knots(coords[0], coords[-1], k, order)))
    return BasisSpec(axes)


def _admm_config(args) -> AdmmConfig:
    return AdmmConfig(
        rho=args.rho,
        mu=args.mu,
        gamma=args.gamma,
        tol_theta=args.tol_theta,
        tol_primal=args.tol_primal,
        max_iter=args.max_iter,
    )


def _write_trace(path: str, result: FitResult) -> None:
    q = len(result.theta_names)
    lines = ["iter," + ",".join(f"theta_{j + 1}" for j in range(q)) + ",primal_residual"]
    for i in range(result.iterations):
        cells = [str(i + 1)]
        cells += [repr(float(v)) for v in result.theta_trace[i]]
        cells.append(repr(float(result.primal_trace[i])))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    if args.generator in ("duffing", "vanderpol"):
        if args.generator == "duffing":
            model = Duffing(theta1=args.theta1, theta2=args.theta2, theta3=args.theta3,
                            amplitude=args.amplitude, omega=args.omega)
        else:
            model = VanDerPol(theta1=args.theta1, theta2=args.theta2, theta3=args.theta3)
        setup = OdeSetup(model=model, x0=args.x0, v0=args.v0, t0=args.t0,
                         t1=args.t1, steps=args.steps, substeps=args.substeps)
        data = simulate_ode(setup)
    elif args.generator == "wave2d":
        setup = WaveSetup(theta1=args.theta1, theta2=args.theta2, nx=args.nx,
                          ny=args.ny, nt=args.nt, t_end=args.t_end,
                          substeps=args.substeps)
        data = simulate_wave2d(setup)
    else:
        setup = BurgersSetup(theta1=args.theta1, theta2=args.theta2, nx=args.nx,
                             nt=args.nt, t_end=args.t_end, ic=args.ic,
                             refine=args.refine, cfl=args.cfl)
        data = simulate_burgers(setup)
    write_grid(data, args.out)
    return 0


def cmd_fit(args) -> int:
    model = load_model(args.model)
    data = read_grid(args.data)
    spec = _resolve_basis(data.grid, model, args.knots, args.order)
    cfg = _admm_config(args)
    exogenous = {name: data.values(name) for name in model.exogenous}
    result = fit(
        data.values(model.target), model, spec, data.grid,
        exogenous=exogenous or None, cfg=cfg,
    )
    write_result(result, args.out, model_source=model.source, basis=spec)
    if args.trace:
        _write_trace(args.trace, result)
    theta = ", ".join(
        f"{n}={v:.6g}" for n, v in zip(result.theta_names, result.theta)
    )
    _err(f"fit: {theta} ({result.iterations} iterations)")
    if not result.converged:
        _err(f"fit did not converge within {cfg.max_iter} iterations")
        return 3
    return 0


def cmd_bootstrap(args) -> int:
    model = load_model(args.model)
    data = read_grid(args.data)
    spec = _resolve_basis(data.grid, model, args.knots, args.order)
    cfg = _admm_config(args)
    result = bootstrap(
        data, args.mode, model, spec, cfg=cfg, n_reps=args.replicates,
        noise=NoiseSpec(level=args.noise, seed=args.seed), jobs=args.jobs,
    )
    write_result(result, args.out, model_source=model.source, basis=spec)
    mean = ", ".join(
        f"{n}={v:.6g}" for n, v in zip(result.theta_names, result.theta_mean)
    )
    _err(f"bootstrap: mean {mean}; {result.n_failed} of "
         f"{len(result.seeds)} replicates failed")
    return 0


def cmd_reconstruct(args) -> int:
    doc = read_result(args.fit)
    if doc.kind != "fit":
        raise DataFormatError(
            f"reconstruct needs a fit document, got kind {doc.kind!r}"
        )
    spec = doc.basis()
    beta = doc.beta
    field = "g"
    if doc["model_source"]:
        try:
            field = parse_model(doc["model_source"]).target
        except (ParseError, ModelError):
            pass
    if args.points == "grid":
        data = read_grid(args.data)
        matrix = assemble_grid_sparse(spec, data.grid, (0,) * data.grid.ndim)
        values = matrix @ beta
        write_grid(FieldData(grid=data.grid, fields={field: values}), args.out)
        return 0
    # a CSV of points: header must name the basis axes, in order
    text = Path(args.points).read_text(encoding="utf-8")
    rows = [line.strip() for line in text.splitlines() if line.strip()]
    if not rows:
        raise DataFormatError(f"{args.points}: empty points file")
    header = tuple(h.strip() for h in rows[0].split(","))
    if header != spec.axis_names:
        raise DataFormatError(
            f"points header {header} does not match the fit axes {spec.axis_names}"
        )
    try:
        points = np.array([[float(v) for v in r.split(",")] for r in rows[1:]])
    except ValueError as exc:
        raise DataFormatError(f"bad value in points file: {exc}") from exc
    values = eval_at_points(spec, points, (0,) * spec.ndim) @ beta
    out_lines = [",".join(header) + f",{field}"]
    for row, v in zip(points, values):
        out_lines.append(",".join(repr(float(c)) for c in row) + f",{float(v)!r}")
    Path(args.out).write_text("\n".join(out_lines) + "\n", encoding="ascii")
    return 0


def cmd_inspect(args) -> int:
    data = read_grid(args.data)
    grid = data.grid
    print(f"grid: {grid.ndim} axes, {grid.point_count} points per field")
    for name, coords in zip(grid.axis_names, grid.coordinates):
        uniform = np.array_equal(coords, np.linspace(coords[0], coords[-1], coords.size))
        kind = "uniform" if uniform else "explicit"
        print(f"  axis {name}: {coords.size} points in [{coords[0]:g}, {coords[-1]:g}] ({kind})")
    print(f"fields: {', '.join(data.field_names)}")
    for name in data.field_names:
        v = data.values(name)
        print(f"  {name}: min {v.min():g}, max {v.max():g}, mean {v.mean():g}")
    return 0


# ---------------------------------------------------------------------------
# parser assembly


def _add_solver_flags(p) -> None:
    p.add_argument("--knots", action="append", type=_axis_assignment, metavar="AXIS=K",
                   help="distinct knot count for an axis (repeatable; default: "
                        "n_axis/4 clamped to [10, 60])")
    p.add_argument("--order", action="append", type=_axis_assignment, metavar="AXIS=O",
                   help="spline order for an axis (repeatable; default: "
                        "max(highest derivative + 2, 4))")
    p.add_argument("--rho", type=float, default=1.0, help="penalty weight (default 1)")
    p.add_argument("--mu", type=float, default=1.0, help="slack weight (default 1)")
    p.add_argument("--gamma", type=float, default=1.0,
                   help="dual step scale in (0, 2] (default 1)")
    p.add_argument("--tol-theta", type=float, default=1e-8,
                   help="coefficient stagnation tolerance (default 1e-8)")
    p.add_argument("--tol-primal", type=float, default=1e-6,
                   help="constraint residual tolerance (default 1e-6)")
    p.add_argument("--max-iter", type=int, default=5000,
                   help="iteration cap (default 5000)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="snapefit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    sim = sub.add_parser("simulate", help="generate reference data")
    gens = sim.add_subparsers(dest="generator", required=True, metavar="GENERATOR")

    duffing = gens.add_parser("duffing", help="forced Duffing oscillator")
    duffing.add_argument("--theta1", type=float, default=0.5)
    duffing.add_argument("--theta2", type=float, default=-1.0)
    duffing.add_argument("--theta3", type=float, default=1.0)
    duffing.add_argument("--amplitude", type=float, default=0.42,
                         help="forcing amplitude (default 0.42)")
    duffing.add_argument("--omega", type=float, default=1.0,
                         help="forcing frequency (default 1)")

    vdp = gens.add_parser("vanderpol", help="Van der Pol oscillator")
    vdp.add_argument("--theta1", type=float, default=-8.0)
    vdp.add_argument("--theta2", type=float, default=8.0)
    vdp.add_argument("--theta3", type=float, default=1.0)

    for p in (duffing, vdp):
        p.add_argument("--x0", type=float, default=None,
                       help="initial position (default: model-specific)")
        p.add_argument("--v0", type=float, default=None,
                       help="initial velocity (default: model-specific)")
        p.add_argument("--t0", type=float, default=0.0)
        p.add_argument("--t1", type=float, default=20.0)
        p.add_argument("--steps", type=int, default=2001,
                       help="output samples (default 2001)")
        p.add_argument("--substeps", type=int, default=None,
                       help="internal RK4 steps per sample (default: dt <= 1e-3)")

    wave = gens.add_parser("wave2d", help="2D wave equation")
    wave.add_argument("--theta1", type=float, default=1.0, help="x speed squared")
    wave.add_argument("--theta2", type=float, default=1.0, help="y speed squared")
    wave.add_argument("--nx", type=int, default=50)
    wave.add_argument("--ny", type=int, default=50)
    wave.add_argument("--nt", type=int, default=100)
    wave.add_argument("--t-end", type=float, default=10.0)
    wave.add_argument("--substeps", type=int, default=None,
                      help="internal steps per frame (default: from the CFL bound)")

    burgers = gens.add_parser("burgers", help="viscous Burgers equation")
    burgers.add_argument("--theta1", type=float, default=1.0, help="advection")
    burgers.add_argument("--theta2", type=float, default=-0.1,
                         help="signed diffusion; -theta2 is the viscosity")
    burgers.add_argument("--nx", type=int, default=256)
    burgers.add_argument("--nt", type=int, default=101)
    burgers.add_argument("--t-end", type=float, default=10.0)
    burgers.add_argument("--ic", default="exp(-pow(x+2,2))",
                         help="initial profile in x (default exp(-pow(x+2,2)))")
    burgers.add_argument("--refine", type=int, default=16,
                         help="internal spatial refinement (default 16)")
    burgers.add_argument("--cfl", type=float, default=0.4,
                         help="advective CFL fraction (default 0.4)")

    for p in (duffing, vdp, wave, burgers):
        p.add_argument("--out", required=True, help="output GRD path")
        p.set_defaults(func=cmd_simulate)

    fit_p = sub.add_parser("fit", help="estimate coefficients from a GRD file")
    fit_p.add_argument("--data", required=True, help="input GRD path")
    fit_p.add_argument("--model", required=True,
                       help="model file (bare names use the shipped catalogue)")
    _add_solver_flags(fit_p)
    fit_p.add_argument("--trace", default=None, metavar="CSV",
                       help="write per-iteration coefficients to a sidecar CSV")
    fit_p.add_argument("--out", required=True, help="output result path")
    fit_p.set_defaults(func=cmd_fit)

    boot = sub.add_parser("bootstrap", help="replicate fits for uncertainty")
    boot.add_argument("--data", required=True, help="input GRD path")
    boot.add_argument("--model", required=True,
                      help="model file (bare names use the shipped catalogue)")
    boot.add_argument("--replicates", type=int, default=10,
                      help="replicate count (default 10)")
    boot.add_argument("--noise", type=float, default=0.0,
                      help="fresh-noise level as a fraction of the signal std "
                           "(default 0)")
    boot.add_argument("--mode", choices=("fresh", "residual"), default="fresh",
                      help="fresh: clean data + new noise per replicate; "
                           "residual: resample fit residuals (default fresh)")
    boot.add_argument("--seed", type=int, default=0,
                      help="base seed; replicate i uses seed + i (default 0)")
    boot.add_argument("--jobs", type=int, default=1,
                      help="parallel replicate processes (default 1; results "
                           "do not depend on it)")
    _add_solver_flags(boot)
    boot.add_argument("--out", required=True, help="output result path")
    boot.set_defaults(func=cmd_bootstrap)

    rec = sub.add_parser("reconstruct", help="evaluate a fitted surface")
    rec.add_argument("--fit", required=True, help="fit result path")
    rec.add_argument("--data", required=True, help="GRD providing the grid")
    rec.add_argument("--points", default="grid",
                     help="'grid' (default) or a CSV of points; CSV input "
                          "produces CSV output")
    rec.add_argument("--out", required=True)
    rec.set_defaults(func=cmd_reconstruct)

    ins = sub.add_parser("inspect", help="print a GRD header summary")
    ins.add_argument("--data", required=True, help="input GRD path")
    ins.set_defaults(func=cmd_inspect)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        _err(f"snapefit: no such file: {exc.filename}")
        return 1
    except (ParseError, ModelError, DataFormatError) as exc:
        _err(f"snapefit: {exc}")
        return 2
    except ArgumentError as exc:
        _err(f"snapefit: {exc}")
        return 1
    except (ConvergenceError, BootstrapError) as exc:
        _err(f"snapefit: {exc}")
        return 3
    except (NumericalError, SimulationError) as exc:
        _err(f"snapefit: {exc}")
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
