"""Spline-based estimation of differential-equation coefficients from
noisy gridded data, plus the simulators and file formats around it.

Typical flow: simulate or load a :class:`FieldData`, parse a model with
:func:`parse_model`, choose a :class:`BasisSpec` (or
:func:`default_basis`), then :func:`fit` once or :func:`bootstrap` for
replicate statistics.  The ``snapefit`` console script wraps the same
steps.
"""

from .constraints import ConstraintBuilder, build_constraint_matrices
from .datasets import (
    FieldData,
    ResultDocument,
    read_csv_grid,
    read_grid,
    read_result,
    write_grid,
    write_result,
)
from .errors import (
    ArgumentError,
    AxisMismatchError,
    BootstrapError,
    ConvergenceError,
    DataFormatError,
    DegenerateTermError,
    DerivativeOrderError,
    DomainError,
    ModelError,
    NumericalError,
    ParseError,
    SimulationError,
    SnapeError,
)
from .model import ModelSpec, parse_model, parse_model_file
from .noise_bootstrap import BootstrapResult, NoiseSpec, add_noise, bootstrap
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
from .splines import KnotVector, eval_basis, make_uniform_knots
from .tensor_basis import (
    BasisSpec,
    Grid,
    assemble_grid_matrix,
    assemble_grid_sparse,
    default_basis,
    eval_at_points,
)

__all__ = [
    # errors
    "ArgumentError",
    "AxisMismatchError",
    "BootstrapError",
    "ConvergenceError",
    "DataFormatError",
    "DegenerateTermError",
    "DerivativeOrderError",
    "DomainError",
    "ModelError",
    "NumericalError",
    "ParseError",
    "SimulationError",
    "SnapeError",
    # splines and bases
    "KnotVector",
    "eval_basis",
    "make_uniform_knots",
    "BasisSpec",
    "Grid",
    "assemble_grid_matrix",
    "assemble_grid_sparse",
    "default_basis",
    "eval_at_points",
    # model language and constraint assembly
    "ModelSpec",
    "parse_model",
    "parse_model_file",
    "ConstraintBuilder",
    "build_constraint_matrices",
    # solver
    "AdmmConfig",
    "FitResult",
    "fit",
    # noise and bootstrap
    "BootstrapResult",
    "NoiseSpec",
    "add_noise",
    "bootstrap",
    # simulators
    "BurgersSetup",
    "Duffing",
    "OdeSetup",
    "VanDerPol",
    "WaveSetup",
    "simulate_burgers",
    "simulate_ode",
    "simulate_wave2d",
    # data files
    "FieldData",
    "ResultDocument",
    "read_csv_grid",
    "read_grid",
    "read_result",
    "write_grid",
    "write_result",
]
