"""Tensor-product B-spline bases over rectangular grids.

A :class:`Grid` is an ordered list of named, strictly increasing coordinate
axes.  A :class:`BasisSpec` pairs each axis with a :class:`KnotVector`.
Field values and basis coefficients are stored flattened with the FIRST
declared axis varying SLOWEST (C order), and every matrix built here uses
that same convention: the full design matrix for derivative multi-index
``alpha`` is the Kronecker product, in declared axis order, of the per-axis
basis matrices ``eval_basis(kv_a, coords_a, alpha_a)``.

Dense assembly is the reference contract; :func:`assemble_grid_sparse`
builds the same matrix in CSR form (each row has at most ``prod(order_a)``
nonzeros), which is what the solver uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, AxisMismatchError, DerivativeOrderError
from .splines import KnotVector, eval_basis, make_uniform_knots

__all__ = [
    "Grid",
    "BasisSpec",
    "assemble_grid_matrix",
    "assemble_grid_sparse",
    "eval_at_points",
    "default_basis",
]

DerivIndex = Tuple[int, ...]


@dataclass(frozen=True)
class Grid:
    """Ordered named axes with strictly increasing coordinates."""

    axis_names: Tuple[str, ...]
    coordinates: Tuple[np.ndarray, ...]

    def __init__(self, axes: Sequence[tuple]):
        names = []
        coords = []
        for item in axes:
            try:
                name, values = item
            except (TypeError, ValueError):
                raise ArgumentError(f"each axis must be a (name, coordinates) pair, got {item!r}")
            if not isinstance(name, str) or not name.isidentifier():
                raise ArgumentError(f"axis name must be an identifier, got {name!r}")
            v = np.asarray(values, dtype=float).copy()
            if v.ndim != 1 or v.size < 2:
                raise ArgumentError(f"axis {name!r} needs a 1-d array with at least 2 points")
            if not np.all(np.isfinite(v)):
                raise ArgumentError(f"axis {name!r} has non-finite coordinates")
            if not np.all(np.diff(v) > 0):
                raise ArgumentError(f"axis {name!r} coordinates must be strictly increasing")
            v.flags.writeable = False
            names.append(name)
            coords.append(v)
        if not names:
            raise ArgumentError("grid needs at least one axis")
        if len(set(names)) != len(names):
            raise ArgumentError(f"duplicate axis names in {names}")
        object.__setattr__(self, "axis_names", tuple(names))
        object.__setattr__(self, "coordinates", tuple(coords))

    @property
    def ndim(self) -> int:
        return len(self.axis_names)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(c.size for c in self.coordinates)

    @property
    def point_count(self) -> int:
        return int(np.prod(self.shape))

    def axis_index(self, name: str) -> int:
        try:
            return self.axis_names.index(name)
        except ValueError:
            raise AxisMismatchError(f"grid has no axis {name!r}; axes are {self.axis_names}")

    def axis(self, name: str) -> np.ndarray:
        return self.coordinates[self.axis_index(name)]

    def flat_coordinates(self) -> dict:
        """Per-axis coordinate of every grid point, flattened in grid order."""
        mesh = np.meshgrid(*self.coordinates, indexing="ij")
        return {name: m.ravel() for name, m in zip(self.axis_names, mesh)}

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return self.axis_names == other.axis_names and all(
            np.array_equal(a, b) for a, b in zip(self.coordinates, other.coordinates)
        )

    def __hash__(self):
        return hash((self.axis_names, tuple(c.tobytes() for c in self.coordinates)))


@dataclass(frozen=True)
class BasisSpec:
    """Per-axis knot vectors for a tensor-product basis."""

    axis_names: Tuple[str, ...]
    knots: Tuple[KnotVector, ...]

    def __init__(self, axes: Sequence[tuple]):
        names = []
        kvs = []
        for item in axes:
            try:
                name, kv = item
            except (TypeError, ValueError):
                raise ArgumentError(f"each entry must be a (name, KnotVector) pair, got {item!r}")
            if not isinstance(kv, KnotVector):
                raise ArgumentError(f"axis {name!r}: expected a KnotVector, got {type(kv).__name__}")
            names.append(name)
            kvs.append(kv)
        if not names:
            raise ArgumentError("basis needs at least one axis")
        if len(set(names)) != len(names):
            raise ArgumentError(f"duplicate axis names in {names}")
        object.__setattr__(self, "axis_names", tuple(names))
        object.__setattr__(self, "knots", tuple(kvs))

    @property
    def ndim(self) -> int:
        return len(self.axis_names)

    @property
    def basis_count(self) -> int:
        """Total coefficient count m (product of per-axis counts)."""
        return int(np.prod([kv.basis_count for kv in self.knots]))

    def axis_knots(self, name: str) -> KnotVector:
        try:
            return self.knots[self.axis_names.index(name)]
        except ValueError:
            raise AxisMismatchError(f"basis has no axis {name!r}; axes are {self.axis_names}")


def _check_pairing(spec: BasisSpec, grid: Grid) -> None:
    if spec.axis_names != grid.axis_names:
        raise AxisMismatchError(
            f"basis axes {spec.axis_names} do not match grid axes {grid.axis_names}"
        )
    for name, kv, coords in zip(grid.axis_names, spec.knots, grid.coordinates):
        if coords[0] < kv.a or coords[-1] > kv.b:
            raise AxisMismatchError(
                f"axis {name!r}: knot domain [{kv.a}, {kv.b}] does not cover "
                f"coordinates [{coords[0]}, {coords[-1]}]"
            )


def _check_deriv(spec: BasisSpec, deriv: Sequence[int]) -> Tuple[int, ...]:
    alpha = tuple(int(d) for d in deriv)
    if len(alpha) != spec.ndim:
        raise ArgumentError(
            f"derivative index {alpha} has {len(alpha)} entries for {spec.ndim} axes"
        )
    for name, kv, d in zip(spec.axis_names, spec.knots, alpha):
        if d < 0 or d > kv.order - 1:
            raise DerivativeOrderError(
                f"axis {name!r}: derivative order {d} outside [0, {kv.order - 1}]"
            )
    return alpha


def _axis_matrices(spec: BasisSpec, grid: Grid, deriv: Sequence[int]):
    _check_pairing(spec, grid)
    alpha = _check_deriv(spec, deriv)
    return [
        eval_basis(kv, coords, d)
        for kv, coords, d in zip(spec.knots, grid.coordinates, alpha)
    ]


def assemble_grid_matrix(spec: BasisSpec, grid: Grid, deriv: Sequence[int]) -> np.ndarray:
    """Dense (point_count x basis_count) matrix of the mixed derivative
    ``deriv`` of every tensor basis function at every grid point, rows and
    columns flattened first-axis-slowest."""
    mats = _axis_matrices(spec, grid, deriv)
    out = mats[0]
    for m in mats[1:]:
        out = np.kron(out, m)
    return out


def assemble_grid_sparse(spec: BasisSpec, grid: Grid, deriv: Sequence[int]) -> sp.csr_matrix:
    """CSR version of :func:`assemble_grid_matrix` (same values, same
    ordering); rows keep at most prod(order_a) nonzeros."""
    mats = _axis_matrices(spec, grid, deriv)
    out = sp.csr_matrix(mats[0])
    for m in mats[1:]:
        out = sp.kron(out, sp.csr_matrix(m), format="csr")
    return out


def eval_at_points(spec: BasisSpec, points, deriv: Sequence[int]) -> np.ndarray:
    """Evaluate the tensor basis (mixed derivative ``deriv``) at scattered
    points given as an (npts, ndim) array in axis order."""
    alpha = _check_deriv(spec, deriv)
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1 and spec.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[1] != spec.ndim:
        raise ArgumentError(
            f"points must have shape (npts, {spec.ndim}), got {pts.shape}"
        )
    out = None
    for a, (kv, d) in enumerate(zip(spec.knots, alpha)):
        rows = eval_basis(kv, pts[:, a], d)
        if out is None:
            out = rows
        else:
            out = (out[:, :, None] * rows[:, None, :]).reshape(pts.shape[0], -1)
    return out


def default_basis(grid: Grid, max_derivs: Sequence[int]) -> BasisSpec:
    """Default basis sizing for a grid: per axis, uniform knots with
    k = clamp(n_axis // 4, 10, 60) sites over the coordinate range and
    order max(max_deriv + 2, 4)."""
    if len(max_derivs) != grid.ndim:
        raise ArgumentError(
            f"max_derivs has {len(max_derivs)} entries for {grid.ndim} axes"
        )
    axes = []
    for name, coords, md in zip(grid.axis_names, grid.coordinates, max_derivs):
        k = int(np.clip(coords.size // 4, 10, 60))
        order = max(int(md) + 2, 4)
        axes.append((name, make_uniform_knots(coords[0], coords[-1], k, order)))
    return BasisSpec(axes)
