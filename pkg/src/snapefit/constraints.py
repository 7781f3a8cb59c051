"""Sampled constraint operators for a model on a grid.

The fitted equation, sampled at every grid point, reads

    A_fixed(beta) beta + sum_j theta_j A_j(beta) beta - f = 0

where each term matrix acts on the spline coefficient vector beta through
the term's LINEAR factor, with every other factor frozen: target factors
at the current beta, exogenous factors at the data.  The linear factor is
the target factor with the highest total derivative order, ties broken by
the LAST position in the product.  Freezing makes each A_j an ordinary
matrix at fixed beta, which is the biconvex relaxation the solver
alternates over.

Term matrices are never materialized densely: each one is a row-scaled
sparse tensor-product matrix

    A = diag(s) K_alpha,   s = prod(exogenous data) * prod(frozen B_alpha' beta)

with K_alpha the CSR basis-derivative matrix on the grid.  Gram blocks
A_i^T A_l for the coefficient solves are formed sparsely; blocks whose
scale does not depend on beta are cached and reused across iterations.
"""

from __future__ import annotations

from typing import List, Mapping, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .errors import ArgumentError, AxisMismatchError, DerivativeOrderError
from .expressions import evaluate
from .model import Free, ModelSpec, Term
from .tensor_basis import BasisSpec, Grid, assemble_grid_sparse

__all__ = ["TermOperator", "ConstraintMatrices", "ConstraintBuilder", "build_constraint_matrices"]


class TermOperator:
    """A term matrix A = diag(scale) @ K with K sparse CSR (n x m).

    ``scale`` is None for unscaled terms.  ``static`` marks operators whose
    scale does not depend on beta (safe to cache Gram blocks against).
    """

    __slots__ = ("K", "scale", "static", "_frob2")

    def __init__(self, K: sp.csr_matrix, scale: Optional[np.ndarray], static: bool):
        self.K = K
        self.scale = scale
        self.static = static
        self._frob2 = None

    @property
    def shape(self) -> Tuple[int, int]:
        return self.K.shape

    def matvec(self, beta: np.ndarray) -> np.ndarray:
        v = self.K @ beta
        return v if self.scale is None else v * self.scale

    def rmatvec(self, w: np.ndarray) -> np.ndarray:
        return self.K.T @ (w if self.scale is None else w * self.scale)

    def toarray(self) -> np.ndarray:
        A = self.K.toarray()
        if self.scale is not None:
            A *= self.scale[:, None]
        return A

    def gram_with(self, other: "TermOperator") -> sp.csr_matrix:
        """Sparse A^T A' = K^T diag(w) K' with w the combined row scales."""
        w = None
        if self.scale is not None:
            w = self.scale * self.scale if other is self else self.scale
        if other is not self and other.scale is not None:
            w = other.scale if w is None else w * other.scale
        if w is None:
            return (self.K.T @ other.K).tocsr()
        return (self.K.multiply(w[:, None]).T @ other.K).tocsr()

    def frob_norm_sq(self) -> float:
        if self._frob2 is None:
            sq = self.K.multiply(self.K)
            rows = np.asarray(sq.sum(axis=1)).ravel()
            if self.scale is not None:
                rows = rows * self.scale * self.scale
            self._frob2 = float(rows.sum())
        return self._frob2


class ConstraintMatrices:
    """The equation's sampled matrices at one beta: the combined fixed part
    (anchor plus fixed-coefficient terms), one operator per free term, and
    the sampled forcing vector f."""

    def __init__(self, fixed, free, f, theta_names, builder):
        self.fixed: Tuple[Tuple[float, TermOperator], ...] = tuple(fixed)
        self.free: Tuple[TermOperator, ...] = tuple(free)
        self.f = f
        self.theta_names = tuple(theta_names)
        self._builder = builder

    @property
    def n(self) -> int:
        return self.f.size

    @property
    def m(self) -> int:
        return self.fixed[0][1].shape[1]

    @property
    def n_free(self) -> int:
        return len(self.free)

    def _check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_free,):
            raise ArgumentError(
                f"theta has shape {theta.shape}, model has {self.n_free} free terms"
            )
        return theta

    def combined(self, theta) -> List[Tuple[float, TermOperator]]:
        theta = self._check_theta(theta)
        return list(self.fixed) + [(t, op) for t, op in zip(theta, self.free)]

    def fixed_matvec(self, beta: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n)
        for c, op in self.fixed:
            out += c * op.matvec(beta)
        return out

    def free_matvecs(self, beta: np.ndarray) -> List[np.ndarray]:
        return [op.matvec(beta) for op in self.free]

    def residual(self, beta: np.ndarray, theta) -> np.ndarray:
        """F(beta, theta) = A_fixed beta + sum_j theta_j A_j beta - f."""
        theta = self._check_theta(theta)
        out = self.fixed_matvec(beta) - self.f
        for t, op in zip(theta, self.free):
            out += t * op.matvec(beta)
        return out

    def constraint_matvec(self, theta, v: np.ndarray) -> np.ndarray:
        """C(theta) v with C = A_fixed + sum_j theta_j A_j."""
        out = np.zeros(self.n)
        for c, op in self.combined(theta):
            out += c * op.matvec(v)
        return out

    def constraint_rmatvec(self, theta, w: np.ndarray) -> np.ndarray:
        out = np.zeros(self.m)
        for c, op in self.combined(theta):
            out += c * op.rmatvec(w)
        return out

    def fixed_dense(self) -> np.ndarray:
        """Dense A_fixed (anchor plus fixed-coefficient terms combined)."""
        out = np.zeros(self.fixed[0][1].shape)
        for c, op in self.fixed:
            out += c * op.toarray()
        return out

    def free_dense(self, j: int) -> np.ndarray:
        return self.free[j].toarray()

    def gram_sum(self, theta) -> sp.csr_matrix:
        """sum_{i,l} c_i c_l A_i^T A_l over the combined coefficient list;
        equals C(theta)^T C(theta)."""
        ops = self.combined(theta)
        total = None
        for i, (ci, opi) in enumerate(ops):
            for l in range(i, len(ops)):
                cl, opl = ops[l]
                coeff = ci * cl
                if coeff == 0.0:
                    continue
                G = self._builder._gram_block(i, l, opi, opl)
                block = coeff * G
                if l != i:
                    block = block + block.T
                total = block if total is None else total + block
        if total is None:
            m = self.m
            total = sp.csr_matrix((m, m))
        return total.tocsr()

    def normal_matrix(self, theta, rho: float, ridge: float) -> np.ndarray:
        """Dense B^T B + rho * C(theta)^T C(theta) + ridge * I."""
        m = self.m
        S = self._builder.btb + rho * self.gram_sum(theta)
        M = S.toarray()
        M[np.diag_indices(m)] += ridge
        return M


class ConstraintBuilder:
    """Precomputes grid-sampled basis derivative matrices and forcing for a
    model, then stamps out :class:`ConstraintMatrices` at any beta."""

    def __init__(
        self,
        model: ModelSpec,
        spec: BasisSpec,
        grid: Grid,
        exogenous: Optional[Mapping[str, np.ndarray]] = None,
    ):
        if spec.axis_names != grid.axis_names:
            raise AxisMismatchError(
                f"basis axes {spec.axis_names} do not match grid axes {grid.axis_names}"
            )
        if tuple(model.axes) != grid.axis_names:
            raise AxisMismatchError(
                f"model axes {model.axes} do not match grid axes {grid.axis_names}"
            )
        for name, kv, need in zip(model.axes, spec.knots, model.max_derivs):
            if kv.order < need + 1:
                raise DerivativeOrderError(
                    f"axis {name!r}: model needs derivative order {need}, "
                    f"but basis order {kv.order} supports at most {kv.order - 1}"
                )
        self.model = model
        self.spec = spec
        self.grid = grid
        n = grid.point_count
        self.n = n
        self.m = spec.basis_count

        exo_values = {}
        for name in model.exogenous:
            if exogenous is None or name not in exogenous:
                raise ArgumentError(f"model requires exogenous field {name!r}, not provided")
            v = np.asarray(exogenous[name], dtype=float).ravel()
            if v.size != n:
                raise ArgumentError(
                    f"exogenous field {name!r} has {v.size} values for {n} grid points"
                )
            if not np.all(np.isfinite(v)):
                raise ArgumentError(f"exogenous field {name!r} has non-finite values")
            exo_values[name] = v

        zero = (0,) * grid.ndim
        alphas = {zero}
        for term in (model.anchor, *model.terms):
            for factor in term.factors:
                if factor.field == model.target:
                    alphas.add(factor.deriv)
        self._K = {alpha: assemble_grid_sparse(spec, grid, alpha) for alpha in sorted(alphas)}
        self.basis_matrix: sp.csr_matrix = self._K[zero]
        self.btb: sp.csr_matrix = (self.basis_matrix.T @ self.basis_matrix).tocsr()

        if model.forcing is None:
            self.f = np.zeros(n)
        else:
            env = grid.flat_coordinates()
            val = np.asarray(evaluate(model.forcing, env), dtype=float)
            self.f = np.broadcast_to(val, (n,)).astype(float, copy=True)
            if not np.all(np.isfinite(self.f)):
                raise ArgumentError("forcing evaluates to non-finite values on the grid")

        self._compiled = []
        for term in (model.anchor, *model.terms):
            self._compiled.append(self._compile(term, exo_values))
        self._gram_cache = {}

    def _compile(self, term: Term, exo_values):
        target_positions = [
            (i, f) for i, f in enumerate(term.factors) if f.field == self.model.target
        ]
        # highest total derivative order wins; ties go to the LAST factor
        linear_idx = max(
            range(len(target_positions)),
            key=lambda idx: (target_positions[idx][1].total_order, target_positions[idx][0]),
        )
        linear = target_positions[linear_idx][1]
        frozen = [f.deriv for idx, (_, f) in enumerate(target_positions) if idx != linear_idx]

        static_scale = None
        for f in term.factors:
            if f.field != self.model.target:
                v = exo_values[f.field]
                static_scale = v.copy() if static_scale is None else static_scale * v

        coeff = term.coefficient
        op = None
        if not frozen:
            op = TermOperator(self._K[linear.deriv], static_scale, True)
        return {
            "coefficient": coeff,
            "linear": linear.deriv,
            "frozen": tuple(frozen),
            "static_scale": static_scale,
            "static_op": op,
        }

    def snapshot(self, beta: np.ndarray) -> ConstraintMatrices:
        """Constraint matrices with every frozen factor evaluated at beta.
        Pure function of (builder, beta): equal betas give equal matrices."""
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.m,):
            raise ArgumentError(f"beta has shape {beta.shape}, expected ({self.m},)")
        fixed = []
        free = []
        names = []
        for comp in self._compiled:
            op = comp["static_op"]
            if op is None:
                scale = comp["static_scale"]
                scale = np.ones(self.n) if scale is None else scale.copy()
                for alpha in comp["frozen"]:
                    scale *= self._K[alpha] @ beta
                op = TermOperator(self._K[comp["linear"]], scale, False)
            coeff = comp["coefficient"]
            if isinstance(coeff, Free):
                free.append(op)
                names.append(coeff.name)
            else:
                fixed.append((coeff.value, op))
        return ConstraintMatrices(fixed, free, self.f, names, self)

    def _gram_block(self, i: int, l: int, opi: TermOperator, opl: TermOperator) -> sp.csr_matrix:
        if opi.static and opl.static:
            key = (i, l)
            cached = self._gram_cache.get(key)
            if cached is None:
                cached = opi.gram_with(opl)
                self._gram_cache[key] = cached
            return cached
        return opi.gram_with(opl)


def build_constraint_matrices(
    model: ModelSpec,
    spec: BasisSpec,
    grid: Grid,
    beta: np.ndarray,
    exogenous: Optional[Mapping[str, np.ndarray]] = None,
) -> ConstraintMatrices:
    """One-shot assembly of the constraint matrices at a given beta."""
    return ConstraintBuilder(model, spec, grid, exogenous).snapshot(beta)
