"""Clamped univariate B-spline bases with exact derivatives.

A basis is described by a :class:`KnotVector`: ``k`` strictly increasing
distinct knots spanning ``[a, b]`` plus an order ``o`` (polynomial degree
``o - 1``).  Clamping repeats each end knot ``o`` times in the full knot
vector, which therefore has ``k + 2*(o - 1)`` entries and carries
``p = k + o - 2`` basis functions.

Evaluation uses the Cox-de Boor recursion on the (at most ``o``) functions
that are nonzero at each point.  Derivatives are exact: the d-th derivative
of the order-``o`` family equals the order-``(o - d)`` family multiplied by
a chain of banded difference matrices, so no finite differencing is ever
involved.

Conventions at knots: basis values at an interior knot are the limit from
the right; at the right domain end ``b`` they are the limit from the left
(so the last basis function attains 1 at ``b``).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DerivativeOrderError, DomainError

__all__ = ["KnotVector", "make_uniform_knots", "eval_basis"]


@dataclass(frozen=True)
class KnotVector:
    """Distinct knot sites plus spline order; immutable after creation.

    Parameters
    ----------
    order : int
        Spline order ``o`` (degree + 1), at least 1.
    distinct_knots : ndarray
        Strictly increasing knot sites; at least two entries; finite.
    """

    order: int
    distinct_knots: np.ndarray
    full_knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.order) != self.order or self.order < 1:
            raise ArgumentError(f"order must be a positive integer, got {self.order!r}")
        object.__setattr__(self, "order", int(self.order))
        knots = np.asarray(self.distinct_knots, dtype=float).copy()
        if knots.ndim != 1 or knots.size < 2:
            raise ArgumentError("distinct_knots must be a 1-d array with at least 2 entries")
        if not np.all(np.isfinite(knots)):
            raise ArgumentError("distinct_knots must be finite")
        if not np.all(np.diff(knots) > 0):
            raise ArgumentError("distinct_knots must be strictly increasing")
        knots.flags.writeable = False
        object.__setattr__(self, "distinct_knots", knots)
        o = self.order
        full = np.concatenate([np.full(o - 1, knots[0]), knots, np.full(o - 1, knots[-1])])
        full.flags.writeable = False
        object.__setattr__(self, "full_knots", full)

    @property
    def a(self) -> float:
        return float(self.distinct_knots[0])

    @property
    def b(self) -> float:
        return float(self.distinct_knots[-1])

    @property
    def knot_count(self) -> int:
        """Number of distinct knots k."""
        return self.distinct_knots.size

    @property
    def basis_count(self) -> int:
        """Number of basis functions p = k + o - 2."""
        return self.knot_count + self.order - 2

    def __eq__(self, other):
        if not isinstance(other, KnotVector):
            return NotImplemented
        return self.order == other.order and np.array_equal(
            self.distinct_knots, other.distinct_knots
        )

    def __hash__(self):
        return hash((self.order, self.distinct_knots.tobytes()))


def make_uniform_knots(a: float, b: float, k: int, order: int) -> KnotVector:
    """Uniform KnotVector with k equispaced distinct knots on [a, b]."""
    if not (np.isfinite(a) and np.isfinite(b)) or not a < b:
        raise ArgumentError(f"need finite a < b, got a={a!r}, b={b!r}")
    if int(k) != k or k < 2:
        raise ArgumentError(f"knot count must be an integer >= 2, got {k!r}")
    return KnotVector(order=order, distinct_knots=np.linspace(a, b, int(k)))


def _find_spans(full: np.ndarray, order: int, x: np.ndarray) -> np.ndarray:
    """Index j with full[j] <= x < full[j+1], clipped to nonempty spans.

    The clip makes values at interior knots the right limit and values at
    the right end b the left limit.
    """
    j = np.searchsorted(full, x, side="right") - 1
    return np.clip(j, order - 1, full.size - order - 1)


def _nonzero_values(full: np.ndarray, q: int, x: np.ndarray, spans: np.ndarray) -> np.ndarray:
    """Cox-de Boor triangle: values of the q nonzero order-q functions.

    Returns an (npts, q) array; column i holds basis function
    ``spans - q + 1 + i`` of the order-q family over ``full``.
    """
    npts = x.size
    vals = np.ones((npts, q))
    left = np.empty((npts, q))   # left[:, i-1] = x - full[j+1-i]
    right = np.empty((npts, q))  # right[:, i-1] = full[j+i] - x
    for deg in range(1, q):
        left[:, deg - 1] = x - full[spans + 1 - deg]
        right[:, deg - 1] = full[spans + deg] - x
        saved = np.zeros(npts)
        for i in range(deg):
            denom = right[:, i] + left[:, deg - 1 - i]
            temp = vals[:, i] / denom
            vals[:, i] = saved + right[:, i] * temp
            saved = left[:, deg - 1 - i] * temp
        vals[:, deg] = saved
    return vals


def _derivative_chain(full: np.ndarray, order: int, d: int) -> np.ndarray:
    """Banded matrix mapping order-(o-d) values to d-th derivatives.

    Product of the single-step difference matrices D_q for
    q = o-d+1, ..., o; D_q takes order-(q-1) values to first derivatives
    of the order-q family. Terms with zero knot separation are dropped
    (their basis functions vanish identically).
    """
    L = full.size
    chain = None
    for q in range(order - d + 1, order + 1):
        D = np.zeros((L - q + 1, L - q))
        for j in range(L - q):
            den0 = full[j + q - 1] - full[j]
            if den0 > 0:
                D[j, j] += (q - 1) / den0
            den1 = full[j + q] - full[j + 1]
            if den1 > 0:
                D[j + 1, j] -= (q - 1) / den1
        chain = D if chain is None else chain @ D
    return chain


def eval_basis(kv: KnotVector, points, d: int = 0) -> np.ndarray:
    """Evaluate all basis functions (or a derivative) at the given points.

    Parameters
    ----------
    kv : KnotVector
    points : array_like
        Points inside [kv.a, kv.b]; outside raises DomainError.
    d : int
        Derivative order, 0 <= d <= kv.order - 1.

    Returns
    -------
    ndarray of shape (npts, kv.basis_count)
        Row i holds the d-th derivatives of every basis function at
        points[i].  Each row has at most kv.order nonzero entries.
    """
    x = np.atleast_1d(np.asarray(points, dtype=float))
    if x.ndim != 1:
        raise ArgumentError(f"points must be 1-d, got shape {x.shape}")
    if int(d) != d or d < 0 or d > kv.order - 1:
        raise DerivativeOrderError(
            f"derivative order {d} outside [0, {kv.order - 1}] for order {kv.order}"
        )
    d = int(d)
    if x.size and (not np.all(np.isfinite(x)) or x.min() < kv.a or x.max() > kv.b):
        bad = x[~(np.isfinite(x) & (x >= kv.a) & (x <= kv.b))][0]
        raise DomainError(f"point {bad!r} outside knot domain [{kv.a}, {kv.b}]")

    full = kv.full_knots
    o = kv.order
    p = kv.basis_count
    spans = _find_spans(full, o, x)
    q = o - d
    vals = _nonzero_values(full, q, x, spans)

    # order-q family over the same full knots has L - q functions; the
    # nonzero ones at span j are j-q+1 .. j
    low = np.zeros((x.size, full.size - q))
    cols = spans[:, None] + np.arange(-q + 1, 1)[None, :]
    np.put_along_axis(low, cols, vals, axis=1)
    if d == 0:
        return low
    return low @ _derivative_chain(full, o, d)
