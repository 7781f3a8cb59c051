"""Gridded field data and the two on-disk formats.

GRD files carry sampled fields: an ASCII header (magic line, axes, field
names, payload declaration) followed by a raw little-endian float64
payload, one block per field, each flattened first-axis-slowest.  Uniform
axes are stored as (count, a, b) and regenerated with linspace, so a
write/read cycle is bit-identical; anything else stores explicit
coordinates with shortest round-trip decimals.

Result documents are JSON: a "fit" document carries the estimates plus
everything needed to evaluate the fitted surface later (basis and beta);
a "bootstrap" document carries replicate statistics.  All floats use
Python's shortest round-trip representation, so parsing returns the exact
doubles that were written.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Optional, Tuple

import numpy as np

from .errors import ArgumentError, DataFormatError
from .splines import KnotVector
from .tensor_basis import BasisSpec, Grid

__all__ = [
    "FieldData",
    "write_grid",
    "read_grid",
    "write_result",
    "read_result",
    "ResultDocument",
    "read_csv_grid",
]

GRD_MAGIC = "SNAPEGRID"
GRD_VERSION = 1
RESULT_VERSION = 1


@dataclass(frozen=True)
class FieldData:
    """One or more named fields sampled on a shared grid; values are
    flattened first-axis-slowest."""

    grid: Grid
    fields: dict  # name -> np.ndarray of shape (grid.point_count,)

    def __post_init__(self):
        if not isinstance(self.grid, Grid):
            raise ArgumentError("grid must be a Grid")
        if not self.fields:
            raise ArgumentError("FieldData needs at least one field")
        n = self.grid.point_count
        clean = {}
        for name, values in self.fields.items():
            if not isinstance(name, str) or not name.isidentifier():
                raise ArgumentError(f"field name must be an identifier, got {name!r}")
            v = np.asarray(values, dtype=float).ravel().copy()
            if v.size != n:
                raise ArgumentError(
                    f"field {name!r} has {v.size} values for {n} grid points"
                )
            v.flags.writeable = False
            clean[name] = v
        object.__setattr__(self, "fields", clean)

    @property
    def field_names(self) -> Tuple[str, ...]:
        return tuple(self.fields)

    def values(self, name: str) -> np.ndarray:
        if name not in self.fields:
            raise ArgumentError(f"no field {name!r}; fields are {self.field_names}")
        return self.fields[name]

    def reshaped(self, name: str) -> np.ndarray:
        return self.values(name).reshape(self.grid.shape)

    def __eq__(self, other):
        if not isinstance(other, FieldData):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.field_names == other.field_names
            and all(np.array_equal(self.fields[k], other.fields[k]) for k in self.fields)
        )


def _is_uniform(coords: np.ndarray) -> bool:
    return np.array_equal(
        coords, np.linspace(coords[0], coords[-1], coords.size)
    )


def write_grid(data: FieldData, destination) -> None:
    """Write a GRD file (path or binary file object)."""
    for name, v in data.fields.items():
        if not np.all(np.isfinite(v)):
            raise ArgumentError(f"field {name!r} has non-finite values; refusing to write")
    lines = [f"{GRD_MAGIC} {GRD_VERSION}", f"axes {data.grid.ndim}"]
    for name, coords in zip(data.grid.axis_names, data.grid.coordinates):
        if _is_uniform(coords):
            lines.append(
                f"axis {name} {coords.size} uniform {float(coords[0])!r} {float(coords[-1])!r}"
            )
        else:
            values = " ".join(repr(float(c)) for c in coords)
            lines.append(f"axis {name} {coords.size} explicit {values}")
    lines.append(f"fields {len(data.fields)} " + " ".join(data.field_names))
    lines.append("data f64le rowmajor")
    header = ("\n".join(lines) + "\n").encode("ascii")
    payload = b"".join(v.astype("<f8").tobytes() for v in data.fields.values())

    if hasattr(destination, "write"):
        destination.write(header + payload)
    else:
        with open(destination, "wb") as fh:
            fh.write(header + payload)


class _HeaderScanner:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0
        self.lineno = 0

    def line(self) -> str:
        end = self.blob.find(b"\n", self.pos)
        if end < 0:
            raise DataFormatError(f"line {self.lineno + 1}: unterminated header")
        raw = self.blob[self.pos:end]
        self.pos = end + 1
        self.lineno += 1
        try:
            return raw.decode("ascii")
        except UnicodeDecodeError:
            raise DataFormatError(f"line {self.lineno}: header is not ASCII")


def read_grid(source) -> FieldData:
    """Read a GRD file (path or binary file object)."""
    if hasattr(source, "read"):
        blob = source.read()
    else:
        with open(source, "rb") as fh:
            blob = fh.read()

    scan = _HeaderScanner(blob)
    magic = scan.line().split()
    if len(magic) != 2 or magic[0] != GRD_MAGIC:
        raise DataFormatError(f"magic mismatch: expected '{GRD_MAGIC} {GRD_VERSION}' header")
    if magic[1] != str(GRD_VERSION):
        raise DataFormatError(f"unsupported grid format version {magic[1]!r}")

    tok = scan.line().split()
    if len(tok) != 2 or tok[0] != "axes" or not tok[1].isdigit():
        raise DataFormatError(f"line {scan.lineno}: expected 'axes <d>'")
    ndim = int(tok[1])
    if ndim < 1:
        raise DataFormatError(f"line {scan.lineno}: axis count must be at least 1")

    axes = []
    for _ in range(ndim):
        tok = scan.line().split()
        if len(tok) < 4 or tok[0] != "axis":
            raise DataFormatError(f"line {scan.lineno}: expected an 'axis' line")
        name = tok[1]
        try:
            count = int(tok[2])
        except ValueError:
            raise DataFormatError(f"line {scan.lineno}: bad axis count {tok[2]!r}")
        kind = tok[3]
        if kind == "uniform":
            if len(tok) != 6:
                raise DataFormatError(f"line {scan.lineno}: uniform axis needs '<a> <b>'")
            try:
                a, b = float(tok[4]), float(tok[5])
            except ValueError:
                raise DataFormatError(f"line {scan.lineno}: bad uniform axis bounds")
            coords = np.linspace(a, b, count)
        elif kind == "explicit":
            if len(tok) != 4 + count:
                raise DataFormatError(
                    f"line {scan.lineno}: explicit axis declares {count} values, "
                    f"found {len(tok) - 4}"
                )
            try:
                coords = np.array([float(v) for v in tok[4:]])
            except ValueError:
                raise DataFormatError(f"line {scan.lineno}: bad explicit axis value")
        else:
            raise DataFormatError(f"line {scan.lineno}: unknown axis kind {kind!r}")
        if coords.size < 2 or not np.all(np.diff(coords) > 0):
            raise DataFormatError(f"line {scan.lineno}: non-monotone axis {name!r}")
        axes.append((name, coords))

    tok = scan.line().split()
    if tok and tok[0] == "axis":
        raise DataFormatError(
            f"line {scan.lineno}: expected 'fields', found an extra axis line"
        )
    if len(tok) < 2 or tok[0] != "fields" or not tok[1].isdigit():
        raise DataFormatError(f"line {scan.lineno}: expected 'fields <c> <names...>'")
    nfields = int(tok[1])
    names = tok[2:]
    if len(names) != nfields or nfields < 1:
        raise DataFormatError(
            f"line {scan.lineno}: fields line declares {nfields} names, found {len(names)}"
        )

    tok = scan.line()
    if tok != "data f64le rowmajor":
        raise DataFormatError(f"line {scan.lineno}: expected 'data f64le rowmajor'")

    try:
        grid = Grid(axes)
    except ArgumentError as exc:
        raise DataFormatError(str(exc)) from exc

    n = grid.point_count
    payload = blob[scan.pos:]
    expected = nfields * n * 8
    if len(payload) < expected:
        raise DataFormatError(
            f"truncated payload: expected {expected} bytes, found {len(payload)}"
        )
    if len(payload) > expected:
        raise DataFormatError(
            f"payload size mismatch: expected {expected} bytes, found {len(payload)}"
        )
    flat = np.frombuffer(payload, dtype="<f8")
    fields = {name: flat[i * n:(i + 1) * n].astype(float) for i, name in enumerate(names)}
    return FieldData(grid=grid, fields=fields)


# ---------------------------------------------------------------------------
# result documents


@dataclass
class ResultDocument:
    """Parsed result file: 'fit' or 'bootstrap' document."""

    kind: str
    raw: dict

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def theta_names(self) -> Tuple[str, ...]:
        return tuple(self.raw["theta_names"])

    @property
    def theta(self) -> np.ndarray:
        key = "theta" if self.kind == "fit" else "theta_mean"
        return np.asarray(self.raw[key], dtype=float)

    @property
    def theta_mean(self) -> np.ndarray:
        return np.asarray(self.raw["theta_mean"], dtype=float)

    @property
    def cov_percent(self) -> np.ndarray:
        return np.asarray(self.raw["cov_percent"], dtype=float)

    @property
    def replicates(self) -> np.ndarray:
        rows = self.raw["replicates"]
        q = len(self.raw["theta_names"])
        out = np.full((len(rows), q), np.nan)
        for i, row in enumerate(rows):
            if row is not None:
                out[i] = row
        return out

    @property
    def beta(self) -> np.ndarray:
        return np.asarray(self.raw["beta"], dtype=float)

    def basis(self) -> BasisSpec:
        axes = []
        for ax in self.raw["basis"]["axes"]:
            axes.append(
                (ax["name"], KnotVector(order=int(ax["order"]),
                                        distinct_knots=np.asarray(ax["distinct_knots"])))
            )
        return BasisSpec(axes)


def _basis_to_json(spec: BasisSpec) -> dict:
    return {
        "axes": [
            {"name": name, "order": kv.order, "distinct_knots": [float(v) for v in kv.distinct_knots]}
            for name, kv in zip(spec.axis_names, spec.knots)
        ]
    }


def _config_to_json(cfg) -> dict:
    return {
        "rho": cfg.rho,
        "mu": cfg.mu,
        "gamma": cfg.gamma,
        "ridge": cfg.ridge,
        "theta0": None if cfg.theta0 is None else [float(v) for v in cfg.theta0],
        "tol_theta": cfg.tol_theta,
        "tol_primal": cfg.tol_primal,
        "max_iter": cfg.max_iter,
    }


_FIT_KEYS = ("model_source", "theta_names", "theta", "beta", "basis", "converged",
             "iterations", "config")
_BOOTSTRAP_KEYS = ("model_source", "theta_names", "theta_mean", "cov_percent",
                   "replicates", "converged_flags", "seeds", "config")


def write_result(
    result,
    destination,
    *,
    model_source: str = "",
    basis: Optional[BasisSpec] = None,
    extra: Optional[Mapping] = None,
) -> None:
    """Serialize a FitResult or BootstrapResult to a JSON document.

    Fit documents need ``basis`` so the fitted surface can be evaluated
    later; bootstrap documents carry their own metadata.
    """
    # local imports: solver and bootstrap stay importable without datasets
    from .solver import FitResult
    from .noise_bootstrap import BootstrapResult

    if isinstance(result, FitResult):
        if basis is None:
            raise ArgumentError("fit documents require the basis used for the fit")
        doc = {
            "format_version": RESULT_VERSION,
            "kind": "fit",
            "model_source": model_source,
            "theta_names": list(result.theta_names),
            "theta": [float(v) for v in result.theta],
            "beta": [float(v) for v in result.beta],
            "basis": _basis_to_json(basis),
            "converged": bool(result.converged),
            "iterations": int(result.iterations),
            "primal_residual": float(result.primal_residual),
            "data_misfit": float(result.data_misfit),
            "config": _config_to_json(result.config),
        }
    elif isinstance(result, BootstrapResult):
        doc = {
            "format_version": RESULT_VERSION,
            "kind": "bootstrap",
            "model_source": model_source,
            "theta_names": list(result.theta_names),
            "theta_mean": [float(v) for v in result.theta_mean],
            "cov_percent": [float(v) for v in result.cov_percent],
            # failed replicates carry no estimate; store them as null rows
            "replicates": [
                [float(v) for v in row] if np.all(np.isfinite(row)) else None
                for row in result.replicates
            ],
            "converged_flags": [bool(v) for v in result.converged_flags],
            "seeds": [int(s) for s in result.seeds],
            "mode": result.mode,
            "noise_level": float(result.noise_level),
            "config": _config_to_json(result.config),
        }
        if basis is not None:
            doc["basis"] = _basis_to_json(basis)
    else:
        raise ArgumentError(f"cannot serialize {type(result).__name__} as a result document")
    if extra:
        for key, value in extra.items():
            doc[key] = value

    text = json.dumps(doc, indent=2, allow_nan=False) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="ascii") as fh:
            fh.write(text)


def read_result(source) -> ResultDocument:
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="ascii") as fh:
            text = fh.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"result document is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataFormatError("result document must be a JSON object")
    if "format_version" not in raw:
        raise DataFormatError("result document missing required key 'format_version'")
    if raw["format_version"] != RESULT_VERSION:
        raise DataFormatError(
            f"result format version mismatch: supported {RESULT_VERSION}, "
            f"found {raw['format_version']!r}"
        )
    kind = raw.get("kind")
    if kind not in ("fit", "bootstrap"):
        raise DataFormatError("result document missing required key 'kind' (fit|bootstrap)")
    required = _FIT_KEYS if kind == "fit" else _BOOTSTRAP_KEYS
    for key in required:
        if key not in raw:
            raise DataFormatError(f"result document missing required key {key!r}")
    return ResultDocument(kind=kind, raw=raw)


# ---------------------------------------------------------------------------
# CSV import for hand-made 1D/2D fixtures


def read_csv_grid(source) -> FieldData:
    """Read a complete 1D/2D grid from CSV: header row names the axis
    column(s) and one field column; every grid combination must appear
    exactly once."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    rows = [line.strip() for line in text.splitlines() if line.strip()]
    if len(rows) < 2:
        raise DataFormatError("CSV needs a header row and at least one data row")
    header = [h.strip() for h in rows[0].split(",")]
    ncols = len(header)
    if ncols not in (2, 3):
        raise DataFormatError(
            f"CSV import supports 1D or 2D grids (2 or 3 columns), found {ncols}"
        )
    try:
        table = np.array(
            [[float(v) for v in row.split(",")] for row in rows[1:]], dtype=float
        )
    except ValueError as exc:
        raise DataFormatError(f"bad CSV value: {exc}") from exc
    if table.shape[1] != ncols:
        raise DataFormatError("CSV rows have inconsistent column counts")

    axis_names = header[:-1]
    field_name = header[-1]
    uniques = [np.unique(table[:, a]) for a in range(len(axis_names))]
    total = int(np.prod([u.size for u in uniques]))
    if table.shape[0] != total:
        raise DataFormatError(
            f"CSV does not cover the full grid: {table.shape[0]} rows for "
            f"{total} grid points"
        )
    values = np.full(total, np.nan)
    strides = [int(np.prod([u.size for u in uniques[a + 1:]])) for a in range(len(uniques))]
    for row in table:
        idx = 0
        for a, u in enumerate(uniques):
            pos = np.searchsorted(u, row[a])
            idx += pos * strides[a]
        if not np.isnan(values[idx]):
            raise DataFormatError("CSV repeats a grid point")
        values[idx] = row[-1]
    grid = Grid(list(zip(axis_names, uniques)))
    return FieldData(grid=grid, fields={field_name: values})
