"""Gridded-data container and the two file formats.

Oracles: byte-level IEEE-754 facts for the binary payload, hand-built
malformed headers for each diagnostic, and exact round-trips over random
doubles (shortest round-trip decimals must reparse bit-identically).
"""

import io
import json

import numpy as np
import pytest

from snapefit import (
    ArgumentError,
    DataFormatError,
    KnotVector,
    make_uniform_knots,
)
from snapefit.datasets import (
    FieldData,
    ResultDocument,
    read_csv_grid,
    read_grid,
    read_result,
    write_grid,
    write_result,
)
from snapefit.noise_bootstrap import BootstrapResult
from snapefit.solver import AdmmConfig, FitResult
from snapefit.tensor_basis import BasisSpec, Grid


def sample_data(seed=0):
    rng = np.random.default_rng(seed)
    grid = Grid([
        ("x", np.linspace(-1.0, 2.0, 7)),
        ("t", np.array([0.0, 0.1, 0.25, 0.7])),  # non-uniform on purpose
    ])
    return FieldData(grid=grid, fields={
        "u": rng.standard_normal(grid.point_count),
        "v": rng.standard_normal(grid.point_count),
    })


class TestFieldData:
    def test_values_are_flattened_and_frozen(self):
        data = sample_data()
        assert data.values("u").shape == (28,)
        with pytest.raises(ValueError):
            data.values("u")[0] = 5.0
        assert data.reshaped("u").shape == (7, 4)

    def test_field_count_must_match_grid(self):
        grid = Grid([("x", np.array([0.0, 1.0]))])
        with pytest.raises(ArgumentError, match="3 values for 2"):
            FieldData(grid=grid, fields={"u": np.zeros(3)})

    def test_unknown_field_lookup(self):
        with pytest.raises(ArgumentError, match="no field 'w'"):
            sample_data().values("w")

    def test_equality(self):
        assert sample_data(3) == sample_data(3)
        assert sample_data(3) != sample_data(4)


class TestGridFileRoundTrip:
    def test_bit_identical_round_trip(self):
        data = sample_data(1)
        buf = io.BytesIO()
        write_grid(data, buf)
        back = read_grid(io.BytesIO(buf.getvalue()))
        assert back.field_names == ("u", "v")
        for name in ("u", "v"):
            assert np.array_equal(back.values(name), data.values(name))
        for a, b in zip(back.grid.coordinates, data.grid.coordinates):
            assert np.array_equal(a, b)
        assert back.grid.axis_names == data.grid.axis_names

    def test_round_trip_through_file(self, tmp_path):
        data = sample_data(2)
        path = tmp_path / "sample.grd"
        write_grid(data, path)
        assert read_grid(path) == data

    def test_payload_encoding_of_one(self):
        # IEEE-754 little-endian float64 of 1.0
        grid = Grid([("x", np.array([0.0, 1.0]))])
        buf = io.BytesIO()
        write_grid(FieldData(grid=grid, fields={"u": [1.0, 1.0]}), buf)
        payload = buf.getvalue()[-16:]
        assert payload == bytes.fromhex("000000000000f03f") * 2

    def test_uniform_axis_written_compactly(self):
        data = sample_data()
        buf = io.BytesIO()
        write_grid(data, buf)
        header = buf.getvalue().split(b"data f64le rowmajor\n")[0].decode()
        assert "axis x 7 uniform -1.0 2.0" in header
        assert "axis t 4 explicit 0.0 0.1 0.25 0.7" in header

    def test_nearly_uniform_axis_stays_explicit(self):
        # coordinates that are uniform to the eye but not bit-equal to linspace
        coords = np.linspace(0.0, 1.0, 5)
        coords[2] = np.nextafter(coords[2], 1.0)
        grid = Grid([("x", coords)])
        buf = io.BytesIO()
        write_grid(FieldData(grid=grid, fields={"u": np.zeros(5)}), buf)
        assert b"explicit" in buf.getvalue()
        back = read_grid(io.BytesIO(buf.getvalue()))
        assert np.array_equal(back.grid.coordinates[0], coords)

    def test_random_explicit_coordinates_exact(self):
        rng = np.random.default_rng(7)
        coords = np.sort(rng.standard_normal(11))
        grid = Grid([("s", coords)])
        data = FieldData(grid=grid, fields={"f": rng.standard_normal(11)})
        buf = io.BytesIO()
        write_grid(data, buf)
        back = read_grid(io.BytesIO(buf.getvalue()))
        assert np.array_equal(back.grid.coordinates[0], coords)
        assert np.array_equal(back.values("f"), data.values("f"))

    def test_writer_rejects_non_finite(self):
        grid = Grid([("x", np.array([0.0, 1.0]))])
        data = FieldData(grid=grid, fields={"u": [1.0, np.nan]})
        with pytest.raises(ArgumentError, match="non-finite"):
            write_grid(data, io.BytesIO())


def valid_blob():
    buf = io.BytesIO()
    write_grid(sample_data(), buf)
    return buf.getvalue()


class TestGridFileDiagnostics:
    def test_magic_mismatch(self):
        with pytest.raises(DataFormatError, match="magic mismatch"):
            read_grid(io.BytesIO(b"NOTAGRID 1\n"))

    def test_version_mismatch(self):
        blob = valid_blob().replace(b"SNAPEGRID 1", b"SNAPEGRID 9", 1)
        with pytest.raises(DataFormatError, match="version"):
            read_grid(io.BytesIO(blob))

    def test_truncated_payload(self):
        with pytest.raises(DataFormatError, match="truncated payload"):
            read_grid(io.BytesIO(valid_blob()[:-8]))

    def test_payload_size_mismatch(self):
        with pytest.raises(DataFormatError, match="payload size mismatch"):
            read_grid(io.BytesIO(valid_blob() + b"\x00" * 8))

    def test_non_monotone_axis(self):
        header = (
            "SNAPEGRID 1\naxes 1\naxis x 3 explicit 0.0 2.0 1.0\n"
            "fields 1 u\ndata f64le rowmajor\n"
        ).encode()
        with pytest.raises(DataFormatError, match="non-monotone axis 'x'"):
            read_grid(io.BytesIO(header + b"\x00" * 24))

    def test_extra_axis_line(self):
        header = (
            "SNAPEGRID 1\naxes 2\n"
            "axis x 2 uniform 0.0 1.0\naxis y 2 uniform 0.0 1.0\n"
            "axis z 2 uniform 0.0 1.0\n"
            "fields 1 u\ndata f64le rowmajor\n"
        ).encode()
        with pytest.raises(DataFormatError, match="line 5: .*extra axis line"):
            read_grid(io.BytesIO(header + b"\x00" * 64))

    def test_missing_axis_line(self):
        header = (
            "SNAPEGRID 1\naxes 2\naxis x 2 uniform 0.0 1.0\n"
            "fields 1 u\ndata f64le rowmajor\n"
        ).encode()
        with pytest.raises(DataFormatError, match="expected an 'axis' line"):
            read_grid(io.BytesIO(header + b"\x00" * 32))

    def test_fields_count_mismatch(self):
        header = (
            "SNAPEGRID 1\naxes 1\naxis x 2 uniform 0.0 1.0\n"
            "fields 2 u\ndata f64le rowmajor\n"
        ).encode()
        with pytest.raises(DataFormatError, match="declares 2 names, found 1"):
            read_grid(io.BytesIO(header + b"\x00" * 32))

    def test_bad_data_line(self):
        blob = valid_blob().replace(b"data f64le rowmajor", b"data f32le rowmajor", 1)
        with pytest.raises(DataFormatError, match="expected 'data f64le rowmajor'"):
            read_grid(io.BytesIO(blob))

    def test_explicit_count_mismatch(self):
        header = (
            "SNAPEGRID 1\naxes 1\naxis x 4 explicit 0.0 1.0 2.0\n"
            "fields 1 u\ndata f64le rowmajor\n"
        ).encode()
        with pytest.raises(DataFormatError, match="declares 4 values, found 3"):
            read_grid(io.BytesIO(header + b"\x00" * 32))


def make_fit_result(seed=0):
    rng = np.random.default_rng(seed)
    return FitResult(
        theta=rng.standard_normal(2),
        theta_names=("conv", "diff"),
        beta=rng.standard_normal(12),
        converged=True,
        iterations=137,
        primal_residual=1.25e-9,
        data_misfit=0.004,
        theta_trace=np.zeros((1, 2)),
        primal_trace=np.zeros(1),
        config=AdmmConfig(rho=2.0, tol_primal=1e-7),
    )


def make_basis():
    return BasisSpec([
        ("x", make_uniform_knots(0.0, 1.0, 4, 3)),
        ("t", KnotVector(order=2, distinct_knots=[0.0, 0.5, 2.0])),
    ])


class TestResultDocuments:
    def test_fit_round_trip_exact(self, tmp_path):
        result = make_fit_result(5)
        path = tmp_path / "fit.json"
        write_result(result, path, model_source="axes x;\n", basis=make_basis())
        doc = read_result(path)
        assert doc.kind == "fit"
        assert doc.theta_names == ("conv", "diff")
        # random doubles survive the decimal round-trip bit-exactly
        assert np.array_equal(doc.theta, result.theta)
        assert np.array_equal(doc.beta, result.beta)
        assert doc["converged"] is True
        assert doc["iterations"] == 137
        assert doc["model_source"] == "axes x;\n"
        assert doc["config"]["rho"] == 2.0
        assert doc["config"]["tol_primal"] == 1e-7
        basis = doc.basis()
        assert basis.axis_names == ("x", "t")
        assert basis.knots[1].order == 2
        assert np.array_equal(basis.knots[1].distinct_knots, [0.0, 0.5, 2.0])

    def test_fit_requires_basis(self):
        with pytest.raises(ArgumentError, match="basis"):
            write_result(make_fit_result(), io.StringIO())

    def test_bootstrap_round_trip(self, tmp_path):
        rng = np.random.default_rng(11)
        reps = rng.standard_normal((4, 3))
        reps[2] = np.nan  # a failed replicate carries no estimate
        flags = np.array([True, True, False, True])
        result = BootstrapResult(
            theta_names=("a", "b", "c"),
            replicates=reps,
            theta_mean=reps[flags].mean(axis=0),
            cov_percent=np.array([1.0, 2.0, 0.5]),
            converged_flags=flags,
            seeds=(7, 8, 9, 10),
            mode="fresh",
            noise_level=0.1,
            config=AdmmConfig(),
        )
        path = tmp_path / "boot.json"
        write_result(result, path, model_source="m")
        doc = read_result(path)
        assert doc.kind == "bootstrap"
        assert np.array_equal(doc.theta_mean, result.theta_mean)
        assert np.array_equal(doc.cov_percent, result.cov_percent)
        back = doc.replicates
        assert np.array_equal(back[flags], reps[flags])
        assert np.all(np.isnan(back[2]))
        assert doc["converged_flags"] == [True, True, False, True]
        assert doc["seeds"] == [7, 8, 9, 10]
        assert doc["mode"] == "fresh"
        assert doc["noise_level"] == 0.1

    def test_seventeen_digit_fidelity(self):
        # values that need the full 17 significant digits
        result = make_fit_result()
        result.theta = np.array([0.1 + 0.2, 1 / 3])
        buf = io.StringIO()
        write_result(result, buf, basis=make_basis())
        text = buf.getvalue()
        assert "0.30000000000000004" in text
        assert np.array_equal(read_result(io.StringIO(text)).theta, result.theta)

    def test_document_shape(self):
        buf = io.StringIO()
        write_result(make_fit_result(), buf, basis=make_basis())
        text = buf.getvalue()
        assert text.endswith("}\n")
        assert '\n  "kind": "fit",' in text
        assert json.loads(text)["format_version"] == 1

    def test_missing_theta_mean_key(self):
        doc = {
            "format_version": 1, "kind": "bootstrap", "model_source": "",
            "theta_names": ["a"], "cov_percent": [0.0], "replicates": [[1.0]],
            "converged_flags": [True], "seeds": [0], "config": {},
        }
        with pytest.raises(DataFormatError, match="'theta_mean'"):
            read_result(io.StringIO(json.dumps(doc)))

    def test_missing_format_version(self):
        with pytest.raises(DataFormatError, match="'format_version'"):
            read_result(io.StringIO('{"kind": "fit"}'))

    def test_version_mismatch(self):
        with pytest.raises(DataFormatError, match="version mismatch"):
            read_result(io.StringIO('{"format_version": 2, "kind": "fit"}'))

    def test_bad_kind(self):
        with pytest.raises(DataFormatError, match="'kind'"):
            read_result(io.StringIO('{"format_version": 1, "kind": "banana"}'))

    def test_not_json(self):
        with pytest.raises(DataFormatError, match="not valid JSON"):
            read_result(io.StringIO("SNAPEGRID 1"))

    def test_rejects_unknown_payload(self):
        with pytest.raises(ArgumentError, match="cannot serialize"):
            write_result({"theta": [1.0]}, io.StringIO())


class TestCsvImport:
    def test_one_dimensional(self):
        text = "t,u\n0.0,1.0\n1.0,3.0\n2.0,5.0\n"
        data = read_csv_grid(io.StringIO(text))
        assert data.grid.axis_names == ("t",)
        assert np.array_equal(data.values("u"), [1.0, 3.0, 5.0])

    def test_two_dimensional_any_row_order(self):
        rows = ["x,t,u"]
        expected = np.zeros((2, 3))
        for i, xv in enumerate([0.0, 1.0]):
            for j, tv in enumerate([0.0, 0.5, 1.0]):
                expected[i, j] = 10 * xv + tv
        # shuffled row order must not matter
        for i, j in [(1, 2), (0, 0), (1, 0), (0, 2), (0, 1), (1, 1)]:
            rows.append(f"{[0.0, 1.0][i]},{[0.0, 0.5, 1.0][j]},{expected[i, j]}")
        data = read_csv_grid(io.StringIO("\n".join(rows)))
        assert data.grid.axis_names == ("x", "t")
        assert np.array_equal(data.reshaped("u"), expected)

    def test_incomplete_grid(self):
        text = "x,t,u\n0,0,1\n0,1,2\n1,0,3\n"
        with pytest.raises(DataFormatError, match="full grid"):
            read_csv_grid(io.StringIO(text))

    def test_repeated_point(self):
        # row count matches the grid size, but one point appears twice
        text = "x,t,u\n0,0,1\n0,0,2\n0,1,3\n1,0,4\n"
        with pytest.raises(DataFormatError, match="repeats"):
            read_csv_grid(io.StringIO(text))

    def test_too_many_columns(self):
        text = "x,y,z,u\n" + "0,0,0,1\n"
        with pytest.raises(DataFormatError, match="1D or 2D"):
            read_csv_grid(io.StringIO(text))

    def test_bad_value(self):
        with pytest.raises(DataFormatError, match="bad CSV value"):
            read_csv_grid(io.StringIO("t,u\n0,abc\n1,2\n"))
