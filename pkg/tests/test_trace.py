import json

import numpy as np
import pytest

from conftest import family_of, make_trace
from ivtest.trace import (
    FormatError,
    SignalTrace,
    TransformationFamily,
    ValidationError,
    plane_label,
    parse_plane_label,
    read_trace,
    signal_plane_csv,
    validate_trace,
    write_trace,
)


def minimal_trace(**kw):
    # n+1 = 3, m = 2, one position/modality
    return make_trace({("CONF", "max"): [[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]]}, **kw)


class TestFamily:
    def test_valid(self):
        fam = TransformationFamily("rotation", (-2.0, -1.0, 0.0, 1.0, 2.0))
        assert fam.n == 4
        assert fam.identity_index == 2
        assert fam.violations() == []

    def test_not_increasing(self):
        fam = TransformationFamily("rotation", (-1.0, 1.0, 0.0))
        assert "v_values not strictly increasing" in fam.violations()

    def test_identity_missing(self):
        fam = TransformationFamily("rotation", (-1.0, 0.5, 2.0))
        assert "identity sample v=0 missing" in fam.violations()

    def test_asymmetric(self):
        fam = TransformationFamily("rotation", (-1.0, 0.0, 1.5))
        assert any("symmetric" in v for v in fam.violations())

    def test_even_length(self):
        fam = TransformationFamily("rotation", (-1.0, 0.0, 1.0, 2.0))
        assert any("odd" in v for v in fam.violations())


class TestValidate:
    def test_valid_trace_empty_report(self):
        assert validate_trace(minimal_trace()) == []

    def test_nan_signal_names_cell(self):
        g = np.zeros((5, 8), dtype=np.float32)
        g[3, 7] = np.nan
        tr = make_trace({("CONF", "max"): g})
        assert "non-finite signal at (CONF,max_dif,j=3,k=7)" in validate_trace(tr)

    def test_shape_mismatch(self):
        tr = minimal_trace()
        tr.signals[("CONF", "max")] = np.zeros((2, 2), dtype=np.float32)
        assert any("shape" in v for v in validate_trace(tr))

    def test_predictions_without_truth(self):
        tr = minimal_trace()
        tr.predictions = np.zeros((3, 2), dtype=np.uint16)
        assert any("counterpart" in v for v in validate_trace(tr))

    def test_class_id_out_of_range(self):
        tr = minimal_trace()
        tr.predictions = np.full((3, 2), 7, dtype=np.uint16)
        tr.truth = np.zeros(2, dtype=np.uint16)
        tr.num_classes = 5
        assert any("num_classes" in v for v in validate_trace(tr))

    def test_bad_label_value(self):
        tr = minimal_trace(labels={"rotation": 2})
        assert any("label" in v for v in validate_trace(tr))


class TestRoundTrip:
    def test_write_read_identity(self, tmp_path):
        tr = minimal_trace(
            labels={"rotation": 1}, metadata={"optimizer": "adam", "epochs": "30"}
        )
        write_trace(tr, tmp_path / "t")
        back = read_trace(tmp_path / "t")
        assert back == tr

    def test_signal_payload_is_24_bytes(self, tmp_path):
        write_trace(minimal_trace(), tmp_path / "t")
        payload = (tmp_path / "t" / "signals" / "CONF" / "max.f32").read_bytes()
        assert len(payload) == 3 * 2 * 4

    def test_predictions_files_sizes(self, tmp_path):
        tr = minimal_trace(
            predictions=np.zeros((3, 2), dtype=np.uint16),
            truth=np.zeros(2, dtype=np.uint16),
            num_classes=10,
        )
        write_trace(tr, tmp_path / "t")
        assert len((tmp_path / "t" / "predictions.u16").read_bytes()) == 6 * 2
        assert len((tmp_path / "t" / "truth.u16").read_bytes()) == 2 * 2
        assert read_trace(tmp_path / "t") == tr

    def test_round_trip_is_bit_exact_f32(self, tmp_path, rng):
        g = rng.normal(size=(5, 11)).astype(np.float32)
        tr = make_trace({("CONF", "max"): g, ("CONV-1", "mean"): g * 3})
        write_trace(tr, tmp_path / "t")
        back = read_trace(tmp_path / "t")
        for key in tr.signals:
            assert back.signals[key].tobytes() == tr.signals[key].tobytes()

    def test_rewrite_is_byte_identical(self, tmp_path):
        tr = minimal_trace(labels={"rotation": 0})
        write_trace(tr, tmp_path / "a")
        write_trace(tr, tmp_path / "b")
        for rel in ["manifest.json", "signals/CONF/max.f32"]:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    def test_write_rejects_nonmonotone_v(self, tmp_path):
        tr = minimal_trace()
        tr.family = TransformationFamily("rotation", (-1.0, 1.0, 0.0))
        with pytest.raises(ValidationError, match="v_values not strictly increasing"):
            write_trace(tr, tmp_path / "t")


class TestReadErrors:
    def test_truncated_signal_file(self, tmp_path):
        write_trace(minimal_trace(), tmp_path / "t")
        path = tmp_path / "t" / "signals" / "CONF" / "max.f32"
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(FormatError, match="signal payload size mismatch"):
            read_trace(tmp_path / "t")

    def test_unsupported_format_version(self, tmp_path):
        write_trace(minimal_trace(), tmp_path / "t")
        manifest = json.loads((tmp_path / "t" / "manifest.json").read_text())
        manifest["format_version"] = 99
        (tmp_path / "t" / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(FormatError, match="unsupported format_version"):
            read_trace(tmp_path / "t")

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(FormatError, match="missing file"):
            read_trace(tmp_path / "nope")

    def test_missing_signal_file(self, tmp_path):
        write_trace(minimal_trace(), tmp_path / "t")
        (tmp_path / "t" / "signals" / "CONF" / "max.f32").unlink()
        with pytest.raises(FormatError, match="missing file"):
            read_trace(tmp_path / "t")

    def test_nan_payload_rejected(self, tmp_path):
        write_trace(minimal_trace(), tmp_path / "t")
        bad = np.full((3, 2), np.nan, dtype="<f4")
        (tmp_path / "t" / "signals" / "CONF" / "max.f32").write_bytes(bad.tobytes())
        with pytest.raises(FormatError, match="non-finite"):
            read_trace(tmp_path / "t")

    def test_endianness_fixed_payload(self, tmp_path):
        # the format is little-endian by definition: bytes decode the same
        # regardless of the platform reading them
        write_trace(minimal_trace(), tmp_path / "t")
        raw = (tmp_path / "t" / "signals" / "CONF" / "max.f32").read_bytes()
        expected = np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]], dtype="<f4")
        assert np.array_equal(np.frombuffer(raw, dtype="<f4").reshape(3, 2), expected)


class TestPlaneHelpers:
    def test_plane_label_round_trip(self):
        assert plane_label("CONF", "max") == "Max@CONF"
        assert parse_plane_label("Max@CONF") == ("CONF", "max")
        assert parse_plane_label("Mean@CONV-1") == ("CONV-1", "mean")
        with pytest.raises(ValueError):
            parse_plane_label("bogus")

    def test_signal_csv(self):
        tr = minimal_trace()
        csv = signal_plane_csv(tr, "CONF", "max")
        lines = csv.strip().split("\n")
        assert lines[0] == "j,k,value"
        assert len(lines) == 1 + 3 * 2
        j, k, value = lines[1].split(",")
        assert (j, k) == ("0", "0")
        assert abs(float(value) - np.float32(0.1)) < 1e-9
