"""Tensor data model, views, flipping, and the .scdat file format."""

import numpy as np
import pytest

import scda
from scda import FormatError
from scda.tensor import FORMAT_VERSION, tensor_filename

from conftest import make_tensor


class TestActivationTensor:
    def test_values_cast_to_float32_and_frozen(self):
        vals = np.ones((2, 3, 4), dtype=np.float64)
        t = scda.ActivationTensor(values=vals, source_layer=scda.POOL5,
                                  orientation=scda.ORIENT_ORIGINAL)
        assert t.values.dtype == np.float32
        with pytest.raises(ValueError):
            t.values[0, 0, 0] = 5.0

    def test_rejects_non_finite(self):
        vals = np.ones((2, 2, 2), dtype=np.float32)
        vals[1, 1, 1] = np.nan
        with pytest.raises(ValueError, match="NaN or Inf"):
            scda.ActivationTensor(values=vals, source_layer=scda.POOL5,
                                  orientation=scda.ORIENT_ORIGINAL)

    def test_rejects_wrong_rank_and_empty_axes(self):
        for shape in ((3, 3), (0, 2, 2), (2, 2, 0)):
            with pytest.raises(ValueError):
                scda.ActivationTensor(values=np.ones(shape, dtype=np.float32),
                                      source_layer=scda.POOL5,
                                      orientation=scda.ORIENT_ORIGINAL)

    def test_dimension_properties(self):
        rng = np.random.default_rng(0)
        t = make_tensor(rng, h=5, w=9, d=12)
        assert (t.height, t.width, t.depth) == (5, 9, 12)


class TestViews:
    def test_feature_map_matches_slice(self):
        rng = np.random.default_rng(1)
        t = make_tensor(rng, h=4, w=6, d=8)
        for n in range(t.depth):
            np.testing.assert_array_equal(scda.feature_map(t, n),
                                          t.values[:, :, n])
        with pytest.raises(IndexError):
            scda.feature_map(t, 8)

    def test_descriptor_at_matches_loop(self):
        rng = np.random.default_rng(2)
        t = make_tensor(rng, h=3, w=5, d=7)
        for i in range(t.height):
            for j in range(t.width):
                expected = np.array([t.values[i, j, n] for n in range(t.depth)])
                np.testing.assert_array_equal(scda.descriptor_at(t, i, j),
                                              expected)
        with pytest.raises(IndexError):
            scda.descriptor_at(t, 3, 0)
        with pytest.raises(IndexError):
            scda.descriptor_at(t, 0, 5)

    def test_aggregation_map_is_channel_sum(self):
        rng = np.random.default_rng(3)
        t = make_tensor(rng, h=6, w=4, d=32)
        agg = scda.aggregation_map(t)
        assert agg.dtype == np.float64
        oracle = np.zeros((6, 4))
        for n in range(t.depth):
            oracle += t.values[:, :, n].astype(np.float64)
        np.testing.assert_allclose(agg, oracle, rtol=1e-12)


class TestHflip:
    def test_reverses_columns(self):
        rng = np.random.default_rng(4)
        t = make_tensor(rng, h=3, w=5, d=2)
        f = scda.hflip(t)
        assert f.orientation == scda.ORIENT_HFLIP
        for j in range(t.width):
            np.testing.assert_array_equal(f.values[:, j, :],
                                          t.values[:, t.width - 1 - j, :])

    def test_involution(self):
        rng = np.random.default_rng(5)
        t = make_tensor(rng, h=2, w=4, d=3)
        back = scda.hflip(scda.hflip(t))
        assert back.orientation == scda.ORIENT_ORIGINAL
        np.testing.assert_array_equal(back.values, t.values)


class TestRecord:
    def test_rejects_mismatched_key_metadata(self):
        rng = np.random.default_rng(6)
        t = make_tensor(rng)
        with pytest.raises(ValueError, match="mismatched"):
            scda.TensorRecord(image_id="x", image_height=100, image_width=100,
                              tensors={(scda.RELU5_2, scda.ORIENT_ORIGINAL): t})

    def test_rejects_smaller_early_layer_grid(self):
        rng = np.random.default_rng(7)
        p5 = make_tensor(rng, h=7, w=7, layer=scda.POOL5)
        r52 = make_tensor(rng, h=6, w=7, layer=scda.RELU5_2)
        with pytest.raises(ValueError, match="smaller"):
            scda.TensorRecord(
                image_id="x", image_height=100, image_width=100,
                tensors={(scda.POOL5, scda.ORIENT_ORIGINAL): p5,
                         (scda.RELU5_2, scda.ORIENT_ORIGINAL): r52})

    def test_get_missing_key(self):
        rng = np.random.default_rng(8)
        rec = scda.TensorRecord(
            image_id="x", image_height=50, image_width=60,
            tensors={(scda.POOL5, scda.ORIENT_ORIGINAL): make_tensor(rng)})
        assert rec.get(scda.POOL5).height == 7
        with pytest.raises(KeyError):
            rec.get(scda.RELU5_2)


class TestFileFormat:
    def _write_one(self, tmp_path, rng):
        t = make_tensor(rng, h=3, w=4, d=5)
        path = tmp_path / "one.scdat"
        scda.write_activation_file(path, 300, 400, t)
        return path, t

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        path, t = self._write_one(tmp_path, rng)
        H, W, back = scda.read_activation_file(path)
        assert (H, W) == (300, 400)
        assert back.source_layer == t.source_layer
        assert back.orientation == t.orientation
        np.testing.assert_array_equal(back.values, t.values)

    def test_rewrite_is_byte_identical(self, tmp_path):
        rng = np.random.default_rng(10)
        path, t = self._write_one(tmp_path, rng)
        first = path.read_bytes()
        scda.write_activation_file(path, 300, 400, t)
        assert path.read_bytes() == first

    def test_custom_layer_name_survives(self, tmp_path):
        rng = np.random.default_rng(11)
        t = make_tensor(rng, layer="conv4_3")
        path = tmp_path / "c.scdat"
        scda.write_activation_file(path, 100, 100, t)
        _, _, back = scda.read_activation_file(path)
        assert back.source_layer == "conv4_3"

    def test_bad_magic(self, tmp_path):
        rng = np.random.default_rng(12)
        path, _ = self._write_one(tmp_path, rng)
        raw = bytearray(path.read_bytes())
        raw[0] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as err:
            scda.read_activation_file(path)
        assert err.value.code == "bad-magic"

    def test_bad_version(self, tmp_path):
        rng = np.random.default_rng(13)
        path, _ = self._write_one(tmp_path, rng)
        raw = bytearray(path.read_bytes())
        raw[4:8] = (FORMAT_VERSION + 9).to_bytes(4, "little")
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as err:
            scda.read_activation_file(path)
        assert err.value.code == "bad-version"

    def test_truncated(self, tmp_path):
        rng = np.random.default_rng(14)
        path, _ = self._write_one(tmp_path, rng)
        raw = path.read_bytes()
        path.write_bytes(raw[:-3])
        with pytest.raises(FormatError) as err:
            scda.read_activation_file(path)
        assert err.value.code == "truncated"

    def test_trailing_bytes(self, tmp_path):
        rng = np.random.default_rng(15)
        path, _ = self._write_one(tmp_path, rng)
        path.write_bytes(path.read_bytes() + b"\x00")
        with pytest.raises(FormatError) as err:
            scda.read_activation_file(path)
        assert err.value.code == "trailing-bytes"

    def test_non_finite_payload(self, tmp_path):
        rng = np.random.default_rng(16)
        path, _ = self._write_one(tmp_path, rng)
        raw = bytearray(path.read_bytes())
        raw[-4:] = np.float32(np.nan).tobytes()
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError) as err:
            scda.read_activation_file(path)
        assert err.value.code == "non-finite"


class TestRecordStorage:
    def test_store_and_load_record(self, tmp_path):
        rng = np.random.default_rng(17)
        p5 = make_tensor(rng, h=7, w=7, layer=scda.POOL5)
        r52 = make_tensor(rng, h=14, w=14, layer=scda.RELU5_2)
        rec = scda.TensorRecord(
            image_id="bird/42", image_height=480, image_width=640,
            tensors={(scda.POOL5, scda.ORIENT_ORIGINAL): p5,
                     (scda.RELU5_2, scda.ORIENT_ORIGINAL): r52})
        paths = scda.store_record(rec, tmp_path)
        assert len(paths) == 2
        back = scda.load_record("bird/42", paths)
        assert back.image_height == 480 and back.image_width == 640
        np.testing.assert_array_equal(
            back.get(scda.POOL5).values, p5.values)
        np.testing.assert_array_equal(
            back.get(scda.RELU5_2).values, r52.values)

    def test_filename_pattern(self):
        name = tensor_filename("a/b", scda.POOL5, scda.ORIENT_HFLIP)
        assert name == "a_b__pool5__hflip.scdat"

    def test_load_rejects_disagreeing_image_dims(self, tmp_path):
        rng = np.random.default_rng(18)
        t1 = make_tensor(rng, layer=scda.POOL5)
        t2 = make_tensor(rng, h=14, w=14, layer=scda.RELU5_2)
        a, b = tmp_path / "a.scdat", tmp_path / "b.scdat"
        scda.write_activation_file(a, 100, 100, t1)
        scda.write_activation_file(b, 100, 200, t2)
        with pytest.raises(FormatError, match="disagree"):
            scda.load_record("x", [a, b])

    def test_load_rejects_duplicate_layer_orientation(self, tmp_path):
        rng = np.random.default_rng(19)
        t = make_tensor(rng)
        a, b = tmp_path / "a.scdat", tmp_path / "b.scdat"
        scda.write_activation_file(a, 100, 100, t)
        scda.write_activation_file(b, 100, 100, t)
        with pytest.raises(ValueError, match="duplicate"):
            scda.load_record("x", [a, b])
