"""Preprocessing, serialization, and configuration behavior."""

import json

import numpy as np
import pytest
import torch
from PIL import Image
from torch import nn

import scda
import scda_extractor as ext
from scda_extractor.cli import read_image_list

from extractor_helpers import save_image, tiny_network


class TestResizeRule:
    def test_oversized_shrinks_to_the_cap(self):
        assert ext.resize_dims(1400, 900, 700) == (1089, 700)
        assert ext.resize_dims(900, 1400, 700) == (700, 1089)

    def test_cap_is_exclusive_and_never_upscales(self):
        assert ext.resize_dims(700, 1400, 700) == (700, 1400)
        assert ext.resize_dims(224, 224, 700) == (224, 224)
        assert ext.resize_dims(40, 60, 700) == (40, 60)
        assert ext.resize_dims(701, 701, 700) == (700, 700)

    def test_aspect_ratio_survives_within_rounding(self):
        rng = np.random.default_rng(50)
        for _ in range(50):
            h = int(rng.integers(701, 4000))
            w = int(rng.integers(701, 4000))
            nh, nw = ext.resize_dims(h, w, 700)
            assert min(nh, nw) == 700
            assert abs(nh / nw - h / w) < 0.01


class TestPreprocess:
    def test_zero_centers_raw_pixel_values(self):
        image = Image.new("RGB", (5, 4), (200, 60, 30))
        out = ext.preprocess(image, 700, ext.MEAN_PIXEL)
        assert out.shape == (4, 5, 3)
        assert out.dtype == np.float32
        expected = np.array([200, 60, 30], dtype=np.float32) - np.array(
            ext.MEAN_PIXEL, dtype=np.float32)
        assert np.allclose(out, expected[None, None, :], atol=1e-4)

    def test_resizes_only_oversized_images(self):
        big = Image.new("RGB", (900, 1400), (10, 10, 10))  # PIL size is (w, h)
        out = ext.preprocess(big, 700, ext.MEAN_PIXEL)
        assert out.shape == (1089, 700, 3)
        small = Image.new("RGB", (64, 48), (10, 10, 10))
        assert ext.preprocess(small, 700, ext.MEAN_PIXEL).shape == (48, 64, 3)

    def test_hflip_reverses_width_and_is_an_involution(self):
        rng = np.random.default_rng(51)
        image = rng.random((6, 9, 3)).astype(np.float32)
        flipped = ext.hflip(image)
        assert np.array_equal(flipped, image[:, ::-1, :])
        assert np.array_equal(ext.hflip(flipped), image)
        assert flipped.flags.c_contiguous


class TestDecode:
    def test_garbage_bytes_raise_decode_error(self, tmp_path):
        bad = tmp_path / "broken.jpg"
        bad.write_bytes(b"this is not an image at all")
        with pytest.raises(ext.ImageDecodeError, match="broken.jpg"):
            ext.decode_rgb(bad)

    def test_missing_file_raises_decode_error(self, tmp_path):
        with pytest.raises(ext.ImageDecodeError):
            ext.decode_rgb(tmp_path / "absent.png")

    def test_grayscale_becomes_rgb(self, tmp_path):
        path = tmp_path / "gray.png"
        Image.fromarray(np.full((8, 8), 77, dtype=np.uint8), "L").save(path)
        assert ext.decode_rgb(path).mode == "RGB"


class TestConfig:
    def test_rejects_empty_layers(self):
        with pytest.raises(ValueError, match="non-empty"):
            ext.ExtractionConfig(layers=())

    def test_rejects_layers_without_taps(self):
        with pytest.raises(ValueError, match="without a tap"):
            ext.ExtractionConfig(layers=("pool5", "fc7"))

    def test_rejects_tiny_min_side_cap(self):
        with pytest.raises(ValueError, match=">= 32"):
            ext.ExtractionConfig(max_min_side=16)

    def test_rejects_bad_split_and_bad_mean(self):
        with pytest.raises(ValueError, match="split"):
            ext.ExtractionConfig(split="test")
        with pytest.raises(ValueError, match="3 channel"):
            ext.ExtractionConfig(mean_pixel=(1.0, 2.0))


class TestWriter:
    def test_round_trips_through_the_retrieval_loader(self, tmp_path):
        rng = np.random.default_rng(52)
        values = rng.random((3, 4, 5)).astype(np.float32)
        path = tmp_path / "img__pool5__hflip.scdat"
        ext.write_activation(path, 10, 20, "pool5", "hflip", values)
        height, width, tensor = scda.read_activation_file(path)
        assert (height, width) == (10, 20)
        assert tensor.source_layer == "pool5"
        assert tensor.orientation == "hflip"
        assert np.array_equal(tensor.values, values)

    def test_custom_layer_names_round_trip(self, tmp_path):
        values = np.ones((2, 2, 3), dtype=np.float32)
        path = tmp_path / "img__conv4_3__original.scdat"
        ext.write_activation(path, 8, 8, "conv4_3", "original", values)
        _, _, tensor = scda.read_activation_file(path)
        assert tensor.source_layer == "conv4_3"

    def test_rejects_non_finite_and_bad_orientation(self, tmp_path):
        bad = np.full((2, 2, 2), np.nan, dtype=np.float32)
        with pytest.raises(ValueError, match="NaN"):
            ext.write_activation(tmp_path / "x.scdat", 4, 4, "pool5", "original", bad)
        good = np.ones((2, 2, 2), dtype=np.float32)
        with pytest.raises(ValueError, match="orientation"):
            ext.write_activation(tmp_path / "x.scdat", 4, 4, "pool5", "vflip", good)
        assert not (tmp_path / "x.scdat").exists()

    def test_filenames_sanitize_path_separators(self):
        name = ext.tensor_filename("birds/0001", "pool5", "original")
        assert name == "birds_0001__pool5__original.scdat"

    def test_manifest_line_is_canonical_json(self):
        line = ext.manifest_line("img", None, "gallery", 64, 48,
                                 {"pool5": {"original": "a.scdat"}})
        entry = json.loads(line)
        assert entry["label"] is None
        assert entry["split"] == "gallery"
        assert entry["image_height"] == 64
        assert "\n" not in line


class TestActivationNetwork:
    def test_rejects_taps_beyond_the_stack(self):
        stack = nn.Sequential(nn.Conv2d(3, 4, 3, padding=1), nn.ReLU())
        with pytest.raises(ValueError, match="beyond"):
            ext.ActivationNetwork(stack, {"pool5": 2})

    def test_returns_only_requested_layers(self):
        net = tiny_network()
        image = np.zeros((16, 16, 3), dtype=np.float32)
        grids = net.activations(image, ["pool5"])
        assert set(grids) == {"pool5"}
        assert grids["pool5"].shape == (4, 4, 8)

    def test_rejects_unknown_layer_names(self):
        net = tiny_network()
        image = np.zeros((16, 16, 3), dtype=np.float32)
        with pytest.raises(ValueError, match="fc7"):
            net.activations(image, ["fc7"])

    def test_tap_grids_keep_the_two_to_one_ratio(self):
        net = tiny_network()
        image = np.zeros((32, 48, 3), dtype=np.float32)
        grids = net.activations(image, ["pool5", "relu5_2"])
        assert grids["relu5_2"].shape == (16, 24, 8)
        assert grids["pool5"].shape == (8, 12, 8)


class TestModelLoading:
    def test_bad_state_dict_path_aborts(self, tmp_path):
        with pytest.raises(ext.ModelLoadError, match="cannot load"):
            ext.load_vgg16(str(tmp_path / "missing.pth"))

    def test_random_weights_are_seed_deterministic(self):
        a = ext.load_vgg16("random", seed=3)
        b = ext.load_vgg16("random", seed=3)
        xa = list(a.features.parameters())[0].detach().numpy()
        xb = list(b.features.parameters())[0].detach().numpy()
        assert np.array_equal(xa, xb)


class TestImageList:
    def test_resolves_against_the_list_directory(self, tmp_path):
        rng = np.random.default_rng(53)
        save_image(tmp_path / "a.png", rng, 8, 8)
        listing = tmp_path / "images.txt"
        listing.write_text("# corpus\n\na.png\n")
        assert read_image_list(listing) == [str(tmp_path / "a.png")]

    def test_empty_listing_is_an_error(self, tmp_path):
        listing = tmp_path / "images.txt"
        listing.write_text("# nothing here\n")
        with pytest.raises(ValueError, match="names no files"):
            read_image_list(listing)


def test_image_id_strips_directory_and_extension():
    assert ext.image_id_for("/data/birds/0001.jpg") == "0001"
    assert ext.image_id_for("plain.png") == "plain"
