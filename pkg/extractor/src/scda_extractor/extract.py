"""Batch extraction: images in, .scdat files and a manifest fragment out."""

import logging
import os
from dataclasses import dataclass

from .config import ExtractionConfig
from .imaging import ImageDecodeError, decode_rgb, hflip, preprocess
from .network import ActivationNetwork, load_vgg16
from .writer import manifest_line, tensor_filename, write_activation, write_manifest

log = logging.getLogger("scda_extractor")

ORIENTATIONS = ("original", "hflip")


@dataclass(frozen=True)
class ExtractionReport:
    manifest_path: str
    extracted: tuple
    skipped: tuple


def image_id_for(path) -> str:
    """Image id = file name without directory and extension."""
    stem, _ = os.path.splitext(os.path.basename(str(path)))
    return stem


def extract(image_paths, out_dir, config: ExtractionConfig,
            network: ActivationNetwork = None) -> ExtractionReport:
    """Dump the configured layers of every decodable image, both orientations.

    Undecodable images are skipped with a log entry; everything else is
    written as one .scdat file per (layer, orientation) plus a manifest.jsonl
    next to them whose relative paths are plain file names. The manifest
    records the processed image dimensions, which downstream bounding-box
    mapping relies on, so they reflect any resize done here.
    """
    paths = [str(p) for p in image_paths]
    if not paths:
        raise ValueError("no images given")
    ids = [image_id_for(p) for p in paths]
    collisions = sorted({i for i in ids if ids.count(i) > 1})
    if collisions:
        raise ValueError(f"image ids collide after stemming: {collisions}")
    if network is None:
        network = load_vgg16(config.weights, config.seed, config.layer_taps)
    os.makedirs(out_dir, exist_ok=True)
    lines = []
    extracted = []
    skipped = []
    for path, image_id in zip(paths, ids):
        try:
            image = decode_rgb(path)
        except ImageDecodeError as exc:
            log.warning("skipping undecodable image: %s", exc)
            skipped.append(path)
            continue
        prepared = preprocess(image, config.max_min_side, config.mean_pixel)
        height, width = prepared.shape[:2]
        files = {}
        for orientation in ORIENTATIONS:
            view = prepared if orientation == "original" else hflip(prepared)
            grids = network.activations(view, config.layers)
            for layer in config.layers:
                filename = tensor_filename(image_id, layer, orientation)
                write_activation(os.path.join(out_dir, filename), height, width,
                                 layer, orientation, grids[layer])
                files.setdefault(layer, {})[orientation] = filename
        lines.append(manifest_line(image_id, None, config.split,
                                   height, width, files))
        extracted.append(image_id)
        log.info("extracted %s (%dx%d)", image_id, height, width)
    if not extracted:
        raise ValueError("every input image failed to decode")
    manifest_path = os.path.join(out_dir, "manifest.jsonl")
    write_manifest(lines, manifest_path)
    return ExtractionReport(manifest_path=manifest_path,
                            extracted=tuple(extracted), skipped=tuple(skipped))
