"""Per-image orchestration: tensors in, feature vector and object box out.

Every variant shares the same localization front end on pool5: aggregation
map, mean threshold, largest connected component. The variants differ in what
they pool:

    scda            pool5 descriptors under the component mask (2d dims)
    scda_plus       adds relu5_2 descriptors under a fused mask (4d dims)
    scda_flip_plus  scda_plus of the image and its mirror (8d dims)
    vlad            residual encoding of the pool5 descriptors (k*d dims)

The relu5_2 mask is its own mean threshold ANDed with the upsampled pool5
component, so the late layer decides where the object is and the earlier one
adds detail only inside that region.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import aggregation as agg
from . import selection as sel
from .manifest import ManifestEntry
from .tensor import (ORIENT_HFLIP, ORIENT_ORIGINAL, POOL5, RELU5_2,
                     TensorRecord, aggregation_map, load_record)

PIPELINE_VARIANTS = ("scda", "scda_plus", "scda_flip_plus", "vlad")

DEFAULT_K = 2


@dataclass(frozen=True)
class PipelineResult:
    """Feature plus the localization byproducts for one image."""

    image_id: str
    feature: agg.FeatureVector
    mask: np.ndarray           # pool5 largest component, original orientation
    bbox: sel.BoundingBox      # the mask's pixel footprint
    descriptor_count: int      # pool5 cells kept under the mask


@dataclass(frozen=True)
class PipelineRun:
    """Aligned per-entry results; codebook is set only for the vlad variant."""

    results: tuple
    codebook: agg.VladCodebook = None


def record_from_entry(entry: ManifestEntry) -> TensorRecord:
    """Load every tensor a manifest entry points at into one record."""
    paths = {}
    for layer, orients in entry.tensors.items():
        for orientation, path in orients.items():
            paths[(layer, orientation)] = path
    record = load_record(entry.image_id, paths)
    if (record.image_height, record.image_width) != (entry.image_height,
                                                     entry.image_width):
        raise ValueError(
            f"manifest says {entry.image_width}x{entry.image_height} for "
            f"{entry.image_id!r} but tensor files say "
            f"{record.image_width}x{record.image_height}")
    return record


def object_mask(tensor, connectivity: int = 8) -> np.ndarray:
    """Largest above-mean component of one tensor's aggregation map."""
    return sel.largest_component(
        sel.threshold_mask(aggregation_map(tensor)), connectivity)


def required_tensors(variant: str):
    """(layer, orientation) pairs a record must hold for the variant.

    Mirrored activations are never synthesized here: flipping a tensor is not
    the same as extracting from a flipped image, so flip variants demand
    stored hflip tensors (tests may build them with the hflip op).
    """
    if variant in ("scda", "vlad"):
        return ((POOL5, ORIENT_ORIGINAL),)
    if variant == "scda_plus":
        return ((POOL5, ORIENT_ORIGINAL), (RELU5_2, ORIENT_ORIGINAL))
    if variant == "scda_flip_plus":
        return ((POOL5, ORIENT_ORIGINAL), (RELU5_2, ORIENT_ORIGINAL),
                (POOL5, ORIENT_HFLIP), (RELU5_2, ORIENT_HFLIP))
    raise ValueError(f"variant must be one of {PIPELINE_VARIANTS}, "
                     f"got {variant!r}")


def _scda_plus_for(record: TensorRecord, orientation: str, alpha: float,
                   connectivity: int) -> agg.FeatureVector:
    p5 = record.get(POOL5, orientation)
    mask5 = object_mask(p5, connectivity)
    r52 = record.get(RELU5_2, orientation)
    fused = sel.fuse_masks(
        sel.upsample_mask(mask5, r52.height, r52.width),
        sel.threshold_mask(aggregation_map(r52)))
    return agg.scda_plus(
        agg.scda(sel.select_descriptors(p5, mask5)),
        agg.scda(sel.select_descriptors(r52, fused)),
        alpha=alpha)


def compute_feature(record: TensorRecord, variant: str,
                    alpha: float = agg.DEFAULT_ALPHA, connectivity: int = 8,
                    codebook: agg.VladCodebook = None) -> PipelineResult:
    """Run one image through the selected variant."""
    if variant not in PIPELINE_VARIANTS:
        raise ValueError(f"variant must be one of {PIPELINE_VARIANTS}, "
                         f"got {variant!r}")
    p5 = record.get(POOL5, ORIENT_ORIGINAL)
    mask5 = object_mask(p5, connectivity)
    selected5 = sel.select_descriptors(p5, mask5)
    bbox = sel.mask_to_bbox(mask5, record.image_height, record.image_width)

    if variant == "scda":
        feature = agg.scda(selected5)
    elif variant == "scda_plus":
        feature = _scda_plus_for(record, ORIENT_ORIGINAL, alpha, connectivity)
    elif variant == "scda_flip_plus":
        feature = agg.scda_flip_plus(
            _scda_plus_for(record, ORIENT_ORIGINAL, alpha, connectivity),
            _scda_plus_for(record, ORIENT_HFLIP, alpha, connectivity))
    else:
        if codebook is None:
            raise ValueError("the vlad variant needs a codebook")
        feature = agg.vlad_encode(selected5, codebook)

    return PipelineResult(image_id=record.image_id, feature=feature,
                          mask=mask5, bbox=bbox,
                          descriptor_count=len(selected5))


def _map_ordered(fn, items, threads: int):
    """Apply fn to items, optionally on a thread pool, keeping input order."""
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def run_pipeline(entries, variant: str, alpha: float = agg.DEFAULT_ALPHA,
                 connectivity: int = 8, k: int = DEFAULT_K, seed: int = 0,
                 threads: int = 1,
                 codebook: agg.VladCodebook = None) -> PipelineRun:
    """Compute features for manifest entries, results aligned with the input.

    For the vlad variant with no codebook given, one is trained on the masked
    pool5 descriptors of the gallery-split entries (in manifest order, fixed
    seed), then applied to every entry. Worker threads only parallelize the
    per-image stage; the ordered collection keeps output independent of
    scheduling.
    """
    entries = list(entries)
    if not entries:
        raise ValueError("no entries to process")
    if variant not in PIPELINE_VARIANTS:
        raise ValueError(f"variant must be one of {PIPELINE_VARIANTS}, "
                         f"got {variant!r}")

    if variant == "vlad" and codebook is None:
        def stage(entry):
            record = record_from_entry(entry)
            p5 = record.get(POOL5, ORIENT_ORIGINAL)
            mask5 = object_mask(p5, connectivity)
            selected5 = sel.select_descriptors(p5, mask5)
            bbox = sel.mask_to_bbox(mask5, record.image_height,
                                    record.image_width)
            return mask5, bbox, selected5

        staged = _map_ordered(stage, entries, threads)
        gallery = [selected.vectors
                   for entry, (_, _, selected) in zip(entries, staged)
                   if entry.split == "gallery"]
        if not gallery:
            raise ValueError(
                "vlad needs gallery entries to train a codebook on")
        codebook = agg.train_codebook(np.concatenate(gallery, axis=0),
                                      k=k, seed=seed)
        results = tuple(
            PipelineResult(image_id=entry.image_id,
                           feature=agg.vlad_encode(selected, codebook),
                           mask=mask, bbox=bbox,
                           descriptor_count=len(selected))
            for entry, (mask, bbox, selected) in zip(entries, staged))
        return PipelineRun(results=results, codebook=codebook)

    def compute(entry):
        return compute_feature(record_from_entry(entry), variant,
                               alpha=alpha, connectivity=connectivity,
                               codebook=codebook)

    results = tuple(_map_ordered(compute, entries, threads))
    return PipelineRun(results=results, codebook=codebook)


def stack_features(results) -> np.ndarray:
    """Feature rows of aligned results as one float64 matrix."""
    results = list(results)
    if not results:
        raise ValueError("no results to stack")
    dims = {r.feature.dim for r in results}
    if len(dims) != 1:
        raise ValueError(f"mixed feature dimensions {sorted(dims)}")
    return np.stack([r.feature.values for r in results])
