"""Shared builders for synthetic tensors, records and datasets."""

import json
import os

import numpy as np

import scda


def make_tensor(rng, h=7, w=7, d=64, layer=scda.POOL5,
                orientation=scda.ORIENT_ORIGINAL, scale=1.0):
    """Uniform-noise activation tensor."""
    vals = (rng.random((h, w, d)) * scale).astype(np.float32)
    return scda.ActivationTensor(values=vals, source_layer=layer,
                                 orientation=orientation)


def blob_values(rng, h, w, d, rows, cols, channels=None,
                hot=3.0, noise=0.05):
    """Low noise everywhere, strong activation inside rows x cols.

    rows/cols are half-open (start, stop) cell ranges; channels optionally
    restricts the hot region to a channel slice.
    """
    vals = (rng.random((h, w, d)) * noise).astype(np.float32)
    ch = slice(None) if channels is None else channels
    vals[rows[0]:rows[1], cols[0]:cols[1], ch] += hot
    return vals


def blob_tensor(rng, h, w, d, rows, cols, channels=None, hot=3.0,
                noise=0.05, layer=scda.POOL5):
    return scda.ActivationTensor(
        values=blob_values(rng, h, w, d, rows, cols, channels, hot, noise),
        source_layer=layer, orientation=scda.ORIENT_ORIGINAL)


def make_record(rng, image_id, image_height=224, image_width=224,
                h5=7, w5=7, d=64, rows=(2, 5), cols=(2, 5), channels=None,
                hot=3.0, noise=0.05, with_flip=True):
    """Record with pool5 and relu5_2 blob tensors on a 2x grid ratio.

    The relu5_2 blob occupies the doubled cell range so both layers point at
    the same image region.
    """
    p5 = blob_tensor(rng, h5, w5, d, rows, cols, channels, hot, noise)
    r52 = scda.ActivationTensor(
        values=blob_values(rng, 2 * h5, 2 * w5, d,
                           (2 * rows[0], 2 * rows[1]),
                           (2 * cols[0], 2 * cols[1]),
                           channels, hot, noise),
        source_layer=scda.RELU5_2, orientation=scda.ORIENT_ORIGINAL)
    tensors = {
        (scda.POOL5, scda.ORIENT_ORIGINAL): p5,
        (scda.RELU5_2, scda.ORIENT_ORIGINAL): r52,
    }
    if with_flip:
        tensors[(scda.POOL5, scda.ORIENT_HFLIP)] = scda.hflip(p5)
        tensors[(scda.RELU5_2, scda.ORIENT_HFLIP)] = scda.hflip(r52)
    return scda.TensorRecord(image_id=image_id, image_height=image_height,
                             image_width=image_width, tensors=tensors)


def write_dataset(root, records_meta):
    """Store records and write a manifest; returns the manifest path.

    records_meta: iterable of (record, label, split, gt_bbox_or_None).
    """
    tensor_dir = os.path.join(root, "tensors")
    os.makedirs(tensor_dir, exist_ok=True)
    lines = []
    for record, label, split, gt_bbox in records_meta:
        paths = scda.store_record(record, tensor_dir)
        tmap = {}
        for (layer, orientation), path in paths.items():
            tmap.setdefault(layer, {})[orientation] = os.path.relpath(path, root)
        entry = {
            "image_id": record.image_id,
            "label": label,
            "split": split,
            "image_height": record.image_height,
            "image_width": record.image_width,
            "tensors": tmap,
        }
        if gt_bbox is not None:
            entry["gt_bbox"] = list(gt_bbox)
        lines.append(json.dumps(entry))
    manifest_path = os.path.join(root, "manifest.jsonl")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return manifest_path


def class_dataset(root, rng, n_classes=3, per_class=4, d=96,
                  gallery_per_class=2):
    """Blob tensors whose hot channels encode the class; returns manifest path.

    Class c lights channels [c*d/n_classes, (c+1)*d/n_classes), so features
    of one class stay far from every other class.
    """
    width = d // n_classes
    meta = []
    idx = 0
    for c in range(n_classes):
        for j in range(per_class):
            rec = make_record(
                rng, f"c{c}_{j}", d=d,
                channels=slice(c * width, (c + 1) * width),
                rows=(2, 5), cols=(2, 5))
            split = "gallery" if j < gallery_per_class else "query"
            meta.append((rec, c, split, (64, 64, 159, 159)))
            idx += 1
    return write_dataset(root, meta)
