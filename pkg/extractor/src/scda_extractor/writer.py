"""Writers for the activation-file format and the manifest lines consumed by
the retrieval package.

.scdat layout (little-endian), one tensor per file:

    magic   "SCDA"
    u32     version (= 1)
    u32     image_height, u32 image_width   # pixels of the processed image
    u8      layer tag: 1 = pool5, 2 = relu5_2, 255 = other
            (tag 255 is followed by u8 name length + UTF-8 name)
    u8      orientation: 0 = original, 1 = hflip
    u32     h, u32 w, u32 d
    u8      dtype tag: 1 = float32
    f32[h*w*d]  values, row-major (row, column, channel)
"""

import json
import os
import struct
import tempfile

import numpy as np

FORMAT_VERSION = 1
_MAGIC = b"SCDA"
_LAYER_TAGS = {"pool5": 1, "relu5_2": 2}
_OTHER_TAG = 255
_ORIENT_TAGS = {"original": 0, "hflip": 1}
_DTYPE_F32 = 1


def atomic_write_bytes(path, data: bytes):
    """Write via a sibling temp file so readers never see partial output."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def tensor_filename(image_id: str, layer: str, orientation: str) -> str:
    safe = image_id.replace("/", "_")
    return f"{safe}__{layer}__{orientation}.scdat"


def write_activation(path, image_height: int, image_width: int,
                     layer: str, orientation: str, values):
    """Serialize one (h, w, d) activation grid to a .scdat file."""
    arr = np.ascontiguousarray(np.asarray(values, dtype=np.float32))
    if arr.ndim != 3 or min(arr.shape) < 1:
        raise ValueError(f"expected non-empty (h, w, d) activations, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("activations contain NaN or Inf")
    if orientation not in _ORIENT_TAGS:
        raise ValueError(f"unknown orientation {orientation!r}")
    if min(image_height, image_width) < 1:
        raise ValueError("image dimensions must be positive")
    parts = [
        _MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<II", image_height, image_width),
    ]
    tag = _LAYER_TAGS.get(layer, _OTHER_TAG)
    parts.append(struct.pack("<B", tag))
    if tag == _OTHER_TAG:
        name = layer.encode("utf-8")
        if not 0 < len(name) < 256:
            raise ValueError("layer name must be 1..255 encoded bytes")
        parts.append(struct.pack("<B", len(name)))
        parts.append(name)
    parts.append(struct.pack("<B", _ORIENT_TAGS[orientation]))
    parts.append(struct.pack("<III", *arr.shape))
    parts.append(struct.pack("<B", _DTYPE_F32))
    parts.append(arr.astype("<f4", copy=False).tobytes(order="C"))
    atomic_write_bytes(path, b"".join(parts))


def manifest_line(image_id: str, label, split: str, image_height: int,
                  image_width: int, tensor_files: dict, gt_bbox=None) -> str:
    """One manifest entry as canonical JSON (sorted keys, one line)."""
    entry = {
        "image_id": image_id,
        "label": label,
        "split": split,
        "image_height": image_height,
        "image_width": image_width,
        "tensors": tensor_files,
    }
    if gt_bbox is not None:
        entry["gt_bbox"] = [int(v) for v in gt_bbox]
    return json.dumps(entry, sort_keys=True)


def write_manifest(lines, path):
    """Write manifest lines as a JSONL file (atomically)."""
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))
