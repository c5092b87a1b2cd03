"""Dataset manifests: one JSON object per line describing one image.

Required keys: image_id, label (int or null), split ("gallery" or "query"),
image_height, image_width, tensors. `tensors` nests layer -> orientation ->
activation-file path; relative paths resolve against the manifest's directory.
Optional gt_bbox is [x_min, y_min, x_max, y_max] in inclusive pixel
coordinates inside the image. Errors carry the 1-based line number, and
missing tensor files are gathered across the whole manifest before raising so
one pass reports every broken path.
"""

import json
import os
from dataclasses import dataclass

from .selection import BoundingBox

SPLITS = ("gallery", "query")

_REQUIRED = ("image_id", "label", "split", "image_height", "image_width", "tensors")


class ManifestError(ValueError):
    def __init__(self, message: str, line: int = None, path: str = None):
        prefix = f"{path or 'manifest'}"
        if line is not None:
            prefix += f":{line}"
        super().__init__(f"{prefix}: {message}")
        self.line = line
        self.path = path


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    label: object            # int or None
    split: str
    image_height: int
    image_width: int
    tensors: dict            # layer -> orientation -> absolute path
    gt_bbox: BoundingBox = None

    def tensor_path(self, layer: str, orientation: str) -> str:
        try:
            return self.tensors[layer][orientation]
        except KeyError:
            raise KeyError(
                f"image {self.image_id!r} has no tensor for "
                f"layer={layer!r} orientation={orientation!r}"
            ) from None


def _parse_entry(obj, line: int, base_dir: str, source: str) -> ManifestEntry:
    if not isinstance(obj, dict):
        raise ManifestError("entry must be a JSON object", line, source)
    for key in _REQUIRED:
        if key not in obj:
            raise ManifestError(f"missing key {key!r}", line, source)

    image_id = obj["image_id"]
    if not isinstance(image_id, str) or not image_id:
        raise ManifestError("image_id must be a non-empty string", line, source)

    label = obj["label"]
    if label is not None and not isinstance(label, int):
        raise ManifestError("label must be an integer or null", line, source)
    if isinstance(label, bool):
        raise ManifestError("label must be an integer or null", line, source)

    split = obj["split"]
    if split not in SPLITS:
        raise ManifestError(f"split must be one of {SPLITS}, got {split!r}", line, source)

    height, width = obj["image_height"], obj["image_width"]
    for name, value in (("image_height", height), ("image_width", width)):
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise ManifestError(f"{name} must be a positive integer", line, source)

    tensors_obj = obj["tensors"]
    if not isinstance(tensors_obj, dict) or not tensors_obj:
        raise ManifestError("tensors must be a non-empty object", line, source)
    tensors = {}
    for layer, orients in tensors_obj.items():
        if not isinstance(orients, dict) or not orients:
            raise ManifestError(
                f"tensors[{layer!r}] must map orientations to paths", line, source)
        resolved = {}
        for orientation, rel in orients.items():
            if not isinstance(rel, str) or not rel:
                raise ManifestError(
                    f"tensors[{layer!r}][{orientation!r}] must be a path string",
                    line, source)
            resolved[orientation] = os.path.normpath(os.path.join(base_dir, rel))
        tensors[layer] = resolved

    gt_bbox = None
    raw_bbox = obj.get("gt_bbox")
    if raw_bbox is not None:
        if (not isinstance(raw_bbox, list) or len(raw_bbox) != 4
                or not all(isinstance(v, int) and not isinstance(v, bool) for v in raw_bbox)):
            raise ManifestError("gt_bbox must be [x_min, y_min, x_max, y_max] ints",
                                line, source)
        x_min, y_min, x_max, y_max = raw_bbox
        try:
            gt_bbox = BoundingBox(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max)
        except ValueError as exc:
            raise ManifestError(f"gt_bbox invalid: {exc}", line, source) from None
        if x_max >= width or y_max >= height:
            raise ManifestError(
                f"gt_bbox {raw_bbox} exceeds image bounds {width}x{height}",
                line, source)

    return ManifestEntry(image_id=image_id, label=label, split=split,
                         image_height=height, image_width=width,
                         tensors=tensors, gt_bbox=gt_bbox)


def load_manifest(path, check_files: bool = True):
    """Parse a JSONL manifest into validated entries, in file order."""
    source = str(path)
    base_dir = os.path.dirname(os.path.abspath(source))
    entries = []
    seen = {}
    with open(source, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"invalid JSON: {exc.msg}", line_no, source) from None
            entry = _parse_entry(obj, line_no, base_dir, source)
            if entry.image_id in seen:
                raise ManifestError(
                    f"duplicate image_id {entry.image_id!r} "
                    f"(first seen on line {seen[entry.image_id]})",
                    line_no, source)
            seen[entry.image_id] = line_no
            entries.append(entry)
    if not entries:
        raise ManifestError("manifest contains no entries", path=source)

    if check_files:
        missing = []
        for entry in entries:
            for layer, orients in sorted(entry.tensors.items()):
                for orientation, tensor_path in sorted(orients.items()):
                    if not os.path.isfile(tensor_path):
                        missing.append(f"{entry.image_id}: {layer}/{orientation} "
                                       f"-> {tensor_path}")
        if missing:
            raise ManifestError(
                "missing tensor files:\n  " + "\n  ".join(missing), path=source)

    return entries


def write_manifest(entries, path):
    """Serialize entries back to JSONL (paths written as they resolve now)."""
    lines = []
    for entry in entries:
        obj = {
            "image_id": entry.image_id,
            "label": entry.label,
            "split": entry.split,
            "image_height": entry.image_height,
            "image_width": entry.image_width,
            "tensors": {layer: dict(orients)
                        for layer, orients in entry.tensors.items()},
        }
        if entry.gt_bbox is not None:
            box = entry.gt_bbox
            obj["gt_bbox"] = [box.x_min, box.y_min, box.x_max, box.y_max]
        lines.append(json.dumps(obj, sort_keys=True))
    payload = "\n".join(lines) + "\n"
    from ._binio import atomic_write_bytes
    atomic_write_bytes(path, payload.encode("utf-8"))
