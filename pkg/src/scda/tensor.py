"""Activation-tensor data model and the .scdat file format.

An activation tensor is the order-3 output (h x w x d) of one convolutional
layer for one image: h x w spatial cells, each holding a d-dimensional
descriptor. Values are float32; reductions accumulate in float64 so channel
sums over d=512 stay stable.

.scdat layout (little-endian), one tensor per file:

    magic   "SCDA"
    u32     version (= 1)
    u32     image_height, u32 image_width   # original image pixels
    u8      layer tag: 1 = pool5, 2 = relu5_2, 255 = other
            (tag 255 is followed by u8 name length + UTF-8 name)
    u8      orientation: 0 = original, 1 = hflip
    u32     h, u32 w, u32 d
    u8      dtype tag: 1 = float32
    f32[h*w*d]  values, row-major (row, column, channel)

A record groups the tensors of one image under their (layer, orientation)
keys; records are assembled from a manifest that lists the files.
"""

import os
from dataclasses import dataclass, field

import numpy as np

from ._binio import FormatError, Reader, atomic_write_bytes, f32_bytes, u8, u32

POOL5 = "pool5"
RELU5_2 = "relu5_2"

ORIENT_ORIGINAL = "original"
ORIENT_HFLIP = "hflip"

_LAYER_TAGS = {POOL5: 1, RELU5_2: 2}
_TAG_LAYERS = {v: k for k, v in _LAYER_TAGS.items()}
_OTHER_LAYER_TAG = 255
_ORIENT_TAGS = {ORIENT_ORIGINAL: 0, ORIENT_HFLIP: 1}
_TAG_ORIENTS = {v: k for k, v in _ORIENT_TAGS.items()}
_DTYPE_F32 = 1

FORMAT_VERSION = 1
_MAGIC = b"SCDA"


@dataclass(frozen=True)
class ActivationTensor:
    """Immutable (h, w, d) float32 activation block for one layer/orientation."""

    values: np.ndarray
    source_layer: str = POOL5
    orientation: str = ORIENT_ORIGINAL

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float32)
        if arr.ndim != 3:
            raise ValueError(f"expected an (h, w, d) array, got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise ValueError(f"all tensor dimensions must be >= 1, got {arr.shape}")
        if not np.isfinite(arr).all():
            raise FormatError("non-finite", "tensor contains NaN or Inf values")
        if self.orientation not in _ORIENT_TAGS:
            raise ValueError(f"unknown orientation {self.orientation!r}")
        if not self.source_layer:
            raise ValueError("source_layer must be non-empty")
        arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def depth(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class TensorRecord:
    """All activation tensors of one image, keyed by (layer, orientation)."""

    image_id: str
    image_height: int
    image_width: int
    tensors: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.image_id:
            raise ValueError("image_id must be non-empty")
        if self.image_height < 1 or self.image_width < 1:
            raise ValueError("image dimensions must be positive")
        for key, tensor in self.tensors.items():
            layer, orientation = key
            if (tensor.source_layer, tensor.orientation) != (layer, orientation):
                raise ValueError(f"tensor under key {key} carries mismatched metadata")
        # relu5_2 sits earlier in the network than pool5, so its grid is never smaller.
        for orientation in (ORIENT_ORIGINAL, ORIENT_HFLIP):
            p5 = self.tensors.get((POOL5, orientation))
            r52 = self.tensors.get((RELU5_2, orientation))
            if p5 is not None and r52 is not None:
                if r52.height < p5.height or r52.width < p5.width:
                    raise ValueError(
                        f"{RELU5_2} grid {r52.height}x{r52.width} smaller than "
                        f"{POOL5} grid {p5.height}x{p5.width} for {self.image_id!r}"
                    )

    def get(self, layer: str, orientation: str = ORIENT_ORIGINAL) -> ActivationTensor:
        try:
            return self.tensors[(layer, orientation)]
        except KeyError:
            raise KeyError(
                f"record {self.image_id!r} has no ({layer}, {orientation}) tensor"
            ) from None


def feature_map(tensor: ActivationTensor, n: int) -> np.ndarray:
    """The h x w slice of channel n."""
    if not 0 <= n < tensor.depth:
        raise IndexError(f"channel {n} out of range for depth {tensor.depth}")
    return tensor.values[:, :, n]


def descriptor_at(tensor: ActivationTensor, i: int, j: int) -> np.ndarray:
    """The d-dimensional descriptor at cell (i, j)."""
    if not 0 <= i < tensor.height:
        raise IndexError(f"row {i} out of range for height {tensor.height}")
    if not 0 <= j < tensor.width:
        raise IndexError(f"column {j} out of range for width {tensor.width}")
    return tensor.values[i, j, :]


def aggregation_map(tensor: ActivationTensor) -> np.ndarray:
    """Per-cell sum over all channels, as an h x w float64 grid.

    High values mark cells where many channels fire together, which is the
    signal used to localize the main object.
    """
    return tensor.values.sum(axis=2, dtype=np.float64)


def hflip(tensor: ActivationTensor) -> ActivationTensor:
    """Reverse the width axis and toggle the orientation flag.

    Only meant for synthetic data: activations of a really flipped image come
    from the extractor, because convolution padding breaks exact equivariance.
    """
    flipped = ORIENT_HFLIP if tensor.orientation == ORIENT_ORIGINAL else ORIENT_ORIGINAL
    return ActivationTensor(
        values=tensor.values[:, ::-1, :],
        source_layer=tensor.source_layer,
        orientation=flipped,
    )


def write_activation_file(path, image_height: int, image_width: int,
                          tensor: ActivationTensor):
    """Serialize one tensor to a .scdat file (atomically)."""
    parts = [_MAGIC, u32(FORMAT_VERSION), u32(image_height), u32(image_width)]
    tag = _LAYER_TAGS.get(tensor.source_layer, _OTHER_LAYER_TAG)
    parts.append(u8(tag))
    if tag == _OTHER_LAYER_TAG:
        name = tensor.source_layer.encode("utf-8")
        if len(name) > 255:
            raise ValueError("layer name longer than 255 bytes")
        parts.append(u8(len(name)))
        parts.append(name)
    parts.append(u8(_ORIENT_TAGS[tensor.orientation]))
    parts.append(u32(tensor.height))
    parts.append(u32(tensor.width))
    parts.append(u32(tensor.depth))
    parts.append(u8(_DTYPE_F32))
    parts.append(f32_bytes(tensor.values))
    atomic_write_bytes(path, b"".join(parts))


def read_activation_file(path):
    """Read one .scdat file; returns (image_height, image_width, tensor)."""
    with open(path, "rb") as fh:
        reader = Reader(fh.read(), path=str(path))
    reader.magic(_MAGIC)
    reader.version(FORMAT_VERSION)
    image_height = reader.u32()
    image_width = reader.u32()
    layer_tag = reader.u8()
    if layer_tag in _TAG_LAYERS:
        layer = _TAG_LAYERS[layer_tag]
    elif layer_tag == _OTHER_LAYER_TAG:
        layer = reader.string(reader.u8())
    else:
        raise FormatError("bad-tag", f"unknown layer tag {layer_tag}", str(path))
    orient_tag = reader.u8()
    if orient_tag not in _TAG_ORIENTS:
        raise FormatError("bad-tag", f"unknown orientation tag {orient_tag}", str(path))
    h, w, d = reader.u32(), reader.u32(), reader.u32()
    if min(h, w, d) < 1:
        raise FormatError("bad-tag", f"non-positive dims {h}x{w}x{d}", str(path))
    dtype_tag = reader.u8()
    if dtype_tag != _DTYPE_F32:
        raise FormatError("bad-dtype", f"unsupported dtype tag {dtype_tag}", str(path))
    values = reader.f32_array(h * w * d).reshape(h, w, d)
    reader.done()
    if not np.isfinite(values).all():
        raise FormatError("non-finite", "payload contains NaN or Inf", str(path))
    tensor = ActivationTensor(
        values=values,
        source_layer=layer,
        orientation=_TAG_ORIENTS[orient_tag],
    )
    return image_height, image_width, tensor


def tensor_filename(image_id: str, layer: str, orientation: str) -> str:
    safe = image_id.replace("/", "_")
    return f"{safe}__{layer}__{orientation}.scdat"


def store_record(record: TensorRecord, directory) -> dict:
    """Write every tensor of a record under ``directory``.

    Returns {(layer, orientation): path}.
    """
    paths = {}
    for (layer, orientation), tensor in record.tensors.items():
        path = os.path.join(directory, tensor_filename(record.image_id, layer, orientation))
        write_activation_file(path, record.image_height, record.image_width, tensor)
        paths[(layer, orientation)] = path
    return paths


def load_record(image_id: str, paths) -> TensorRecord:
    """Assemble a record from .scdat files.

    ``paths`` is either an iterable of paths or a {(layer, orientation): path}
    mapping; all files must agree on the image dimensions.
    """
    if isinstance(paths, dict):
        file_list = list(paths.values())
    else:
        file_list = list(paths)
    if not file_list:
        raise ValueError(f"no tensor files given for {image_id!r}")
    tensors = {}
    dims = None
    for path in file_list:
        image_height, image_width, tensor = read_activation_file(path)
        if dims is None:
            dims = (image_height, image_width)
        elif dims != (image_height, image_width):
            raise FormatError(
                "bad-tag",
                f"image dims {image_height}x{image_width} disagree with {dims[0]}x{dims[1]}",
                str(path),
            )
        key = (tensor.source_layer, tensor.orientation)
        if key in tensors:
            raise ValueError(f"duplicate tensor for {key} in record {image_id!r}")
        tensors[key] = tensor
    return TensorRecord(
        image_id=image_id,
        image_height=dims[0],
        image_width=dims[1],
        tensors=tensors,
    )
