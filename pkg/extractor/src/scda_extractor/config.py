"""Extraction settings: which network, which layers, how images are prepared."""

from dataclasses import dataclass, field

# RGB channel means shipped with the public VGG-16 release; subtracted from
# raw 0-255 pixel values before the forward pass.
MEAN_PIXEL = (123.68, 116.779, 103.939)

POOL5 = "pool5"
RELU5_2 = "relu5_2"

# Output indices into torchvision's vgg16().features for the two layers the
# retrieval pipeline consumes: relu5_2 is the activation after the second
# convolution of the last block, pool5 the final max-pool.
VGG16_TAPS = {POOL5: 30, RELU5_2: 27}

SPLITS = ("gallery", "query")


@dataclass(frozen=True)
class ExtractionConfig:
    """Everything extract() needs besides the image list and output directory.

    weights selects the backbone parameters: "download" fetches the published
    VGG-16 weights, "random" initializes from ``seed`` (useful offline and in
    tests), anything else is treated as a state-dict path. layer_taps maps
    layer names to output indices of the feature stack, so other sequential
    backbones can stand in for VGG-16.
    """

    weights: str = "download"
    layers: tuple = (POOL5, RELU5_2)
    max_min_side: int = 700
    mean_pixel: tuple = MEAN_PIXEL
    seed: int = 0
    split: str = "gallery"
    layer_taps: dict = field(default_factory=lambda: dict(VGG16_TAPS))

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "mean_pixel", tuple(self.mean_pixel))
        if not self.layers:
            raise ValueError("layers must be non-empty")
        missing = [name for name in self.layers if name not in self.layer_taps]
        if missing:
            raise ValueError(f"layers without a tap index: {missing}")
        if self.max_min_side < 32:
            raise ValueError(f"max_min_side must be >= 32, got {self.max_min_side}")
        if len(self.mean_pixel) != 3:
            raise ValueError("mean_pixel needs exactly 3 channel values")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
