"""CNN activation extraction feeding the scda retrieval package.

Runs a VGG-16-class backbone over images (original and horizontally
flipped), dumps the requested layer activations as .scdat files, and writes
a manifest fragment the retrieval command line consumes directly.
"""

from .config import MEAN_PIXEL, POOL5, RELU5_2, SPLITS, VGG16_TAPS, ExtractionConfig
from .extract import ORIENTATIONS, ExtractionReport, extract, image_id_for
from .imaging import ImageDecodeError, decode_rgb, hflip, preprocess, resize_dims
from .network import ActivationNetwork, ModelLoadError, load_vgg16
from .writer import (FORMAT_VERSION, manifest_line, tensor_filename,
                     write_activation, write_manifest)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
