"""Backbone loading and activation capture."""

import logging

import numpy as np
import torch
from torch import nn

from .config import VGG16_TAPS

log = logging.getLogger("scda_extractor")


class ModelLoadError(RuntimeError):
    """The requested backbone weights could not be materialized."""


class ActivationNetwork:
    """A sequential feature stack plus the output indices to capture.

    Any backbone works as long as every requested layer name maps to a
    module index in ``taps``; inference stops at the deepest tap, so the
    classifier head of an image-classification model never runs.
    """

    def __init__(self, features: nn.Sequential, taps: dict):
        if not taps:
            raise ValueError("taps must be non-empty")
        deepest = max(taps.values())
        if deepest >= len(features):
            raise ValueError(
                f"tap index {deepest} beyond the {len(features)}-module stack"
            )
        self.features = features.eval()
        self.taps = dict(taps)

    def activations(self, image: np.ndarray, layers) -> dict:
        """Run one preprocessed (H, W, 3) image; returns {layer: (h, w, d)}."""
        unknown = [name for name in layers if name not in self.taps]
        if unknown:
            raise ValueError(f"no tap index for layers {unknown}")
        wanted = {self.taps[name]: name for name in layers}
        deepest = max(wanted)
        x = torch.from_numpy(np.ascontiguousarray(image, dtype=np.float32))
        x = x.permute(2, 0, 1).unsqueeze(0)
        grids = {}
        with torch.no_grad():
            for index, module in enumerate(self.features):
                x = module(x)
                if index in wanted:
                    grid = x.squeeze(0).permute(1, 2, 0).numpy()
                    grids[wanted[index]] = np.ascontiguousarray(grid, dtype=np.float32)
                if index == deepest:
                    break
        return grids


def load_vgg16(weights: str = "download", seed: int = 0,
               taps: dict = None) -> ActivationNetwork:
    """VGG-16 backbone with weights from the hub, a state-dict file, or a seed.

    "random" exists for offline use: fixed ``seed`` gives fixed weights, so
    extraction stays deterministic end to end without any download.
    """
    from torchvision.models import VGG16_Weights, vgg16

    try:
        if weights == "random":
            torch.manual_seed(seed)
            model = vgg16(weights=None)
            log.info("initialized VGG-16 with random weights (seed %d)", seed)
        elif weights == "download":
            model = vgg16(weights=VGG16_Weights.IMAGENET1K_FEATURES)
            log.info("loaded published VGG-16 feature weights")
        else:
            model = vgg16(weights=None)
            state = torch.load(weights, map_location="cpu", weights_only=True)
            model.load_state_dict(state)
            log.info("loaded VGG-16 weights from %s", weights)
    except Exception as exc:
        raise ModelLoadError(f"cannot load VGG-16 weights ({weights}): {exc}") from exc
    return ActivationNetwork(model.features, taps or dict(VGG16_TAPS))
