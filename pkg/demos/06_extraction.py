"""From image files to retrieval features with the companion extractor.

The extractor package turns images into .scdat activation files plus a
manifest that the main package consumes directly. Pretrained weights need
a download, so this demo builds a VGG-16 with seeded random weights; swap
weights="download" (or a local .pth path) for real use. Expect roughly a
minute of CPU time for the forward passes.
"""

import os
import tempfile

import numpy as np
from PIL import Image

import scda

try:
    import scda_extractor as sx
except ImportError:
    raise SystemExit(
        "scda_extractor is not installed; run "
        "'pip install -e extractor --no-build-isolation' from the repo root")


def save_test_images(root, rng):
    paths = []
    for name, (height, width) in (("meadow", (224, 224)),
                                  ("river", (224, 320)),
                                  ("big_sky", (768, 1024))):
        pixels = rng.integers(0, 256, size=(height, width, 3), dtype=np.uint8)
        path = os.path.join(root, f"{name}.png")
        Image.fromarray(pixels).save(path)
        paths.append(path)
    return paths


def main():
    rng = np.random.default_rng(6)
    with tempfile.TemporaryDirectory() as root:
        images = save_test_images(root, rng)
        out_dir = os.path.join(root, "activations")
        config = sx.ExtractionConfig(weights="random", seed=0)
        print("running a seeded random-weight VGG-16 over "
              f"{len(images)} images...")
        report = sx.extract(images, out_dir, config)
        print(f"extracted {len(report.extracted)} images, "
              f"skipped {len(report.skipped)}")

        for name in sorted(os.listdir(out_dir)):
            path = os.path.join(out_dir, name)
            if name.endswith(".scdat"):
                height, width, tensor = scda.read_activation_file(path)
                print(f"  {name}: grid {tensor.values.shape}, "
                      f"image {height}x{width}")
            else:
                print(f"  {name}")

        # The 1024x768 image exceeds the 700 px cap on its shorter side,
        # so it was downscaled before the network ran.
        entries = scda.load_manifest(report.manifest_path)
        big = next(e for e in entries if e.image_id == "big_sky")
        print(f"big_sky recorded at {big.image_height}x{big.image_width} "
              "after the resize rule")

        run = scda.run_pipeline(entries, "scda_flip_plus")
        for result in run.results:
            norm = float(np.linalg.norm(result.feature.values))
            print(f"  {result.image_id}: dim {result.feature.dim}, "
                  f"norm {norm:.6f}, "
                  f"{result.descriptor_count} descriptors kept")


if __name__ == "__main__":
    main()
