"""Store one activation tensor and read it back.

A .scdat file keeps everything the pipeline needs to interpret activations
later: the layer, the orientation, the processed image size, and the
(h, w, d) grid itself. Writes are atomic and repeatable, so regenerating a
file never changes its bytes.
"""

import os
import tempfile

import numpy as np

import scda


def main():
    rng = np.random.default_rng(1)
    values = rng.random((7, 7, 512)).astype(np.float32)
    tensor = scda.ActivationTensor(values=values, source_layer=scda.POOL5,
                                   orientation=scda.ORIENT_ORIGINAL)
    print(f"tensor: {tensor.height}x{tensor.width}x{tensor.depth} "
          f"({tensor.source_layer}, {tensor.orientation})")

    grid = scda.aggregation_map(tensor)
    print(f"aggregation map: {grid.shape[0]}x{grid.shape[1]} cells, "
          f"mean {grid.mean():.2f}, max {grid.max():.2f}")

    with tempfile.TemporaryDirectory() as root:
        name = scda.tensor_filename("demo/bird 42", scda.POOL5,
                                    scda.ORIENT_ORIGINAL)
        path = os.path.join(root, name)
        scda.write_activation_file(path, 224, 224, tensor)
        first = open(path, "rb").read()
        print(f"wrote {name} ({len(first)} bytes)")

        height, width, loaded = scda.read_activation_file(path)
        print(f"read back: image {height}x{width}, layer {loaded.source_layer}, "
              f"values identical: {np.array_equal(loaded.values, tensor.values)}")

        scda.write_activation_file(path, 224, 224, tensor)
        second = open(path, "rb").read()
        print(f"rewrite is byte-identical: {first == second}")


if __name__ == "__main__":
    main()
