"""Driving the batch command line end to end on a small disk dataset.

Nine tensor files plus a manifest go in; feature stores, a search index,
evaluation reports, and a compressed gallery come out. Every command is
invoked exactly as a shell user would, and reports land on stdout as JSON
when no --out file is given. A deliberately broken invocation at the end
shows the error contract: one JSON object on stderr, nonzero exit, no
partial files.
"""

import json
import os
import tempfile

import numpy as np

import scda
from scda.cli import main


def build_dataset(root, rng, n_classes=3, per_class=3):
    """Write class-coded blob tensors and a manifest; returns the manifest path.

    Class c lights channels [c*32, (c+1)*32) inside a 3x3 blob at grid
    rows/cols 2..4. Pool cells cover 32 px of the 224 px image, so the
    blob's true pixel box is (64, 64, 159, 159).
    """
    tensor_dir = os.path.join(root, "tensors")
    os.makedirs(tensor_dir)
    lines = []
    width = 96 // n_classes
    for c in range(n_classes):
        for j in range(per_class):
            values = (rng.random((7, 7, 96)) * 0.05).astype(np.float32)
            values[2:5, 2:5, c * width:(c + 1) * width] += 3.0
            record = scda.TensorRecord(
                image_id=f"c{c}_{j}", image_height=224, image_width=224,
                tensors={(scda.POOL5, scda.ORIENT_ORIGINAL):
                         scda.ActivationTensor(values=values)})
            paths = scda.store_record(record, tensor_dir)
            tensors = {}
            for (layer, orientation), path in paths.items():
                tensors.setdefault(layer, {})[orientation] = \
                    os.path.relpath(path, root)
            lines.append(json.dumps({
                "image_id": record.image_id,
                "label": c,
                "split": "gallery" if j < 2 else "query",
                "image_height": 224,
                "image_width": 224,
                "tensors": tensors,
                "gt_bbox": [64, 64, 159, 159],
            }))
    manifest = os.path.join(root, "manifest.jsonl")
    with open(manifest, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return manifest


def run(argv, expect_failure=False):
    print(f"\n$ scda {' '.join(argv)}")
    code = main(argv)
    if expect_failure:
        print(f"(exit code {code}, as expected)")
    elif code != 0:
        raise SystemExit(f"command failed with exit code {code}")


def main_demo():
    rng = np.random.default_rng(5)
    with tempfile.TemporaryDirectory() as root:
        manifest = build_dataset(root, rng)
        gallery = os.path.join(root, "gallery.scdf")
        queries = os.path.join(root, "queries.scdf")
        index = os.path.join(root, "gallery.scdi")

        run(["features", "--manifest", manifest, "--variant", "scda",
             "--split", "gallery", "--out", gallery])
        run(["features", "--manifest", manifest, "--variant", "scda",
             "--split", "query", "--out", queries])
        store = scda.read_feature_store(gallery)
        print(f"gallery store: {len(store)} rows of dim "
              f"{store.matrix.shape[1]}, variant {store.variant!r}")

        run(["index", "--features", gallery, "--out", index])
        run(["query", "--index", index, "--features", queries, "--k", "2"])
        run(["eval-map", "--index", index, "--features", queries, "--k", "1"])
        run(["eval-loc", "--manifest", manifest])

        transform = os.path.join(root, "svd4.scdt")
        packed_gallery = os.path.join(root, "gallery_4d.scdf")
        packed_queries = os.path.join(root, "queries_4d.scdf")
        packed_index = os.path.join(root, "gallery_4d.scdi")
        run(["compress", "--features", gallery, "--compress", "svd",
             "--dim", "4", "--transform-out", transform,
             "--out", packed_gallery])
        run(["compress", "--features", queries, "--transform", transform,
             "--out", packed_queries])
        run(["index", "--features", packed_gallery, "--out", packed_index])
        run(["eval-map", "--index", packed_index, "--features",
             packed_queries, "--k", "1"])
        run(["sort-dim", "--index", packed_index, "--dim-index", "0",
             "--direction", "descending"])

        run(["index", "--features", os.path.join(root, "absent.scdf"),
             "--out", os.path.join(root, "never_written.scdi")],
            expect_failure=True)
        leftover = os.path.exists(os.path.join(root, "never_written.scdi"))
        print(f"partial output left behind: {leftover}")


if __name__ == "__main__":
    main_demo()
