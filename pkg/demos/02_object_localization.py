"""Find the object in an activation tensor without any labels.

The chain: sum all channels into an aggregation map, keep cells above the
map's mean, keep the largest connected region of those, then map the kept
cells to a pixel bounding box. A small bright distractor survives the
threshold but not the connectivity step.
"""

import numpy as np

import scda


def render(mask):
    return "\n".join("".join("#" if v else "." for v in row) for row in mask)


def main():
    rng = np.random.default_rng(2)
    values = (rng.random((14, 14, 64)) * 0.05).astype(np.float32)
    values[3:9, 5:12, :] += 3.0    # the object
    values[12, 1, :] += 4.0        # a bright speck far away from it
    tensor = scda.ActivationTensor(values=values)

    mask = scda.threshold_mask(scda.aggregation_map(tensor))
    print("cells above the aggregation mean (note the lone speck):")
    print(render(mask))

    largest = scda.largest_component(mask, connectivity=8)
    print("\nlargest connected component only:")
    print(render(largest))

    predicted = scda.mask_to_bbox(largest, 224, 224)
    print(f"\npredicted box in image pixels: "
          f"({predicted.x_min}, {predicted.y_min}) to "
          f"({predicted.x_max}, {predicted.y_max})")

    truth = scda.BoundingBox(x_min=5 * 16, y_min=3 * 16,
                             x_max=12 * 16 - 1, y_max=9 * 16 - 1)
    print(f"IoU against the planted region: {scda.iou(predicted, truth):.3f}")

    report = scda.evaluate_localization([predicted], [truth], threshold=0.5)
    print(f"fraction localized at IoU > 0.5: {report.pcp:.2f}")


if __name__ == "__main__":
    main()
