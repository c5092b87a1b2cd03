"""From activation tensors to ranked retrieval results.

Three synthetic classes get distinct hot channel bands, so images of one
class produce similar descriptors. Selected descriptors are pooled into
compact feature vectors, indexed, and queried; top-k mean average precision
summarizes the ranking quality.
"""

import numpy as np

import scda


def blob_record(rng, image_id, hot):
    """7x7x96 tensor whose 3x3 center blob fires only the ``hot`` channels."""
    values = (rng.random((7, 7, 96)) * 0.05).astype(np.float32)
    values[2:5, 2:5, hot] += 3.0
    tensor = scda.ActivationTensor(values=values)
    return scda.TensorRecord(image_id=image_id, image_height=224,
                             image_width=224,
                             tensors={(scda.POOL5, scda.ORIENT_ORIGINAL): tensor})


def main():
    rng = np.random.default_rng(3)
    gallery, queries = [], []
    for c in range(3):
        hot = slice(c * 32, (c + 1) * 32)
        for j in range(4):
            record = blob_record(rng, f"c{c}_{j}", hot)
            result = scda.compute_feature(record, "scda")
            target = gallery if j < 2 else queries
            target.append((result, c))
    print(f"gallery: {len(gallery)} images, queries: {len(queries)}, "
          f"feature dim {gallery[0][0].feature.dim}")

    index = scda.build_index(
        np.stack([r.feature.values for r, _ in gallery]),
        [label for _, label in gallery],
        [r.image_id for r, _ in gallery],
    )

    probe, probe_label = queries[0]
    ranked = scda.query(index, probe.feature.values, k=3,
                        query_id=probe.image_id, query_label=probe_label)
    print(f"\ntop 3 for query {probe.image_id} (class {probe_label}):")
    for (gallery_id, score), relevant in zip(ranked.ranked, ranked.relevance):
        marker = "same class" if relevant else "other class"
        print(f"  {gallery_id}  cosine {score:.4f}  ({marker})")

    triples = [(r.feature.values, label, r.image_id) for r, label in queries]
    for k in (1, 3, 6):
        print(f"top-{k} mAP: {scda.top_k_map(index, triples, k):.3f}")

    report = scda.map_report(index, triples, k=3)
    worst = min(report["per_query"], key=lambda e: e["ap"])
    print(f"weakest query at k=3: {worst['id']} with AP {worst['ap']:.3f}")


if __name__ == "__main__":
    main()
