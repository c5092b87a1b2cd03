"""Unsupervised object localization and descriptor aggregation for retrieval.

Typical flow: load activation tensors, keep the descriptors under the
largest above-mean-activation region, pool them into a compact unit-norm
feature, optionally compress, then rank a gallery by cosine similarity.
"""

from ._binio import FormatError
from .aggregation import (DEFAULT_ALPHA, FeatureStore, FeatureVector,
                          VladCodebook, avg_pool, l2_normalize, max_pool,
                          nearest_centroids, read_feature_store, scda,
                          scda_flip_plus, scda_plus, train_codebook,
                          vlad_encode, vlad_residuals, write_feature_store)
from .compression import (LinearTransform, RankDeficiencyError, apply,
                          apply_matrix, apply_unnormalized, fit,
                          load_transform, save_transform)
from .localization import (LocalizationReport, coverage_histogram,
                           evaluate_localization, iou, pcp)
from .manifest import ManifestEntry, ManifestError, load_manifest, write_manifest
from .pipeline import (PIPELINE_VARIANTS, PipelineResult, PipelineRun,
                       compute_feature, object_mask, record_from_entry,
                       required_tensors, run_pipeline, stack_features)
from .retrieval import (GalleryIndex, RankedResult, attribute_sort,
                        average_precision, build_index, load_index,
                        map_report, query, save_index, top_k_map)
from .selection import (BoundingBox, DescriptorSet, connected_components,
                        fuse_masks, largest_component, mask_to_bbox,
                        select_descriptors, threshold_mask, upsample_mask,
                        write_mask_pgm)
from .tensor import (ORIENT_HFLIP, ORIENT_ORIGINAL, POOL5, RELU5_2,
                     ActivationTensor, TensorRecord, aggregation_map,
                     descriptor_at, feature_map, hflip, load_record,
                     read_activation_file, store_record, tensor_filename,
                     write_activation_file)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
