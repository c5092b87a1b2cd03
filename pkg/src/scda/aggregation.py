"""Pooling and encoding of selected descriptors into image feature vectors.

Variants and their dimensions for depth-d descriptors:

    avg / max        d      single pooled vector
    scda             2d     l2(avg) ++ l2(max), renormalized
    scda_plus        4d     scda(pool5) ++ alpha * scda(relu5_2), renormalized
    scda_flip_plus   8d     scda_plus(original) ++ scda_plus(hflip), renormalized
    vlad             k*d    signed-sqrt + l2 of residual sums to k centroids
    compressed       any    output of a fitted linear transform

Feature store (.scdf, little-endian):

    magic "SCDF"; u32 version (=1); u32 n; u32 dim; u8 variant tag;
    n x (u32 byte-length + UTF-8 id); n x u32 label (0xFFFFFFFF = none);
    n*dim f32 values, row-major.
"""

from dataclasses import dataclass

import numpy as np

from .selection import DescriptorSet
from ._binio import (
    FormatError,
    Reader,
    atomic_write_bytes,
    f32_bytes,
    u8,
    u32,
    u32_bytes,
)

VARIANTS = ("avg", "max", "scda", "scda_plus", "scda_flip_plus", "vlad", "compressed")
_VARIANT_TAGS = {name: i + 1 for i, name in enumerate(VARIANTS)}
_TAG_VARIANTS = {v: k for k, v in _VARIANT_TAGS.items()}

STORE_VERSION = 1
_STORE_MAGIC = b"SCDF"
_NO_LABEL = 0xFFFFFFFF

DEFAULT_ALPHA = 0.5


@dataclass(frozen=True)
class FeatureVector:
    """A single image representation; unit norm unless flagged degenerate."""

    values: np.ndarray
    variant: str
    degenerate: bool = False

    def __post_init__(self):
        vec = np.asarray(self.values, dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0:
            raise ValueError("feature values must be a non-empty 1-D vector")
        if not np.isfinite(vec).all():
            raise ValueError("feature contains NaN or Inf")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if not self.degenerate and not vec.any():
            raise ValueError("all-zero feature vector")
        vec = np.ascontiguousarray(vec)
        vec.flags.writeable = False
        object.__setattr__(self, "values", vec)

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class VladCodebook:
    """k centroids of length d, from k-means over a descriptor sample."""

    centroids: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=np.float64)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ValueError("centroids must be a (k, d) matrix with k >= 1")
        if not np.isfinite(c).all():
            raise ValueError("centroids contain NaN or Inf")
        if len(np.unique(c, axis=0)) != c.shape[0]:
            raise ValueError("centroids must be distinct")
        c = np.ascontiguousarray(c)
        c.flags.writeable = False
        object.__setattr__(self, "centroids", c)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def d(self) -> int:
        return self.centroids.shape[1]


def avg_pool(selected: DescriptorSet) -> np.ndarray:
    """Arithmetic mean of the selected descriptors (float64)."""
    return selected.vectors.mean(axis=0, dtype=np.float64)


def max_pool(selected: DescriptorSet) -> np.ndarray:
    """Elementwise maximum of the selected descriptors (float64)."""
    return selected.vectors.max(axis=0).astype(np.float64)


def l2_normalize(vector: np.ndarray) -> np.ndarray:
    vec = np.asarray(vector, dtype=np.float64)
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise ValueError("cannot l2-normalize the zero vector")
    return vec / norm


def scda(selected: DescriptorSet) -> FeatureVector:
    """Concatenate the normalized average- and max-pooled descriptors.

    Each half is l2-normalized, then the concatenation is normalized again so
    cosine ranking is scale-consistent; both halves keep equal energy.
    """
    stacked = np.concatenate([l2_normalize(avg_pool(selected)),
                              l2_normalize(max_pool(selected))])
    return FeatureVector(l2_normalize(stacked), "scda")


def scda_plus(pool5_feature: FeatureVector, relu52_feature: FeatureVector,
              alpha: float = DEFAULT_ALPHA) -> FeatureVector:
    """Weighted two-layer concatenation, renormalized."""
    _expect_variant(pool5_feature, "scda")
    _expect_variant(relu52_feature, "scda")
    if pool5_feature.dim != relu52_feature.dim:
        raise ValueError(
            f"layer features disagree on dim: {pool5_feature.dim} vs {relu52_feature.dim}"
        )
    stacked = np.concatenate([pool5_feature.values, alpha * relu52_feature.values])
    return FeatureVector(l2_normalize(stacked), "scda_plus")


def scda_flip_plus(original: FeatureVector, flipped: FeatureVector) -> FeatureVector:
    """Concatenate the two-layer features of the image and its mirror."""
    _expect_variant(original, "scda_plus")
    _expect_variant(flipped, "scda_plus")
    if original.dim != flipped.dim:
        raise ValueError(f"dim mismatch: {original.dim} vs {flipped.dim}")
    stacked = np.concatenate([original.values, flipped.values])
    return FeatureVector(l2_normalize(stacked), "scda_flip_plus")


def _expect_variant(feature: FeatureVector, variant: str):
    if feature.variant != variant:
        raise ValueError(f"expected a {variant!r} feature, got {feature.variant!r}")


def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diffs = points[:, None, :] - centers[None, :, :]
    return np.einsum("nkd,nkd->nk", diffs, diffs)


def nearest_centroids(vectors, codebook: VladCodebook) -> np.ndarray:
    """Index of the closest centroid per row; ties keep the lowest index."""
    points = np.asarray(vectors, dtype=np.float64)
    if points.shape[1] != codebook.d:
        raise ValueError(
            f"descriptor length {points.shape[1]} does not match codebook d={codebook.d}"
        )
    return _squared_distances(points, codebook.centroids).argmin(axis=1)


def train_codebook(sample, k: int, seed: int = 0,
                   max_iters: int = 100, tol: float = 1e-4) -> VladCodebook:
    """k-means with k-means++ seeding, deterministic for a fixed seed.

    Stops after ``max_iters`` Lloyd iterations or when the relative inertia
    change drops below ``tol``. Clusters that empty out keep their previous
    centroid.
    """
    points = np.asarray(sample, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("sample must be a (n, d) matrix")
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise ValueError(f"need at least k={k} samples, got {n}")
    rng = np.random.default_rng(seed)

    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[rng.integers(n)]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(n, p=closest / total)
        else:
            idx = rng.integers(n)
        centers[c] = points[idx]
        cand = ((points - centers[c]) ** 2).sum(axis=1)
        closest = np.minimum(closest, cand)

    previous_inertia = None
    for _ in range(max_iters):
        d2 = _squared_distances(points, centers)
        assign = d2.argmin(axis=1)
        inertia = float(d2[np.arange(n), assign].sum())
        if previous_inertia is not None:
            denom = max(previous_inertia, np.finfo(np.float64).tiny)
            if abs(previous_inertia - inertia) / denom < tol:
                break
        previous_inertia = inertia
        for c in range(k):
            members = points[assign == c]
            if members.shape[0]:
                centers[c] = members.mean(axis=0)
    return VladCodebook(centroids=centers)


def vlad_residuals(selected: DescriptorSet, codebook: VladCodebook) -> np.ndarray:
    """Per-centroid residual sums, pre-normalization, as a (k, d) matrix.

    Residuals accumulate descriptor by descriptor in selection order so the
    result is bitwise reproducible.
    """
    points = selected.vectors.astype(np.float64)
    assign = nearest_centroids(points, codebook)
    blocks = np.zeros((codebook.k, codebook.d), dtype=np.float64)
    centers = codebook.centroids
    for idx in range(points.shape[0]):
        c = assign[idx]
        blocks[c] += points[idx] - centers[c]
    return blocks


def vlad_encode(selected: DescriptorSet, codebook: VladCodebook) -> FeatureVector:
    """Residual sums to nearest centroids, signed-sqrt then l2 normalized.

    A descriptor set whose residuals cancel exactly (for instance a single
    descriptor sitting on a centroid) yields the zero vector; normalizing it
    is impossible, so the raw vector is returned flagged ``degenerate``.
    """
    flat = vlad_residuals(selected, codebook).ravel()
    if not flat.any():
        return FeatureVector(flat, "vlad", degenerate=True)
    rooted = np.sign(flat) * np.sqrt(np.abs(flat))
    return FeatureVector(l2_normalize(rooted), "vlad")


@dataclass(frozen=True)
class FeatureStore:
    """Contents of a .scdf file: aligned ids, labels and feature rows."""

    ids: tuple
    labels: tuple
    matrix: np.ndarray
    variant: str

    def __len__(self) -> int:
        return len(self.ids)


def write_feature_store(path, ids, labels, matrix, variant: str):
    """Serialize aligned (id, label, row) triples to a .scdf file."""
    ids = [str(i) for i in ids]
    labels = list(labels)
    mat = np.asarray(matrix)
    if mat.ndim != 2 or mat.shape[0] < 1:
        raise ValueError("matrix must be (n, dim) with n >= 1")
    if not (len(ids) == len(labels) == mat.shape[0]):
        raise ValueError("ids, labels and matrix rows must align")
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate ids in feature store")
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if not np.isfinite(mat).all():
        raise ValueError("feature matrix contains NaN or Inf")
    parts = [
        _STORE_MAGIC,
        u32(STORE_VERSION),
        u32(mat.shape[0]),
        u32(mat.shape[1]),
        u8(_VARIANT_TAGS[variant]),
    ]
    for image_id in ids:
        raw = image_id.encode("utf-8")
        parts.append(u32(len(raw)))
        parts.append(raw)
    encoded = [_NO_LABEL if lab is None else int(lab) for lab in labels]
    if any(lab < 0 or lab > _NO_LABEL for lab in encoded):
        raise ValueError("labels must be None or unsigned 32-bit integers")
    parts.append(u32_bytes(encoded))
    parts.append(f32_bytes(mat))
    atomic_write_bytes(path, b"".join(parts))


def read_feature_store(path) -> FeatureStore:
    with open(path, "rb") as fh:
        reader = Reader(fh.read(), path=str(path))
    reader.magic(_STORE_MAGIC)
    reader.version(STORE_VERSION)
    n = reader.u32()
    dim = reader.u32()
    tag = reader.u8()
    if tag not in _TAG_VARIANTS:
        raise FormatError("bad-tag", f"unknown variant tag {tag}", str(path))
    ids = tuple(reader.string(reader.u32()) for _ in range(n))
    raw_labels = reader.u32_array(n)
    matrix = reader.f32_array(n * dim).reshape(n, dim)
    reader.done()
    if not np.isfinite(matrix).all():
        raise FormatError("non-finite", "feature matrix contains NaN or Inf", str(path))
    labels = tuple(None if lab == _NO_LABEL else int(lab) for lab in raw_labels)
    return FeatureStore(ids=ids, labels=labels, matrix=matrix, variant=_TAG_VARIANTS[tag])
