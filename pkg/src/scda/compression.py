"""Linear feature compression: SVD, PCA and SVD+whitening projections.

A transform is fitted on the gallery matrix only and then applied unchanged
to gallery and query vectors alike. SVD projects onto the top right-singular
directions of the raw matrix (no mean removal); PCA removes the mean first;
whitening additionally divides each component by its singular value scaled
by 1/sqrt(n) so the projected gallery has unit second moment per dimension.

Transform file (.scdt, little-endian):

    magic "SCDT"; u32 version (=1); u8 kind tag (1=svd, 2=pca, 3=svd_whiten);
    u32 target_dim; u32 source_dim;
    u8 has_mean  [+ source_dim f32 mean];
    target_dim*source_dim f32 projection, row-major;
    u8 has_scales [+ target_dim f32 whitening divisors].
"""

from dataclasses import dataclass

import numpy as np

from .aggregation import FeatureVector, l2_normalize
from ._binio import FormatError, Reader, atomic_write_bytes, f32_bytes, u8, u32

KINDS = ("svd", "pca", "svd_whiten")
_KIND_TAGS = {name: i + 1 for i, name in enumerate(KINDS)}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}

TRANSFORM_VERSION = 1
_MAGIC = b"SCDT"

# Singular values at or below this fraction of the largest are treated as
# numerically zero rank.
_RANK_EPS = 1e-10


class RankDeficiencyError(ValueError):
    """Fitting data had fewer usable directions than requested."""

    def __init__(self, requested: int, achieved: int):
        self.requested = requested
        self.achieved = achieved
        super().__init__(
            f"requested {requested} components but the data supports only {achieved}"
        )


@dataclass(frozen=True)
class LinearTransform:
    """Immutable fitted projection; rows of ``projection`` are orthonormal."""

    kind: str
    projection: np.ndarray
    mean: np.ndarray = None
    scale: np.ndarray = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown transform kind {self.kind!r}")
        proj = np.ascontiguousarray(self.projection, dtype=np.float64)
        proj.flags.writeable = False
        object.__setattr__(self, "projection", proj)
        if (self.mean is not None) != (self.kind == "pca"):
            raise ValueError("mean vector is present iff kind is pca")
        if self.mean is not None:
            mean = np.ascontiguousarray(self.mean, dtype=np.float64)
            if mean.shape != (self.source_dim,):
                raise ValueError("mean length does not match source_dim")
            mean.flags.writeable = False
            object.__setattr__(self, "mean", mean)
        if (self.scale is not None) != (self.kind == "svd_whiten"):
            raise ValueError("whitening scales are present iff kind is svd_whiten")
        if self.scale is not None:
            scale = np.ascontiguousarray(self.scale, dtype=np.float64)
            if scale.shape != (self.target_dim,):
                raise ValueError("scale length does not match target_dim")
            if (scale <= 0).any():
                raise ValueError("whitening divisors must be positive")
            scale.flags.writeable = False
            object.__setattr__(self, "scale", scale)

    @property
    def target_dim(self) -> int:
        return self.projection.shape[0]

    @property
    def source_dim(self) -> int:
        return self.projection.shape[1]


def _fix_signs(projection: np.ndarray) -> np.ndarray:
    # Reproducible orientation: the largest-magnitude entry of each row is positive.
    for row in projection:
        pivot = np.abs(row).argmax()
        if row[pivot] < 0:
            row *= -1.0
    return projection


def fit(gallery, kind: str, target_dim: int) -> LinearTransform:
    """Fit a projection of the requested kind on the gallery matrix.

    For svd and pca a rank below ``target_dim`` raises RankDeficiencyError;
    svd_whiten instead drops the unusable components, shrinking the output
    dimension, because their whitening divisors would be numeric noise.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown transform kind {kind!r}")
    data = np.asarray(gallery, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError("gallery must be a (n, dim) matrix")
    n, source_dim = data.shape
    if target_dim < 1:
        raise ValueError("target_dim must be >= 1")
    if n < target_dim:
        raise ValueError(f"need at least target_dim={target_dim} samples, got {n}")

    mean = None
    if kind == "pca":
        mean = data.mean(axis=0)
        data = data - mean

    _, singulars, vt = np.linalg.svd(data, full_matrices=False)
    largest = singulars[0] if singulars.size else 0.0
    rank = int((singulars > _RANK_EPS * largest).sum()) if largest > 0 else 0

    if kind == "svd_whiten":
        kept = min(target_dim, rank)
        if kept == 0:
            raise RankDeficiencyError(target_dim, 0)
        projection = _fix_signs(vt[:kept].copy())
        scale = singulars[:kept] / np.sqrt(n)
        return LinearTransform(kind=kind, projection=projection, scale=scale)

    if rank < target_dim:
        raise RankDeficiencyError(target_dim, rank)
    projection = _fix_signs(vt[:target_dim].copy())
    return LinearTransform(kind=kind, projection=projection, mean=mean)


def apply_unnormalized(transform: LinearTransform, vector) -> np.ndarray:
    """Project one vector without the final l2 step (used for variance checks)."""
    vec = np.asarray(vector, dtype=np.float64)
    if vec.shape != (transform.source_dim,):
        raise ValueError(
            f"vector length {vec.shape} does not match source_dim {transform.source_dim}"
        )
    if transform.mean is not None:
        vec = vec - transform.mean
    out = transform.projection @ vec
    if transform.scale is not None:
        out = out / transform.scale
    return out


def apply(transform: LinearTransform, vector) -> FeatureVector:
    """Project and l2-normalize one vector; raises if the projection is zero."""
    out = apply_unnormalized(transform, vector)
    return FeatureVector(l2_normalize(out), "compressed")


def apply_matrix(transform: LinearTransform, matrix, normalize: bool = True) -> np.ndarray:
    """Project every row; optionally l2-normalize the rows."""
    data = np.asarray(matrix, dtype=np.float64)
    if data.ndim != 2 or data.shape[1] != transform.source_dim:
        raise ValueError("matrix must be (n, source_dim)")
    if transform.mean is not None:
        data = data - transform.mean
    out = data @ transform.projection.T
    if transform.scale is not None:
        out = out / transform.scale
    if normalize:
        norms = np.linalg.norm(out, axis=1)
        if (norms == 0).any():
            raise ValueError("a row projected to the zero vector")
        out = out / norms[:, None]
    return out


def save_transform(transform: LinearTransform, path):
    parts = [
        _MAGIC,
        u32(TRANSFORM_VERSION),
        u8(_KIND_TAGS[transform.kind]),
        u32(transform.target_dim),
        u32(transform.source_dim),
    ]
    if transform.mean is not None:
        parts.append(u8(1))
        parts.append(f32_bytes(transform.mean))
    else:
        parts.append(u8(0))
    parts.append(f32_bytes(transform.projection))
    if transform.scale is not None:
        parts.append(u8(1))
        parts.append(f32_bytes(transform.scale))
    else:
        parts.append(u8(0))
    atomic_write_bytes(path, b"".join(parts))


def load_transform(path) -> LinearTransform:
    with open(path, "rb") as fh:
        reader = Reader(fh.read(), path=str(path))
    reader.magic(_MAGIC)
    reader.version(TRANSFORM_VERSION)
    tag = reader.u8()
    if tag not in _TAG_KINDS:
        raise FormatError("bad-tag", f"unknown kind tag {tag}", str(path))
    kind = _TAG_KINDS[tag]
    target_dim = reader.u32()
    source_dim = reader.u32()
    mean = None
    if reader.u8():
        mean = reader.f32_array(source_dim).astype(np.float64)
    projection = reader.f32_array(target_dim * source_dim).reshape(target_dim, source_dim)
    scale = None
    if reader.u8():
        scale = reader.f32_array(target_dim).astype(np.float64)
    reader.done()
    return LinearTransform(
        kind=kind,
        projection=projection.astype(np.float64),
        mean=mean,
        scale=scale,
    )
