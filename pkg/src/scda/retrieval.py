"""Exact cosine-similarity retrieval over an immutable gallery index.

Rows are l2-normalized at build time, so ranking is a dot product; scoring
accumulates in float64. Average precision at cutoff k is

    AP@k = sum_{p=1..k} precision@p * rel(p) / min(k, R_q)

where R_q counts gallery items sharing the query label, so a perfect top-k
list scores 1.0 even when the class has more than k members. Queries whose
label is absent from the gallery contribute AP 0 and stay in the mean.

Index file (.scdi, little-endian):

    magic "SCDI"; u32 version (=1); u32 n; u32 dim;
    n x (u32 byte-length + UTF-8 id); n x u32 label (0xFFFFFFFF = none);
    n*dim f32 normalized rows, row-major.
"""

from dataclasses import dataclass

import numpy as np

from ._binio import FormatError, Reader, atomic_write_bytes, f32_bytes, u32, u32_bytes

INDEX_VERSION = 1
_MAGIC = b"SCDI"
_NO_LABEL = 0xFFFFFFFF

_DIRECTIONS = ("descending", "ascending")


@dataclass(frozen=True)
class GalleryIndex:
    """Searchable (id, label, unit-norm row) collection; immutable after build."""

    ids: tuple
    labels: tuple
    matrix: np.ndarray

    def __post_init__(self):
        mat = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if mat.ndim != 2 or mat.shape[0] < 1:
            raise ValueError("index matrix must be (n, dim) with n >= 1")
        if not (len(self.ids) == len(self.labels) == mat.shape[0]):
            raise ValueError("ids, labels and matrix rows must align")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("duplicate ids in index")
        norms = np.linalg.norm(mat, axis=1)
        if (np.abs(norms - 1.0) > 1e-6).any():
            raise ValueError("index rows must be unit-norm within 1e-6")
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        object.__setattr__(self, "labels", tuple(self.labels))

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class RankedResult:
    """Gallery items ordered by cosine score; ties keep insertion order."""

    query_id: str
    ranked: tuple          # ((gallery id, score), ...) scores non-increasing
    relevance: tuple = None  # per-rank bool, present when the query had a label


def build_index(features, labels, ids) -> GalleryIndex:
    """Normalize the rows and freeze them into an index."""
    mat = np.asarray(features, dtype=np.float64)
    if mat.ndim != 2 or mat.shape[0] < 1:
        raise ValueError("features must be a non-empty (n, dim) matrix")
    ids = [str(i) for i in ids]
    labels = list(labels)
    if not (len(ids) == len(labels) == mat.shape[0]):
        raise ValueError("ids, labels and features must align")
    norms = np.linalg.norm(mat, axis=1)
    if (norms == 0).any():
        bad = [ids[i] for i in np.nonzero(norms == 0)[0]]
        raise ValueError(f"zero feature vectors for ids {bad}")
    return GalleryIndex(ids=tuple(ids), labels=tuple(labels), matrix=mat / norms[:, None])


def _scores(index: GalleryIndex, vector) -> np.ndarray:
    q = np.asarray(vector, dtype=np.float64)
    if q.shape != (index.dim,):
        raise ValueError(f"query dim {q.shape} does not match index dim {index.dim}")
    norm = np.linalg.norm(q)
    if norm == 0.0:
        raise ValueError("query is the zero vector")
    return index.matrix @ (q / norm)


def _ranking(index: GalleryIndex, vector) -> np.ndarray:
    scores = _scores(index, vector)
    # Stable sort on negated scores: ties fall back to insertion order.
    return np.argsort(-scores, kind="stable"), scores


def query(index: GalleryIndex, vector, k: int, query_id: str = "",
          query_label=None) -> RankedResult:
    """Top-k gallery rows by cosine similarity (k past n truncates to n)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    order, scores = _ranking(index, vector)
    top = order[: min(k, len(index))]
    ranked = tuple((index.ids[i], float(scores[i])) for i in top)
    relevance = None
    if query_label is not None:
        relevance = tuple(index.labels[i] == query_label for i in top)
    return RankedResult(query_id=query_id, ranked=ranked, relevance=relevance)


def average_precision(index: GalleryIndex, vector, label, k: int) -> float:
    """AP@k of one query against the index (0.0 when no gallery item matches)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if label is None:
        return 0.0
    relevant_total = sum(1 for lab in index.labels if lab == label)
    if relevant_total == 0:
        return 0.0
    order, _ = _ranking(index, vector)
    top = order[: min(k, len(index))]
    hits = 0
    precision_sum = 0.0
    for rank, idx in enumerate(top, start=1):
        if index.labels[idx] == label:
            hits += 1
            precision_sum += hits / rank
    return precision_sum / min(k, relevant_total)


def top_k_map(index: GalleryIndex, queries, k: int) -> float:
    """Mean AP@k over (vector, label, id) query triples."""
    queries = list(queries)
    if not queries:
        raise ValueError("no queries given")
    total = 0.0
    for vector, label, _ in queries:
        total += average_precision(index, vector, label, k)
    return total / len(queries)


def map_report(index: GalleryIndex, queries, k: int) -> dict:
    """Evaluation payload: overall mAP plus one AP entry per query."""
    queries = list(queries)
    per_query = [
        {"id": str(query_id), "ap": average_precision(index, vector, label, k)}
        for vector, label, query_id in queries
    ]
    mean = sum(entry["ap"] for entry in per_query) / len(per_query) if per_query else 0.0
    return {"k": k, "map": mean, "per_query": per_query}


def attribute_sort(index: GalleryIndex, dim_index: int,
                   direction: str = "descending"):
    """Gallery ids ordered by one feature coordinate; ties keep insertion order."""
    if not 0 <= dim_index < index.dim:
        raise IndexError(f"dimension {dim_index} out of range for dim {index.dim}")
    if direction not in _DIRECTIONS:
        raise ValueError(f"direction must be one of {_DIRECTIONS}")
    column = index.matrix[:, dim_index]
    keys = -column if direction == "descending" else column
    order = np.argsort(keys, kind="stable")
    return [index.ids[i] for i in order]


def save_index(index: GalleryIndex, path):
    parts = [_MAGIC, u32(INDEX_VERSION), u32(len(index)), u32(index.dim)]
    for image_id in index.ids:
        raw = image_id.encode("utf-8")
        parts.append(u32(len(raw)))
        parts.append(raw)
    encoded = [_NO_LABEL if lab is None else int(lab) for lab in index.labels]
    if any(lab < 0 or lab > _NO_LABEL for lab in encoded):
        raise ValueError("labels must be None or unsigned 32-bit integers")
    parts.append(u32_bytes(encoded))
    parts.append(f32_bytes(index.matrix))
    atomic_write_bytes(path, b"".join(parts))


def load_index(path) -> GalleryIndex:
    with open(path, "rb") as fh:
        reader = Reader(fh.read(), path=str(path))
    reader.magic(_MAGIC)
    reader.version(INDEX_VERSION)
    n = reader.u32()
    dim = reader.u32()
    ids = tuple(reader.string(reader.u32()) for _ in range(n))
    raw_labels = reader.u32_array(n)
    matrix = reader.f32_array(n * dim).reshape(n, dim)
    reader.done()
    if not np.isfinite(matrix).all():
        raise FormatError("non-finite", "index matrix contains NaN or Inf", str(path))
    labels = tuple(None if lab == _NO_LABEL else int(lab) for lab in raw_labels)
    return GalleryIndex(ids=ids, labels=labels, matrix=matrix.astype(np.float64))
