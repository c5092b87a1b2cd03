"""Unsupervised object localization on activation tensors.

The chain is: aggregation map -> mean-threshold mask -> largest connected
component -> descriptor selection / bounding box. Masks are plain 2-D uint8
arrays whose entries are exactly 0 or 1.
"""

from dataclasses import dataclass

import numpy as np

from .tensor import ActivationTensor
from ._binio import atomic_write_bytes

_OFFSETS_4 = ((-1, 0), (1, 0), (0, -1), (0, 1))
_OFFSETS_8 = _OFFSETS_4 + ((-1, -1), (-1, 1), (1, -1), (1, 1))


@dataclass(frozen=True)
class BoundingBox:
    """Inclusive pixel rectangle: width is x_max - x_min + 1."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"degenerate box {self}")
        if self.x_min < 0 or self.y_min < 0:
            raise ValueError(f"negative coordinates in {self}")

    @property
    def area(self) -> int:
        return (self.x_max - self.x_min + 1) * (self.y_max - self.y_min + 1)


@dataclass(frozen=True)
class DescriptorSet:
    """Descriptors picked from a tensor, with their grid positions kept.

    positions is an (n, 2) int array of (row, column); vectors is (n, d).
    """

    positions: np.ndarray
    vectors: np.ndarray
    grid_height: int
    grid_width: int

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.int64)
        vec = np.asarray(self.vectors)
        if pos.ndim != 2 or pos.shape[1] != 2 or vec.ndim != 2:
            raise ValueError("positions must be (n, 2) and vectors (n, d)")
        if pos.shape[0] != vec.shape[0]:
            raise ValueError("positions and vectors disagree on count")
        if pos.shape[0] == 0:
            raise ValueError("descriptor set may not be empty")
        if pos.min(initial=0) < 0 or (pos[:, 0] >= self.grid_height).any() or (
            pos[:, 1] >= self.grid_width
        ).any():
            raise ValueError("positions fall outside the source grid")
        flat = pos[:, 0] * self.grid_width + pos[:, 1]
        if len(np.unique(flat)) != len(flat):
            raise ValueError("duplicate positions in descriptor set")
        pos.flags.writeable = False
        vec = np.ascontiguousarray(vec)
        vec.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "vectors", vec)

    def __len__(self) -> int:
        return self.positions.shape[0]


def _check_mask(mask) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.ndim != 2 or min(arr.shape) < 1:
        raise ValueError(f"mask must be a non-empty 2-D grid, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("mask values must be exactly 0 or 1")
    return arr.astype(np.uint8)


def threshold_mask(aggregation: np.ndarray) -> np.ndarray:
    """Mark cells whose aggregated activation strictly exceeds the grid mean."""
    grid = np.asarray(aggregation, dtype=np.float64)
    if grid.ndim != 2 or grid.size == 0:
        raise ValueError("aggregation map must be a non-empty 2-D grid")
    return (grid > grid.mean()).astype(np.uint8)


def connected_components(mask, connectivity: int = 8):
    """Partition the 1-cells into maximal connected sets via flood fill.

    Returns a list of components in row-major discovery order; each component
    is a list of (row, column) tuples whose first entry is the component's
    lexicographically smallest cell.
    """
    grid = _check_mask(mask).tolist()
    if connectivity == 4:
        offsets = _OFFSETS_4
    elif connectivity == 8:
        offsets = _OFFSETS_8
    else:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    h = len(grid)
    w = len(grid[0])
    seen = [[False] * w for _ in range(h)]
    components = []
    for i in range(h):
        row = grid[i]
        seen_row = seen[i]
        for j in range(w):
            if not row[j] or seen_row[j]:
                continue
            seen_row[j] = True
            stack = [(i, j)]
            cells = []
            while stack:
                ci, cj = stack.pop()
                cells.append((ci, cj))
                for di, dj in offsets:
                    ni = ci + di
                    nj = cj + dj
                    if 0 <= ni < h and 0 <= nj < w and grid[ni][nj] and not seen[ni][nj]:
                        seen[ni][nj] = True
                        stack.append((ni, nj))
            components.append(cells)
    return components


def largest_component(mask, connectivity: int = 8) -> np.ndarray:
    """Keep only the largest connected component of the mask.

    Size ties go to the component whose smallest (row, column) cell comes
    first; an all-zero mask falls back to all-ones so downstream pooling
    degrades to plain unselected pooling.
    """
    grid = _check_mask(mask)
    components = connected_components(grid, connectivity)
    if not components:
        return np.ones_like(grid)
    best = components[0]
    for cells in components[1:]:
        if len(cells) > len(best):
            best = cells
    out = np.zeros_like(grid)
    rows, cols = zip(*best)
    out[list(rows), list(cols)] = 1
    return out


def upsample_mask(mask, target_h: int, target_w: int) -> np.ndarray:
    """Nearest-neighbor upscale; source cell = floor(i * src / target)."""
    grid = _check_mask(mask)
    src_h, src_w = grid.shape
    if target_h < src_h or target_w < src_w:
        raise ValueError(
            f"target {target_h}x{target_w} smaller than source {src_h}x{src_w}"
        )
    rows = (np.arange(target_h) * src_h) // target_h
    cols = (np.arange(target_w) * src_w) // target_w
    return grid[np.ix_(rows, cols)]


def fuse_masks(pool5_largest, relu52_mask) -> np.ndarray:
    """Elementwise AND of the upsampled pool5 component with the relu5_2 mask.

    A disjoint pair would select nothing, so an all-zero AND falls back to
    the pool5 component alone.
    """
    a = _check_mask(pool5_largest)
    b = _check_mask(relu52_mask)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    fused = a & b
    if not fused.any():
        return a
    return fused


def select_descriptors(tensor: ActivationTensor, mask) -> DescriptorSet:
    """Gather the descriptors at every 1-cell of the mask."""
    grid = _check_mask(mask)
    if grid.shape != (tensor.height, tensor.width):
        raise ValueError(
            f"mask {grid.shape} does not match tensor grid "
            f"{(tensor.height, tensor.width)}"
        )
    rows, cols = np.nonzero(grid)
    if rows.size == 0:
        raise ValueError("mask selects no cells; apply largest_component first")
    return DescriptorSet(
        positions=np.stack([rows, cols], axis=1),
        vectors=tensor.values[rows, cols, :],
        grid_height=tensor.height,
        grid_width=tensor.width,
    )


def mask_to_bbox(mask, image_height: int, image_width: int) -> BoundingBox:
    """Tightest pixel rectangle containing every 1-cell's pixel block.

    Cell (i, j) of an h x w grid covers pixel rows
    [floor(i*H/h), floor((i+1)*H/h) - 1] and likewise for columns.
    """
    grid = _check_mask(mask)
    rows, cols = np.nonzero(grid)
    if rows.size == 0:
        raise ValueError("mask has no 1-cells")
    h, w = grid.shape
    i0, i1 = int(rows.min()), int(rows.max())
    j0, j1 = int(cols.min()), int(cols.max())
    return BoundingBox(
        x_min=(j0 * image_width) // w,
        y_min=(i0 * image_height) // h,
        x_max=((j1 + 1) * image_width) // w - 1,
        y_max=((i1 + 1) * image_height) // h - 1,
    )


def write_mask_pgm(mask, path):
    """Debug dump as binary PGM (P5, maxval 255): 1-cells render white."""
    grid = _check_mask(mask)
    h, w = grid.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + (grid * 255).astype(np.uint8).tobytes())
