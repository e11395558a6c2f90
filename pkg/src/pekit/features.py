"""Numerical core: patch-grid pooling of instance features.

Converts pixel-space masks or bounding boxes plus a patch feature map into
pooled, L2-normalized instance embeddings. All functions are pure and
thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# A selection of patch-grid cells, as (row, col) pairs in lexicographic order.
PatchSelection = list[tuple[int, int]]

COVERAGE_THRESHOLD = 0.5


class EmptyMaskError(ValueError):
    """Raised when an object mask contains no true pixel."""


class DegenerateEmbeddingError(ValueError):
    """Raised when a pooled embedding has zero norm and cannot be normalized."""


@dataclass(frozen=True)
class PatchFeatureMap:
    """Grid of per-patch embedding vectors from an image encoder.

    ``data`` has shape (grid_h, grid_w, dim); ``image_h``/``image_w`` are the
    pixel dimensions of the source image the grid was computed from.
    """

    grid_h: int
    grid_w: int
    dim: int
    data: np.ndarray
    image_h: int
    image_w: int

    def __post_init__(self):
        if self.grid_h < 1 or self.grid_w < 1 or self.dim < 1:
            raise ValueError("grid dimensions and dim must be >= 1")
        if self.image_h < self.grid_h or self.image_w < self.grid_w:
            raise ValueError("image dimensions must be >= grid dimensions")
        data = np.asarray(self.data, dtype=np.float32)
        if data.shape != (self.grid_h, self.grid_w, self.dim):
            raise ValueError(
                f"feature data shape {data.shape} != "
                f"({self.grid_h}, {self.grid_w}, {self.dim})"
            )
        if not np.all(np.isfinite(data)):
            raise ValueError("feature map contains non-finite values")
        object.__setattr__(self, "data", data)


@dataclass(frozen=True)
class PixelMask:
    """Boolean pixel occupancy mask in source-image coordinates."""

    height: int
    width: int
    bits: np.ndarray

    def __post_init__(self):
        bits = np.asarray(self.bits, dtype=bool)
        if bits.shape != (self.height, self.width):
            raise ValueError(
                f"mask bits shape {bits.shape} != ({self.height}, {self.width})"
            )
        object.__setattr__(self, "bits", bits)


@dataclass(frozen=True)
class BoundingBox:
    """Half-open pixel box [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    def __post_init__(self):
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError("box coordinates must be non-negative")
        if self.x0 >= self.x1 or self.y0 >= self.y1:
            raise ValueError("box must have positive area")

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


@dataclass(frozen=True)
class InstanceEmbedding:
    """A pooled instance feature vector; unit-norm when ``normalized``."""

    values: np.ndarray
    normalized: bool = False
    dim: int = field(init=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float32).reshape(-1)
        if values.size < 1:
            raise ValueError("embedding must have at least one component")
        if not np.all(np.isfinite(values)):
            raise ValueError("embedding contains non-finite values")
        if self.normalized:
            norm = float(np.linalg.norm(values.astype(np.float64)))
            if abs(norm - 1.0) > 1e-6:
                raise ValueError(f"normalized embedding has norm {norm}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dim", int(values.size))


def _pixel_to_patch_indices(h: int, w: int, grid_h: int, grid_w: int):
    rows = (np.arange(h, dtype=np.int64) * grid_h) // h
    cols = (np.arange(w, dtype=np.int64) * grid_w) // w
    return rows, cols


def downsample_mask(mask: PixelMask, grid: tuple[int, int]) -> PatchSelection:
    """Project a pixel mask onto the patch grid.

    A patch is selected when at least half of its pixel footprint is covered.
    If no patch reaches 50% coverage, the single best-covered patch is
    returned (ties broken by smallest (row, col)).
    """
    grid_h, grid_w = grid
    if mask.height < grid_h or mask.width < grid_w:
        raise ValueError("mask dimensions must be >= grid dimensions")
    if not mask.bits.any():
        raise EmptyMaskError("empty mask")

    rows, cols = _pixel_to_patch_indices(mask.height, mask.width, grid_h, grid_w)
    patch_ids = rows[:, None] * grid_w + cols[None, :]
    flat_ids = patch_ids.ravel()
    footprint = np.bincount(flat_ids, minlength=grid_h * grid_w)
    covered = np.bincount(
        flat_ids, weights=mask.bits.ravel().astype(np.float64),
        minlength=grid_h * grid_w,
    )
    coverage = covered / footprint
    selected = coverage >= COVERAGE_THRESHOLD
    if not selected.any():
        # argmax over row-major ids is the lexicographically smallest tie
        selected[int(np.argmax(coverage))] = True
    ids = np.flatnonzero(selected)
    return [(int(i) // grid_w, int(i) % grid_w) for i in ids]


def pool_over_selection(
    fmap: PatchFeatureMap, sel: PatchSelection
) -> InstanceEmbedding:
    """Average the selected patch vectors and L2-normalize the result."""
    if not sel:
        raise ValueError("empty selection")
    rows = np.fromiter((r for r, _ in sel), dtype=np.int64, count=len(sel))
    cols = np.fromiter((c for _, c in sel), dtype=np.int64, count=len(sel))
    if (
        rows.min() < 0
        or cols.min() < 0
        or rows.max() >= fmap.grid_h
        or cols.max() >= fmap.grid_w
    ):
        raise ValueError("selection index outside patch grid")
    mean = fmap.data[rows, cols].astype(np.float64).mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm == 0.0:
        raise DegenerateEmbeddingError("degenerate embedding")
    return InstanceEmbedding(values=(mean / norm).astype(np.float32), normalized=True)


def rasterize_bbox(bbox: BoundingBox, image_h: int, image_w: int) -> PixelMask:
    """Render a bounding box as a filled pixel mask."""
    if bbox.x1 > image_w or bbox.y1 > image_h:
        raise ValueError("box outside image bounds")
    bits = np.zeros((image_h, image_w), dtype=bool)
    bits[bbox.y0 : bbox.y1, bbox.x0 : bbox.x1] = True
    return PixelMask(height=image_h, width=image_w, bits=bits)


def bbox_to_selection(bbox: BoundingBox, fmap: PatchFeatureMap) -> PatchSelection:
    """Map a bounding box to patch cells via the shared mask-coverage rule."""
    mask = rasterize_bbox(bbox, fmap.image_h, fmap.image_w)
    return downsample_mask(mask, (fmap.grid_h, fmap.grid_w))


def cosine_similarity(a: InstanceEmbedding, b: InstanceEmbedding) -> float:
    """Cosine similarity between two embeddings, in [-1, 1]."""
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} != {b.dim}")
    av = a.values.astype(np.float64)
    bv = b.values.astype(np.float64)
    na = float(np.linalg.norm(av))
    nb = float(np.linalg.norm(bv))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm input")
    return float(np.clip(np.dot(av, bv) / (na * nb), -1.0, 1.0))
