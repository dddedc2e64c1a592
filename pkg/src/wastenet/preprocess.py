"""From raw image pairs to fixed-size, food-centered crops.

Both images of a pair are cropped with ONE bounding box computed from the
union of their segmentation masks, so pixel (i, j) of the cropped
before-image corresponds to pixel (i, j) of the cropped after-image. A
square centered near an image border may extend beyond it; the crop
zero-pads those regions rather than shifting the box.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Tensor, interp_matrix
from .segmentation import UNetModel, binarize, unet_forward


@dataclass(frozen=True)
class SquareBBox:
    """Top-left row/col and side of a square in source-image coordinates."""

    row: int
    col: int
    side: int

    def __post_init__(self):
        if self.side < 1:
            raise ValueError("bbox side must be >= 1")


def min_square_bbox(mask) -> SquareBBox | None:
    """Smallest square covering all foreground pixels, or None if empty.

    The square's side is the larger of the foreground's row/col extents and
    it is centered on the tight rectangle along the shorter axis (offsets
    floor-rounded).
    """
    arr = mask.data if isinstance(mask, Tensor) else np.asarray(mask)
    plane = arr[0] if arr.ndim == 3 else arr
    rows = np.flatnonzero(plane.any(axis=1))
    cols = np.flatnonzero(plane.any(axis=0))
    if rows.size == 0:
        return None
    r0, r1 = int(rows[0]), int(rows[-1])
    c0, c1 = int(cols[0]), int(cols[-1])
    r_extent = r1 - r0 + 1
    c_extent = c1 - c0 + 1
    side = max(r_extent, c_extent)
    row = r0 - (side - r_extent) // 2
    col = c0 - (side - c_extent) // 2
    return SquareBBox(row=row, col=col, side=side)


def crop(image, bbox: SquareBBox) -> np.ndarray:
    """Extract a (C, side, side) crop, zero-padding out-of-bounds regions."""
    arr = image.data if isinstance(image, Tensor) else np.asarray(image)
    if arr.ndim != 3:
        raise ValueError(f"crop expects a (C, H, W) image, got {arr.shape}")
    c, h, w = arr.shape
    r0, c0, side = bbox.row, bbox.col, bbox.side
    if r0 + side <= 0 or c0 + side <= 0 or r0 >= h or c0 >= w:
        raise ValueError(f"bbox {bbox} does not overlap a {h}x{w} image")
    out = np.zeros((c, side, side), dtype=arr.dtype)
    src_r0, src_r1 = max(r0, 0), min(r0 + side, h)
    src_c0, src_c1 = max(c0, 0), min(c0 + side, w)
    out[:, src_r0 - r0:src_r1 - r0, src_c0 - c0:src_c1 - c0] = arr[:, src_r0:src_r1, src_c0:src_c1]
    return out


def resize_bilinear(image, target: int) -> np.ndarray:
    """Corner-aligned bilinear resize of (C, H, W) to (C, target, target).

    Equal sizes return a bit-identical copy; constant images stay constant
    and value bounds are preserved (rows of the interpolation matrices are
    convex weights).
    """
    if target < 1:
        raise ValueError("target size must be >= 1")
    arr = image.data if isinstance(image, Tensor) else np.asarray(image)
    if arr.ndim != 3:
        raise ValueError(f"resize_bilinear expects a (C, H, W) image, got {arr.shape}")
    _, h, w = arr.shape
    if h == target and w == target:
        return arr.copy()
    wr = interp_matrix(h, target, dtype=arr.dtype)
    wc = interp_matrix(w, target, dtype=arr.dtype)
    tmp = np.tensordot(arr, wr, axes=([1], [1])).transpose(0, 2, 1)
    return np.tensordot(tmp, wc, axes=([2], [1]))


def resize_nearest(plane: np.ndarray, target_hw: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize of (C, H, W); used to map masks between resolutions."""
    c, h, w = plane.shape
    th, tw = target_hw

    def indices(src: int, dst: int) -> np.ndarray:
        if dst == 1 or src == 1:
            return np.zeros(dst, dtype=np.int64)
        return np.rint(np.arange(dst) * ((src - 1) / (dst - 1))).astype(np.int64)

    return plane[:, indices(h, th)[:, None], indices(w, tw)[None, :]]


@dataclass
class PreprocessedPair:
    """Aligned, fixed-size crops of a before/after pair plus the shared box."""

    before: np.ndarray
    after: np.ndarray
    bbox: SquareBBox


def preprocess_pair(before, after, model: UNetModel, target: int = 224) -> PreprocessedPair | None:
    """Segment both images, crop both with one shared box, resize to target.

    Masks are inferred at the segmenter's input resolution and mapped back
    to source coordinates with nearest-neighbor sampling. Returns None when
    neither image shows any foreground.
    """
    b = before.data if isinstance(before, Tensor) else np.asarray(before)
    a = after.data if isinstance(after, Tensor) else np.asarray(after)
    if b.shape != a.shape:
        raise ValueError(f"before/after shapes disagree: {b.shape} vs {a.shape}")
    if b.ndim != 3 or b.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) images, got {b.shape}")
    s = model.config.input_size
    stack = np.stack([
        resize_bilinear(b, s),
        resize_bilinear(a, s),
    ]).astype(model.dtype)
    probs = unet_forward(model, stack)
    masks = binarize(probs.data)
    union_small = np.maximum(masks[0], masks[1])
    union = resize_nearest(union_small, b.shape[1:])
    bbox = min_square_bbox(union)
    if bbox is None:
        return None
    return PreprocessedPair(
        before=resize_bilinear(crop(b, bbox), target),
        after=resize_bilinear(crop(a, bbox), target),
        bbox=bbox,
    )
