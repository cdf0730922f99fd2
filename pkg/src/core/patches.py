"""
Dense patch sampling from images and feature maps.
"""
import logging
from typing import List, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from core.exceptions import ConsistencyError, GeometryError, ParameterError
from data.models import (BinaryMaps, ChannelLineage, FeatureMaps, ImageTensor, PatchGrid,
                         SpectralEmbedding)

logger = logging.getLogger(__name__)

Source = Union[ImageTensor, FeatureMaps, BinaryMaps, np.ndarray]


def _source_array(src: Source) -> np.ndarray:
    if isinstance(src, ImageTensor):
        return src.data
    if isinstance(src, FeatureMaps):
        return src.values
    if isinstance(src, BinaryMaps):
        return src.bits.astype(np.float64)
    array = np.asarray(src, dtype=np.float64)
    if array.ndim == 2:
        array = array[:, :, None]
    return array


def grid_size(extent: int, patch: int, stride: int, pad: bool) -> int:
    """Number of patch positions along one axis."""
    if pad:
        return -(-extent // stride)
    if patch > extent:
        raise GeometryError(
            f"patch of {patch} does not fit an unpadded extent of {extent}")
    return (extent - patch) // stride + 1


def _window_tops(extent: int, patch: int, stride: int, pad: bool) -> Tuple[np.ndarray, int, int]:
    """Window start offsets along one axis plus (pad_before, pad_after)."""
    count = grid_size(extent, patch, stride, pad)
    if not pad:
        return np.arange(count) * stride, 0, 0
    # Centers spread symmetrically over the extent
    offset = ((extent - 1) - (count - 1) * stride) // 2
    centers = offset + np.arange(count) * stride
    before = (patch - 1) // 2
    after = patch // 2
    # In padded coordinates a window starting at the center is centered on it
    return centers, before, after


def sample_patches(src: Source, p_h: int, p_w: int, stride: int,
                   pad: bool = True) -> PatchGrid:
    """
    Extract flattened patches on a strided grid.

    Args:
        src: Image or feature maps (H x W x C)
        p_h, p_w: Patch size
        stride: Step between patch positions
        pad: Zero-pad so that ceil(H/s) x ceil(W/s) positions cover the source

    Returns:
        PatchGrid with patches flattened in (row, col, channel) order
    """
    if p_h < 1 or p_w < 1:
        raise ParameterError(f"patch size must be >= 1, got {p_h}x{p_w}")
    if stride < 1:
        raise ParameterError(f"stride must be >= 1, got {stride}")

    array = _source_array(src)
    height, width, channels = array.shape
    row_tops, top, bottom = _window_tops(height, p_h, stride, pad)
    col_tops, left, right = _window_tops(width, p_w, stride, pad)

    padded = np.pad(array, ((top, bottom), (left, right), (0, 0)))
    if padded.shape[0] < p_h or padded.shape[1] < p_w:
        raise GeometryError(
            f"patch {p_h}x{p_w} larger than padded extent "
            f"{padded.shape[0]}x{padded.shape[1]}")

    windows = sliding_window_view(padded, (p_h, p_w), axis=(0, 1))
    picked = windows[row_tops][:, col_tops]
    # (rows, cols, C, p_h, p_w) -> (rows, cols, p_h, p_w, C)
    picked = picked.transpose(0, 1, 3, 4, 2)
    patches = np.ascontiguousarray(picked).reshape(
        len(row_tops) * len(col_tops), p_h * p_w * channels)

    return PatchGrid(rows=len(row_tops), cols=len(col_tops), patch_h=p_h,
                     patch_w=p_w, patch_c=channels, stride=stride, patches=patches)


def normalize_patches(g: PatchGrid) -> PatchGrid:
    """Subtract each patch's own mean."""
    centered = g.patches - g.patches.mean(axis=1, keepdims=True)
    return PatchGrid(rows=g.rows, cols=g.cols, patch_h=g.patch_h, patch_w=g.patch_w,
                     patch_c=g.patch_c, stride=g.stride, patches=centered)


def sample_batch(sources: Sequence[Source], p_h: int, p_w: int, stride: int,
                 pad: bool = True, normalize: bool = False) -> Tuple[int, int, np.ndarray]:
    """
    Sample every source and pool the patches into one point set.

    Returns:
        (grid_rows, grid_cols, points) with points ordered by
        (image, patch-row, patch-col)
    """
    grids = []
    for src in sources:
        grid = sample_patches(src, p_h, p_w, stride, pad)
        grids.append(normalize_patches(grid) if normalize else grid)
    if not grids:
        raise ConsistencyError("no sources to sample")
    shapes = {(g.rows, g.cols, g.patches.shape[1]) for g in grids}
    if len(shapes) > 1:
        raise ConsistencyError(f"sources produce mixed patch grids: {sorted(shapes)}")
    points = np.concatenate([g.patches for g in grids], axis=0)
    return grids[0].rows, grids[0].cols, points


def stack_embeddings(e: SpectralEmbedding, grid_rows: int, grid_cols: int,
                     images: int, procedure: int = 0) -> List[FeatureMaps]:
    """
    Regroup embedding rows into one feature map stack per image.

    Args:
        e: Embedding whose rows are ordered (image, patch-row, patch-col)
        grid_rows, grid_cols: Patch grid shape
        images: Number of images
        procedure: Procedure id recorded in the channel lineage

    Returns:
        List of grid_rows x grid_cols x n_eig FeatureMaps
    """
    per_image = grid_rows * grid_cols
    if e.n != images * per_image:
        raise ConsistencyError(
            f"embedding has {e.n} rows, expected {images} x {per_image}")
    lineage = [ChannelLineage(procedure, rank, float(value))
               for rank, value in enumerate(e.eigenvalues)]
    stacked = e.rows.reshape(images, grid_rows, grid_cols, e.n_eig)
    return [FeatureMaps(stacked[i].copy(), list(lineage)) for i in range(images)]


def unstack_maps(maps: Sequence[FeatureMaps]) -> np.ndarray:
    """Inverse of stack_embeddings: rows ordered (image, row, col)."""
    return np.concatenate([m.values.reshape(-1, m.channels) for m in maps], axis=0)


def receptive_field(p1_h: int, p1_w: int, p0_h: int, p0_w: int) -> Tuple[int, int]:
    """Image region seen by one second-layer patch (exact for unit stride)."""
    if min(p1_h, p1_w, p0_h, p0_w) < 1:
        raise ParameterError("patch sizes must be >= 1")
    return p1_h + p0_h - 1, p1_w + p0_w - 1
