"""
Utility functions for random streams, image decoding and distances.
"""
import os
import time
import zlib
import logging
from contextlib import contextmanager
from typing import Dict, Iterator, Optional, Tuple

import numpy as np
from PIL import Image
from scipy.spatial.distance import cdist

from core.exceptions import ConsistencyError, FormatError, ParameterError

logger = logging.getLogger(__name__)

# Rows per block when evaluating pairwise distances
DISTANCE_BLOCK_ROWS = 1024

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def derive_rng(seed: int, path: str) -> np.random.Generator:
    """
    Counter-based generator keyed by the master seed and a path id.

    Args:
        seed: Master seed of the run
        path: Textual id of the consumer, e.g. "layer1/proc3"

    Returns:
        Independent numpy Generator for that consumer
    """
    key = zlib.crc32(path.encode('utf-8'))
    sequence = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, key])
    return np.random.Generator(np.random.Philox(sequence))


def as_points(points, min_rows: int = 0) -> np.ndarray:
    """Validate an N x d point array and return it as float64."""
    array = np.asarray(points, dtype=np.float64)
    if array.ndim == 1:
        array = array[:, None]
    if array.ndim != 2:
        raise ConsistencyError(f"points must be N x d, got shape {array.shape}")
    if array.shape[0] < min_rows:
        raise ParameterError(
            f"at least {min_rows} points required, got {array.shape[0]}")
    if not np.all(np.isfinite(array)):
        raise ConsistencyError("points contain non-finite values")
    return array


def row_blocks(n: int, block: int = DISTANCE_BLOCK_ROWS) -> Iterator[Tuple[int, int]]:
    """Yield (start, stop) row ranges covering 0..n."""
    for start in range(0, n, block):
        yield start, min(start + block, n)


def squared_distances(a: np.ndarray, b: Optional[np.ndarray] = None) -> np.ndarray:
    """Squared Euclidean distances between the rows of a and b."""
    other = a if b is None else b
    return cdist(a, other, metric='sqeuclidean')


def max_pairwise_distance(points: np.ndarray) -> float:
    """Largest Euclidean distance between any two rows, blockwise."""
    best = 0.0
    for start, stop in row_blocks(points.shape[0]):
        block = squared_distances(points[start:stop], points)
        best = max(best, float(block.max(initial=0.0)))
    return float(np.sqrt(best))


def load_image_file(path: str, channels: int) -> np.ndarray:
    """
    Decode an image file into an H x W x C array scaled to [0, 1].

    Args:
        path: PNG/PGM/BMP file
        channels: 1 for grayscale (luma weights), 3 for RGB

    Returns:
        float64 array of shape (H, W, channels)
    """
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            if mode in ('1', 'L', 'P', 'RGB', 'RGBA', 'LA'):
                rgb = np.asarray(img.convert('RGB'), dtype=np.float64) / 255.0
                gray_native = mode in ('1', 'L', 'LA')
                native = (np.asarray(img.convert('L'), dtype=np.float64) / 255.0
                          if gray_native else None)
            elif mode in ('I;16', 'I;16B', 'I;16L', 'I'):
                # 16-bit PGM
                raw = np.asarray(img, dtype=np.float64)
                native = raw / 65535.0
                rgb = np.repeat(native[:, :, None], 3, axis=2)
            else:
                rgb = np.asarray(img.convert('RGB'), dtype=np.float64) / 255.0
                native = None
    except (OSError, ValueError) as e:
        raise FormatError(f"cannot decode {path}: {e}", failures=[(path, str(e))])

    if channels == 3:
        return rgb
    if channels == 1:
        if native is not None:
            return native[:, :, None]
        return np.clip(rgb @ LUMA_WEIGHTS, 0.0, 1.0)[:, :, None]
    raise ParameterError(f"channels must be 1 or 3, got {channels}")


@contextmanager
def stage_timer(timings: Dict[str, float], name: str):
    """Record the wall time of a block under timings[name]."""
    start = time.perf_counter()
    try:
        yield
    finally:
        timings[name] = timings.get(name, 0.0) + max(time.perf_counter() - start, 0.0)
        logger.debug("stage %s took %.3fs", name, timings[name])


def ensure_directory_exists(directory_path: str) -> bool:
    """Ensure that a directory exists, create if it doesn't."""
    if not directory_path:
        return True
    try:
        os.makedirs(directory_path, exist_ok=True)
        return True
    except OSError as e:
        logger.error("cannot create directory %s: %s", directory_path, e)
        return False
