"""
Constructed point-cloud datasets wrapped as 1 x 1 x d images.
"""
from typing import Optional, Sequence, Tuple

import numpy as np

from core.utils import derive_rng
from data.models import ImageTensor, LabeledDataset


def points_dataset(points: np.ndarray, labels: Optional[Sequence[int]] = None,
                   name: str = "points", rescale: bool = True) -> LabeledDataset:
    """
    Wrap an N x d point cloud as N images of shape 1 x 1 x d.

    With rescale, all coordinates are mapped by one affine map into [0, 1],
    which keeps relative distances.
    """
    points = np.asarray(points, dtype=np.float64)
    if rescale and points.size:
        low, high = points.min(), points.max()
        span = high - low
        points = (points - low) / span if span > 0 else np.zeros_like(points)
    points = np.clip(points, 0.0, 1.0)
    images = [ImageTensor(row.reshape(1, 1, -1), source_index=i, dataset_id=name,
                          label=None if labels is None else int(labels[i]))
              for i, row in enumerate(points)]
    return LabeledDataset(images=images,
                          labels=None if labels is None else [int(v) for v in labels],
                          name=name)


def two_rings_points(n_per_ring: int = 100, seed: int = 0, noise: float = 0.01,
                     radii: Tuple[float, float] = (0.1, 0.4)) -> Tuple[np.ndarray, np.ndarray]:
    """Two concentric noisy rings around (0.5, 0.5)."""
    rng = derive_rng(seed, "synthetic/two_rings")
    points, labels = [], []
    for label, radius in enumerate(radii):
        angles = rng.uniform(0.0, 2.0 * np.pi, n_per_ring)
        r = radius + noise * rng.standard_normal(n_per_ring)
        points.append(np.column_stack([0.5 + r * np.cos(angles), 0.5 + r * np.sin(angles)]))
        labels.append(np.full(n_per_ring, label))
    return np.vstack(points), np.concatenate(labels)


def two_blobs_points(n_per_blob: int = 50, seed: int = 0, spread: float = 0.05,
                     centers: Tuple[Tuple[float, float], ...] = ((0.25, 0.25), (0.75, 0.75))
                     ) -> Tuple[np.ndarray, np.ndarray]:
    """Isotropic Gaussian blobs."""
    rng = derive_rng(seed, "synthetic/two_blobs")
    points = [np.asarray(c) + spread * rng.standard_normal((n_per_blob, 2)) for c in centers]
    labels = [np.full(n_per_blob, i) for i in range(len(centers))]
    return np.vstack(points), np.concatenate(labels)


def two_rings(n_per_ring: int = 100, seed: int = 0, noise: float = 0.01) -> LabeledDataset:
    points, labels = two_rings_points(n_per_ring, seed, noise)
    return points_dataset(points, labels, name="two_rings", rescale=False)


def two_blobs(n_per_blob: int = 50, seed: int = 0, spread: float = 0.05) -> LabeledDataset:
    points, labels = two_blobs_points(n_per_blob, seed, spread)
    return points_dataset(points, labels, name="two_blobs", rescale=False)


def load_synthetic(descriptor: dict) -> LabeledDataset:
    """Build the dataset named by a config descriptor."""
    name = descriptor['name']
    seed = int(descriptor.get('seed', 0))
    if name == 'two_rings':
        return two_rings(int(descriptor.get('n_per_class', 100)), seed,
                         float(descriptor.get('noise', 0.01)))
    return two_blobs(int(descriptor.get('n_per_class', 50)), seed,
                     float(descriptor.get('spread', 0.05)))
