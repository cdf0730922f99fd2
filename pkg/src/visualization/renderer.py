"""
Renderer module for exporting diagnostic figures: embedding scatters and
mosaics of typical first-layer patch patterns.
"""
import logging
import math
import os
from typing import Optional, Sequence

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from core.clustering import kmeans
from core.exceptions import ConfigError, ParameterError
from core.patches import sample_patches
from core.pipeline import run_layers
from core.utils import ensure_directory_exists
from data.config import PipelineConfig
from data.models import LabeledDataset

logger = logging.getLogger(__name__)


def project_2d(rows: np.ndarray) -> np.ndarray:
    """
    First two coordinates of the rows, or their leading principal
    components when the rows are wider than two.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ParameterError(f"expected a nonempty 2-D array, got shape {rows.shape}")
    if rows.shape[1] == 1:
        return np.column_stack([rows[:, 0], np.zeros(rows.shape[0])])
    if rows.shape[1] == 2:
        return rows.copy()
    centered = rows - rows.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return centered @ vt[:2].T


class DiagnosticRenderer:
    """Writes PNG figures for embeddings and learned patch patterns."""

    def __init__(self, dpi: int = 150):
        self.dpi = dpi

    def _save(self, fig, output_path: str) -> bool:
        try:
            ensure_directory_exists(os.path.dirname(output_path))
            fig.savefig(output_path, dpi=self.dpi)
            logger.info("figure written to %s", output_path)
            return True
        except (OSError, ValueError) as e:
            logger.error("error saving figure %s: %s", output_path, e)
            return False
        finally:
            plt.close(fig)

    def render_embedding(self, rows: np.ndarray, labels: Optional[Sequence[int]],
                         output_path: str, title: str = "") -> bool:
        """
        Scatter embedding rows in two dimensions, coloured by label.

        Args:
            rows: N x d embedding rows
            labels: Optional per-row labels
            output_path: PNG file to write
            title: Figure title

        Returns:
            True if the figure was written
        """
        xy = project_2d(rows)
        fig, ax = plt.subplots(figsize=(6, 6))
        if labels is None:
            ax.scatter(xy[:, 0], xy[:, 1], s=8, color="tab:blue")
        else:
            labels = np.asarray(labels)
            for value in np.unique(labels):
                mask = labels == value
                ax.scatter(xy[mask, 0], xy[mask, 1], s=8, label=str(value))
            ax.legend(markerscale=2, fontsize="small", loc="best")
        ax.set_xlabel("component 0")
        ax.set_ylabel("component 1")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        return self._save(fig, output_path)

    def pattern_centers(self, dataset: LabeledDataset, cfg: PipelineConfig,
                        n_centers: int = 40, n_jobs: int = 1) -> np.ndarray:
        """
        Cluster first-layer patch features and average the raw image patches
        of every cluster.

        Returns:
            n_centers x p_h x p_w x channels array of mean patches, ordered by
            cluster size (largest first)
        """
        patch = cfg.layers[0].patch
        outputs, _ = run_layers(cfg, dataset, upto=1, n_jobs=n_jobs)
        features = np.concatenate([m.values.reshape(-1, m.channels) for m in outputs])
        raw = np.concatenate([
            sample_patches(image, patch.h, patch.w, patch.stride, patch.pad).patches
            for image in dataset.images])
        if n_centers >= features.shape[0]:
            raise ConfigError(
                f"{n_centers} centers for {features.shape[0]} patches", "centers")

        result = kmeans(features, n_centers, restarts=cfg.kmeans.restarts,
                        seed=cfg.seed, n_jobs=n_jobs)
        sizes = np.bincount(result.labels, minlength=n_centers)
        channels = dataset.image_shape[2]
        means = np.zeros((n_centers, patch.h, patch.w, channels))
        for slot, cluster in enumerate(np.argsort(-sizes, kind="stable")):
            members = raw[result.labels == cluster]
            if len(members):
                means[slot] = members.mean(axis=0).reshape(patch.h, patch.w, channels)
        return means

    def render_pattern_centers(self, dataset: LabeledDataset, cfg: PipelineConfig,
                               n_centers: int, output_path: str, n_jobs: int = 1) -> bool:
        """Write a mosaic of the mean patch of each first-layer cluster."""
        means = self.pattern_centers(dataset, cfg, n_centers, n_jobs)
        grid_cols = math.ceil(math.sqrt(n_centers))
        grid_rows = math.ceil(n_centers / grid_cols)
        fig, axes = plt.subplots(grid_rows, grid_cols, squeeze=False,
                                 figsize=(1.2 * grid_cols, 1.2 * grid_rows))
        for slot, ax in enumerate(axes.flat):
            ax.axis("off")
            if slot >= n_centers:
                continue
            tile = means[slot]
            if tile.shape[2] == 1:
                ax.imshow(tile[:, :, 0], cmap="gray", vmin=0.0, vmax=1.0,
                          interpolation="nearest")
            else:
                ax.imshow(np.clip(tile, 0.0, 1.0), interpolation="nearest")
        fig.tight_layout()
        return self._save(fig, output_path)


def render_embedding(rows: np.ndarray, labels: Optional[Sequence[int]],
                     output_path: str) -> bool:
    return DiagnosticRenderer().render_embedding(rows, labels, output_path)


def render_pattern_centers(dataset: LabeledDataset, cfg: PipelineConfig,
                           n_centers: int, output_path: str) -> bool:
    return DiagnosticRenderer().render_pattern_centers(dataset, cfg, n_centers, output_path)
