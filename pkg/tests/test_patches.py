"""
Unit tests for dense patch sampling and feature map stacking.
"""
import os
import sys

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core.exceptions import ConsistencyError, GeometryError, ParameterError
from core.patches import (grid_size, normalize_patches, receptive_field, sample_batch,
                          sample_patches, stack_embeddings, unstack_maps)
from data.models import ChannelLineage, FeatureMaps, ImageTensor, PatchGrid, SpectralEmbedding


@pytest.fixture
def mnist_like_image():
    rng = np.random.default_rng(3)
    return ImageTensor(rng.random((28, 28, 1)))


@pytest.mark.unit
class TestSamplePatches:
    """Test cases for sample_patches."""

    def test_padded_mnist_grid(self, mnist_like_image):
        grid = sample_patches(mnist_like_image, 11, 11, 5, pad=True)

        assert (grid.rows, grid.cols) == (6, 6)
        assert grid.patches.shape == (36, 121)

    def test_unpadded_feature_maps(self):
        values = np.random.default_rng(0).standard_normal((6, 6, 512))
        lineage = [ChannelLineage(0, r, 0.0) for r in range(512)]

        grid = sample_patches(FeatureMaps(values, lineage), 4, 4, 1, pad=False)

        assert (grid.rows, grid.cols) == (3, 3)
        assert grid.patches.shape == (9, 4 * 4 * 512)

    def test_single_pixel_patches(self):
        data = np.random.default_rng(1).random((5, 7, 1))

        grid = sample_patches(ImageTensor(data), 1, 1, 1, pad=True)

        assert (grid.rows, grid.cols) == (5, 7)
        np.testing.assert_array_equal(grid.patches[:, 0], data.reshape(-1))

    def test_patch_layout_is_row_col_channel(self):
        data = np.arange(2 * 2 * 3, dtype=float).reshape(2, 2, 3)

        grid = sample_patches(data, 2, 2, 1, pad=False)

        np.testing.assert_array_equal(grid.patches[0], data.reshape(-1))

    def test_border_reads_zero(self):
        data = np.ones((3, 3))

        grid = sample_patches(data, 3, 3, 1, pad=True)

        # top-left patch is centered on pixel (0, 0)
        corner = grid.patches[0].reshape(3, 3)
        np.testing.assert_array_equal(corner, [[0, 0, 0], [0, 1, 1], [0, 1, 1]])
        np.testing.assert_array_equal(grid.patches[4], np.ones(9))

    def test_padded_count_sweep(self):
        for extent in range(1, 33):
            for stride in (1, 2, 3, 5, 8):
                data = np.zeros((extent, extent))
                grid = sample_patches(data, 3, 3, stride, pad=True)
                expected = -(-extent // stride)
                assert (grid.rows, grid.cols) == (expected, expected)

    def test_patch_larger_than_unpadded_extent(self):
        with pytest.raises(GeometryError):
            sample_patches(np.zeros((4, 4)), 5, 5, 1, pad=False)

    def test_invalid_sizes(self):
        with pytest.raises(ParameterError):
            sample_patches(np.zeros((4, 4)), 0, 2, 1)
        with pytest.raises(ParameterError):
            sample_patches(np.zeros((4, 4)), 2, 2, 0)

    def test_grid_size(self):
        assert grid_size(28, 11, 5, True) == 6
        assert grid_size(6, 4, 1, False) == 3
        assert grid_size(10, 3, 4, False) == 2


@pytest.mark.unit
class TestNormalizePatches:
    """Test cases for per-patch mean subtraction."""

    def _grid(self, patches):
        patches = np.asarray(patches, dtype=float)
        return PatchGrid(rows=1, cols=patches.shape[0], patch_h=1, patch_w=patches.shape[1],
                         patch_c=1, stride=1, patches=patches)

    def test_constant_patch(self):
        result = normalize_patches(self._grid([[0.5, 0.5, 0.5]]))
        np.testing.assert_array_equal(result.patches, 0.0)

    def test_two_values(self):
        result = normalize_patches(self._grid([[0.0, 1.0]]))
        np.testing.assert_allclose(result.patches, [[-0.5, 0.5]])

    def test_idempotent_zero_means(self):
        rng = np.random.default_rng(5)
        once = normalize_patches(self._grid(rng.random((10, 9))))
        twice = normalize_patches(once)

        np.testing.assert_allclose(once.patches.mean(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(twice.patches, once.patches, atol=1e-12)

    def test_sample_batch_orders_by_image(self):
        first = np.zeros((4, 4))
        second = np.ones((4, 4))

        rows, cols, points = sample_batch([first, second], 2, 2, 2, pad=False)

        assert (rows, cols) == (2, 2)
        np.testing.assert_array_equal(points[:4], 0.0)
        np.testing.assert_array_equal(points[4:], 1.0)

    def test_sample_batch_mixed_grids(self):
        with pytest.raises(ConsistencyError):
            sample_batch([np.zeros((4, 4)), np.zeros((6, 6))], 2, 2, 2, pad=True)


@pytest.mark.unit
class TestStacking:
    """Test cases for regrouping embedding rows into feature maps."""

    def _embedding(self, n, n_eig, seed=0):
        rows = np.random.default_rng(seed).standard_normal((n, n_eig))
        return SpectralEmbedding(rows=rows, eigenvalues=np.linspace(0.0, 1.0, n_eig),
                                 solver='dense')

    def test_two_images(self):
        e = self._embedding(2 * 36, 64)

        maps = stack_embeddings(e, 6, 6, 2, procedure=3)

        assert len(maps) == 2
        assert maps[1].shape == (6, 6, 64)
        np.testing.assert_array_equal(maps[1].values[0, 0], e.rows[36])
        assert maps[0].channel_lineage[5] == ChannelLineage(3, 5, e.eigenvalues[5])

    def test_single_position(self):
        e = self._embedding(1, 4)

        maps = stack_embeddings(e, 1, 1, 1)

        np.testing.assert_array_equal(maps[0].flatten(), e.rows[0])

    def test_unstack_inverts_stack(self):
        e = self._embedding(3 * 2 * 5, 3)

        maps = stack_embeddings(e, 2, 5, 3)

        np.testing.assert_array_equal(unstack_maps(maps), e.rows)

    def test_row_count_mismatch(self):
        with pytest.raises(ConsistencyError):
            stack_embeddings(self._embedding(10, 2), 3, 3, 1)


@pytest.mark.unit
class TestReceptiveField:

    def test_mnist_second_layer(self):
        assert receptive_field(4, 4, 11, 11) == (14, 14)

    def test_unit_patches(self):
        assert receptive_field(1, 1, 7, 5) == (7, 5)
        assert receptive_field(7, 5, 1, 1) == (7, 5)

    def test_invalid(self):
        with pytest.raises(ParameterError):
            receptive_field(0, 1, 1, 1)
