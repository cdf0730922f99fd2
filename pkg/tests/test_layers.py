"""
Unit tests for SA-Net layers: spectral analysis, pooling, binarization and coding.
"""
import os
import sys

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core.exceptions import ConnectivityError, LayerError, ParameterError
from core.layers import binarize, code, coding_order, pool, procedure_stream, spectral_layer
from core.patches import normalize_patches, sample_patches
from data.models import BinaryMaps, ChannelLineage, FeatureMaps, ProcedureSpec


def maps_of(values, eigenvalues=None):
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        values = values[:, :, None]
    channels = values.shape[2]
    eigenvalues = list(range(channels)) if eigenvalues is None else eigenvalues
    return FeatureMaps(values, [ChannelLineage(0, r, float(v)) for r, v in enumerate(eigenvalues)])


def bits_of(bits, eigenvalues=None):
    bits = np.asarray(bits, dtype=np.uint8)
    channels = bits.shape[2]
    eigenvalues = list(range(channels)) if eigenvalues is None else eigenvalues
    return BinaryMaps(bits, [ChannelLineage(0, r, float(v)) for r, v in enumerate(eigenvalues)])


def point_grids(points):
    """One 1x1 patch grid per point."""
    return [sample_patches(np.asarray(p, dtype=float).reshape(1, 1, -1), 1, 1, 1)
            for p in points]


@pytest.mark.unit
class TestSpectralLayer:
    """Test cases for parallel spectral procedures."""

    def test_stream_names(self):
        spec = ProcedureSpec('knn', 9, 'rw', 'lanczos', 16)
        assert procedure_stream(2, spec) == "layer2/knn:9/rw/lanczos/16"

    def test_identical_procedures_give_identical_blocks(self):
        points = np.random.default_rng(0).random((20, 2))
        spec = ProcedureSpec('full', 0.5, 'sym', 'dense', 3)

        outputs = spectral_layer(point_grids(points), [spec, spec], seed=1)

        assert outputs[0].shape == (1, 1, 6)
        for maps in outputs:
            np.testing.assert_array_equal(maps.values[:, :, :3], maps.values[:, :, 3:])
        assert [c.procedure for c in outputs[0].channel_lineage] == [0, 0, 0, 1, 1, 1]

    def test_single_procedure_is_plain_embedding(self):
        from core.eigensolver import embed_graph
        from core.affinity import build_affinity
        from data.models import SolverBudget

        points = np.random.default_rng(2).random((15, 3))
        spec = ProcedureSpec('knn', 4, 'sym', 'dense', 3)

        outputs = spectral_layer(point_grids(points), [spec], seed=0, require_connected=False)

        budget = SolverBudget(n_eig=3, stream=procedure_stream(1, spec))
        direct = embed_graph(build_affinity(points, 'knn', 4), 'sym', 'dense', budget)
        stacked = np.stack([m.values[0, 0] for m in outputs])
        np.testing.assert_allclose(stacked, direct.rows, atol=1e-12)

    def test_mnist_layer_shape(self):
        rng = np.random.default_rng(4)
        grids = [normalize_patches(sample_patches(rng.random((28, 28)), 11, 11, 5))
                 for _ in range(2)]
        procs = [ProcedureSpec('knn', k, 'sym', 'dense', 64) for k in (5, 9, 17, 21)]
        procs += [ProcedureSpec('full', s, 'sym', 'dense', 64) for s in (1.0, 2.0)]
        procs += [ProcedureSpec('selftune', 7, 'sym', 'dense', 64),
                  ProcedureSpec('eps', 2, 'sym', 'dense', 64)]
        diagnostics = []

        outputs = spectral_layer(grids, procs, seed=0, require_connected=False,
                                 diagnostics=diagnostics)

        assert [m.shape for m in outputs] == [(6, 6, 512)] * 2
        assert len(diagnostics) == 8
        assert diagnostics[7]['procedure'] == 7

    def test_mst_radius_keeps_sparse_stroke_patches_connected(self):
        rng = np.random.default_rng(8)
        grids = []
        for _ in range(20):
            image = np.zeros((28, 28))
            image[rng.integers(4, 24), 4:24] = 1.0
            image[4:24, rng.integers(4, 24)] = 1.0
            grids.append(normalize_patches(sample_patches(image, 11, 11, 5)))
        procs = [ProcedureSpec('eps', m, 'sym', 'dense', 8) for m in (1.0, 1.5, 2.0)]

        outputs = spectral_layer(grids, procs, seed=0, require_connected=False)

        assert [m.shape for m in outputs] == [(6, 6, 24)] * 20

    def test_disconnected_graph_is_reported_with_layer(self):
        offsets = 0.01 * np.arange(6)
        points = np.vstack([np.column_stack([np.zeros(6), offsets]),
                            np.column_stack([np.full(6, 5.0), 5.0 + offsets])])
        spec = ProcedureSpec('knn', 2, 'sym', 'lanczos', 2)

        with pytest.raises(LayerError) as excinfo:
            spectral_layer(point_grids(points), [spec], seed=0, layer=3)

        assert excinfo.value.layer == 3
        assert excinfo.value.procedure == 0
        assert isinstance(excinfo.value.cause, ConnectivityError)

    def test_no_procedures(self):
        with pytest.raises(ParameterError):
            spectral_layer(point_grids(np.zeros((3, 2))), [], seed=0)


@pytest.mark.unit
class TestPool:

    def test_keeps_sign_of_largest_magnitude(self):
        result = pool(maps_of([[1, -3], [2, 0]]), grid=2)
        assert result.shape == (1, 1, 1)
        assert result.values[0, 0, 0] == -3

    def test_tie_goes_to_first_in_row_major_order(self):
        result = pool(maps_of([[1, -1], [1, -1]]), grid=2)
        assert result.values[0, 0, 0] == 1

    def test_unit_grid_is_identity(self):
        values = np.random.default_rng(0).standard_normal((5, 4, 3))
        result = pool(maps_of(values), grid=1, stride=1)
        np.testing.assert_array_equal(result.values, values)

    def test_padded_border_and_lineage(self):
        values = np.random.default_rng(1).standard_normal((3, 5, 2))
        maps = maps_of(values, eigenvalues=[0.1, 0.2])

        result = pool(maps, grid=2)

        assert result.shape == (2, 3, 2)
        assert result.channel_lineage == maps.channel_lineage
        assert result.values[1, 2, 0] == values[2, 4, 0]

    def test_never_grows_magnitude(self):
        values = np.random.default_rng(2).standard_normal((6, 6, 4))
        result = pool(maps_of(values), grid=3, stride=1)
        assert np.all(np.abs(result.values).max(axis=(0, 1)) <= np.abs(values).max(axis=(0, 1)))

    def test_binary_maps_stay_binary(self):
        bits = np.array([[[0, 1], [0, 0]], [[1, 0], [0, 0]]], dtype=np.uint8)
        maps = BinaryMaps(bits, [ChannelLineage(0, r, float(r)) for r in range(2)])

        result = pool(maps, grid=2)

        assert isinstance(result, BinaryMaps)
        np.testing.assert_array_equal(result.bits, [[[1, 1]]])

    def test_binary_maps_feed_patch_sampling(self):
        bits = np.random.default_rng(3).integers(0, 2, (4, 4, 2)).astype(np.uint8)
        maps = BinaryMaps(bits, [ChannelLineage(0, r, float(r)) for r in range(2)])

        grid = sample_patches(maps, 2, 2, 2, pad=False)

        assert (grid.rows, grid.cols, grid.patch_c) == (2, 2, 2)
        np.testing.assert_array_equal(grid.patches[0], bits[:2, :2].reshape(-1))

    def test_overlapping_windows(self):
        result = pool(maps_of(np.zeros((4, 4))), grid=3, stride=1)
        assert result.shape == (4, 4, 1)

    def test_invalid_grid(self):
        with pytest.raises(ParameterError):
            pool(maps_of(np.zeros((2, 2))), grid=0)


@pytest.mark.unit
class TestBinarizeAndCode:

    def test_strictly_positive_threshold(self):
        result = binarize(maps_of(np.array([[[0.3, -0.2, 0.0]]]), [0, 1, 2]))
        np.testing.assert_array_equal(result.bits[0, 0], [1, 0, 0])

    def test_binarize_is_idempotent(self):
        values = np.random.default_rng(0).standard_normal((3, 3, 4))
        once = binarize(maps_of(values))
        twice = binarize(once)
        np.testing.assert_array_equal(once.bits, twice.bits)
        assert binarize(maps_of(np.ones((2, 2, 1)))).bits.min() == 1

    def test_code_example(self):
        maps = bits_of(np.array([[[1, 0, 1, 1, 0, 0, 1, 0]]]))

        result = code(maps, group=8)

        assert result.shape == (1, 1, 1)
        assert result.values[0, 0, 0] == 178

    def test_unit_group_is_identity(self):
        bits = np.random.default_rng(3).integers(0, 2, size=(3, 3, 5))

        result = code(bits_of(bits), group=1)

        np.testing.assert_array_equal(result.values, bits.astype(float))

    def test_mnist_second_layer_length(self):
        bits = np.random.default_rng(4).integers(0, 2, size=(3, 3, 64))

        result = code(bits_of(bits), group=8)

        assert result.shape == (3, 3, 8)
        assert result.values.size == 72

    def test_short_last_group_uses_high_weights(self):
        result = code(bits_of(np.ones((1, 1, 10))), group=8)
        assert result.values[0, 0].tolist() == [255, 192]

    def test_channel_permutation_invariance(self):
        rng = np.random.default_rng(5)
        bits = rng.integers(0, 2, size=(2, 2, 16))
        eigenvalues = rng.random(16)
        perm = rng.permutation(16)

        original = code(bits_of(bits, eigenvalues), group=8)
        permuted = code(bits_of(bits[:, :, perm], eigenvalues[perm]), group=8)

        np.testing.assert_array_equal(original.values, permuted.values)

    def test_decoding_recovers_sorted_bits(self):
        rng = np.random.default_rng(6)
        eigenvalues = rng.random(8)
        maps = bits_of(rng.integers(0, 2, size=(4, 4, 8)), eigenvalues)

        coded = code(maps, group=8).values[:, :, 0].astype(int)
        order = coding_order(maps)

        assert coded.min() >= 0 and coded.max() <= 255
        for j, channel in enumerate(order):
            np.testing.assert_array_equal((coded >> (7 - j)) & 1, maps.bits[:, :, channel])

    def test_order_breaks_ties_by_procedure_then_rank(self):
        lineage = [ChannelLineage(1, 0, 0.0), ChannelLineage(0, 1, 0.0), ChannelLineage(0, 0, 0.5)]
        maps = BinaryMaps(np.zeros((1, 1, 3)), lineage)
        assert coding_order(maps) == [1, 0, 2]

    def test_invalid_group(self):
        with pytest.raises(ParameterError):
            code(bits_of(np.zeros((1, 1, 2))), group=0)
