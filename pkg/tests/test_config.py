"""
Unit tests for configuration parsing and validation.
"""
import json
import os
import shutil
import sys
import tempfile
import unittest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core.exceptions import ConfigError
from data.config import (BinarizeLayerSpec, CodeLayerSpec, PoolLayerSpec,
                         SpectralLayerSpec, config_from_dict, dump_config,
                         load_config, load_default_settings, parse_config)

CONFIG_DIR = os.path.join(os.path.dirname(__file__), '..', 'configs')


def spectral(n_eig=4, affinity="knn:5", solver="lanczos", **patch):
    patch_data = {"h": 3, "w": 3}
    patch_data.update(patch)
    return {"type": "spectral", "patch": patch_data,
            "procedures": [{"affinity": affinity, "laplacian": "sym",
                            "solver": solver, "n_eig": n_eig}]}


def minimal(layers=None, **extra):
    data = {"layers": layers if layers is not None else [spectral()],
            "kmeans": {"k": 3}}
    data.update(extra)
    return data


class TestShippedConfigs(unittest.TestCase):
    """Test cases for the configurations under configs/."""

    def test_mnist_feature_length(self):
        for name in ('sanet2_mnist.json', 'sanet2_mnist_pooled.json'):
            cfg = load_config(os.path.join(CONFIG_DIR, name))
            self.assertEqual(cfg.feature_length(), 72, name)
            self.assertEqual(cfg.predicted_shapes()[0], (6, 6, 512))

    def test_mnist_layer_order(self):
        cfg = load_config(os.path.join(CONFIG_DIR, 'sanet2_mnist_pooled.json'))
        kinds = [type(layer) for layer in cfg.layers]
        self.assertEqual(kinds, [SpectralLayerSpec, SpectralLayerSpec, PoolLayerSpec,
                                 BinarizeLayerSpec, CodeLayerSpec])
        self.assertTrue(cfg.layers[0].patch.normalize)
        self.assertFalse(cfg.layers[1].patch.normalize)
        self.assertEqual(cfg.kmeans.k, 10)

    def test_every_config_validates(self):
        for name in sorted(os.listdir(CONFIG_DIR)):
            if name.endswith('.json'):
                cfg = load_config(os.path.join(CONFIG_DIR, name))
                self.assertGreater(cfg.feature_length(), 0, name)

    def test_eps_radius_covers_mst(self):
        # below one MST edge an eps graph can leave nodes isolated
        for name in sorted(os.listdir(CONFIG_DIR)):
            if not name.endswith('.json'):
                continue
            cfg = load_config(os.path.join(CONFIG_DIR, name))
            for _, layer in cfg.spectral_layers():
                for proc in layer.procedures:
                    if proc.affinity == 'eps':
                        self.assertGreaterEqual(proc.param, 1.0, name)

    def test_base_dir_is_config_directory(self):
        cfg = load_config(os.path.join(CONFIG_DIR, 'two_rings.json'))
        self.assertEqual(cfg.base_dir, os.path.abspath(CONFIG_DIR))


class TestDefaults(unittest.TestCase):
    """Test cases for defaults applied while parsing."""

    def test_defaults(self):
        cfg = config_from_dict(minimal(layers=[spectral(), spectral(), {"type": "pool"}]))
        defaults = load_default_settings()

        self.assertEqual(cfg.seed, defaults['seed'])
        self.assertEqual(cfg.n_iter, defaults['n_iter'])
        self.assertEqual(cfg.kmeans.restarts, defaults['kmeans_restarts'])
        self.assertTrue(cfg.layers[0].patch.normalize)
        self.assertFalse(cfg.layers[1].patch.normalize)
        self.assertTrue(cfg.layers[0].require_connected)
        self.assertEqual(cfg.layers[2].grid, 2)
        self.assertEqual(cfg.layers[2].stride, 2)

    def test_procedure_defaults(self):
        data = minimal()
        data['layers'][0]['procedures'] = [{"affinity": "knn:9", "n_eig": 8}]
        proc = config_from_dict(data).layers[0].procedures[0]
        self.assertEqual((proc.affinity, proc.param, proc.laplacian, proc.solver),
                         ('knn', 9.0, 'sym', 'lanczos'))

    def test_channels_sum_procedures(self):
        layer = spectral()
        layer['procedures'].append({"affinity": "full:0.5", "solver": "nystrom", "n_eig": 6})
        cfg = config_from_dict(minimal(layers=[layer]))
        self.assertEqual(cfg.layers[0].channels, 10)

    def test_shapes_without_input_shape(self):
        cfg = config_from_dict(minimal())
        with self.assertRaises(ConfigError):
            cfg.predicted_shapes()
        self.assertEqual(cfg.predicted_shapes((8, 8, 1)), [(8, 8, 4)])


class TestValidation(unittest.TestCase):
    """Test cases for rejected configurations and their error paths."""

    def assertConfigError(self, data, path):
        with self.assertRaises(ConfigError) as ctx:
            config_from_dict(data)
        self.assertEqual(ctx.exception.path, path)
        return ctx.exception

    def test_empty_layers(self):
        self.assertConfigError(minimal(layers=[]), "layers")

    def test_first_layer_must_be_spectral(self):
        self.assertConfigError(minimal(layers=[{"type": "pool"}]), "layers[0].type")

    def test_code_before_binarize(self):
        error = self.assertConfigError(
            minimal(layers=[spectral(), {"type": "code"}]), "layers[1].type")
        self.assertIn("binarize", str(error))
        self.assertTrue(str(error).startswith("layers[1].type: "))

    def test_layers_after_binarize(self):
        for follower in (spectral(), {"type": "pool"}):
            layers = [spectral(), {"type": "binarize"}, follower]
            cfg = config_from_dict(minimal(layers=layers))
            self.assertEqual(len(cfg.layers), 3)

    def test_binarize_twice(self):
        layers = [spectral(), {"type": "binarize"}, {"type": "binarize"}]
        self.assertConfigError(minimal(layers=layers), "layers[2].type")

    def test_binarize_after_code(self):
        layers = [spectral(), {"type": "binarize"}, {"type": "code"}, {"type": "binarize"}]
        self.assertConfigError(minimal(layers=layers), "layers[3].type")

    def test_single_code_layer(self):
        layers = [spectral(), {"type": "binarize"}, {"type": "code"}, {"type": "code"}]
        self.assertConfigError(minimal(layers=layers), "layers[3].type")

    def test_unknown_layer_type(self):
        self.assertConfigError(minimal(layers=[spectral(), {"type": "dropout"}]),
                               "layers[1].type")

    def test_normalize_only_first_layer(self):
        layers = [spectral(), spectral(normalize=True)]
        self.assertConfigError(minimal(layers=layers), "layers[1].patch.normalize")

    def test_bad_affinity(self):
        self.assertConfigError(minimal(layers=[spectral(affinity="cosine:1")]),
                               "layers[0].procedures[0].affinity")

    def test_solver_mismatch(self):
        self.assertConfigError(minimal(layers=[spectral(affinity="full:0.5")]),
                               "layers[0].procedures[0].solver")

    def test_non_integer_n_eig(self):
        self.assertConfigError(minimal(layers=[spectral(n_eig=2.5)]),
                               "layers[0].procedures[0].n_eig")

    def test_patch_larger_than_input(self):
        data = minimal(layers=[spectral(h=5, w=5, pad=False)], input_shape=[3, 3, 1])
        self.assertConfigError(data, "layers[0].patch")

    def test_second_layer_patch_too_large(self):
        layers = [spectral(h=3, w=3, stride=3), spectral(h=4, w=4, pad=False)]
        error = self.assertConfigError(minimal(layers=layers, input_shape=[9, 9, 1]),
                                       "layers[1].patch")
        self.assertIn("layer 0", str(error))

    def test_missing_k(self):
        data = minimal()
        data['kmeans'] = {}
        self.assertConfigError(data, "kmeans")

    def test_negative_tol(self):
        self.assertConfigError(minimal(solver={"tol": -1.0}), "solver.tol")

    def test_bool_is_not_an_integer(self):
        self.assertConfigError(minimal(seed=True), "seed")

    def test_unknown_dataset_format(self):
        self.assertConfigError(minimal(dataset={"format": "hdf5"}), "dataset.format")

    def test_malformed_json(self):
        with self.assertRaises(ConfigError) as ctx:
            parse_config('{"layers": [')
        self.assertIn("malformed JSON", str(ctx.exception))


class TestConfigFiles(unittest.TestCase):
    """Test cases for reading and writing configuration files."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def test_dump_then_parse(self):
        data = minimal(layers=[spectral(), {"type": "pool", "grid": 3, "stride": 1},
                               {"type": "binarize"}, {"type": "code", "group": 4}],
                       seed=7, input_shape=[12, 12, 1], subset={"per_class": 5},
                       dataset={"format": "synthetic", "name": "two_blobs"})
        cfg = config_from_dict(data)

        again = parse_config(dump_config(cfg))

        self.assertEqual(again.to_dict(), cfg.to_dict())
        self.assertEqual(again.feature_length(), cfg.feature_length())

    def test_load_from_disk(self):
        path = os.path.join(self.temp_dir, 'run.json')
        with open(path, 'w') as f:
            json.dump(minimal(name="disk"), f)

        cfg = load_config(path)

        self.assertEqual(cfg.name, "disk")
        self.assertEqual(cfg.base_dir, os.path.abspath(self.temp_dir))

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            load_config(os.path.join(self.temp_dir, 'absent.json'))


if __name__ == '__main__':
    unittest.main()
