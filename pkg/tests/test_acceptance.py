"""
Acceptance runs of the MNIST networks on a class-balanced subset.

Skipped unless SANET_MNIST_DIR points at a directory holding
train-images-idx3-ubyte.gz and train-labels-idx1-ubyte.gz.
"""
import os
import sys
from dataclasses import replace

import pytest

# Add src to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from core.clustering import kmeans, spectral_cluster
from core.exceptions import InfiniteSeparationError
from core.metrics import accuracy, calinski_harabasz
from core.pipeline import layer_features, run_ablation, run_pipeline, with_procedure_prefix
from data.config import load_config
from data.dataset_io import load_dataset, stratified_subset
from data.models import ProcedureSpec

CONFIG_DIR = os.path.join(os.path.dirname(__file__), '..', 'configs')
MNIST_DIR = os.environ.get('SANET_MNIST_DIR')

pytestmark = [
    pytest.mark.slow,
    pytest.mark.skipif(not MNIST_DIR, reason="SANET_MNIST_DIR is not set"),
]

PER_CLASS = 20


def mnist_setup(config_name):
    cfg = load_config(os.path.join(CONFIG_DIR, config_name))
    cfg = replace(cfg, dataset={
        'format': 'idx',
        'images': os.path.join(MNIST_DIR, 'train-images-idx3-ubyte.gz'),
        'labels': os.path.join(MNIST_DIR, 'train-labels-idx1-ubyte.gz'),
    })
    data = stratified_subset(load_dataset(cfg.dataset), PER_CLASS, cfg.seed)
    return cfg, data


@pytest.mark.parametrize("config_name", ['sanet2_mnist.json', 'sanet2_mnist_pooled.json'])
def test_mnist_network(config_name):
    cfg, data = mnist_setup(config_name)

    report = run_pipeline(cfg, data, n_jobs=4)

    assert report.n_images == 10 * PER_CLASS
    assert report.feature_length == 72
    assert report.layer_shapes[0] == [6, 6, 512]
    assert set(report.labels) <= set(range(10))
    # ten balanced classes put chance at 0.1
    assert report.metrics['acc'] > 0.3


def test_mnist_separation_grows_with_depth():
    cfg, data = mnist_setup('sanet2_mnist.json')
    labels = data.label_array()

    scores = []
    for layer in (1, 2):
        try:
            scores.append(calinski_harabasz(layer_features(cfg, data, layer, n_jobs=4), labels))
        except InfiniteSeparationError:
            scores.append(float('inf'))

    assert scores[1] > scores[0]


@pytest.fixture(scope="module")
def mnist_report():
    cfg, data = mnist_setup('sanet2_mnist.json')
    return cfg, data, run_pipeline(cfg, data, n_jobs=4)


def test_mnist_beats_baselines(mnist_report):
    cfg, data, report = mnist_report
    labels = data.label_array()
    pixels = data.as_array().reshape(len(data), -1)

    raw = kmeans(pixels, 10, restarts=cfg.kmeans.restarts, seed=cfg.seed)
    one_shot = spectral_cluster(pixels, 10, ProcedureSpec('knn', 10, 'sym', 'lanczos'),
                                seed=cfg.seed, restarts=cfg.kmeans.restarts)

    assert report.metrics['acc'] >= accuracy(labels, raw.labels) + 0.05
    assert report.metrics['acc'] >= accuracy(labels, one_shot.labels) + 0.05


def test_mnist_ablation_ordering(mnist_report):
    cfg, data, report = mnist_report

    results = dict(run_ablation(cfg, data, n_jobs=4))

    assert list(results) == ['SAL', 'SAL+BL', 'SAL+BL+CL']
    assert results['SAL+BL+CL'].labels == report.labels
    assert results['SAL'].metrics['acc'] <= results['SAL+BL+CL'].metrics['acc']


def test_mnist_more_procedures(mnist_report):
    cfg, data, report = mnist_report

    single = run_pipeline(with_procedure_prefix(cfg, 1), data, n_jobs=4)

    assert len(cfg.layers[0].procedures) == 8
    assert report.metrics['acc'] >= single.metrics['acc']


def test_mnist_thread_count_does_not_change_result(mnist_report):
    cfg, data, report = mnist_report

    serial = run_pipeline(cfg, data, n_jobs=1)

    assert serial.labels == report.labels
    assert serial.without_timings() == report.without_timings()
