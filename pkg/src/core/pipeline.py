"""
Pipeline orchestration: layer execution, final k-means, metrics and the
ablation / procedure-count harness.
"""
import copy
import logging
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from core import __version__
from core.clustering import kmeans
from core.exceptions import (ConfigError, ConsistencyError, LayerError,
                             ParameterError, SANetError)
from core.layers import binarize, code, pool, spectral_layer
from core.metrics import METRIC_VARIANTS, evaluate
from core.patches import normalize_patches, sample_patches
from core.utils import stage_timer
from data.config import (BinarizeLayerSpec, CodeLayerSpec, PipelineConfig,
                         PoolLayerSpec, SpectralLayerSpec)
from data.models import BinaryMaps, FeatureMaps, LabeledDataset, RunReport

logger = logging.getLogger(__name__)

LAYER_ABBREVIATIONS = {'spectral': 'SAL', 'pool': 'PL', 'binarize': 'BL', 'code': 'CL'}


def _maps_vector(maps) -> np.ndarray:
    if isinstance(maps, BinaryMaps):
        return maps.bits.reshape(-1).astype(np.float64)
    return maps.flatten()


def _run_layer(index: int, layer, sources: list, cfg: PipelineConfig, n_jobs: int,
               diagnostics: List[Dict]) -> list:
    if isinstance(layer, SpectralLayerSpec):
        patch = layer.patch
        grids = []
        for src in sources:
            grid = sample_patches(src, patch.h, patch.w, patch.stride, patch.pad)
            grids.append(normalize_patches(grid) if patch.normalize else grid)
        return spectral_layer(grids, layer.procedures, cfg.seed, layer=index,
                              require_connected=layer.require_connected,
                              n_iter=cfg.n_iter, tol=cfg.tol, n_jobs=n_jobs,
                              diagnostics=diagnostics)
    if isinstance(layer, PoolLayerSpec):
        return [pool(m, layer.grid, layer.stride) for m in sources]
    if isinstance(layer, BinarizeLayerSpec):
        return [binarize(m) for m in sources]
    if isinstance(layer, CodeLayerSpec):
        return [code(m, layer.group) for m in sources]
    raise ParameterError(f"unknown layer {layer!r}")


def run_layers(cfg: PipelineConfig, data: LabeledDataset, upto: Optional[int] = None,
               n_jobs: int = 1, diagnostics: Optional[List[Dict]] = None,
               timings: Optional[Dict[str, float]] = None) -> Tuple[list, List[List[int]]]:
    """
    Execute layers 1..upto (all by default).

    Returns:
        (per-image outputs of the last executed layer, output shapes)
    """
    if len(data) == 0:
        raise ConsistencyError("dataset is empty")
    if cfg.input_shape is not None and tuple(cfg.input_shape) != tuple(data.image_shape):
        raise ConfigError(
            f"config expects images of {tuple(cfg.input_shape)}, dataset has "
            f"{tuple(data.image_shape)}", "input_shape")
    cfg.predicted_shapes(data.image_shape)

    upto = len(cfg.layers) if upto is None else upto
    if not 1 <= upto <= len(cfg.layers):
        raise ParameterError(f"layer must be in [1, {len(cfg.layers)}], got {upto}")
    diagnostics = [] if diagnostics is None else diagnostics
    timings = {} if timings is None else timings

    sources = list(data.images)
    shapes = []
    for i, layer in enumerate(cfg.layers[:upto], start=1):
        with stage_timer(timings, f"layer{i}:{layer.type}"):
            try:
                sources = _run_layer(i, layer, sources, cfg, n_jobs, diagnostics)
            except LayerError:
                raise
            except SANetError as e:
                raise LayerError(i, e) from e
        shapes.append(list(sources[0].shape))
        logger.info("layer %d (%s): output %s", i, layer.type, shapes[-1])
    return sources, shapes


def layer_features(cfg: PipelineConfig, data: LabeledDataset, layer: int,
                   n_jobs: int = 1) -> np.ndarray:
    """Flattened per-image outputs of one layer (1-based)."""
    outputs, _ = run_layers(cfg, data, upto=layer, n_jobs=n_jobs)
    return np.stack([_maps_vector(m) for m in outputs])


def run_pipeline(cfg: PipelineConfig, data: LabeledDataset, n_jobs: int = 1) -> RunReport:
    """
    Run every layer, cluster the flattened final maps and score the result.

    Args:
        cfg: Validated configuration
        data: Nonempty dataset
        n_jobs: Concurrency for procedures and k-means restarts; never
            changes the result

    Returns:
        RunReport
    """
    timings: Dict[str, float] = {}
    diagnostics: List[Dict] = []
    outputs, shapes = run_layers(cfg, data, n_jobs=n_jobs,
                                 diagnostics=diagnostics, timings=timings)
    features = np.stack([_maps_vector(m) for m in outputs])

    if cfg.kmeans.k > features.shape[0]:
        raise ConfigError(
            f"k={cfg.kmeans.k} exceeds the {features.shape[0]} images", "kmeans.k")
    with stage_timer(timings, "kmeans"):
        result = kmeans(features, cfg.kmeans.k, restarts=cfg.kmeans.restarts,
                        seed=cfg.seed, n_jobs=n_jobs)

    metrics = None
    warnings = [w for record in diagnostics for w in record['warnings']]
    if data.labels is not None:
        with stage_timer(timings, "metrics"):
            metrics = evaluate(data.label_array(), result.labels, features)
        if metrics['ch'] is None:
            warnings.append("ch score undefined for the predicted clustering")

    return RunReport(
        config=cfg.to_dict(),
        seed=cfg.seed,
        version=__version__,
        n_images=len(data),
        layer_shapes=shapes,
        feature_length=int(features.shape[1]),
        labels=[int(v) for v in result.labels],
        metrics=metrics,
        metric_variants=dict(METRIC_VARIANTS) if metrics is not None else {},
        inertia=float(result.inertia),
        timings=timings,
        residuals=diagnostics,
        warnings=warnings,
    )


def ablation_variants(cfg: PipelineConfig) -> List[Tuple[str, PipelineConfig]]:
    """
    Truncations of a config after its last spectral layer, shortest first,
    e.g. SAL, +PL, +PL+BL, +PL+BL+CL.
    """
    last_spectral = max(i for i, _ in cfg.spectral_layers())
    variants = []
    for end in range(last_spectral, len(cfg.layers)):
        layers = copy.deepcopy(cfg.layers[:end + 1])
        tail = [LAYER_ABBREVIATIONS[layer.type] for layer in cfg.layers[last_spectral + 1:end + 1]]
        name = "SAL" + "".join(f"+{abbr}" for abbr in tail)
        variants.append((name, replace(cfg, layers=layers)))
    return variants


def with_procedure_prefix(cfg: PipelineConfig, m: int, layer: int = 0) -> PipelineConfig:
    """Keep only the first m procedures of the given spectral layer (0-based)."""
    spectral = cfg.spectral_layers()
    if not 0 <= layer < len(spectral):
        raise ConfigError(f"no spectral layer {layer}; config has {len(spectral)}",
                          "procedures_prefix")
    index, spec = spectral[layer]
    if not 1 <= m <= len(spec.procedures):
        raise ConfigError(
            f"prefix {m} outside 1..{len(spec.procedures)}",
            f"layers[{index}].procedures")
    layers = copy.deepcopy(cfg.layers)
    layers[index].procedures = layers[index].procedures[:m]
    trimmed = replace(cfg, layers=layers)
    if trimmed.input_shape is not None:
        trimmed.predicted_shapes()
    return trimmed


def run_ablation(cfg: PipelineConfig, data: LabeledDataset,
                 n_jobs: int = 1) -> List[Tuple[str, RunReport]]:
    return [(name, run_pipeline(variant, data, n_jobs)) for name, variant in ablation_variants(cfg)]
