"""
Pipeline configuration: JSON parsing, defaults and validation.

The grammar is documented in CONFIG_FORMAT.md.
"""
import json
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

from core.exceptions import ConfigError, GeometryError, ParameterError
from core.patches import grid_size
from data.models import ProcedureSpec

logger = logging.getLogger(__name__)

DATASET_FORMATS = ('idx', 'image_dir', 'synthetic')
LAYER_TYPES = ('spectral', 'pool', 'binarize', 'code')


def load_default_settings() -> dict:
    """Defaults applied to every configuration."""
    return {
        # Run
        "seed": 0,
        "n_iter": 1000,
        "tol": 1e-10,

        # Layers
        "pool_grid": 2,
        "code_group": 8,
        "require_connected": True,
        "patch_pad": True,

        # Final clustering
        "kmeans_restarts": 10,
    }


@dataclass
class PatchSpec:
    h: int
    w: int
    stride: int = 1
    pad: bool = True
    normalize: bool = False

    def to_dict(self) -> Dict:
        return {'h': self.h, 'w': self.w, 'stride': self.stride,
                'pad': self.pad, 'normalize': self.normalize}


@dataclass
class SpectralLayerSpec:
    patch: PatchSpec
    procedures: List[ProcedureSpec]
    require_connected: bool = True
    type: str = 'spectral'

    @property
    def channels(self) -> int:
        return sum(p.n_eig for p in self.procedures)

    def to_dict(self) -> Dict:
        return {'type': self.type, 'patch': self.patch.to_dict(),
                'require_connected': self.require_connected,
                'procedures': [p.to_dict() for p in self.procedures]}


@dataclass
class PoolLayerSpec:
    grid: int = 2
    stride: Optional[int] = None
    type: str = 'pool'

    def __post_init__(self):
        if self.stride is None:
            self.stride = self.grid

    def to_dict(self) -> Dict:
        return {'type': self.type, 'grid': self.grid, 'stride': self.stride}


@dataclass
class BinarizeLayerSpec:
    type: str = 'binarize'

    def to_dict(self) -> Dict:
        return {'type': self.type}


@dataclass
class CodeLayerSpec:
    group: int = 8
    type: str = 'code'

    def to_dict(self) -> Dict:
        return {'type': self.type, 'group': self.group}


LayerSpec = Union[SpectralLayerSpec, PoolLayerSpec, BinarizeLayerSpec, CodeLayerSpec]


@dataclass
class KMeansSpec:
    k: int
    restarts: int = 10

    def to_dict(self) -> Dict:
        return {'k': self.k, 'restarts': self.restarts}


@dataclass
class PipelineConfig:
    """Validated layer sequence plus clustering, data and seed settings."""
    layers: List[LayerSpec]
    kmeans: KMeansSpec
    seed: int = 0
    name: str = ""
    dataset: Dict = field(default_factory=dict)
    subset: Optional[Dict] = None
    input_shape: Optional[Tuple[int, int, int]] = None
    n_iter: int = 1000
    tol: float = 1e-10
    base_dir: str = ""

    def to_dict(self) -> Dict:
        """Convert to dictionary for serialization."""
        return {
            'name': self.name,
            'seed': self.seed,
            'input_shape': list(self.input_shape) if self.input_shape else None,
            'dataset': self.dataset,
            'subset': self.subset,
            'solver': {'n_iter': self.n_iter, 'tol': self.tol},
            'layers': [layer.to_dict() for layer in self.layers],
            'kmeans': self.kmeans.to_dict(),
        }

    def spectral_layers(self) -> List[Tuple[int, SpectralLayerSpec]]:
        return [(i, layer) for i, layer in enumerate(self.layers)
                if isinstance(layer, SpectralLayerSpec)]

    def predicted_shapes(self, input_shape: Optional[Tuple[int, int, int]] = None
                         ) -> List[Tuple[int, int, int]]:
        """Output (rows, cols, channels) of every layer."""
        shape = input_shape or self.input_shape
        if shape is None:
            raise ConfigError("input_shape is unknown", "input_shape")
        return _layer_shapes(self.layers, tuple(shape))

    def feature_length(self, input_shape: Optional[Tuple[int, int, int]] = None) -> int:
        rows, cols, channels = self.predicted_shapes(input_shape)[-1]
        return rows * cols * channels


def _describe(index: int, layer: LayerSpec) -> str:
    return f"layer {index} ({layer.type})"


def _layer_shapes(layers: List[LayerSpec], shape: Tuple[int, int, int]
                  ) -> List[Tuple[int, int, int]]:
    shapes = []
    rows, cols, channels = shape
    for i, layer in enumerate(layers):
        if isinstance(layer, SpectralLayerSpec):
            patch = layer.patch
            try:
                rows, cols = (grid_size(rows, patch.h, patch.stride, patch.pad),
                              grid_size(cols, patch.w, patch.stride, patch.pad))
            except GeometryError:
                source = _describe(i - 1, layers[i - 1]) if i else "the input images"
                raise ConfigError(
                    f"{_describe(i, layer)} patch {patch.h}x{patch.w} does not fit "
                    f"the {rows}x{cols} maps of {source}", f"layers[{i}].patch")
            channels = layer.channels
        elif isinstance(layer, PoolLayerSpec):
            rows, cols = -(-rows // layer.stride), -(-cols // layer.stride)
        elif isinstance(layer, CodeLayerSpec):
            channels = -(-channels // layer.group)
        shapes.append((rows, cols, channels))
    return shapes


def _require(data: Dict, key: str, path: str):
    if key not in data:
        raise ConfigError(f"missing required field '{key}'", path)
    return data[key]


def _as_int(value, path: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"expected an integer, got {value!r}", path)
    if value < minimum:
        raise ConfigError(f"must be >= {minimum}, got {value}", path)
    return int(value)


def _as_bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"expected true or false, got {value!r}", path)
    return value


def _parse_procedure(data, path: str) -> ProcedureSpec:
    if not isinstance(data, dict):
        raise ConfigError("procedure must be an object", path)
    _require(data, 'affinity', path)
    _require(data, 'n_eig', path)
    _as_int(data['n_eig'], f"{path}.n_eig")
    try:
        return ProcedureSpec.from_dict(data)
    except ParameterError as e:
        message = str(e)
        for key in ('affinity', 'laplacian', 'solver', 'n_eig'):
            if key in message:
                raise ConfigError(message, f"{path}.{key}")
        raise ConfigError(message, path)


def _parse_layer(data, index: int, defaults: dict) -> LayerSpec:
    path = f"layers[{index}]"
    if not isinstance(data, dict):
        raise ConfigError("layer must be an object", path)
    kind = _require(data, 'type', path)
    if kind not in LAYER_TYPES:
        raise ConfigError(f"unknown layer type '{kind}'", f"{path}.type")

    if kind == 'spectral':
        patch_data = _require(data, 'patch', path)
        if not isinstance(patch_data, dict):
            raise ConfigError("patch must be an object", f"{path}.patch")
        patch = PatchSpec(
            h=_as_int(_require(patch_data, 'h', f"{path}.patch"), f"{path}.patch.h"),
            w=_as_int(_require(patch_data, 'w', f"{path}.patch"), f"{path}.patch.w"),
            stride=_as_int(patch_data.get('stride', 1), f"{path}.patch.stride"),
            pad=_as_bool(patch_data.get('pad', defaults['patch_pad']), f"{path}.patch.pad"),
            normalize=_as_bool(patch_data.get('normalize', index == 0),
                               f"{path}.patch.normalize"),
        )
        if patch.normalize and index > 0:
            raise ConfigError("only first-layer image patches may be normalized",
                              f"{path}.patch.normalize")
        procedures = _require(data, 'procedures', path)
        if not isinstance(procedures, list) or not procedures:
            raise ConfigError("needs a nonempty list of procedures", f"{path}.procedures")
        return SpectralLayerSpec(
            patch=patch,
            procedures=[_parse_procedure(p, f"{path}.procedures[{t}]")
                        for t, p in enumerate(procedures)],
            require_connected=_as_bool(
                data.get('require_connected', defaults['require_connected']),
                f"{path}.require_connected"),
        )
    if kind == 'pool':
        grid = _as_int(data.get('grid', defaults['pool_grid']), f"{path}.grid")
        stride = data.get('stride')
        return PoolLayerSpec(grid=grid,
                             stride=None if stride is None else _as_int(stride, f"{path}.stride"))
    if kind == 'binarize':
        return BinarizeLayerSpec()
    return CodeLayerSpec(group=_as_int(data.get('group', defaults['code_group']),
                                       f"{path}.group"))


def _check_order(layers: List[LayerSpec]) -> None:
    if not layers:
        raise ConfigError("at least one layer is required", "layers")
    if not isinstance(layers[0], SpectralLayerSpec):
        raise ConfigError("the first layer must be spectral", "layers[0].type")
    coded = False
    for i, layer in enumerate(layers[1:], start=1):
        previous = layers[i - 1]
        if isinstance(layer, BinarizeLayerSpec) and \
                not isinstance(previous, (SpectralLayerSpec, PoolLayerSpec)):
            raise ConfigError(
                f"{_describe(i, layer)} must follow a spectral or pool layer, "
                f"not {_describe(i - 1, previous)}", f"layers[{i}].type")
        if isinstance(layer, CodeLayerSpec):
            if coded:
                raise ConfigError("only one code layer is allowed", f"layers[{i}].type")
            if not isinstance(previous, BinarizeLayerSpec):
                raise ConfigError(
                    f"{_describe(i, layer)} must follow a binarize layer, "
                    f"not {_describe(i - 1, previous)}", f"layers[{i}].type")
            coded = True


def _parse_dataset(data, path: str = "dataset") -> Dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("dataset must be an object", path)
    fmt = _require(data, 'format', path)
    if fmt not in DATASET_FORMATS:
        raise ConfigError(f"unknown dataset format '{fmt}'", f"{path}.format")
    if fmt == 'idx':
        _require(data, 'images', path)
    elif fmt == 'image_dir':
        _require(data, 'root', path)
    else:
        name = _require(data, 'name', path)
        if name not in ('two_rings', 'two_blobs'):
            raise ConfigError(f"unknown synthetic dataset '{name}'", f"{path}.name")
    return dict(data)


def config_from_dict(data: Dict, base_dir: str = "") -> PipelineConfig:
    """Validate a decoded JSON document."""
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a JSON object")
    defaults = load_default_settings()

    layers_data = data.get('layers')
    if not isinstance(layers_data, list):
        raise ConfigError("expected a list of layers", "layers")
    layers = [_parse_layer(layer, i, defaults) for i, layer in enumerate(layers_data)]
    _check_order(layers)

    kmeans_data = _require(data, 'kmeans', "")
    if not isinstance(kmeans_data, dict):
        raise ConfigError("kmeans must be an object", "kmeans")
    kmeans = KMeansSpec(
        k=_as_int(_require(kmeans_data, 'k', "kmeans"), "kmeans.k"),
        restarts=_as_int(kmeans_data.get('restarts', defaults['kmeans_restarts']),
                         "kmeans.restarts"),
    )

    solver = data.get('solver') or {}
    if not isinstance(solver, dict):
        raise ConfigError("solver must be an object", "solver")
    tol = solver.get('tol', defaults['tol'])
    if isinstance(tol, bool) or not isinstance(tol, (int, float)) or tol <= 0:
        raise ConfigError(f"must be a positive number, got {tol!r}", "solver.tol")

    input_shape = data.get('input_shape')
    if input_shape is not None:
        if not isinstance(input_shape, list) or len(input_shape) != 3:
            raise ConfigError("expected [height, width, channels]", "input_shape")
        input_shape = tuple(_as_int(v, f"input_shape[{i}]") for i, v in enumerate(input_shape))

    subset = data.get('subset')
    if subset is not None:
        if not isinstance(subset, dict):
            raise ConfigError("subset must be an object", "subset")
        subset = {'per_class': _as_int(_require(subset, 'per_class', "subset"),
                                       "subset.per_class")}

    cfg = PipelineConfig(
        layers=layers,
        kmeans=kmeans,
        seed=_as_int(data.get('seed', defaults['seed']), "seed", minimum=0),
        name=str(data.get('name', '')),
        dataset=_parse_dataset(data.get('dataset')),
        subset=subset,
        input_shape=input_shape,
        n_iter=_as_int(solver.get('n_iter', defaults['n_iter']), "solver.n_iter"),
        tol=float(tol),
        base_dir=base_dir,
    )
    if input_shape is not None:
        cfg.predicted_shapes()
    return cfg


def parse_config(text: str, base_dir: str = "") -> PipelineConfig:
    """
    Parse and validate configuration text.

    Args:
        text: JSON document
        base_dir: Directory relative dataset paths resolve against

    Returns:
        Validated PipelineConfig with defaults applied
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON at line {e.lineno} column {e.colno}: {e.msg}")
    return config_from_dict(data, base_dir)


def load_config(path: str) -> PipelineConfig:
    """Read and validate a configuration file."""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}")
    cfg = parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))
    logger.info("loaded config %s (%d layers)", path, len(cfg.layers))
    return cfg


def dump_config(cfg: PipelineConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2)
