"""
Data models for images, feature maps, embeddings and run reports.
"""
from dataclasses import dataclass, field
from typing import List, Dict, Optional, Tuple
from datetime import datetime

import numpy as np

from core.exceptions import ParameterError, ConsistencyError


SPARSE_AFFINITIES = ('knn', 'eps')
DENSE_AFFINITIES = ('full', 'selftune')
LAPLACIAN_KINDS = ('sym', 'rw')
SOLVERS = ('dense', 'lanczos', 'nystrom', 'minibatch')

# Solvers each affinity storage may be paired with
SPARSE_SOLVERS = ('lanczos', 'dense')
DENSE_SOLVERS = ('nystrom', 'minibatch', 'dense')


@dataclass(eq=False)
class ImageTensor:
    """One H x W x C image with values in [0, 1]."""
    data: np.ndarray
    source_index: int = 0
    dataset_id: str = ""
    label: Optional[int] = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim == 2:
            data = data[:, :, None]
        if data.ndim != 3:
            raise ConsistencyError(
                f"image data must be H x W x C, got shape {data.shape}")
        if not np.all(np.isfinite(data)):
            raise ConsistencyError("image data contains non-finite values")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise ConsistencyError("image data must lie in [0, 1]")
        self.data = data

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.data.shape


@dataclass(eq=False)
class LabeledDataset:
    """A uniformly shaped collection of images with optional labels."""
    images: List[ImageTensor] = field(default_factory=list)
    labels: Optional[List[int]] = None
    name: str = ""

    def __post_init__(self):
        if self.labels is not None:
            self.labels = [int(label) for label in self.labels]
            if len(self.labels) != len(self.images):
                raise ConsistencyError(
                    f"{len(self.labels)} labels for {len(self.images)} images")
        shapes = {image.shape for image in self.images}
        if len(shapes) > 1:
            raise ConsistencyError(
                f"images have mixed shapes: {sorted(shapes)}")

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self) -> Optional[Tuple[int, int, int]]:
        """Common (height, width, channels), or None for an empty set."""
        return self.images[0].shape if self.images else None

    def as_array(self) -> np.ndarray:
        """Stack all images into an (N, H, W, C) array."""
        if not self.images:
            return np.zeros((0, 0, 0, 0))
        return np.stack([image.data for image in self.images])

    def label_array(self) -> Optional[np.ndarray]:
        if self.labels is None:
            return None
        return np.asarray(self.labels, dtype=np.int64)


@dataclass(eq=False)
class PatchGrid:
    """Flattened patches sampled on an m x n grid, row-major."""
    rows: int
    cols: int
    patch_h: int
    patch_w: int
    patch_c: int
    stride: int
    patches: np.ndarray

    def __post_init__(self):
        expected = (self.rows * self.cols,
                    self.patch_h * self.patch_w * self.patch_c)
        if self.patches.shape != expected:
            raise ConsistencyError(
                f"patch array has shape {self.patches.shape}, expected {expected}")

    @property
    def count(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True)
class ChannelLineage:
    """Origin of one feature channel."""
    procedure: int
    rank: int
    eigenvalue: float

    def sort_key(self) -> Tuple[float, int, int]:
        return (self.eigenvalue, self.procedure, self.rank)


@dataclass(eq=False)
class FeatureMaps:
    """Per-image rows x cols x channels feature stack."""
    values: np.ndarray
    channel_lineage: List[ChannelLineage] = field(default_factory=list)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ConsistencyError(
                f"feature maps must be 3-D, got shape {self.values.shape}")
        if len(self.channel_lineage) != self.values.shape[2]:
            raise ConsistencyError(
                f"{len(self.channel_lineage)} lineage records for "
                f"{self.values.shape[2]} channels")

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.values.shape

    def flatten(self) -> np.ndarray:
        """Row-major (row, col, channel) vector."""
        return self.values.reshape(-1)


@dataclass(eq=False)
class BinaryMaps:
    """Sign bits of feature maps, lineage inherited."""
    bits: np.ndarray
    channel_lineage: List[ChannelLineage] = field(default_factory=list)

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.ndim != 3:
            raise ConsistencyError(
                f"binary maps must be 3-D, got shape {self.bits.shape}")
        if np.any(self.bits > 1):
            raise ConsistencyError("binary maps may only hold 0 and 1")
        if len(self.channel_lineage) != self.bits.shape[2]:
            raise ConsistencyError(
                f"{len(self.channel_lineage)} lineage records for "
                f"{self.bits.shape[2]} channels")

    @property
    def rows(self) -> int:
        return self.bits.shape[0]

    @property
    def cols(self) -> int:
        return self.bits.shape[1]

    @property
    def channels(self) -> int:
        return self.bits.shape[2]

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.bits.shape


@dataclass(eq=False)
class SpectralEmbedding:
    """Smallest eigenpairs of a Laplacian, one row per graph node."""
    rows: np.ndarray
    eigenvalues: np.ndarray
    solver: str
    residual: float = 0.0
    iterations: int = 0
    warnings: List[str] = field(default_factory=list)
    history: List[Tuple[int, float]] = field(default_factory=list)

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[1] != self.eigenvalues.shape[0]:
            raise ConsistencyError(
                f"embedding shape {self.rows.shape} does not match "
                f"{self.eigenvalues.shape[0]} eigenvalues")
        if np.any(np.diff(self.eigenvalues) < 0):
            raise ConsistencyError("eigenvalues must be non-descending")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def n_eig(self) -> int:
        return self.rows.shape[1]


@dataclass
class SolverBudget:
    """Iteration and sampling limits for one eigensolver call.

    l_col and batch default to values derived from the matrix size
    when left as None.
    """
    n_eig: int
    n_iter: int = 1000
    l_col: Optional[int] = None
    batch: Optional[int] = None
    seed: int = 0
    tol: float = 1e-10
    stream: str = "solver"

    def __post_init__(self):
        if self.n_eig < 1:
            raise ParameterError(f"n_eig must be >= 1, got {self.n_eig}")
        if self.n_iter < self.n_eig:
            raise ParameterError(
                f"n_iter ({self.n_iter}) must be >= n_eig ({self.n_eig})")
        if self.l_col is not None and self.l_col < self.n_eig:
            raise ParameterError(
                f"l_col ({self.l_col}) must be >= n_eig ({self.n_eig})")
        if self.batch is not None and self.batch < 1:
            raise ParameterError(f"batch must be >= 1, got {self.batch}")
        if self.tol <= 0:
            raise ParameterError(f"tol must be positive, got {self.tol}")


@dataclass(frozen=True)
class ProcedureSpec:
    """One (affinity, Laplacian, solver, n_eig) combination.

    ``param`` is k for knn, the multiple of the MST longest edge for eps,
    sigma for full and the neighbour rank K for selftune.
    """
    affinity: str
    param: float
    laplacian: str = 'sym'
    solver: str = 'lanczos'
    n_eig: int = 8

    def __post_init__(self):
        if self.affinity not in SPARSE_AFFINITIES + DENSE_AFFINITIES:
            raise ParameterError(f"unknown affinity '{self.affinity}'")
        if self.laplacian not in LAPLACIAN_KINDS:
            raise ParameterError(f"unknown laplacian '{self.laplacian}'")
        if self.solver not in SOLVERS:
            raise ParameterError(f"unknown solver '{self.solver}'")
        if self.n_eig < 1:
            raise ParameterError(f"n_eig must be >= 1, got {self.n_eig}")
        if not self.param > 0:
            raise ParameterError(
                f"{self.affinity} parameter must be positive, got {self.param}")
        if self.affinity in ('knn', 'selftune') and int(self.param) != self.param:
            raise ParameterError(
                f"{self.affinity} parameter must be an integer, got {self.param}")
        allowed = SPARSE_SOLVERS if self.is_sparse else DENSE_SOLVERS
        if self.solver not in allowed:
            raise ParameterError(
                f"solver '{self.solver}' cannot be used with "
                f"{self.affinity} affinities (allowed: {', '.join(allowed)})")

    @property
    def is_sparse(self) -> bool:
        return self.affinity in SPARSE_AFFINITIES

    @property
    def affinity_text(self) -> str:
        param = int(self.param) if self.affinity in ('knn', 'selftune') else self.param
        return f"{self.affinity}:{param}"

    @staticmethod
    def parse_affinity(text: str) -> Tuple[str, float]:
        """Split 'knn:9' style text into (kind, parameter)."""
        kind, sep, value = str(text).partition(':')
        kind = kind.strip().lower()
        if not sep or kind not in SPARSE_AFFINITIES + DENSE_AFFINITIES:
            raise ParameterError(
                f"affinity must look like KIND:PARAM with KIND in "
                f"knn/eps/full/selftune, got '{text}'")
        try:
            param = float(value)
        except ValueError:
            raise ParameterError(f"affinity parameter '{value}' is not a number")
        return kind, param

    def to_dict(self) -> Dict:
        return {
            'affinity': self.affinity_text,
            'laplacian': self.laplacian,
            'solver': self.solver,
            'n_eig': self.n_eig,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'ProcedureSpec':
        kind, param = cls.parse_affinity(data['affinity'])
        return cls(
            affinity=kind,
            param=param,
            laplacian=data.get('laplacian', 'sym'),
            solver=data.get('solver', 'lanczos'),
            n_eig=int(data['n_eig']),
        )


@dataclass(eq=False)
class ClusteringResult:
    """Outcome of k-means."""
    labels: np.ndarray
    centers: np.ndarray
    inertia: float
    restarts_used: int = 1
    iterations: int = 0


@dataclass
class RunReport:
    """Everything recorded about one pipeline run."""
    config: Dict
    seed: int
    version: str
    n_images: int = 0
    layer_shapes: List[List[int]] = field(default_factory=list)
    feature_length: int = 0
    labels: List[int] = field(default_factory=list)
    metrics: Optional[Dict[str, Optional[float]]] = None
    metric_variants: Dict[str, str] = field(default_factory=dict)
    inertia: float = 0.0
    timings: Dict[str, float] = field(default_factory=dict)
    residuals: List[Dict] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    created_at: str = field(default_factory=lambda: datetime.now().isoformat())

    def __post_init__(self):
        if any(value < 0 for value in self.timings.values()):
            raise ConsistencyError("stage timings must be nonnegative")

    def to_dict(self) -> Dict:
        """Convert to dictionary for serialization."""
        return {
            'version': self.version,
            'seed': self.seed,
            'created_at': self.created_at,
            'config': self.config,
            'n_images': self.n_images,
            'layer_shapes': self.layer_shapes,
            'feature_length': self.feature_length,
            'metrics': self.metrics,
            'metric_variants': self.metric_variants,
            'inertia': self.inertia,
            'labels': self.labels,
            'timings': self.timings,
            'residuals': self.residuals,
            'warnings': self.warnings,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'RunReport':
        """Create instance from dictionary."""
        return cls(
            config=data['config'],
            seed=data['seed'],
            version=data['version'],
            n_images=data.get('n_images', 0),
            layer_shapes=[list(shape) for shape in data.get('layer_shapes', [])],
            feature_length=data.get('feature_length', 0),
            labels=list(data.get('labels', [])),
            metrics=data.get('metrics'),
            metric_variants=data.get('metric_variants', {}),
            inertia=data.get('inertia', 0.0),
            timings=data.get('timings', {}),
            residuals=data.get('residuals', []),
            warnings=data.get('warnings', []),
            created_at=data.get('created_at', ''),
        )

    def without_timings(self) -> Dict:
        """Serialized form with wall-clock fields removed."""
        data = self.to_dict()
        data.pop('timings')
        data.pop('created_at')
        return data
