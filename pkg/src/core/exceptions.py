"""
Exception hierarchy for the SA-Net engine.

Library code raises these; only the CLI and StorageManager catch them.
"""
from typing import Optional


class SANetError(Exception):
    """Base class for every error raised by the engine."""


class FormatError(SANetError):
    """Malformed on-disk data (bad IDX header, undecodable image)."""

    def __init__(self, message: str, failures: Optional[list] = None):
        super().__init__(message)
        self.failures = list(failures or [])


class ConsistencyError(SANetError):
    """Counts or shapes that must agree do not."""


class CapacityError(SANetError):
    """A class has fewer members than a stratified subset requests."""

    def __init__(self, label: int, available: int, requested: int):
        super().__init__(
            f"class {label} has {available} members, {requested} requested")
        self.label = label
        self.available = available
        self.requested = requested


class GeometryError(SANetError):
    """Patch window does not fit the (padded) source extent."""


class ParameterError(SANetError):
    """A numeric parameter is outside its valid range."""


class IsolatedNodeError(SANetError):
    """A graph node has zero degree."""

    def __init__(self, node: int):
        super().__init__(f"node {node} has zero degree")
        self.node = node


class ConnectivityError(SANetError):
    """A sparse affinity graph splits into several components."""

    def __init__(self, components: int, procedure: Optional[int] = None):
        where = f" (procedure {procedure})" if procedure is not None else ""
        super().__init__(f"affinity graph has {components} components{where}")
        self.components = components
        self.procedure = procedure


class SizeError(SANetError):
    """Matrix too large for the dense oracle solver."""


class ConvergenceError(SANetError):
    """Iterative eigensolver could not produce the requested pairs."""

    def __init__(self, message: str, residual: float = float('nan')):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


class DomainError(SANetError):
    """Input matrix violates the solver's domain (e.g. not PSD)."""


class MetricError(SANetError):
    """A clustering score is undefined for the given input."""


class InfiniteSeparationError(MetricError):
    """Calinski-Harabasz score with zero within-cluster scatter."""


class ConfigError(SANetError):
    """Pipeline configuration failed validation."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class LayerError(SANetError):
    """Wraps an error raised while executing one pipeline layer."""

    def __init__(self, layer: int, cause: SANetError,
                 procedure: Optional[int] = None):
        where = f"layer {layer}"
        if procedure is not None:
            where += f", procedure {procedure}"
        super().__init__(f"{where}: {cause}")
        self.layer = layer
        self.procedure = procedure
        self.cause = cause
