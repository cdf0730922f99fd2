"""
Degree vectors and graph Laplacians (unnormalized, symmetric, random walk).
"""
import logging
from typing import Optional

import numpy as np
from scipy import sparse

from core.affinity import AffinityGraph
from core.exceptions import IsolatedNodeError, ParameterError
from core.utils import row_blocks

logger = logging.getLogger(__name__)

LAPLACIAN_KINDS = ('unnormalized', 'sym', 'rw')


class LaplacianMatrix:
    """Laplacian stored like its source graph (sparse, dense or implicit).

    ``kind`` is one of LAPLACIAN_KINDS, or 'generic' for a plain symmetric
    matrix handed to the solvers directly.
    """

    def __init__(self, kind: str, degrees: Optional[np.ndarray], matrix=None,
                 graph: Optional[AffinityGraph] = None, n: Optional[int] = None):
        self.kind = kind
        self.degrees = degrees
        self.graph = graph
        self._matrix = matrix
        if matrix is None:
            self.storage = 'implicit'
            self.n = graph.n
        else:
            self.storage = 'sparse' if sparse.issparse(matrix) else 'dense'
            self.n = matrix.shape[0] if n is None else n

    def __repr__(self) -> str:
        return f"LaplacianMatrix(n={self.n}, kind={self.kind}, storage={self.storage})"

    @classmethod
    def from_matrix(cls, matrix) -> 'LaplacianMatrix':
        """Wrap an arbitrary symmetric matrix for the eigensolvers."""
        if not sparse.issparse(matrix):
            matrix = np.asarray(matrix, dtype=np.float64)
        else:
            matrix = sparse.csr_matrix(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ParameterError(f"matrix must be square, got shape {matrix.shape}")
        return cls('generic', None, matrix=matrix)

    @property
    def matrix(self):
        return self._matrix

    @property
    def is_symmetric_kind(self) -> bool:
        return self.kind != 'rw'

    @property
    def inv_sqrt_degrees(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.degrees)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """L @ x for a vector or a block of column vectors."""
        if self._matrix is not None:
            return self._matrix @ x
        shape = (-1,) + (1,) * (x.ndim - 1)
        if self.kind == 'sym':
            s = self.inv_sqrt_degrees.reshape(shape)
            return x - s * self.graph.matvec(s * x)
        d = self.degrees.reshape(shape)
        if self.kind == 'rw':
            return x - self.graph.matvec(x) / d
        return d * x - self.graph.matvec(x)

    def rows(self, idx) -> np.ndarray:
        """Dense rows L[idx, :]."""
        idx = np.atleast_1d(np.asarray(idx))
        if self.storage == 'sparse':
            return self._matrix[idx].toarray()
        if self.storage == 'dense':
            return self._matrix[idx]
        w = self.graph.rows(idx)
        diag = np.arange(idx.size), idx
        if self.kind == 'sym':
            s = self.inv_sqrt_degrees
            out = -(s[idx][:, None] * w * s[None, :])
            out[diag] += 1.0
        elif self.kind == 'rw':
            out = -(w / self.degrees[idx][:, None])
            out[diag] += 1.0
        else:
            out = -w
            out[diag] += self.degrees[idx]
        return out

    def columns(self, idx) -> np.ndarray:
        """Dense columns L[:, idx]; symmetric kinds only."""
        return self.rows(idx).T

    def diagonal(self) -> np.ndarray:
        if self.kind in ('sym', 'rw'):
            return np.ones(self.n)
        if self.kind == 'unnormalized':
            return self.degrees.copy()
        if self.storage == 'sparse':
            return self._matrix.diagonal()
        return np.diag(self._matrix).copy()

    def toarray(self) -> np.ndarray:
        if self.storage == 'sparse':
            return self._matrix.toarray()
        if self.storage == 'dense':
            return self._matrix
        return np.vstack([self.rows(np.arange(a, b)) for a, b in row_blocks(self.n)])

    def gershgorin_bound(self) -> float:
        """Upper bound on the spectral radius (max absolute row sum)."""
        if self.kind == 'sym' or self.kind == 'rw':
            return 2.0
        if self.kind == 'unnormalized':
            return float(2.0 * self.degrees.max())
        if self.storage == 'sparse':
            return float(abs(self._matrix).sum(axis=1).max())
        return float(np.abs(self._matrix).sum(axis=1).max())


def degree_vector(g: AffinityGraph) -> np.ndarray:
    """
    Row sums of W.

    Raises:
        IsolatedNodeError: naming the first node with zero degree
    """
    degrees = np.asarray(g.row_sums(), dtype=np.float64)
    isolated = np.flatnonzero(degrees <= 0)
    if isolated.size:
        raise IsolatedNodeError(int(isolated[0]))
    return degrees


def normalized_affinity(g: AffinityGraph, degrees: Optional[np.ndarray] = None):
    """D^{-1/2} W D^{-1/2}, exactly symmetric; None for implicit graphs."""
    if degrees is None:
        degrees = degree_vector(g)
    s = 1.0 / np.sqrt(degrees)
    if g.storage == 'sparse':
        scale = sparse.diags(s)
        m = (scale @ g.matrix @ scale).tocsr()
        return ((m + m.T) * 0.5).tocsr()
    if g.storage == 'dense':
        m = s[:, None] * g.matrix * s[None, :]
        return (m + m.T) * 0.5
    return None


def laplacian(g: AffinityGraph, kind: str = 'sym') -> LaplacianMatrix:
    """
    Build a Laplacian of the requested kind.

    Args:
        g: Affinity graph without isolated nodes
        kind: 'unnormalized' (D - W), 'sym' (E - D^-1/2 W D^-1/2)
            or 'rw' (E - D^-1 W)

    Returns:
        LaplacianMatrix with the same storage as the graph
    """
    if kind not in LAPLACIAN_KINDS:
        raise ParameterError(f"unknown Laplacian kind '{kind}'")
    degrees = degree_vector(g)

    if g.storage == 'implicit':
        return LaplacianMatrix(kind, degrees, graph=g)

    if g.storage == 'sparse':
        eye = sparse.identity(g.n, format='csr')
        if kind == 'unnormalized':
            matrix = sparse.diags(degrees) - g.matrix
        elif kind == 'sym':
            matrix = eye - normalized_affinity(g, degrees)
        else:
            matrix = eye - sparse.diags(1.0 / degrees) @ g.matrix
        matrix = sparse.csr_matrix(matrix)
    else:
        if kind == 'unnormalized':
            matrix = np.diag(degrees) - g.matrix
        elif kind == 'sym':
            matrix = np.eye(g.n) - normalized_affinity(g, degrees)
        else:
            matrix = np.eye(g.n) - g.matrix / degrees[:, None]

    logger.debug("built %s Laplacian on %d nodes (%s)", kind, g.n, g.storage)
    return LaplacianMatrix(kind, degrees, matrix=matrix, graph=g)
