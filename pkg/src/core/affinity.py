"""
Affinity graph construction: kNN, epsilon, fully connected Gaussian and
self-tuning Gaussian graphs.

Sparse graphs are held as scipy CSR matrices with binary weights. Dense
graphs are materialized up to DENSE_MATERIALIZE_CAP nodes; beyond that
they are kept as a GaussianKernel and evaluated in row blocks.
"""
import logging
from typing import Dict, Optional

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import cdist

from core.exceptions import ParameterError
from core.utils import as_points, row_blocks, max_pairwise_distance

logger = logging.getLogger(__name__)

DENSE_MATERIALIZE_CAP = 4096
SELF_TUNING_K = 7
SIGMA_FLOOR_RATIO = 1e-12


class GaussianKernel:
    """Gaussian affinities computed on demand from the points.

    With ``scales`` set, w_ij = exp(-d_ij^2 / (s_i s_j)); otherwise
    w_ij = exp(-d_ij^2 / (2 sigma^2)). The diagonal is always zero.
    """

    def __init__(self, points: np.ndarray, sigma: Optional[float] = None,
                 scales: Optional[np.ndarray] = None):
        self.points = points
        self.sigma = sigma
        self.scales = scales

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def block(self, row_idx: np.ndarray, col_idx: Optional[np.ndarray] = None) -> np.ndarray:
        """Affinities between the given rows and columns (all columns by default)."""
        row_idx = np.asarray(row_idx)
        cols = self.points if col_idx is None else self.points[col_idx]
        sq = cdist(self.points[row_idx], cols, metric='sqeuclidean')
        if self.scales is None:
            weights = np.exp(-sq / (2.0 * self.sigma ** 2))
        else:
            col_scales = self.scales if col_idx is None else self.scales[col_idx]
            weights = np.exp(-sq / np.outer(self.scales[row_idx], col_scales))
        # zero the diagonal entries that fall inside this block
        col_ids = np.arange(self.n) if col_idx is None else np.asarray(col_idx)
        weights[row_idx[:, None] == col_ids[None, :]] = 0.0
        return weights


class AffinityGraph:
    """Symmetric nonnegative similarity matrix with construction metadata."""

    def __init__(self, n: int, kind: str, param: float, matrix=None,
                 kernel: Optional[GaussianKernel] = None,
                 meta: Optional[Dict] = None):
        self.n = n
        self.kind = kind
        self.param = param
        self.meta = dict(meta or {})
        self.symmetric = True
        self._matrix = matrix
        self._kernel = kernel
        self._degrees = None

        if kernel is not None:
            self.storage = 'implicit'
        elif sparse.issparse(matrix):
            self.storage = 'sparse'
            self._matrix = sparse.csr_matrix(matrix, dtype=np.float64)
            self._matrix.eliminate_zeros()
        else:
            self.storage = 'dense'
            self._matrix = np.asarray(matrix, dtype=np.float64)

    def __repr__(self) -> str:
        return f"AffinityGraph(n={self.n}, kind={self.kind}:{self.param}, storage={self.storage})"

    @property
    def is_sparse(self) -> bool:
        return self.storage == 'sparse'

    @property
    def matrix(self):
        """The CSR or dense matrix; None for implicit storage."""
        return self._matrix

    @property
    def kernel(self) -> Optional[GaussianKernel]:
        return self._kernel

    @property
    def nnz(self) -> int:
        if self.storage == 'sparse':
            return self._matrix.nnz
        if self.storage == 'dense':
            return int(np.count_nonzero(self._matrix))
        return sum(int(np.count_nonzero(self._kernel.block(np.arange(a, b))))
                   for a, b in row_blocks(self.n))

    def row_sums(self) -> np.ndarray:
        if self._degrees is None:
            if self.storage == 'sparse':
                self._degrees = np.asarray(self._matrix.sum(axis=1)).ravel()
            elif self.storage == 'dense':
                self._degrees = self._matrix.sum(axis=1)
            else:
                self._degrees = np.concatenate([
                    self._kernel.block(np.arange(a, b)).sum(axis=1)
                    for a, b in row_blocks(self.n)])
        return self._degrees

    def rows(self, idx) -> np.ndarray:
        """Dense rows W[idx, :]."""
        idx = np.asarray(idx)
        if self.storage == 'sparse':
            return self._matrix[idx].toarray()
        if self.storage == 'dense':
            return self._matrix[idx]
        return self._kernel.block(idx)

    def columns(self, idx) -> np.ndarray:
        """Dense columns W[:, idx] (equal to rows(idx).T by symmetry)."""
        return self.rows(idx).T

    def matvec(self, x: np.ndarray) -> np.ndarray:
        """W @ x for a vector or a block of vectors."""
        if self.storage != 'implicit':
            return self._matrix @ x
        out = np.empty((self.n,) + x.shape[1:], dtype=np.float64)
        for a, b in row_blocks(self.n):
            out[a:b] = self._kernel.block(np.arange(a, b)) @ x
        return out

    def toarray(self) -> np.ndarray:
        if self.storage == 'sparse':
            return self._matrix.toarray()
        if self.storage == 'dense':
            return self._matrix
        logger.warning("materializing an implicit %d-node affinity matrix", self.n)
        return self._kernel.block(np.arange(self.n))


def _knn_indices(points: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k nearest other points per row, ties to lower index."""
    n = points.shape[0]
    neighbors = np.empty((n, k), dtype=np.int64)
    for a, b in row_blocks(n):
        d = cdist(points[a:b], points, metric='sqeuclidean')
        d[np.arange(b - a), np.arange(a, b)] = np.inf
        # stable sort keeps lower indices first among equal distances
        neighbors[a:b] = np.argsort(d, axis=1, kind='stable')[:, :k]
    return neighbors


def knn_graph(points, k: int, symmetrize: str = 'union') -> AffinityGraph:
    """
    Binary k-nearest-neighbour graph.

    Args:
        points: N x d array
        k: Neighbours per point, 1 <= k < N
        symmetrize: 'union' keeps (i, j) if either is among the other's
            neighbours; 'mutual' requires both

    Returns:
        Sparse AffinityGraph
    """
    points = as_points(points)
    n = points.shape[0]
    k = int(k)
    if k < 1 or k >= n:
        raise ParameterError(f"k must satisfy 1 <= k < N, got k={k}, N={n}")
    if symmetrize not in ('union', 'mutual'):
        raise ParameterError(f"unknown symmetrization '{symmetrize}'")

    neighbors = _knn_indices(points, k)
    rows = np.repeat(np.arange(n), k)
    directed = sparse.csr_matrix(
        (np.ones(n * k), (rows, neighbors.ravel())), shape=(n, n))
    if symmetrize == 'union':
        w = directed.maximum(directed.T)
    else:
        w = directed.minimum(directed.T)
    logger.debug("knn graph: n=%d k=%d nnz=%d", n, k, w.nnz)
    return AffinityGraph(n, 'knn', k, matrix=w, meta={'symmetrize': symmetrize})


def mst_longest_edge(points) -> float:
    """
    Longest edge of the Euclidean minimum spanning tree (Prim, O(N^2)).

    Args:
        points: N x d array with N >= 2

    Returns:
        The longest tree edge length
    """
    points = as_points(points)
    n = points.shape[0]
    if n < 2:
        raise ParameterError(f"MST needs at least 2 points, got {n}")

    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    current = 0
    longest = 0.0
    for _ in range(n - 1):
        in_tree[current] = True
        d = cdist(points[current:current + 1], points, metric='euclidean')[0]
        np.minimum(best, d, out=best)
        best[in_tree] = np.inf
        current = int(np.argmin(best))
        longest = max(longest, float(best[current]))
    return longest


def eps_graph(points, eps: float) -> AffinityGraph:
    """Binary graph joining every pair at distance <= eps."""
    points = as_points(points)
    if not eps > 0:
        raise ParameterError(f"eps must be positive, got {eps}")
    n = points.shape[0]
    rows, cols = [], []
    for a, b in row_blocks(n):
        d = cdist(points[a:b], points, metric='euclidean')
        d[np.arange(b - a), np.arange(a, b)] = np.inf
        r, c = np.nonzero(d <= eps)
        rows.append(r + a)
        cols.append(c)
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    w = sparse.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    logger.debug("eps graph: n=%d eps=%.4g nnz=%d", n, eps, w.nnz)
    return AffinityGraph(n, 'eps', eps, matrix=w)


def eps_graph_mst(points, multiple: float) -> AffinityGraph:
    """Epsilon graph with eps = multiple x longest MST edge."""
    points = as_points(points)
    eta = mst_longest_edge(points)
    if eta == 0.0:
        raise ParameterError("all points coincide; MST longest edge is zero")
    graph = eps_graph(points, multiple * eta)
    graph.kind, graph.param = 'eps', multiple
    graph.meta.update({'eta': eta, 'eps': multiple * eta})
    return graph


def _gaussian_graph(points: np.ndarray, kind: str, param: float, kernel: GaussianKernel,
                    materialize_cap: int) -> AffinityGraph:
    n = points.shape[0]
    if n <= materialize_cap:
        w = kernel.block(np.arange(n))
        # exact symmetry regardless of floating-point evaluation order
        w = np.maximum(w, w.T)
        return AffinityGraph(n, kind, param, matrix=w)
    logger.info("%s graph on %d points kept implicit", kind, n)
    return AffinityGraph(n, kind, param, kernel=kernel)


def full_gaussian_graph(points, sigma: float,
                        materialize_cap: int = DENSE_MATERIALIZE_CAP) -> AffinityGraph:
    """Fully connected graph, w_ij = exp(-|x_i - x_j|^2 / (2 sigma^2))."""
    points = as_points(points)
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    kernel = GaussianKernel(points, sigma=float(sigma))
    return _gaussian_graph(points, 'full', float(sigma), kernel, materialize_cap)


def local_scales(points: np.ndarray, K: int) -> np.ndarray:
    """Distance from each point to its K-th nearest other point, floored."""
    n = points.shape[0]
    scales = np.empty(n)
    for a, b in row_blocks(n):
        d = cdist(points[a:b], points, metric='euclidean')
        d[np.arange(b - a), np.arange(a, b)] = np.inf
        scales[a:b] = np.partition(d, K - 1, axis=1)[:, K - 1]
    spread = max_pairwise_distance(points)
    floor = SIGMA_FLOOR_RATIO * spread if spread > 0 else 1.0
    return np.maximum(scales, floor)


def self_tuning_graph(points, K: int = SELF_TUNING_K,
                      materialize_cap: int = DENSE_MATERIALIZE_CAP) -> AffinityGraph:
    """Gaussian graph with per-point scales, w_ij = exp(-d_ij^2 / (s_i s_j))."""
    points = as_points(points)
    n = points.shape[0]
    K = int(K)
    if K < 1 or K >= n:
        raise ParameterError(f"K must satisfy 1 <= K < N, got K={K}, N={n}")
    kernel = GaussianKernel(points, scales=local_scales(points, K))
    return _gaussian_graph(points, 'selftune', K, kernel, materialize_cap)


def _implicit_components(g: AffinityGraph) -> int:
    """Min-label propagation with pointer jumping over kernel row blocks."""
    labels = np.arange(g.n)
    while True:
        updated = labels.copy()
        for a, b in row_blocks(g.n):
            linked = g.kernel.block(np.arange(a, b)) > 0
            candidate = np.where(linked, labels[None, :], g.n).min(axis=1)
            updated[a:b] = np.minimum(updated[a:b], candidate)
        updated = updated[updated]
        if np.array_equal(updated, labels):
            return int(np.unique(labels).size)
        labels = updated


def component_count(g: AffinityGraph) -> int:
    """Connected components, any positive weight counting as an edge."""
    if g.n == 0:
        return 0
    if g.storage == 'sparse':
        count, _ = connected_components(g.matrix, directed=False)
        return int(count)
    if g.storage == 'dense':
        count, _ = connected_components(sparse.csr_matrix(g.matrix > 0), directed=False)
        return int(count)
    return _implicit_components(g)


def build_affinity(points, kind: str, param: float,
                   materialize_cap: int = DENSE_MATERIALIZE_CAP) -> AffinityGraph:
    """Dispatch on affinity kind ('knn', 'eps', 'full', 'selftune')."""
    if kind == 'knn':
        return knn_graph(points, int(param))
    if kind == 'eps':
        return eps_graph_mst(points, float(param))
    if kind == 'full':
        return full_gaussian_graph(points, float(param), materialize_cap)
    if kind == 'selftune':
        return self_tuning_graph(points, int(param), materialize_cap)
    raise ParameterError(f"unknown affinity kind '{kind}'")
