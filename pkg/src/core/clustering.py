"""
k-means with k-means++ seeding and restarts, and baseline spectral clustering.
"""
import logging
from typing import List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial.distance import cdist

from core.exceptions import ParameterError
from core.layers import run_procedure
from core.utils import as_points, derive_rng
from data.models import ClusteringResult, ProcedureSpec

logger = logging.getLogger(__name__)

DEFAULT_RESTARTS = 10
MAX_LLOYD_ITERATIONS = 300


def kmeans_plus_plus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of k seeds drawn by D^2 weighting."""
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    closest = cdist(points, points[chosen], metric='sqeuclidean')[:, 0]
    while len(chosen) < k:
        total = closest.sum()
        if total > 0:
            cumulative = np.cumsum(closest)
            pick = int(np.searchsorted(cumulative, rng.random() * total, side='right'))
            pick = min(pick, n - 1)
        else:
            # every point sits on a seed; draw uniformly among the rest
            unchosen = np.setdiff1d(np.arange(n), chosen)
            pick = int(unchosen[rng.integers(unchosen.size)])
        chosen.append(pick)
        closest = np.minimum(
            closest, cdist(points, points[pick:pick + 1], metric='sqeuclidean')[:, 0])
    return np.asarray(chosen, dtype=np.int64)


def _assign(points: np.ndarray, centers: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    d = cdist(points, centers, metric='sqeuclidean')
    labels = np.argmin(d, axis=1)
    return labels, d[np.arange(points.shape[0]), labels]


def lloyd(points: np.ndarray, centers: np.ndarray,
          max_iter: int = MAX_LLOYD_ITERATIONS) -> Tuple[np.ndarray, np.ndarray, float, int, List[float]]:
    """
    Lloyd iterations from the given centers.

    Returns:
        (labels, centers, inertia, iterations, inertia_history)
    """
    centers = centers.copy()
    k = centers.shape[0]
    labels, dist = _assign(points, centers)
    history = [float(dist.sum())]
    iterations = 0
    for iterations in range(1, max_iter + 1):
        for c in range(k):
            members = labels == c
            if members.any():
                centers[c] = points[members].mean(axis=0)
        for c in range(k):
            if not np.any(labels == c):
                # move the point farthest from its center into the empty cluster
                far = int(np.argmax(dist))
                centers[c] = points[far]
                labels[far] = c
                dist[far] = 0.0
        new_labels, dist = _assign(points, centers)
        history.append(float(dist.sum()))
        if np.array_equal(new_labels, labels):
            labels = new_labels
            break
        labels = new_labels
    return labels, centers, float(dist.sum()), iterations, history


def _restart(points: np.ndarray, k: int, seed: int, restart: int, max_iter: int):
    rng = derive_rng(seed, f"kmeans/restart{restart}")
    seeds = kmeans_plus_plus(points, k, rng)
    return lloyd(points, points[seeds], max_iter)


def kmeans(points, k: int, restarts: int = DEFAULT_RESTARTS, seed: int = 0,
           n_jobs: int = 1, max_iter: int = MAX_LLOYD_ITERATIONS) -> ClusteringResult:
    """
    Best-of-restarts k-means.

    Args:
        points: N x d array
        k: Number of clusters, 1 <= k <= N
        restarts: Independent k-means++ runs
        seed: Master seed
        n_jobs: Restarts run concurrently

    Returns:
        ClusteringResult of the minimum-inertia restart (lowest index on ties)
    """
    points = as_points(points)
    n = points.shape[0]
    if k < 1 or k > n:
        raise ParameterError(f"k must satisfy 1 <= k <= N, got k={k}, N={n}")
    if restarts < 1:
        raise ParameterError(f"restarts must be >= 1, got {restarts}")

    runs = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_restart)(points, k, seed, r, max_iter) for r in range(restarts))
    best = min(range(restarts), key=lambda r: (runs[r][2], r))
    labels, centers, inertia, iterations, _ = runs[best]
    logger.debug("kmeans k=%d: best restart %d inertia %.6g", k, best, inertia)
    return ClusteringResult(labels=labels, centers=centers, inertia=inertia,
                            restarts_used=restarts, iterations=iterations)


def spectral_cluster(points, k: int, proc: ProcedureSpec, seed: int = 0,
                     restarts: int = DEFAULT_RESTARTS, n_iter: int = 1000,
                     tol: float = 1e-10, n_jobs: int = 1) -> ClusteringResult:
    """
    One-shot spectral clustering: affinity, Laplacian, k smallest
    eigenvectors, then k-means on the embedding rows.

    The procedure's n_eig is replaced by k.
    """
    points = as_points(points)
    spec = ProcedureSpec(affinity=proc.affinity, param=proc.param,
                         laplacian=proc.laplacian, solver=proc.solver, n_eig=k)
    embedding = run_procedure(points, spec, seed, layer=1, procedure=0,
                              n_iter=n_iter, tol=tol, require_connected=False)
    return kmeans(embedding.rows, k, restarts=restarts, seed=seed, n_jobs=n_jobs)
