"""
Eigensolvers for the smallest eigenpairs of symmetric Laplacians.

Four methods share one result type (SpectralEmbedding):
    dense_eigh         full decomposition, the reference oracle
    lanczos_smallest   Lanczos with full reorthogonalization
    nystrom_embed      Nystrom approximation from greedily chosen columns
    minibatch_stiefel  stochastic Riemannian descent on the Stiefel manifold

Every solver accepts a LaplacianMatrix, a ShiftedOperator, or a plain
symmetric ndarray / scipy sparse matrix.
"""
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg

from core.affinity import AffinityGraph
from core.exceptions import (ConvergenceError, DomainError, ParameterError,
                             SizeError)
from core.laplacian import LaplacianMatrix, laplacian
from core.utils import derive_rng, row_blocks
from data.models import SolverBudget, SpectralEmbedding

logger = logging.getLogger(__name__)

DENSE_ORACLE_CAP = 2000
BREAKDOWN_RATIO = 1e-10
CONVERGENCE_CHECK_EVERY = 5
MAX_VERIFY_PASSES = 4
NYSTROM_MIN_COLUMNS = 16
NYSTROM_CANDIDATE_POOL = 59
NYSTROM_RIDGE_RATIO = 1e-10
NYSTROM_SINGULAR_RATIO = 1e-12
STIEFEL_WINDOW = 50
PSD_TOLERANCE = 1e-6


class ShiftedOperator:
    """The operator shift * E - op, used to reflect a spectrum."""

    def __init__(self, op, shift: float):
        self.op = op
        self.shift = float(shift)
        self.n = op.n
        self.kind = 'shifted'
        self.storage = op.storage

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.shift * x - self.op.matvec(x)

    def rows(self, idx) -> np.ndarray:
        idx = np.atleast_1d(np.asarray(idx))
        out = -self.op.rows(idx)
        out[np.arange(idx.size), idx] += self.shift
        return out

    def columns(self, idx) -> np.ndarray:
        return self.rows(idx).T

    def diagonal(self) -> np.ndarray:
        return self.shift - self.op.diagonal()

    def toarray(self) -> np.ndarray:
        return self.shift * np.eye(self.n) - self.op.toarray()

    def gershgorin_bound(self) -> float:
        return abs(self.shift) + self.op.gershgorin_bound()


def _as_operator(L):
    if isinstance(L, (LaplacianMatrix, ShiftedOperator)):
        if getattr(L, 'kind', None) == 'rw':
            raise ParameterError(
                "random-walk Laplacians are not symmetric; solve them through embed_graph")
        return L
    return LaplacianMatrix.from_matrix(L)


def _residual(op, vectors: np.ndarray, values: np.ndarray) -> float:
    """max_i |L x_i - lambda_i x_i|."""
    if vectors.shape[1] == 0:
        return 0.0
    diff = op.matvec(vectors) - vectors * values[None, :]
    return float(np.linalg.norm(diff, axis=0).max())


def fix_signs(rows: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    if rows.size == 0:
        return rows
    pivots = np.argmax(np.abs(rows), axis=0)
    signs = np.sign(rows[pivots, np.arange(rows.shape[1])])
    signs[signs == 0] = 1.0
    return rows * signs[None, :]


def dense_eigh(L, n_eig: int, cap: int = DENSE_ORACLE_CAP) -> SpectralEmbedding:
    """
    Exact smallest eigenpairs by full symmetric decomposition.

    Args:
        L: Symmetric matrix or LaplacianMatrix
        n_eig: Number of pairs
        cap: Largest accepted matrix side

    Returns:
        SpectralEmbedding from the 'dense' solver
    """
    op = _as_operator(L)
    if op.n > cap:
        raise SizeError(
            f"dense solver is capped at {cap} nodes, got {op.n}; "
            f"use lanczos, nystrom or minibatch")
    if not 1 <= n_eig <= op.n:
        raise ParameterError(f"n_eig must be in [1, {op.n}], got {n_eig}")
    a = op.toarray()
    a = (a + a.T) * 0.5
    values, vectors = linalg.eigh(a, subset_by_index=[0, n_eig - 1])
    return SpectralEmbedding(vectors, values, 'dense',
                             residual=_residual(op, vectors, values))


def _start_vector(rng: np.random.Generator, n: int, *bases) -> Optional[np.ndarray]:
    """Seeded unit vector orthogonal to every given basis, or None."""
    for _ in range(5):
        v = rng.standard_normal(n)
        v /= np.linalg.norm(v)
        for _ in range(2):
            for basis in bases:
                if basis is not None and basis.shape[1]:
                    v -= basis @ (basis.T @ v)
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            return v / norm
    return None


def _lanczos_pass(op, k: int, steps: int, tol: float, rng: np.random.Generator,
                  deflate: Optional[np.ndarray] = None):
    """
    One Lanczos run restricted to the complement of ``deflate``.

    Returns:
        (values, vectors, steps_taken, converged), values ascending
    """
    n = op.n
    q = _start_vector(rng, n, deflate)
    if q is None:
        return np.zeros(0), np.zeros((n, 0)), 0, True

    basis = np.empty((n, min(steps, 64)))
    alphas: List[float] = []
    betas: List[float] = []
    prev_beta = 0.0
    anorm = 0.0
    converged = False
    j = 0
    while j < steps:
        if j == basis.shape[1]:
            basis = np.hstack([basis, np.empty((n, min(basis.shape[1], steps - j)))])
        basis[:, j] = q
        w = op.matvec(q)
        alpha = float(q @ w)
        w -= alpha * q
        if prev_beta:
            w -= prev_beta * basis[:, j - 1]
        active = basis[:, :j + 1]
        for _ in range(2):
            w -= active @ (active.T @ w)
            if deflate is not None and deflate.shape[1]:
                w -= deflate @ (deflate.T @ w)
        beta = float(np.linalg.norm(w))
        alphas.append(alpha)
        anorm = max(anorm, abs(alpha) + beta + prev_beta)
        j += 1
        if j == steps:
            break

        if beta <= BREAKDOWN_RATIO * max(anorm, np.finfo(float).tiny):
            # invariant subspace: continue from a fresh orthogonal vector
            q = _start_vector(rng, n, deflate, basis[:, :j])
            if q is None:
                converged = True
                break
            logger.debug("lanczos breakdown at step %d, restarting", j)
            betas.append(0.0)
            prev_beta = 0.0
            continue

        betas.append(beta)
        prev_beta = beta
        q = w / beta
        if j >= k and j % CONVERGENCE_CHECK_EVERY == 0:
            _, s = linalg.eigh_tridiagonal(np.array(alphas), np.array(betas[:-1]),
                                           select='i', select_range=(0, k - 1))
            if np.all(np.abs(beta * s[-1, :]) <= tol):
                converged = True
                break

    if j + (0 if deflate is None else deflate.shape[1]) >= n:
        converged = True
    theta, s = linalg.eigh_tridiagonal(np.array(alphas), np.array(betas[:j - 1]))
    keep = min(k, j)
    vectors = basis[:, :j] @ s[:, :keep]
    return theta[:keep], vectors, j, converged


def _rayleigh_ritz(op, vectors: np.ndarray, k: int) -> Tuple[np.ndarray, np.ndarray]:
    q, _ = linalg.qr(vectors, mode='economic')
    h = q.T @ op.matvec(q)
    values, s = linalg.eigh((h + h.T) * 0.5)
    return values[:k], q @ s[:, :k]


def lanczos_smallest(L, budget: SolverBudget,
                     max_passes: int = MAX_VERIFY_PASSES) -> SpectralEmbedding:
    """
    Smallest eigenpairs by Lanczos with full reorthogonalization.

    A first pass runs until every wanted Ritz residual is below budget.tol
    or budget.n_iter steps are spent. Verification passes then restart
    from fresh vectors deflated against the pairs found so far and merge
    any smaller eigenvalues they uncover, which recovers multiplicities
    a single Krylov sequence cannot see.

    Args:
        L: Sparse or dense symmetric operator
        budget: n_eig, n_iter, tol and seed

    Returns:
        SpectralEmbedding from the 'lanczos' solver
    """
    op = _as_operator(L)
    n, k = op.n, budget.n_eig
    if k > n:
        raise ParameterError(f"n_eig ({k}) exceeds matrix size ({n})")
    rng = derive_rng(budget.seed, f"{budget.stream}/lanczos")
    steps = min(budget.n_iter, n)

    values, vectors, used, converged = _lanczos_pass(op, k, steps, budget.tol, rng)
    total_steps = used
    if values.size < k:
        raise ConvergenceError(
            f"lanczos produced {values.size} of {k} eigenpairs", float('inf'))

    for _ in range(max_passes):
        if vectors.shape[1] >= n:
            break
        extra_vals, extra_vecs, used, extra_conv = _lanczos_pass(
            op, k, min(steps, n - vectors.shape[1]), budget.tol, rng, deflate=vectors)
        total_steps += used
        margin = 1e-10 * max(1.0, abs(values[-1]))
        smaller = extra_vals < values[-1] - margin
        if not np.any(smaller):
            break
        logger.debug("lanczos verification found %d smaller eigenvalues", int(smaller.sum()))
        values, vectors = _rayleigh_ritz(
            op, np.hstack([vectors, extra_vecs[:, smaller]]), k)
        converged = converged and extra_conv

    residual = _residual(op, vectors, values)
    warnings = []
    if not converged and residual > budget.tol:
        message = (f"lanczos stopped after {total_steps} steps with residual "
                   f"{residual:.3e} above tolerance {budget.tol:.1e}")
        logger.warning(message)
        warnings.append(message)
    return SpectralEmbedding(vectors, values, 'lanczos', residual=residual,
                             iterations=total_steps, warnings=warnings)


def default_l_col(n: int, n_eig: int) -> int:
    """ceil(log2 N), floored at max(n_eig, 16), capped at N."""
    return min(n, max(int(math.ceil(math.log2(max(n, 2)))), n_eig, NYSTROM_MIN_COLUMNS))


def _diagonal(op) -> np.ndarray:
    if hasattr(op, 'diagonal'):
        return op.diagonal()
    return np.diag(op.toarray())


def select_columns(op, l_col: int, rng: np.random.Generator,
                   min_columns: int = 1) -> np.ndarray:
    """
    Greedy column selection by residual norm against picked columns.

    Materialized operators score every column; implicit operators score a
    seeded candidate pool per pick. Selection stops early once every
    residual is negligible and at least ``min_columns`` are picked.
    """
    n = op.n
    picks: List[int] = []
    basis = np.zeros((n, 0))

    if op.storage != 'implicit':
        a = op.toarray()
        residual = np.einsum('ij,ij->j', a, a)
        first = residual.max()
        for _ in range(l_col):
            scores = residual.copy()
            scores[picks] = -np.inf
            j = int(np.argmax(scores))
            if len(picks) >= min_columns and scores[j] <= 1e-20 * first:
                break
            r = a[:, j].copy()
            for _ in range(2):
                r -= basis @ (basis.T @ r)
            norm = np.linalg.norm(r)
            picks.append(j)
            if norm > 0:
                q = r / norm
                basis = np.hstack([basis, q[:, None]])
                residual = np.maximum(residual - (a @ q) ** 2, 0.0)
        return np.asarray(picks, dtype=np.int64)

    remaining = np.ones(n, dtype=bool)
    first = None
    for _ in range(l_col):
        pool_ids = np.flatnonzero(remaining)
        if pool_ids.size > NYSTROM_CANDIDATE_POOL:
            pool_ids = np.sort(rng.choice(pool_ids, NYSTROM_CANDIDATE_POOL, replace=False))
        cols = op.columns(pool_ids)
        proj = basis.T @ cols
        scores = np.einsum('ij,ij->j', cols, cols) - np.einsum('ij,ij->j', proj, proj)
        best = int(np.argmax(scores))
        if first is None:
            first = scores[best]
        if len(picks) >= min_columns and scores[best] <= 1e-20 * first:
            break
        r = cols[:, best] - basis @ proj[:, best]
        r -= basis @ (basis.T @ r)
        norm = np.linalg.norm(r)
        picks.append(int(pool_ids[best]))
        remaining[pool_ids[best]] = False
        if norm > 0:
            basis = np.hstack([basis, (r / norm)[:, None]])
    return np.asarray(picks, dtype=np.int64)


def _block_pinv(block: np.ndarray, trace_per_node: float,
                warnings: List[str]) -> np.ndarray:
    block = (block + block.T) * 0.5
    spectrum = np.abs(linalg.eigvalsh(block))
    if spectrum.min() <= NYSTROM_SINGULAR_RATIO * max(spectrum.max(), np.finfo(float).tiny):
        ridge = NYSTROM_RIDGE_RATIO * abs(trace_per_node)
        message = f"nystrom sampled block is singular; added ridge {ridge:.2e}"
        logger.warning(message)
        warnings.append(message)
        block = block + ridge * np.eye(block.shape[0])
    return linalg.pinvh(block)


def nystrom_approximation(A, l_col: int, seed: int = 0, min_columns: int = 1,
                          warnings: Optional[List[str]] = None):
    """
    Rank-l_col Nystrom factors of a symmetric matrix.

    Returns:
        (C, U_pinv, picks) with A ~ C @ U_pinv @ C.T
    """
    op = _as_operator(A)
    if not 1 <= l_col <= op.n:
        raise ParameterError(f"l_col must be in [1, {op.n}], got {l_col}")
    rng = derive_rng(seed, "nystrom/columns")
    picks = select_columns(op, l_col, rng, min_columns=min_columns)
    c = op.columns(picks)
    trace_per_node = float(np.sum(_diagonal(op))) / op.n
    u_pinv = _block_pinv(c[picks], trace_per_node, warnings if warnings is not None else [])
    return c, u_pinv, picks


def nystrom_embed(A, budget: SolverBudget, which: str = 'SA') -> SpectralEmbedding:
    """
    Eigenpairs of the Nystrom approximation C U^+ C^T.

    Args:
        A: Dense (or implicit) symmetric operator
        budget: n_eig, l_col (default ceil(log2 N) floored at 16) and seed
        which: 'SA' for the smallest, 'LA' for the largest Ritz pairs in
            the range of the sampled columns

    Returns:
        SpectralEmbedding from the 'nystrom' solver, eigenvalues ascending
    """
    if which not in ('SA', 'LA'):
        raise ParameterError(f"which must be 'SA' or 'LA', got '{which}'")
    op = _as_operator(A)
    n, k = op.n, budget.n_eig
    l_col = budget.l_col if budget.l_col is not None else default_l_col(n, k)
    if l_col > n:
        raise ParameterError(f"l_col ({l_col}) exceeds matrix size ({n})")
    if k > l_col:
        raise ParameterError(f"n_eig ({k}) exceeds l_col ({l_col})")

    warnings: List[str] = []
    c, u_pinv, picks = nystrom_approximation(
        op, l_col, seed=budget.seed, min_columns=k, warnings=warnings)
    q, r = linalg.qr(c, mode='economic')
    core = r @ u_pinv @ r.T
    theta, s = linalg.eigh((core + core.T) * 0.5)
    chosen = slice(0, k) if which == 'SA' else slice(theta.size - k, theta.size)
    values = theta[chosen]
    vectors = q @ s[:, chosen]
    logger.debug("nystrom: n=%d l_col=%d picked=%d", n, l_col, picks.size)
    return SpectralEmbedding(vectors, values, 'nystrom',
                             residual=_residual(op, vectors, values),
                             iterations=int(picks.size), warnings=warnings)


def _exact_trace(op, y: np.ndarray) -> float:
    return float(np.sum(y * op.matvec(y)))


def minibatch_stiefel(L, budget: SolverBudget, record_every: int = 0,
                      eta0: float = 1.0) -> SpectralEmbedding:
    """
    Minimize tr(Y^T L Y) over orthonormal Y by mini-batch Riemannian descent.

    Each step samples a row batch B, scales the sampled rows of L Y by N/|B|
    into an unbiased gradient, projects it onto the tangent space at Y and
    retracts with a thin QR. The step size is eta0 |B| / (N rho) / sqrt(1 + t/tau)
    with rho a Gershgorin bound of L, so every sampled row moves by at most
    eta0 / rho of its own gradient row. A Rayleigh-Ritz step on the final Y
    gives the eigenvalue estimates.

    Running out of n_iter before the windowed trace estimate stalls is
    recorded as a warning on the result.

    Args:
        L: Dense or implicit symmetric PSD operator
        budget: n_eig, n_iter, batch (default round(sqrt(N))), tol and seed
        record_every: When > 0, record the exact trace every that many steps
        eta0: Step size relative to 1/rho, in (0, 2)

    Returns:
        SpectralEmbedding from the 'minibatch' solver
    """
    if not 0.0 < eta0 < 2.0:
        raise ParameterError(f"eta0 must be in (0, 2), got {eta0}")
    op = _as_operator(L)
    n, k = op.n, budget.n_eig
    if k > n:
        raise ParameterError(f"n_eig ({k}) exceeds matrix size ({n})")
    rng = derive_rng(budget.seed, f"{budget.stream}/minibatch")
    batch = budget.batch if budget.batch is not None else max(1, int(round(math.sqrt(n))))
    batch = min(batch, n)
    rho = max(op.gershgorin_bound(), np.finfo(float).tiny)
    base = eta0 * batch / (n * rho)
    tau = max(100.0, float(budget.n_iter))

    y, _ = linalg.qr(rng.standard_normal((n, k)), mode='economic')
    estimates: List[float] = []
    previous_mean = None
    history = []
    steps = 0
    stalled = False
    for t in range(budget.n_iter):
        rows = rng.choice(n, size=batch, replace=False)
        local = op.rows(rows) @ y
        grad = np.zeros_like(y)
        grad[rows] = (n / batch) * local
        estimates.append(float(np.sum(grad[rows] * y[rows])))

        ytg = y[rows].T @ grad[rows]
        tangent = grad - y @ ((ytg + ytg.T) * 0.5)
        y, r = linalg.qr(y - base / math.sqrt(1.0 + t / tau) * tangent, mode='economic')
        y *= np.sign(np.where(np.diag(r) == 0, 1.0, np.diag(r)))[None, :]
        steps = t + 1

        if record_every and steps % record_every == 0:
            history.append((steps, _exact_trace(op, y)))
        if steps % STIEFEL_WINDOW == 0:
            mean = float(np.mean(estimates[-STIEFEL_WINDOW:]))
            if previous_mean is not None and \
                    abs(mean - previous_mean) < budget.tol * max(1.0, abs(mean)):
                logger.debug("minibatch solver stalled at step %d", steps)
                stalled = True
                break
            previous_mean = mean

    ly = op.matvec(y)
    h = y.T @ ly
    values, s = linalg.eigh((h + h.T) * 0.5)
    if values[0] < -PSD_TOLERANCE:
        raise DomainError(
            f"operator is not positive semi-definite (Rayleigh quotient {values[0]:.3e})")
    vectors = y @ s
    residual = _residual(op, vectors, values)
    warnings = []
    if not stalled:
        message = (f"minibatch solver used its full budget of {steps} steps "
                   f"({steps * batch / n:.1f} passes over {n} rows) without stalling; "
                   f"residual {residual:.3e}")
        logger.warning("%s: %s", budget.stream, message)
        warnings.append(message)
    return SpectralEmbedding(vectors, values, 'minibatch', residual=residual,
                             iterations=steps, history=history, warnings=warnings)


def embed_graph(graph: AffinityGraph, laplacian_kind: str, solver: str,
                budget: SolverBudget) -> SpectralEmbedding:
    """
    Affinity graph -> Laplacian -> smallest eigenpairs, sign-normalized.

    Random-walk embeddings are solved on the symmetric Laplacian and mapped
    back by D^{-1/2}, each column rescaled to unit norm. Nystrom works on
    the reflected operator 2E - L_sym, whose largest pairs are the wanted
    smallest ones.
    """
    if laplacian_kind not in ('sym', 'rw'):
        raise ParameterError(f"embeddings use 'sym' or 'rw' Laplacians, got '{laplacian_kind}'")
    lap = laplacian(graph, 'sym')

    if solver == 'dense':
        embedding = dense_eigh(lap, budget.n_eig)
    elif solver == 'lanczos':
        embedding = lanczos_smallest(lap, budget)
    elif solver == 'nystrom':
        reflected = nystrom_embed(ShiftedOperator(lap, 2.0), budget, which='LA')
        values = 2.0 - reflected.eigenvalues[::-1]
        vectors = reflected.rows[:, ::-1]
        embedding = SpectralEmbedding(vectors, values, 'nystrom',
                                      residual=_residual(lap, vectors, values),
                                      iterations=reflected.iterations,
                                      warnings=reflected.warnings)
    elif solver == 'minibatch':
        embedding = minibatch_stiefel(lap, budget)
    else:
        raise ParameterError(f"unknown solver '{solver}'")

    rows = embedding.rows
    if laplacian_kind == 'rw':
        rows = rows * lap.inv_sqrt_degrees[:, None]
        norms = np.linalg.norm(rows, axis=0)
        rows = rows / np.where(norms > 0, norms, 1.0)[None, :]
    embedding.rows = fix_signs(rows)
    return embedding
