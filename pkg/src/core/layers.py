"""
SA-Net layer types: spectral analysis, pooling, binarization and coding.
"""
import logging
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from joblib import Parallel, delayed
from numpy.lib.stride_tricks import sliding_window_view

from core.affinity import build_affinity, component_count
from core.eigensolver import embed_graph
from core.exceptions import (ConnectivityError, ConsistencyError, LayerError,
                             ParameterError, SANetError)
from core.patches import stack_embeddings
from data.models import (BinaryMaps, FeatureMaps, PatchGrid, ProcedureSpec,
                         SolverBudget, SpectralEmbedding)

logger = logging.getLogger(__name__)

DEFAULT_CODE_GROUP = 8


def procedure_stream(layer: int, spec: ProcedureSpec) -> str:
    """Random stream id of a procedure; identical specs share it."""
    return (f"layer{layer}/{spec.affinity_text}/{spec.laplacian}/"
            f"{spec.solver}/{spec.n_eig}")


def run_procedure(points: np.ndarray, spec: ProcedureSpec, seed: int,
                  layer: int = 1, procedure: int = 0, n_iter: int = 1000,
                  tol: float = 1e-10, require_connected: bool = True) -> SpectralEmbedding:
    """
    Affinity -> Laplacian -> embedding for one procedure.

    Raises:
        ConnectivityError: sparse graph with several components when
            require_connected is set
    """
    graph = build_affinity(points, spec.affinity, spec.param)
    if spec.is_sparse and require_connected:
        components = component_count(graph)
        if components > 1:
            raise ConnectivityError(components, procedure)
    budget = SolverBudget(n_eig=spec.n_eig, n_iter=max(n_iter, spec.n_eig),
                          seed=seed, tol=tol, stream=procedure_stream(layer, spec))
    embedding = embed_graph(graph, spec.laplacian, spec.solver, budget)
    logger.debug("layer %d procedure %d (%s): residual %.2e",
                 layer, procedure, spec.affinity_text, embedding.residual)
    return embedding


def _guarded(points, spec, seed, layer, procedure, n_iter, tol, require_connected):
    try:
        return run_procedure(points, spec, seed, layer, procedure, n_iter, tol,
                             require_connected)
    except LayerError:
        raise
    except SANetError as e:
        raise LayerError(layer, e, procedure=procedure) from e


def spectral_layer(inputs: Sequence[PatchGrid], procs: Sequence[ProcedureSpec], seed: int,
                   layer: int = 1, require_connected: bool = True, n_iter: int = 1000,
                   tol: float = 1e-10, n_jobs: int = 1,
                   diagnostics: Optional[List[Dict]] = None) -> List[FeatureMaps]:
    """
    Run parallel spectral procedures over the pooled patches of all images.

    Args:
        inputs: One PatchGrid per image, all of the same grid shape
        procs: Procedures, concatenated channel-wise in this order
        seed: Master seed
        layer: Layer index used in stream ids and error messages
        require_connected: Reject disconnected sparse graphs
        n_iter: Lanczos / mini-batch iteration budget
        tol: Solver residual tolerance
        n_jobs: Procedures solved concurrently
        diagnostics: When given, receives one record per procedure

    Returns:
        One FeatureMaps per image with sum(n_eig) channels
    """
    if not procs:
        raise ParameterError("a spectral layer needs at least one procedure")
    if not inputs:
        raise ConsistencyError("a spectral layer needs at least one image")
    shapes = {(g.rows, g.cols, g.patches.shape[1]) for g in inputs}
    if len(shapes) > 1:
        raise ConsistencyError(f"images produce mixed patch grids: {sorted(shapes)}")

    grid_rows, grid_cols = inputs[0].rows, inputs[0].cols
    points = np.concatenate([g.patches for g in inputs], axis=0)
    logger.info("layer %d: %d procedures on %d points of dimension %d",
                layer, len(procs), points.shape[0], points.shape[1])

    embeddings = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_guarded)(points, spec, seed, layer, t, n_iter, tol, require_connected)
        for t, spec in enumerate(procs))

    per_procedure = [stack_embeddings(e, grid_rows, grid_cols, len(inputs), procedure=t)
                     for t, e in enumerate(embeddings)]
    if diagnostics is not None:
        for t, e in enumerate(embeddings):
            diagnostics.append({
                'layer': layer,
                'procedure': t,
                'solver': e.solver,
                'residual': e.residual,
                'iterations': e.iterations,
                'warnings': list(e.warnings),
            })

    outputs = []
    for i in range(len(inputs)):
        maps = [stacks[i] for stacks in per_procedure]
        values = np.concatenate([m.values for m in maps], axis=2)
        lineage = [record for m in maps for record in m.channel_lineage]
        outputs.append(FeatureMaps(values, lineage))
    return outputs


def pool(maps: Union[FeatureMaps, BinaryMaps], grid: int = 2,
         stride: Optional[int] = None) -> Union[FeatureMaps, BinaryMaps]:
    """
    Max-magnitude pooling keeping the signed value.

    Windows of grid x grid are anchored at stride steps and zero-padded at
    the borders; ties go to the first maximum in row-major window order.
    Binary maps pool to binary maps (a window is 1 if any of its bits is).
    """
    stride = grid if stride is None else stride
    if grid < 1 or stride < 1:
        raise ParameterError(f"pool grid and stride must be >= 1, got {grid}, {stride}")

    rows, cols, channels = maps.shape
    out_rows = -(-rows // stride)
    out_cols = -(-cols // stride)
    need_rows = (out_rows - 1) * stride + grid
    need_cols = (out_cols - 1) * stride + grid
    binary = isinstance(maps, BinaryMaps)
    values = maps.bits if binary else maps.values
    padded = np.pad(values, ((0, max(0, need_rows - rows)),
                             (0, max(0, need_cols - cols)), (0, 0)))

    windows = sliding_window_view(padded, (grid, grid), axis=(0, 1))
    windows = windows[::stride, ::stride][:out_rows, :out_cols]
    flat = windows.reshape(out_rows, out_cols, channels, grid * grid)
    winner = np.argmax(np.abs(flat), axis=-1)
    pooled = np.take_along_axis(flat, winner[..., None], axis=-1)[..., 0]
    if binary:
        return BinaryMaps(pooled, list(maps.channel_lineage))
    return FeatureMaps(pooled, list(maps.channel_lineage))


def binarize(maps: Union[FeatureMaps, BinaryMaps]) -> BinaryMaps:
    """Bit 1 where the value is strictly positive."""
    values = maps.bits if isinstance(maps, BinaryMaps) else maps.values
    return BinaryMaps((values > 0).astype(np.uint8), list(maps.channel_lineage))


def coding_order(maps: BinaryMaps) -> List[int]:
    """Channel order by (eigenvalue, procedure, rank)."""
    return sorted(range(maps.channels), key=lambda c: maps.channel_lineage[c].sort_key())


def code(maps: BinaryMaps, group: int = DEFAULT_CODE_GROUP) -> FeatureMaps:
    """
    Pack eigenvalue-ordered groups of L binary maps into decimal maps.

    Within a group the j-th map (0-based) has weight 2^(L-1-j), so maps of
    smaller eigenvalues carry larger weights. A short final group leaves
    its low-weight positions empty.
    """
    if group < 1:
        raise ParameterError(f"coding group must be >= 1, got {group}")
    order = coding_order(maps)
    n_groups = -(-maps.channels // group)
    weights = 2.0 ** np.arange(group - 1, -1, -1)
    coded = np.zeros((maps.rows, maps.cols, n_groups))
    lineage = []
    for g in range(n_groups):
        members = order[g * group:(g + 1) * group]
        bits = maps.bits[:, :, members].astype(np.float64)
        coded[:, :, g] = bits @ weights[:len(members)]
        lineage.append(maps.channel_lineage[members[0]])
    return FeatureMaps(coded, lineage)
