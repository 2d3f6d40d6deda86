"""Neighborhood-smoothing estimators for multi-layer connection probabilities.

The smoothing average for ``(i, j, k)`` sums ``A[k', i', j']`` over the layer
neighbors ``k'`` of ``k`` and the node neighbors ``i'`` of ``i`` and ``j'`` of
``j`` *within layer k'*, then divides by ``s * s * t``.  Writing ``B[k']`` for
the 0/1 node-neighbor indicator of layer ``k'`` (``B[k'][i, i'] = 1`` iff
``i'`` is a neighbor of ``i``), the inner double sum is ``B A B^T`` for that
layer, so one iteration costs two matrix products per layer plus a
layer-neighbor aggregation.  All sums are integer counts held in float64
(exact below 2**53) and divided once at the end, so results are independent of
summation order and of the number of worker threads.

Iterates are carried as integer counts with the common denominator ``s*s*t``.
Distances computed on counts are exact integers, which keeps neighbor
selection free of floating-point ties.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .tensors import (
    MaskedAdjacency,
    ProbabilityTensor,
    as_array,
    layer_distance_matrix,
    row_distance_matrix,
)

log = logging.getLogger(__name__)


class Mode(str, Enum):
    MICE = "MICE"
    ICE = "ICE"
    ORACLE = "ORACLE"

    @classmethod
    def parse(cls, value) -> "Mode":
        if isinstance(value, Mode):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ValueError(f"invalid mode {value!r}; expected MICE, ICE or ORACLE") from None


@dataclass(frozen=True)
class NeighborhoodConfig:
    D_i: float = 0.5
    G_k: float = 1.0
    s_override: int | None = None
    t_override: int | None = None
    delta_0: float = 1e-4
    max_iters: int = 50
    mode: Mode = Mode.MICE
    mask_aware: bool = False
    exclude_self_pairs: bool = False
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode.parse(self.mode))
        if not self.D_i > 0 or not self.G_k > 0:
            raise ValueError("D_i and G_k must be positive")
        if not self.delta_0 > 0:
            raise ValueError("delta_0 must be positive")
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.s_override is not None and self.s_override < 1:
            raise ValueError("s_override must be >= 1")
        if self.t_override is not None and self.t_override < 1:
            raise ValueError("t_override must be >= 1")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def default_sizes(n: int, K: int, cfg: NeighborhoodConfig | None = None) -> tuple[int, int]:
    """Node and layer neighborhood sizes ``(s, t)``.

    ``s = D_i * sqrt(n log n)`` and ``t = G_k * sqrt(K log K)``, rounded half up
    and clamped to ``[1, n-1]`` and ``[1, K]``.  Explicit overrides are clamped
    the same way.  ICE mode always uses ``t = 1``.
    """
    cfg = cfg or NeighborhoodConfig()
    if n < 2 or K < 1:
        raise ValueError(f"need n >= 2 and K >= 1, got n={n}, K={K}")
    s = cfg.s_override if cfg.s_override is not None else _round_half_up(
        cfg.D_i * math.sqrt(n * math.log(n)))
    t = cfg.t_override if cfg.t_override is not None else _round_half_up(
        cfg.G_k * math.sqrt(K * math.log(K)))
    s = min(max(s, 1), n - 1)
    t = min(max(t, 1), K)
    if cfg.mode is Mode.ICE:
        t = 1
    return s, t


@dataclass
class NeighborSets:
    """Layer and node neighborhoods.

    ``layer_sets[k]`` is an index array of length ``t`` starting with ``k``.
    ``node_sets[k']`` is an ``(n, s)`` array whose row ``i`` lists the node
    neighbors of ``i`` in layer ``k'`` (never ``i`` itself).  Node sets are
    stored for every layer since each layer's sets depend only on that layer.
    """

    layer_sets: np.ndarray  # (K, t)
    node_sets: np.ndarray  # (K, n, s)

    @property
    def s(self) -> int:
        return self.node_sets.shape[2]

    @property
    def t(self) -> int:
        return self.layer_sets.shape[1]

    def layer_set(self, k: int) -> list[int]:
        return [int(x) for x in self.layer_sets[k]]

    def node_set(self, i: int, k2: int) -> list[int]:
        return [int(x) for x in self.node_sets[k2, i]]


def _top_excluding(dist_row: np.ndarray, exclude: int, size: int) -> np.ndarray:
    """Indices of the ``size`` smallest entries other than ``exclude``, ties by index."""
    d = np.array(dist_row, dtype=np.float64, copy=True)
    d[exclude] = np.inf
    order = np.argsort(d, kind="stable")
    return order[:size]


def _check_size(size: int, lo: int, hi: int, what: str) -> None:
    if not lo <= size <= hi:
        raise ValueError(f"{what} size {size} out of range [{lo}, {hi}]")


def select_layers_from_distances(D: np.ndarray, k: int, t: int) -> np.ndarray:
    K = D.shape[0]
    _check_size(t, 1, K, "layer neighborhood")
    others = _top_excluding(D[k], k, t - 1)
    return np.concatenate(([k], others)).astype(np.intp)


def select_nodes_from_distances(D: np.ndarray, i: int, s: int) -> np.ndarray:
    n = D.shape[0]
    _check_size(s, 1, n - 1, "node neighborhood")
    return _top_excluding(D[i], i, s).astype(np.intp)


def select_layer_neighbors(P, k: int, t: int) -> list[int]:
    """The ``t`` layers closest to ``k`` (``k`` first), ties broken by lower index."""
    D = layer_distance_matrix(P)
    return [int(x) for x in select_layers_from_distances(D, k, t)]


def select_node_neighbors(P, k2: int, i: int, s: int) -> list[int]:
    """The ``s`` nodes ``i' != i`` with smallest row distance to ``i`` in layer ``k2``.

    Rows identical to row ``i`` (distance 0) stay eligible.
    """
    data = as_array(P)
    D = row_distance_matrix(data[k2])
    return [int(x) for x in select_nodes_from_distances(D, i, s)]


def _all_node_sets(D: np.ndarray, s: int) -> np.ndarray:
    """Vectorized top-``s`` per row of a distance matrix, excluding the diagonal."""
    n = D.shape[0]
    _check_size(s, 1, n - 1, "node neighborhood")
    d = np.array(D, dtype=np.float64, copy=True)
    np.fill_diagonal(d, np.inf)
    return np.argsort(d, axis=1, kind="stable")[:, :s].astype(np.intp)


def _all_layer_sets(D: np.ndarray, t: int) -> np.ndarray:
    K = D.shape[0]
    _check_size(t, 1, K, "layer neighborhood")
    d = np.array(D, dtype=np.float64, copy=True)
    np.fill_diagonal(d, np.inf)
    others = np.argsort(d, axis=1, kind="stable")[:, : t - 1]
    return np.concatenate((np.arange(K)[:, None], others), axis=1).astype(np.intp)


def build_neighbor_sets(P, s: int, t: int, *, ice: bool = False, threads: int = 1) -> NeighborSets:
    """Neighbor sets from plug-in distances on ``P`` (``(K, n, n)`` array or tensor)."""
    data = as_array(P)
    K = data.shape[0]
    if ice or t == 1:
        layer_sets = np.arange(K, dtype=np.intp)[:, None]
        if ice and t != 1:
            raise ValueError("ICE mode requires t = 1")
    else:
        layer_sets = _all_layer_sets(layer_distance_matrix(data), t)

    def one(k):
        return _all_node_sets(row_distance_matrix(data[k]), s)

    node_sets = np.stack(_map(one, range(K), threads))
    return NeighborSets(layer_sets, node_sets)


def _map(fn, items, threads: int) -> list:
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _indicator(node_sets_k: np.ndarray, n: int) -> np.ndarray:
    B = np.zeros((n, n), dtype=np.float64)
    rows = np.repeat(np.arange(n), node_sets_k.shape[1])
    B[rows, node_sets_k.ravel()] = 1.0
    return B


_adjacency_data = as_array


def smoothing_counts(A, sets: NeighborSets, *, threads: int = 1,
                     weights: np.ndarray | None = None) -> np.ndarray:
    """Integer numerators of the smoothing average, shape ``(K, n, n)``.

    ``weights`` replaces the adjacency data (used for mask-aware denominators).
    """
    data = _adjacency_data(A) if weights is None else weights
    K, n = data.shape[0], data.shape[1]
    if sets.node_sets.shape[:2] != (K, n) or sets.layer_sets.shape[0] != K:
        raise ValueError("neighbor sets do not match adjacency dimensions")
    if sets.s < 1 or sets.t < 1:
        raise ValueError("empty neighbor set")
    needed = np.unique(sets.layer_sets)

    def per_layer(k2):
        B = _indicator(sets.node_sets[k2], n)
        return B @ data[k2].astype(np.float64) @ B.T

    layer_counts = np.zeros((K, n, n), dtype=np.float64)
    for k2, C in zip(needed, _map(per_layer, needed, threads)):
        layer_counts[k2] = C
    # aggregate over layer neighbors; exact integers in float64
    W = np.zeros((K, K), dtype=np.float64)
    W[np.repeat(np.arange(K), sets.t), sets.layer_sets.ravel()] = 1.0
    total = (W @ layer_counts.reshape(K, n * n)).reshape(K, n, n)
    total = (total + np.swapaxes(total, 1, 2)) / 2.0  # already symmetric; guards layout
    idx = np.arange(n)
    total[:, idx, idx] = 0.0
    return np.rint(total)


def _denominator_weights(A, n: int, K: int, mask, exclude_self_pairs: bool):
    """0/1 weights whose smoothed counts give per-entry denominators, or None."""
    if mask is None and not exclude_self_pairs:
        return None
    if mask is not None:
        w = np.array(as_array(mask), dtype=np.float64)
    else:
        w = np.ones((K, n, n), dtype=np.float64)
    if exclude_self_pairs:
        idx = np.arange(n)
        w[:, idx, idx] = 0.0
    return w


def smoothing_update(A, sets: NeighborSets, *, mask=None, exclude_self_pairs: bool = False,
                     threads: int = 1) -> ProbabilityTensor:
    """One smoothing pass: counts divided by ``s*s*t``.

    Pairs with ``i' == j'`` add ``A[k', i', i'] = 0`` and still count in the
    denominator.  Two opt-in variants divide instead by the number of
    contributing entries: ``mask`` counts only observed entries,
    ``exclude_self_pairs`` drops the ``i' == j'`` terms.
    """
    counts = smoothing_counts(A, sets, threads=threads)
    data = as_array(A)
    weights = _denominator_weights(A, data.shape[1], data.shape[0], mask, exclude_self_pairs)
    if weights is None:
        P = counts / float(sets.s * sets.s * sets.t)
    else:
        den = smoothing_counts(A, sets, threads=threads, weights=weights)
        P = np.where(den > 0, counts / np.maximum(den, 1.0), 0.0)
    return ProbabilityTensor(P, check=False)


def compute_delta(P_new, P_old) -> float:
    """Relative change: sum_k ||new_k - old_k||_F / sum_k ||old_k||_F."""
    new = as_array(P_new)
    old = as_array(P_old)
    if new.shape != old.shape:
        raise ValueError(f"dimension mismatch: {new.shape} vs {old.shape}")
    den = float(np.sum(np.sqrt(np.sum(old.astype(np.float64) ** 2, axis=(1, 2)))))
    if den == 0.0:
        raise ValueError("non-convergent configuration: previous estimate is identically zero")
    diff = new.astype(np.float64) - old
    num = float(np.sum(np.sqrt(np.sum(diff * diff, axis=(1, 2)))))
    return num / den


# ----------------------------------------------------------------------------
# warm start


def proxy_node_distances(layer: np.ndarray) -> np.ndarray:
    """Integer node distances of one adjacency slice.

    Entry ``(i, i')`` is ``max over l != i, i' of |<A_i - A_i', A_l>|``; the
    caller divides by ``n``.  Uses ``G = A A`` so that
    ``<A_i - A_i', A_l> = G[i, l] - G[i', l]``.
    """
    A = np.asarray(layer, dtype=np.int64)
    n = A.shape[0]
    G = (A @ A).astype(np.int32)
    D = np.zeros((n, n), dtype=np.int64)
    idx = np.arange(n)
    for i in range(n):
        diff = np.abs(G - G[i])  # row i', column l
        diff[:, i] = 0
        diff[idx, idx] = 0
        D[i] = diff.max(axis=1)
    D = np.maximum(D, D.T)
    D[idx, idx] = 0
    return D


def warm_start(A, cfg: NeighborhoodConfig | None = None) -> ProbabilityTensor:
    """One-pass multi-layer neighborhood smoothing computed from ``A`` alone.

    Layers are matched on ``||A^k - A^k'||_F^2 / n^2``.  Node distances use the
    max-inner-product proxy per layer, pooled for layer ``k'`` by averaging over
    the layer neighbors of ``k'``.  One smoothing pass follows.
    """
    cfg = cfg or NeighborhoodConfig()
    return _warm_start_counts(A, cfg)[0]


def _warm_start_counts(A, cfg: NeighborhoodConfig):
    data = _adjacency_data(A)
    K, n = data.shape[0], data.shape[1]
    s, t = default_sizes(n, K, cfg)
    ice = cfg.mode is Mode.ICE
    if ice or t == 1:
        layer_sets = np.arange(K, dtype=np.intp)[:, None]
    else:
        layer_sets = _all_layer_sets(layer_distance_matrix(data), t)
    proxies = np.stack(_map(lambda k: proxy_node_distances(data[k]), range(K), cfg.threads))
    node_sets = np.empty((K, n, s), dtype=np.intp)
    for k2 in range(K):
        pooled = proxies[layer_sets[k2]].sum(axis=0)  # integer; scaling irrelevant to order
        node_sets[k2] = _all_node_sets(pooled, s)
    sets = NeighborSets(layer_sets, node_sets)
    P = smoothing_update(A, sets, mask=_mask_for(A, cfg),
                         exclude_self_pairs=cfg.exclude_self_pairs, threads=cfg.threads)
    return P, sets


def _mask_for(A, cfg: NeighborhoodConfig):
    return A.mask if (cfg.mask_aware and isinstance(A, MaskedAdjacency)) else None


# ----------------------------------------------------------------------------
# iteration


@dataclass
class IterationRecord:
    m: int
    delta: float
    wall_time: float
    layer_rmse: list[float] | None = None


@dataclass
class IterationTrace:
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    delta_0: float = 1e-4
    s: int = 0
    t: int = 0

    @property
    def deltas(self) -> list[float]:
        return [r.delta for r in self.records]

    @property
    def iterations(self) -> int:
        return len(self.records)

    def __len__(self) -> int:
        return len(self.records)


def _layer_rmse(P: np.ndarray, truth: np.ndarray) -> list[float]:
    n = P.shape[1]
    diff = P - truth
    idx = np.arange(n)
    diff[:, idx, idx] = 0.0
    return [float(x) for x in np.sqrt(np.sum(diff * diff, axis=(1, 2)) / (n * (n - 1)))]


def _as_prob_array(P0) -> np.ndarray:
    data = as_array(P0)
    if not np.all(np.isfinite(data)):
        raise ValueError("initial estimate contains non-finite values")
    return data.astype(np.float64)


def mice_estimate(A, P0=None, cfg: NeighborhoodConfig | None = None, *,
                  P_true=None) -> tuple[ProbabilityTensor, IterationTrace]:
    """Iterative neighborhood smoothing.

    Parameters
    ----------
    A : AdjacencyTensor or MaskedAdjacency
        Observations.  Masked entries count as 0.
    P0 : ProbabilityTensor, optional
        Initial estimate; defaults to :func:`warm_start`.
    cfg : NeighborhoodConfig
        ``mode`` selects MICE, ICE (layer sets pinned to ``{k}``) or ORACLE.
    P_true : ProbabilityTensor, optional
        Ground truth.  Required in ORACLE mode, where neighbor sets are built
        once from it and a single smoothing pass is returned.  Otherwise only
        used to record per-layer RMSE in the trace.

    Returns
    -------
    (estimate, trace)
    """
    cfg = cfg or NeighborhoodConfig()
    data = _adjacency_data(A)
    K, n = data.shape[0], data.shape[1]
    s, t = default_sizes(n, K, cfg)
    ice = cfg.mode is Mode.ICE
    truth = None if P_true is None else _as_prob_array(P_true)
    if truth is not None and truth.shape != data.shape:
        raise ValueError(f"dimension mismatch: truth {truth.shape} vs adjacency {data.shape}")
    mask = _mask_for(A, cfg)
    plain = mask is None and not cfg.exclude_self_pairs
    trace = IterationTrace(delta_0=cfg.delta_0, s=s, t=t)
    denom = float(s * s * t)

    if cfg.mode is Mode.ORACLE:
        if truth is None:
            raise ValueError("ORACLE mode requires the true probability tensor")
        start = time.perf_counter()
        sets = build_neighbor_sets(truth, s, t, threads=cfg.threads)
        P = smoothing_update(A, sets, mask=mask, exclude_self_pairs=cfg.exclude_self_pairs,
                             threads=cfg.threads)
        rec = IterationRecord(1, compute_delta(P, truth), time.perf_counter() - start,
                              _layer_rmse(P.data, truth))
        trace.records.append(rec)
        trace.converged = True
        return P, trace

    if P0 is None:
        P_cur, _ = _warm_start_counts(A, cfg)
        if cfg.max_iters == 0:
            return P_cur, trace
        current = P_cur.data
        # warm start shares the denominator, so counts are exact integers
        basis = np.rint(current * denom) if plain else None
    else:
        current = _as_prob_array(P0)
        if current.shape != data.shape:
            raise ValueError(f"dimension mismatch: P0 {current.shape} vs adjacency {data.shape}")
        basis = None
        if cfg.max_iters == 0:
            return ProbabilityTensor(current, check=False), trace

    for m in range(cfg.max_iters):
        start = time.perf_counter()
        dist_input = basis if basis is not None else current
        sets = build_neighbor_sets(dist_input, s, t, ice=ice, threads=cfg.threads)
        if plain:
            counts = smoothing_counts(A, sets, threads=cfg.threads)
            new = counts / denom
        else:
            counts = None
            new = smoothing_update(A, sets, mask=mask, exclude_self_pairs=cfg.exclude_self_pairs,
                                   threads=cfg.threads).data
        delta = compute_delta(new, current)
        rec = IterationRecord(m + 1, delta, time.perf_counter() - start,
                              None if truth is None else _layer_rmse(new, truth))
        trace.records.append(rec)
        log.debug("iteration %d: delta=%.3e", m + 1, delta)
        current, basis = new, counts
        if delta <= cfg.delta_0:
            trace.converged = True
            break
    return ProbabilityTensor(current, check=False), trace


def ice_config(cfg: NeighborhoodConfig) -> NeighborhoodConfig:
    return replace(cfg, mode=Mode.ICE)
