"""Accuracy metrics, link-prediction evaluation and the replication harness."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .estimators import Mode, NeighborhoodConfig, mice_estimate, warm_start
from .graphon import STREAM_MASK, GraphonModel, builtin_graphon, simulate, stream
from .tensors import MaskTensor, apply_mask, as_array

TAU_GRID_SIZE = 201
EXACT_SCORE_LIMIT = 10_000


def _check_pair(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")


def _per_layer_mean(values: np.ndarray) -> np.ndarray:
    """Mean over off-diagonal entries of each layer."""
    n = values.shape[1]
    if n < 2:
        raise ValueError("need n >= 2 for off-diagonal averages")
    idx = np.arange(n)
    v = values.copy()
    v[:, idx, idx] = 0.0
    return v.sum(axis=(1, 2)) / (n * (n - 1))


def per_layer_rmse(P_hat, P_true) -> np.ndarray:
    a, b = as_array(P_hat).astype(np.float64), as_array(P_true).astype(np.float64)
    _check_pair(a, b)
    return np.sqrt(_per_layer_mean((a - b) ** 2))


def rmse(P_hat, P_true) -> float:
    """Root of the layer-averaged off-diagonal mean squared error."""
    a, b = as_array(P_hat).astype(np.float64), as_array(P_true).astype(np.float64)
    _check_pair(a, b)
    return float(math.sqrt(np.mean(_per_layer_mean((a - b) ** 2))))


def mae(P_hat, P_true) -> float:
    a, b = as_array(P_hat).astype(np.float64), as_array(P_true).astype(np.float64)
    _check_pair(a, b)
    return float(np.mean(_per_layer_mean(np.abs(a - b))))


# ----------------------------------------------------------------------------
# masking and ROC


def generate_mask(n: int, K: int, rho: float, seed: int) -> MaskTensor:
    """Each ``i < j`` entry is masked with probability ``rho``; mirrored; diagonal observed."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"missing rate rho={rho} outside [0, 1]")
    iu, ju = np.triu_indices(n, 1)
    M = np.ones((K, n, n), dtype=np.uint8)
    for k in range(K):
        observed = (stream(seed, STREAM_MASK, k).random(iu.size) >= rho).astype(np.uint8)
        M[k, iu, ju] = observed
        M[k, ju, iu] = observed
    return MaskTensor(M, rho=rho, seed=seed, check=False)


class UndefinedRate(ValueError):
    """A rate whose denominator is empty (no masked positives or negatives, no predictions)."""


@dataclass(frozen=True)
class RocPoint:
    tau: float
    fpr: float
    tpr: float


def _masked_scores(P_hat, A, M) -> tuple[np.ndarray, np.ndarray]:
    P = as_array(P_hat)
    Ad = as_array(getattr(A, "full", A))
    Md = as_array(M)
    if not (P.shape == Ad.shape == Md.shape):
        raise ValueError(f"dimension mismatch: {P.shape}, {Ad.shape}, {Md.shape}")
    n = P.shape[1]
    iu, ju = np.triu_indices(n, 1)
    hidden = Md[:, iu, ju] == 0
    return P[:, iu, ju][hidden].astype(np.float64), Ad[:, iu, ju][hidden].astype(bool)


def default_taus(scores: np.ndarray | None = None) -> np.ndarray:
    """201 evenly spaced thresholds in [0, 1], plus the distinct scores when few enough."""
    taus = np.linspace(0.0, 1.0, TAU_GRID_SIZE)
    if scores is not None and scores.size < EXACT_SCORE_LIMIT:
        taus = np.union1d(taus, np.unique(scores))
    return taus


def roc_curve(P_hat, A, M, taus: Sequence[float] | None = None) -> list[RocPoint]:
    """TPR and FPR over masked unordered pairs, predicting an edge when score > tau.

    ``A`` is the full (unmasked) adjacency or a :class:`MaskedAdjacency`.
    Points are returned in ascending ``tau``.
    """
    scores, labels = _masked_scores(P_hat, A, M)
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedRate(
            f"ROC undefined: {n_pos} masked positives and {n_neg} masked negatives")
    taus = default_taus(scores) if taus is None else np.unique(np.asarray(taus, dtype=float))
    pos = np.sort(scores[labels])
    neg = np.sort(scores[~labels])
    # count of scores strictly greater than tau
    tp = pos.size - np.searchsorted(pos, taus, side="right")
    fp = neg.size - np.searchsorted(neg, taus, side="right")
    return [RocPoint(float(t), fp_ / n_neg, tp_ / n_pos) for t, fp_, tp_ in zip(taus, fp, tp)]


def auc(points) -> float:
    """Trapezoidal area under an ROC curve, with (0, 0) and (1, 1) appended.

    ``points`` holds :class:`RocPoint` objects or ``(fpr, tpr)`` pairs.
    """
    pts = [(p.fpr, p.tpr) if isinstance(p, RocPoint) else (float(p[0]), float(p[1]))
           for p in points]
    pts = sorted(set(pts + [(0.0, 0.0), (1.0, 1.0)]))
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    area = float(np.sum(np.diff(x) * (y[1:] + y[:-1]) / 2.0))
    return min(max(area, 0.0), 1.0)


def temporal_precision(P_hat_prev, A_prev, A_next, tau: float = 0.5) -> float:
    """Fraction of predicted new links (previously absent, score > tau) that appear next epoch."""
    P = as_array(P_hat_prev)
    a0 = as_array(A_prev)
    a1 = as_array(A_next)
    if not (P.shape == a0.shape == a1.shape):
        raise ValueError(f"dimension mismatch: {P.shape}, {a0.shape}, {a1.shape}")
    iu, ju = np.triu_indices(P.shape[1], 1)
    predicted = (P[:, iu, ju] > tau) & (a0[:, iu, ju] == 0)
    total = int(predicted.sum())
    if total == 0:
        raise UndefinedRate("no predicted new links: precision undefined")
    hits = int((predicted & (a1[:, iu, ju] == 1)).sum())
    return hits / total


# ----------------------------------------------------------------------------
# replication harness


@dataclass(frozen=True)
class MethodSpec:
    """A named estimator configuration.  ``kind`` is MICE, ICE, ORACLE or WARM."""

    name: str
    kind: str
    config: NeighborhoodConfig = field(default_factory=NeighborhoodConfig)


def method(kind: str, config: NeighborhoodConfig | None = None, name: str | None = None) -> MethodSpec:
    kind = kind.strip().upper()
    if kind not in ("MICE", "ICE", "ORACLE", "WARM"):
        raise ValueError(f"unknown method {kind!r}")
    cfg = config or NeighborhoodConfig()
    if kind != "WARM":
        cfg = replace(cfg, mode=Mode(kind))
    return MethodSpec(name or kind, kind, cfg)


def run_method(spec: MethodSpec, A, P_true=None):
    """Estimate with one method; returns ``(estimate, trace or None)``."""
    if spec.kind == "WARM":
        return warm_start(A, spec.config), None
    return mice_estimate(A, cfg=spec.config, P_true=P_true)


@dataclass(frozen=True)
class ScenarioSpec:
    graphon: GraphonModel
    grid_name: str  # "n" or "K"
    grid: tuple[int, ...]
    fixed: int  # the other dimension
    replications: int = 1
    methods: tuple[MethodSpec, ...] = (MethodSpec("MICE", "MICE"),)
    base_seed: int = 0

    def __post_init__(self):
        if self.grid_name not in ("n", "K"):
            raise ValueError("grid_name must be 'n' or 'K'")
        if not self.grid:
            raise ValueError("scenario grid is empty")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.methods:
            raise ValueError("no methods to compare")

    def dims(self, value: int) -> tuple[int, int]:
        return (value, self.fixed) if self.grid_name == "n" else (self.fixed, value)


def replication_seed(base_seed: int, replication: int) -> int:
    """Seed shared by every grid point and method for one replication index."""
    return int(np.random.SeedSequence([int(base_seed), int(replication)]).generate_state(1)[0])


@dataclass
class ReplicationResult:
    grid_value: int
    replication: int
    seed: int
    method: str
    rmse: float
    mae: float
    iterations: int | None = None
    converged: bool | None = None
    deltas: list[float] | None = None


@dataclass
class ScenarioRow:
    grid_name: str
    grid_value: int
    method: str
    replications: int
    rmse_mean: float
    rmse_se: float
    mae_mean: float
    mae_se: float


@dataclass
class ScenarioReport:
    spec: ScenarioSpec
    rows: list[ScenarioRow]
    replications: list[ReplicationResult]

    def values(self, grid_value: int, method_name: str, metric: str = "rmse") -> np.ndarray:
        """Per-replication metric values, ordered by replication index."""
        sel = sorted((r for r in self.replications
                      if r.grid_value == grid_value and r.method == method_name),
                     key=lambda r: r.replication)
        return np.array([getattr(r, metric) for r in sel])


def mean_se(values) -> tuple[float, float]:
    """Mean and standard error; values are sorted first so the sum is order-independent."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValueError("no values")
    mean = float(np.sum(v) / v.size)
    if v.size < 2:
        return mean, 0.0
    sd = float(np.sqrt(np.sum((v - mean) ** 2) / (v.size - 1)))
    return mean, sd / math.sqrt(v.size)


def paired_difference(a, b) -> tuple[float, float]:
    """Mean and standard error of ``a - b`` over paired replications."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    if a.shape != b.shape:
        raise ValueError("paired samples differ in length")
    return mean_se(a - b)


def _one_replication(spec: ScenarioSpec, value: int, rep: int) -> list[ReplicationResult]:
    n, K = spec.dims(value)
    seed = replication_seed(spec.base_seed, rep)
    _, P, A = simulate(spec.graphon, n, K, seed)
    out = []
    for m in spec.methods:
        est, trace = run_method(m, A, P_true=P)
        out.append(ReplicationResult(
            value, rep, seed, m.name, rmse(est, P), mae(est, P),
            None if trace is None else trace.iterations,
            None if trace is None else trace.converged,
            None if trace is None else trace.deltas,
        ))
    return out


def run_scenario(spec: ScenarioSpec, threads: int = 1) -> ScenarioReport:
    """Replicated simulation study over a grid of ``n`` or ``K`` values.

    Replication ``r`` uses the same seed at every grid point and for every
    method, so comparisons are paired.  Replications may run on ``threads``
    workers; the output does not depend on the worker count.
    """
    jobs = [(value, rep) for value in spec.grid for rep in range(spec.replications)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(lambda j: _one_replication(spec, *j), jobs))
    else:
        chunks = [_one_replication(spec, *j) for j in jobs]
    results = [r for chunk in chunks for r in chunk]
    rows = []
    for value in spec.grid:
        for m in spec.methods:
            sel = [r for r in results if r.grid_value == value and r.method == m.name]
            rm, rse = mean_se([r.rmse for r in sel])
            am, ase = mean_se([r.mae for r in sel])
            rows.append(ScenarioRow(spec.grid_name, value, m.name, len(sel), rm, rse, am, ase))
    return ScenarioReport(spec, rows, results)


def scenario(graphon: str | GraphonModel, grid_name: str, grid, fixed: int, *,
             replications: int = 1, methods=("MICE",), base_seed: int = 0,
             config: NeighborhoodConfig | None = None) -> ScenarioSpec:
    """Convenience constructor for :class:`ScenarioSpec`."""
    model = builtin_graphon(graphon) if isinstance(graphon, str) else graphon
    ms = tuple(m if isinstance(m, MethodSpec) else method(m, config) for m in methods)
    return ScenarioSpec(model, grid_name, tuple(int(g) for g in grid), int(fixed),
                        int(replications), ms, int(base_seed))


def link_prediction(A, rho: float, seed: int, methods, taus=None):
    """Mask, estimate from the observed part with each method, and score masked entries.

    Returns ``{method name: (roc points, auc)}``.
    """
    M = generate_mask(A.n, A.K, rho, seed)
    obs = apply_mask(A, M)
    out = {}
    for m in methods:
        spec = m if isinstance(m, MethodSpec) else method(m)
        est, _ = run_method(spec, obs)
        pts = roc_curve(est, A, M, taus)
        out[spec.name] = (pts, auc(pts))
    return out
