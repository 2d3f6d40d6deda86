"""Dense multi-layer network tensors.

All tensors are stored layer-major as numpy arrays of shape ``(K, n, n)``;
``data[k]`` is the ``n x n`` slice of layer ``k``.  Indices are 0-based here;
the file formats in :mod:`mice.io` translate to 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class Violation(NamedTuple):
    kind: str  # "asymmetric" | "out_of_range" | "nonzero_diagonal" | "non_finite"
    index: tuple[int, int, int]  # (i, j, k), 0-based
    value: float


@dataclass(frozen=True)
class ValidationResult:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def _frozen(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    if out.ndim == 2:
        out = out[None, :, :]
    if out.ndim != 3 or out.shape[1] != out.shape[2]:
        raise ValueError(f"expected a (K, n, n) array, got shape {np.shape(arr)}")
    if out.shape[0] < 1 or out.shape[1] < 1:
        raise ValueError("tensor must have n >= 1 and K >= 1")
    out.flags.writeable = False
    return out


class _Tensor:
    dtype = np.float64
    data: np.ndarray

    def __init__(self, data, *, check: bool = True):
        self.data = _frozen(data, self.dtype)
        if check:
            res = validate(self)
            if not res.ok:
                v = res.violations[0]
                raise ValueError(
                    f"invalid {type(self).__name__}: {len(res.violations)} violation(s), "
                    f"first {v.kind} at (i, j, k)={v.index} value={v.value}"
                )

    @property
    def K(self) -> int:
        return self.data.shape[0]

    @property
    def n(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    def layer(self, k: int) -> np.ndarray:
        return self.data[k]

    def __eq__(self, other) -> bool:
        return type(self) is type(other) and np.array_equal(self.data, other.data)

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={self.n}, K={self.K})"


class AdjacencyTensor(_Tensor):
    """Binary, symmetric, zero-diagonal adjacency tensor."""

    dtype = np.uint8

    def __init__(self, data, *, check: bool = True):
        arr = np.asarray(data)
        if check and arr.dtype.kind == "f" and not np.all(np.isin(arr, (0.0, 1.0))):
            raise ValueError("adjacency entries must be exactly 0 or 1")
        super().__init__(arr, check=check)

    def density(self) -> float:
        n = self.n
        if n < 2:
            return 0.0
        iu = np.triu_indices(n, 1)
        return float(self.data[:, iu[0], iu[1]].mean())


class ProbabilityTensor(_Tensor):
    """Symmetric tensor of connection probabilities in [0, 1]."""

    dtype = np.float64


class MaskTensor(_Tensor):
    """Observation mask: 1 = observed, 0 = masked.  Diagonal is 1 by convention."""

    dtype = np.uint8

    def __init__(self, data, *, rho: float | None = None, seed: int | None = None,
                 check: bool = True):
        self.rho = rho
        self.seed = seed
        super().__init__(data, check=check)

    @classmethod
    def ones(cls, n: int, K: int) -> "MaskTensor":
        return cls(np.ones((K, n, n), dtype=np.uint8), rho=0.0)

    def masked_fraction(self) -> float:
        iu = np.triu_indices(self.n, 1)
        if iu[0].size == 0:
            return 0.0
        return float(1.0 - self.data[:, iu[0], iu[1]].mean())


def validate(tensor) -> ValidationResult:
    """Check symmetry, range and diagonal rules.

    Violations are returned rather than raised.  Asymmetric pairs are reported
    once, at the upper-triangle location ``(i, j, k)`` with ``i < j``.
    """
    if isinstance(tensor, _Tensor):
        data = tensor.data
        kind = type(tensor)
    else:
        data = np.asarray(tensor)
        kind = ProbabilityTensor
    if data.ndim == 2:
        data = data[None]
    out: list[Violation] = []
    binary = kind in (AdjacencyTensor, MaskTensor)

    values = data.astype(np.float64)
    bad = ~np.isfinite(values)
    for k, i, j in zip(*np.nonzero(bad)):
        out.append(Violation("non_finite", (int(i), int(j), int(k)), float(values[k, i, j])))
    if binary:
        bad_range = ~np.isin(values, (0.0, 1.0)) & ~bad
    else:
        bad_range = ((values < 0.0) | (values > 1.0)) & ~bad
    for k, i, j in zip(*np.nonzero(bad_range)):
        out.append(Violation("out_of_range", (int(i), int(j), int(k)), float(values[k, i, j])))

    asym = values != np.swapaxes(values, 1, 2)
    asym &= ~(bad | np.swapaxes(bad, 1, 2))
    for k, i, j in zip(*np.nonzero(np.triu(asym, 1))):
        out.append(Violation("asymmetric", (int(i), int(j), int(k)), float(values[k, i, j])))

    if kind is not MaskTensor:
        diag = np.diagonal(values, axis1=1, axis2=2)
        for k, i in zip(*np.nonzero(diag != 0)):
            out.append(Violation("nonzero_diagonal", (int(i), int(i), int(k)), float(diag[k, i])))
    return ValidationResult(out)


def as_array(P) -> np.ndarray:
    """The ``(K, n, n)`` array behind a tensor, masked view or plain array."""
    data = P.data if isinstance(P, (_Tensor, MaskedAdjacency)) else np.asarray(P)
    if data.ndim == 2:
        data = data[None]
    return data


def _check_index(idx: int, size: int, what: str) -> None:
    if not 0 <= idx < size:
        raise IndexError(f"{what} index {idx} out of range [0, {size})")


def layer_distance(P, k: int, k2: int) -> float:
    """Normalized squared Frobenius distance between two layers, n^-2 ||P^k - P^k2||_F^2."""
    data = as_array(P)
    K, n = data.shape[0], data.shape[1]
    _check_index(k, K, "layer")
    _check_index(k2, K, "layer")
    diff = data[k].astype(np.float64) - data[k2]
    return float(np.sum(diff * diff) / (n * n))


def row_distance(P, k: int, i: int, i2: int) -> float:
    """Normalized squared Euclidean distance between rows i and i2 of layer k."""
    data = as_array(P)
    K, n = data.shape[0], data.shape[1]
    _check_index(k, K, "layer")
    _check_index(i, n, "node")
    _check_index(i2, n, "node")
    diff = data[k, i].astype(np.float64) - data[k, i2]
    return float(np.dot(diff, diff) / n)


def layer_distance_matrix(P) -> np.ndarray:
    """All pairwise layer distances as a ``(K, K)`` array.

    Computed through the Gram matrix of the flattened layers.  For integer-valued
    inputs (e.g. smoothing counts) every intermediate is an exact integer, so the
    result does not depend on BLAS blocking or thread count.
    """
    data = as_array(P)
    K, n = data.shape[0], data.shape[1]
    flat = data.reshape(K, n * n).astype(np.float64)
    gram = flat @ flat.T
    sq = np.diag(gram)
    d = sq[:, None] + sq[None, :] - 2.0 * gram
    np.fill_diagonal(d, 0.0)
    np.maximum(d, 0.0, out=d)
    return d / (n * n)


def row_distance_matrix(layer: np.ndarray) -> np.ndarray:
    """All pairwise row distances of one ``n x n`` slice, same exactness caveat."""
    X = np.asarray(layer, dtype=np.float64)
    n = X.shape[0]
    gram = X @ X.T
    sq = np.diag(gram)
    d = sq[:, None] + sq[None, :] - 2.0 * gram
    np.fill_diagonal(d, 0.0)
    np.maximum(d, 0.0, out=d)
    return d / n


class MaskedAdjacency:
    """Adjacency tensor observed through a mask.

    ``data`` holds ``M * A`` (masked entries read as 0); ``mask`` and the
    unmasked ``full`` tensor are kept so evaluation can separate absent edges
    from unobserved ones.
    """

    def __init__(self, full: AdjacencyTensor, mask: MaskTensor):
        self.full = full
        self.mask = mask
        data = full.data * mask.data
        data.flags.writeable = False
        self.data = data

    n = property(lambda self: self.full.n)
    K = property(lambda self: self.full.K)
    shape = property(lambda self: self.full.shape)

    def observed(self) -> AdjacencyTensor:
        return AdjacencyTensor(self.data, check=False)

    def evaluation_pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(k, i, j) index arrays of masked upper-triangle entries."""
        hidden = np.triu(self.mask.data == 0, 1)
        k, i, j = np.nonzero(hidden)
        return k, i, j


def apply_mask(A: AdjacencyTensor, M: MaskTensor) -> MaskedAdjacency:
    if A.shape != M.shape:
        raise ValueError(f"dimension mismatch: adjacency {A.shape} vs mask {M.shape}")
    return MaskedAdjacency(A, M)
