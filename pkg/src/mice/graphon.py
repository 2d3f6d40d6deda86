"""Multi-layer graphon models and seeded network simulation.

Random streams use numpy's PCG64 bit generator seeded through ``SeedSequence``.
Each purpose draws from its own stream so that, e.g., layer ``k`` of the
adjacency tensor depends only on ``(seed, k)``:

=============  ==========================
stream         SeedSequence entropy
=============  ==========================
latents        ``[seed, 0]``
adjacency k    ``[seed, 1, k]``
mask k         ``[seed, 2, k]``
=============  ==========================

Surrogate graphon definitions are versioned by ``GRAPHON_VERSION``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensors import AdjacencyTensor, ProbabilityTensor

RNG_NAME = "numpy.random.PCG64/SeedSequence"
GRAPHON_VERSION = "surrogates-v1"

STREAM_LATENTS = 0
STREAM_ADJACENCY = 1
STREAM_MASK = 2


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, key)])))


@dataclass(frozen=True)
class LatentPositions:
    xi: np.ndarray
    eta: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.xi.size

    @property
    def K(self) -> int:
        return self.eta.size


def sample_latents(n: int, K: int, seed: int) -> LatentPositions:
    if n < 1 or K < 1:
        raise ValueError(f"need n >= 1 and K >= 1, got n={n}, K={K}")
    rng = stream(seed, STREAM_LATENTS)
    xi = rng.random(n)
    eta = rng.random(K)
    xi.flags.writeable = False
    eta.flags.writeable = False
    return LatentPositions(xi, eta, int(seed))


Evaluator = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GraphonModel:
    """A ternary graphon ``f(u, v, w)``, symmetric in ``(u, v)``.

    ``evaluator`` must broadcast over numpy arrays.
    """

    id: str
    parameters: dict
    evaluator: Evaluator

    def __call__(self, u, v, w):
        return self.evaluator(np.asarray(u, dtype=float), np.asarray(v, dtype=float),
                              np.asarray(w, dtype=float))

    @property
    def label(self) -> str:
        if self.id == "Constant":
            return f"Constant({self.parameters['c']!r})"
        return self.id


def _block(x):
    return np.minimum(np.floor(2.0 * x), 1.0)


def _g1(u, v, w):
    p_in = 0.6 + 0.2 * w
    p_out = 0.1 + 0.1 * w
    return np.where(_block(u) == _block(v), p_in, p_out)


def _g2(u, v, w):
    return np.clip(0.5 + 0.3 * np.sin(5.0 * np.pi * (u + v)) * (0.5 + 0.5 * w), 0.05, 0.95)


def _g3(u, v, w):
    return 1.0 / (1.0 + np.exp(-4.0 * (u + v - 1.0) - 2.0 * (w - 0.5)))


def _g4(u, v, w):
    # products grouped so that swapping u and v is bitwise exact
    f = 0.3 + 0.2 * (np.cos(8.0 * np.pi * u) * np.cos(8.0 * np.pi * v)) + 0.2 * (u * v) * w
    return np.clip(f, 0.05, 0.95)


def _g5(u, v, w):
    return np.clip(np.abs(u - v) * (0.8 - 0.4 * w) + 0.1, 0.05, 0.95)


_BUILTINS: dict[str, Evaluator] = {"G1": _g1, "G2": _g2, "G3": _g3, "G4": _g4, "G5": _g5}


def constant_graphon(c: float) -> GraphonModel:
    c = float(c)
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"constant graphon value {c} outside [0, 1]")
    return GraphonModel("Constant", {"c": c},
                        lambda u, v, w: np.full(np.broadcast(u, v, w).shape, c))


def custom_graphon(fn: Evaluator, **parameters) -> GraphonModel:
    return GraphonModel("Custom", dict(parameters), fn)


def builtin_graphon(id: str, parameters: dict | None = None) -> GraphonModel:
    """Look up a built-in model: ``G1``..``G5`` or ``Constant`` (``{"c": value}``).

    ``"Constant(0.3)"`` is accepted as shorthand.
    """
    parameters = dict(parameters or {})
    m = re.fullmatch(r"\s*constant\s*\(\s*([^)]+?)\s*\)\s*", id, flags=re.IGNORECASE)
    if m:
        return constant_graphon(float(m.group(1)))
    key = id.strip()
    if key.lower() == "constant":
        if "c" not in parameters:
            raise ValueError("Constant graphon needs parameter c")
        return constant_graphon(parameters["c"])
    key = key.upper()
    if key not in _BUILTINS:
        raise ValueError(f"unknown graphon id {id!r}; expected one of "
                         f"{sorted(_BUILTINS)} or Constant(c)")
    if parameters:
        raise ValueError(f"graphon {key} takes no parameters, got {sorted(parameters)}")
    return GraphonModel(key, {}, _BUILTINS[key])


def build_probability_tensor(model: GraphonModel, latents: LatentPositions) -> ProbabilityTensor:
    xi, eta = latents.xi, latents.eta
    n = xi.size
    u = xi[None, :, None]
    v = xi[None, None, :]
    w = eta[:, None, None]
    P = np.array(np.broadcast_to(model(u, v, w), (eta.size, n, n)), dtype=np.float64)
    bad = ~np.isfinite(P) | (P < 0.0) | (P > 1.0)
    if bad.any():
        k, i, j = (int(x[0]) for x in np.nonzero(bad))
        raise ValueError(
            f"graphon {model.label} returned {P[k, i, j]!r} outside [0, 1] at "
            f"(u, v, w)=({xi[i]!r}, {xi[j]!r}, {eta[k]!r})"
        )
    # exact symmetry even for evaluators that are only symmetric up to rounding
    upper = np.triu(P, 1)
    P = upper + np.swapaxes(upper, 1, 2)
    return ProbabilityTensor(P, check=False)


def sample_adjacency(P: ProbabilityTensor, seed: int) -> AdjacencyTensor:
    """Independent Bernoulli edges for ``i < j``, mirrored; one stream per layer."""
    data = P.data
    K, n = data.shape[0], data.shape[1]
    iu, ju = np.triu_indices(n, 1)
    A = np.zeros((K, n, n), dtype=np.uint8)
    for k in range(K):
        draws = stream(seed, STREAM_ADJACENCY, k).random(iu.size)
        edges = (draws < data[k, iu, ju]).astype(np.uint8)
        A[k, iu, ju] = edges
        A[k, ju, iu] = edges
    return AdjacencyTensor(A, check=False)


def simulate(model: GraphonModel, n: int, K: int, seed: int):
    """Latents, probability tensor and adjacency tensor from a single seed."""
    latents = sample_latents(n, K, seed)
    P = build_probability_tensor(model, latents)
    A = sample_adjacency(P, seed)
    return latents, P, A
