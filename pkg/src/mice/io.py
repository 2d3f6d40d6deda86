"""File formats.

Binary tensor file (little-endian throughout)::

    offset  size  field
    0       8     magic b"MLNETv01"
    8       8     dtype code: 0 adjacency, 1 float64 probability, 2 mask
    16      8     n (uint64)
    24      8     K (uint64)
    32      ...   K*n*n elements, layer-major, row-major within a layer;
                  adjacency/mask one byte each, probabilities float64

Edge-list text: one section per layer, headed ``layer k of K, n nodes``,
followed by ``i j`` lines with 1-based node indices.  ``#`` starts a comment.

All user-facing indices are 1-based; everything in memory is 0-based.
"""

from __future__ import annotations

import hashlib
import os
import re
import tempfile
from pathlib import Path

import numpy as np

from .tensors import AdjacencyTensor, MaskTensor, ProbabilityTensor, as_array

MAGIC = b"MLNETv01"
HEADER_SIZE = 32
DTYPE_ADJACENCY = 0
DTYPE_PROBABILITY = 1
DTYPE_MASK = 2
FORMAT_VERSION = "mice-io/1"

_CODES = {AdjacencyTensor: DTYPE_ADJACENCY, ProbabilityTensor: DTYPE_PROBABILITY,
          MaskTensor: DTYPE_MASK}
_CLASSES = {v: k for k, v in _CODES.items()}


class FormatError(ValueError):
    pass


def atomic_write(path, payload: bytes | str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = payload.encode("utf-8") if isinstance(payload, str) else payload
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ----------------------------------------------------------------------------
# binary tensors


def tensor_to_bytes(tensor) -> bytes:
    code = _CODES.get(type(tensor))
    if code is None:
        raise TypeError(f"cannot serialize {type(tensor).__name__}")
    data = tensor.data
    K, n = data.shape[0], data.shape[1]
    header = MAGIC + np.array([code, n, K], dtype="<u8").tobytes()
    if code == DTYPE_PROBABILITY:
        payload = np.ascontiguousarray(data, dtype="<f8").tobytes()
    else:
        payload = np.ascontiguousarray(data, dtype=np.uint8).tobytes()
    return header + payload


def tensor_from_bytes(raw: bytes):
    if len(raw) < HEADER_SIZE:
        raise FormatError(f"size mismatch: file has {len(raw)} bytes, header needs {HEADER_SIZE}")
    if raw[:8] != MAGIC:
        raise FormatError(f"bad magic {raw[:8]!r}, expected {MAGIC!r}")
    code, n, K = (int(x) for x in np.frombuffer(raw, dtype="<u8", count=3, offset=8))
    if code not in _CLASSES:
        raise FormatError(f"unknown dtype code {code}")
    itemsize = 8 if code == DTYPE_PROBABILITY else 1
    expected = HEADER_SIZE + K * n * n * itemsize
    if len(raw) != expected:
        raise FormatError(f"size mismatch: header declares n={n}, K={K} "
                          f"({expected} bytes), file has {len(raw)} bytes")
    if code == DTYPE_PROBABILITY:
        data = np.frombuffer(raw, dtype="<f8", offset=HEADER_SIZE).astype(np.float64)
    else:
        data = np.frombuffer(raw, dtype=np.uint8, offset=HEADER_SIZE)
        if data.size and data.max() > 1:
            bad = int(np.argmax(data > 1))
            raise FormatError(f"payload byte {int(data[bad])} at element {bad} not in {{0, 1}}")
    data = data.reshape(K, n, n)
    try:
        return _CLASSES[code](data)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def write_tensor(path, tensor) -> None:
    atomic_write(path, tensor_to_bytes(tensor))


def read_tensor(path, expect=None):
    """Read a binary tensor file; ``expect`` optionally checks the tensor class."""
    with open(path, "rb") as fh:
        tensor = tensor_from_bytes(fh.read())
    if expect is not None and not isinstance(tensor, expect):
        raise FormatError(f"{path}: expected {expect.__name__}, found {type(tensor).__name__}")
    return tensor


# ----------------------------------------------------------------------------
# edge lists

_HEADER = re.compile(r"layer\s+(\d+)\s+of\s+(\d+)\s*,\s*(\d+)\s+nodes", re.IGNORECASE)


def parse_edge_lists(text: str, source: str = "<text>", *, line_offset: int = 0):
    """Parse edge-list sections into ``{layer: [(i, j), ...]}`` plus ``(K, n)``."""
    sections: dict[int, list[tuple[int, int]]] = {}
    K = n = None
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1 + line_offset):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _HEADER.fullmatch(line)
        if m:
            k, K_decl, n_decl = (int(g) for g in m.groups())
            if K is not None and (K_decl, n_decl) != (K, n):
                raise FormatError(f"{source}:{lineno}: header declares K={K_decl}, n={n_decl}; "
                                  f"earlier headers declared K={K}, n={n}")
            K, n = K_decl, n_decl
            if not 1 <= k <= K:
                raise FormatError(f"{source}:{lineno}: layer {k} out of range 1..{K}")
            if n < 1:
                raise FormatError(f"{source}:{lineno}: node count must be positive")
            current = k
            sections.setdefault(k, [])
            continue
        if current is None:
            raise FormatError(f"{source}:{lineno}: edge before any 'layer k of K, n nodes' header")
        parts = line.split()
        if len(parts) != 2 or not all(re.fullmatch(r"[+-]?\d+", p) for p in parts):
            raise FormatError(f"{source}:{lineno}: malformed edge line {raw.strip()!r}")
        i, j = int(parts[0]), int(parts[1])
        for v in (i, j):
            if not 1 <= v <= n:
                raise FormatError(f"{source}:{lineno}: node index {v} out of range 1..{n}")
        if i == j:
            raise FormatError(f"{source}:{lineno}: self-loop {i} {j} not allowed")
        sections[current].append((i, j))
    return sections, K, n


def _edge_sources(path) -> list[Path]:
    path = Path(path)
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.is_file() and not p.name.startswith("."))
        if not files:
            raise FormatError(f"{path}: directory contains no edge-list files")
        return files
    return [path]


def read_edge_lists(path) -> AdjacencyTensor:
    """Read a multi-section edge-list file, or every file of a directory in name order."""
    sections: dict[int, list[tuple[int, int]]] = {}
    K = n = None
    for f in _edge_sources(path):
        part, K_f, n_f = parse_edge_lists(f.read_text(), str(f))
        if K_f is None:
            continue
        if K is not None and (K_f, n_f) != (K, n):
            raise FormatError(f"{f}: declares K={K_f}, n={n_f}; expected K={K}, n={n}")
        K, n = K_f, n_f
        for k, edges in part.items():
            sections.setdefault(k, []).extend(edges)
    if K is None:
        raise FormatError(f"{path}: no layer sections found")
    missing = sorted(set(range(1, K + 1)) - set(sections))
    if missing:
        raise FormatError(f"{path}: missing layers {missing}")
    A = np.zeros((K, n, n), dtype=np.uint8)
    for k, edges in sections.items():
        if edges:
            e = np.asarray(edges, dtype=np.intp) - 1
            A[k - 1, e[:, 0], e[:, 1]] = 1
            A[k - 1, e[:, 1], e[:, 0]] = 1
    return AdjacencyTensor(A)


def format_edge_lists(A) -> str:
    data = as_array(A)
    K, n = data.shape[0], data.shape[1]
    lines = []
    for k in range(K):
        lines.append(f"layer {k + 1} of {K}, {n} nodes")
        i, j = np.nonzero(np.triu(data[k], 1))
        lines.extend(f"{a + 1} {b + 1}" for a, b in zip(i, j))
    return "\n".join(lines) + "\n"


def write_edge_lists(path, A) -> None:
    atomic_write(path, format_edge_lists(A))


# ----------------------------------------------------------------------------
# TSV and key=value text


def fmt(x) -> str:
    """Shortest round-tripping representation; fixed '.' decimal point."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def format_tsv(columns: list[str], rows) -> str:
    out = ["\t".join(columns)]
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
        out.append("\t".join(fmt(v) for v in row))
    return "\n".join(out) + "\n"


def write_tsv(path, columns: list[str], rows) -> None:
    atomic_write(path, format_tsv(columns, rows))


def read_tsv(path, columns: list[str] | None = None) -> list[dict[str, str]]:
    """Parse a TSV written by :func:`write_tsv`, checking the header if ``columns`` is given."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise FormatError(f"{path}: empty TSV")
    header = lines[0].split("\t")
    if columns is not None and header != list(columns):
        raise FormatError(f"{path}: header {header} does not match expected {list(columns)}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split("\t")
        if len(fields) != len(header):
            raise FormatError(f"{path}:{lineno}: {len(fields)} fields, expected {len(header)}")
        rows.append(dict(zip(header, fields)))
    return rows


def format_key_values(items) -> str:
    return "".join(f"{k} = {fmt(v)}\n" for k, v in items)


def write_latents(path, latents) -> None:
    rows = [("xi", i + 1, v) for i, v in enumerate(latents.xi)]
    rows += [("eta", k + 1, v) for k, v in enumerate(latents.eta)]
    write_tsv(path, ["kind", "index", "value"], rows)


def read_latents(path):
    xi, eta = {}, {}
    for row in read_tsv(path, ["kind", "index", "value"]):
        target = {"xi": xi, "eta": eta}.get(row["kind"])
        if target is None:
            raise FormatError(f"{path}: unknown latent kind {row['kind']!r}")
        target[int(row["index"]) - 1] = float(row["value"])
    return (np.array([xi[i] for i in range(len(xi))]),
            np.array([eta[k] for k in range(len(eta))]))
