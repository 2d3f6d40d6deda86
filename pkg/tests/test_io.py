import struct

import numpy as np
import pytest

from conftest import random_adjacency, random_probability
from mice.evaluation import generate_mask
from mice.io import (
    HEADER_SIZE,
    FormatError,
    format_edge_lists,
    read_edge_lists,
    read_latents,
    read_tensor,
    read_tsv,
    tensor_from_bytes,
    tensor_to_bytes,
    write_edge_lists,
    write_latents,
    write_tensor,
    write_tsv,
)
from mice.graphon import sample_latents
from mice.tensors import AdjacencyTensor, MaskTensor, ProbabilityTensor


def test_adjacency_round_trip(tmp_path, rng):
    A = AdjacencyTensor(random_adjacency(rng, 5, 3))
    write_tensor(tmp_path / "a.mlt", A)
    B = read_tensor(tmp_path / "a.mlt", AdjacencyTensor)
    assert B == A


def test_probability_and_mask_round_trip(tmp_path, rng):
    P = ProbabilityTensor(random_probability(rng, 7, 2))
    write_tensor(tmp_path / "p.mlt", P)
    assert read_tensor(tmp_path / "p.mlt").data.tobytes() == P.data.tobytes()
    M = generate_mask(7, 2, 0.3, seed=1)
    write_tensor(tmp_path / "m.mlt", M)
    assert isinstance(read_tensor(tmp_path / "m.mlt"), MaskTensor)


def test_expected_type_checked(tmp_path, rng):
    write_tensor(tmp_path / "a.mlt", AdjacencyTensor(random_adjacency(rng, 4, 1)))
    with pytest.raises(FormatError, match="expected ProbabilityTensor"):
        read_tensor(tmp_path / "a.mlt", ProbabilityTensor)


def test_truncated_file(rng):
    raw = tensor_to_bytes(AdjacencyTensor(random_adjacency(rng, 5, 3)))
    with pytest.raises(FormatError, match="size mismatch"):
        tensor_from_bytes(raw[:-1])
    with pytest.raises(FormatError, match="size mismatch"):
        tensor_from_bytes(raw[:10])


def test_bad_magic(rng):
    raw = tensor_to_bytes(AdjacencyTensor(random_adjacency(rng, 3, 1)))
    with pytest.raises(FormatError, match="bad magic"):
        tensor_from_bytes(b"XXXXXXXX" + raw[8:])


def test_out_of_range_payload(rng):
    raw = bytearray(tensor_to_bytes(AdjacencyTensor(random_adjacency(rng, 3, 1))))
    raw[HEADER_SIZE + 1] = 7
    with pytest.raises(FormatError, match="payload byte 7"):
        tensor_from_bytes(bytes(raw))


def test_probability_offset_arithmetic():
    n, K = 4, 3
    P = np.zeros((K, n, n))
    k, i, j = 2, 1, 3
    P[k, i, j] = P[k, j, i] = 0.3
    raw = tensor_to_bytes(ProbabilityTensor(P))
    offset = 8 + 3 * 8 + 8 * (k * n * n + i * n + j)
    assert raw[offset:offset + 8] == struct.pack("<d", 0.3)
    assert raw[:8] == b"MLNETv01"
    assert struct.unpack("<3Q", raw[8:32]) == (1, n, K)


def test_edge_list_single_edge(tmp_path):
    f = tmp_path / "e.txt"
    f.write_text("layer 1 of 1, 3 nodes\n1 2\n")
    A = read_edge_lists(f)
    expected = np.zeros((1, 3, 3), dtype=np.uint8)
    expected[0, 0, 1] = expected[0, 1, 0] = 1
    assert np.array_equal(A.data, expected)


def test_edge_list_duplicates_idempotent(tmp_path):
    a, b = tmp_path / "a.txt", tmp_path / "b.txt"
    a.write_text("layer 1 of 1, 3 nodes\n1 2\n")
    b.write_text("layer 1 of 1, 3 nodes\n1 2\n2 1\n1 2\n")
    assert read_edge_lists(a) == read_edge_lists(b)


def test_edge_list_zero_index_reports_line(tmp_path):
    f = tmp_path / "e.txt"
    f.write_text("# comment\nlayer 1 of 1, 3 nodes\n1 2\n0 2\n")
    with pytest.raises(FormatError, match=r"e\.txt:4: node index 0 out of range 1\.\.3"):
        read_edge_lists(f)


@pytest.mark.parametrize("body, message", [
    ("layer 1 of 1, 3 nodes\n1 4\n", "out of range"),
    ("layer 1 of 1, 3 nodes\n1 2 3\n", "malformed"),
    ("layer 1 of 1, 3 nodes\n1 x\n", "malformed"),
    ("layer 1 of 1, 3 nodes\n2 2\n", "self-loop"),
    ("1 2\n", "before any"),
    ("layer 1 of 2, 3 nodes\n1 2\n", "missing layers"),
    ("layer 1 of 2, 3 nodes\nlayer 2 of 2, 4 nodes\n", "earlier headers"),
])
def test_edge_list_errors(tmp_path, body, message):
    f = tmp_path / "e.txt"
    f.write_text(body)
    with pytest.raises(FormatError, match=message):
        read_edge_lists(f)


def test_edge_list_directory_in_name_order(tmp_path):
    (tmp_path / "01.txt").write_text("layer 1 of 2, 3 nodes\n1 2\n")
    (tmp_path / "02.txt").write_text("layer 2 of 2, 3 nodes\n2 3\n")
    A = read_edge_lists(tmp_path)
    assert A.K == 2 and A.data[0, 0, 1] == 1 and A.data[1, 1, 2] == 1


def test_edge_list_write_read_round_trip(tmp_path, rng):
    A = AdjacencyTensor(random_adjacency(rng, 9, 3))
    write_edge_lists(tmp_path / "e.txt", A)
    assert read_edge_lists(tmp_path / "e.txt") == A
    assert format_edge_lists(A).startswith("layer 1 of 3, 9 nodes\n")


def test_tsv_round_trip_and_schema(tmp_path):
    write_tsv(tmp_path / "t.tsv", ["a", "b"], [(1, 0.1), (2, True)])
    rows = read_tsv(tmp_path / "t.tsv", ["a", "b"])
    assert rows == [{"a": "1", "b": "0.1"}, {"a": "2", "b": "true"}]
    with pytest.raises(FormatError, match="header"):
        read_tsv(tmp_path / "t.tsv", ["a", "c"])


def test_latents_round_trip(tmp_path):
    lat = sample_latents(6, 3, seed=4)
    write_latents(tmp_path / "l.tsv", lat)
    xi, eta = read_latents(tmp_path / "l.tsv")
    assert np.array_equal(xi, lat.xi) and np.array_equal(eta, lat.eta)


def test_atomic_write_leaves_no_temp_files(tmp_path, rng):
    write_tensor(tmp_path / "a.mlt", AdjacencyTensor(random_adjacency(rng, 3, 1)))
    assert [p.name for p in tmp_path.iterdir()] == ["a.mlt"]
