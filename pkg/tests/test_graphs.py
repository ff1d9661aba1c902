import mpmath
import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcnprune.exceptions import ConfigError, ParseError, ValidationError
from gcnprune.graphs import (
    GraphDataset,
    Split,
    build_normalized_adjacency,
    degree_histogram,
    load_dataset,
    load_dataset_dir,
    make_planetoid_split,
    synth_barabasi_albert,
    synth_erdos_renyi,
    write_dataset_dir,
)
from gcnprune.tensor import csr_transpose

from oracles import degree_counts, normalized_adjacency_dense


def graph(n, undirected_edges, n_classes=1):
    e = []
    for u, v in undirected_edges:
        e += [(u, v), (v, u)]
    e = sorted(set(e))
    return GraphDataset(n, np.array(e, dtype=np.int64).reshape(-1, 2), np.eye(n),
                        np.zeros(n, dtype=np.int64), n_classes).validate()


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# -- loading -------------------------------------------------------------

def test_two_node_file_is_symmetrized(tmp_path):
    ds = load_dataset(
        write(tmp_path, "edges.txt", "0 1\n"),
        write(tmp_path, "features.csv", "0,1.0\n1,2.0\n"),
        write(tmp_path, "labels.csv", "0,0\n1,1\n"),
    )
    assert sorted(map(tuple, ds.edges.tolist())) == [(0, 1), (1, 0)]
    assert ds.n_classes == 2


def test_duplicates_comments_and_self_loops_are_dropped(tmp_path):
    ds = load_dataset(
        write(tmp_path, "edges.txt", "# header\n0\t1\n1 0\n0 1  # again\n2 2\n"),
        write(tmp_path, "features.txt", "0 0 1.0\n1 1 1.0\n2 0 0.5\n"),
        write(tmp_path, "labels.csv", "node,label\n0,0\n1,0\n2,1\n"),
    )
    assert ds.edges.tolist() == [[0, 1], [1, 0]]
    np.testing.assert_array_equal(ds.features, [[1, 0], [0, 1], [0.5, 0]])


def test_malformed_edge_reports_line(tmp_path):
    with pytest.raises(ParseError) as err:
        load_dataset(
            write(tmp_path, "edges.txt", "0 1\n1 x\n"),
            write(tmp_path, "features.csv", "0,1\n1,1\n"),
            write(tmp_path, "labels.csv", "0,0\n1,0\n"),
        )
    assert err.value.lineno == 2


def test_edge_out_of_range(tmp_path):
    with pytest.raises(ValidationError):
        load_dataset(
            write(tmp_path, "edges.txt", "0 5\n"),
            write(tmp_path, "features.csv", "0,1\n1,1\n"),
            write(tmp_path, "labels.csv", "0,0\n1,0\n"),
        )


def test_overlapping_split_files(tmp_path):
    for name, ids in (("tr", "0\n1\n"), ("va", "1\n"), ("te", "2\n")):
        write(tmp_path, name, ids)
    with pytest.raises(ValidationError):
        load_dataset(
            write(tmp_path, "edges.txt", "0 1\n"),
            write(tmp_path, "features.csv", "0,1\n1,1\n2,1\n"),
            write(tmp_path, "labels.csv", "0,0\n1,0\n2,0\n"),
            {"train": tmp_path / "tr", "val": tmp_path / "va", "test": tmp_path / "te"},
        )


def test_ragged_csv_features(tmp_path):
    with pytest.raises(ParseError):
        load_dataset(
            write(tmp_path, "edges.txt", "0 1\n"),
            write(tmp_path, "features.csv", "0,1,2\n1,1\n"),
            write(tmp_path, "labels.csv", "0,0\n1,0\n"),
        )


def test_dataset_dir_round_trip(tmp_path):
    ds = synth_erdos_renyi(30, 0.2, seed=4)
    write_dataset_dir(ds, tmp_path / "er")
    back = load_dataset_dir(tmp_path / "er")
    assert np.array_equal(back.edges, ds.edges)
    assert np.array_equal(back.features, ds.features)
    assert np.array_equal(back.labels, ds.labels)
    for part in ("train", "val", "test"):
        assert np.array_equal(getattr(back.split, part), getattr(ds.split, part))


# -- splits --------------------------------------------------------------

def test_planetoid_split_sizes_and_determinism():
    labels = np.repeat(np.arange(7), 100)
    s1 = make_planetoid_split(labels, 7, 20, 100, 200, seed=5)
    s2 = make_planetoid_split(labels, 7, 20, 100, 200, seed=5)
    assert len(s1.train) == 140
    assert np.bincount(labels[s1.train]).tolist() == [20] * 7
    for part in ("train", "val", "test"):
        assert np.array_equal(getattr(s1, part), getattr(s2, part))
    s1.validate(len(labels))


def test_planetoid_zero_per_class():
    assert len(make_planetoid_split(np.zeros(10, int), 1, 0, 2, 2).train) == 0


def test_planetoid_insufficient_nodes():
    with pytest.raises(ConfigError):
        make_planetoid_split(np.zeros(10, int), 2, 5, 0, 0)


def test_split_overlap_detected():
    with pytest.raises(ValidationError):
        Split([0, 1], [1], [2]).validate(3)


# -- normalization -------------------------------------------------------

def test_isolated_node():
    adj = build_normalized_adjacency(graph(1, []))
    assert adj.matrix.to_dense().tolist() == [[1.0]]


def test_two_connected_nodes():
    adj = build_normalized_adjacency(graph(2, [(0, 1)]))
    assert adj.matrix.to_dense().tolist() == [[0.5, 0.5], [0.5, 0.5]]


def test_path_graph_high_precision():
    mpmath.mp.dps = 40
    a = build_normalized_adjacency(graph(3, [(0, 1), (1, 2)])).matrix
    third_root6 = float(1 / mpmath.sqrt(6))
    expected = {(0, 0): 0.5, (0, 1): third_root6, (1, 1): float(mpmath.mpf(1) / 3),
                (1, 2): third_root6, (2, 2): 0.5}
    for (i, j), v in expected.items():
        assert a.get(i, j) == pytest.approx(v, abs=1e-15)
        assert a.get(j, i) == a.get(i, j)
    assert a.get(0, 2) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 12), st.floats(0.0, 1.0))
def test_normalization_matches_loop_oracle(seed, n, p):
    ds = synth_erdos_renyi(n, p, seed)
    und = [(u, v) for u, v in ds.edges.tolist() if u < v]
    adj = build_normalized_adjacency(ds)
    np.testing.assert_allclose(adj.matrix.to_dense(), normalized_adjacency_dense(n, und), rtol=0, atol=1e-15)
    a = adj.matrix
    assert csr_transpose(a).equals(a)  # bitwise symmetric
    assert len(adj.self_loop_positions) == n
    assert np.all((a.values > 0) & (a.values <= 1))
    deg = a.row_nnz()
    assert np.all(a.to_dense().sum(axis=1) <= np.sqrt(deg) + 1e-12)


# -- synthetic graphs ----------------------------------------------------

def test_ba_tree():
    ds = synth_barabasi_albert(5, 1, seed=7)
    g = nx.Graph([tuple(e) for e in ds.edges.tolist()])
    assert g.number_of_edges() == 4 and nx.is_tree(g) and g.number_of_nodes() == 5


def test_er_extremes():
    assert len(synth_erdos_renyi(10, 0.0, seed=1).edges) == 0
    assert len(synth_erdos_renyi(10, 1.0, seed=1).edges) == 2 * 45


def test_synth_deterministic():
    a, b = synth_barabasi_albert(60, 3, seed=2), synth_barabasi_albert(60, 3, seed=2)
    assert np.array_equal(a.edges, b.edges) and np.array_equal(a.labels, b.labels)


def test_synth_invalid_parameters():
    with pytest.raises(ConfigError):
        synth_barabasi_albert(5, 5, seed=0)
    with pytest.raises(ConfigError):
        synth_erdos_renyi(5, 1.5, seed=0)


# -- degree histogram ----------------------------------------------------

def test_degree_histogram_examples():
    assert degree_histogram(build_normalized_adjacency(graph(2, [(0, 1)]))) == {1: 2}
    k4 = [(i, j) for i in range(4) for j in range(i + 1, 4)]
    assert degree_histogram(build_normalized_adjacency(graph(4, k4))) == {3: 4}


def test_degree_histogram_after_removal_recount():
    k4 = [(i, j) for i in range(4) for j in range(i + 1, 4)]
    adj = build_normalized_adjacency(graph(4, k4))
    m = adj.matrix
    rows = m.row_indices()
    drop = np.flatnonzero(((rows == 0) & (m.col_idx == 1)) | ((rows == 1) & (m.col_idx == 0)))
    pruned = adj.drop_entries(drop)
    remaining = [(u, v) for u in range(4) for v in range(4) if u != v and {u, v} != {0, 1}]
    assert degree_histogram(pruned) == degree_counts(4, remaining) == {2: 2, 3: 2}
