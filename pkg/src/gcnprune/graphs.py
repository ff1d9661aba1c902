"""Graph datasets: file loading, Planetoid-style splits, the normalized
adjacency, and small synthetic generators for property tests.

File layout understood by :func:`load_dataset_dir`::

    edges.txt       "src dst" per line (tab or space), '#' comments allowed
    features.csv    "node_id,v0,v1,..."          (dense)
      or
    features.txt    "node_id feature_id value"   (sparse triplets)
    labels.csv      "node_id,class_id"
    train.txt, val.txt, test.txt   optional, one node id per line
"""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import networkx as nx
import numpy as np

from .exceptions import ConfigError, ParseError, ValidationError
from .tensor import CsrMatrix

PLANETOID_DEFAULTS = (20, 500, 1000, 0)


@dataclass
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self) -> None:
        self.train = np.asarray(self.train, dtype=np.int64)
        self.val = np.asarray(self.val, dtype=np.int64)
        self.test = np.asarray(self.test, dtype=np.int64)

    def validate(self, n_nodes: int) -> None:
        sets = [set(self.train.tolist()), set(self.val.tolist()), set(self.test.tolist())]
        for name, s, arr in zip(("train", "val", "test"), sets, (self.train, self.val, self.test)):
            if len(s) != len(arr):
                raise ValidationError(f"{name} split contains duplicate node ids")
            if arr.size and (arr.min() < 0 or arr.max() >= n_nodes):
                raise ValidationError(f"{name} split references a node outside [0, {n_nodes})")
        if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
            raise ValidationError("train/val/test splits overlap")


@dataclass
class GraphDataset:
    n_nodes: int
    edges: np.ndarray  # (E, 2) directed pairs, sorted, unique, no self-loops
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    split: Split | None = None
    name: str = "graph"

    def __post_init__(self) -> None:
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.features = np.asarray(self.features, dtype=np.float64)

    def validate(self) -> "GraphDataset":
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= self.n_nodes):
            raise ValidationError(f"edge endpoint outside [0, {self.n_nodes})")
        if self.labels.shape != (self.n_nodes,):
            raise ValidationError("labels must have one entry per node")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValidationError(f"label outside [0, {self.n_classes})")
        if self.features.ndim != 2 or self.features.shape[0] != self.n_nodes:
            raise ValidationError("features must have one row per node")
        if not np.all(np.isfinite(self.features)):
            raise ValidationError("features contain NaN or Inf")
        if self.split is not None:
            self.split.validate(self.n_nodes)
        return self

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def summary(self) -> dict:
        return {
            "name": self.name,
            "n_nodes": self.n_nodes,
            "n_directed_edges": int(len(self.edges)),
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "n_train": 0 if self.split is None else int(len(self.split.train)),
            "n_val": 0 if self.split is None else int(len(self.split.val)),
            "n_test": 0 if self.split is None else int(len(self.split.test)),
        }


@dataclass(eq=False)
class NormalizedAdjacency:
    """Renormalized adjacency with self-loops, stored as CSR.

    Values are fixed at construction; pruning removes entries without
    recomputing degrees.
    """

    matrix: CsrMatrix
    symmetric: bool = True
    self_loop_positions: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.self_loop_positions = np.flatnonzero(self.matrix.row_indices() == self.matrix.col_idx)

    @property
    def n(self) -> int:
        return self.matrix.n_rows

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def off_diagonal_nnz(self) -> int:
        return self.nnz - len(self.self_loop_positions)

    def drop_entries(self, positions) -> "NormalizedAdjacency":
        return NormalizedAdjacency(self.matrix.drop_entries(positions), symmetric=self.symmetric)

    def structural_degrees(self, exclude_self_loops: bool = True) -> np.ndarray:
        deg = self.matrix.row_nnz().copy()
        if exclude_self_loops:
            rows = self.matrix.row_indices()[self.self_loop_positions]
            deg[rows] -= 1
        return deg


def _read_lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


def _parse_int(tok: str, path, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise ParseError(path, lineno, f"expected an integer, got {tok!r}") from None


def read_edge_list(path) -> np.ndarray:
    pairs = []
    for lineno, line in _read_lines(path):
        toks = line.split()
        if len(toks) != 2:
            raise ParseError(path, lineno, f"expected 'src dst', got {line!r}")
        pairs.append((_parse_int(toks[0], path, lineno), _parse_int(toks[1], path, lineno)))
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def read_labels(path) -> dict[int, int]:
    labels: dict[int, int] = {}
    for lineno, line in _read_lines(path):
        toks = [t.strip() for t in line.split(",")]
        if len(toks) != 2:
            raise ParseError(path, lineno, "expected 'node_id,class_id'")
        if lineno == 1 and not toks[0].lstrip("-").isdigit():
            continue  # header
        node = _parse_int(toks[0], path, lineno)
        if node in labels:
            raise ParseError(path, lineno, f"duplicate label for node {node}")
        labels[node] = _parse_int(toks[1], path, lineno)
    return labels


def read_features(path, n_nodes: int) -> np.ndarray:
    """Read dense CSV ``node_id,v0,...`` or triplet ``node_id feature_id value`` features."""
    lines = list(_read_lines(path))
    if not lines:
        raise ParseError(path, 1, "empty feature file")
    if "," in lines[0][1]:
        rows: dict[int, list[float]] = {}
        width = None
        for lineno, line in lines:
            toks = next(csv.reader([line]))
            if lineno == lines[0][0] and not toks[0].strip().lstrip("-").isdigit():
                continue  # header
            node = _parse_int(toks[0].strip(), path, lineno)
            try:
                vals = [float(t) for t in toks[1:]]
            except ValueError:
                raise ParseError(path, lineno, "non-numeric feature value") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise ParseError(path, lineno, f"expected {width} feature values, got {len(vals)}")
            if not 0 <= node < n_nodes:
                raise ValidationError(f"{path}:{lineno}: node {node} outside [0, {n_nodes})")
            rows[node] = vals
        if len(rows) != n_nodes:
            raise ValidationError(f"{path}: features given for {len(rows)} of {n_nodes} nodes")
        return np.array([rows[i] for i in range(n_nodes)], dtype=np.float64)

    triplets = []
    for lineno, line in lines:
        toks = line.split()
        if len(toks) != 3:
            raise ParseError(path, lineno, "expected 'node_id feature_id value'")
        try:
            value = float(toks[2])
        except ValueError:
            raise ParseError(path, lineno, "non-numeric feature value") from None
        node = _parse_int(toks[0], path, lineno)
        feat = _parse_int(toks[1], path, lineno)
        if not 0 <= node < n_nodes or feat < 0:
            raise ValidationError(f"{path}:{lineno}: index out of range")
        triplets.append((node, feat, value))
    dim = max(t[1] for t in triplets) + 1
    out = np.zeros((n_nodes, dim))
    for node, feat, value in triplets:
        out[node, feat] = value
    return out


def read_node_ids(path) -> np.ndarray:
    return np.array(
        [_parse_int(line.split()[0], path, lineno) for lineno, line in _read_lines(path)],
        dtype=np.int64,
    )


def symmetrize_edges(edges: np.ndarray, n_nodes: int, undirected: bool = True) -> np.ndarray:
    """Drop self-loops, optionally add reverse edges, collapse duplicates, sort."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    edges = edges[edges[:, 0] != edges[:, 1]]
    if undirected:
        edges = np.concatenate([edges, edges[:, ::-1]])
    if not len(edges):
        return edges
    key = np.unique(edges[:, 0] * n_nodes + edges[:, 1])
    return np.stack([key // n_nodes, key % n_nodes], axis=1)


def parse_split_spec(spec) -> tuple:
    """Normalize a split spec to ``("planetoid", per_class, n_val, n_test, seed)``
    or ``("files", train, val, test)``."""
    if isinstance(spec, dict):
        return ("files", spec["train"], spec["val"], spec["test"])
    if not isinstance(spec, str):
        raise ConfigError(f"unrecognized split spec {spec!r}")
    kind, _, rest = spec.partition(":")
    parts = [p.strip() for p in rest.split(",")] if rest else []
    if kind == "planetoid":
        if len(parts) != 4:
            raise ConfigError("planetoid split spec is planetoid:<per_class>,<n_val>,<n_test>,<seed>")
        try:
            return ("planetoid", *(int(p) for p in parts))
        except ValueError:
            raise ConfigError(f"non-integer in split spec {spec!r}") from None
    if kind == "files":
        if len(parts) != 3:
            raise ConfigError("file split spec is files:<train>,<val>,<test>")
        return ("files", *parts)
    raise ConfigError(f"unknown split kind {kind!r}")


def make_planetoid_split(
    labels: np.ndarray,
    n_classes: int,
    per_class: int = 20,
    n_val: int = 500,
    n_test: int = 1000,
    seed: int = 0,
) -> Split:
    """``per_class`` training nodes per label, then ``n_val``/``n_test`` from the rest.

    All choices follow one seeded permutation of the nodes (numpy PCG64).
    """
    labels = np.asarray(labels)
    if min(per_class, n_val, n_test) < 0:
        raise ConfigError("split sizes must be non-negative")
    perm = np.random.default_rng(seed).permutation(len(labels))
    train = []
    for c in range(n_classes):
        members = perm[labels[perm] == c]
        if len(members) < per_class:
            raise ConfigError(f"class {c} has {len(members)} nodes, need {per_class} for training")
        train.extend(members[:per_class].tolist())
    taken = np.zeros(len(labels), dtype=bool)
    taken[train] = True
    rest = perm[~taken[perm]]
    if len(rest) < n_val + n_test:
        raise ConfigError(f"only {len(rest)} nodes left for {n_val} val + {n_test} test")
    return Split(
        np.sort(np.array(train, dtype=np.int64)),
        np.sort(rest[:n_val]),
        np.sort(rest[n_val:n_val + n_test]),
    )


def random_split(n_nodes: int, train_frac: float = 0.6, val_frac: float = 0.2, seed: int = 0) -> Split:
    perm = np.random.default_rng(seed).permutation(n_nodes)
    n_train = int(round(train_frac * n_nodes))
    n_val = int(round(val_frac * n_nodes))
    return Split(
        np.sort(perm[:n_train]),
        np.sort(perm[n_train:n_train + n_val]),
        np.sort(perm[n_train + n_val:]),
    )


def load_dataset(edge_path, feature_path, label_path, split_spec=None, *, undirected=True, name=None):
    label_map = read_labels(label_path)
    n_nodes = len(label_map)
    if set(label_map) != set(range(n_nodes)):
        raise ValidationError(f"{label_path}: node ids must be exactly 0..{n_nodes - 1}")
    labels = np.array([label_map[i] for i in range(n_nodes)], dtype=np.int64)
    if labels.min() < 0:
        raise ValidationError(f"{label_path}: negative class id")
    n_classes = int(labels.max()) + 1

    raw_edges = read_edge_list(edge_path)
    if raw_edges.size and (raw_edges.min() < 0 or raw_edges.max() >= n_nodes):
        raise ValidationError(f"{edge_path}: edge endpoint outside [0, {n_nodes})")
    edges = symmetrize_edges(raw_edges, n_nodes, undirected=undirected)
    features = read_features(feature_path, n_nodes)

    split = None
    if split_spec is not None:
        parsed = parse_split_spec(split_spec)
        if parsed[0] == "planetoid":
            split = make_planetoid_split(labels, n_classes, *parsed[1:])
        else:
            split = Split(*(read_node_ids(p) for p in parsed[1:]))
    return GraphDataset(
        n_nodes, edges, features, labels, n_classes, split,
        name=name or Path(edge_path).parent.name,
    ).validate()


def load_dataset_dir(directory, split_spec=None, *, undirected=True) -> GraphDataset:
    d = Path(directory)
    feature_path = d / "features.csv"
    if not feature_path.exists():
        feature_path = d / "features.txt"
    if split_spec is None and (d / "train.txt").exists():
        split_spec = {"train": d / "train.txt", "val": d / "val.txt", "test": d / "test.txt"}
    return load_dataset(
        d / "edges.txt", feature_path, d / "labels.csv", split_spec,
        undirected=undirected, name=d.name,
    )


def write_dataset_dir(dataset: GraphDataset, directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "edges.txt", "w", encoding="utf-8") as fh:
        fh.write(f"# {dataset.name}: {dataset.n_nodes} nodes\n")
        for s, t in dataset.edges:
            fh.write(f"{s}\t{t}\n")
    # dense CSV keeps trailing all-zero feature columns, which triplets would lose
    with open(d / "features.csv", "w", encoding="utf-8") as fh:
        for node, row in enumerate(dataset.features):
            fh.write(f"{node}," + ",".join(repr(float(v)) for v in row) + "\n")
    with open(d / "labels.csv", "w", encoding="utf-8") as fh:
        for i, c in enumerate(dataset.labels):
            fh.write(f"{i},{c}\n")
    if dataset.split is not None:
        for part in ("train", "val", "test"):
            ids = getattr(dataset.split, part)
            (d / f"{part}.txt").write_text("".join(f"{i}\n" for i in ids), encoding="utf-8")
    return d


def build_normalized_adjacency(dataset: GraphDataset) -> NormalizedAdjacency:
    """D^-1/2 (I + A) D^-1/2 with D the row sums of I + A (unweighted edges)."""
    n = dataset.n_nodes
    edges = dataset.edges
    rows = np.concatenate([edges[:, 0], np.arange(n)])
    cols = np.concatenate([edges[:, 1], np.arange(n)])
    deg = np.bincount(rows, minlength=n).astype(np.float64)
    values = 1.0 / np.sqrt(deg[rows] * deg[cols])
    matrix = CsrMatrix.from_coo(rows, cols, values, (n, n))
    is_sym = bool(len(edges) == 0 or _edges_symmetric(edges, n))
    return NormalizedAdjacency(matrix, symmetric=is_sym)


def _edges_symmetric(edges: np.ndarray, n: int) -> bool:
    fwd = np.sort(edges[:, 0] * n + edges[:, 1])
    rev = np.sort(edges[:, 1] * n + edges[:, 0])
    return bool(np.array_equal(fwd, rev))


def degree_histogram(adj: NormalizedAdjacency, exclude_self_loops: bool = True) -> dict[int, int]:
    counts = Counter(adj.structural_degrees(exclude_self_loops).tolist())
    return dict(sorted(counts.items()))


def _dataset_from_nx(g: nx.Graph, n: int, seed: int, n_classes: int, name: str) -> GraphDataset:
    rng = np.random.default_rng(seed)
    edges = symmetrize_edges(np.array(list(g.edges()), dtype=np.int64), n)
    labels = rng.integers(0, n_classes, size=n)
    return GraphDataset(
        n, edges, np.eye(n), labels, n_classes, random_split(n, seed=seed), name=name
    ).validate()


def synth_barabasi_albert(n: int, m_attach: int, seed: int, n_classes: int = 3) -> GraphDataset:
    """Preferential-attachment graph with one-hot features and seeded random labels."""
    if not 1 <= m_attach < n:
        raise ConfigError(f"need 1 <= m_attach < n, got m_attach={m_attach}, n={n}")
    if n_classes < 1:
        raise ConfigError("n_classes must be positive")
    g = nx.barabasi_albert_graph(n, m_attach, seed=seed)
    return _dataset_from_nx(g, n, seed, n_classes, f"ba-{n}-{m_attach}-{seed}")


def synth_erdos_renyi(n: int, p: float, seed: int, n_classes: int = 3) -> GraphDataset:
    if n < 1 or not 0.0 <= p <= 1.0:
        raise ConfigError(f"need n >= 1 and 0 <= p <= 1, got n={n}, p={p}")
    if n_classes < 1:
        raise ConfigError("n_classes must be positive")
    g = nx.gnp_random_graph(n, p, seed=seed)
    return _dataset_from_nx(g, n, seed, n_classes, f"er-{n}-{p}-{seed}")
