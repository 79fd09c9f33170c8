"""Attributed graphs, transport couplings, batched graph pools and domain measures, plus their on-disk format."""

import csv
import dataclasses
import enum
import functools
import logging
import os
import re
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph

from ggda import staging
from ggda.errors import DataError

StructureMode = enum.Enum("StructureMode", ("ADJACENCY", "SHORTEST_PATH"))
HistMode = enum.Enum("HistMode", ("UNIFORM", "DEGREE"))

UNLABELED = -1
HIST_TOL = 1e-9
MARGINAL_TOL = 1e-8
BUNDLE_META = "meta.txt"
BUNDLE_EDGES = "edges.txt"
BUNDLE_FEATURES = "features.f32"
BUNDLE_LABELS = "labels.txt"
BUNDLE_STRUCTURE = "structure.f32"
POOL_GRAPH_DIR_REGEX = re.compile(r"^graph_(\d{3,})$")
PROVENANCE_FILENAME = "provenance.csv"


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def check_histogram(h: np.ndarray, *, fully_supported: bool = False, name: str = "histogram") -> None:
    """Raise DataError if h is not a probability vector."""
    if h.ndim != 1:
        raise DataError(f"{name} must be a vector, got shape {h.shape}")
    if not np.all(np.isfinite(h)) or np.any(h < 0):
        raise DataError(f"{name} has negative or non finite entries")
    if h.size and abs(h.sum() - 1) > HIST_TOL:
        raise DataError(f"{name} sums to {h.sum()!r}, not 1")
    if fully_supported and np.any(h <= 0):
        raise DataError(f"{name} has zero mass entries ({np.count_nonzero(h <= 0)}), it must be fully supported")


@dataclasses.dataclass(frozen=True, eq=False)
class AttributedGraph:
    """
    Attributed graph measure μ = Σ h_i δ_(x_i, a_i, y_i).

    Edges are stored as an (E, 2) array of sorted pairs u < v in lexicographic order. Labels use UNLABELED (-1) for
    unlabeled vertices. All arrays are read-only after construction.
    """

    features: np.ndarray
    edges: np.ndarray
    structure: np.ndarray
    hist: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            raise DataError(f"Features must be a n x d matrix, got shape {features.shape}")
        n = features.shape[0]
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        structure = np.asarray(self.structure, dtype=np.float64)
        hist = np.asarray(self.hist, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)

        if edges.size:
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise DataError("Edges must be given as pairs u < v (no self loops)")
            if edges.min() < 0 or edges.max() >= n:
                raise DataError(f"Edge endpoint out of range [0, {n})")
            keys = edges[:, 0] * n + edges[:, 1]
            if np.unique(keys).size != keys.size:
                raise DataError("Edge list contains duplicates")
            edges = edges[np.argsort(keys, kind="stable")]
        if structure.shape != (n, n):
            raise DataError(f"Structure matrix must be {n} x {n}, got shape {structure.shape}")
        if not np.all(np.isfinite(structure)) or np.any(structure < 0):
            raise DataError("Structure matrix has negative or non finite entries")
        if np.any(structure != structure.T) or np.any(np.diag(structure) != 0):
            raise DataError("Structure matrix must be symmetric with zero diagonal")
        if hist.shape != (n,):
            raise DataError(f"Histogram must have {n} entries, got shape {hist.shape}")
        check_histogram(hist)
        if labels.shape != (n,):
            raise DataError(f"Labels must have {n} entries, got shape {labels.shape}")
        if labels.size and (labels.min() < UNLABELED or labels.max() >= self.n_classes):
            raise DataError(f"Labels must be in [0, {self.n_classes}) or {UNLABELED} for unlabeled")

        object.__setattr__(self, "features", _frozen(features))
        object.__setattr__(self, "edges", _frozen(edges))
        object.__setattr__(self, "structure", _frozen(structure))
        object.__setattr__(self, "hist", _frozen(hist))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "n_classes", int(self.n_classes))

    @classmethod
    def build(
        cls,
        features,
        edges,
        labels=None,
        n_classes: Optional[int] = None,
        *,
        structure_mode: StructureMode = StructureMode.ADJACENCY,
        hist_mode: HistMode = HistMode.UNIFORM,
        structure: Optional[np.ndarray] = None,
    ) -> "AttributedGraph":
        """Build graph from features and edges, deriving structure matrix and histogram."""
        features = np.asarray(features, dtype=np.float64)
        n = features.shape[0]
        edges = np.sort(np.asarray(edges, dtype=np.int64).reshape(-1, 2), axis=1)
        if labels is None:
            labels = np.full(n, UNLABELED, dtype=np.int64)
        labels = np.asarray(labels, dtype=np.int64)
        if n_classes is None:
            n_classes = int(labels.max()) + 1 if labels.size else 0
        if structure is None:
            structure = _structure_from_edges(n, edges, structure_mode)
        return cls(features, edges, structure, _histogram_from_edges(n, edges, hist_mode), labels, n_classes)

    @property
    def n(self) -> int:
        """Vertex count."""
        return self.features.shape[0]

    @property
    def d(self) -> int:
        """Feature dimension."""
        return self.features.shape[1]

    @property
    def is_labeled(self) -> bool:
        """Return True if every vertex carries a class label."""
        return bool(np.all(self.labels != UNLABELED))

    @functools.cached_property
    def adjacency(self) -> scipy.sparse.csr_matrix:
        """Binary symmetric adjacency matrix."""
        return _adjacency(self.n, self.edges)

    @functools.cached_property
    def degrees(self) -> np.ndarray:
        """Vertex degrees."""
        return np.bincount(self.edges.ravel(), minlength=self.n)

    def without_labels(self) -> "AttributedGraph":
        """Return a copy of this graph with every vertex unlabeled."""
        return dataclasses.replace(self, labels=np.full(self.n, UNLABELED, dtype=np.int64))


@dataclasses.dataclass(frozen=True, eq=False)
class Coupling:
    """Transport plan π ∈ Π(h, h′)."""

    pi: np.ndarray
    row_marginal: np.ndarray
    col_marginal: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=np.float64)
        row_marginal = np.asarray(self.row_marginal, dtype=np.float64)
        col_marginal = np.asarray(self.col_marginal, dtype=np.float64)
        if pi.shape != (row_marginal.size, col_marginal.size):
            raise DataError(f"Coupling shape {pi.shape} does not match marginal sizes")
        if not np.all(np.isfinite(pi)) or np.any(pi < 0):
            raise DataError("Coupling has negative or non finite entries")
        row_err = np.abs(pi.sum(axis=1) - row_marginal).max(initial=0)
        col_err = np.abs(pi.sum(axis=0) - col_marginal).max(initial=0)
        if max(row_err, col_err) > MARGINAL_TOL:
            raise DataError(f"Coupling marginals are off by {max(row_err, col_err):.3g}")
        object.__setattr__(self, "pi", _frozen(pi))
        object.__setattr__(self, "row_marginal", _frozen(row_marginal))
        object.__setattr__(self, "col_marginal", _frozen(col_marginal))

    @classmethod
    def product(cls, h: np.ndarray, h2: np.ndarray) -> "Coupling":
        """Independent coupling h h′ᵀ."""
        return cls(np.outer(h, h2), h, h2)

    @property
    def T(self) -> "Coupling":
        """Transposed coupling, from h′ to h."""
        return Coupling(self.pi.T, self.col_marginal, self.row_marginal)

    def matches(self, h: np.ndarray, h2: np.ndarray) -> bool:
        """Return True if this coupling's marginals are (h, h′)."""
        return (
            self.pi.shape == (h.size, h2.size)
            and np.abs(self.pi.sum(axis=1) - h).max(initial=0) <= MARGINAL_TOL
            and np.abs(self.pi.sum(axis=0) - h2).max(initial=0) <= MARGINAL_TOL
        )


@dataclasses.dataclass(frozen=True, eq=False)
class GraphPool:
    """
    Disjoint union of attributed graphs, batched as a single graph μ_B.

    Index 0 is the source graph, the last index is the target graph, and indices in between are intermediates.
    Global vertex ids of graph i are the contiguous range offsets[i] .. offsets[i + 1] - 1.
    """

    graphs: Tuple[AttributedGraph, ...]
    offsets: np.ndarray
    union_edges: np.ndarray

    @property
    def n_vertices(self) -> int:
        """Total vertex count."""
        return int(self.offsets[-1])

    @property
    def n_graphs(self) -> int:
        """Number of graphs in the pool."""
        return len(self.graphs)

    @property
    def target_index(self) -> int:
        """Index of the target graph."""
        return len(self.graphs) - 1

    @property
    def n_classes(self) -> int:
        """Class count, taken from the source graph."""
        return self.graphs[0].n_classes

    @functools.cached_property
    def origin(self) -> np.ndarray:
        """Graph index of every global vertex."""
        return np.repeat(np.arange(len(self.graphs)), np.diff(self.offsets))

    @functools.cached_property
    def features(self) -> np.ndarray:
        """Stacked vertex features, in global id order."""
        return np.vstack([g.features for g in self.graphs])

    @functools.cached_property
    def labels(self) -> np.ndarray:
        """Stacked vertex labels, in global id order."""
        return np.concatenate([g.labels for g in self.graphs])

    @functools.cached_property
    def adjacency(self) -> scipy.sparse.csr_matrix:
        """Binary adjacency matrix of the union."""
        return _adjacency(self.n_vertices, self.union_edges)

    @functools.cached_property
    def normalized_adjacency(self) -> scipy.sparse.csr_matrix:
        """Symmetric normalized adjacency with self loops D^-1/2 (A + I) D^-1/2."""
        a = self.adjacency + scipy.sparse.identity(self.n_vertices, format="csr")
        d_inv_sqrt = np.power(np.asarray(a.sum(axis=1)).ravel(), -0.5)
        d_mat_inv_sqrt = scipy.sparse.diags(d_inv_sqrt)
        return (d_mat_inv_sqrt @ a @ d_mat_inv_sqrt).tocsr()

    def global_ids(self, index: int) -> np.ndarray:
        """Global vertex ids of graph at index."""
        return np.arange(self.offsets[index], self.offsets[index + 1])

    def global_id(self, index: int, local: int) -> int:
        """Global id of a local vertex of graph at index."""
        if not 0 <= local < self.graphs[index].n:
            raise DataError(f"Vertex {local} out of range for graph {index}")
        return int(self.offsets[index] + local)

    def locate(self, gid: int) -> Tuple[int, int]:
        """Return (graph index, local vertex) of a global vertex id."""
        if not 0 <= gid < self.n_vertices:
            raise DataError(f"Global vertex id {gid} out of range")
        index = int(np.searchsorted(self.offsets, gid, side="right") - 1)
        return index, int(gid - self.offsets[index])

    def induced_graph(self, index: int) -> AttributedGraph:
        """Rebuild graph at index from the union arrays."""
        lo, hi = self.offsets[index], self.offsets[index + 1]
        mask = (self.union_edges[:, 0] >= lo) & (self.union_edges[:, 0] < hi)
        g = self.graphs[index]
        return AttributedGraph(
            self.features[lo:hi], self.union_edges[mask] - lo, g.structure, g.hist, self.labels[lo:hi], g.n_classes
        )


@dataclasses.dataclass(frozen=True, eq=False)
class DomainMeasure:
    """
    One domain μ_t: weighted, labeled set of pool vertices.

    vertex_ids, weights, labels and label_scores are aligned; label_scores holds the stored score ĉ of each entry
    (NaN before first scoring). decay_mask holds the cumulative mass decay mask w of every pool vertex.
    """

    stage: int
    vertex_ids: np.ndarray
    weights: np.ndarray
    labels: np.ndarray
    label_scores: np.ndarray
    decay_mask: np.ndarray

    def __post_init__(self):
        vertex_ids = np.asarray(self.vertex_ids, dtype=np.int64)
        weights = np.asarray(self.weights, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        label_scores = np.asarray(self.label_scores, dtype=np.float64)
        decay_mask = np.asarray(self.decay_mask, dtype=np.float64)
        if self.stage < 0:
            raise DataError(f"Invalid stage {self.stage}")
        if not (vertex_ids.shape == weights.shape == labels.shape == label_scores.shape):
            raise DataError("Domain entry arrays are not aligned")
        if np.unique(vertex_ids).size != vertex_ids.size:
            raise DataError("Domain has duplicate vertices")
        check_histogram(weights, name="domain weights")
        if np.any(labels < 0):
            raise DataError("Every domain entry must carry a label")
        if np.any(decay_mask <= 0) or np.any(decay_mask > 1):
            raise DataError("Decay mask entries must be in (0, 1]")
        object.__setattr__(self, "vertex_ids", _frozen(vertex_ids))
        object.__setattr__(self, "weights", _frozen(weights))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "label_scores", _frozen(label_scores))
        object.__setattr__(self, "decay_mask", _frozen(decay_mask))

    def __len__(self):
        return self.vertex_ids.size

    @classmethod
    def initial(cls, vertex_ids: np.ndarray, labels: np.ndarray, n_pool_vertices: int) -> "DomainMeasure":
        """Uniform labeled domain μ_0, with a fresh decay mask."""
        n = len(vertex_ids)
        return cls(0, vertex_ids, np.full(n, 1 / n), labels, np.full(n, np.nan), np.ones(n_pool_vertices))


def _adjacency(n: int, edges: np.ndarray) -> scipy.sparse.csr_matrix:
    data = np.ones(2 * len(edges))
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    return scipy.sparse.csr_matrix((data, (rows, cols)), shape=(n, n))


def _structure_from_edges(n: int, edges: np.ndarray, mode: StructureMode) -> np.ndarray:
    if n == 0:
        return np.zeros((0, 0))
    adjacency = _adjacency(n, edges)
    if mode is StructureMode.ADJACENCY:
        return adjacency.toarray()
    hops = scipy.sparse.csgraph.shortest_path(adjacency, directed=False, unweighted=True)
    finite = np.isfinite(hops)
    hops[~finite] = hops[finite].max() + 1
    return hops


def _histogram_from_edges(n: int, edges: np.ndarray, mode: HistMode) -> np.ndarray:
    if mode is HistMode.UNIFORM:
        if n == 0:
            return np.zeros(0)
        return np.full(n, 1 / n)
    if len(edges) == 0:
        raise DataError("Degree histogram requires at least one edge")
    return np.bincount(edges.ravel(), minlength=n) / (2 * len(edges))


def build_structure_matrix(graph: AttributedGraph, mode: StructureMode = StructureMode.ADJACENCY) -> np.ndarray:
    """
    Build the intra-graph structure matrix C of a graph.

    Adjacency mode gives binary adjacency, shortest path mode gives hop distances, with unreachable pairs set to the
    largest finite hop distance plus one.
    """
    return _structure_from_edges(graph.n, graph.edges, mode)


def make_histogram(graph: AttributedGraph, mode: HistMode = HistMode.UNIFORM) -> np.ndarray:
    """Return a uniform or degree proportional vertex histogram."""
    if graph.n == 0:
        raise DataError("Histogram of an empty graph")
    return _histogram_from_edges(graph.n, graph.edges, mode)


def disjoint_union(graphs: Sequence[AttributedGraph]) -> GraphPool:
    """Batch graphs into a pool with contiguous global vertex ids."""
    if not graphs:
        raise DataError("Cannot build a pool from zero graphs")
    d = graphs[0].d
    for i, g in enumerate(graphs):
        if g.d != d:
            raise DataError(f"Graph #{i} has feature dimension {g.d}, expected {d}")
    offsets = np.concatenate([[0], np.cumsum([g.n for g in graphs])]).astype(np.int64)
    union_edges = np.vstack([g.edges + offset for g, offset in zip(graphs, offsets)]).astype(np.int64)
    return GraphPool(tuple(graphs), _frozen(offsets), _frozen(union_edges.reshape(-1, 2)))


def induced_subgraph(graph: AttributedGraph, vertices: Iterable[int]) -> AttributedGraph:
    """Extract the subgraph induced by vertices (in the given order), with restricted and renormalized histogram."""
    vertices = np.asarray(list(vertices), dtype=np.int64)
    if vertices.size == 0:
        raise DataError("Cannot extract an empty subgraph")
    local = np.full(graph.n, -1, dtype=np.int64)
    local[vertices] = np.arange(vertices.size)
    kept = (local[graph.edges[:, 0]] >= 0) & (local[graph.edges[:, 1]] >= 0)
    edges = np.sort(local[graph.edges[kept]], axis=1)
    hist = graph.hist[vertices]
    if hist.sum() <= 0:
        raise DataError("Subgraph has zero mass")
    return AttributedGraph(
        graph.features[vertices],
        edges,
        graph.structure[np.ix_(vertices, vertices)],
        hist / hist.sum(),
        graph.labels[vertices],
        graph.n_classes,
    )


#
# On-disk graph bundles
#


def _parse_int(filepath: str, line_number: int, s: str) -> int:
    try:
        return int(s)
    except ValueError:
        raise DataError(f"{filepath}:{line_number}: invalid integer {s!r}") from None


def _read_meta(filepath: str) -> Tuple[int, int, int]:
    meta = {}
    with open(filepath, "rt") as f:
        for line_number, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key = key.strip()
            if not sep or key not in ("n", "d", "classes"):
                raise DataError(f"{filepath}:{line_number}: expected 'n=', 'd=' or 'classes=' line, got {line!r}")
            if key in meta:
                raise DataError(f"{filepath}:{line_number}: duplicate key {key!r}")
            meta[key] = _parse_int(filepath, line_number, value.strip())
            if meta[key] < 0:
                raise DataError(f"{filepath}:{line_number}: negative value for {key!r}")
    missing = {"n", "d", "classes"} - meta.keys()
    if missing:
        raise DataError(f"{filepath}: missing key(s) {', '.join(sorted(missing))}")
    return meta["n"], meta["d"], meta["classes"]


def _read_edges(filepath: str, n: int) -> np.ndarray:
    edges: List[Tuple[int, int]] = []
    seen = set()
    with open(filepath, "rt") as f:
        for line_number, line in enumerate(f, 1):
            fields = line.split()
            if len(fields) != 2:
                raise DataError(f"{filepath}:{line_number}: expected 'u v', got {line.rstrip()!r}")
            u, v = (_parse_int(filepath, line_number, s) for s in fields)
            if not 0 <= u < v < n:
                raise DataError(f"{filepath}:{line_number}: edge ({u}, {v}) must satisfy 0 <= u < v < {n}")
            if (u, v) in seen:
                raise DataError(f"{filepath}:{line_number}: duplicate edge ({u}, {v})")
            seen.add((u, v))
            edges.append((u, v))
    return np.array(edges, dtype=np.int64).reshape(-1, 2)


def _read_labels(filepath: str, n: int, n_classes: int) -> np.ndarray:
    labels = []
    with open(filepath, "rt") as f:
        for line_number, line in enumerate(f, 1):
            label = _parse_int(filepath, line_number, line.strip())
            if not UNLABELED <= label < n_classes:
                raise DataError(f"{filepath}:{line_number}: label {label} out of range [{UNLABELED}, {n_classes})")
            labels.append(label)
    if len(labels) != n:
        raise DataError(f"{filepath}: expected {n} labels, got {len(labels)}")
    return np.array(labels, dtype=np.int64)


def _read_f32(filepath: str, shape: Tuple[int, int]) -> np.ndarray:
    data = np.fromfile(filepath, dtype="<f4")
    if data.size != shape[0] * shape[1]:
        raise DataError(f"{filepath}: expected {shape[0] * shape[1]} floats, got {data.size}")
    if not np.all(np.isfinite(data)):
        raise DataError(f"{filepath}: non finite values")
    return data.reshape(shape).astype(np.float64)


def load_bundle(
    dirpath: str,
    *,
    structure_mode: StructureMode = StructureMode.ADJACENCY,
    hist_mode: HistMode = HistMode.UNIFORM,
) -> AttributedGraph:
    """Load and validate a graph bundle directory."""
    if not os.path.isdir(dirpath):
        raise DataError(f"{dirpath}: not a graph bundle directory")
    n, d, n_classes = _read_meta(os.path.join(dirpath, BUNDLE_META))
    edges = _read_edges(os.path.join(dirpath, BUNDLE_EDGES), n)
    features = _read_f32(os.path.join(dirpath, BUNDLE_FEATURES), (n, d))
    labels = _read_labels(os.path.join(dirpath, BUNDLE_LABELS), n, n_classes)
    structure = None
    structure_filepath = os.path.join(dirpath, BUNDLE_STRUCTURE)
    if os.path.isfile(structure_filepath):
        structure = _read_f32(structure_filepath, (n, n))
        structure = np.maximum((structure + structure.T) / 2, 0)
        np.fill_diagonal(structure, 0)
    logging.getLogger().debug(f"Loaded graph bundle {dirpath!r}: {n} vertices, {len(edges)} edges, d={d}")
    return AttributedGraph.build(
        features, edges, labels, n_classes, structure_mode=structure_mode, hist_mode=hist_mode, structure=structure
    )


def save_bundle(graph: AttributedGraph, dirpath: str, *, with_structure: bool = False) -> None:
    """Write a graph bundle directory, optionally including the (continuous) structure matrix."""
    with staging.staging_dir(dirpath) as tmp_dir:
        with open(os.path.join(tmp_dir, BUNDLE_META), "wt") as f:
            f.write(f"n={graph.n}\nd={graph.d}\nclasses={graph.n_classes}\n")
        with open(os.path.join(tmp_dir, BUNDLE_EDGES), "wt") as f:
            f.writelines(f"{u} {v}\n" for u, v in graph.edges)
        graph.features.astype("<f4").tofile(os.path.join(tmp_dir, BUNDLE_FEATURES))
        with open(os.path.join(tmp_dir, BUNDLE_LABELS), "wt") as f:
            f.writelines(f"{label}\n" for label in graph.labels)
        if with_structure:
            graph.structure.astype("<f4").tofile(os.path.join(tmp_dir, BUNDLE_STRUCTURE))


def save_pool(
    graphs: Sequence[AttributedGraph], dirpath: str, provenance: Optional[Sequence[Tuple]] = None, header=()
) -> None:
    """Write source, intermediate and target graphs as graph_NNN bundles, plus optional provenance rows."""
    with staging.staging_dir(dirpath) as tmp_dir:
        width = max(3, len(str(len(graphs) - 1)))
        for i, graph in enumerate(graphs):
            intermediate = 0 < i < len(graphs) - 1
            save_bundle(graph, os.path.join(tmp_dir, f"graph_{i:0{width}d}"), with_structure=intermediate)
        if provenance is not None:
            with open(os.path.join(tmp_dir, PROVENANCE_FILENAME), "wt", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(header)
                writer.writerows(provenance)


def load_pool(
    dirpath: str,
    *,
    structure_mode: StructureMode = StructureMode.ADJACENCY,
    hist_mode: HistMode = HistMode.UNIFORM,
) -> List[AttributedGraph]:
    """Load the graph_NNN bundles of a pool directory, in index order."""
    if not os.path.isdir(dirpath):
        raise DataError(f"{dirpath}: not a pool directory")
    indexed = []
    for entry in os.listdir(dirpath):
        match = POOL_GRAPH_DIR_REGEX.match(entry)
        if match is not None:
            indexed.append((int(match.group(1)), entry))
    indexed.sort()
    if len(indexed) < 2:
        raise DataError(f"{dirpath}: a pool needs at least a source and a target graph bundle")
    if [i for i, _ in indexed] != list(range(len(indexed))):
        raise DataError(f"{dirpath}: graph bundle indices are not contiguous")
    return [
        load_bundle(os.path.join(dirpath, entry), structure_mode=structure_mode, hist_mode=hist_mode)
        for _, entry in indexed
    ]
