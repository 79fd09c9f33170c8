"""Weighted FGW barycenter of two attributed graphs, used to generate intermediate graphs."""

import collections
import dataclasses
import logging
import math
from typing import Sequence, Tuple

import numpy as np

from ggda.errors import DataError
from ggda.graph_model import UNLABELED, AttributedGraph, Coupling
from ggda.ot_fgw import FgwConfig, emd_plan, feature_cost, solve_fgw

Barycenter = collections.namedtuple("Barycenter", ("graph", "couplings", "distances", "trace"))
Interpolation = collections.namedtuple(
    "Interpolation", ("graph", "source_coupling", "fgw_src", "fgw_tgt", "trace")
)


@dataclasses.dataclass(frozen=True)
class BarycenterConfig:
    """Barycenter support size, input weights, block coordinate descent iterations and inner FGW settings."""

    support_size: int = 1
    weights: Tuple[float, float] = (0.5, 0.5)
    bcd_iters: int = 10
    fgw: FgwConfig = dataclasses.field(default_factory=FgwConfig)
    seed: int = 0
    tol: float = 1e-7

    def __post_init__(self):
        if self.support_size < 1:
            raise DataError(f"Barycenter support size must be >= 1, got {self.support_size}")
        weights = tuple(float(w) for w in self.weights)
        if len(weights) != 2 or min(weights) < 0 or abs(sum(weights) - 1) > 1e-9:
            raise DataError(f"Barycenter weights must be two nonnegative values summing to 1, got {self.weights}")
        if self.bcd_iters < 1:
            raise DataError(f"bcd_iters must be >= 1, got {self.bcd_iters}")
        object.__setattr__(self, "weights", weights)


def _initial_support(graphs: Sequence[AttributedGraph], weights: np.ndarray, size: int, rng) -> np.ndarray:
    """Draw support features from the weighted mixture of the input vertices."""
    owners = rng.choice(len(graphs), size=size, p=weights)
    order = rng.permutation(max(g.n for g in graphs))
    used = [set() for _ in graphs]
    features = []
    for slot, owner in enumerate(owners):
        n = graphs[owner].n
        local = int(order[slot % order.size])
        if local >= n or local in used[owner]:
            free = [int(v) for v in order if v < n and v not in used[owner]]
            local = free[0] if free else int(rng.integers(n))
        used[owner].add(local)
        features.append(graphs[owner].features[local])
    return np.array(features)


def _structure_update(couplings, graphs, weights, h) -> np.ndarray:
    structure = sum(w * pi @ g.structure @ pi.T for w, pi, g in zip(weights, couplings, graphs)) / np.outer(h, h)
    structure = np.maximum((structure + structure.T) / 2, 0)
    # diagonal is pinned to zero, entries are independent so off diagonal values stay optimal
    np.fill_diagonal(structure, 0)
    return structure


def _feature_update(couplings, graphs, weights, h) -> np.ndarray:
    return sum(w * pi @ g.features for w, pi, g in zip(weights, couplings, graphs)) / h[:, None]


def _edge_density(graph: AttributedGraph) -> float:
    pairs = graph.n * (graph.n - 1) / 2
    return len(graph.edges) / pairs if pairs else 0.0


def _edge_affinity(graph: AttributedGraph) -> float:
    """Positive if structure values are larger on edges than on non edges (adjacency like), negative if smaller."""
    iu, ju = np.triu_indices(graph.n, k=1)
    is_edge = graph.adjacency.toarray()[iu, ju] > 0
    if is_edge.all() or not is_edge.any():
        return 0.0
    values = graph.structure[iu, ju]
    return float(values[is_edge].mean() - values[~is_edge].mean())


def realize_edges(structure: np.ndarray, graphs: Sequence[AttributedGraph], weights: Sequence[float]) -> np.ndarray:
    """
    Threshold a continuous structure matrix into an edge list.

    The edge count matches the weighted average edge density of the input graphs. Largest entries become edges when
    the inputs' structure is adjacency like, smallest entries when it is distance like.
    """
    n = structure.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    density = sum(w * _edge_density(g) for w, g in zip(weights, graphs))
    count = min(math.floor(density * iu.size + 0.5), iu.size)
    if count == 0:
        return np.zeros((0, 2), dtype=np.int64)
    values = structure[iu, ju]
    similarity = sum(w * _edge_affinity(g) for w, g in zip(weights, graphs)) >= 0
    if similarity:
        order = np.lexsort((np.arange(values.size), -values))
        order = order[values[order] > 0]
    else:
        order = np.lexsort((np.arange(values.size), values))
    order = np.sort(order[:count])
    return np.column_stack([iu[order], ju[order]])


def frechet_mean(graph1: AttributedGraph, graph2: AttributedGraph, cfg: BarycenterConfig) -> Barycenter:
    """
    Weighted FGW barycenter of two graphs, by block coordinate descent.

    Each outer iteration solves FGW from the current barycenter to both inputs (warm-started from the previous
    couplings), then updates features and structure in closed form with the couplings fixed. The barycenter has a
    uniform histogram and no labels. The returned couplings go from the barycenter to each input, and the distances
    are the FGW values of the returned barycenter.
    """
    if cfg.fgw.q != 2 or cfg.fgw.p != 1:
        raise DataError(f"Closed form barycenter updates need q = 2 and p = 1, got q = {cfg.fgw.q}, p = {cfg.fgw.p}")
    if graph1.d != graph2.d:
        raise DataError(f"Feature dimensions differ: {graph1.d} != {graph2.d}")
    graphs = (graph1, graph2)
    weights = np.array(cfg.weights)
    rng = np.random.default_rng(cfg.seed)
    n = cfg.support_size
    h = np.full(n, 1 / n)

    features = _initial_support(graphs, weights, n, rng)
    couplings = [emd_plan(h, g.hist, feature_cost(features, g.features, 2)) for g in graphs]
    structure = _structure_update(couplings, graphs, weights, h)

    trace = []
    for iteration in range(cfg.bcd_iters):
        results = [
            solve_fgw(
                feature_cost(features, g.features, 2), structure, g.structure, h, g.hist, cfg.fgw, init=pi
            )
            for g, pi in zip(graphs, couplings)
        ]
        couplings = [np.asarray(r.coupling.pi) for r in results]
        trace.append(float(sum(w * r.objective for w, r in zip(weights, results))))
        logging.getLogger().debug(f"Barycenter iteration {iteration + 1}/{cfg.bcd_iters}: objective {trace[-1]:.6g}")
        if (iteration == cfg.bcd_iters - 1) or (
            len(trace) > 1 and trace[-2] - trace[-1] <= cfg.tol * abs(trace[-2])
        ):
            break
        features = _feature_update(couplings, graphs, weights, h)
        structure = _structure_update(couplings, graphs, weights, h)

    graph = AttributedGraph(
        features,
        realize_edges(structure, graphs, weights),
        structure,
        h,
        np.full(n, UNLABELED, dtype=np.int64),
        max(graph1.n_classes, graph2.n_classes),
    )
    return Barycenter(
        graph, tuple(r.coupling for r in results), tuple(r.value for r in results), tuple(trace)
    )


def interpolation_support_size(n_src: int, n_tgt: int, k: int, n_steps: int) -> int:
    """Linearly interpolated vertex count between source and target sizes, rounded half up."""
    return max(1, math.floor(((n_steps - k) / n_steps) * n_src + (k / n_steps) * n_tgt + 0.5))


def interpolate_pair(
    src_part: AttributedGraph, tgt_part: AttributedGraph, k: int, n_steps: int, cfg: BarycenterConfig
) -> Interpolation:
    """
    Generate the k-th of n_steps interpolation steps between a source and a target subgraph.

    The barycenter weights are ((K - k) / K, k / K). Returns the generated graph, the coupling from the source
    subgraph to it, and its FGW distances to both inputs.
    """
    if not 1 <= k <= n_steps - 1:
        raise DataError(f"Interpolation step must be in [1, {n_steps - 1}], got {k}")
    cfg = dataclasses.replace(
        cfg,
        support_size=interpolation_support_size(src_part.n, tgt_part.n, k, n_steps),
        weights=((n_steps - k) / n_steps, k / n_steps),
    )
    barycenter = frechet_mean(src_part, tgt_part, cfg)
    source_coupling: Coupling = barycenter.couplings[0].T
    return Interpolation(
        barycenter.graph, source_coupling, barycenter.distances[0], barycenter.distances[1], barycenter.trace
    )
