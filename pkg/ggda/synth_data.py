"""Synthetic scenarios: contextual stochastic block model graphs and class-wise feature shift chains."""

import dataclasses
import logging
import math
from typing import List, Optional, Tuple

import numpy as np
import scipy.spatial.distance

from ggda.errors import DataError
from ggda.graph_model import AttributedGraph

DEFAULT_CLASS_MEANS = ((0.0, -3.0), (0.0, 0.0), (0.0, 3.0))
DEFAULT_TARGET_SHIFT = 6.0
DEFAULT_TARGET_REWIRE_FRAC = 0.25


@dataclasses.dataclass(frozen=True)
class CsbmConfig:
    """Class sizes, Gaussian feature means and spread, edge probabilities, dissimilar rewiring share and seed."""

    nodes_per_class: int = 100
    n_classes: int = 3
    class_means: Tuple[Tuple[float, ...], ...] = DEFAULT_CLASS_MEANS
    covariance_scale: float = 0.5
    p_intra: float = 0.1
    p_inter: float = 0.02
    dissimilar_rewire_frac: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.nodes_per_class < 1 or self.n_classes < 1:
            raise DataError("Class count and nodes per class must be >= 1")
        means = tuple(tuple(float(v) for v in m) for m in self.class_means)
        if len(means) != self.n_classes:
            raise DataError(f"Expected {self.n_classes} class means, got {len(means)}")
        if len({len(m) for m in means}) != 1 or not means[0]:
            raise DataError("Class means must share a nonzero dimension")
        object.__setattr__(self, "class_means", means)
        if self.covariance_scale < 0:
            raise DataError(f"Covariance scale must be >= 0, got {self.covariance_scale}")
        for name in ("p_intra", "p_inter", "dissimilar_rewire_frac"):
            if not 0 <= getattr(self, name) <= 1:
                raise DataError(f"{name} must be in [0, 1], got {getattr(self, name)}")


@dataclasses.dataclass(frozen=True)
class ShiftConfig:
    """
    Multi-step class-wise feature shift settings.

    Per class offsets are either given explicitly, or drawn once from a centered Gaussian whose standard deviation is
    noise_scale times the per dimension feature standard deviation.
    """

    steps: int = 5
    noise_scale: float = 1.0
    offsets: Optional[Tuple[Tuple[float, ...], ...]] = None
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise DataError(f"Shift step count must be >= 1, got {self.steps}")
        if self.noise_scale < 0:
            raise DataError(f"Noise scale must be >= 0, got {self.noise_scale}")


def rewire_dissimilar(
    edges: np.ndarray, features: np.ndarray, labels: np.ndarray, count: int, rng: np.random.Generator
) -> Tuple[np.ndarray, int]:
    """
    Replace count random intra-class edges with edges joining the most feature-dissimilar unconnected same-class pairs.

    Returns the new edge list and the shortfall (replacements that could not be made).
    """
    intra = np.flatnonzero(labels[edges[:, 0]] == labels[edges[:, 1]])
    existing = set(map(tuple, edges.tolist()))
    candidates = []
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        iu, ju = np.triu_indices(members.size, k=1)
        distances = scipy.spatial.distance.pdist(features[members], metric="sqeuclidean")
        for u, v, dist in zip(members[iu], members[ju], distances):
            if (u, v) not in existing:
                candidates.append((-dist, int(u), int(v)))
    candidates.sort()
    replaced = min(count, intra.size, len(candidates))
    removed = rng.choice(intra, size=replaced, replace=False)
    kept = np.delete(edges, removed, axis=0)
    added = np.array([(u, v) for _, u, v in candidates[:replaced]], dtype=np.int64).reshape(-1, 2)
    return np.vstack([kept, added]), count - replaced


def csbm_generate(cfg: CsbmConfig) -> AttributedGraph:
    """
    Sample a labeled graph: nodes_per_class vertices per class with features ~ Normal(mean_c, scale · I), and edges
    drawn independently with probability p_intra within a class and p_inter across classes. A share of the intra-class
    edges is then rewired to connect dissimilar vertices of the same class.
    """
    rng = np.random.default_rng(cfg.seed)
    labels = np.repeat(np.arange(cfg.n_classes), cfg.nodes_per_class)
    means = np.array(cfg.class_means)
    features = means[labels] + rng.normal(scale=math.sqrt(cfg.covariance_scale), size=(labels.size, means.shape[1]))

    iu, ju = np.triu_indices(labels.size, k=1)
    probabilities = np.where(labels[iu] == labels[ju], cfg.p_intra, cfg.p_inter)
    drawn = rng.random(iu.size) < probabilities
    edges = np.column_stack([iu[drawn], ju[drawn]]).astype(np.int64)

    if cfg.dissimilar_rewire_frac > 0:
        intra_count = np.count_nonzero(labels[edges[:, 0]] == labels[edges[:, 1]])
        count = math.floor(cfg.dissimilar_rewire_frac * intra_count + 0.5)
        edges, shortfall = rewire_dissimilar(edges, features, labels, count, rng)
        if shortfall:
            logging.getLogger().warning(
                f"Rewired {count - shortfall} of {count} intra-class edges, shortfall {shortfall}"
            )
    edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
    logging.getLogger().debug(f"Sampled CSBM graph: {labels.size} vertices, {len(edges)} edges")
    return AttributedGraph.build(features, edges, labels, cfg.n_classes)


def default_csbm_pair(seed: int = 0) -> Tuple[AttributedGraph, AttributedGraph]:
    """
    Source and target CSBM graphs of the reference scenario, both labeled.

    3 classes of 100 vertices, means (0, -3), (0, 0), (0, 3), covariance I / 2, p_intra 0.1, p_inter 0.02. The
    target moves every mean by +6 on the first axis and rewires 25% of its intra-class edges to dissimilar vertices.
    """
    source = csbm_generate(CsbmConfig(seed=seed))
    shifted = tuple((m[0] + DEFAULT_TARGET_SHIFT,) + m[1:] for m in DEFAULT_CLASS_MEANS)
    target = csbm_generate(
        CsbmConfig(class_means=shifted, dissimilar_rewire_frac=DEFAULT_TARGET_REWIRE_FRAC, seed=seed + 1)
    )
    return source, target


def class_offsets(graph: AttributedGraph, cfg: ShiftConfig) -> np.ndarray:
    """Per class feature offset of one shift step, as a (n_classes, d) array."""
    if cfg.offsets is not None:
        offsets = np.array(cfg.offsets, dtype=np.float64)
        if offsets.shape != (graph.n_classes, graph.d):
            raise DataError(f"Expected offsets of shape {(graph.n_classes, graph.d)}, got {offsets.shape}")
        return offsets
    rng = np.random.default_rng(cfg.seed)
    std = graph.features.std(axis=0) if graph.n > 1 else np.ones(graph.d)
    return rng.normal(size=(graph.n_classes, graph.d)) * (cfg.noise_scale * std)


def multistep_shift(graph: AttributedGraph, cfg: ShiftConfig) -> List[AttributedGraph]:
    """Chain of steps + 1 graphs, step s moving every class by s times its offset. Index 0 is the input graph."""
    if not graph.is_labeled:
        raise DataError("Class-wise feature shift needs a fully labeled graph")
    offsets = class_offsets(graph, cfg)
    chain = [graph]
    for step in range(1, cfg.steps + 1):
        chain.append(
            AttributedGraph(
                graph.features + step * offsets[graph.labels],
                graph.edges,
                graph.structure,
                graph.hist,
                graph.labels,
                graph.n_classes,
            )
        )
    return chain
