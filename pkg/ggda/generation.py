"""Entropy guided matching of source and target partitions, and generation of the intermediate graph sequence."""

import collections
import dataclasses
import itertools
import logging
from typing import List, Optional, Sequence, Tuple

import more_itertools
import numpy as np
import scipy.linalg
import scipy.special

from ggda import progress
from ggda.errors import DataError, GgdaError
from ggda.fgw_barycenter import BarycenterConfig, Interpolation, interpolate_pair
from ggda.graph_model import UNLABELED, AttributedGraph, Coupling, induced_subgraph
from ggda.ot_fgw import FgwConfig, fgw_distance
from ggda.partitioner import Partition, default_part_count, partition

NORM_FLOOR = 1e-3
KEEP_PROBABILITY_BOUNDS = (0.5, 0.99)
PROVENANCE_HEADER = ("k", "target_part", "source_part", "s_loss", "fgw_src", "fgw_tgt", "n_vertices")

LossTerms = collections.namedtuple("LossTerms", ("h_pair", "h_src", "fgw"))
SubgraphProvenance = collections.namedtuple("SubgraphProvenance", PROVENANCE_HEADER)
GeneratedSequence = collections.namedtuple(
    "GeneratedSequence", ("intermediates", "provenance", "src_partition", "tgt_partition", "s_loss_history")
)


@dataclasses.dataclass(frozen=True)
class GenerationConfig:
    """Intermediate graph generation settings. Part counts default to one part per 500 vertices."""

    n_steps: int = 8
    src_parts: Optional[int] = None
    tgt_parts: Optional[int] = None
    trials: int = 4
    barycenter: BarycenterConfig = dataclasses.field(default_factory=BarycenterConfig)
    random_matching: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_steps < 2:
            raise DataError(f"Step count K must be >= 2, got {self.n_steps}")
        if self.trials < 1:
            raise DataError(f"Warm-up trial count must be >= 1, got {self.trials}")
        for name in ("src_parts", "tgt_parts"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise DataError(f"{name} must be >= 1, got {value}")


@dataclasses.dataclass
class MatchState:
    """Current best source partition ṁ(t) of every target partition t, with its information loss."""

    matching: np.ndarray
    s_loss: np.ndarray
    h_src_entropy: np.ndarray
    evaluated: List[Tuple[int, int, float]] = dataclasses.field(default_factory=list)

    def offer(self, target_part: int, source_part: int, loss: float) -> bool:
        """Record an evaluated pair, and make it the match of target_part if strictly better. Return True if taken."""
        self.evaluated.append((target_part, source_part, loss))
        if loss < self.s_loss[target_part]:
            self.matching[target_part] = source_part
            self.s_loss[target_part] = loss
            return True
        return False


class NormContext:
    """Min-max scaling of information loss components into [ε, 1] over a set of candidate pairs."""

    def __init__(self, terms: Sequence[LossTerms]):
        if not terms:
            raise DataError("Cannot normalize information loss over zero candidates")
        values = np.array(terms, dtype=np.float64)
        self.lo = values.min(axis=0)
        self.hi = values.max(axis=0)

    def normalize(self, terms: LossTerms) -> np.ndarray:
        """Scale (H, H^S, FGW), a constant component maps to 1."""
        values = np.array(terms, dtype=np.float64)
        span = self.hi - self.lo
        normalized = np.ones(3)
        varying = span > 0
        normalized[varying] = NORM_FLOOR + (1 - NORM_FLOOR) * (values[varying] - self.lo[varying]) / span[varying]
        return np.clip(normalized, NORM_FLOOR, 1)


def class_entropy(graph: AttributedGraph) -> float:
    """Entropy of the histogram weighted class distribution of a labeled graph, floored at ε."""
    if not graph.is_labeled:
        raise DataError("Class entropy of a graph with unlabeled vertices")
    dist = np.bincount(graph.labels, weights=graph.hist, minlength=graph.n_classes)
    return max(float(scipy.special.entr(dist / dist.sum()).sum()), NORM_FLOOR)


def pushforward_class_matrix(coupling: Coupling, src_labels: np.ndarray, n_classes: int) -> np.ndarray:
    """
    Class distribution pushed to every target vertex through a coupling.

    Coupling columns are normalized to sum to 1, then F[j, c] is the mass of class c source vertices sent to j.
    """
    src_labels = np.asarray(src_labels)
    if np.any(src_labels == UNLABELED):
        raise DataError("Push-forward needs every source vertex labeled")
    pi = np.asarray(coupling.pi)
    mass = pi.sum(axis=0)
    if np.any(mass <= 0):
        raise DataError("Coupling has target vertices receiving no mass")
    onehot = np.eye(n_classes)[src_labels]
    return (pi / mass).T @ onehot


def avg_entropy(F: np.ndarray) -> float:
    """Mean row entropy of a class distribution matrix, with 0 log 0 = 0."""
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2 or F.shape[0] == 0:
        raise DataError(f"Expected a non empty class distribution matrix, got shape {F.shape}")
    if np.abs(F.sum(axis=1) - 1).max() > 1e-6:
        raise DataError("Class distribution rows must sum to 1")
    return float(scipy.special.entr(F).sum(axis=1).mean())


def information_loss(terms: LossTerms, ctx: NormContext) -> float:
    """S_loss = (H / H^S) · FGW, every component normalized."""
    h_pair, h_src, fgw = ctx.normalize(terms)
    return float(h_pair / max(h_src, NORM_FLOOR) * fgw)


def inverse_loss_share(s_loss: float, ref_loss: float) -> float:
    """Share of 1 / s_loss in 1 / s_loss + 1 / ref_loss."""
    if s_loss <= 0:
        return 1.0
    if ref_loss <= 0:
        return 0.0
    return (1 / s_loss) / (1 / s_loss + 1 / ref_loss)


def keep_probability(s_loss: float, ref_loss: float) -> float:
    """Probability to keep the current match, inversely proportional to its loss, clamped to [0.5, 0.99]."""
    return float(np.clip(inverse_loss_share(s_loss, ref_loss), *KEEP_PROBABILITY_BOUNDS))


def _pair_terms(src_part: AttributedGraph, tgt_part: AttributedGraph, cfg: FgwConfig) -> Tuple[float, float]:
    result = fgw_distance(src_part, tgt_part, cfg)
    return result.value, avg_entropy(pushforward_class_matrix(result.coupling, src_part.labels, src_part.n_classes))


def warmup_matching(
    src_parts: Sequence[AttributedGraph],
    tgt_parts: Sequence[AttributedGraph],
    trials: int,
    cfg: FgwConfig,
    seed: int,
) -> MatchState:
    """
    Preliminary matching of target partitions to source partitions.

    FGW is computed between every partition pair. Each target partition is then evaluated against its FGW nearest
    source partition plus `trials` random ones, and matched to the candidate with lowest information loss, with
    normalization spanning all evaluated candidates.
    """
    if trials < 1:
        raise DataError(f"Warm-up trial count must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    h_src = np.array([class_entropy(p) for p in src_parts])
    pairs = list(itertools.product(range(len(src_parts)), range(len(tgt_parts))))
    results = progress.run_parallel(
        lambda s, t: _pair_terms(src_parts[s], tgt_parts[t], cfg), pairs, desc="Warm-up partition matching"
    )
    fgw = np.empty((len(src_parts), len(tgt_parts)))
    h_pair = np.empty_like(fgw)
    for (s, t), (value, entropy) in zip(pairs, results):
        fgw[s, t] = value
        h_pair[s, t] = entropy

    candidates = []
    for t in range(len(tgt_parts)):
        nearest = int(np.argmin(fgw[:, t]))
        drawn = rng.integers(len(src_parts), size=trials)
        candidates.append(list(more_itertools.unique_everseen([nearest, *map(int, drawn)])))
    ctx = NormContext([LossTerms(h_pair[s, t], h_src[s], fgw[s, t]) for t, c in enumerate(candidates) for s in c])

    state = MatchState(
        np.zeros(len(tgt_parts), dtype=np.int64), np.full(len(tgt_parts), np.inf), h_src
    )
    for t, c in enumerate(candidates):
        for s in c:
            state.offer(t, s, information_loss(LossTerms(h_pair[s, t], h_src[s], fgw[s, t]), ctx))
    logging.getLogger().info(
        f"Warm-up matched {len(tgt_parts)} target partition(s), median information loss {np.median(state.s_loss):.4g}"
    )
    return state


def assemble_subgraphs(subgraphs: Sequence[AttributedGraph]) -> AttributedGraph:
    """Disjoint union of generated subgraphs as a single graph, with uniform histogram."""
    offsets = np.cumsum([0] + [g.n for g in subgraphs])
    n = int(offsets[-1])
    return AttributedGraph(
        np.vstack([g.features for g in subgraphs]),
        np.vstack([g.edges + offset for g, offset in zip(subgraphs, offsets)]).reshape(-1, 2),
        scipy.linalg.block_diag(*[g.structure for g in subgraphs]),
        np.full(n, 1 / n),
        np.full(n, UNLABELED, dtype=np.int64),
        max(g.n_classes for g in subgraphs),
    )


def _generate_subgraph(
    src_part: AttributedGraph, tgt_part: AttributedGraph, k: int, cfg: GenerationConfig, t: int, s: int, seed: int
) -> Interpolation:
    try:
        return interpolate_pair(
            src_part, tgt_part, k, cfg.n_steps, dataclasses.replace(cfg.barycenter, seed=seed)
        )
    except GgdaError as e:
        raise type(e)(f"Generating subgraph k={k} from source partition {s} to target partition {t}: {e}") from e


def split_graph(graph: AttributedGraph, partition_: Partition) -> List[AttributedGraph]:
    """Induced subgraph of every part."""
    return [induced_subgraph(graph, partition_.members(p)) for p in range(partition_.n_parts)]


def generate_sequence(src: AttributedGraph, tgt: AttributedGraph, cfg: GenerationConfig) -> GeneratedSequence:
    """
    Generate the K - 1 intermediate graphs between a labeled source and an unlabeled target graph.

    Both graphs are partitioned and the partitions matched. For every k, P_T target partitions are drawn with
    replacement, each one paired with its current match (kept with a probability decreasing with its information
    loss, else replaced by a random source partition), and interpolated. Information losses are then recomputed from
    the interpolation byproducts, and a match is replaced only by a strictly better one. Intermediate graph k is the
    disjoint union of its subgraphs.
    """
    if not src.is_labeled:
        raise DataError("Source graph must be fully labeled")
    if src.d != tgt.d:
        raise DataError(f"Feature dimensions differ: {src.d} != {tgt.d}")
    n_src_parts = cfg.src_parts or default_part_count(src.n)
    n_tgt_parts = cfg.tgt_parts or default_part_count(tgt.n)
    src_partition = partition(src, n_src_parts, cfg.seed)
    tgt_partition = partition(tgt, n_tgt_parts, cfg.seed + 1)
    src_parts = split_graph(src, src_partition)
    tgt_parts = split_graph(tgt, tgt_partition)
    logging.getLogger().info(f"Partitioned source into {n_src_parts} and target into {n_tgt_parts} partition(s)")

    rng = np.random.default_rng(cfg.seed)
    if cfg.random_matching:
        state = MatchState(
            rng.integers(n_src_parts, size=n_tgt_parts),
            np.full(n_tgt_parts, np.nan),
            np.array([class_entropy(p) for p in src_parts]),
        )
    else:
        state = warmup_matching(src_parts, tgt_parts, cfg.trials, cfg.barycenter.fgw, cfg.seed)
    history = [state.s_loss.copy()]

    intermediates = []
    provenance = []
    for k in range(1, cfg.n_steps):
        jobs = []
        ref_loss = float(np.median(state.s_loss))
        for t in map(int, rng.integers(n_tgt_parts, size=n_tgt_parts)):
            s = int(state.matching[t])
            if not cfg.random_matching and rng.random() >= keep_probability(state.s_loss[t], ref_loss):
                s = int(rng.integers(n_src_parts))
            jobs.append((src_parts[s], tgt_parts[t], k, cfg, t, s, int(rng.integers(2**31))))
        results = progress.run_parallel(_generate_subgraph, jobs, desc=f"Intermediate graph {k}/{cfg.n_steps - 1}")

        terms = [
            LossTerms(
                avg_entropy(pushforward_class_matrix(r.source_coupling, job[0].labels, src.n_classes)),
                state.h_src_entropy[job[5]],
                r.fgw_src + r.fgw_tgt,
            )
            for job, r in zip(jobs, results)
        ]
        ctx = NormContext(terms)
        for job, r, term in zip(jobs, results, terms):
            t, s = job[4], job[5]
            loss = information_loss(term, ctx)
            if not cfg.random_matching:
                state.offer(t, s, loss)
            provenance.append(SubgraphProvenance(k, t, s, loss, r.fgw_src, r.fgw_tgt, r.graph.n))
        intermediates.append(assemble_subgraphs([r.graph for r in results]))
        history.append(state.s_loss.copy())
        logging.getLogger().info(
            f"Generated intermediate graph {k}/{cfg.n_steps - 1}: {intermediates[-1].n} vertices, "
            f"{len(intermediates[-1].edges)} edges from {len(results)} subgraph(s)"
        )

    return GeneratedSequence(tuple(intermediates), tuple(provenance), src_partition, tgt_partition, tuple(history))
