"""Domain progression: vertex selection, mass decay, domain advancement and the adaptation loop."""

import collections
import csv
import dataclasses
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.spatial.distance
import sklearn.metrics

from ggda import gnn
from ggda.errors import DataError
from ggda.graph_model import DomainMeasure, GraphPool
from ggda.ot_fgw import wasserstein_exact

STAGES_HEADER = (
    "stage",
    "domain_size",
    "labeled_target_fraction",
    "delta_proxy",
    "target_distance",
    "event",
    "vertex",
    "graph",
    "label",
    "score",
    "distance",
    "margin",
    "lambda",
    "mask",
    "weight",
)

Selection = collections.namedtuple("Selection", ("vertex_ids", "labels", "scores", "distances", "margins"))


@dataclasses.dataclass(frozen=True)
class ProgressionConfig:
    """Adaptation loop settings, cap_k defaults to the mean of source and target sizes."""

    eta: float = 1.0
    kappa: float = 0.1
    beta: float = 5.0
    ru_target: float = 0.1
    cap_k: Optional[int] = None
    max_stages: int = 100
    train: gnn.TrainConfig = dataclasses.field(default_factory=gnn.TrainConfig)
    diagnostics: bool = True

    def __post_init__(self):
        if self.eta < 0:
            raise DataError(f"eta must be >= 0, got {self.eta}")
        if not self.kappa > 0:
            raise DataError(f"kappa must be > 0, got {self.kappa}")
        if self.beta < 0:
            raise DataError(f"beta must be >= 0, got {self.beta}")
        if not 0 <= self.ru_target < 1:
            raise DataError(f"Unlabeled target ratio tolerance must be in [0, 1), got {self.ru_target}")
        if self.cap_k is not None and self.cap_k < 1:
            raise DataError(f"cap_k must be >= 1, got {self.cap_k}")
        if self.max_stages < 1:
            raise DataError(f"max_stages must be >= 1, got {self.max_stages}")


@dataclasses.dataclass(frozen=True, eq=False)
class StageLog:
    """
    Diagnostics of one stage t, taken on the domain μ_t the stage model was trained on.

    Selection arrays are aligned with selected_ids. Decay arrays are aligned with decayed_ids, and hold the mass
    decay λ of this stage and the resulting cumulative mask. origin_weights sums μ_t weights per pool graph.
    """

    stage: int
    selected_ids: np.ndarray
    selected_labels: np.ndarray
    scores: np.ndarray
    distances: np.ndarray
    margins: np.ndarray
    decayed_ids: np.ndarray
    decay_factors: np.ndarray
    decay_mask: np.ndarray
    origin_weights: np.ndarray
    domain_size: int
    labeled_target_fraction: float
    delta_proxy: Optional[float] = None
    target_distance: Optional[float] = None
    exhausted: bool = False


def _empty(dtype=np.float64) -> np.ndarray:
    return np.zeros(0, dtype=dtype)


def selection_scores(
    embeddings: np.ndarray, margins: np.ndarray, labeled_ids: np.ndarray, unlabeled_ids: np.ndarray, eta: float
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Regularized confidence score of every unlabeled vertex, and its embedding distance to the labeled set.

    c_u = margin_u · exp(-(d_u / max d) · η), d_u being the Euclidean distance to the nearest labeled embedding.
    margins is aligned with unlabeled_ids.
    """
    labeled_ids = np.asarray(labeled_ids, dtype=np.int64)
    unlabeled_ids = np.asarray(unlabeled_ids, dtype=np.int64)
    if labeled_ids.size == 0:
        raise DataError("Selection scores need at least one labeled vertex")
    if unlabeled_ids.size == 0:
        return _empty(), _empty()
    _, distances = sklearn.metrics.pairwise_distances_argmin_min(embeddings[unlabeled_ids], embeddings[labeled_ids])
    max_distance = distances.max()
    penalty = np.exp(-(distances / max_distance) * eta) if max_distance > 0 else np.ones_like(distances)
    return np.asarray(margins, dtype=np.float64) * penalty, distances


def class_caps(kappa: float, source_class_counts: np.ndarray) -> np.ndarray:
    """Per class selection cap max(1, round(κ · source count)), rounding half up."""
    return np.array([max(1, math.floor(kappa * c + 0.5)) for c in source_class_counts], dtype=np.int64)


def select_vertices(
    scores: np.ndarray,
    predicted_classes: np.ndarray,
    kappa: float,
    source_class_counts: np.ndarray,
    vertex_ids: np.ndarray,
) -> np.ndarray:
    """Positions of the top scoring candidates of every predicted class, up to the class caps, in selection order."""
    scores = np.asarray(scores, dtype=np.float64)
    predicted_classes = np.asarray(predicted_classes, dtype=np.int64)
    vertex_ids = np.asarray(vertex_ids, dtype=np.int64)
    caps = class_caps(kappa, source_class_counts)
    order = np.lexsort((vertex_ids, -scores))
    taken = np.zeros(caps.size, dtype=np.int64)
    selected = []
    for position in order:
        c = predicted_classes[position]
        if c < caps.size and taken[c] < caps[c]:
            taken[c] += 1
            selected.append(position)
    return np.array(selected, dtype=np.int64)


def mass_decay(prev_score, new_score, beta: float):
    """
    Mass decay λ = exp(-(1 - min(ratio, 1)) · β) of a vertex whose label score went from prev_score to new_score.

    ratio is new / prev for a positive previous score. Otherwise it is 1 if the score did not degrade, else 0.
    The ratio is clipped to [0, 1], so λ ∈ [e^-β, 1]. Works elementwise on arrays.
    """
    prev = np.asarray(prev_score, dtype=np.float64)
    new = np.asarray(new_score, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(prev > 0, new / prev, np.where(new >= prev, 1.0, 0.0))
    decay = np.exp(-(1 - np.clip(ratio, 0, 1)) * beta)
    return float(decay) if decay.ndim == 0 else decay


def advance_domain(
    current: DomainMeasure,
    selected: Selection,
    decay_factors: np.ndarray,
    cap_k: int,
    is_target: Optional[np.ndarray] = None,
) -> DomainMeasure:
    """
    Next domain μ_{t+1} from the current one, the newly pseudo-labeled vertices and this stage's mass decay.

    Cumulative masks of current vertices are multiplied by decay_factors (aligned with current.vertex_ids, target
    vertices exempt). Current vertices weigh their mask, new vertices weigh 1. The cap_k heaviest entries are kept
    (ties: target first, then new before old, then lower id) and the weights renormalized.
    """
    new_ids = np.asarray(selected.vertex_ids, dtype=np.int64)
    if np.intersect1d(new_ids, current.vertex_ids).size:
        raise DataError("Selected vertices overlap the current domain")
    if is_target is None:
        is_target = np.zeros(current.decay_mask.size, dtype=bool)
    decay_factors = np.where(is_target[current.vertex_ids], 1.0, np.asarray(decay_factors, dtype=np.float64))
    mask = np.array(current.decay_mask)
    mask[current.vertex_ids] *= decay_factors

    ids = np.concatenate([current.vertex_ids, new_ids])
    masses = np.concatenate([mask[current.vertex_ids], np.ones(new_ids.size)])
    labels = np.concatenate([current.labels, selected.labels])
    scores = np.concatenate([current.label_scores, selected.scores])
    is_new = np.concatenate([np.zeros(len(current), dtype=bool), np.ones(new_ids.size, dtype=bool)])
    keep = np.lexsort((ids, ~is_new, ~is_target[ids], -masses))[:cap_k]
    keep = keep[np.argsort(ids[keep])]
    return DomainMeasure(
        current.stage + 1, ids[keep], masses[keep] / masses[keep].sum(), labels[keep], scores[keep], mask
    )


def labeled_target_fraction(domain: DomainMeasure, pool: GraphPool) -> float:
    """Share of target vertices in the domain support."""
    n_target = pool.graphs[pool.target_index].n
    return float(np.count_nonzero(pool.origin[domain.vertex_ids] == pool.target_index) / n_target)


def embedding_distance(embeddings: np.ndarray, ids1, weights1, ids2, weights2) -> float:
    """W1 between two weighted vertex sets in embedding space, Euclidean ground cost."""
    cost = scipy.spatial.distance.cdist(embeddings[ids1], embeddings[ids2])
    return wasserstein_exact(cost, weights1, weights2).value


def _origin_weights(domain: DomainMeasure, pool: GraphPool) -> np.ndarray:
    return np.bincount(pool.origin[domain.vertex_ids], weights=domain.weights, minlength=pool.n_graphs)


def _stage_train_config(cfg: ProgressionConfig, t: int) -> gnn.TrainConfig:
    return dataclasses.replace(cfg.train, seed=cfg.train.seed + t)


def _check_source(pool: GraphPool, src_labels: np.ndarray) -> np.ndarray:
    src_labels = np.asarray(src_labels, dtype=np.int64)
    if pool.n_graphs < 2:
        raise DataError("Pool needs a source and a target graph")
    if src_labels.shape != (pool.graphs[0].n,):
        raise DataError(f"Expected {pool.graphs[0].n} source labels, got {src_labels.size}")
    if src_labels.size == 0 or src_labels.min() < 0 or src_labels.max() >= pool.n_classes:
        raise DataError(f"Source labels must be in [0, {pool.n_classes})")
    return src_labels


def _diagnostics(cfg, pool, embeddings, domain, prev_domain):
    if not cfg.diagnostics:
        return None, None
    target_ids = pool.global_ids(pool.target_index)
    target_distance = embedding_distance(
        embeddings, domain.vertex_ids, domain.weights, target_ids, np.full(target_ids.size, 1 / target_ids.size)
    )
    delta_proxy = None
    if prev_domain is not None:
        delta_proxy = embedding_distance(
            embeddings, prev_domain.vertex_ids, prev_domain.weights, domain.vertex_ids, domain.weights
        )
    return delta_proxy, target_distance


def run_ggda(
    pool: GraphPool, src_labels: np.ndarray, cfg: ProgressionConfig
) -> Tuple[gnn.ModelParams, np.ndarray, List[StageLog]]:
    """
    Adapt from the source graph (pool index 0) to the target graph (last pool index) through the pool.

    Starting from the uniform source domain, every stage trains a fresh model, pseudo-labels the best scoring
    unlabeled vertices, decays the mass of domain vertices whose label score degraded, and advances the domain. The
    loop runs while the unlabeled share of the target exceeds cfg.ru_target. Returns the model trained on the last
    domain, its target predictions, and one StageLog per stage (the last one for the final training pass).
    """
    src_labels = _check_source(pool, src_labels)
    n_src = pool.graphs[0].n
    n_tgt = pool.graphs[pool.target_index].n
    cap_k = cfg.cap_k or math.floor((n_src + n_tgt) / 2 + 0.5)
    is_target = pool.origin == pool.target_index
    is_source = pool.origin == 0
    source_class_counts = np.bincount(src_labels, minlength=pool.n_classes)

    domain = DomainMeasure.initial(pool.global_ids(0), src_labels, pool.n_vertices)
    prev_domain = None
    logs = []
    exhausted = False
    t = 0
    while 1 - labeled_target_fraction(domain, pool) > cfg.ru_target:
        if t >= cfg.max_stages:
            logging.getLogger().warning(f"Stopping after {cfg.max_stages} stages with targets still unlabeled")
            break
        params = gnn.train(domain, pool, None, _stage_train_config(cfg, t))
        embeddings, logits = gnn.forward(pool, params)

        in_domain = np.zeros(pool.n_vertices, dtype=bool)
        in_domain[domain.vertex_ids] = True
        candidates = np.flatnonzero(~in_domain & ~is_source)
        if candidates.size == 0:
            logging.getLogger().warning(f"Stage {t}: no unlabeled candidate vertex left")
            exhausted = True
            break
        margins, predictions = gnn.margins_and_predictions(logits[candidates])
        scores, distances = selection_scores(embeddings, margins, domain.vertex_ids, candidates, cfg.eta)
        picked = select_vertices(scores, predictions, cfg.kappa, source_class_counts, candidates)
        selected = Selection(
            candidates[picked],
            predictions[picked],
            gnn.label_scores(logits[candidates[picked]], predictions[picked]),
            distances[picked],
            margins[picked],
        )

        new_scores = gnn.label_scores(logits[domain.vertex_ids], domain.labels)
        decayable = ~is_target[domain.vertex_ids] & np.isfinite(domain.label_scores) & (t >= 1)
        decay_factors = np.ones(len(domain))
        decay_factors[decayable] = mass_decay(domain.label_scores[decayable], new_scores[decayable], cfg.beta)
        scored = dataclasses.replace(domain, label_scores=new_scores)

        delta_proxy, target_distance = _diagnostics(cfg, pool, embeddings, domain, prev_domain)
        decayed_ids = domain.vertex_ids[decayable]
        logs.append(
            StageLog(
                t,
                selected.vertex_ids,
                selected.labels,
                selected.scores,
                selected.distances,
                selected.margins,
                decayed_ids,
                decay_factors[decayable],
                domain.decay_mask[decayed_ids] * decay_factors[decayable],
                _origin_weights(domain, pool),
                len(domain),
                labeled_target_fraction(domain, pool),
                delta_proxy,
                target_distance,
            )
        )
        prev_domain = domain
        domain = advance_domain(scored, selected, decay_factors, cap_k, is_target)
        logging.getLogger().info(
            f"Stage {t}: selected {selected.vertex_ids.size} vertices, "
            f"{np.count_nonzero(decay_factors < 1)} decayed, next domain has {len(domain)} vertices, "
            f"{labeled_target_fraction(domain, pool):.1%} of target labeled"
        )
        t += 1

    params = gnn.train(domain, pool, None, _stage_train_config(cfg, t))
    embeddings, logits = gnn.forward(pool, params)
    delta_proxy, target_distance = _diagnostics(cfg, pool, embeddings, domain, prev_domain)
    logs.append(
        StageLog(
            t,
            _empty(np.int64),
            _empty(np.int64),
            _empty(),
            _empty(),
            _empty(),
            _empty(np.int64),
            _empty(),
            _empty(),
            _origin_weights(domain, pool),
            len(domain),
            labeled_target_fraction(domain, pool),
            delta_proxy,
            target_distance,
            exhausted,
        )
    )
    logging.getLogger().info(f"Adaptation finished after {t} stage(s)")
    return params, np.argmax(logits[is_target], axis=1), logs


def run_isolated(
    pool: GraphPool, src_labels: np.ndarray, cfg: ProgressionConfig
) -> Tuple[gnn.ModelParams, np.ndarray, List[StageLog]]:
    """
    Gradual self-training treating every pool graph after the source as one whole domain.

    The model of stage k - 1 pseudo-labels all vertices of graph k, and a fresh model is trained on them with
    uniform weights. No selection and no mass decay take place.
    """
    src_labels = _check_source(pool, src_labels)
    domain = DomainMeasure.initial(pool.global_ids(0), src_labels, pool.n_vertices)
    prev_domain = None
    logs = []
    for t in range(pool.n_graphs):
        params = gnn.train(domain, pool, None, _stage_train_config(cfg, t))
        embeddings, logits = gnn.forward(pool, params)
        delta_proxy, target_distance = _diagnostics(cfg, pool, embeddings, domain, prev_domain)
        if t + 1 < pool.n_graphs:
            ids = pool.global_ids(t + 1)
            margins, predictions = gnn.margins_and_predictions(logits[ids])
        else:
            ids, predictions, margins = _empty(np.int64), _empty(np.int64), _empty()
        logs.append(
            StageLog(
                t,
                ids,
                predictions,
                margins,
                np.full(ids.size, np.nan),
                margins,
                _empty(np.int64),
                _empty(),
                _empty(),
                _origin_weights(domain, pool),
                len(domain),
                labeled_target_fraction(domain, pool),
                delta_proxy,
                target_distance,
            )
        )
        if t + 1 < pool.n_graphs:
            prev_domain = domain
            domain = DomainMeasure(t + 1, ids, np.full(ids.size, 1 / ids.size), predictions, margins, domain.decay_mask)
            logging.getLogger().info(f"Stage {t}: pseudo-labeled graph {t + 1} ({ids.size} vertices)")
    return params, np.argmax(logits[pool.origin == pool.target_index], axis=1), logs


def _optional(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.6g}"


def save_stage_logs(logs: Sequence[StageLog], pool: GraphPool, filepath: str) -> None:
    """Write stage logs as CSV: one 'stage' summary row per stage, then one row per selected or decayed vertex."""
    with open(filepath, "wt", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(STAGES_HEADER)
        for log in logs:
            common = (
                log.stage,
                log.domain_size,
                f"{log.labeled_target_fraction:.6g}",
                _optional(log.delta_proxy),
                _optional(log.target_distance),
            )
            writer.writerow(common + ("exhausted" if log.exhausted else "stage",) + ("",) * 9)
            for graph_index, weight in enumerate(log.origin_weights):
                writer.writerow(common + ("graph_weight", "", graph_index) + ("",) * 6 + (f"{weight:.6g}",))
            for i, vertex in enumerate(log.selected_ids):
                writer.writerow(
                    common
                    + ("selected", vertex, pool.origin[vertex], log.selected_labels[i])
                    + (f"{log.scores[i]:.6g}", f"{log.distances[i]:.6g}", f"{log.margins[i]:.6g}", "", "", "")
                )
            for i, vertex in enumerate(log.decayed_ids):
                writer.writerow(
                    common
                    + ("decayed", vertex, pool.origin[vertex], "", "", "", "")
                    + (f"{log.decay_factors[i]:.6g}", f"{log.decay_mask[i]:.6g}", "")
                )
