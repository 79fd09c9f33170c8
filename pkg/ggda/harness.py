"""Evaluation metrics and splits, ablation variants, hyperparameter sweeps and plot data emission."""

import collections
import csv
import dataclasses
import enum
import hashlib
import logging
import math
import os
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import sklearn.metrics

from ggda import gnn
from ggda.errors import DataError
from ggda.generation import GeneratedSequence, GenerationConfig, generate_sequence
from ggda.graph_model import AttributedGraph, DomainMeasure, GraphPool, disjoint_union
from ggda.progression import ProgressionConfig, StageLog, run_ggda, run_isolated
from ggda.synth_data import ShiftConfig, default_csbm_pair, multistep_shift

RESOLVED_CONFIG_FILENAME = "config.resolved.txt"
VALIDATION_FRACTION = 0.2

Variant = enum.Enum("Variant", ("SOURCE_ONLY", "DIRECT_ST", "GGDA", "GGDA_ISOLATED", "GGDA_RANDOM_MATCH"))
PlotKind = enum.Enum("PlotKind", ("DISCREPANCY_SWEEP", "DECAY_HEATMAP", "KAPPA_BETA_SWEEP", "DOMAIN_PROGRESS"))

EvalSplit = collections.namedtuple("EvalSplit", ("validation", "test"))
Scenario = collections.namedtuple("Scenario", ("source", "target"))
VariantRun = collections.namedtuple("VariantRun", ("params", "predictions", "logs", "sequence"))
SweepPoint = collections.namedtuple("SweepPoint", ("kappa", "beta", "accuracy", "macro_f1", "n_stages"))
StageCount = collections.namedtuple("StageCount", ("kappa", "n_stages"))
DiscrepancyPoint = collections.namedtuple("DiscrepancyPoint", ("level", "variant", "accuracy", "macro_f1"))


@dataclasses.dataclass(frozen=True)
class EvalReport:
    """Test split metrics of one run. micro_f1 equals accuracy for single label predictions."""

    accuracy: float
    micro_f1: float
    macro_f1: float
    classes: Tuple[int, ...]
    precision: Tuple[float, ...]
    recall: Tuple[float, ...]
    n_validation: int
    n_test: int
    seed: int
    fingerprint: str = ""


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    """Generation and progression settings of an experiment, with its seed and validation share."""

    generation: GenerationConfig = dataclasses.field(default_factory=GenerationConfig)
    progression: ProgressionConfig = dataclasses.field(default_factory=ProgressionConfig)
    seed: int = 0
    validation_fraction: float = VALIDATION_FRACTION

    def __post_init__(self):
        if not 0 <= self.validation_fraction < 1:
            raise DataError(f"Validation fraction must be in [0, 1), got {self.validation_fraction}")


def make_split(n: int, seed: int, validation_fraction: float = VALIDATION_FRACTION) -> EvalSplit:
    """Seeded validation/test split of n target vertices, both parts sorted."""
    if n < 1:
        raise DataError("Cannot split zero vertices")
    order = np.random.default_rng(seed).permutation(n)
    n_validation = min(math.floor(validation_fraction * n + 0.5), n - 1)
    return EvalSplit(np.sort(order[:n_validation]), np.sort(order[n_validation:]))


def config_fingerprint(values: Mapping[str, Any]) -> str:
    """Short stable hash of effective parameters."""
    text = "\n".join(f"{k} = {v}" for k, v in sorted(values.items()))
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def evaluate(
    predictions: np.ndarray,
    ground_truth: np.ndarray,
    split: EvalSplit,
    *,
    seed: int = 0,
    fingerprint: str = "",
) -> EvalReport:
    """Metrics of predictions against ground truth on the test part of split."""
    predictions = np.asarray(predictions, dtype=np.int64)
    ground_truth = np.asarray(ground_truth, dtype=np.int64)
    if predictions.shape != ground_truth.shape:
        raise DataError(f"Got {predictions.size} predictions for {ground_truth.size} labels")
    test = np.asarray(split.test, dtype=np.int64)
    validation = np.asarray(split.validation, dtype=np.int64)
    if test.size == 0:
        raise DataError("Empty test split")
    if np.concatenate([test, validation]).max() >= ground_truth.size:
        raise DataError("Split indices exceed the labeled vertex count")
    y_true = ground_truth[test]
    y_pred = predictions[test]
    classes = np.union1d(y_true, y_pred)
    precision, recall, _, _ = sklearn.metrics.precision_recall_fscore_support(
        y_true, y_pred, labels=classes, average=None, zero_division=0
    )
    return EvalReport(
        float(sklearn.metrics.accuracy_score(y_true, y_pred)),
        float(sklearn.metrics.f1_score(y_true, y_pred, labels=classes, average="micro", zero_division=0)),
        float(sklearn.metrics.f1_score(y_true, y_pred, labels=classes, average="macro", zero_division=0)),
        tuple(int(c) for c in classes),
        tuple(float(p) for p in precision),
        tuple(float(r) for r in recall),
        validation.size,
        test.size,
        seed,
        fingerprint,
    )


def save_report(report: EvalReport, filepath: str) -> None:
    """Write a report as metric,value CSV rows, per class rows last."""
    rows = [
        ("accuracy", report.accuracy),
        ("micro_f1", report.micro_f1),
        ("macro_f1", report.macro_f1),
        ("n_validation", report.n_validation),
        ("n_test", report.n_test),
        ("seed", report.seed),
        ("fingerprint", report.fingerprint),
    ]
    for c, p, r in zip(report.classes, report.precision, report.recall):
        rows.append((f"precision_{c}", p))
        rows.append((f"recall_{c}", r))
    with open(filepath, "wt", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("metric", "value"))
        writer.writerows(rows)


def write_resolved_config(values: Mapping[str, Any], dirpath: str) -> None:
    """Write all effective parameters as sorted key = value lines."""
    os.makedirs(dirpath, exist_ok=True)
    with open(os.path.join(dirpath, RESOLVED_CONFIG_FILENAME), "wt") as f:
        for key, value in sorted(values.items()):
            f.write(f"{key} = {value}\n")


def csbm_scenario(seed: int = 0) -> Scenario:
    """Reference CSBM source and labeled target."""
    return Scenario(*default_csbm_pair(seed))


def build_pool(
    source: AttributedGraph, target: AttributedGraph, generation: Optional[GenerationConfig]
) -> Tuple[GraphPool, Optional[GeneratedSequence]]:
    """Pool of source, generated intermediates (unless generation is None) and unlabeled target."""
    target = target.without_labels()
    if generation is None:
        return disjoint_union([source, target]), None
    sequence = generate_sequence(source, target, generation)
    return disjoint_union([source, *sequence.intermediates, target]), sequence


def train_source_only(pool: GraphPool, src_labels: np.ndarray, cfg: ProgressionConfig) -> VariantRun:
    """Train on the uniform source domain, predict the target."""
    domain = DomainMeasure.initial(pool.global_ids(0), src_labels, pool.n_vertices)
    params = gnn.train(domain, pool, None, cfg.train)
    _, logits = gnn.forward(pool, params)
    return VariantRun(params, np.argmax(logits[pool.origin == pool.target_index], axis=1), [], None)


def run_variant(scenario: Scenario, variant: Variant, cfg: ExperimentConfig) -> VariantRun:
    """Run one ablation variant on a scenario."""
    source, target = scenario
    generation = dataclasses.replace(cfg.generation, seed=cfg.seed)
    if variant is Variant.GGDA_RANDOM_MATCH:
        generation = dataclasses.replace(generation, random_matching=True)
    elif variant in (Variant.SOURCE_ONLY, Variant.DIRECT_ST):
        generation = None
    pool, sequence = build_pool(source, target, generation)
    progression = dataclasses.replace(
        cfg.progression, train=dataclasses.replace(cfg.progression.train, seed=cfg.seed)
    )
    if variant is Variant.SOURCE_ONLY:
        return train_source_only(pool, source.labels, progression)
    if variant is Variant.DIRECT_ST:
        progression = dataclasses.replace(progression, beta=0.0)
    runner = run_isolated if variant is Variant.GGDA_ISOLATED else run_ggda
    params, predictions, logs = runner(pool, source.labels, progression)
    return VariantRun(params, predictions, logs, sequence)


def run_ablation(
    scenario: Scenario, variant: Variant, cfg: ExperimentConfig, fingerprint: str = ""
) -> EvalReport:
    """Run a variant and evaluate its target predictions on the test split."""
    logging.getLogger().info(f"Running variant {variant.name.lower()}")
    run = run_variant(scenario, variant, cfg)
    split = make_split(scenario.target.n, cfg.seed, cfg.validation_fraction)
    report = evaluate(run.predictions, scenario.target.labels, split, seed=cfg.seed, fingerprint=fingerprint)
    logging.getLogger().info(
        f"Variant {variant.name.lower()}: accuracy {report.accuracy:.3f}, macro F1 {report.macro_f1:.3f}"
    )
    return report


def _report_of(scenario: Scenario, predictions: np.ndarray, cfg: ExperimentConfig) -> EvalReport:
    split = make_split(scenario.target.n, cfg.seed, cfg.validation_fraction)
    return evaluate(predictions, scenario.target.labels, split, seed=cfg.seed)


def run_kappa_beta_sweep(
    scenario: Scenario, kappas: Sequence[float], betas: Sequence[float], cfg: ExperimentConfig
) -> List[SweepPoint]:
    """Adapt over a κ × β grid, sharing one generated sequence."""
    pool, _ = build_pool(*scenario, dataclasses.replace(cfg.generation, seed=cfg.seed))
    points = []
    for kappa in kappas:
        for beta in betas:
            progression = dataclasses.replace(cfg.progression, kappa=kappa, beta=beta)
            _, predictions, logs = run_ggda(pool, scenario.source.labels, progression)
            report = _report_of(scenario, predictions, cfg)
            points.append(SweepPoint(kappa, beta, report.accuracy, report.macro_f1, logs[-1].stage))
            logging.getLogger().info(f"kappa={kappa} beta={beta}: accuracy {report.accuracy:.3f}")
    return points


def stage_counts_over_kappa(scenario: Scenario, kappas: Sequence[float], cfg: ExperimentConfig) -> List[StageCount]:
    """Stage count T of the adaptation loop for every κ, on one generated sequence."""
    pool, _ = build_pool(*scenario, dataclasses.replace(cfg.generation, seed=cfg.seed))
    counts = []
    for kappa in kappas:
        progression = dataclasses.replace(cfg.progression, kappa=kappa, diagnostics=False)
        _, _, logs = run_ggda(pool, scenario.source.labels, progression)
        counts.append(StageCount(kappa, logs[-1].stage))
    return counts


def run_discrepancy_sweep(
    source: AttributedGraph, shift: ShiftConfig, variants: Iterable[Variant], cfg: ExperimentConfig
) -> List[DiscrepancyPoint]:
    """Adapt from a labeled graph to every step of its class-wise shift chain, levels ranked 1 (closest) upwards."""
    chain = multistep_shift(source, shift)
    variants = tuple(variants)
    points = []
    for level in range(1, len(chain)):
        scenario = Scenario(source, chain[level])
        for variant in variants:
            report = run_ablation(scenario, variant, cfg)
            points.append(DiscrepancyPoint(level, variant.name.lower(), report.accuracy, report.macro_f1))
    return points


def _decay_heatmap_rows(logs: Sequence[StageLog]) -> List[Dict[str, Any]]:
    return [
        {"stage": log.stage, "graph": graph, "weight_sum": float(weight)}
        for log in logs
        for graph, weight in enumerate(log.origin_weights)
    ]


def _domain_progress_rows(logs: Sequence[StageLog]) -> List[Dict[str, Any]]:
    distances = [log.target_distance for log in logs if log.target_distance is not None]
    if not distances:
        raise DataError("Stage logs carry no target distances")
    scale = max(distances) or 1.0
    rows = [
        {
            "stage": log.stage,
            "domain": "intermediate",
            "target_distance": log.target_distance,
            "normalized_distance": log.target_distance / scale,
            "delta_proxy": "" if log.delta_proxy is None else log.delta_proxy,
        }
        for log in logs
        if log.target_distance is not None
    ]
    rows.append(
        {
            "stage": logs[-1].stage + 1,
            "domain": "target",
            "target_distance": 0.0,
            "normalized_distance": 0.0,
            "delta_proxy": "",
        }
    )
    return rows


def _point_rows(points: Sequence[tuple]) -> List[Dict[str, Any]]:
    return [p._asdict() for p in points]


def plot_rows(kind: PlotKind, data: Sequence) -> List[Dict[str, Any]]:
    """Tidy rows of a plot, one per point."""
    if kind is PlotKind.DECAY_HEATMAP:
        return _decay_heatmap_rows(data)
    if kind is PlotKind.DOMAIN_PROGRESS:
        return _domain_progress_rows(data)
    if kind in (PlotKind.KAPPA_BETA_SWEEP, PlotKind.DISCREPANCY_SWEEP):
        return _point_rows(data)
    raise DataError(f"Unknown plot kind {kind!r}")


def save_rows(rows: Sequence[Dict[str, Any]], filepath: str) -> None:
    """Write dict rows as CSV, header taken from the first row."""
    with open(filepath, "wt", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def emit_plot_data(kind: PlotKind, data: Sequence, filepath: str) -> int:
    """Write the plot data CSV of kind, return the row count."""
    rows = plot_rows(kind, data)
    if not rows:
        raise DataError(f"No {kind.name.lower()} data to write")
    save_rows(rows, filepath)
    return len(rows)


def save_predictions(predictions: np.ndarray, filepath: str) -> None:
    """Write one predicted class per line."""
    with open(filepath, "wt") as f:
        f.writelines(f"{int(p)}\n" for p in predictions)


def load_predictions(filepath: str) -> np.ndarray:
    """Read a file written by save_predictions."""
    predictions = []
    with open(filepath, "rt") as f:
        for line_number, line in enumerate(f, 1):
            try:
                predictions.append(int(line))
            except ValueError:
                raise DataError(f"{filepath}:{line_number}: expected a class id, got {line.rstrip()!r}")
    return np.array(predictions, dtype=np.int64)
