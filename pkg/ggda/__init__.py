#!/usr/bin/env python3

"""Graph gradual domain adaptation: bridge a labeled source graph and an unlabeled target graph with generated
intermediate graphs, and adapt a node classifier along them."""

__version__ = "2026.10.18.0"
__license__ = "GPLv3"

import argparse
import logging
import os
import sys
from typing import Any, Dict, Optional, Sequence

import numpy as np
import platformdirs
import torch

from ggda import colored_logging, gnn, harness, partitioner, progress, progression, staging, synth_data
from ggda.errors import DataError, NumericalError
from ggda.fgw_barycenter import BarycenterConfig
from ggda.generation import PROVENANCE_HEADER, GenerationConfig, generate_sequence
from ggda.graph_model import (
    HistMode,
    StructureMode,
    disjoint_union,
    load_bundle,
    load_pool,
    save_bundle,
    save_pool,
)
from ggda.ot_fgw import FgwConfig, fgw_distance

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3
CONFIG_FILENAME = "ggda.conf"
TRUE_STRINGS = frozenset(("1", "true", "yes", "on"))
FALSE_STRINGS = frozenset(("0", "false", "no", "off"))


class ArgumentParser(argparse.ArgumentParser):
    """Argument parser exiting with the usage error code."""

    def error(self, message):
        """See argparse.ArgumentParser.error."""
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def default_config_filepath() -> str:
    """Per user config file location."""
    return os.path.join(platformdirs.user_config_dir("ggda"), CONFIG_FILENAME)


def read_config_file(filepath: str) -> Dict[str, str]:
    """Parse 'key = value' lines, '#' comments and blank lines ignored, '-' in keys read as '_'."""
    values = {}
    with open(filepath, "rt") as f:
        for line_number, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise DataError(f"{filepath}:{line_number}: expected 'key = value', got {line!r}")
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def apply_config(parser: argparse.ArgumentParser, values: Dict[str, str]) -> None:
    """Use config file values as defaults of parser flags, so that command line flags still take precedence."""
    defaults = {}
    for action in parser._actions:
        if action.dest not in values:
            continue
        value = values[action.dest]
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            if value.lower() not in TRUE_STRINGS | FALSE_STRINGS:
                raise DataError(f"Config key {action.dest!r}: expected a boolean, got {value!r}")
            value = value.lower() in TRUE_STRINGS
        elif action.nargs in ("+", "*"):
            value = [action.type(v) if action.type else v for v in value.split()]
        defaults[action.dest] = value
    parser.set_defaults(**defaults)


#
# Shared flags
#


def add_graph_mode_args(parser: argparse.ArgumentParser) -> None:
    """Structure matrix and histogram derivation flags."""
    parser.add_argument(
        "--structure",
        choices=tuple(m.name.lower() for m in StructureMode),
        default=StructureMode.ADJACENCY.name.lower(),
        help="Structure matrix derived from edges",
    )
    parser.add_argument(
        "--hist",
        choices=tuple(m.name.lower() for m in HistMode),
        default=HistMode.UNIFORM.name.lower(),
        help="Vertex histogram derived from edges",
    )


def add_generation_args(parser: argparse.ArgumentParser) -> None:
    """Intermediate graph generation flags."""
    parser.add_argument("--k", type=int, default=GenerationConfig.n_steps, help="Number of interpolation steps K")
    parser.add_argument("--ps", type=int, default=None, help="Source partition count (default: 1 per 500 vertices)")
    parser.add_argument("--pt", type=int, default=None, help="Target partition count (default: 1 per 500 vertices)")
    parser.add_argument("--alpha", type=float, default=FgwConfig.alpha, help="FGW structure/feature trade-off")
    parser.add_argument("--trials", type=int, default=GenerationConfig.trials, help="Random warm-up candidates")
    parser.add_argument("--fgw-iters", type=int, default=FgwConfig.max_iters, help="Frank-Wolfe iteration cap")
    parser.add_argument("--bcd-iters", type=int, default=BarycenterConfig.bcd_iters, help="Barycenter iteration cap")
    parser.add_argument(
        "--random-matching", action="store_true", default=False, help="Use a fixed random partition matching"
    )


def add_progression_args(parser: argparse.ArgumentParser) -> None:
    """Adaptation loop and training flags."""
    parser.add_argument("--eta", type=float, default=progression.ProgressionConfig.eta, help="Distance penalty")
    parser.add_argument("--kappa", type=float, default=progression.ProgressionConfig.kappa, help="Selection ratio")
    parser.add_argument("--beta", type=float, default=progression.ProgressionConfig.beta, help="Mass decay rate")
    parser.add_argument(
        "--ru", type=float, default=progression.ProgressionConfig.ru_target, help="Unlabeled target ratio tolerance"
    )
    parser.add_argument("--cap-k", type=int, default=None, help="Domain support cap (default: mean graph size)")
    parser.add_argument(
        "--max-stages", type=int, default=progression.ProgressionConfig.max_stages, help="Adaptation stage cap"
    )
    parser.add_argument("--epochs", type=int, default=gnn.TrainConfig.epochs, help="Training epochs per stage")
    parser.add_argument("--lr", type=float, default=gnn.TrainConfig.learning_rate, help="Adam learning rate")
    parser.add_argument("--weight-decay", type=float, default=gnn.TrainConfig.weight_decay, help="L2 penalty")
    parser.add_argument("--hidden", type=int, default=gnn.TrainConfig.hidden, help="Hidden width")
    parser.add_argument("--dropout", type=float, default=gnn.TrainConfig.dropout, help="Training dropout")


def add_seed_arg(parser: argparse.ArgumentParser) -> None:
    """Random seed flag."""
    parser.add_argument("--seed", type=int, default=0, help="Random seed")


def generation_config(args: argparse.Namespace) -> GenerationConfig:
    """GenerationConfig from parsed flags."""
    fgw = FgwConfig(alpha=args.alpha, max_iters=args.fgw_iters)
    return GenerationConfig(
        n_steps=args.k,
        src_parts=args.ps,
        tgt_parts=args.pt,
        trials=args.trials,
        barycenter=BarycenterConfig(bcd_iters=args.bcd_iters, fgw=fgw),
        random_matching=args.random_matching,
        seed=args.seed,
    )


def progression_config(args: argparse.Namespace) -> progression.ProgressionConfig:
    """ProgressionConfig from parsed flags."""
    return progression.ProgressionConfig(
        eta=args.eta,
        kappa=args.kappa,
        beta=args.beta,
        ru_target=args.ru,
        cap_k=args.cap_k,
        max_stages=args.max_stages,
        train=gnn.TrainConfig(
            epochs=args.epochs,
            learning_rate=args.lr,
            weight_decay=args.weight_decay,
            hidden=args.hidden,
            seed=args.seed,
            dropout=args.dropout,
        ),
    )


def experiment_config(args: argparse.Namespace) -> harness.ExperimentConfig:
    """ExperimentConfig from parsed flags."""
    return harness.ExperimentConfig(generation_config(args), progression_config(args), args.seed)


def resolved_values(args: argparse.Namespace) -> Dict[str, Any]:
    """Effective parameters of a run."""
    values = {k: v for k, v in vars(args).items() if k != "func"}
    values["version"] = __version__
    return values


def load_graph(dirpath: str, args: argparse.Namespace):
    """Load a graph bundle with the structure and histogram modes of args."""
    return load_bundle(
        dirpath, structure_mode=StructureMode[args.structure.upper()], hist_mode=HistMode[args.hist.upper()]
    )


def scenario_from_args(args: argparse.Namespace) -> harness.Scenario:
    """Scenario from --source/--target bundles, or the reference CSBM scenario."""
    if args.source is None:
        return harness.csbm_scenario(args.seed)
    return harness.Scenario(load_graph(args.source, args), load_graph(args.target, args))


#
# Sub-commands
#


def cmd_partition(args: argparse.Namespace) -> None:
    """Partition a graph."""
    graph = load_graph(args.graph, args)
    partition_ = partitioner.partition(graph, args.parts, args.seed)
    partitioner.save_assignment(partition_, args.out)
    logging.getLogger().info(
        f"{args.parts} part(s), sizes {partition_.part_sizes.tolist()}, "
        f"edge cut {partitioner.edge_cut(graph, partition_)}"
    )


def cmd_fgw(args: argparse.Namespace) -> None:
    """Compute the FGW distance between two graphs."""
    g1 = load_graph(args.g1, args)
    g2 = load_graph(args.g2, args)
    result = fgw_distance(g1, g2, FgwConfig(alpha=args.alpha, p=args.p, q=args.q, max_iters=args.max_iters))
    print(f"{result.value:.10g} {result.iters}")
    if not result.converged:
        logging.getLogger().warning(f"Frank-Wolfe stopped after {result.iters} iterations without converging")
    if args.coupling_out is not None:
        np.asarray(result.coupling.pi, dtype="<f4").tofile(args.coupling_out)


def _generate_pool(source, target, generation: GenerationConfig, out_dir: str, values: Dict[str, Any]) -> None:
    target = target.without_labels()
    sequence = generate_sequence(source, target, generation)
    save_pool([source, *sequence.intermediates, target], out_dir, sequence.provenance, PROVENANCE_HEADER)
    harness.write_resolved_config(values, out_dir)


def cmd_generate(args: argparse.Namespace) -> None:
    """Generate the intermediate graph pool."""
    source = load_graph(args.source, args)
    target = load_graph(args.target, args)
    _generate_pool(source, target, generation_config(args), args.out, resolved_values(args))


def _adapt_pool(pool, src_labels, cfg: progression.ProgressionConfig, isolated: bool, out_dir: str, values) -> None:
    runner = progression.run_isolated if isolated else progression.run_ggda
    params, predictions, logs = runner(pool, src_labels, cfg)
    with staging.staging_dir(out_dir) as tmp_dir:
        harness.save_predictions(predictions, os.path.join(tmp_dir, "predictions.txt"))
        progression.save_stage_logs(logs, pool, os.path.join(tmp_dir, "stages.csv"))
        harness.emit_plot_data(harness.PlotKind.DECAY_HEATMAP, logs, os.path.join(tmp_dir, "decay_heatmap.csv"))
        if cfg.diagnostics:
            harness.emit_plot_data(
                harness.PlotKind.DOMAIN_PROGRESS, logs, os.path.join(tmp_dir, "domain_progress.csv")
            )
        gnn.save_params(params, tmp_dir)
        harness.write_resolved_config(values, tmp_dir)
    logging.getLogger().info(f"Wrote predictions for {predictions.size} target vertices to {out_dir!r}")


def cmd_adapt(args: argparse.Namespace) -> None:
    """Adapt a classifier along a pool."""
    graphs = load_pool(args.pool)
    if not graphs[0].is_labeled:
        raise DataError(f"{args.pool}: source graph must be fully labeled")
    pool = disjoint_union(graphs)
    _adapt_pool(pool, graphs[0].labels, progression_config(args), args.isolated, args.out, resolved_values(args))


def cmd_eval(args: argparse.Namespace) -> None:
    """Evaluate target predictions."""
    predictions = harness.load_predictions(args.predictions)
    truth = load_bundle(args.graph)
    if not truth.is_labeled:
        raise DataError(f"{args.graph}: ground truth graph must be fully labeled")
    split = harness.make_split(truth.n, args.seed, args.validation_fraction)
    report = harness.evaluate(predictions, truth.labels, split, seed=args.seed)
    print(f"accuracy={report.accuracy:.4f} micro_f1={report.micro_f1:.4f} macro_f1={report.macro_f1:.4f}")
    if args.out is not None:
        harness.save_report(report, args.out)


def cmd_synth_csbm(args: argparse.Namespace) -> None:
    """Sample a CSBM graph."""
    means = tuple((m[0] + args.mean_shift,) + m[1:] for m in synth_data.DEFAULT_CLASS_MEANS)
    cfg = synth_data.CsbmConfig(
        nodes_per_class=args.nodes_per_class,
        class_means=means,
        covariance_scale=args.covariance_scale,
        p_intra=args.p_intra,
        p_inter=args.p_inter,
        dissimilar_rewire_frac=args.rewire_frac,
        seed=args.seed,
    )
    graph = synth_data.csbm_generate(cfg)
    save_bundle(graph, args.out)
    logging.getLogger().info(f"Wrote {graph.n} vertex CSBM graph to {args.out!r}")


def cmd_synth_shift(args: argparse.Namespace) -> None:
    """Write a multi-step class-wise shift chain."""
    graph = load_bundle(args.graph)
    chain = synth_data.multistep_shift(
        graph, synth_data.ShiftConfig(steps=args.steps, noise_scale=args.noise_scale, seed=args.seed)
    )
    for step, shifted in enumerate(chain):
        save_bundle(shifted, f"{args.out}_{step}")
    logging.getLogger().info(f"Wrote {len(chain)} shift steps to {args.out!r}_*")


def cmd_ablate(args: argparse.Namespace) -> None:
    """Run ablation variants over seeds."""
    rows = []
    first_seed = args.seed
    for seed in range(first_seed, first_seed + args.seeds):
        args.seed = seed
        scenario = scenario_from_args(args)
        cfg = experiment_config(args)
        for name in args.variants:
            report = harness.run_ablation(scenario, harness.Variant[name.upper()], cfg)
            rows.append(
                {
                    "variant": name,
                    "seed": seed,
                    "accuracy": report.accuracy,
                    "micro_f1": report.micro_f1,
                    "macro_f1": report.macro_f1,
                }
            )
            print(f"{name} seed={seed} accuracy={report.accuracy:.4f} macro_f1={report.macro_f1:.4f}")
    args.seed = first_seed
    with staging.staging_dir(args.out) as tmp_dir:
        harness.save_rows(rows, os.path.join(tmp_dir, "ablation.csv"))
        harness.write_resolved_config(resolved_values(args), tmp_dir)


def cmd_pipeline(args: argparse.Namespace) -> None:
    """Generate, adapt and evaluate."""
    scenario = scenario_from_args(args)
    values = resolved_values(args)
    pool_dir = os.path.join(args.out, "pool")
    run_dir = os.path.join(args.out, "run")
    _generate_pool(scenario.source, scenario.target, generation_config(args), pool_dir, values)
    graphs = load_pool(pool_dir)
    _adapt_pool(disjoint_union(graphs), graphs[0].labels, progression_config(args), False, run_dir, values)
    predictions = harness.load_predictions(os.path.join(run_dir, "predictions.txt"))
    split = harness.make_split(scenario.target.n, args.seed)
    report = harness.evaluate(
        predictions, scenario.target.labels, split, seed=args.seed, fingerprint=harness.config_fingerprint(values)
    )
    harness.save_report(report, os.path.join(args.out, "report.csv"))
    harness.write_resolved_config(values, args.out)
    print(f"accuracy={report.accuracy:.4f} micro_f1={report.micro_f1:.4f} macro_f1={report.macro_f1:.4f}")


def cmd_sweep(args: argparse.Namespace) -> None:
    """Run a hyperparameter or discrepancy sweep."""
    cfg = experiment_config(args)
    scenario = scenario_from_args(args)
    with staging.staging_dir(args.out) as tmp_dir:
        if args.kind == "kappa_beta":
            points = harness.run_kappa_beta_sweep(scenario, args.kappas, args.betas, cfg)
            harness.emit_plot_data(harness.PlotKind.KAPPA_BETA_SWEEP, points, os.path.join(tmp_dir, "kappa_beta.csv"))
        elif args.kind == "discrepancy":
            shift = synth_data.ShiftConfig(steps=args.steps, noise_scale=args.noise_scale, seed=args.seed)
            variants = [harness.Variant[name.upper()] for name in args.variants]
            points = harness.run_discrepancy_sweep(scenario.source, shift, variants, cfg)
            harness.emit_plot_data(
                harness.PlotKind.DISCREPANCY_SWEEP, points, os.path.join(tmp_dir, "discrepancy.csv")
            )
        else:
            counts = harness.stage_counts_over_kappa(scenario, args.kappas, cfg)
            harness.save_rows([c._asdict() for c in counts], os.path.join(tmp_dir, "kappa_stages.csv"))
        harness.write_resolved_config(resolved_values(args), tmp_dir)


#
# Entry point
#


def build_parser() -> ArgumentParser:
    """Command line parser, one sub-parser per command."""
    arg_parser = ArgumentParser(
        prog="ggda",
        description=f"GGDA v{__version__}. {__doc__}",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    arg_parser.add_argument(
        "-v",
        "--verbosity",
        choices=tuple(colored_logging.VERBOSITY_LEVELS),
        default="normal",
        dest="verbosity",
        help="Level of logging output",
    )
    arg_parser.add_argument(
        "--config", default=None, help=f"'key = value' config file (default: {default_config_filepath()} if present)"
    )
    subparsers = arg_parser.add_subparsers(title="commands", dest="command", required=True)
    variant_names = tuple(v.name.lower() for v in harness.Variant)

    def add_command(name, func, help_text):
        parser = subparsers.add_parser(name, help=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter)
        if func is not None:
            parser.set_defaults(func=func)
        return parser

    parser = add_command("partition", cmd_partition, "Partition a graph into balanced parts")
    parser.add_argument("--graph", required=True, help="Graph bundle directory")
    parser.add_argument("--parts", type=int, required=True, help="Part count")
    parser.add_argument("--out", required=True, help="Assignment output file")
    add_seed_arg(parser)
    add_graph_mode_args(parser)

    parser = add_command("fgw", cmd_fgw, "Compute the FGW distance between two graphs")
    parser.add_argument("--g1", required=True, help="First graph bundle directory")
    parser.add_argument("--g2", required=True, help="Second graph bundle directory")
    parser.add_argument("--alpha", type=float, default=FgwConfig.alpha, help="Structure/feature trade-off")
    parser.add_argument("--q", type=int, choices=(1, 2), default=FgwConfig.q, help="Cost exponent")
    parser.add_argument("--p", type=float, default=FgwConfig.p, help="Distance order")
    parser.add_argument("--max-iters", type=int, default=FgwConfig.max_iters, help="Frank-Wolfe iteration cap")
    parser.add_argument("--coupling-out", default=None, help="Write the coupling as raw float32 to this file")
    add_graph_mode_args(parser)

    parser = add_command("generate", cmd_generate, "Generate intermediate graphs between source and target")
    parser.add_argument("--source", required=True, help="Labeled source graph bundle directory")
    parser.add_argument("--target", required=True, help="Target graph bundle directory")
    parser.add_argument("--out", required=True, help="Pool output directory")
    add_generation_args(parser)
    add_seed_arg(parser)
    add_graph_mode_args(parser)

    parser = add_command("adapt", cmd_adapt, "Adapt a classifier along a generated pool")
    parser.add_argument("--pool", required=True, help="Pool directory")
    parser.add_argument("--out", required=True, help="Run output directory")
    parser.add_argument(
        "--isolated", action="store_true", default=False, help="Treat every pool graph as one whole domain"
    )
    add_progression_args(parser)
    add_seed_arg(parser)

    parser = add_command("eval", cmd_eval, "Evaluate target predictions")
    parser.add_argument("--predictions", required=True, help="Predictions file, one class per line")
    parser.add_argument("--graph", required=True, help="Labeled target graph bundle directory")
    parser.add_argument(
        "--validation-fraction", type=float, default=harness.VALIDATION_FRACTION, help="Share held for validation"
    )
    parser.add_argument("--out", default=None, help="Report CSV output file")
    add_seed_arg(parser)

    synth_parser = add_command("synth", None, "Generate synthetic graphs")
    synth_subparsers = synth_parser.add_subparsers(title="generators", dest="generator", required=True)
    parser = synth_subparsers.add_parser("csbm", help="Contextual stochastic block model graph")
    parser.set_defaults(func=cmd_synth_csbm)
    parser.add_argument("--out", required=True, help="Graph bundle output directory")
    parser.add_argument("--nodes-per-class", type=int, default=synth_data.CsbmConfig.nodes_per_class)
    parser.add_argument("--covariance-scale", type=float, default=synth_data.CsbmConfig.covariance_scale)
    parser.add_argument("--p-intra", type=float, default=synth_data.CsbmConfig.p_intra)
    parser.add_argument("--p-inter", type=float, default=synth_data.CsbmConfig.p_inter)
    parser.add_argument("--mean-shift", type=float, default=0.0, help="Shift of all class means on the first axis")
    parser.add_argument("--rewire-frac", type=float, default=0.0, help="Share of intra-class edges to rewire")
    add_seed_arg(parser)
    parser = synth_subparsers.add_parser("shift", help="Multi-step class-wise feature shift chain")
    parser.set_defaults(func=cmd_synth_shift)
    parser.add_argument("--graph", required=True, help="Labeled graph bundle directory")
    parser.add_argument("--steps", type=int, default=synth_data.ShiftConfig.steps, help="Shift step count")
    parser.add_argument("--noise-scale", type=float, default=synth_data.ShiftConfig.noise_scale)
    parser.add_argument("--out", required=True, help="Output directory prefix, step s is written to PREFIX_s")
    add_seed_arg(parser)

    for name, func, help_text in (
        ("ablate", cmd_ablate, "Compare adaptation variants"),
        ("pipeline", cmd_pipeline, "Generate, adapt and evaluate"),
        ("sweep", cmd_sweep, "Run a hyperparameter or discrepancy sweep"),
    ):
        parser = add_command(name, func, help_text)
        parser.add_argument("--source", default=None, help="Labeled source graph (default: reference CSBM scenario)")
        parser.add_argument("--target", default=None, help="Labeled target graph (default: reference CSBM scenario)")
        parser.add_argument("--out", required=True, help="Output directory")
        add_generation_args(parser)
        add_progression_args(parser)
        add_seed_arg(parser)
        add_graph_mode_args(parser)
        if name == "ablate":
            parser.add_argument("--seeds", type=int, default=1, help="Number of consecutive seeds")
        if name in ("ablate", "sweep"):
            parser.add_argument(
                "--variants", nargs="+", choices=variant_names, default=list(variant_names), help="Variants to run"
            )
        if name == "sweep":
            parser.add_argument(
                "--kind", choices=("kappa_beta", "discrepancy", "kappa_stages"), required=True, help="Sweep kind"
            )
            parser.add_argument("--kappas", type=float, nargs="+", default=[0.05, 0.1, 0.2, 0.4])
            parser.add_argument("--betas", type=float, nargs="+", default=[1.0, 5.0])
            parser.add_argument("--steps", type=int, default=synth_data.ShiftConfig.steps)
            parser.add_argument("--noise-scale", type=float, default=synth_data.ShiftConfig.noise_scale)

    return arg_parser


def _command_parser(arg_parser: argparse.ArgumentParser, argv: Sequence[str]) -> Optional[argparse.ArgumentParser]:
    """Sub-parser selected by argv, following nested sub-commands."""
    parser = arg_parser
    for token in argv:
        subparsers = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
        if not subparsers:
            break
        if token in subparsers[0].choices:
            parser = subparsers[0].choices[token]
    return parser


def cl_main(argv: Optional[Sequence[str]] = None) -> int:
    """Command line entry point."""
    argv = list(sys.argv[1:] if argv is None else argv)
    arg_parser = build_parser()

    # config file values become flag defaults
    pre_parser = argparse.ArgumentParser(add_help=False)
    pre_parser.add_argument("--config", default=None)
    pre_args, _ = pre_parser.parse_known_args(argv)
    config_filepath = pre_args.config
    if config_filepath is None and os.path.isfile(default_config_filepath()):
        config_filepath = default_config_filepath()
    try:
        if config_filepath is not None:
            values = read_config_file(config_filepath)
            apply_config(arg_parser, values)
            apply_config(_command_parser(arg_parser, argv), values)
    except (DataError, OSError) as e:
        print(f"ggda: {e}", file=sys.stderr)
        return EXIT_DATA

    args = arg_parser.parse_args(argv)
    if (getattr(args, "source", None) is None) != (getattr(args, "target", None) is None):
        _command_parser(arg_parser, argv).error("--source and --target must be given together")
    colored_logging.setup_logging(args.verbosity)
    torch.set_num_threads(progress.thread_count())
    logging.getLogger().debug(f"Effective parameters: {resolved_values(args)}")

    try:
        args.func(args)
    except DataError as e:
        logging.getLogger().error(f"Data error: {e}")
        return EXIT_DATA
    except NumericalError as e:
        logging.getLogger().error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except OSError as e:
        logging.getLogger().error(f"{e}")
        return EXIT_DATA
    return EXIT_OK


