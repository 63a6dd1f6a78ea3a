#!/usr/bin/env python3
"""
Main CLI entry point for the trace oracle.

Usage:
    python main.py learn --traces traces/t1 traces/t2 traces/t3 --out outputs/model.json
    python main.py validate --model outputs/model.json --trace runs/new --json outputs/report.json
    python main.py inspect --model outputs/model.json --plot outputs/graph.png
    python main.py bench --spec bench.json --report outputs/reports/benchmark.json

Exit codes: 0 PASS / success, 1 FAIL, 2 error.
"""

import argparse
import logging
import sys
from typing import Any, List, Optional

from src.bench import BenchmarkSpec, run_benchmark, write_report
from src.config import configure_logging, fallback_policy, judge_config, load_thresholds
from src.equivalence import EquivalenceClassifier, Phase
from src.errors import TraceOracleError
from src.graph_learn import LearnedModel, learn_model
from src.judge import build_judge
from src.model_io import load_model, save_model
from src.trace_model import load_trace
from src.utils import write_stable_json
from src.validation import MatchOptions, ValidationResult, validate_trace
from src.visualizer import ModelVisualizer

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_ERROR = 2

logger = logging.getLogger("trace_oracle.cli")


def print_essential_summary(model: LearnedModel) -> None:
    """Print the essential and optional states of a model."""
    graph = model.graph
    print(f"States: {len(graph.nodes)} ({len(model.tree.nodes)} essential)")
    print(f"Essential states: {' -> '.join(model.tree.essential_names())}")
    optional = [graph.node(n).name for n in model.optional_nodes()]
    print(f"Optional states: {', '.join(optional) if optional else 'none'}")


def learn_command(args: Any) -> int:
    """Handle learn command."""
    traces = [load_trace(path) for path in args.traces]
    thresholds = load_thresholds(args.thresholds)
    judge = build_judge(judge_config(args.judge))
    cls = EquivalenceClassifier(thresholds=thresholds, judge=judge, phase=Phase.LEARNING,
                                fallback=fallback_policy(args.on_judge_error))

    print(f"Learning from {len(traces)} traces...")
    model = learn_model(traces, cls)
    save_model(model, args.out)

    print_essential_summary(model)
    print(f"Model saved to: {args.out}")
    return EXIT_OK


def display_result(result: ValidationResult) -> None:
    """Print one validation result."""
    print(f"{result.trace_id}: {result.verdict.value} (coverage {result.coverage:.1f}%)")
    print(f"  {result.explanation}")
    if result.root_cause is not None:
        rc = result.root_cause
        print(f"  Root cause: {rc.classification.value} at step {rc.divergence_index} - {rc.rationale}")


def validate_command(args: Any) -> int:
    """Handle validate command."""
    model = load_model(args.model)
    opts = MatchOptions(coverage_threshold=args.threshold)
    judge = build_judge(judge_config(args.judge))
    fallback = fallback_policy(args.on_judge_error)

    results = []
    for path in args.trace:
        trace = load_trace(path)
        result = validate_trace(trace, model, opts, judge, fallback)
        display_result(result)
        results.append(result)

    if args.json:
        if len(results) == 1:
            write_stable_json(args.json, results[0].to_dict())
        else:
            write_stable_json(args.json, {"results": [r.to_dict() for r in results]})
        print(f"Report saved to: {args.json}")

    return EXIT_OK if all(r.passed for r in results) else EXIT_FAIL


def inspect_command(args: Any) -> int:
    """Handle inspect command."""
    model = load_model(args.model)
    graph = model.graph
    tree = model.tree

    print(f"Model: {args.model}")
    print(f"Training traces: {', '.join(model.training_ids)}")
    print_essential_summary(model)

    def names(ids: List[int]) -> str:
        return ", ".join(graph.node(n).name for n in ids) or "none"

    print(f"Terminal states: {names(list(graph.terminals))}")
    print(f"Branches: {names(graph.branches())}")
    print(f"Convergence points: {names(graph.convergence_points())}")
    print("Dominator tree:")
    for parent, child in tree.edges:
        print(f"  {graph.node(parent).name} -> {graph.node(child).name}")

    if args.plot:
        ModelVisualizer().create_graph_visualization(model, args.plot)
        print(f"Generated plot: {args.plot}")
    return EXIT_OK


def bench_command(args: Any) -> int:
    """Handle bench command."""
    spec = BenchmarkSpec.from_json(args.spec) if args.spec else BenchmarkSpec()
    print(f"Running benchmark (seed {spec.seed}, {spec.n_training} training traces)...")
    report = run_benchmark(spec, work_dir=args.workdir)
    write_report(report, args.report)

    print(f"Essential states: {' -> '.join(report.essential_states)}")
    print("Detection by category:")
    for category, tally in report.detection.items():
        print(f"  {category:<14} {tally.detected}/{tally.total}")
    print(f"{'':<10}{'validator':>11}{'self-report':>13}")
    for metric in ("accuracy", "precision", "recall", "f1"):
        ours = getattr(report.validator, metric) * 100
        theirs = getattr(report.self_report, metric) * 100
        print(f"{metric:<10}{ours:>10.1f}%{theirs:>12.1f}%")
    print(f"Root-cause accuracy: {report.root_cause_accuracy * 100:.1f}% "
          f"(always product_bug: {report.baseline_root_cause_accuracy * 100:.1f}%)")
    print(f"Report saved to: {args.report}")
    return EXIT_OK


def add_judge_arguments(parser: argparse.ArgumentParser) -> None:
    """Judge selection flags shared by learn and validate."""
    parser.add_argument('--judge', choices=['mock', 'remote'],
                        help='Semantic judge (default: remote if JUDGE_ENDPOINT is set, else mock)')
    parser.add_argument('--on-judge-error', choices=['fail-fast', 'distinct'],
                        help='What to do when the judge fails (default: fail-fast while '
                             'learning, distinct while validating)')


def create_argument_parser() -> argparse.ArgumentParser:
    """Create and configure the main argument parser."""
    parser = argparse.ArgumentParser(
        description="Learn essential-state models from passing traces and validate new runs",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    parser.add_argument('-v', '--verbose', action='store_true', help='Debug logging on stderr')

    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    # Learn command
    learn_parser = subparsers.add_parser('learn', help='Learn a model from passing traces')
    learn_parser.add_argument('--traces', nargs='+', required=True,
                              help='Trace directories or manifest files')
    learn_parser.add_argument('--out', default='outputs/model.json', help='Output model file')
    learn_parser.add_argument('--thresholds', help='Equivalence threshold JSON file')
    add_judge_arguments(learn_parser)

    # Validate command
    val_parser = subparsers.add_parser('validate', help='Validate traces against a model')
    val_parser.add_argument('--model', required=True, help='Model file')
    val_parser.add_argument('--trace', nargs='+', required=True,
                            help='Trace directories or manifest files')
    val_parser.add_argument('--threshold', type=float, default=100.0,
                            help='Coverage threshold in percent')
    val_parser.add_argument('--json', help='Write the validation report to this file')
    add_judge_arguments(val_parser)

    # Inspect command
    insp_parser = subparsers.add_parser('inspect', help='Show the states of a model')
    insp_parser.add_argument('--model', required=True, help='Model file')
    insp_parser.add_argument('--plot', help='Draw the execution graph to this PNG file')

    # Bench command
    bench_parser = subparsers.add_parser('bench', help='Run the synthetic benchmark')
    bench_parser.add_argument('--spec', help='Benchmark spec JSON (default: built-in spec)')
    bench_parser.add_argument('--report', default='outputs/reports/benchmark.json',
                              help='Output report file')
    bench_parser.add_argument('--workdir', help='Keep the generated traces in this directory')

    return parser


def main(argv: Optional[List[str]] = None) -> None:
    """Main CLI function."""
    parser = create_argument_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        sys.exit(EXIT_ERROR)

    configure_logging(args.verbose)

    # Command mapping
    commands = {
        'learn': learn_command,
        'validate': validate_command,
        'inspect': inspect_command,
        'bench': bench_command,
    }

    # Execute command
    try:
        code = commands[args.command](args)
    except KeyboardInterrupt:
        print("\nOperation cancelled by user", file=sys.stderr)
        code = EXIT_ERROR
    except (TraceOracleError, OSError) as e:
        logger.debug("Command %s failed", args.command, exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        code = EXIT_ERROR
    sys.exit(code)


if __name__ == "__main__":
    main()
