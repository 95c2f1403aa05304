"""Command-line entry point.

Exit codes: 0 success, 1 validation failure, 2 runtime failure, 3 usage
error. Diagnostics go to stderr; requested data (violations, DOT text,
summaries) goes to stdout or into --out files.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import engine, metrics, simgpu
from .config import ConfigError, Mode, Policy, load_config, validate_spec
from .dag import CycleError, OrderingError, build_dag, to_dot
from .orchestrator import EmptyActiveSetError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_USAGE = 3

_POLICY_ALIASES = {
    "greedy": Policy.GREEDY,
    "partition": Policy.STATIC_PARTITION,
    "static_partition": Policy.STATIC_PARTITION,
}
_MODE_ALIASES = {
    "live": Mode.LIVE,
    "sim": Mode.SIMULATED,
    "simulated": Mode.SIMULATED,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="genaibench", description="Concurrent GenAI workload benchmark harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a config file; exit 0 iff valid")
    p_validate.add_argument("config", type=Path)

    p_graph = sub.add_parser("graph", help="print the execution DAG")
    p_graph.add_argument("config", type=Path)
    p_graph.add_argument("--dot", action="store_true", default=True, help="emit Graphviz DOT (default)")

    p_run = sub.add_parser("run", help="execute a benchmark and write its trace and report")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--mode", choices=sorted(_MODE_ALIASES), default=None)
    p_run.add_argument("--policy", choices=sorted(_POLICY_ALIASES), default=None)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", type=Path, default=None)
    p_run.add_argument("--max-concurrency", type=int, default=None)
    p_run.add_argument("--sample-interval", type=float, default=None)
    p_run.add_argument("--sm-count", type=int, default=engine.DEFAULT_SM_COUNT)
    p_run.add_argument(
        "--on-failure", choices=["cancel-dependents", "abort"], default="cancel-dependents"
    )

    p_report = sub.add_parser("report", help="regenerate a report from raw trace files")
    p_report.add_argument("trace_dir", type=Path)
    p_report.add_argument("--out", type=Path, default=None)

    p_sim = sub.add_parser("sim", help="simulate a JSONL kernel trace directly")
    p_sim.add_argument("kernels", type=Path, help="JSONL with app/submit/duration/sm_demand")
    p_sim.add_argument("--policy", choices=sorted(_POLICY_ALIASES), default="greedy")
    p_sim.add_argument("--sm-count", type=int, default=100)
    p_sim.add_argument(
        "--partition",
        action="append",
        default=[],
        metavar="APP=SMS",
        help="explicit SM quota per app (repeatable)",
    )
    p_sim.add_argument("--interval", type=float, default=0.1, help="utilization sample interval")
    p_sim.add_argument("--out", type=Path, default=None)

    return parser


def _cmd_validate(args: argparse.Namespace) -> int:
    try:
        spec = load_config(args.config)
    except FileNotFoundError:
        print(f"config not found: {args.config}", file=sys.stderr)
        return EXIT_VALIDATION
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    violations = validate_spec(spec)
    if violations:
        for v in violations:
            print(str(v))
        return EXIT_VALIDATION
    return EXIT_OK


def _cmd_graph(args: argparse.Namespace) -> int:
    try:
        spec = load_config(args.config)
        dag = build_dag(spec)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    sys.stdout.write(to_dot(dag))
    return EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    try:
        spec = load_config(args.config)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    overrides: dict[str, object] = {}
    if args.mode is not None:
        overrides["mode"] = _MODE_ALIASES[args.mode]
    if args.policy is not None:
        overrides["policy"] = _POLICY_ALIASES[args.policy]
    if args.sample_interval is not None:
        overrides["sample_interval"] = args.sample_interval
    if overrides:
        spec = dataclasses.replace(spec, **overrides)

    violations = validate_spec(spec)
    if violations:
        for v in violations:
            print(str(v))
        return EXIT_VALIDATION

    out_dir = args.out if args.out is not None else Path(spec.output_dir)
    try:
        trace = engine.run(
            spec,
            seed=args.seed,
            max_concurrency=args.max_concurrency,
            on_failure=args.on_failure,
            sm_count=args.sm_count,
        )
    except (CycleError, OrderingError, EmptyActiveSetError) as exc:
        print(f"invalid workflow: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (engine.EngineError, simgpu.InfeasibleKernelError, InterruptedError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    engine.write_trace(trace, out_dir)
    report = metrics.build_report(trace)
    metrics.write_report(report, trace, out_dir)
    print(metrics.render_summary(report))
    failed = [e.node_id for e in trace.events if e.phase is engine.Phase.FAILED]
    if failed:
        print(f"failed nodes: {', '.join(sorted(set(failed)))}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    try:
        trace = engine.read_trace(args.trace_dir)
    except (OSError, KeyError, ValueError, ConfigError) as exc:
        print(f"cannot read trace from {args.trace_dir}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    report = metrics.build_report(trace)
    out_dir = args.out if args.out is not None else args.trace_dir
    metrics.write_report(report, trace, out_dir)
    print(metrics.render_summary(report))
    return EXIT_OK


def _cmd_sim(args: argparse.Namespace) -> int:
    try:
        kernels = simgpu.load_kernel_trace(args.kernels.read_text(encoding="utf-8").splitlines())
    except (OSError, ValueError) as exc:
        print(f"cannot load kernel trace: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    partitions: dict[str, int] | None = None
    if args.partition:
        partitions = {}
        for entry in args.partition:
            app, _, quota = entry.partition("=")
            if not app or not quota.isdigit():
                print(f"bad --partition entry {entry!r}; expected APP=SMS", file=sys.stderr)
                return EXIT_USAGE
            partitions[app] = int(quota)
    policy = _POLICY_ALIASES[args.policy]
    device = simgpu.SimDevice(sm_count=args.sm_count, partitions=partitions)
    try:
        result = simgpu.simulate(device, kernels, policy.value)
    except (simgpu.InfeasibleKernelError, ValueError) as exc:
        print(f"simulation failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    samples = simgpu.synth_utilization(result, result.device, args.interval)
    result_doc = json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "sim_result.json").write_text(result_doc, encoding="utf-8")
        lines = ["t,kind,value,source"]
        for s in samples:
            lines.append(f"{s.t!r},{s.kind.value},{s.value!r},{s.source}")
        (args.out / "samples.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        sys.stdout.write(result_doc)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "validate": _cmd_validate,
        "graph": _cmd_graph,
        "run": _cmd_run,
        "report": _cmd_report,
        "sim": _cmd_sim,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
