"""Command line front end: validate, elaborate, solve, scenarios, report.

Every command takes a run manifest naming the input files; all outputs
land in one directory and are byte-stable across runs with the same
manifest and seed, so they can serve as regression fixtures.  Exit codes:
0 success, 1 validation or configuration failure (including a search
budget too small to reach a verdict), 2 proven-infeasible baseline,
3 internal error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .diagnostics import DiagnosticError, error_at
from .elaborate import bind_timing, check_static, elaborate
from .flows import FlowDef, SymbolTable, collect_labels, parse_flow_source, \
    validate_flows
from .graph import TaskGraph, graph_to_json
from .hardware import DeploymentConfig, HardwareTopology, parse_deployment, \
    parse_topology
from .manifests import FunctionMetadata, parse_constraint_stream
from .patterns import PatternCatalog, generate_patterns_from_topology, \
    parse_pattern_catalog
from .scenarios import RiskThresholds, ScenarioSpec, enumerate_scenarios, \
    evaluate_scenario, parse_scenario_stream, rank_scenarios, \
    render_scenario_csv, parse_scenario_csv, render_scenario_table
from .schedule import Schedule
from .solver import SolveOpts, SolveOutcome, solve_best_case

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INFEASIBLE = 2
EXIT_INTERNAL = 3

_API_VERSION = "rdsl/v0"
_REPORT_NAME = "report.csv"


def _err(message: str) -> DiagnosticError:
    return DiagnosticError([error_at(1, 1, message)])


# -- run manifest -----------------------------------------------------------

@dataclass
class RunManifest:
    """Paths and knobs for one pipeline run; paths are absolute."""

    flows: list[Path]
    constraints: list[Path]
    topology: Path
    deployment: Path
    patterns: Path | None = None          # generated from topology if absent
    scenario_files: list[Path] = field(default_factory=list)
    out: Path = Path("out")
    mode: str = "exact"
    budget_nodes: int = 200_000
    scenario_budget_nodes: int | None = None
    seed: int = 0
    risk: RiskThresholds = field(default_factory=RiskThresholds)
    enumerate_families: bool = True
    small_threshold: int = 10_000
    lag_sweep: tuple[int, ...] = ()


def load_run_manifest(path: str | Path, out: str | None = None,
                      seed: int | None = None,
                      mode: str | None = None) -> RunManifest:
    """Load a ``kind: run`` manifest; flag overrides win over file values."""
    manifest_path = Path(path)
    if not manifest_path.is_file():
        raise _err(f"manifest {str(manifest_path)!r} does not exist")
    base = manifest_path.resolve().parent
    try:
        raw = yaml.safe_load(manifest_path.read_text())
    except yaml.YAMLError as exc:
        raise _err(f"YAML parse error in {manifest_path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise _err(f"run manifest {manifest_path} is not a mapping")
    if raw.get("apiVersion") != _API_VERSION:
        raise _err(f"run manifest has unsupported apiVersion "
                   f"{raw.get('apiVersion')!r} (expected {_API_VERSION!r})")
    if raw.get("kind") != "run":
        raise _err(f"expected kind 'run', got {raw.get('kind')!r}")
    spec = raw.get("spec")
    if not isinstance(spec, dict):
        raise _err("run manifest spec must be a mapping")

    def paths(key: str, required: bool) -> list[Path]:
        entries = spec.get(key) or []
        if isinstance(entries, str):
            entries = [entries]
        if required and not entries:
            raise _err(f"run manifest spec.{key} must list at least one path")
        return [base / p for p in entries]

    def one_path(key: str, required: bool) -> Path | None:
        value = spec.get(key)
        if value is None:
            if required:
                raise _err(f"run manifest spec.{key} is required")
            return None
        return base / str(value)

    solver = spec.get("solver") or {}
    scenario = spec.get("scenario") or {}
    risk_raw = spec.get("risk") or {}
    defaults = RiskThresholds()
    risk = RiskThresholds(
        high=int(risk_raw.get("high", defaults.high)),
        moderate=int(risk_raw.get("moderate", defaults.moderate)),
        floor=int(risk_raw.get("floor", defaults.floor)))

    out_dir = Path(out) if out is not None else base / str(spec.get("out", "out"))
    manifest = RunManifest(
        flows=paths("flows", required=True),
        constraints=paths("constraints", required=True),
        topology=one_path("topology", required=True),
        deployment=one_path("deployment", required=True),
        patterns=one_path("patterns", required=False),
        scenario_files=paths("scenario_files", required=False),
        out=out_dir,
        mode=mode if mode is not None else str(solver.get("mode", "exact")),
        budget_nodes=int(solver.get("budget_nodes", 200_000)),
        scenario_budget_nodes=(int(solver["scenario_budget_nodes"])
                               if "scenario_budget_nodes" in solver else None),
        seed=seed if seed is not None else int(solver.get("seed", 0)),
        risk=risk,
        enumerate_families=bool(scenario.get("enumerate", True)),
        small_threshold=int(scenario.get("small_threshold", 10_000)),
        lag_sweep=tuple(int(v) for v in scenario.get("lag_sweep", [])))
    if manifest.mode not in ("exact", "heuristic"):
        raise _err(f"solver mode must be 'exact' or 'heuristic', "
                   f"got {manifest.mode!r}")
    return manifest


@dataclass
class LoadedRun:
    manifest: RunManifest
    defs: list[FlowDef]
    symbols: SymbolTable
    metadata: list[FunctionMetadata]
    timing_docs: list
    labels: dict[str, tuple[str, str]]
    topology: HardwareTopology
    catalog: PatternCatalog
    deployment: DeploymentConfig
    scenario_specs: list[ScenarioSpec]


def _read(path: Path) -> str:
    if not path.is_file():
        raise _err(f"input file {str(path)!r} does not exist")
    return path.read_text()


def load_run(manifest: RunManifest) -> LoadedRun:
    """Parse every input the manifest names.

    Raises DiagnosticError on the first file that fails; later stages
    (elaboration, solving) never reparse.
    """
    deployment = parse_deployment(_read(manifest.deployment))
    symbols = SymbolTable(dict(deployment.symbols))

    defs: list[FlowDef] = []
    for path in manifest.flows:
        defs.extend(parse_flow_source(_read(path)))
    defs = validate_flows(defs, symbols)
    labels = collect_labels(defs)

    docs = []
    constraint_paths = list(manifest.constraints)
    constraint_paths += [manifest.deployment.parent / p
                         for p in deployment.metadata_files]
    for path in constraint_paths:
        docs.extend(parse_constraint_stream(_read(path)))
    metadata = [d for d in docs if isinstance(d, FunctionMetadata)]
    timing_docs = [d for d in docs if not isinstance(d, FunctionMetadata)]

    topology = parse_topology(_read(manifest.topology))
    if manifest.patterns is not None:
        catalog = parse_pattern_catalog(_read(manifest.patterns))
    else:
        catalog = generate_patterns_from_topology(topology)

    scenario_specs: list[ScenarioSpec] = []
    for path in manifest.scenario_files:
        scenario_specs.extend(parse_scenario_stream(_read(path)))
    return LoadedRun(manifest, defs, symbols, metadata, timing_docs, labels,
                     topology, catalog, deployment, scenario_specs)


def build_graph(loaded: LoadedRun) -> TaskGraph:
    graph = elaborate(loaded.defs, loaded.deployment.entry_flow,
                      loaded.symbols, loaded.metadata, loaded.catalog,
                      slot_budget=loaded.deployment.slot_budget)
    return bind_timing(graph, loaded.timing_docs, loaded.labels,
                       loaded.deployment.equation_values)


def _solve_opts(manifest: RunManifest, deployment: DeploymentConfig,
                scenario: bool = False) -> SolveOpts:
    budget = manifest.budget_nodes
    if scenario and manifest.scenario_budget_nodes is not None:
        budget = manifest.scenario_budget_nodes
    return SolveOpts(mode=manifest.mode, budget_nodes=budget,
                     max_start_lag=deployment.max_start_lag)


# -- output helpers ---------------------------------------------------------

def write_atomic(path: Path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see a
    half-written artifact."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def _schedule_dict(schedule: Schedule) -> dict:
    return {
        "assignments": {tid: {"core": core, "start": start}
                        for tid, (core, start) in schedule.assignments.items()},
        "transfers": {buf_id: {"pattern": tr.pattern, "start": tr.start,
                               "duration": tr.duration}
                      for buf_id, tr in schedule.transfers.items()},
    }


def outcome_to_json(outcome: SolveOutcome) -> str:
    data = {
        "status": outcome.status,
        "makespan": outcome.makespan,
        "witness": outcome.witness,
        "stats": outcome.stats,
    }
    if outcome.schedule is not None:
        data["schedule"] = _schedule_dict(outcome.schedule)
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def solve_summary(outcome: SolveOutcome, graph: TaskGraph,
                  topology: HardwareTopology) -> str:
    lines = [f"status: {outcome.status}"]
    if outcome.status in ("optimal", "feasible"):
        assert outcome.schedule is not None and outcome.makespan is not None
        span = outcome.makespan
        fraction = span / graph.deadline
        lines.append(f"makespan: {span:,} / {graph.deadline:,} "
                     f"= {fraction:.2f} of slot")
        busy: dict[int, int] = {core.id: 0 for core in topology.cores}
        count: dict[int, int] = {core.id: 0 for core in topology.cores}
        for tid, (core, _start) in outcome.schedule.assignments.items():
            busy[core] += graph.tasks[tid].runtime
            count[core] += 1
        for core_id in sorted(busy):
            pct = 100.0 * busy[core_id] / span if span else 0.0
            lines.append(f"core {core_id}: {pct:.1f}% busy "
                         f"({count[core_id]} tasks)")
    elif outcome.status == "infeasible":
        lines.append(f"witness: {outcome.witness}")
    else:
        lines.append("search budget exhausted before reaching a verdict; "
                     "raise solver.budget_nodes")
    return "\n".join(lines) + "\n"


# -- commands ---------------------------------------------------------------

def cmd_validate(manifest: RunManifest) -> int:
    loaded = load_run(manifest)
    graph = build_graph(loaded)
    findings = check_static(graph, loaded.topology)
    for finding in findings:
        print(f"error: {finding.kind}: {finding.message}", file=sys.stderr)
    if findings:
        return EXIT_INVALID
    print(f"ok: {len(graph.tasks)} tasks, {len(graph.buffers)} buffers, "
          f"{len(loaded.catalog.patterns)} patterns")
    return EXIT_OK


def cmd_elaborate(manifest: RunManifest) -> int:
    loaded = load_run(manifest)
    graph = build_graph(loaded)
    out = manifest.out / "graph.json"
    write_atomic(out, graph_to_json(graph))
    print(f"elaborated {len(graph.tasks)} tasks, {len(graph.buffers)} "
          f"buffers, deadline {graph.deadline:,} -> {out}")
    return EXIT_OK


def cmd_solve(manifest: RunManifest) -> int:
    loaded = load_run(manifest)
    graph = build_graph(loaded)
    opts = _solve_opts(manifest, loaded.deployment)
    outcome = solve_best_case(graph, loaded.topology, loaded.catalog, opts)
    if outcome.status == "unknown":
        raise _err("search budget exhausted before reaching a verdict; "
                   "raise solver.budget_nodes in the manifest")
    write_atomic(manifest.out / "schedule.json", outcome_to_json(outcome))
    summary = solve_summary(outcome, graph, loaded.topology)
    write_atomic(manifest.out / "solve_summary.txt", summary)
    print(summary, end="")
    return EXIT_OK if outcome.status in ("optimal", "feasible") \
        else EXIT_INFEASIBLE


def cmd_scenarios(manifest: RunManifest) -> int:
    loaded = load_run(manifest)
    graph = build_graph(loaded)
    baseline_opts = _solve_opts(manifest, loaded.deployment)
    baseline = solve_best_case(graph, loaded.topology, loaded.catalog,
                               baseline_opts)
    if baseline.status == "infeasible":
        print(f"baseline infeasible: {baseline.witness}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if baseline.status == "unknown":
        raise _err("baseline search budget exhausted before reaching a "
                   "verdict; raise solver.budget_nodes in the manifest")

    specs = list(loaded.scenario_specs)
    if manifest.enumerate_families:
        specs.extend(enumerate_scenarios(
            graph, loaded.catalog,
            small_threshold=manifest.small_threshold,
            lag_sweep=manifest.lag_sweep))
    seen: set[frozenset] = set()
    unique: list[ScenarioSpec] = []
    for spec in specs:
        key = frozenset(spec.injections)
        if key in seen:
            continue
        seen.add(key)
        unique.append(spec)

    opts = _solve_opts(manifest, loaded.deployment, scenario=True)
    results = [evaluate_scenario(spec, graph, loaded.topology, loaded.catalog,
                                 opts, manifest.risk, baseline)
               for spec in unique]
    ranked = rank_scenarios(results, manifest.risk)
    table = render_scenario_table(ranked)
    write_atomic(manifest.out / "scenarios.csv", render_scenario_csv(ranked))
    write_atomic(manifest.out / "scenarios.txt", table)
    print(table, end="")
    for res in ranked:
        if res.note:
            print(f"note: {res.name}: {res.note}")
    return EXIT_OK


def cmd_report(manifest: RunManifest) -> int:
    """Merge every scenario CSV in the output directory into one report."""
    out_dir = manifest.out
    inputs = sorted(p for p in out_dir.glob("*.csv")
                    if p.name != _REPORT_NAME)
    if not inputs:
        raise _err(f"no scenario CSV files found in {str(out_dir)!r}")
    merged: dict[str, tuple] = {}
    rows = []
    for path in inputs:
        for res in parse_scenario_csv(path.read_text(), 0):
            key = (res.latency, res.delta_pct, res.risk)
            if res.name in merged:
                if merged[res.name][0] != res.latency:
                    raise _err(f"conflicting latencies for scenario "
                               f"{res.name!r} across result files")
                if merged[res.name] != key:
                    raise _err(f"conflicting rows for scenario {res.name!r} "
                               f"across result files")
                continue
            merged[res.name] = key
            rows.append(res)
    ranked = rank_scenarios(rows)
    write_atomic(out_dir / _REPORT_NAME, render_scenario_csv(ranked))
    print(f"merged {len(inputs)} files, {len(rows)} scenarios "
          f"-> {out_dir / _REPORT_NAME}")
    return EXIT_OK


# -- entry point ------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddtwin",
        description="Constraint-twin toolchain: validate flow and constraint "
                    "sources, elaborate the task graph, solve for best-case "
                    "schedules, and rank what-if test scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("validate", "parse all inputs and run static checks"),
            ("elaborate", "expand the entry flow into a task graph dump"),
            ("solve", "compute a best-case schedule and summary"),
            ("scenarios", "evaluate and rank what-if scenarios"),
            ("report", "merge scenario CSVs into one report")):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--manifest", required=True,
                         help="path to the kind: run manifest")
        cmd.add_argument("--out", default=None,
                         help="output directory (overrides the manifest)")
        cmd.add_argument("--seed", type=int, default=None,
                         help="seed recorded for generated artifacts")
        cmd.add_argument("--mode", choices=("exact", "heuristic"),
                         default=None, help="solver mode override")
    return parser


_COMMANDS = {
    "validate": cmd_validate,
    "elaborate": cmd_elaborate,
    "solve": cmd_solve,
    "scenarios": cmd_scenarios,
    "report": cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        manifest = load_run_manifest(args.manifest, out=args.out,
                                     seed=args.seed, mode=args.mode)
        return _COMMANDS[args.command](manifest)
    except DiagnosticError as exc:
        for diag in exc.diagnostics:
            print(diag.render(), file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - last-resort exit code mapping
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
