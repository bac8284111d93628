"""What-if scenario engine: constraint injections over an elaborated graph.

A scenario bundles a set of monotone tightenings (evict buffers to DDR,
pin tasks to cores, cap scheduling slack, clone a flow, shrink the slot)
and reports how the best-case latency moves against a baseline solve.
Injections only ever remove options, so a feasible scenario's latency is
bounded below by the baseline and every delta is non-negative.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace

import yaml

from .diagnostics import DiagnosticError, error_at
from .graph import TaskGraph
from .hardware import HardwareTopology
from .patterns import PatternCatalog, pattern_class
from .solver import SolveOpts, SolveOutcome, solve_best_case

EVICT_BUFFER = "EVICT_BUFFER"
PIN_TASKS = "PIN_TASKS"
START_LAG = "START_LAG"
ADD_FLOW = "ADD_FLOW"
TIGHTEN_DEADLINE = "TIGHTEN_DEADLINE"

INJECTION_KINDS = (EVICT_BUFFER, PIN_TASKS, START_LAG, ADD_FLOW,
                   TIGHTEN_DEADLINE)

RISK_HIGH = "HIGH"
RISK_MODERATE = "MODERATE"
RISK_LOW = "LOW"
RISK_CERTAIN_FAILURE = "CERTAIN_FAILURE"

RISK_LEVELS = (RISK_HIGH, RISK_MODERATE, RISK_LOW, RISK_CERTAIN_FAILURE)

CSV_HEADER = "strategy,latency_cycles,delta_pct,risk"

_DDR_CLASS = "big_delay"


def _err(message: str) -> DiagnosticError:
    return DiagnosticError([error_at(1, 1, message)])


@dataclass(frozen=True)
class Injection:
    """One constraint tightening.

    ``targets`` hold selectors resolved against the graph at apply time:
    buffer ids or function names for EVICT_BUFFER; task ids, task-id
    prefixes, or function names for PIN_TASKS; instance prefixes for
    ADD_FLOW.  ``cores`` is the pin set for PIN_TASKS.  ``value`` is the
    lag cap, the new deadline, or the flow copy count.
    """

    kind: str
    targets: tuple[str, ...] = ()
    cores: frozenset[int] | None = None
    value: int | None = None


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    injections: tuple[Injection, ...] = ()
    baseline_ref: str | None = None


@dataclass(frozen=True)
class ScenarioResult:
    name: str
    latency: int | None            # None iff the injected graph is infeasible
    delta_pct: int | None
    risk: str
    baseline_latency: int
    note: str = ""


@dataclass(frozen=True)
class RiskThresholds:
    high: int = 50
    moderate: int = 15
    floor: int = 5                 # deltas under this are not worth testing

    def classify(self, delta_pct: int) -> str:
        if delta_pct >= self.high:
            return RISK_HIGH
        if delta_pct >= self.moderate:
            return RISK_MODERATE
        return RISK_LOW


def latency_delta_pct(latency: int, baseline: int) -> int:
    """Percent increase over baseline, rounded half up to an integer."""
    if baseline <= 0:
        raise _err(f"baseline latency must be positive, got {baseline}")
    return (200 * (latency - baseline) + baseline) // (2 * baseline)


# -- selector resolution ----------------------------------------------------

def resolve_buffer_targets(graph: TaskGraph,
                           targets: tuple[str, ...]) -> tuple[str, ...]:
    """Buffer ids for each selector: a buffer id, or a function name
    matching the output buffers of every task running that function."""
    out: list[str] = []
    for sel in targets:
        if sel in graph.buffers:
            out.append(sel)
            continue
        matched = [buf_id for task in graph.tasks.values()
                   if task.function == sel for buf_id in task.outputs]
        if not matched:
            raise _err(f"injection target {sel!r} matches no buffer "
                       f"or function in the graph")
        out.extend(matched)
    seen: set[str] = set()
    unique = []
    for buf_id in out:
        if buf_id not in seen:
            seen.add(buf_id)
            unique.append(buf_id)
    return tuple(unique)


def resolve_task_targets(graph: TaskGraph,
                         targets: tuple[str, ...]) -> tuple[str, ...]:
    """Task ids for each selector, trying exact id, then function name,
    then task-id prefix."""
    out: list[str] = []
    for sel in targets:
        if sel in graph.tasks:
            out.append(sel)
            continue
        by_function = [tid for tid, task in graph.tasks.items()
                       if task.function == sel]
        if by_function:
            out.extend(by_function)
            continue
        by_prefix = [tid for tid in graph.tasks if tid.startswith(sel)]
        if by_prefix:
            out.extend(by_prefix)
            continue
        raise _err(f"injection target {sel!r} matches no task, function, "
                   f"or task-id prefix in the graph")
    seen: set[str] = set()
    unique = []
    for tid in out:
        if tid not in seen:
            seen.add(tid)
            unique.append(tid)
    return tuple(unique)


# -- applying injections ----------------------------------------------------

def apply_injections(graph: TaskGraph, injections: tuple[Injection, ...],
                     catalog: PatternCatalog) -> TaskGraph:
    """A copy of ``graph`` with every injection applied, in order."""
    for inj in injections:
        if inj.kind == EVICT_BUFFER:
            graph = _apply_evict(graph, inj)
        elif inj.kind == PIN_TASKS:
            graph = _apply_pin(graph, inj)
        elif inj.kind == START_LAG:
            graph = _apply_start_lag(graph, inj)
        elif inj.kind == ADD_FLOW:
            graph = _apply_add_flow(graph, inj)
        elif inj.kind == TIGHTEN_DEADLINE:
            graph = _apply_tighten_deadline(graph, inj)
        else:
            raise _err(f"unknown injection kind {inj.kind!r}")
    return graph


def _apply_evict(graph: TaskGraph, inj: Injection) -> TaskGraph:
    for buf_id in resolve_buffer_targets(graph, inj.targets):
        buf = graph.buffers[buf_id]
        kept = tuple(p for p in buf.allowed_patterns
                     if pattern_class(p) == _DDR_CLASS)
        if not kept:
            raise _err(f"evicting {buf_id!r} leaves no DDR-capable "
                       f"pattern; it cannot be forced off-chip")
        graph = graph.with_buffer(replace(buf, allowed_patterns=kept))
    return graph


def _apply_pin(graph: TaskGraph, inj: Injection) -> TaskGraph:
    if inj.cores is None or not inj.cores:
        raise _err("PIN_TASKS requires a non-empty core set")
    pin = frozenset(inj.cores)
    for tid in resolve_task_targets(graph, inj.targets):
        task = graph.tasks[tid]
        allowed = pin if task.allowed_cores is None else task.allowed_cores & pin
        # an empty intersection is kept: the solver reports it infeasible
        graph = graph.with_task(replace(task, allowed_cores=allowed))
    return graph


def _apply_start_lag(graph: TaskGraph, inj: Injection) -> TaskGraph:
    if inj.value is None or inj.value < 0:
        raise _err("START_LAG requires a non-negative cycle cap")
    cap = inj.value
    if graph.max_start_lag is not None:
        cap = min(graph.max_start_lag, cap)
    return replace(graph, max_start_lag=cap)


def _apply_tighten_deadline(graph: TaskGraph, inj: Injection) -> TaskGraph:
    if inj.value is None or inj.value <= 0:
        raise _err("TIGHTEN_DEADLINE requires a positive cycle count")
    return replace(graph, deadline=min(graph.deadline, inj.value))


def _boundary_buffers(graph: TaskGraph, members: set[str]) -> list[str]:
    """Buffers with a definer or observer inside ``members`` and another
    endpoint outside; these block cloning the member set."""
    crossing = []
    for buf in graph.buffers.values():
        endpoints = [buf.definer in members]
        endpoints.extend(obs in members for obs in buf.observers)
        if any(endpoints) and not all(endpoints):
            crossing.append(buf.id)
    return crossing


def _apply_add_flow(graph: TaskGraph, inj: Injection) -> TaskGraph:
    copies = 1 if inj.value is None else inj.value
    if copies < 1:
        raise _err("ADD_FLOW requires a copy count of at least 1")
    if not inj.targets:
        raise _err("ADD_FLOW requires an instance prefix target")
    for prefix in inj.targets:
        graph = _clone_subgraph(graph, prefix, copies)
    return graph


def _clone_subgraph(graph: TaskGraph, prefix: str, copies: int) -> TaskGraph:
    if not prefix.endswith("/"):
        prefix = prefix + "/"
    member_tasks = [tid for tid in graph.tasks if tid.startswith(prefix)]
    if not member_tasks:
        raise _err(f"injection target {prefix!r} matches no task-id "
                   f"prefix in the graph")
    members = set(member_tasks)
    crossing = _boundary_buffers(graph, members)
    if crossing:
        raise _err(f"flow {prefix!r} shares buffers with the rest of the "
                   f"graph ({', '.join(sorted(crossing)[:4])}); it cannot "
                   f"be cloned in isolation")
    inside_bufs = [buf.id for buf in graph.buffers.values()
                   if buf.definer in members]

    existing = set(graph.tasks)
    made = 0
    serial = 0
    while made < copies:
        serial += 1
        new_prefix = f"{prefix[:-1]}~copy{serial}/"
        if any(tid.startswith(new_prefix) for tid in existing):
            continue

        def rename(name: str) -> str:
            if name.startswith(prefix):
                return new_prefix + name[len(prefix):]
            return new_prefix + name

        tasks = dict(graph.tasks)
        buffers = dict(graph.buffers)
        for tid in member_tasks:
            task = graph.tasks[tid]
            tasks[rename(tid)] = replace(
                task, id=rename(tid),
                inputs=tuple(rename(b) for b in task.inputs),
                outputs=tuple(rename(b) for b in task.outputs))
        for buf_id in inside_bufs:
            buf = graph.buffers[buf_id]
            buffers[rename(buf_id)] = replace(
                buf, id=rename(buf_id),
                definer=rename(buf.definer),
                observers=tuple(rename(o) for o in buf.observers))
        graph = replace(graph, tasks=tasks, buffers=buffers)
        existing = set(tasks)
        made += 1
    return graph


# -- evaluation -------------------------------------------------------------

def evaluate_scenario(spec: ScenarioSpec, graph: TaskGraph,
                      topology: HardwareTopology, catalog: PatternCatalog,
                      opts: SolveOpts | None = None,
                      thresholds: RiskThresholds | None = None,
                      baseline: SolveOutcome | None = None) -> ScenarioResult:
    """Solve the injected graph and grade the latency movement.

    ``baseline`` lets callers reuse one baseline solve across scenarios;
    it must come from the same graph, topology, catalog, and options.
    A budget-exhausted search is an error, never a verdict: "unknown"
    reports nothing about feasibility either way.
    """
    opts = opts or SolveOpts()
    thresholds = thresholds or RiskThresholds()
    if baseline is None:
        baseline = solve_best_case(graph, topology, catalog, opts)
    if baseline.status == "infeasible":
        raise _err(f"baseline is infeasible ({baseline.witness}); "
                   f"scenario deltas are undefined")
    if baseline.status == "unknown":
        raise _err("baseline search ran out of node budget without a "
                   "schedule; raise budget_nodes and retry")
    base_latency = baseline.makespan
    assert base_latency is not None

    if not spec.injections:
        return ScenarioResult(spec.name, base_latency, 0,
                              thresholds.classify(0), base_latency)

    injected = apply_injections(graph, spec.injections, catalog)
    outcome = solve_best_case(injected, topology, catalog, opts)
    if outcome.status == "infeasible":
        return ScenarioResult(spec.name, None, None, RISK_CERTAIN_FAILURE,
                              base_latency, note=outcome.witness or "")
    if outcome.status == "unknown":
        raise _err(f"scenario {spec.name!r}: search ran out of node budget "
                   f"without a schedule; raise budget_nodes and retry")
    assert outcome.makespan is not None
    delta = latency_delta_pct(outcome.makespan, base_latency)
    return ScenarioResult(spec.name, outcome.makespan, delta,
                          thresholds.classify(delta), base_latency)


def evaluate_scenarios(specs: list[ScenarioSpec], graph: TaskGraph,
                       topology: HardwareTopology, catalog: PatternCatalog,
                       opts: SolveOpts | None = None,
                       thresholds: RiskThresholds | None = None
                       ) -> list[ScenarioResult]:
    """Evaluate every spec against one shared baseline solve."""
    opts = opts or SolveOpts()
    baseline = solve_best_case(graph, topology, catalog, opts)
    return [evaluate_scenario(spec, graph, topology, catalog, opts,
                              thresholds, baseline) for spec in specs]


# -- enumeration ------------------------------------------------------------

def _evictable(graph: TaskGraph, buf_id: str) -> bool:
    return any(pattern_class(p) == _DDR_CLASS
               for p in graph.buffers[buf_id].allowed_patterns)


def enumerate_scenarios(graph: TaskGraph, catalog: PatternCatalog, *,
                        small_threshold: int = 10_000,
                        lag_sweep: tuple[int, ...] = ()
                        ) -> list[ScenarioSpec]:
    """Standard scenario families for a graph.

    Families: the baseline, one output eviction per leaf function, the
    small / large / combined size-band evictions, one added flow copy per
    cloneable top-level instance group, and a start-lag cap sweep.  Only
    buffers with a DDR-capable pattern are targeted and only flows that
    share no buffers with the rest of the graph are cloned, so every
    enumerated scenario evaluates without configuration errors.
    Duplicates by injection-set equality keep the first name.
    """
    if not graph.tasks:
        return []
    specs: list[ScenarioSpec] = [ScenarioSpec("baseline")]

    functions: list[str] = []
    for task in graph.tasks.values():
        outputs = [b for b in task.outputs if _evictable(graph, b)]
        if outputs and task.function not in functions:
            functions.append(task.function)
    for fn in sorted(functions):
        targets = tuple(sorted(
            {b for task in graph.tasks.values() if task.function == fn
             for b in task.outputs if _evictable(graph, b)}))
        specs.append(ScenarioSpec(
            f"evict-fn-{fn}", (Injection(EVICT_BUFFER, targets=targets),)))

    evictable = sorted(b for b in graph.buffers if _evictable(graph, b))
    small = tuple(b for b in evictable
                  if graph.buffers[b].size < small_threshold)
    large = tuple(b for b in evictable
                  if graph.buffers[b].size >= small_threshold)
    if small:
        specs.append(ScenarioSpec(
            "evict-small", (Injection(EVICT_BUFFER, targets=small),)))
    if large:
        specs.append(ScenarioSpec(
            "evict-large", (Injection(EVICT_BUFFER, targets=large),)))
    if small and large:
        specs.append(ScenarioSpec(
            "evict-combined",
            (Injection(EVICT_BUFFER, targets=tuple(evictable)),)))

    grouped: dict[str, list[str]] = {}
    for tid in graph.tasks:
        if "/" not in tid:
            continue
        prefix = tid.split("/", 1)[0] + "/"
        callee = prefix.split("[", 1)[0]
        bucket = grouped.setdefault(callee, [])
        if prefix not in bucket:
            bucket.append(prefix)
    for callee in sorted(grouped):
        first = sorted(grouped[callee])[0]
        members = {tid for tid in graph.tasks if tid.startswith(first)}
        if _boundary_buffers(graph, members):
            continue
        specs.append(ScenarioSpec(
            f"add-flow-{callee}",
            (Injection(ADD_FLOW, targets=(first,), value=1),)))

    for cap in lag_sweep:
        specs.append(ScenarioSpec(
            f"lag-cap-{cap}", (Injection(START_LAG, value=cap),)))

    seen: set[frozenset[Injection]] = set()
    unique = []
    for spec in specs:
        key = frozenset(spec.injections)
        if key in seen:
            continue
        seen.add(key)
        unique.append(spec)
    return unique


# -- ranking ----------------------------------------------------------------

def rank_scenarios(results: list[ScenarioResult],
                   thresholds: RiskThresholds | None = None
                   ) -> list[ScenarioResult]:
    """Certain failures first (by name), then descending delta with name
    ties; feasible deltas under the floor are marked not recommended."""
    thresholds = thresholds or RiskThresholds()
    results = list(results)
    if not results:
        return []
    baselines = {r.baseline_latency for r in results}
    if len(baselines) > 1:
        raise _err(f"cannot rank scenarios with mixed baseline latencies "
                   f"{sorted(baselines)}")
    failures = sorted((r for r in results if r.risk == RISK_CERTAIN_FAILURE),
                      key=lambda r: r.name)
    rest = sorted((r for r in results if r.risk != RISK_CERTAIN_FAILURE),
                  key=lambda r: (-r.delta_pct, r.name))
    ranked = []
    for res in failures + rest:
        if (res.risk != RISK_CERTAIN_FAILURE
                and res.delta_pct < thresholds.floor):
            res = replace(res, note="not recommended")
        ranked.append(res)
    return ranked


# -- serialization ----------------------------------------------------------

def render_scenario_csv(results: list[ScenarioResult]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_HEADER.split(","))
    for r in results:
        latency = "INFEASIBLE" if r.latency is None else str(r.latency)
        delta = "" if r.delta_pct is None else str(r.delta_pct)
        writer.writerow([r.name, latency, delta, r.risk])
    return out.getvalue()


def parse_scenario_csv(text: str, baseline_latency: int
                       ) -> list[ScenarioResult]:
    """Parse a scenario CSV back to exact result values.

    The CSV does not store the baseline, so callers supply it; ranking
    uses it to reject merges across different baselines.
    """
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_HEADER.split(","):
        raise _err(f"scenario CSV must start with header {CSV_HEADER!r}")
    out = []
    for i, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 4:
            raise _err(f"line {i}: expected 4 fields, got {len(row)}")
        name, latency_s, delta_s, risk = row
        if risk not in RISK_LEVELS:
            raise _err(f"line {i}: unknown risk level {risk!r}")
        if latency_s == "INFEASIBLE":
            if risk != RISK_CERTAIN_FAILURE:
                raise _err(f"line {i}: infeasible row must carry risk "
                           f"{RISK_CERTAIN_FAILURE}")
            latency: int | None = None
            delta: int | None = None
        else:
            try:
                latency = int(latency_s)
                delta = int(delta_s)
            except ValueError:
                raise _err(f"line {i}: latency and delta must be integers, "
                           f"got {latency_s!r} / {delta_s!r}") from None
        out.append(ScenarioResult(name, latency, delta, risk,
                                  baseline_latency))
    return out


def render_scenario_table(results: list[ScenarioResult]) -> str:
    """Fixed-width report table: strategy, latency, delta over baseline."""
    header = ("Strategy", "Latency (clock cycles)", "delta")
    body = []
    for r in results:
        latency = "INFEASIBLE" if r.latency is None else f"{r.latency:,}"
        if r.delta_pct is None or r.name == "baseline":
            delta = "-"
        else:
            delta = f"{r.delta_pct:+d}%"
        body.append((r.name, latency, delta))
    rows = [header, *body]
    widths = [max(len(row[i]) for row in rows) for i in range(3)]
    lines = []
    for j, row in enumerate(rows):
        cells = (cell.ljust(widths[i]) for i, cell in enumerate(row))
        lines.append("  ".join(cells).rstrip())
        if j == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


# -- scenario manifests -----------------------------------------------------

_API_VERSION = "rdsl/v0"


def parse_scenario_stream(text: str) -> list[ScenarioSpec]:
    """Parse a multi-document YAML stream of ``kind: scenario`` documents."""
    try:
        raw_docs = list(yaml.safe_load_all(text))
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = (mark.line + 1) if mark else 1
        col = (mark.column + 1) if mark else 1
        raise DiagnosticError(
            [error_at(line, col, f"YAML parse error: {exc}")]) from exc

    specs = []
    for i, raw in enumerate(raw_docs):
        if raw is None:
            continue
        where = f"document {i + 1}"
        if not isinstance(raw, dict):
            raise _err(f"{where}: document is not a mapping")
        if raw.get("apiVersion") != _API_VERSION:
            raise _err(f"{where}: unsupported apiVersion "
                       f"{raw.get('apiVersion')!r} (expected {_API_VERSION!r})")
        if raw.get("kind") != "scenario":
            raise _err(f"{where}: expected kind 'scenario', "
                       f"got {raw.get('kind')!r}")
        metadata = raw.get("metadata")
        if not isinstance(metadata, dict) or "name" not in metadata:
            raise _err(f"{where}: metadata.name is required")
        spec = raw.get("spec")
        if not isinstance(spec, dict):
            raise _err(f"{where}: spec must be a mapping")
        raw_injections = spec.get("injections", [])
        if not isinstance(raw_injections, list):
            raise _err(f"{where}: spec.injections must be a list")
        injections = tuple(_parse_injection(entry, where, j)
                           for j, entry in enumerate(raw_injections))
        baseline_ref = spec.get("baseline")
        specs.append(ScenarioSpec(str(metadata["name"]), injections,
                                  baseline_ref))
    return specs


def _parse_injection(entry, where: str, index: int) -> Injection:
    at = f"{where}, injection {index + 1}"
    if not isinstance(entry, dict):
        raise _err(f"{at}: injection must be a mapping")
    kind = str(entry.get("kind", "")).upper()
    if kind not in INJECTION_KINDS:
        raise _err(f"{at}: unknown injection kind {entry.get('kind')!r}")
    targets = entry.get("targets", [])
    if isinstance(targets, str):
        targets = [targets]
    if not isinstance(targets, list) or not all(isinstance(t, str)
                                                for t in targets):
        raise _err(f"{at}: targets must be a string list")
    cores = entry.get("cores")
    if cores is not None:
        if (not isinstance(cores, list)
                or not all(isinstance(c, int) and not isinstance(c, bool)
                           for c in cores)):
            raise _err(f"{at}: cores must be an integer list")
        cores = frozenset(cores)
    value = entry.get("value")
    if value is not None and (isinstance(value, bool)
                              or not isinstance(value, int)):
        raise _err(f"{at}: value must be an integer")

    if kind in (EVICT_BUFFER, PIN_TASKS, ADD_FLOW) and not targets:
        raise _err(f"{at}: {kind} requires targets")
    if kind == PIN_TASKS and cores is None:
        raise _err(f"{at}: PIN_TASKS requires cores")
    if kind in (START_LAG, TIGHTEN_DEADLINE) and value is None:
        raise _err(f"{at}: {kind} requires a value")
    return Injection(kind, tuple(targets), cores, value)
