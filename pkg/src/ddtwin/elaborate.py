"""Elaboration: expand flow definitions into a flat task graph.

Iterator ranges unroll by full cross product and sub-flows inline
recursively, so the result is one TaskInstance per leaf invocation and
one Buffer per defined stream slot group (the slice a defining binding
covers under one iterator assignment).  Streams are immutable: a slot may
be defined once.  Observers attach to every defined group their observed
slice overlaps (one index tuple is a prefix of the other).

Leaf functions have no flow definition, so binding direction follows the
formal name: ``*_in`` observes, ``*_out`` defines.  Bindings against the
parameters of a nested flow take their direction from the declaration.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

from .diagnostics import Diagnostic, DiagnosticError, error_at
from .flows import FlowDef, StreamRef, SymbolTable
from .graph import Buffer, ExternalInput, TaskGraph, TaskInstance
from .manifests import (FunctionMetadata, TimingEqualityDoc, TimingEquationDoc,
                        equation_symbols)
from .patterns import PatternCatalog

UNBOUNDED_DEADLINE = 10**15


@dataclass
class _FlatStream:
    name: str
    rank: int
    external: bool
    labels: tuple[str, ...] = ()


@dataclass
class _SlotRef:
    stream: str
    prefix: tuple[int, ...]


@dataclass
class _Walk:
    streams: dict[str, _FlatStream] = field(default_factory=dict)
    definitions: list[tuple[str, tuple[int, ...], str]] = field(default_factory=list)
    observations: list[tuple[str, tuple[int, ...], str]] = field(default_factory=list)
    task_meta: dict[str, FunctionMetadata] = field(default_factory=dict)
    task_order: list[str] = field(default_factory=list)
    diags: list[Diagnostic] = field(default_factory=list)


def _slot_id(stream: str, idx: tuple[int, ...]) -> str:
    return stream + "".join(f"[{i}]" for i in idx)


def _resolve_ref(ref: StreamRef, env: dict[str, int], actuals: dict[str, _SlotRef],
                 path: str, walk: _Walk) -> _SlotRef | None:
    indices: list[int] = []
    for idx in ref.indices:
        if isinstance(idx, int):
            indices.append(idx)
        elif idx in env:
            indices.append(env[idx])
        else:
            walk.diags.append(error_at(ref.line, ref.column,
                                       f"index {idx!r} is not an iterator variable"))
            return None
    if ref.stream in actuals:
        base = actuals[ref.stream]
        return _SlotRef(base.stream, base.prefix + tuple(indices))
    flat = path + ref.stream
    if flat not in walk.streams:
        walk.diags.append(error_at(ref.line, ref.column,
                                   f"unresolved stream {ref.stream!r}"))
        return None
    return _SlotRef(flat, tuple(indices))


def _expand_flow(flow: FlowDef, path: str, actuals: dict[str, _SlotRef],
                 flows: dict[str, FlowDef], meta: dict[str, FunctionMetadata],
                 symbols: SymbolTable, walk: _Walk, depth: int) -> None:
    if depth > 32:
        walk.diags.append(error_at(flow.line, flow.column,
                                   f"flow nesting exceeds depth 32 at {flow.name!r} (recursive flows?)"))
        return
    for decl in flow.internals:
        flat = path + decl.name
        walk.streams[flat] = _FlatStream(name=flat, rank=decl.rank, external=False,
                                         labels=tuple(decl.labels))

    for inst in flow.instantiations:
        ranges: list[range] = []
        ok = True
        for it in inst.iterators:
            lo = symbols.resolve(it.lower)
            hi = symbols.resolve(it.upper)
            if lo is None or hi is None or lo <= 0 or hi < lo:
                walk.diags.append(error_at(it.line, it.column,
                                           f"iterator {it.var!r} has unresolvable or empty range "
                                           f"{it.lower}:{it.upper}"))
                ok = False
        if not ok:
            continue
        for it in inst.iterators:
            ranges.append(range(symbols.resolve(it.lower), symbols.resolve(it.upper) + 1))

        for values in itertools.product(*ranges):
            env = {it.var: v for it, v in zip(inst.iterators, values)}
            tag = inst.callee
            if env:
                tag += "[" + ",".join(f"{it.var}={env[it.var]}" for it in inst.iterators) + "]"
            resolved: dict[str, _SlotRef] = {}
            for b in inst.bindings:
                slot = _resolve_ref(b.actual, env, actuals, path, walk)
                if slot is not None:
                    resolved[b.formal] = slot

            callee = flows.get(inst.callee)
            if callee is not None:
                params = {d.name: d for d in callee.params}
                for name in params:
                    if name not in resolved:
                        walk.diags.append(error_at(inst.line, inst.column,
                                                   f"instantiation of {inst.callee!r} leaves "
                                                   f"parameter {name!r} unbound"))
                for name in resolved:
                    if name not in params:
                        walk.diags.append(error_at(inst.line, inst.column,
                                                   f"{inst.callee!r} has no parameter {name!r}"))
                if all(name in resolved for name in params):
                    _expand_flow(callee, path + tag + "/", resolved, flows, meta,
                                 symbols, walk, depth + 1)
                continue

            # leaf function: direction from the formal name suffix
            fn_meta = meta.get(inst.callee)
            if fn_meta is None:
                walk.diags.append(error_at(inst.line, inst.column,
                                           f"no SDK metadata for function {inst.callee!r}"))
                continue
            task_id = path + tag
            walk.task_meta[task_id] = fn_meta
            walk.task_order.append(task_id)
            for b in inst.bindings:
                if b.formal not in resolved:
                    continue
                slot = resolved[b.formal]
                if b.formal.endswith("_out"):
                    walk.definitions.append((slot.stream, slot.prefix, task_id))
                elif b.formal.endswith("_in"):
                    walk.observations.append((slot.stream, slot.prefix, task_id))
                else:
                    walk.diags.append(error_at(b.line, b.column,
                                               f"cannot infer direction of formal {b.formal!r} "
                                               f"on leaf function {inst.callee!r}; use an _in or "
                                               f"_out suffix"))


def _prefix_overlap(a: tuple[int, ...], b: tuple[int, ...]) -> bool:
    n = min(len(a), len(b))
    return a[:n] == b[:n]


def elaborate(defs: list[FlowDef], entry: str, symbols: SymbolTable,
              metadata: list[FunctionMetadata], catalog: PatternCatalog,
              slot_budget: int = UNBOUNDED_DEADLINE) -> TaskGraph:
    """Expand the entry flow into a TaskGraph.

    Raises DiagnosticError on unresolved references, double definitions,
    statically read-before-written streams, missing function metadata,
    pattern names absent from the catalog, and dependency cycles.
    """
    flows = {f.name: f for f in defs}
    meta = {m.name: m for m in metadata}
    if entry not in flows:
        raise DiagnosticError([error_at(1, 1, f"entry flow {entry!r} is not defined")])
    entry_flow = flows[entry]

    walk = _Walk()
    actuals: dict[str, _SlotRef] = {}
    for decl in entry_flow.params:
        walk.streams[decl.name] = _FlatStream(name=decl.name, rank=decl.rank,
                                              external=decl.direction == "in",
                                              labels=tuple(decl.labels))
        actuals[decl.name] = _SlotRef(decl.name, ())
    _expand_flow(entry_flow, "", actuals, flows, meta, symbols, walk, 0)
    if walk.diags:
        raise DiagnosticError(walk.diags)

    diags: list[Diagnostic] = []

    # one buffer per defined slot group; streams are immutable so defined
    # groups on one stream must not overlap
    by_stream: dict[str, list[tuple[tuple[int, ...], str]]] = {}
    for stream, prefix, task_id in walk.definitions:
        if walk.streams[stream].external:
            diags.append(error_at(1, 1,
                                  f"task {task_id!r} writes input stream {stream!r}"))
            continue
        groups = by_stream.setdefault(stream, [])
        for other_prefix, other_task in groups:
            if _prefix_overlap(prefix, other_prefix):
                diags.append(error_at(1, 1,
                                      f"stream slot {_slot_id(stream, prefix)!r} defined by both "
                                      f"{other_task!r} and {task_id!r}"))
        groups.append((prefix, task_id))

    buffers: dict[str, Buffer] = {}
    task_inputs: dict[str, list[str]] = {t: [] for t in walk.task_order}
    task_outputs: dict[str, list[str]] = {t: [] for t in walk.task_order}
    task_external: dict[str, list[ExternalInput]] = {t: [] for t in walk.task_order}

    for stream, prefix, task_id in walk.definitions:
        if walk.streams[stream].external:
            continue
        buf_id = _slot_id(stream, prefix)
        fn_meta = walk.task_meta[task_id]
        allowed = _resolve_patterns(fn_meta, catalog, diags)
        buffers[buf_id] = Buffer(id=buf_id, size=fn_meta.elementsize,
                                 definer=task_id, observers=(),
                                 allowed_patterns=allowed,
                                 labels=walk.streams[stream].labels)
        task_outputs[task_id].append(buf_id)

    observer_sets: dict[str, list[str]] = {b: [] for b in buffers}
    for stream, prefix, task_id in walk.observations:
        matched = False
        for group_prefix, _ in by_stream.get(stream, []):
            if _prefix_overlap(prefix, group_prefix):
                buf_id = _slot_id(stream, group_prefix)
                if task_id not in observer_sets[buf_id]:
                    observer_sets[buf_id].append(task_id)
                    task_inputs[task_id].append(buf_id)
                matched = True
        if matched:
            continue
        if walk.streams[stream].external:
            task_external[task_id].append(ExternalInput(stream=_slot_id(stream, prefix)))
        else:
            diags.append(error_at(1, 1,
                                  f"stream slot {_slot_id(stream, prefix)!r} is observed by "
                                  f"{task_id!r} but never defined"))

    if diags:
        raise DiagnosticError(diags)

    for buf_id, observers in observer_sets.items():
        buffers[buf_id] = replace(buffers[buf_id], observers=tuple(observers))

    tasks: dict[str, TaskInstance] = {}
    for task_id in walk.task_order:
        fn_meta = walk.task_meta[task_id]
        tasks[task_id] = TaskInstance(
            id=task_id, function=fn_meta.name, runtime=fn_meta.runtime,
            internalsize=fn_meta.internalsize,
            inputs=tuple(task_inputs[task_id]),
            outputs=tuple(task_outputs[task_id]),
            external_inputs=tuple(task_external[task_id]),
        )

    graph = TaskGraph(tasks=tasks, buffers=buffers, deadline=slot_budget)
    cycle = _find_cycle(graph)
    if cycle:
        raise DiagnosticError([error_at(1, 1,
                                        "dependency cycle through tasks: " + " -> ".join(cycle))])
    return graph


def _resolve_patterns(fn_meta: FunctionMetadata, catalog: PatternCatalog,
                      diags: list[Diagnostic]) -> tuple[str, ...]:
    resolved: list[str] = []
    for name in fn_meta.available_patterns:
        p = catalog.get(name)
        if p is None:
            diags.append(error_at(1, 1,
                                  f"function {fn_meta.name!r} lists pattern {name!r} "
                                  f"which is not in the catalog"))
        elif p.name not in resolved:
            resolved.append(p.name)
    if not resolved and not diags:
        diags.append(error_at(1, 1,
                              f"function {fn_meta.name!r} has no usable patterns"))
    resolved.sort(key=catalog.index)
    return tuple(resolved)


def _find_cycle(graph: TaskGraph) -> list[str]:
    indegree = {t: 0 for t in graph.tasks}
    for buf in graph.buffers.values():
        for obs in buf.observers:
            indegree[obs] += 1
    queue = [t for t, d in indegree.items() if d == 0]
    seen = 0
    while queue:
        task_id = queue.pop()
        seen += 1
        for buf_id in graph.tasks[task_id].outputs:
            for obs in graph.buffers[buf_id].observers:
                indegree[obs] -= 1
                if indegree[obs] == 0:
                    queue.append(obs)
    if seen == len(graph.tasks):
        return []
    return sorted(t for t, d in indegree.items() if d > 0)[:8]


# ---------------------------------------------------------------------------
# Timing binding


def bind_timing(graph: TaskGraph, docs: list, labels: dict[str, tuple[str, str]],
                equation_values: dict[str, int] | None = None) -> TaskGraph:
    """Attach timing documents to the graph.

    ``modem_period`` pins or caps the deadline; a label-addressed equality
    becomes a release time (ge / equal on an input port) or an availability
    deadline (le on a defined stream); equations are retained for
    evaluation against the finished schedule.
    """
    diags: list[Diagnostic] = []
    deadline = graph.deadline
    pinned: tuple[str, int] | None = None
    tasks = dict(graph.tasks)
    buffers = dict(graph.buffers)
    equation_values = dict(equation_values or {})
    bound: list[TimingEquationDoc] = list(graph.bound_constraints)

    # equation symbols must be evaluable against a finished schedule, so a
    # label only counts if some buffer in this graph actually carries it
    buffer_labels = {lab for b in buffers.values() for lab in b.labels}
    label_values_available = buffer_labels | {"modem_period"} | set(equation_values)

    for doc in docs:
        if isinstance(doc, TimingEqualityDoc):
            if doc.variable_name == "modem_period":
                if doc.op == "equal":
                    if pinned is not None and pinned[1] != doc.value:
                        diags.append(error_at(1, 1,
                                              f"documents {pinned[0]!r} and {doc.name!r} pin "
                                              f"modem_period to different values"))
                    else:
                        pinned = (doc.name, doc.value)
                        deadline = doc.value
                elif doc.op == "le":
                    deadline = min(deadline, doc.value)
                else:
                    diags.append(error_at(1, 1,
                                          f"document {doc.name!r}: 'ge' on modem_period does "
                                          f"not constrain the slot"))
            elif doc.variable_name in labels:
                _bind_label(doc, labels[doc.variable_name], tasks, buffers, diags)
            else:
                diags.append(error_at(1, 1,
                                      f"document {doc.name!r} addresses {doc.variable_name!r}, "
                                      f"which is neither a stream label nor a reserved name"))
        elif isinstance(doc, TimingEquationDoc):
            for symbol in sorted(equation_symbols(doc)):
                if symbol not in label_values_available:
                    diags.append(error_at(1, 1,
                                          f"equation {doc.name!r} reads {symbol!r}, which is "
                                          f"neither a label, modem_period, nor an assigned value"))
            bound.append(doc)

    if diags:
        raise DiagnosticError(diags)
    merged_symbols = dict(graph.symbol_values)
    merged_symbols.update(equation_values)
    return replace(graph, tasks=tasks, buffers=buffers, deadline=deadline,
                   bound_constraints=bound, symbol_values=merged_symbols)


def _bind_label(doc: TimingEqualityDoc, target: tuple[str, str],
                tasks: dict[str, TaskInstance], buffers: dict[str, Buffer],
                diags: list[Diagnostic]) -> None:
    _, stream = target
    labeled = [b for b in buffers.values() if doc.variable_name in b.labels]
    if labeled:
        for buf in labeled:
            if doc.op == "le":
                new_deadline = buf.avail_deadline
                new_deadline = doc.value if new_deadline is None else min(new_deadline, doc.value)
                buffers[buf.id] = replace(buf, avail_deadline=new_deadline)
            elif doc.op == "ge":
                release = max(buf.release or 0, doc.value)
                buffers[buf.id] = replace(buf, release=release)
            else:
                diags.append(error_at(1, 1,
                                      f"document {doc.name!r}: 'equal' is ambiguous on the "
                                      f"defined stream {stream!r}; use le or ge"))
        return
    # label names an external input port: the relation is its arrival time
    touched = False
    for task in list(tasks.values()):
        updated = []
        changed = False
        for ext in task.external_inputs:
            base = ext.stream.split("[", 1)[0]
            if base == stream:
                touched = True
                if doc.op == "le":
                    diags.append(error_at(1, 1,
                                          f"document {doc.name!r}: 'le' on input port "
                                          f"{stream!r} does not constrain arrival"))
                    updated.append(ext)
                else:
                    changed = True
                    updated.append(ExternalInput(stream=ext.stream,
                                                 release=max(ext.release, doc.value)))
            else:
                updated.append(ext)
        if changed:
            tasks[task.id] = replace(task, external_inputs=tuple(updated))
    if not touched:
        diags.append(error_at(1, 1,
                              f"document {doc.name!r}: label {doc.variable_name!r} tags stream "
                              f"{stream!r}, which no task in this graph touches"))


# ---------------------------------------------------------------------------
# Static checks


@dataclass(frozen=True)
class Finding:
    kind: str
    subject: str
    message: str


def check_static(graph: TaskGraph, topology=None) -> list[Finding]:
    """Non-fatal whole-graph checks; returns findings instead of raising."""
    findings: list[Finding] = []

    for task in graph.tasks.values():
        for buf_id in task.inputs:
            if buf_id not in graph.buffers:
                findings.append(Finding("undefined_observed", task.id,
                                        f"task {task.id!r} observes unknown buffer {buf_id!r}"))
    for buf in graph.buffers.values():
        if buf.definer not in graph.tasks:
            findings.append(Finding("dangling_reference", buf.id,
                                    f"buffer {buf.id!r} names unknown definer {buf.definer!r}"))
        for obs in buf.observers:
            if obs not in graph.tasks:
                findings.append(Finding("dangling_reference", buf.id,
                                        f"buffer {buf.id!r} names unknown observer {obs!r}"))

    sources = [t.id for t in graph.tasks.values() if t.external_inputs]
    if sources:
        reached = set(sources)
        frontier = list(sources)
        while frontier:
            task_id = frontier.pop()
            task = graph.tasks.get(task_id)
            if task is None:
                continue
            for buf_id in task.outputs:
                buf = graph.buffers.get(buf_id)
                if buf is None:
                    continue
                for obs in buf.observers:
                    if obs not in reached:
                        reached.add(obs)
                        frontier.append(obs)
        for task_id in graph.tasks:
            if task_id not in reached:
                findings.append(Finding("unreachable", task_id,
                                        f"task {task_id!r} has no path from any input"))

    if topology is not None and topology.memories:
        largest = max(m.capacity for m in topology.memories)
        for buf in graph.buffers.values():
            if buf.size > largest:
                findings.append(Finding("guaranteed_overflow", buf.id,
                                        f"buffer {buf.id!r} ({buf.size} bytes) exceeds every "
                                        f"memory capacity (max {largest})"))
    return findings
