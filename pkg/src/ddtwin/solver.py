"""Best-case schedule search over the constraint database.

The same query engine answers two opposite questions.  Construction asks
"is there a feasible placement, and how fast is it" - the returned
schedule seeds deployment.  Test generation asks "is there provably NO
feasible placement" - an exhausted search is the off-nominal witness.
Budget exhaustion is therefore reported as ``unknown`` and never
conflated with infeasibility.

The search enumerates the canonical greedy policy class: a schedule is
generated by a topological task permutation, a core assignment, and a
per-buffer pattern choice; task starts and transfer starts then follow
greedily (earliest data-ready slot on the core, earliest contention-free
slot on the interconnect).  ``oracle.brute_force_oracle`` enumerates the
identical class exhaustively, which is what makes the two comparable on
small instances.

Branching is (frontier task) x (candidate core) x (pattern combo), with
never-used cores collapsed inside certified symmetry groups and pattern
options deduplicated when two choices are behaviorally identical (equal
cost, contention set, and residency memories).  Pruning uses a critical
path bound, a core load bound, and per-anchor serialization bounds; every
completed leaf is re-validated with the independent constraint checker
before it may become the incumbent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

from .graph import TaskGraph
from .hardware import HardwareTopology
from .patterns import Pattern, PatternCatalog, transfer_cost
from .schedule import (BUFFER_OVERFLOW, DEADLINE_MISS, LAG_VIOLATION,
                       PATTERN_VIOLATION, Schedule, Transfer, check_schedule,
                       effective_max_start_lag)

PRUNE_BOUND = "BOUND"


@dataclass
class SolveOpts:
    mode: str = "exact"              # "exact" or "heuristic" (seed only)
    budget_nodes: int = 200_000
    max_start_lag: int | None = None
    dedup_patterns: bool = True


@dataclass
class SolveOutcome:
    status: str                      # optimal | feasible | infeasible | unknown
    schedule: Schedule | None
    makespan: int | None
    witness: str | None
    stats: dict


class _BudgetExhausted(Exception):
    pass


@dataclass
class _State:
    placed: dict[str, tuple[int, int]]
    finish: dict[str, int]
    transfers: dict[str, Transfer]
    core_free: dict[int, int]
    forced: dict[str, int]
    used: frozenset[int]
    span: int


def solve_best_case(graph: TaskGraph, topology: HardwareTopology,
                    catalog: PatternCatalog,
                    opts: SolveOpts | None = None) -> SolveOutcome:
    search = _Search(graph, topology, catalog, opts or SolveOpts())
    return search.run()


class _Search:
    def __init__(self, graph: TaskGraph, topology: HardwareTopology,
                 catalog: PatternCatalog, opts: SolveOpts):
        self.graph = graph
        self.topology = topology
        self.catalog = catalog
        self.opts = opts
        self.max_lag = effective_max_start_lag(graph, opts.max_start_lag)
        self.cores = sorted(c.id for c in topology.cores)
        self.cost_table = topology.pattern_costs

        self.best: int | None = None
        self.best_schedule: Schedule | None = None
        self.nodes = 0
        self.leaves = 0
        self.pruned: dict[str, int] = {}

        self.preds: dict[str, set[str]] = {t: set() for t in graph.tasks}
        for buf in graph.buffers.values():
            for obs in buf.observers:
                self.preds[obs].add(buf.definer)
        self.topo_order = self._toposort()
        self.min_dur = {
            b.id: min((transfer_cost(name, b.size, self.cost_table)
                       for name in b.allowed_patterns), default=0)
            for b in graph.buffers.values()}
        self.down = self._down_ranks()
        self.load_bound = self._static_load_bound()
        self.anchor_base, self.common_anchors = self._anchor_tables()
        self.group_of = self._validated_symmetry()
        self._static_opts: dict[tuple[str, int], tuple[list[Pattern], list[Pattern]]] = {}

    # -- precomputation ----------------------------------------------------

    def _toposort(self) -> list[str]:
        indeg = {t: len(self.preds[t]) for t in self.graph.tasks}
        order: list[str] = []
        ready = sorted((t for t, d in indeg.items() if d == 0), reverse=True)
        succ: dict[str, list[str]] = {t: [] for t in self.graph.tasks}
        for buf in self.graph.buffers.values():
            for obs in buf.observers:
                succ[buf.definer].append(obs)
        while ready:
            t = ready.pop()
            order.append(t)
            for s in sorted(set(succ[t]), reverse=True):
                indeg[s] -= 1
                if indeg[s] == 0:
                    ready.append(s)
            ready.sort(reverse=True)
        return order

    def _down_ranks(self) -> dict[str, int]:
        down: dict[str, int] = {}
        for t in reversed(self.topo_order):
            task = self.graph.tasks[t]
            tail = 0
            for buf_id in task.outputs:
                buf = self.graph.buffers[buf_id]
                obs_tail = max((down[o] for o in buf.observers), default=0)
                tail = max(tail, self.min_dur[buf_id] + obs_tail)
            down[t] = task.runtime + tail
        return down

    def _static_load_bound(self) -> int:
        total = sum(t.runtime for t in self.graph.tasks.values())
        if not self.cores:
            return 0
        return -(-total // len(self.cores))

    def _anchor_tables(self):
        """Per-anchor serialization floors.  Patterns touching one anchor
        pairwise contend, so their transfer durations sum; a buffer counts
        toward an anchor only when every allowed pattern touches it."""
        def anchor_set(p: Pattern) -> frozenset:
            anchors = getattr(p, "anchors", None)
            if anchors is None:
                return frozenset()
            return frozenset((level, a) for level, pair in anchors.items()
                             for a in pair if a is not None)

        self._anchor_set_of: dict[str, frozenset] = {
            p.name: anchor_set(p) for p in self.catalog}
        common: dict[str, frozenset] = {}
        base: dict[frozenset | tuple, int] = {}
        totals: dict = {}
        for buf in self.graph.buffers.values():
            sets = [self._anchor_set_of.get(self.catalog.lookup(n).name, frozenset())
                    for n in buf.allowed_patterns]
            shared = frozenset.intersection(*sets) if sets else frozenset()
            common[buf.id] = shared
            for anchor in shared:
                totals[anchor] = totals.get(anchor, 0) + self.min_dur[buf.id]
        return totals, common

    def _validated_symmetry(self) -> dict[int, int]:
        """core id -> symmetry group index, for groups nothing distinguishes."""
        group_of: dict[int, int] = {}
        for gi, group in enumerate(self.catalog.symmetric_core_groups):
            broken = False
            for task in self.graph.tasks.values():
                allowed = task.allowed_cores
                if allowed is not None and 0 < len(group & allowed) < len(group):
                    broken = True
                    break
            if not broken:
                for buf in self.graph.buffers.values():
                    klasses = set()
                    for c in group:
                        kl = frozenset(
                            p.klass for name in buf.allowed_patterns
                            if (p := self.catalog.get(name)) is not None
                            and p.core_hint in (None, c))
                        klasses.add(kl)
                    if len(klasses) > 1:
                        broken = True
                        break
            if not broken:
                for c in group:
                    group_of[c] = gi
        return group_of

    # -- pattern options ---------------------------------------------------

    def _identical_behavior(self, a: Pattern, b: Pattern, size: int) -> bool:
        return (transfer_cost(a.name, size, self.cost_table)
                == transfer_cost(b.name, size, self.cost_table)
                and self.catalog.contention_set(a.name) == self.catalog.contention_set(b.name)
                and a.defining_memory == b.defining_memory
                and a.observing_memory == b.observing_memory)

    def _static_options_for(self, buf_id: str, core: int):
        key = (buf_id, core)
        cached = self._static_opts.get(key)
        if cached is not None:
            return cached
        buf = self.graph.buffers[buf_id]
        compat = [p for name in buf.allowed_patterns
                  if (p := self.catalog.get(name)) is not None
                  and p.core_hint in (None, core)]
        compat.sort(key=lambda p: self.catalog.index(p.name))
        if self.opts.dedup_patterns:
            kept: list[Pattern] = []
            for p in compat:
                if any(self._identical_behavior(p, q, buf.size) for q in kept):
                    continue
                kept.append(p)
            compat = kept
        pipes = [p for p in compat if p.klass == "pipeline"]
        nonp = [p for p in compat if p.klass != "pipeline"]
        self._static_opts[key] = (nonp, pipes)
        return nonp, pipes

    def _options(self, buf_id: str, core: int, state: _State) -> list[Pattern]:
        nonp, pipes = self._static_options_for(buf_id, core)
        out = list(nonp)
        buf = self.graph.buffers[buf_id]
        for p in pipes:
            ok = True
            for obs in buf.observers:
                task = self.graph.tasks[obs]
                if task.allowed_cores is not None and core not in task.allowed_cores:
                    ok = False
                    break
                if state.forced.get(obs, core) != core:
                    ok = False
                    break
            if ok:
                out.append(p)
        out.sort(key=lambda p: self.catalog.index(p.name))
        return out

    # -- placement ---------------------------------------------------------

    def _place(self, state: _State, task_id: str, core: int,
               combo: tuple[Pattern, ...]):
        task = self.graph.tasks[task_id]
        ready = 0
        for buf_id in task.inputs:
            ready = max(ready, state.transfers[buf_id].end)
        for ext in task.external_inputs:
            ready = max(ready, ext.release)
        earliest = ready + task.min_start_lag
        start = max(earliest, state.core_free.get(core, 0))
        if self.max_lag is not None and start > earliest + self.max_lag:
            return None, LAG_VIOLATION
        fin = start + task.runtime

        transfers = dict(state.transfers)
        span = max(state.span, fin)
        for buf_id, pattern in zip(task.outputs, combo):
            buf = self.graph.buffers[buf_id]
            duration = transfer_cost(pattern.name, buf.size, self.cost_table)
            lower = fin if buf.release is None else max(fin, buf.release)
            u = lower
            if duration > 0:
                moved = True
                while moved:
                    moved = False
                    for tr in transfers.values():
                        if tr.duration == 0:
                            continue
                        if not self.catalog.contends(pattern.name, tr.pattern):
                            continue
                        if u < tr.end and tr.start < u + duration:
                            u = tr.end
                            moved = True
            end = u + duration
            if buf.avail_deadline is not None and end > buf.avail_deadline:
                return None, DEADLINE_MISS
            transfers[buf_id] = Transfer(pattern=pattern.name, start=u,
                                         duration=duration)
            span = max(span, end)

        placed = dict(state.placed)
        placed[task_id] = (core, start)
        finish = dict(state.finish)
        finish[task_id] = fin
        core_free = dict(state.core_free)
        core_free[core] = fin
        forced = state.forced
        for buf_id, pattern in zip(task.outputs, combo):
            if pattern.klass == "pipeline":
                if forced is state.forced:
                    forced = dict(state.forced)
                for obs in self.graph.buffers[buf_id].observers:
                    forced[obs] = core

        child = _State(placed=placed, finish=finish, transfers=transfers,
                       core_free=core_free, forced=forced,
                       used=state.used | {core}, span=span)
        if self._overflows(child):
            return None, BUFFER_OVERFLOW
        return child, None

    def _overflows(self, state: _State) -> bool:
        """Occupancy check on the partial schedule.  Claims only grow as
        more tasks land, so an overflow here dooms every completion."""
        claims: list[tuple[str, int, int, int]] = []
        for buf_id, tr in state.transfers.items():
            buf = self.graph.buffers[buf_id]
            pattern = self.catalog.lookup(tr.pattern)
            born = state.finish[buf.definer]
            last = tr.end
            for obs in buf.observers:
                if obs in state.finish:
                    last = max(last, state.finish[obs])
            if pattern.defining_memory == pattern.observing_memory:
                claims.append((pattern.defining_memory, born, last, buf.size))
            else:
                claims.append((pattern.defining_memory, born, tr.end, buf.size))
                claims.append((pattern.observing_memory, tr.start, last, buf.size))
        for task_id, (core, start) in state.placed.items():
            task = self.graph.tasks[task_id]
            if task.internalsize > 0:
                claims.append((self.topology.core(core).l3, start,
                               state.finish[task_id], task.internalsize))

        by_mem: dict[str, list[tuple[int, int, int]]] = {}
        for mem, start, end, size in claims:
            if end > start:
                events = by_mem.setdefault(mem, [])
                events.append((start, 1, size))
                events.append((end, 0, -size))
        for mem, events in by_mem.items():
            capacity = self.topology.memory(mem).capacity
            events.sort()
            level = 0
            for _, _, delta in events:
                level += delta
                if level > capacity:
                    return True
        return False

    # -- bounds ------------------------------------------------------------

    def _lower_bound(self, state: _State) -> int:
        bound = max(state.span, self.load_bound)

        est_fin: dict[str, int] = {}
        for t in self.topo_order:
            if t in state.placed:
                continue
            task = self.graph.tasks[t]
            est = 0
            for buf_id in task.inputs:
                tr = state.transfers.get(buf_id)
                if tr is not None:
                    est = max(est, tr.end)
                else:
                    definer = self.graph.buffers[buf_id].definer
                    est = max(est, est_fin[definer] + self.min_dur[buf_id])
            for ext in task.external_inputs:
                est = max(est, ext.release)
            est += task.min_start_lag
            est_fin[t] = est + task.runtime
            bound = max(bound, est + self.down[t])

        if self.anchor_base:
            extras: dict = {}
            for buf_id, tr in state.transfers.items():
                touched = self._anchor_set_of.get(
                    self.catalog.lookup(tr.pattern).name, frozenset())
                shared = self.common_anchors[buf_id]
                for anchor in touched:
                    counted = self.min_dur[buf_id] if anchor in shared else 0
                    extras[anchor] = extras.get(anchor, 0) + tr.duration - counted
            for anchor, basev in self.anchor_base.items():
                bound = max(bound, basev + extras.get(anchor, 0))
        return bound

    # -- branching ---------------------------------------------------------

    def _candidate_cores(self, task_id: str, state: _State) -> list[int]:
        task = self.graph.tasks[task_id]
        cands = [c for c in self.cores
                 if task.allowed_cores is None or c in task.allowed_cores]
        forced = state.forced.get(task_id)
        if forced is not None:
            cands = [c for c in cands if c == forced]
        kept: list[int] = []
        for c in cands:
            if c in state.used or c not in self.group_of:
                kept.append(c)
                continue
            peers = [d for d in cands if d not in state.used
                     and self.group_of.get(d) == self.group_of[c]]
            if c == min(peers):
                kept.append(c)
        return kept

    def _frontier(self, state: _State) -> list[str]:
        return sorted(t for t in self.graph.tasks
                      if t not in state.placed
                      and all(p in state.placed for p in self.preds[t]))

    def _note(self, reason: str) -> None:
        self.pruned[reason] = self.pruned.get(reason, 0) + 1

    def _cap(self) -> int:
        if self.best is None:
            return self.graph.deadline
        return min(self.graph.deadline, self.best - 1)

    def _spend(self) -> None:
        # budget counts every attempted placement, not just entered states,
        # so runtime scales with the cap even in very wide trees
        self.nodes += 1
        if self.nodes > self.opts.budget_nodes:
            raise _BudgetExhausted()

    def _expand(self, state: _State) -> None:
        self._spend()
        if len(state.placed) == len(self.graph.tasks):
            self._leaf(state)
            return
        for task_id in self._frontier(state):
            cands = self._candidate_cores(task_id, state)
            if not cands:
                self._note(PATTERN_VIOLATION)
                continue
            outputs = self.graph.tasks[task_id].outputs
            for core in cands:
                option_lists: list[list[Pattern]] = []
                dead = False
                for buf_id in outputs:
                    options = self._options(buf_id, core, state)
                    if not options:
                        dead = True
                        break
                    option_lists.append(options)
                if dead:
                    self._note(PATTERN_VIOLATION)
                    continue
                for combo in product(*option_lists):
                    self._spend()
                    child, reason = self._place(state, task_id, core, combo)
                    if child is None:
                        self._note(reason)
                        continue
                    lb = self._lower_bound(child)
                    if lb > self._cap():
                        self._note(DEADLINE_MISS if lb > self.graph.deadline
                                   else PRUNE_BOUND)
                        continue
                    self._expand(child)

    def _leaf(self, state: _State) -> None:
        self.leaves += 1
        schedule = Schedule(assignments=dict(state.placed),
                            transfers=dict(state.transfers))
        violations = check_schedule(schedule, self.graph, self.topology,
                                    self.catalog, max_start_lag=self.max_lag)
        if violations:
            self._note(violations[0].kind)
            return
        if self.best is None or state.span < self.best:
            self.best = state.span
            self.best_schedule = schedule

    # -- seeding -----------------------------------------------------------

    def _seed(self) -> None:
        """List scheduling by upward rank, run under a small portfolio of
        greedy policies; a pass only becomes the incumbent if the independent
        checker accepts it and it beats anything found so far.

        finish-time keys spread load across cores, span keys keep chains
        local; allowing or banning zero-cost co-location patterns in a pass
        trades transfer cost against core parallelism."""
        for by_finish in (True, False):
            for ban_colocate in (False, True):
                self._seed_pass(by_finish, ban_colocate)

    def _seed_pass(self, by_finish: bool, ban_colocate: bool) -> None:
        order = sorted(self.graph.tasks, key=lambda t: (-self.down[t], t))
        state = self._root()
        for task_id in order:
            if any(p not in state.placed for p in self.preds[task_id]):
                return
            best_child = None
            best_key = None
            for core in self._candidate_cores(task_id, state):
                combo_pool: list[list[Pattern]] = []
                dead = False
                for buf_id in self.graph.tasks[task_id].outputs:
                    options = self._options(buf_id, core, state)
                    if not options:
                        dead = True
                        break
                    buf = self.graph.buffers[buf_id]
                    by_cost = sorted(options, key=lambda p: (
                        transfer_cost(p.name, buf.size, self.cost_table),
                        self.catalog.index(p.name)))
                    nonpipe = [p for p in by_cost if p.klass != "pipeline"]
                    if ban_colocate and nonpipe:
                        picks = [nonpipe[0]]
                    else:
                        picks = [by_cost[0]]
                        if nonpipe and nonpipe[0] is not picks[0]:
                            picks.append(nonpipe[0])
                    combo_pool.append(picks)
                if dead:
                    continue
                for combo in product(*combo_pool):
                    child, _ = self._place(state, task_id, core, combo)
                    if child is None:
                        continue
                    rank = child.finish[task_id] if by_finish else child.span
                    key = (rank, child.span, core,
                           tuple(self.catalog.index(p.name) for p in combo))
                    if best_key is None or key < best_key:
                        best_key = key
                        best_child = child
            if best_child is None:
                return
            state = best_child
        schedule = Schedule(assignments=dict(state.placed),
                            transfers=dict(state.transfers))
        if self.best is not None and state.span >= self.best:
            return
        if not check_schedule(schedule, self.graph, self.topology, self.catalog,
                              max_start_lag=self.max_lag):
            self.best = state.span
            self.best_schedule = schedule

    def _root(self) -> _State:
        return _State(placed={}, finish={}, transfers={}, core_free={},
                      forced={}, used=frozenset(), span=0)

    # -- driver ------------------------------------------------------------

    def run(self) -> SolveOutcome:
        seed_span = None
        self._seed()
        if self.best is not None:
            seed_span = self.best

        complete = False
        if self.opts.mode == "exact":
            try:
                self._expand(self._root())
                complete = True
            except _BudgetExhausted:
                complete = False
        elif self.opts.mode != "heuristic":
            raise ValueError(f"unknown solve mode {self.opts.mode!r}")

        stats = {
            "nodes": self.nodes,
            "leaves": self.leaves,
            "pruned": dict(sorted(self.pruned.items())),
            "seed_makespan": seed_span,
            "complete": complete,
        }
        if self.best is not None:
            if complete:
                status = "optimal"
            else:
                status = "feasible"
            return SolveOutcome(status=status, schedule=self.best_schedule,
                                makespan=self.best, witness=None, stats=stats)
        if complete:
            witness = self._witness()
            return SolveOutcome(status="infeasible", schedule=None,
                                makespan=None, witness=witness, stats=stats)
        return SolveOutcome(status="unknown", schedule=None, makespan=None,
                            witness=None, stats=stats)

    def _witness(self) -> str:
        reasons = {k: v for k, v in self.pruned.items() if k != PRUNE_BOUND}
        if not reasons:
            return DEADLINE_MISS
        return max(sorted(reasons), key=lambda k: reasons[k])
