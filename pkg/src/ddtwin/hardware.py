"""Hardware topology and deployment configuration.

Both are single-document YAML files.  The topology names memories and
cores and optionally overrides the per-class transfer cost table; the
deployment pins symbolic constants, the slot budget, the entry flow, and
scheduler-wide knobs like the maximum start lag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import yaml

from .diagnostics import DiagnosticError, error_at

MEMORY_LEVELS = ("L2", "L3", "DDR")

# base cycles and bytes/cycle per pattern class; pipeline stays inside a
# core's cache hierarchy so it has no size term at all
DEFAULT_COST_TABLE: dict[str, tuple[int, int | None]] = {
    "pipeline": (0, None),
    "L2toL2": (200, 64),
    "big_delay": (1000, 16),
}


@dataclass(frozen=True)
class Memory:
    id: str
    level: str
    capacity: int
    bandwidth: int | None = None
    latency: int = 0


@dataclass(frozen=True)
class Core:
    id: int
    l2: str
    l3: str


@dataclass
class HardwareTopology:
    memories: list[Memory]
    cores: list[Core]
    clock_hz: int
    pattern_costs: dict[str, tuple[int, int | None]] = field(
        default_factory=lambda: dict(DEFAULT_COST_TABLE))

    def __post_init__(self) -> None:
        self._by_id = {m.id: m for m in self.memories}

    def memory(self, mem_id: str) -> Memory:
        return self._by_id[mem_id]

    def memories_of_level(self, level: str) -> list[Memory]:
        return [m for m in self.memories if m.level == level]

    def core(self, core_id: int) -> Core:
        for c in self.cores:
            if c.id == core_id:
                return c
        raise KeyError(f"no core {core_id}")


@dataclass
class DeploymentConfig:
    entry_flow: str
    symbols: dict[str, int] = field(default_factory=dict)
    slot_budget: int = 1_000_000
    max_start_lag: int | None = None
    metadata_files: list[str] = field(default_factory=list)
    equation_values: dict[str, int] = field(default_factory=dict)


def _load_yaml_mapping(text: str, what: str) -> dict:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = (mark.line + 1) if mark else 1
        raise DiagnosticError([error_at(line, 1, f"YAML parse error in {what}: {exc}")]) from exc
    if not isinstance(raw, dict):
        raise DiagnosticError([error_at(1, 1, f"{what} must be a YAML mapping")])
    return raw


def parse_topology(text: str) -> HardwareTopology:
    raw = _load_yaml_mapping(text, "topology")
    diags = []
    memories: list[Memory] = []
    for m in raw.get("memories", []):
        level = m.get("level")
        if level not in MEMORY_LEVELS:
            diags.append(error_at(1, 1, f"memory {m.get('id')!r} has unknown level {level!r}"))
            continue
        memories.append(Memory(id=str(m["id"]), level=level,
                               capacity=int(m.get("capacity", 0)),
                               bandwidth=m.get("bandwidth"),
                               latency=int(m.get("latency", 0))))
    mem_ids = {m.id for m in memories}
    cores: list[Core] = []
    for c in raw.get("cores", []):
        core = Core(id=int(c["id"]), l2=str(c["l2"]), l3=str(c["l3"]))
        for ref in (core.l2, core.l3):
            if ref not in mem_ids:
                diags.append(error_at(1, 1, f"core {core.id} references unknown memory {ref!r}"))
        cores.append(core)
    if len({c.id for c in cores}) != len(cores):
        diags.append(error_at(1, 1, "duplicate core ids in topology"))

    costs = dict(DEFAULT_COST_TABLE)
    for klass, entry in (raw.get("pattern_costs") or {}).items():
        if klass not in DEFAULT_COST_TABLE:
            diags.append(error_at(1, 1, f"pattern_costs names unknown class {klass!r}"))
            continue
        base = int(entry.get("base", 0))
        bandwidth = entry.get("bandwidth")
        costs[klass] = (base, int(bandwidth) if bandwidth is not None else None)
    if diags:
        raise DiagnosticError(diags)
    return HardwareTopology(memories=memories, cores=cores,
                            clock_hz=int(raw.get("clock_hz", 2_000_000_000)),
                            pattern_costs=costs)


def parse_deployment(text: str) -> DeploymentConfig:
    raw = _load_yaml_mapping(text, "deployment")
    if "entry_flow" not in raw:
        raise DiagnosticError([error_at(1, 1, "deployment must name an entry_flow")])
    symbols = {str(k): int(v) for k, v in (raw.get("symbols") or {}).items()}
    equation_values = {str(k): int(v) for k, v in (raw.get("equation_values") or {}).items()}
    lag = raw.get("max_start_lag")
    return DeploymentConfig(
        entry_flow=str(raw["entry_flow"]),
        symbols=symbols,
        slot_budget=int(raw.get("slot_budget", 1_000_000)),
        max_start_lag=int(lag) if lag is not None else None,
        metadata_files=[str(p) for p in (raw.get("metadata_files") or [])],
        equation_values=equation_values,
    )
