"""Hardware pattern catalog.

A pattern is an allowed data movement of a buffer from definition (a
function writes its output) to observation (a function reads it), named
after the route it takes through the memory hierarchy.  Three classes
exist:

* ``pipeline``  - definer and observers stay in one core's cache
  hierarchy; no bulk transfer.
* ``L2toL2``    - core-to-core handoff staged through the L3 slice.
* ``big_delay`` - round trip through DDR behind the L3 slice.

Catalogs are either parsed from XML (``<patterns>`` root with one
``<pattern>`` element per entry) or generated from a hardware topology.
Pattern names in the wild mix ``.`` and ``_`` separators and letter case
(``accl3_0`` vs ``accL3_0``), so all lookups go through a canonical token
form that splits on both separators and merges digit suffixes.
"""

from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

from .diagnostics import DiagnosticError, error_at

PATTERN_CLASSES = ("pipeline", "L2toL2", "big_delay")

SHARE_KEYS = ("L2_II", "L2_IO", "L2_OI", "L2_OO",
              "L3_II", "L3_IO", "L3_OI", "L3_OO")

_SPLIT_RE = re.compile(r"[._]")


def canonical_name(name: str) -> tuple[str, ...]:
    """Canonical token form of a pattern name.

    Splits on dots and underscores, lowercases, and merges digit tokens
    into the preceding token, so ``big_delay.c.0.L3.0.DDR.0.accl3_0`` and
    ``big_delay.c_0.L3_0.DDR_0.accL3_0`` compare equal.
    """
    tokens = [t for t in _SPLIT_RE.split(name.strip().lower()) if t]
    merged: list[str] = []
    for tok in tokens:
        if tok.isdigit() and merged and not merged[-1].isdigit():
            merged[-1] += tok
        else:
            merged.append(tok)
    return tuple(merged)


def pattern_class(name: str) -> str:
    """The cost class a pattern name denotes; raises on unknown classes."""
    tokens = canonical_name(name)
    if tokens[:1] == ("pipeline",):
        return "pipeline"
    if tokens[:1] == ("l2tol2",):
        return "L2toL2"
    if tokens[:2] == ("big", "delay"):
        return "big_delay"
    raise DiagnosticError([error_at(1, 1, f"unknown pattern class in name {name!r}")])


def _core_hint(name: str) -> int | None:
    for tok in canonical_name(name):
        m = re.fullmatch(r"c(\d+)", tok)
        if m:
            return int(m.group(1))
    return None


@dataclass
class Pattern:
    name: str
    defining_memory: str
    observing_memory: str
    exclusive_define_with: tuple[str, ...] = ()
    shares: dict[str, tuple[str, ...]] = field(default_factory=dict)
    can_observe: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        self.canonical = canonical_name(self.name)
        self.klass = pattern_class(self.name)
        self.core_hint = _core_hint(self.name)
        for key in SHARE_KEYS:
            self.shares.setdefault(key, ())


class PatternCatalog:
    """Ordered pattern collection with canonical-name lookup and a
    precomputed symmetric contention relation."""

    def __init__(self, patterns: list[Pattern]):
        self.patterns = list(patterns)
        # cores whose pattern sets are isomorphic under relabeling; only the
        # topology generator can certify this, parsed catalogs leave it empty
        self.symmetric_core_groups: tuple[frozenset[int], ...] = ()
        self._by_canonical: dict[tuple[str, ...], Pattern] = {}
        self._index: dict[tuple[str, ...], int] = {}
        diags = []
        for i, p in enumerate(self.patterns):
            if p.canonical in self._by_canonical:
                diags.append(error_at(1, 1, f"duplicate pattern name {p.name!r}"))
                continue
            self._by_canonical[p.canonical] = p
            self._index[p.canonical] = i
        for p in self.patterns:
            for member in p.exclusive_define_with + p.can_observe + tuple(
                    m for key in SHARE_KEYS for m in p.shares[key]):
                if canonical_name(member) not in self._by_canonical:
                    diags.append(error_at(1, 1,
                                          f"pattern {p.name!r} references unknown pattern {member!r}"))
        if diags:
            raise DiagnosticError(diags)
        # contention closes the declared relations symmetrically: a transfer
        # pair serializes if either side declares exclusivity or sharing
        self._contends: dict[tuple[str, ...], set[tuple[str, ...]]] = {
            p.canonical: set() for p in self.patterns}
        for p in self.patterns:
            for member in p.exclusive_define_with + tuple(
                    m for key in SHARE_KEYS for m in p.shares[key]):
                other = canonical_name(member)
                self._contends[p.canonical].add(other)
                self._contends[other].add(p.canonical)

    def __len__(self) -> int:
        return len(self.patterns)

    def __iter__(self):
        return iter(self.patterns)

    def get(self, name: str) -> Pattern | None:
        return self._by_canonical.get(canonical_name(name))

    def lookup(self, name: str) -> Pattern:
        p = self.get(name)
        if p is None:
            raise KeyError(f"pattern {name!r} is not in the catalog")
        return p

    def index(self, name: str) -> int:
        return self._index[canonical_name(name)]

    def contends(self, a: str, b: str) -> bool:
        return canonical_name(b) in self._contends[canonical_name(a)]

    def contention_set(self, name: str) -> frozenset:
        """Canonical names of every pattern this one serializes against."""
        return frozenset(self._contends[canonical_name(name)])


# ---------------------------------------------------------------------------
# XML parsing and serialization


def parse_pattern_catalog(text: str) -> PatternCatalog:
    """Parse an XML pattern catalog.

    The root element is ``<patterns>``; each child ``<pattern>`` carries a
    ``name`` attribute, ``defining_memory`` / ``observing_memory`` anchor
    elements, and membership lists of ``<member>`` names.  Cross references
    are validated against the full catalog after parsing, so a member that
    names an absent pattern is a dangling-reference error.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        line, col = exc.position if exc.position else (1, 0)
        raise DiagnosticError([error_at(line, col + 1, f"XML parse error: {exc}")]) from exc
    if root.tag != "patterns":
        raise DiagnosticError([error_at(1, 1, f"expected <patterns> root, found <{root.tag}>")])

    def members(parent: ET.Element | None) -> tuple[str, ...]:
        if parent is None:
            return ()
        return tuple((m.text or "").strip() for m in parent.findall("member"))

    patterns: list[Pattern] = []
    diags = []
    for elem in root.findall("pattern"):
        name = elem.get("name")
        if not name:
            diags.append(error_at(1, 1, "<pattern> element without a name attribute"))
            continue
        defining = elem.findtext("defining_memory")
        observing = elem.findtext("observing_memory")
        if not defining or not observing:
            diags.append(error_at(1, 1, f"pattern {name!r} must declare defining and observing memories"))
            continue
        shares = {key: members(elem.find(f"shares_{key}_with")) for key in SHARE_KEYS}
        patterns.append(Pattern(
            name=name,
            defining_memory=defining.strip(),
            observing_memory=observing.strip(),
            exclusive_define_with=members(elem.find("exclusive_define_with")),
            shares=shares,
            can_observe=members(elem.find("can_observe")),
        ))
    if diags:
        raise DiagnosticError(diags)
    return PatternCatalog(patterns)


def serialize_pattern_catalog(catalog: PatternCatalog) -> str:
    """Render a catalog back to the XML exchange format."""
    lines = ["<patterns>"]
    for p in catalog:
        lines.append(f'  <pattern name="{p.name}">')
        lines.append(f"    <defining_memory>{p.defining_memory}</defining_memory>")
        lines.append(f"    <observing_memory>{p.observing_memory}</observing_memory>")

        def block(tag: str, names: tuple[str, ...]) -> None:
            if not names:
                lines.append(f"    <{tag}/>")
                return
            lines.append(f"    <{tag}>")
            for n in names:
                lines.append(f"      <member>{n}</member>")
            lines.append(f"    </{tag}>")

        block("exclusive_define_with", p.exclusive_define_with)
        for key in SHARE_KEYS:
            block(f"shares_{key}_with", p.shares[key])
        block("can_observe", p.can_observe)
        lines.append("  </pattern>")
    lines.append("</patterns>")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Generation from a hardware topology


def _anchor_sets(specs: list[dict]) -> list[Pattern]:
    """Derive the membership sets from side anchors.

    Each spec carries per-level anchors for the defining (Input) and
    observing (Output) sides.  Two patterns share a level-X side pair YZ
    exactly when this pattern's Y-side anchor at level X equals the other
    pattern's Z-side anchor, which makes membership symmetric under the
    side-pair swap YZ <-> ZY.  exclusive_define_with groups patterns whose
    defining-side L2 anchor coincides (writes leave the same core).
    """
    patterns: list[Pattern] = []
    for spec in specs:
        anchors = spec["anchors"]
        exclusive = tuple(
            q["name"] for q in specs
            if anchors["L2"][0] is not None and q["anchors"]["L2"][0] == anchors["L2"][0])
        shares: dict[str, tuple[str, ...]] = {}
        for level in ("L2", "L3"):
            for i, side_a in enumerate(("I", "O")):
                for j, side_b in enumerate(("I", "O")):
                    mine = anchors[level][i]
                    shares[f"{level}_{side_a}{side_b}"] = tuple(
                        q["name"] for q in specs
                        if mine is not None and q["anchors"][level][j] == mine)
        can_observe = tuple(
            q["name"] for q in specs
            if q["defining_memory"] == spec["observing_memory"])
        p = Pattern(name=spec["name"],
                    defining_memory=spec["defining_memory"],
                    observing_memory=spec["observing_memory"],
                    exclusive_define_with=exclusive,
                    shares=shares,
                    can_observe=can_observe)
        p.anchors = anchors
        patterns.append(p)
    return patterns


def generate_patterns_from_topology(topology) -> PatternCatalog:
    """Generate the full pattern catalog a hardware topology admits.

    Per core ``c`` attached to L3 slice ``m``, and per DDR ``d`` behind it:

    * ``pipeline.c_<c>.<m>``                 (stay in the core's hierarchy)
    * ``L2toL2.c_<c>.<m>.acc<m>``            (core to core via the slice)
    * ``big_delay.c_<c>.<m>.DDR_<d>.<m>``    (round trip through DDR)
    * ``big_delay.c_<c>.<m>.DDR_<d>.acc<m>`` (DDR round trip, slice port)

    Anchor model behind the derived sets: every pattern defines from the
    core's own L2.  pipeline observes in that same L2; the other classes
    deliver into whichever L2 the observer runs on, modeled as one shared
    per-slice anchor, so their transfers contend pairwise.  L2toL2 data is
    staged in the slice itself (L3 residency); big_delay data only transits
    the slice on its way to DDR, so big_delay carries no L3 anchor at all.
    """
    specs: list[dict] = []
    for core in topology.cores:
        m = core.l3
        l2 = core.l2
        l2_any = f"{m}.l2port"
        for ddr in topology.memories_of_level("DDR"):
            specs.append({
                "name": f"big_delay.c_{core.id}.{m}.{ddr.id}.{m}",
                "defining_memory": m, "observing_memory": m,
                "anchors": {"L2": (l2, l2_any), "L3": (None, None)},
            })
            specs.append({
                "name": f"big_delay.c_{core.id}.{m}.{ddr.id}.acc{m}",
                "defining_memory": m, "observing_memory": m,
                "anchors": {"L2": (l2, l2_any), "L3": (None, None)},
            })
        specs.append({
            "name": f"pipeline.c_{core.id}.{m}",
            "defining_memory": l2, "observing_memory": l2,
            "anchors": {"L2": (l2, l2), "L3": (None, None)},
        })
        specs.append({
            "name": f"L2toL2.c_{core.id}.{m}.acc{m}",
            "defining_memory": l2, "observing_memory": m,
            "anchors": {"L2": (l2, l2_any), "L3": (None, m)},
        })
    catalog = PatternCatalog(_anchor_sets(specs))
    groups: dict[tuple, list[int]] = {}
    for core in topology.cores:
        key = (topology.memory(core.l2).capacity, core.l3)
        groups.setdefault(key, []).append(core.id)
    catalog.symmetric_core_groups = tuple(
        frozenset(ids) for ids in groups.values() if len(ids) >= 2)
    return catalog


# ---------------------------------------------------------------------------
# Transfer cost


def transfer_cost(pattern_name: str, size: int, cost_table: dict) -> int:
    """Cycles a transfer of ``size`` bytes takes under the pattern's class.

    cost = base latency + ceil(size / bandwidth); classes without a
    bandwidth entry (pipeline stays in cache) have no size term.
    """
    klass = pattern_class(pattern_name)
    if klass not in cost_table:
        raise KeyError(f"cost table has no entry for pattern class {klass!r}")
    base, bandwidth = cost_table[klass]
    if size < 0:
        raise ValueError(f"negative transfer size {size}")
    if bandwidth is None:
        return base
    return base + -(-size // bandwidth)
