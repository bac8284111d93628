"""Pattern catalog: canonical names, XML round trip, generation, costs."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from ddtwin.diagnostics import DiagnosticError
from ddtwin.hardware import DEFAULT_COST_TABLE
from ddtwin.patterns import (Pattern, PatternCatalog, SHARE_KEYS,
                             canonical_name, generate_patterns_from_topology,
                             parse_pattern_catalog, pattern_class,
                             serialize_pattern_catalog, transfer_cost)
from conftest import make_topology

FIG6_NAMES = [
    "big_delay.c_0.L3_0.DDR_0.L3_0", "big_delay.c_0.L3_0.DDR_0.accL3_0",
    "pipeline.c_0.L3_0", "L2toL2.c_0.L3_0.accL3_0",
    "big_delay.c_1.L3_0.DDR_0.L3_0", "big_delay.c_1.L3_0.DDR_0.accL3_0",
    "pipeline.c_1.L3_0", "L2toL2.c_1.L3_0.accL3_0",
    "big_delay.c_2.L3_0.DDR_0.L3_0", "big_delay.c_2.L3_0.DDR_0.accL3_0",
    "pipeline.c_2.L3_0", "L2toL2.c_2.L3_0.accL3_0",
    "big_delay.c_3.L3_0.DDR_0.L3_0", "big_delay.c_3.L3_0.DDR_0.accL3_0",
    "pipeline.c_3.L3_0", "L2toL2.c_3.L3_0.accL3_0",
]


def test_dotted_and_underscored_names_are_equivalent():
    assert canonical_name("big_delay.c.0.L3.0.DDR.0.L3.0") \
        == canonical_name("big_delay.c_0.L3_0.DDR_0.L3_0")


def test_canonical_name_is_case_insensitive():
    assert canonical_name("L2toL2.C_0.L3_0.accL3_0") \
        == canonical_name("l2tol2.c_0.l3_0.accl3_0")


def test_pattern_class_from_name():
    assert pattern_class("pipeline.c_1.L3_0") == "pipeline"
    assert pattern_class("L2toL2.c_0.L3_0.accL3_0") == "L2toL2"
    assert pattern_class("big_delay.c.0.L3.0.DDR.0.L3.0") == "big_delay"
    with pytest.raises(DiagnosticError):
        pattern_class("teleport.c_0")


def test_bundled_catalog_parses(paper_dir):
    cat = parse_pattern_catalog((paper_dir / "patterns.xml").read_text())
    assert len(cat) == 16
    assert {canonical_name(n) for n in FIG6_NAMES} \
        == {p.canonical for p in cat}


def test_bundled_dotted_element_relations(paper_dir):
    cat = parse_pattern_catalog((paper_dir / "patterns.xml").read_text())
    p = cat.lookup("big_delay.c.0.L3.0.DDR.0.L3.0")
    assert p.name.startswith("big_delay.c.0")      # dotted spelling kept
    assert len(p.exclusive_define_with) == 4       # includes itself
    assert len(p.shares["L2_OO"]) == 12
    assert p.shares["L3_II"] == () and p.shares["L3_OO"] == ()
    assert len(p.can_observe) == 8


def test_parsed_catalog_has_no_symmetry_certificate(paper_dir):
    cat = parse_pattern_catalog((paper_dir / "patterns.xml").read_text())
    assert cat.symmetric_core_groups == ()


def test_generation_counts_match_core_count():
    assert len(generate_patterns_from_topology(make_topology(1))) == 4
    cat = generate_patterns_from_topology(make_topology(4))
    assert len(cat) == 16
    # four patterns per core, grouped by core, in a fixed class order
    classes = [p.klass for p in cat]
    assert classes == ["big_delay", "big_delay", "pipeline", "L2toL2"] * 4


def test_generated_names_match_bundled_catalog_names(paper_dir):
    from ddtwin.hardware import parse_topology
    topo = parse_topology((paper_dir / "topology.yaml").read_text())
    cat = generate_patterns_from_topology(topo)
    assert [p.canonical for p in cat] \
        == [canonical_name(n) for n in FIG6_NAMES]


def test_generator_certifies_symmetric_cores():
    cat = generate_patterns_from_topology(make_topology(4))
    assert cat.symmetric_core_groups == (frozenset({0, 1, 2, 3}),)


def test_contention_is_symmetric():
    cat = generate_patterns_from_topology(make_topology(3))
    names = [p.name for p in cat]
    for a in names:
        for b in names:
            assert cat.contends(a, b) == cat.contends(b, a)


def test_big_delay_contends_across_cores():
    cat = generate_patterns_from_topology(make_topology(2))
    assert cat.contends("big_delay.c_0.L3_0.DDR_0.L3_0",
                        "big_delay.c_1.L3_0.DDR_0.L3_0")


def test_pipeline_does_not_contend_across_cores():
    cat = generate_patterns_from_topology(make_topology(2))
    assert not cat.contends("pipeline.c_0.L3_0", "pipeline.c_1.L3_0")


def test_serialize_parse_round_trip():
    cat = generate_patterns_from_topology(make_topology(2))
    again = parse_pattern_catalog(serialize_pattern_catalog(cat))
    assert [p.canonical for p in again] == [p.canonical for p in cat]
    for p, q in zip(cat, again):
        assert p.defining_memory == q.defining_memory
        assert p.observing_memory == q.observing_memory
        assert set(p.exclusive_define_with) == set(q.exclusive_define_with)
        for key in SHARE_KEYS:
            assert set(p.shares[key]) == set(q.shares[key])
        assert set(p.can_observe) == set(q.can_observe)


def test_dangling_member_rejected_by_name():
    cat = generate_patterns_from_topology(make_topology(1))
    specs = [Pattern(name=p.name, defining_memory=p.defining_memory,
                     observing_memory=p.observing_memory,
                     exclusive_define_with=p.exclusive_define_with,
                     shares=dict(p.shares), can_observe=p.can_observe)
             for p in cat]
    specs[0] = Pattern(name=specs[0].name,
                       defining_memory=specs[0].defining_memory,
                       observing_memory=specs[0].observing_memory,
                       exclusive_define_with=("ghost",),
                       shares=dict(specs[0].shares),
                       can_observe=specs[0].can_observe)
    with pytest.raises(DiagnosticError, match="ghost"):
        PatternCatalog(specs)


def test_duplicate_pattern_name_rejected():
    cat = generate_patterns_from_topology(make_topology(1))
    p = cat.patterns[0]
    dup = Pattern(name=p.name.replace("_", "."),  # same canonical spelling
                  defining_memory=p.defining_memory,
                  observing_memory=p.observing_memory)
    with pytest.raises(DiagnosticError, match="duplicate"):
        PatternCatalog(list(cat.patterns) + [dup])


# -- transfer costs ----------------------------------------------------------

def test_default_cost_table_values():
    assert DEFAULT_COST_TABLE["pipeline"] == (0, None)
    assert DEFAULT_COST_TABLE["L2toL2"] == (200, 64)
    assert DEFAULT_COST_TABLE["big_delay"] == (1000, 16)


def test_round_trip_ddr_cost_at_published_size():
    # 2.8 MB over a 16 B/cycle DDR path plus the base latency
    cost = transfer_cost("big_delay.c_0.L3_0.DDR_0.L3_0", 2_800_000,
                         DEFAULT_COST_TABLE)
    assert cost == 176_000


def test_pipeline_cost_has_no_size_term():
    assert transfer_cost("pipeline.c_0.L3_0", 0, DEFAULT_COST_TABLE) == 0
    assert transfer_cost("pipeline.c_0.L3_0", 10**9, DEFAULT_COST_TABLE) == 0


def test_cost_rounds_partial_lines_up():
    assert transfer_cost("L2toL2.c_0.L3_0.accL3_0", 1, DEFAULT_COST_TABLE) \
        == 201
    assert transfer_cost("L2toL2.c_0.L3_0.accL3_0", 64, DEFAULT_COST_TABLE) \
        == 201
    assert transfer_cost("L2toL2.c_0.L3_0.accL3_0", 65, DEFAULT_COST_TABLE) \
        == 202


@given(size=st.integers(min_value=0, max_value=10**8),
       bump=st.integers(min_value=1, max_value=10**6))
def test_cost_monotone_in_size(size, bump):
    a = transfer_cost("big_delay.c_0.x", size, DEFAULT_COST_TABLE)
    b = transfer_cost("big_delay.c_0.x", size + bump, DEFAULT_COST_TABLE)
    assert b >= a


@given(size=st.integers(min_value=0, max_value=10**8))
def test_cost_orders_classes_at_equal_size(size):
    pipeline = transfer_cost("pipeline.c_0.x", size, DEFAULT_COST_TABLE)
    near = transfer_cost("L2toL2.c_0.x", size, DEFAULT_COST_TABLE)
    far = transfer_cost("big_delay.c_0.x", size, DEFAULT_COST_TABLE)
    assert pipeline <= near <= far
