"""Multi-document YAML constraint manifests and timing equations."""

from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from ddtwin.diagnostics import DiagnosticError
from ddtwin.manifests import (FunctionMetadata, TimingEqualityDoc,
                              TimingEquationDoc, equation_symbols,
                              evaluate_timing_equation,
                              parse_constraint_stream)


def test_bundled_equality_doc(paper_dir):
    docs = parse_constraint_stream((paper_dir / "constraints.yaml").read_text())
    eq = docs[0]
    assert isinstance(eq, TimingEqualityDoc)
    assert eq.name == "Modem_Period"
    assert eq.variable_name == "modem_period"
    assert eq.op == "equal"
    assert eq.value == 1_000_000
    assert eq.unit == "clock"


def test_bundled_equation_doc(paper_dir):
    docs = parse_constraint_stream((paper_dir / "constraints.yaml").read_text())
    eq = docs[1]
    assert isinstance(eq, TimingEquationDoc)
    assert eq.name == "Modem_Period2"
    assert eq.equation == "C <= A*370 + B < 500"
    assert eq.bindings == {"C": "grid_period", "A": "num_ue1", "B": "gp_base"}


def test_bundled_sdk_doc(paper_dir):
    docs = parse_constraint_stream((paper_dir / "sdk.yaml").read_text())
    (fn,) = docs
    assert isinstance(fn, FunctionMetadata)
    assert fn.name == "NR5G1_DL_PDSCH_SYM"
    assert len(fn.available_patterns) == 16
    assert fn.elementsize == 2_800_000
    assert fn.internalsize == 8_000_000
    assert fn.runtime == 7_200


def _doc(kind="timing equality", **spec):
    base = {"apiVersion": "rdsl/v0", "kind": kind,
            "metadata": {"name": "D"}, "spec": spec}
    import yaml
    return yaml.safe_dump(base, sort_keys=False)


def test_equality_requires_positive_value():
    text = _doc(variable_name="x", constraint="equal", value=0, unit="clock")
    with pytest.raises(DiagnosticError, match="value"):
        parse_constraint_stream(text)


def test_unknown_constraint_op_rejected():
    text = _doc(variable_name="x", constraint="approx", value=5, unit="clock")
    with pytest.raises(DiagnosticError):
        parse_constraint_stream(text)


def test_unknown_kind_rejected():
    with pytest.raises(DiagnosticError, match="kind"):
        parse_constraint_stream(_doc(kind="mystery", variable_name="x", constraint="equal", value=1, unit="clock"))


def test_missing_api_version_rejected():
    with pytest.raises(DiagnosticError, match="apiVersion"):
        parse_constraint_stream("kind: timing\nmetadata: {name: x}\nspec: {}\n")


def test_wrong_api_version_rejected():
    text = _doc(variable_name="x", constraint="equal", value=5, unit="clock") \
        .replace("rdsl/v0", "rdsl/v9")
    with pytest.raises(DiagnosticError, match="rdsl/v9"):
        parse_constraint_stream(text)


def test_document_index_in_errors():
    good = _doc(variable_name="x", constraint="equal", value=5, unit="clock")
    bad = "apiVersion: rdsl/v0\nkind: timing equality\nmetadata: {name: y}\nspec: {}\n"
    with pytest.raises(DiagnosticError, match="document 2"):
        parse_constraint_stream(good + "---\n" + bad)


def test_equation_symbols():
    doc = TimingEquationDoc(name="E", equation="C <= A*370 + B < 500",
                            bindings={"C": "gp", "A": "n", "B": "b"})
    assert equation_symbols(doc) == {"gp", "n", "b"}


def test_equation_chained_relops():
    doc = TimingEquationDoc(name="E", equation="C <= A*370 + B < 500",
                            bindings={"C": "gp", "A": "n", "B": "b"})
    assert evaluate_timing_equation(doc, {"gp": 400, "n": 1, "b": 100})
    # 370 + 100 = 470 but gp exceeds it
    assert not evaluate_timing_equation(doc, {"gp": 480, "n": 1, "b": 100})
    # right bound: 370 + 130 = 500 is not < 500
    assert not evaluate_timing_equation(doc, {"gp": 400, "n": 1, "b": 130})


def test_equation_rejects_unbound_letter():
    text = _doc(kind="timing equation", equation="C <= D", C="gp")
    with pytest.raises(DiagnosticError, match="'D'"):
        parse_constraint_stream(text)


@given(a=st.integers(min_value=0, max_value=10),
       b=st.integers(min_value=0, max_value=500),
       c=st.integers(min_value=0, max_value=5000))
def test_equation_matches_python_semantics(a, b, c):
    doc = TimingEquationDoc(name="E", equation="C <= A*370 + B < 500",
                            bindings={"C": "gp", "A": "n", "B": "b"})
    expected = c <= a * 370 + b < 500
    assert evaluate_timing_equation(doc, {"gp": c, "n": a, "b": b}) == expected
