"""Flow DSL front end: lexing, parsing, validation, and stream labels.

The language declares named flows over tensor-shaped immutable streams.
A flow starts with a ``Flow <name>`` header line.  The parameter header is
the run of stream declarations immediately below it that are indented
deeper than the ``Flow`` keyword; everything after that run, until the
next ``Flow`` header, is the body (internal stream declarations plus
instantiations of sub-flows or leaf functions).

Grammar sketch::

    source  := (flow)*
    flow    := 'Flow' IDENT NEWLINE (decl | inst)*
    decl    := IDENT ':' 'stream' ('[' dim ']')* ('{' attrs '}')?
    dim     := INT | IDENT
    attrs   := IDENT '=' (IDENT | INT) (',' IDENT '=' (IDENT | INT))*
    inst    := IDENT '[' entry (',' entry)* ']'
    entry   := IDENT '=' (bound ':' bound | ref)
    bound   := INT | IDENT
    ref     := IDENT ('[' (INT | IDENT) ']')*

``%`` starts a line comment.  Newlines are insignificant inside brackets
and braces, so instantiations may span lines.  Streams are immutable
infinite lists; each element has a single definition, which is checked
during elaboration rather than here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .diagnostics import Diagnostic, DiagnosticError, error_at, fail

DIRECTIONS = ("in", "out", "internal")

# ---------------------------------------------------------------------------
# AST


@dataclass
class StreamDecl:
    """One stream declaration, either in a parameter header or a flow body."""

    name: str
    shape: list[int | str]
    direction: str
    labels: list[str] = field(default_factory=list)
    attrs: dict[str, str] = field(default_factory=dict)
    line: int = 0
    column: int = 0

    @property
    def rank(self) -> int:
        return len(self.shape)


@dataclass
class StreamRef:
    """A reference ``stream[idx]...`` inside an instantiation binding."""

    stream: str
    indices: list[int | str]
    line: int = 0
    column: int = 0


@dataclass
class IteratorRange:
    """``var = lower:upper`` inside an instantiation, bounds inclusive."""

    var: str
    lower: int | str
    upper: int | str
    line: int = 0
    column: int = 0


@dataclass
class Binding:
    """``formal = actual`` inside an instantiation."""

    formal: str
    actual: StreamRef
    line: int = 0
    column: int = 0


@dataclass
class Instantiation:
    callee: str
    iterators: list[IteratorRange]
    bindings: list[Binding]
    line: int = 0
    column: int = 0


@dataclass
class FlowDef:
    name: str
    params: list[StreamDecl]
    internals: list[StreamDecl]
    instantiations: list[Instantiation]
    line: int = 0
    column: int = 0

    def streams(self) -> dict[str, StreamDecl]:
        out: dict[str, StreamDecl] = {}
        for decl in self.params + self.internals:
            out[decl.name] = decl
        return out


@dataclass
class SymbolTable:
    """Deployment-supplied values for symbolic constants like shape sizes."""

    entries: dict[str, int] = field(default_factory=dict)

    def resolve(self, value: int | str) -> int | None:
        if isinstance(value, int):
            return value
        return self.entries.get(value)


# ---------------------------------------------------------------------------
# Lexer

_SYMBOLS = {":": "colon", "[": "lbracket", "]": "rbracket",
            "{": "lbrace", "}": "rbrace", ",": "comma", "=": "equals"}
_KEYWORDS = {"Flow": "flow", "stream": "stream"}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    column: int


def _lex(source: str) -> list[Token]:
    tokens: list[Token] = []
    depth = 0
    for lineno, raw in enumerate(source.splitlines(), start=1):
        # comments run to end of line and may follow any content
        cut = raw.find("%")
        line = raw if cut < 0 else raw[:cut]
        col = 0
        emitted = False
        while col < len(line):
            ch = line[col]
            if ch in " \t":
                col += 1
                continue
            start = col + 1
            if ch in _SYMBOLS:
                tokens.append(Token(_SYMBOLS[ch], ch, lineno, start))
                if ch in "[{":
                    depth += 1
                elif ch in "]}":
                    depth = max(0, depth - 1)
                col += 1
            elif ch.isdigit():
                end = col
                while end < len(line) and line[end].isdigit():
                    end += 1
                tokens.append(Token("int", line[col:end], lineno, start))
                col = end
            elif ch.isalpha() or ch == "_":
                end = col
                while end < len(line) and (line[end].isalnum() or line[end] == "_"):
                    end += 1
                word = line[col:end]
                tokens.append(Token(_KEYWORDS.get(word, "ident"), word, lineno, start))
                col = end
            else:
                raise fail(lineno, start, f"unexpected character {ch!r}")
            emitted = True
        # newlines only separate statements outside brackets
        if emitted and depth == 0:
            tokens.append(Token("newline", "", lineno, len(line) + 1))
    tokens.append(Token("eof", "", len(source.splitlines()) + 1, 1))
    return tokens


# ---------------------------------------------------------------------------
# Parser


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0
        self.diagnostics: list[Diagnostic] = []

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def take(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def expect(self, kind: str, what: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            raise fail(tok.line, tok.column, f"expected {what}, found {tok.text or tok.kind!r}")
        return self.take()

    def skip_newlines(self) -> None:
        while self.peek().kind == "newline":
            self.take()

    def parse_source(self) -> list[FlowDef]:
        defs: list[FlowDef] = []
        seen: dict[str, int] = {}
        self.skip_newlines()
        while self.peek().kind != "eof":
            tok = self.peek()
            if tok.kind != "flow":
                raise fail(tok.line, tok.column,
                           f"expected 'Flow' header, found {tok.text or tok.kind!r}")
            flow = self.parse_flow()
            if flow.name in seen:
                raise fail(flow.line, flow.column,
                           f"duplicate flow name {flow.name!r} (first defined on line {seen[flow.name]})")
            seen[flow.name] = flow.line
            defs.append(flow)
            self.skip_newlines()
        return defs

    def parse_flow(self) -> FlowDef:
        kw = self.expect("flow", "'Flow'")
        name = self.expect("ident", "flow name")
        self.expect("newline", "end of header line")
        flow = FlowDef(name=name.text, params=[], internals=[],
                       instantiations=[], line=kw.line, column=kw.column)
        in_header = True
        while True:
            self.skip_newlines()
            tok = self.peek()
            if tok.kind in ("eof", "flow"):
                break
            if tok.kind != "ident":
                raise fail(tok.line, tok.column,
                           f"expected declaration or instantiation, found {tok.text or tok.kind!r}")
            after = self.peek(1)
            if after.kind == "colon":
                decl = self.parse_decl()
                # the parameter header is the indented run right under the
                # Flow line; a dedent or an instantiation ends it for good
                if in_header and decl.column > kw.column:
                    decl.direction = decl.attrs.pop("type", "out")
                    flow.params.append(decl)
                else:
                    in_header = False
                    decl.direction = decl.attrs.pop("type", "internal")
                    flow.internals.append(decl)
            elif after.kind == "lbracket":
                in_header = False
                flow.instantiations.append(self.parse_instantiation())
            else:
                raise fail(after.line, after.column,
                           f"expected ':' or '[' after {tok.text!r}")
        return flow

    def parse_decl(self) -> StreamDecl:
        name = self.take()
        self.expect("colon", "':'")
        self.expect("stream", "'stream'")
        shape: list[int | str] = []
        while self.peek().kind == "lbracket":
            self.take()
            dim = self.parse_scalar("shape dimension")
            self.expect("rbracket", "']' closing shape bracket")
            shape.append(dim)
        decl = StreamDecl(name=name.text, shape=shape, direction="",
                          line=name.line, column=name.column)
        if self.peek().kind == "lbrace":
            self.take()
            while True:
                key = self.expect("ident", "attribute name")
                self.expect("equals", "'='")
                val = self.peek()
                if val.kind not in ("ident", "int", "stream"):
                    raise fail(val.line, val.column, "expected attribute value")
                self.take()
                if key.text == "label":
                    decl.labels.append(val.text)
                else:
                    decl.attrs[key.text] = val.text
                if self.peek().kind == "comma":
                    self.take()
                    continue
                break
            self.expect("rbrace", "'}' closing attribute block")
        if self.peek().kind not in ("newline", "eof"):
            tok = self.peek()
            raise fail(tok.line, tok.column, "expected end of declaration")
        return decl

    def parse_scalar(self, what: str) -> int | str:
        tok = self.peek()
        if tok.kind == "int":
            self.take()
            return int(tok.text)
        if tok.kind == "ident":
            self.take()
            return tok.text
        raise fail(tok.line, tok.column, f"expected {what}")

    def parse_instantiation(self) -> Instantiation:
        callee = self.take()
        self.expect("lbracket", "'['")
        inst = Instantiation(callee=callee.text, iterators=[], bindings=[],
                             line=callee.line, column=callee.column)
        if self.peek().kind == "rbracket":
            self.take()
            return inst
        while True:
            name = self.expect("ident", "iterator or formal name")
            self.expect("equals", "'='")
            value = self.parse_scalar("iterator bound or stream name")
            if self.peek().kind == "colon":
                self.take()
                upper = self.parse_scalar("iterator upper bound")
                inst.iterators.append(IteratorRange(
                    var=name.text, lower=value, upper=upper,
                    line=name.line, column=name.column))
            else:
                if isinstance(value, int):
                    raise fail(name.line, name.column,
                               f"binding {name.text!r} must name a stream")
                ref = StreamRef(stream=value, indices=[],
                                line=name.line, column=name.column)
                while self.peek().kind == "lbracket":
                    self.take()
                    ref.indices.append(self.parse_scalar("index expression"))
                    self.expect("rbracket", "']' closing index bracket")
                inst.bindings.append(Binding(formal=name.text, actual=ref,
                                             line=name.line, column=name.column))
            if self.peek().kind == "comma":
                self.take()
                continue
            break
        self.expect("rbracket", "']' closing instantiation")
        return inst


def parse_flow_source(text: str) -> list[FlowDef]:
    """Parse flow DSL source into flow definitions.

    Raises DiagnosticError with line/column positions on any syntax error;
    no partial AST is returned.
    """
    return _Parser(_lex(text)).parse_source()


# ---------------------------------------------------------------------------
# Validation


def _resolve_positive(value: int | str, symbols: SymbolTable, line: int,
                      column: int, what: str, diags: list[Diagnostic]) -> int | None:
    resolved = symbols.resolve(value)
    if resolved is None:
        diags.append(error_at(line, column, f"{what} {value!r} is not a known symbol"))
        return None
    if resolved <= 0:
        diags.append(error_at(line, column, f"{what} {value!r} = {resolved} must be positive"))
        return None
    return resolved


def validate_flows(defs: list[FlowDef], symbols: SymbolTable) -> list[FlowDef]:
    """Cross-check every flow: reference resolution, shape arities, iterator
    ranges, and direction placement.  Returns the defs unchanged on success,
    raises DiagnosticError listing every problem otherwise.
    """
    diags: list[Diagnostic] = []
    by_name = {f.name: f for f in defs}

    for flow in defs:
        streams: dict[str, StreamDecl] = {}
        for header, decl in [(True, d) for d in flow.params] + [(False, d) for d in flow.internals]:
            if decl.name in streams:
                diags.append(error_at(decl.line, decl.column,
                                      f"stream {decl.name!r} declared twice in flow {flow.name!r}"))
                continue
            streams[decl.name] = decl
            if decl.direction not in DIRECTIONS:
                diags.append(error_at(decl.line, decl.column,
                                      f"unknown stream direction {decl.direction!r}"))
            elif header and decl.direction == "internal":
                diags.append(error_at(decl.line, decl.column,
                                      f"stream {decl.name!r}: direction 'internal' is not allowed in a parameter header"))
            elif not header and decl.direction in ("in", "out"):
                diags.append(error_at(decl.line, decl.column,
                                      f"stream {decl.name!r}: direction {decl.direction!r} is only allowed in a parameter header"))
            for dim in decl.shape:
                _resolve_positive(dim, symbols, decl.line, decl.column,
                                  f"shape dimension of {decl.name!r}", diags)

        for inst in flow.instantiations:
            iter_vars: set[str] = set()
            for it in inst.iterators:
                if it.var in iter_vars:
                    diags.append(error_at(it.line, it.column,
                                          f"iterator {it.var!r} declared twice in {inst.callee!r}"))
                iter_vars.add(it.var)
                lo = _resolve_positive(it.lower, symbols, it.line, it.column,
                                       f"lower bound of iterator {it.var!r}", diags)
                hi = _resolve_positive(it.upper, symbols, it.line, it.column,
                                       f"upper bound of iterator {it.var!r}", diags)
                if lo is not None and hi is not None and lo > hi:
                    diags.append(error_at(it.line, it.column,
                                          f"iterator {it.var!r} has non-positive range {lo}:{hi}"))

            formals: set[str] = set()
            callee = by_name.get(inst.callee)
            for b in inst.bindings:
                if b.formal in formals:
                    diags.append(error_at(b.line, b.column,
                                          f"formal {b.formal!r} bound twice in {inst.callee!r}"))
                formals.add(b.formal)
                if callee is not None:
                    params = {d.name for d in callee.params}
                    if b.formal not in params:
                        diags.append(error_at(b.line, b.column,
                                              f"{inst.callee!r} has no parameter {b.formal!r}"))
                decl = streams.get(b.actual.stream)
                if decl is None:
                    diags.append(error_at(b.actual.line, b.actual.column,
                                          f"unresolved stream {b.actual.stream!r} in flow {flow.name!r}"))
                    continue
                if len(b.actual.indices) > decl.rank:
                    diags.append(error_at(b.actual.line, b.actual.column,
                                          f"stream {decl.name!r} has rank {decl.rank} but is indexed "
                                          f"{len(b.actual.indices)} times"))
                # indices admit iterator variables and integer constants only
                for idx in b.actual.indices:
                    if isinstance(idx, str) and idx not in iter_vars:
                        diags.append(error_at(b.actual.line, b.actual.column,
                                              f"index {idx!r} is not an iterator of this "
                                              f"instantiation"))

    if diags:
        raise DiagnosticError(diags)
    return defs


def collect_labels(defs: list[FlowDef]) -> dict[str, tuple[str, str]]:
    """Map every stream label to its (flow, stream) pair.

    Labels tag streams that physical-port timing constraints address, so a
    duplicate label is an error.
    """
    labels: dict[str, tuple[str, str]] = {}
    diags: list[Diagnostic] = []
    for flow in defs:
        for decl in flow.params + flow.internals:
            for label in decl.labels:
                if label in labels:
                    other = labels[label]
                    diags.append(error_at(decl.line, decl.column,
                                          f"label {label!r} already tags stream "
                                          f"{other[1]!r} in flow {other[0]!r}"))
                else:
                    labels[label] = (flow.name, decl.name)
    if diags:
        raise DiagnosticError(diags)
    return labels


# ---------------------------------------------------------------------------
# Pretty printer


def _render_decl(decl: StreamDecl, indent: str, header: bool) -> str:
    dims = "".join(f"[{d}]" for d in decl.shape)
    attrs: list[str] = []
    if header:
        if decl.direction != "out":
            attrs.append(f"type = {decl.direction}")
    elif decl.direction != "internal":
        attrs.append(f"type = {decl.direction}")
    attrs.extend(f"label = {label}" for label in decl.labels)
    attrs.extend(f"{k} = {v}" for k, v in decl.attrs.items())
    suffix = "{" + ", ".join(attrs) + "}" if attrs else ""
    return f"{indent}{decl.name} : stream{dims}{suffix}"


def pretty_print(defs: list[FlowDef]) -> str:
    """Render definitions back to parseable source in a canonical layout."""
    lines: list[str] = []
    for flow in defs:
        if lines:
            lines.append("")
        lines.append(f"Flow {flow.name}")
        for decl in flow.params:
            lines.append(_render_decl(decl, "  ", header=True))
        for decl in flow.internals:
            lines.append(_render_decl(decl, "", header=False))
        for inst in flow.instantiations:
            entries = [f"{it.var} = {it.lower}:{it.upper}" for it in inst.iterators]
            for b in inst.bindings:
                idx = "".join(f"[{i}]" for i in b.actual.indices)
                entries.append(f"{b.formal} = {b.actual.stream}{idx}")
            lines.append(f"{inst.callee}[" + ", ".join(entries) + "]")
    return "\n".join(lines) + "\n"
