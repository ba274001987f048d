"""Recursive-descent parser for X-language units.

Strict entry points raise ParseError on the first fault.  The lenient
entry points recover at item/block boundaries and return every
diagnostic, which is what the evaluator's syntax-error counting and the
CLI `check` command build on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import expr as xexpr
from .diagnostics import Diagnostic, MissingEnd, ParseError, SourceSpan, error
from .lexer import Token, tokenize
from .model import (
    Connection,
    ExprText,
    FunctionBody,
    ModelUnit,
    PERMITTED_SECTIONS,
    PartDecl,
    PortDecl,
    PortDirection,
    RESERVED,
    StateDef,
    StateMachine,
    Transform,
    TypedBinding,
    UnitKind,
    validate_unit,
)

UNIT_KEYWORDS = {
    "couple": UnitKind.COUPLE,
    "discrete": UnitKind.DISCRETE,
    "continuous": UnitKind.CONTINUOUS,
    "function": UnitKind.FUNCTION,
}

SECTION_KEYWORDS = ("part", "parameter", "value", "port", "connection", "state", "equation", "body")

# Reserved words that may legitimately appear inside expression text.
EXPR_WORDS = frozenset({"true", "false", "inf", "and", "or", "not"})


@dataclass
class ParseStats:
    """Lexical section tallies used for Eq-style length normalization."""

    states_seen: int = 0
    equations_seen: int = 0


@dataclass
class LenientResult:
    unit: ModelUnit | None
    diagnostics: list[Diagnostic]
    stats: ParseStats = field(default_factory=ParseStats)

    @property
    def ok(self) -> bool:
        return self.unit is not None and not self.diagnostics


class _Parser:
    def __init__(self, tokens: list[Token], file: str, recover: bool):
        self.toks = tokens
        self.i = 0
        self.file = file
        self.recover = recover
        self.diags: list[Diagnostic] = []
        self.stats = ParseStats()
        self.section: str | None = None

    # -- cursor ---------------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        j = min(self.i + ahead, len(self.toks) - 1)
        return self.toks[j]

    def advance(self) -> Token:
        tok = self.toks[self.i]
        if tok.type != "eof":
            self.i += 1
        return tok

    def at(self, text: str) -> bool:
        return self.peek().text == text and self.peek().type in ("ident", "punct")

    def at_eof(self) -> bool:
        return self.peek().type == "eof"

    def span_of(self, tok: Token) -> SourceSpan:
        width = max(len(tok.text), 1)
        return SourceSpan(self.file, tok.line, tok.col, tok.line, tok.col + width)

    def span_between(self, start: Token, end: Token) -> SourceSpan:
        if (end.line, end.col) < (start.line, start.col):
            end = start
        return SourceSpan(self.file, start.line, start.col, end.line, end.col + max(len(end.text), 1))

    # -- errors ---------------------------------------------------------

    def fail(self, code: str, message: str, tok: Token | None = None, expected: str | None = None):
        tok = tok or self.peek()
        diag = error(code, message, self.span_of(tok))
        if self.section:
            diag.data["section"] = self.section
        cls = MissingEnd if code == "parse/missing-end" else ParseError
        raise cls(diag, expected=expected, found=tok.text or "<eof>")

    def expect_punct(self, text: str) -> Token:
        if self.at(text):
            return self.advance()
        got = self.peek()
        if got.type == "eof" and text == ";":
            self.fail("parse/missing-end", "unexpected end of input, expected `;`", got, expected=text)
        self.fail("parse/unexpected", f"expected {text!r}, found {got.text or '<eof>'!r}", got, expected=text)

    def expect_ident(self, what: str = "identifier") -> Token:
        tok = self.peek()
        if tok.type == "ident" and tok.text not in RESERVED:
            return self.advance()
        self.fail("parse/unexpected", f"expected {what}, found {tok.text or '<eof>'!r}", tok, expected=what)

    def note(self, exc: ParseError):
        self.diags.append(exc.diagnostic)

    # -- recovery sync points -------------------------------------------

    def sync_item(self):
        """Skip a broken section item: to just past `;`, or to a boundary."""
        while not self.at_eof():
            tok = self.peek()
            if tok.text == ";":
                self.advance()
                return
            if tok.text in SECTION_KEYWORDS or tok.text == "end":
                return
            self.advance()

    def sync_when_block(self):
        """Skip the rest of a `when ... end;` item (when-items never nest)."""
        while not self.at_eof():
            tok = self.advance()
            if tok.text == "end" and self.at(";"):
                self.advance()
                return

    def sync_state_block(self):
        """Recover from a broken state header: skip to the next block."""
        while not self.at_eof():
            if self._at_section_boundary():
                if self.at("end") and self.peek(1).text == ";":
                    self.advance()
                    self.advance()
                return
            tok = self.peek()
            if tok.text in ("initial", "state"):
                return
            if tok.text == "when":
                self.advance()
                self.sync_when_block()
                continue
            self.advance()

    def sync_section(self):
        """Skip an unknown section's body, respecting state/when nesting."""
        depth = 0
        while not self.at_eof():
            tok = self.peek()
            if depth == 0 and tok.text in SECTION_KEYWORDS and self.peek(1).text == ":":
                return
            if tok.text in ("when", "state"):
                depth += 1
            elif tok.text == "end":
                if depth == 0:
                    return
                if self.peek(1).text == ";":
                    self.advance()
                    self.advance()
                    depth -= 1
                    continue
            self.advance()

    # -- literals and expressions ----------------------------------------

    def parse_literal_text(self) -> str:
        tok = self.peek()
        sign = ""
        if tok.text == "-":
            self.advance()
            sign = "-"
            tok = self.peek()
        if tok.type in ("number", "string") or tok.text in ("true", "false", "inf"):
            self.advance()
            return sign + tok.text
        self.fail("parse/bad-literal", f"expected literal, found {tok.text or '<eof>'!r}", tok, expected="literal")

    def scan_expr(self, stop: tuple[str, ...], what: str, statement: bool = True) -> ExprText:
        """Collect expression tokens up to an unparenthesized stop token.

        Validates parenthesis balance and expression well-formedness
        (statement=True additionally allows `name =`, `der(x) =`, and
        `return` forms); structural keywords are rejected so a missing
        terminator fails here rather than corrupting later items.
        """
        texts: list[str] = []
        depth = 0
        start = self.peek()
        last = start
        while True:
            tok = self.peek()
            if tok.type == "eof":
                self.fail("parse/missing-end", f"unexpected end of input inside {what}", tok)
            if depth == 0 and tok.text in stop:
                break
            if tok.text == "(":
                depth += 1
            elif tok.text == ")":
                depth -= 1
                if depth < 0:
                    self.fail("parse/unbalanced-parens", "unbalanced `)`", tok)
            elif tok.type == "ident" and tok.text in RESERVED and tok.text not in EXPR_WORDS:
                self.fail(
                    "parse/unexpected",
                    f"keyword {tok.text!r} inside {what}; missing {stop[0]!r}?",
                    tok,
                    expected=stop[0],
                )
            texts.append(tok.text)
            last = self.advance()
        if depth != 0:
            self.fail("parse/unbalanced-parens", f"unbalanced `(` inside {what}", last)
        if not texts:
            self.fail("parse/empty-expr", f"empty {what}", self.peek())
        parts = tuple(texts)
        try:
            if statement:
                xexpr.names_and_calls(parts)
            else:
                xexpr.parse_expr(parts)
        except xexpr.ExprError as exc:
            self.fail("parse/bad-expression", f"malformed {what}: {exc}", start)
        return ExprText(parts, self.span_between(start, last))

    # -- unit ------------------------------------------------------------

    def parse_unit(self) -> ModelUnit:
        head = self.peek()
        if head.type != "ident" or head.text not in UNIT_KEYWORDS:
            self.fail(
                "parse/unexpected",
                f"expected a unit keyword (couple/discrete/continuous/function), found {head.text or '<eof>'!r}",
                head,
                expected="unit keyword",
            )
        self.advance()
        kind = UNIT_KEYWORDS[head.text]
        name = self.expect_ident("unit name").text

        imports: list[str] = []
        while self.at("import"):
            self.advance()
            imports.append(self.expect_ident("import name").text)
            self.expect_punct(";")

        sections: dict[str, object] = {}
        while True:
            tok = self.peek()
            if tok.type == "eof":
                self.fail("parse/missing-end", f"unit {name!r} is missing `end;`", tok)
            if tok.text == "end":
                self.advance()
                self.expect_punct(";")
                break
            if tok.type == "ident" and tok.text in SECTION_KEYWORDS:
                self.parse_section(kind, name, sections)
                continue
            if tok.type == "ident" and self.peek(1).text == ":":
                exc = self._make_error(
                    "parse/unknown-section", f"unknown section keyword {tok.text!r}", tok
                )
                if not self.recover:
                    raise exc
                self.note(exc)
                self.advance()
                self.advance()
                self.sync_section()
                continue
            self.fail(
                "parse/unexpected",
                f"expected a section, `import`, or `end;`, found {tok.text or '<eof>'!r}",
                tok,
                expected="section",
            )

        unit = ModelUnit(
            kind=kind,
            name=name,
            imports=tuple(imports),
            parameters=tuple(sections.get("parameter", ())),
            values=tuple(sections.get("value", ())),
            ports=tuple(sections.get("port", ())),
            parts=tuple(sections.get("part", ())),
            connections=tuple(sections.get("connection", ())),
            states=sections.get("state"),
            equations=tuple(sections.get("equation", ())),
            body=sections.get("body"),
            span=self.span_between(head, self.toks[max(self.i - 1, 0)]),
        )
        issues = validate_unit(unit)
        if issues:
            if not self.recover:
                raise ParseError(issues[0])
            self.diags.extend(issues)
        return unit

    def _make_error(self, code: str, message: str, tok: Token) -> ParseError:
        diag = error(code, message, self.span_of(tok))
        if self.section:
            diag.data["section"] = self.section
        return ParseError(diag)

    def parse_section(self, kind: UnitKind, unit_name: str, sections: dict):
        keyword_tok = self.advance()
        keyword = keyword_tok.text
        if self.at(":"):
            self.advance()
        else:
            exc = self._make_error(
                "parse/missing-colon", f"section {keyword!r} is missing its `:`", keyword_tok
            )
            if not self.recover:
                raise exc
            self.note(exc)
        if keyword in sections:
            exc = self._make_error("parse/duplicate-section", f"duplicate section {keyword!r}", keyword_tok)
            if not self.recover:
                raise exc
            self.note(exc)
        if keyword not in PERMITTED_SECTIONS[kind]:
            exc = self._make_error(
                "parse/section-not-permitted",
                f"section {keyword!r} is not permitted in a {kind.value} unit",
                keyword_tok,
            )
            if not self.recover:
                raise exc
            self.note(exc)

        self.section = keyword
        try:
            if keyword == "part":
                value = self.parse_part_items()
            elif keyword in ("parameter", "value"):
                value = self.parse_binding_items()
            elif keyword == "port":
                value = self.parse_port_items(kind)
            elif keyword == "connection":
                value = self.parse_connect_items()
            elif keyword == "state":
                value = self.parse_state_section(keyword_tok)
            elif keyword == "equation":
                value = self.parse_equation_items()
            else:
                value = self.parse_body(keyword_tok)
        finally:
            self.section = None
        if keyword not in sections and keyword in PERMITTED_SECTIONS[kind]:
            sections[keyword] = value

    def _at_section_boundary(self) -> bool:
        tok = self.peek()
        if tok.type == "eof" or tok.text == "end":
            return True
        return tok.type == "ident" and tok.text in SECTION_KEYWORDS and self.peek(1).text == ":"

    def _item_loop(self, parse_one):
        items = []
        while not self._at_section_boundary():
            before = self.i
            try:
                items.append(parse_one())
            except ParseError as exc:
                if not self.recover:
                    raise
                self.note(exc)
                self.sync_item()
                if self.i == before:  # guarantee progress
                    self.advance()
        return items

    def parse_part_items(self) -> list[PartDecl]:
        def one():
            cls = self.expect_ident("class name")
            inst = self.expect_ident("instance name")
            self.expect_punct(";")
            return PartDecl(cls.text, inst.text, self.span_between(cls, inst))

        return self._item_loop(one)

    def parse_binding_items(self) -> list[TypedBinding]:
        def one():
            dtype = self.expect_ident("type name")
            name = self.expect_ident("name")
            initial = None
            if self.at("="):
                self.advance()
                initial = self.parse_literal_text()
            self.expect_punct(";")
            return TypedBinding(dtype.text, name.text, initial, self.span_between(dtype, name))

        return self._item_loop(one)

    def parse_port_items(self, kind: UnitKind) -> list[PortDecl]:
        def one():
            direction = None
            first = self.peek()
            if first.text in ("input", "output"):
                self.advance()
                direction = PortDirection(first.text)
            ptype = self.expect_ident("port type")
            name = self.expect_ident("port name")
            initial = None
            if self.at("="):
                self.advance()
                initial = self.parse_literal_text()
            self.expect_punct(";")
            return PortDecl(direction, ptype.text, name.text, initial, self.span_between(first, name))

        return self._item_loop(one)

    def parse_connect_items(self) -> list[Connection]:
        def endpoint() -> tuple[str, str]:
            a = self.expect_ident("endpoint")
            if self.at("."):
                self.advance()
                b = self.expect_ident("port name")
                return a.text, b.text
            # bare name: the couple's own port
            return "", a.text

        def one():
            start = self.peek()
            if not self.at("connect"):
                self.fail("parse/unexpected", f"expected `connect`, found {start.text!r}", start, expected="connect")
            self.advance()
            self.expect_punct("(")
            src = endpoint()
            self.expect_punct(",")
            dst = endpoint()
            close = self.expect_punct(")")
            self.expect_punct(";")
            return Connection(src[0], src[1], dst[0], dst[1], self.span_between(start, close))

        return self._item_loop(one)

    def parse_equation_items(self) -> list[ExprText]:
        def one():
            self.stats.equations_seen += 1
            expr = self.scan_expr((";",), "equation")
            self.expect_punct(";")
            return expr

        return self._item_loop(one)

    def parse_body(self, section_tok: Token) -> FunctionBody:
        def one():
            expr = self.scan_expr((";",), "statement")
            self.expect_punct(";")
            return expr

        stmts = self._item_loop(one)
        return FunctionBody(tuple(stmts), self.span_of(section_tok))

    # -- state machines ---------------------------------------------------

    def parse_state_section(self, section_tok: Token) -> StateMachine | None:
        states: list[StateDef] = []
        initial: str | None = None
        while not self._at_section_boundary():
            tok = self.peek()
            if tok.text not in ("initial", "state"):
                exc = self._make_error(
                    "parse/unexpected", f"expected a state block, found {tok.text!r}", tok
                )
                if not self.recover:
                    raise exc
                self.note(exc)
                if tok.text == "when":
                    self.advance()
                    self.sync_when_block()
                else:
                    self.advance()
                continue
            try:
                is_initial, state = self.parse_state_block()
            except ParseError as exc:
                if not self.recover:
                    raise
                self.note(exc)
                self.sync_state_block()
                continue
            states.append(state)
            if is_initial and initial is None:
                initial = state.name
        if not states:
            return None
        if initial is None:
            exc = self._make_error(
                "parse/no-initial-state", "state section declares no `initial state`", section_tok
            )
            if not self.recover:
                raise exc
            self.note(exc)
            initial = states[0].name
        return StateMachine(initial, tuple(states), self.span_of(section_tok))

    def parse_state_block(self) -> tuple[bool, StateDef]:
        start = self.peek()
        is_initial = False
        if self.at("initial"):
            self.advance()
            is_initial = True
        if not self.at("state"):
            self.fail("parse/unexpected", f"expected `state`, found {self.peek().text!r}", expected="state")
        self.advance()
        name = self.expect_ident("state name").text
        self.stats.states_seen += 1

        statehold: float | None = None
        entry_actions: list[ExprText] = []
        transforms: list[Transform] = []
        saw_entry = False
        while True:
            tok = self.peek()
            if tok.type == "eof":
                self.fail("parse/missing-end", f"state {name!r} is missing `end;`", tok)
            if tok.text == "end":
                self.advance()
                self.expect_punct(";")
                break
            if not self.at("when"):
                self.fail(
                    "parse/unexpected",
                    f"expected `when` or `end;` in state {name!r}, found {tok.text!r}",
                    tok,
                    expected="when",
                )
            when_tok = self.advance()
            try:
                if self.peek().text == "entry" and self.peek(1).text == "(":
                    if saw_entry:
                        self.fail("parse/duplicate-entry", f"state {name!r} has two entry blocks", when_tok)
                    saw_entry = True
                    self.advance()
                    self.expect_punct("(")
                    self.expect_punct(")")
                    self.expect_punct("then")
                    statehold, entry_actions = self.parse_entry_actions(name)
                else:
                    condition = self.scan_expr(("transform",), "transform condition", statement=False)
                    self.expect_punct("transform")
                    target = self.expect_ident("target state").text
                    self.expect_punct("then")
                    actions = self.parse_actions(allow_statehold=False)
                    transforms.append(
                        Transform(condition, target, tuple(actions), self.span_of(when_tok))
                    )
            except ParseError as exc:
                if not self.recover:
                    raise
                # drop just this when-item and resume at its closing `end;`
                self.note(exc)
                self.sync_when_block()
        return is_initial, StateDef(
            name, statehold, tuple(entry_actions), tuple(transforms), self.span_between(start, start)
        )

    def parse_entry_actions(self, state_name: str) -> tuple[float | None, list[ExprText]]:
        statehold: float | None = None
        actions: list[ExprText] = []
        while True:
            tok = self.peek()
            if tok.type == "eof":
                self.fail("parse/missing-end", f"entry block of {state_name!r} is missing `end;`", tok)
            if tok.text == "end":
                self.advance()
                self.expect_punct(";")
                return statehold, actions
            if tok.text == "statehold":
                if statehold is not None:
                    self.fail("parse/duplicate-statehold", f"state {state_name!r} sets statehold twice", tok)
                self.advance()
                self.expect_punct("(")
                text = self.parse_literal_text()
                self.expect_punct(")")
                self.expect_punct(";")
                try:
                    value = float("inf") if text == "inf" else float(text)
                except ValueError:
                    value = -1.0
                if value < 0:
                    self.fail("parse/negative-statehold", f"statehold({text}) must be >= 0", tok)
                statehold = value
                continue
            actions.append(self.scan_expr((";",), "action"))
            self.expect_punct(";")

    def parse_actions(self, allow_statehold: bool) -> list[ExprText]:
        actions: list[ExprText] = []
        while True:
            tok = self.peek()
            if tok.type == "eof":
                self.fail("parse/missing-end", "action block is missing `end;`", tok)
            if tok.text == "end":
                self.advance()
                self.expect_punct(";")
                return actions
            if tok.text == "statehold" and not allow_statehold:
                self.fail(
                    "parse/statehold-outside-entry",
                    "statehold() is only allowed inside the entry block",
                    tok,
                )
            actions.append(self.scan_expr((";",), "action"))
            self.expect_punct(";")


# -- public API ------------------------------------------------------------


def parse_unit(source: str, file: str = "<input>") -> ModelUnit:
    """Parse exactly one unit; raises ParseError on any fault."""
    parser = _Parser(tokenize(source, file), file, recover=False)
    unit = parser.parse_unit()
    tok = parser.peek()
    if tok.type != "eof":
        parser.fail("parse/trailing-input", f"unexpected input after unit: {tok.text!r}", tok)
    return unit


def parse_units(source: str, file: str = "<input>") -> list[ModelUnit]:
    """Parse one or more units from a source file (strict)."""
    parser = _Parser(tokenize(source, file), file, recover=False)
    units = []
    while not parser.at_eof():
        units.append(parser.parse_unit())
    return units


def parse_unit_lenient(source: str, file: str = "<input>") -> LenientResult:
    """Parse one unit with recovery; never raises for in-language faults."""
    try:
        tokens = tokenize(source, file)
    except ParseError as exc:
        return LenientResult(None, [exc.diagnostic])
    parser = _Parser(tokens, file, recover=True)
    try:
        unit = parser.parse_unit()
    except ParseError as exc:
        parser.note(exc)
        unit = None
    return LenientResult(unit, parser.diags, parser.stats)


def parse_units_lenient(source: str, file: str = "<input>") -> list[LenientResult]:
    """Parse a whole file with recovery, one result per unit header found."""
    try:
        tokens = tokenize(source, file)
    except ParseError as exc:
        return [LenientResult(None, [exc.diagnostic])]
    results: list[LenientResult] = []
    pos = 0
    while True:
        parser = _Parser(tokens, file, recover=True)
        parser.i = pos
        # skip to the next unit header
        stray: list[Diagnostic] = []
        while not parser.at_eof() and parser.peek().text not in UNIT_KEYWORDS:
            tok = parser.advance()
            stray.append(
                error("parse/stray-token", f"unexpected {tok.text!r} between units", parser.span_of(tok))
            )
        if parser.at_eof():
            if stray and results:
                results[-1].diagnostics.extend(stray)
            elif stray:
                results.append(LenientResult(None, stray))
            return results
        try:
            unit = parser.parse_unit()
        except ParseError as exc:
            parser.note(exc)
            unit = None
            if parser.i == pos:
                parser.advance()
        results.append(LenientResult(unit, stray + parser.diags, parser.stats))
        pos = parser.i
