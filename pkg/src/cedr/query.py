"""The declarative query language: lexer, parser, and plan compiler.

A query names a derived event, gives the WHEN-clause pattern expression
over named event types, optionally constrains attribute values in a WHERE
clause, optionally projects payload attributes with OUTPUT, and may end
with occurrence-time (``@``) and valid-time (``#``) slices.  Example::

    EVENT Example
    WHEN UNLESS(SEQUENCE(INSTALL x, SHUTDOWN AS y, 12 hours),
                RESTART AS z, 5 minutes)
    WHERE {x.Machine_Id = y.Machine_Id} AND
          {x.Machine_Id = z.Machine_Id}

Keywords are case-insensitive; identifiers are not.  Durations are written
as bare ticks or with ``hours``/``minutes``/``ticks`` units and are
normalized by the compiler at a configurable ticks-per-minute.  Parsing is
total: any input yields either an AST or diagnostics with source spans,
never an exception.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from .patterns import (
    AllOp,
    AnyOp,
    AtLeastOp,
    AtMostOp,
    AttrRef,
    CancelWhenOp,
    Leaf,
    NotOp,
    Predicate,
    ProjectOp,
    SequenceOp,
    SliceOp,
    UnboundVariable,
    UnlessOp,
    all_vars,
    inject_predicates,
)
from .temporal import INF, Scalar, Time

OPERATOR_NAMES = ("SEQUENCE", "UNLESS", "NOT", "CANCEL-WHEN",
                  "ALL", "ANY", "ATLEAST", "ATMOST")
KEYWORDS = ("EVENT", "WHEN", "WHERE", "OUTPUT", "AS", "AND")
UNITS = {"hour": "hour", "hours": "hour", "minute": "minute",
         "minutes": "minute", "tick": "tick", "ticks": "tick"}


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    line: int
    col: int
    length: int
    message: str
    hint: str | None = None

    def render(self) -> str:
        text = f"{self.severity}: {self.line}:{self.col}: {self.message}"
        if self.hint:
            text += f" ({self.hint})"
        return text


# --- AST ---------------------------------------------------------------------

@dataclass(frozen=True)
class Duration:
    value: int
    unit: str  # "tick" | "minute" | "hour"


@dataclass(frozen=True)
class Binding:
    type_name: str
    var: str | None = None


@dataclass(frozen=True)
class SequenceExpr:
    children: tuple
    scope: Duration


@dataclass(frozen=True)
class AtLeastExpr:
    n: int
    children: tuple
    scope: Duration


@dataclass(frozen=True)
class AtMostExpr:
    n: int
    children: tuple
    scope: Duration


@dataclass(frozen=True)
class AllExpr:
    children: tuple
    scope: Duration


@dataclass(frozen=True)
class AnyExpr:
    children: tuple


@dataclass(frozen=True)
class UnlessExpr:
    body: object
    blocker: object
    scope: Duration


@dataclass(frozen=True)
class UnlessPrimeExpr:
    body: object
    blocker: object
    n: int
    scope: Duration


@dataclass(frozen=True)
class NotExpr:
    blocker: object
    seq: SequenceExpr


@dataclass(frozen=True)
class CancelWhenExpr:
    body: object
    blocker: object


@dataclass(frozen=True)
class AttrOperand:
    var: str
    attr: str


@dataclass(frozen=True)
class CompareItem:
    lhs: AttrOperand
    op: str
    rhs: AttrOperand | Scalar


@dataclass(frozen=True)
class CorrKeyItem:
    attr: str
    kind: str  # "equal" | "unique"


@dataclass(frozen=True)
class AttrEqualItem:
    attr: str
    value: Scalar


@dataclass(frozen=True)
class SliceSpec:
    occ: tuple[Time, Time] | None = None    # closed bounds as written
    valid: tuple[Time, Time] | None = None


@dataclass(frozen=True)
class QueryAst:
    name: str
    when: object
    where: tuple = ()
    output: tuple[str, ...] | None = None
    slices: SliceSpec | None = None


@dataclass
class ParseResult:
    ast: QueryAst | None
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.ast is not None and not any(
            d.severity == "error" for d in self.diagnostics)


@dataclass
class CompileResult:
    plan: object | None
    diagnostics: list[Diagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.plan is not None and not any(
            d.severity == "error" for d in self.diagnostics)


# --- lexer -------------------------------------------------------------------

@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+)
  | (?P<number>\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*(?:-[A-Za-z_][A-Za-z0-9_]*)*)
  | (?P<string>'[^'\n]*')
  | (?P<badstring>'[^'\n]*)
  | (?P<op><=|>=|!=|<>|=|<|>)
  | (?P<punct>[(){}\[\],.@\#])
""", re.VERBOSE)


def _lex(source: str) -> tuple[list[_Token], list[Diagnostic]]:
    tokens: list[_Token] = []
    diagnostics: list[Diagnostic] = []
    line, col, pos = 1, 1, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            ch = source[pos]
            diagnostics.append(Diagnostic("error", line, col, 1,
                                          f"unexpected character {ch!r}"))
            pos += 1
            col += 1
            continue
        text = m.group(0)
        kind = m.lastgroup
        if kind == "badstring":
            diagnostics.append(Diagnostic("error", line, col, len(text),
                                          "unterminated string literal"))
        elif kind != "ws":
            tokens.append(_Token(kind, text, line, col))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            col = len(text) - text.rfind("\n")
        else:
            col += len(text)
        pos = m.end()
    tokens.append(_Token("eof", "", line, col))
    return tokens, diagnostics


# --- parser ------------------------------------------------------------------

class _ParseAbort(Exception):
    pass


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0
        self.diagnostics: list[Diagnostic] = []

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def error(self, tok: _Token, message: str, hint: str | None = None):
        self.diagnostics.append(Diagnostic(
            "error", tok.line, tok.col, max(len(tok.text), 1), message, hint))
        raise _ParseAbort

    def warn(self, tok: _Token, message: str, hint: str | None = None):
        self.diagnostics.append(Diagnostic(
            "warning", tok.line, tok.col, max(len(tok.text), 1), message, hint))

    def at_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "name" and tok.text.upper() == word

    def expect_keyword(self, word: str) -> _Token:
        if not self.at_keyword(word):
            self.error(self.peek(), f"expected {word}")
        return self.advance()

    def expect(self, kind: str, text: str | None = None, what: str = "") -> _Token:
        tok = self.peek()
        if tok.kind != kind or (text is not None and tok.text != text):
            self.error(tok, f"expected {what or text or kind}")
        return self.advance()

    def expect_name(self, what: str = "identifier") -> _Token:
        tok = self.peek()
        if tok.kind != "name":
            self.error(tok, f"expected {what}")
        if tok.text.upper() in KEYWORDS or tok.text.upper() in OPERATOR_NAMES:
            self.error(tok, f"expected {what}, found keyword {tok.text!r}")
        return self.advance()

    # query := EVENT ident WHEN expr [WHERE predconj] [OUTPUT projlist] [slices]
    def query(self) -> QueryAst:
        self.expect_keyword("EVENT")
        name = self.expect_name("query name").text
        self.expect_keyword("WHEN")
        when = self.expr()
        where: tuple = ()
        output = None
        slices = None
        if self.at_keyword("WHERE"):
            self.advance()
            where = self.predconj()
        if self.at_keyword("OUTPUT"):
            self.advance()
            output = self.projlist()
        if self.peek().text in ("@", "#"):
            slices = self.slices()
        tok = self.peek()
        if tok.kind != "eof":
            self.error(tok, f"unexpected trailing input {tok.text!r}")
        self._check_bindings(when)
        return QueryAst(name, when, where, output, slices)

    def _check_bindings(self, when) -> None:
        names: list[str] = []

        def walk(node):
            if isinstance(node, Binding):
                if node.var:
                    names.append(node.var)
                return
            for attr in ("body", "blocker", "seq"):
                child = getattr(node, attr, None)
                if child is not None:
                    walk(child)
            for child in getattr(node, "children", ()):
                walk(child)

        walk(when)
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            tok = self.tokens[0]
            self.error(tok, f"duplicate binding name(s): {', '.join(sorted(dupes))}")

    def expr(self):
        tok = self.peek()
        if tok.kind != "name":
            self.error(tok, "expected an event type or operator")
        upper = tok.text.upper()
        if upper in OPERATOR_NAMES:
            return self.opcall()
        return self.binder()

    def binder(self) -> Binding:
        type_tok = self.expect_name("event type")
        var = None
        if self.at_keyword("AS"):
            self.advance()
            var = self.expect_name("binding name").text
        elif self.peek().kind == "name" and \
                self.peek().text.upper() not in KEYWORDS and \
                self.peek().text.upper() not in OPERATOR_NAMES:
            var = self.advance().text
        return Binding(type_tok.text, var)

    def opcall(self):
        op_tok = self.advance()
        op = op_tok.text.upper()
        self.expect("punct", "(", "'('")
        args: list = []
        arg_tokens: list[_Token] = []
        if self.peek().text != ")":
            while True:
                arg_tokens.append(self.peek())
                args.append(self.argument())
                if self.peek().text == ",":
                    self.advance()
                    continue
                break
        self.expect("punct", ")", "')'")
        return self.shape(op, op_tok, args, arg_tokens)

    def argument(self):
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            nxt = self.peek()
            if nxt.kind == "name" and nxt.text.lower() in UNITS:
                self.advance()
                return Duration(int(tok.text), UNITS[nxt.text.lower()])
            return Duration(int(tok.text), "tick")
        return self.expr()

    def shape(self, op: str, op_tok: _Token, args: list, arg_tokens: list):
        def need_scope(arg, tok) -> Duration:
            if not isinstance(arg, Duration):
                self.error(tok, f"{op} requires a scope as its last argument")
            if arg.value <= 0:
                self.error(tok, f"{op} scope must be positive")
            return arg

        def need_count(arg, tok) -> int:
            if not isinstance(arg, Duration) or arg.unit != "tick":
                self.error(tok, f"{op} requires a plain count here")
            return arg.value

        def need_exprs(sub, toks):
            for a, t in zip(sub, toks):
                if isinstance(a, Duration):
                    self.error(t, f"{op} expected an event expression here")
            return tuple(sub)

        if op == "SEQUENCE":
            if len(args) < 3:
                self.error(op_tok, "SEQUENCE needs at least two operands and a scope")
            return SequenceExpr(need_exprs(args[:-1], arg_tokens[:-1]),
                                need_scope(args[-1], arg_tokens[-1]))
        if op == "ATLEAST":
            if len(args) < 3:
                self.error(op_tok, "ATLEAST needs a count, operands, and a scope")
            n = need_count(args[0], arg_tokens[0])
            children = need_exprs(args[1:-1], arg_tokens[1:-1])
            scope = need_scope(args[-1], arg_tokens[-1])
            if not 1 <= n <= len(children):
                self.error(op_tok, f"ATLEAST count {n} outside 1..{len(children)}")
            return AtLeastExpr(n, children, scope)
        if op == "ATMOST":
            if len(args) < 3:
                self.error(op_tok, "ATMOST needs a count, operands, and a scope")
            n = need_count(args[0], arg_tokens[0])
            children = need_exprs(args[1:-1], arg_tokens[1:-1])
            return AtMostExpr(n, children, need_scope(args[-1], arg_tokens[-1]))
        if op == "ALL":
            if len(args) < 2:
                self.error(op_tok, "ALL needs operands and a scope")
            return AllExpr(need_exprs(args[:-1], arg_tokens[:-1]),
                           need_scope(args[-1], arg_tokens[-1]))
        if op == "ANY":
            if not args:
                self.error(op_tok, "ANY needs at least one operand")
            return AnyExpr(need_exprs(args, arg_tokens))
        if op == "UNLESS":
            if len(args) == 3:
                body, blocker = need_exprs(args[:2], arg_tokens[:2])
                return UnlessExpr(body, blocker, need_scope(args[2], arg_tokens[2]))
            if len(args) == 4:
                body, blocker = need_exprs(args[:2], arg_tokens[:2])
                n = need_count(args[2], arg_tokens[2])
                return UnlessPrimeExpr(body, blocker, n,
                                       need_scope(args[3], arg_tokens[3]))
            self.error(op_tok, "UNLESS takes (body, blocker, scope) or "
                               "(body, blocker, n, scope)")
        if op == "NOT":
            if len(args) != 2:
                self.error(op_tok, "NOT takes (event, SEQUENCE(...))")
            blocker = need_exprs(args[:1], arg_tokens[:1])[0]
            if not isinstance(args[1], SequenceExpr):
                self.error(arg_tokens[1], "the scope of NOT must be a SEQUENCE")
            return NotExpr(blocker, args[1])
        if op == "CANCEL-WHEN":
            if len(args) != 2:
                self.error(op_tok, "CANCEL-WHEN takes (body, canceller)")
            body, blocker = need_exprs(args, arg_tokens)
            return CancelWhenExpr(body, blocker)
        self.error(op_tok, f"unknown operator {op_tok.text}")

    def predconj(self) -> tuple:
        items = [self.predterm()]
        while self.at_keyword("AND"):
            self.advance()
            items.append(self.predterm())
        return tuple(items)

    def predterm(self):
        tok = self.peek()
        if tok.text == "{":
            self.advance()
            lhs = self.operand()
            if not isinstance(lhs, AttrOperand):
                self.error(tok, "the left side of a comparison must be var.attr")
            op_tok = self.peek()
            if op_tok.kind != "op":
                self.error(op_tok, "expected a comparison operator")
            self.advance()
            op = {"<>": "!="}.get(op_tok.text, op_tok.text)
            rhs = self.operand()
            self.expect("punct", "}", "'}'")
            return CompareItem(lhs, op, rhs)
        if tok.kind == "name" and tok.text.lower() == "correlationkey":
            self.advance()
            self.expect("punct", "(", "'('")
            attr = self.expect_name("attribute name").text
            self.expect("punct", ",", "','")
            kind_tok = self.expect_name("EQUAL or UNIQUE")
            kind = kind_tok.text.lower()
            if kind not in ("equal", "unique"):
                self.error(kind_tok, "CorrelationKey kind must be EQUAL or UNIQUE")
            self.expect("punct", ")", "')'")
            return CorrKeyItem(attr, kind)
        if tok.text == "[":
            self.advance()
            attr = self.expect_name("attribute name").text
            eq_tok = self.peek()
            if not (eq_tok.kind == "name" and eq_tok.text.lower() == "equal"):
                self.error(eq_tok, "expected Equal")
            self.advance()
            value = self.literal()
            self.expect("punct", "]", "']'")
            return AttrEqualItem(attr, value)
        self.error(tok, "expected a WHERE term: {...}, CorrelationKey(...), or [...]")

    def operand(self):
        tok = self.peek()
        if tok.kind == "name":
            var = self.expect_name("variable").text
            self.expect("punct", ".", "'.'")
            attr = self.expect_name("attribute").text
            return AttrOperand(var, attr)
        return self.literal()

    def literal(self) -> Scalar:
        tok = self.peek()
        if tok.kind == "string":
            self.advance()
            return tok.text[1:-1]
        if tok.kind == "number":
            self.advance()
            return int(tok.text)
        self.error(tok, "expected a literal")

    def projlist(self) -> tuple[str, ...]:
        names = [self.expect_name("attribute name").text]
        while self.peek().text == ",":
            self.advance()
            names.append(self.expect_name("attribute name").text)
        return tuple(names)

    def slices(self) -> SliceSpec:
        occ = valid = None
        while self.peek().text in ("@", "#"):
            marker = self.advance().text
            self.expect("punct", "[", "'['")
            lo = self.bound()
            self.expect("punct", ",", "','")
            hi = self.bound()
            self.expect("punct", "]", "']'")
            if marker == "@":
                occ = (lo, hi)
            else:
                valid = (lo, hi)
        return SliceSpec(occ, valid)

    def bound(self) -> Time:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return int(tok.text)
        if tok.kind == "name" and tok.text.lower() == "inf":
            self.advance()
            return INF
        self.error(tok, "expected a tick count or inf")


def parse(source: str) -> ParseResult:
    """Parse query text; never raises on any input."""
    if not isinstance(source, str):
        source = str(source)
    tokens, diagnostics = _lex(source)
    if any(d.severity == "error" for d in diagnostics):
        return ParseResult(None, diagnostics)
    parser = _Parser(tokens)
    parser.diagnostics = diagnostics
    try:
        ast = parser.query()
    except _ParseAbort:
        return ParseResult(None, parser.diagnostics)
    except RecursionError:
        diagnostics.append(Diagnostic("error", 1, 1, 1, "expression nested too deeply"))
        return ParseResult(None, diagnostics)
    return ParseResult(ast, parser.diagnostics)


# --- pretty printer ----------------------------------------------------------

def _fmt_duration(d: Duration) -> str:
    unit = d.unit if d.value == 1 else d.unit + "s"
    return f"{d.value} {unit}"


def _fmt_expr(node) -> str:
    if isinstance(node, Binding):
        return f"{node.type_name} AS {node.var}" if node.var else node.type_name
    if isinstance(node, SequenceExpr):
        inner = ", ".join(_fmt_expr(c) for c in node.children)
        return f"SEQUENCE({inner}, {_fmt_duration(node.scope)})"
    if isinstance(node, AtLeastExpr):
        inner = ", ".join(_fmt_expr(c) for c in node.children)
        return f"ATLEAST({node.n}, {inner}, {_fmt_duration(node.scope)})"
    if isinstance(node, AtMostExpr):
        inner = ", ".join(_fmt_expr(c) for c in node.children)
        return f"ATMOST({node.n}, {inner}, {_fmt_duration(node.scope)})"
    if isinstance(node, AllExpr):
        inner = ", ".join(_fmt_expr(c) for c in node.children)
        return f"ALL({inner}, {_fmt_duration(node.scope)})"
    if isinstance(node, AnyExpr):
        return f"ANY({', '.join(_fmt_expr(c) for c in node.children)})"
    if isinstance(node, UnlessExpr):
        return (f"UNLESS({_fmt_expr(node.body)}, {_fmt_expr(node.blocker)}, "
                f"{_fmt_duration(node.scope)})")
    if isinstance(node, UnlessPrimeExpr):
        return (f"UNLESS({_fmt_expr(node.body)}, {_fmt_expr(node.blocker)}, "
                f"{node.n}, {_fmt_duration(node.scope)})")
    if isinstance(node, NotExpr):
        return f"NOT({_fmt_expr(node.blocker)}, {_fmt_expr(node.seq)})"
    if isinstance(node, CancelWhenExpr):
        return f"CANCEL-WHEN({_fmt_expr(node.body)}, {_fmt_expr(node.blocker)})"
    raise TypeError(f"not an expression node: {node!r}")


def _fmt_literal(value: Scalar) -> str:
    return f"'{value}'" if isinstance(value, str) else str(value)


def _fmt_bound(t: Time) -> str:
    return "inf" if t == INF else str(int(t))


def format_query(ast: QueryAst) -> str:
    lines = [f"EVENT {ast.name}", f"WHEN {_fmt_expr(ast.when)}"]
    if ast.where:
        terms = []
        for item in ast.where:
            if isinstance(item, CompareItem):
                rhs = (f"{item.rhs.var}.{item.rhs.attr}"
                       if isinstance(item.rhs, AttrOperand)
                       else _fmt_literal(item.rhs))
                terms.append(f"{{{item.lhs.var}.{item.lhs.attr} {item.op} {rhs}}}")
            elif isinstance(item, CorrKeyItem):
                terms.append(f"CorrelationKey({item.attr}, {item.kind.upper()})")
            else:
                terms.append(f"[{item.attr} Equal {_fmt_literal(item.value)}]")
        lines.append("WHERE " + " AND ".join(terms))
    if ast.output is not None:
        lines.append("OUTPUT " + ", ".join(ast.output))
    if ast.slices is not None:
        parts = []
        if ast.slices.occ:
            parts.append(f"@ [{_fmt_bound(ast.slices.occ[0])}, "
                         f"{_fmt_bound(ast.slices.occ[1])}]")
        if ast.slices.valid:
            parts.append(f"# [{_fmt_bound(ast.slices.valid[0])}, "
                         f"{_fmt_bound(ast.slices.valid[1])}]")
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


# --- compiler ----------------------------------------------------------------

def _ticks(d: Duration, ticks_per_minute: int) -> int:
    if d.unit == "hour":
        return d.value * 60 * ticks_per_minute
    if d.unit == "minute":
        return d.value * ticks_per_minute
    return d.value


def compile_query(ast: QueryAst, ticks_per_minute: int = 1) -> CompileResult:
    """Lower an AST to an executable plan with injected predicates."""
    diagnostics: list[Diagnostic] = []

    def fail(message: str, hint: str | None = None):
        diagnostics.append(Diagnostic("error", 1, 1, 1, message, hint))
        raise _ParseAbort

    def lower(node):
        if isinstance(node, Binding):
            return Leaf(node.type_name, node.var)
        if isinstance(node, SequenceExpr):
            return SequenceOp(tuple(lower(c) for c in node.children),
                              _ticks(node.scope, ticks_per_minute))
        if isinstance(node, AtLeastExpr):
            return AtLeastOp(node.n, tuple(lower(c) for c in node.children),
                             _ticks(node.scope, ticks_per_minute))
        if isinstance(node, AtMostExpr):
            return AtMostOp(node.n, tuple(lower(c) for c in node.children),
                            _ticks(node.scope, ticks_per_minute))
        if isinstance(node, AllExpr):
            return AllOp(tuple(lower(c) for c in node.children),
                         _ticks(node.scope, ticks_per_minute))
        if isinstance(node, AnyExpr):
            return AnyOp(tuple(lower(c) for c in node.children))
        if isinstance(node, UnlessExpr):
            return UnlessOp(lower(node.body), lower(node.blocker),
                            _ticks(node.scope, ticks_per_minute))
        if isinstance(node, UnlessPrimeExpr):
            fail("the start-anchored UNLESS variant is parsed but unsupported",
                 "drop the contributor index argument")
        if isinstance(node, NotExpr):
            seq = node.seq
            return NotOp(lower(node.blocker),
                         tuple(lower(c) for c in seq.children),
                         _ticks(seq.scope, ticks_per_minute))
        if isinstance(node, CancelWhenExpr):
            return CancelWhenOp(lower(node.body), lower(node.blocker))
        raise TypeError(f"not an expression node: {node!r}")

    try:
        plan = lower(ast.when)
        bound = sorted(all_vars(plan))
        preds: list[Predicate] = []
        for item in ast.where:
            if isinstance(item, CompareItem):
                rhs = (AttrRef(item.rhs.var, item.rhs.attr)
                       if isinstance(item.rhs, AttrOperand) else item.rhs)
                preds.append(Predicate(AttrRef(item.lhs.var, item.lhs.attr),
                                       item.op, rhs))
            elif isinstance(item, CorrKeyItem):
                if len(bound) < 2:
                    diagnostics.append(Diagnostic(
                        "warning", 1, 1, 1,
                        f"CorrelationKey({item.attr}) needs two bound variables"))
                op = "=" if item.kind == "equal" else "!="
                for i, v1 in enumerate(bound):
                    for v2 in bound[i + 1:]:
                        preds.append(Predicate(AttrRef(v1, item.attr), op,
                                               AttrRef(v2, item.attr)))
            else:
                for v in bound:
                    preds.append(Predicate(AttrRef(v, item.attr), "=", item.value))
        try:
            plan = inject_predicates(plan, preds)
        except UnboundVariable as exc:
            fail(str(exc), "bind the variable with AS in the WHEN clause")
        if ast.slices is not None:
            occ = valid = None
            if ast.slices.occ:
                lo, hi = ast.slices.occ
                occ = (lo, hi if hi == INF else hi + 1)
            if ast.slices.valid:
                lo, hi = ast.slices.valid
                valid = (lo, hi if hi == INF else hi + 1)
            plan = SliceOp(plan, occ, valid)
        if ast.output is not None:
            plan = ProjectOp(plan, ast.output)
    except _ParseAbort:
        return CompileResult(None, diagnostics)
    return CompileResult(plan, diagnostics)


def leaf_streams(ast: QueryAst) -> list[str]:
    """The distinct event-type names the query reads."""
    names: list[str] = []

    def walk(node):
        if isinstance(node, Binding):
            if node.type_name not in names:
                names.append(node.type_name)
            return
        for attr in ("body", "blocker", "seq"):
            child = getattr(node, attr, None)
            if child is not None:
                walk(child)
        for child in getattr(node, "children", ()):
            walk(child)

    walk(ast.when)
    return names


def ast_to_obj(node) -> object:
    """A JSON-safe dump of an AST (or any of its nodes)."""
    if isinstance(node, (int, str, bool)) or node is None:
        return node
    if isinstance(node, float):
        return "inf" if node == INF else node
    if isinstance(node, tuple):
        return [ast_to_obj(c) for c in node]
    obj: dict = {"node": type(node).__name__}
    for name in node.__dataclass_fields__:
        obj[name] = ast_to_obj(getattr(node, name))
    return obj
