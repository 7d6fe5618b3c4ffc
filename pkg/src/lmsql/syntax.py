"""Lexer, parser, AST and printer for the extended SQL dialect.

The dialect is a single-table SQL subset plus model-call expressions
f("question"; col, ...) accepted wherever a column or value may appear,
including nested inside another call's arguments. f_col / f_val force the
column/scalar reading; bare f gets its role from its position. See
docs/grammar.md for the full grammar.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from .errors import LexError, ParseError, RoleAmbiguity
from .table import format_number

KEYWORDS = {
    "SELECT", "DISTINCT", "FROM", "WHERE", "GROUP", "BY", "HAVING",
    "ORDER", "ASC", "DESC", "LIMIT", "AND", "OR", "NOT", "LIKE", "IN",
    "IS", "NULL",
}
AGGREGATES = {"COUNT", "SUM", "AVG", "MIN", "MAX"}
CALL_NAMES = {"f": None, "f_col": "map", "f_val": "val"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<symbol><>|!=|<=|>=|[()=<>,;*+\-/%])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # keyword | ident | number | string | symbol | eof
    value: str
    pos: int

    def is_kw(self, *names: str) -> bool:
        return self.kind == "keyword" and self.value in names

    def is_sym(self, *values: str) -> bool:
        return self.kind == "symbol" and self.value in values


def tokenize(text: str) -> list:
    """Lex the full input; raises LexError with the character offset."""
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch in "'\"":
            value, i2 = _lex_string(text, i)
            tokens.append(Token("string", value, i))
            i = i2
            continue
        if ch == "`":
            end = text.find("`", i + 1)
            if end < 0:
                raise LexError("unterminated quoted identifier", i)
            tokens.append(Token("ident", text[i + 1:end], i))
            i = end + 1
            continue
        m = _TOKEN_RE.match(text, i)
        if not m:
            raise LexError(f"illegal character {ch!r}", i)
        if m.lastgroup == "ws":
            i = m.end()
            continue
        value = m.group()
        if m.lastgroup == "ident" and value.upper() in KEYWORDS:
            tokens.append(Token("keyword", value.upper(), i))
        else:
            tokens.append(Token(m.lastgroup, value, i))
        i = m.end()
    tokens.append(Token("eof", "", n))
    return tokens


def _lex_string(text: str, start: int):
    quote = text[start]
    out = []
    i = start + 1
    while i < len(text):
        ch = text[i]
        if ch == quote:
            if i + 1 < len(text) and text[i + 1] == quote:  # doubled quote escape
                out.append(quote)
                i += 2
                continue
            return "".join(out), i + 1
        out.append(ch)
        i += 1
    raise LexError("unterminated string literal", start)


# ---- AST ----

@dataclass(frozen=True)
class Literal:
    value: object  # None | float | str
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class ColumnRef:
    name: str
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Star:
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Unary:
    op: str  # '-' | 'NOT'
    operand: object
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Binary:
    op: str  # + - * / % = != <> < <= > >= AND OR LIKE 'NOT LIKE'
    left: object
    right: object
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class InList:
    subject: object
    items: tuple
    negated: bool = False
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class IsNull:
    subject: object
    negated: bool = False
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Aggregate:
    func: str  # COUNT SUM AVG MIN MAX
    arg: object  # Expr | Star
    distinct: bool = False
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class ScalarSubquery:
    query: "Query"
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class ApiCall:
    question: str
    args: tuple  # ColumnRef | ApiCall, non-empty
    role: Optional[str] = None  # 'map' | 'val', assigned by assign_roles
    forced: bool = False  # surface form was f_col / f_val
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class OrderItem:
    expr: object
    desc: bool = False


@dataclass(frozen=True)
class Query:
    select_items: tuple
    distinct: bool = False
    from_table: Optional[str] = None
    where: Optional[object] = None
    group_by: tuple = ()
    having: Optional[object] = None
    order_by: tuple = ()  # OrderItem
    limit: Optional[object] = None  # Literal(number) | ApiCall
    pos: int = field(default=-1, compare=False, repr=False)


@dataclass(frozen=True)
class Program:
    root: Query
    source_text: str = field(default="", compare=False, repr=False)


Expr = Union[Literal, ColumnRef, Star, Unary, Binary, InList, IsNull,
             Aggregate, ScalarSubquery, ApiCall]


# ---- parser ----

class _Parser:
    def __init__(self, text: str, allow_api_calls: bool = True):
        self.text = text
        self.allow_api_calls = allow_api_calls
        self.tokens = tokenize(text)
        self.i = 0

    def peek(self, offset: int = 0) -> Token:
        j = min(self.i + offset, len(self.tokens) - 1)
        return self.tokens[j]

    def advance(self) -> Token:
        tok = self.tokens[self.i]
        if tok.kind != "eof":
            self.i += 1
        return tok

    def error(self, message: str, expected=()) -> ParseError:
        return ParseError(message, self.peek().pos, expected)

    def expect_kw(self, name: str) -> Token:
        if not self.peek().is_kw(name):
            raise self.error(f"got {self.peek().value or 'end of input'!r}", [name])
        return self.advance()

    def expect_sym(self, value: str) -> Token:
        if not self.peek().is_sym(value):
            raise self.error(f"got {self.peek().value or 'end of input'!r}", [value])
        return self.advance()

    def accept_kw(self, *names: str) -> Optional[Token]:
        if self.peek().is_kw(*names):
            return self.advance()
        return None

    def accept_sym(self, *values: str) -> Optional[Token]:
        if self.peek().is_sym(*values):
            return self.advance()
        return None

    # program := query [';'] EOF
    def parse_program(self) -> Program:
        q = self.parse_query()
        self.accept_sym(";")
        if self.peek().kind != "eof":
            raise self.error(f"unexpected trailing input {self.peek().value!r}")
        return Program(q, self.text)

    def parse_query(self) -> Query:
        start = self.expect_kw("SELECT")
        distinct = bool(self.accept_kw("DISTINCT"))
        items = [self.parse_select_item()]
        while self.accept_sym(","):
            items.append(self.parse_select_item())
        from_table = None
        if self.accept_kw("FROM"):
            tok = self.peek()
            if tok.kind != "ident":
                raise self.error("FROM needs a table name", ["table name"])
            from_table = self.advance().value
            nxt = self.peek()
            if nxt.is_sym(",") or (nxt.kind == "ident" and nxt.value.upper() in
                                   ("JOIN", "INNER", "LEFT", "RIGHT", "CROSS", "OUTER", "AS", "ON")):
                raise ParseError("joins and table aliases are not supported; query the single table",
                                 nxt.pos)
        where = self.parse_expr() if self.accept_kw("WHERE") else None
        group_by: list = []
        if self.accept_kw("GROUP"):
            self.expect_kw("BY")
            group_by.append(self.parse_expr())
            while self.accept_sym(","):
                group_by.append(self.parse_expr())
        having = self.parse_expr() if self.accept_kw("HAVING") else None
        order_by: list = []
        if self.accept_kw("ORDER"):
            self.expect_kw("BY")
            order_by.append(self.parse_order_item())
            while self.accept_sym(","):
                order_by.append(self.parse_order_item())
        limit = None
        if self.accept_kw("LIMIT"):
            limit = self.parse_limit_value()
        q = Query(tuple(items), distinct, from_table, where, tuple(group_by),
                  having, tuple(order_by), limit, pos=start.pos)
        _check_aggregate_placement(q)
        return q

    def parse_select_item(self):
        tok = self.peek()
        if tok.is_sym("*"):
            self.advance()
            return Star(pos=tok.pos)
        return self.parse_expr()

    def parse_order_item(self) -> OrderItem:
        expr = self.parse_expr()
        if self.accept_kw("DESC"):
            return OrderItem(expr, desc=True)
        self.accept_kw("ASC")
        return OrderItem(expr, desc=False)

    def parse_limit_value(self):
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return Literal(float(tok.value), pos=tok.pos)
        if tok.kind == "ident" and tok.value in CALL_NAMES and self.peek(1).is_sym("("):
            return self.parse_api_call()
        raise self.error("LIMIT needs an integer or a model call", ["number"])

    # expression precedence: OR < AND < NOT < comparison < additive < multiplicative < unary
    def parse_expr(self):
        return self.parse_or()

    def parse_or(self):
        left = self.parse_and()
        while True:
            tok = self.accept_kw("OR")
            if not tok:
                return left
            left = Binary("OR", left, self.parse_and(), pos=tok.pos)

    def parse_and(self):
        left = self.parse_not()
        while True:
            tok = self.accept_kw("AND")
            if not tok:
                return left
            left = Binary("AND", left, self.parse_not(), pos=tok.pos)

    def parse_not(self):
        tok = self.accept_kw("NOT")
        if tok:
            return Unary("NOT", self.parse_not(), pos=tok.pos)
        return self.parse_comparison()

    def parse_comparison(self):
        left = self.parse_additive()
        tok = self.peek()
        if tok.is_sym("=", "!=", "<>", "<", "<=", ">", ">="):
            self.advance()
            op = "!=" if tok.value == "<>" else tok.value
            return Binary(op, left, self.parse_additive(), pos=tok.pos)
        negated = False
        if tok.is_kw("NOT") and self.peek(1).is_kw("LIKE", "IN"):
            self.advance()
            negated = True
            tok = self.peek()
        if tok.is_kw("LIKE"):
            self.advance()
            pattern = self.parse_additive()
            if not (isinstance(pattern, Literal) and isinstance(pattern.value, str)):
                raise ParseError("LIKE pattern must be a string literal", tok.pos)
            return Binary("NOT LIKE" if negated else "LIKE", left, pattern, pos=tok.pos)
        if tok.is_kw("IN"):
            self.advance()
            self.expect_sym("(")
            items = [self.parse_expr()]
            while self.accept_sym(","):
                items.append(self.parse_expr())
            self.expect_sym(")")
            return InList(left, tuple(items), negated, pos=tok.pos)
        if negated:
            raise self.error("dangling NOT", ["LIKE", "IN"])
        if tok.is_kw("IS"):
            self.advance()
            neg = bool(self.accept_kw("NOT"))
            self.expect_kw("NULL")
            return IsNull(left, neg, pos=tok.pos)
        return left

    def parse_additive(self):
        left = self.parse_multiplicative()
        while True:
            tok = self.accept_sym("+", "-")
            if not tok:
                return left
            left = Binary(tok.value, left, self.parse_multiplicative(), pos=tok.pos)

    def parse_multiplicative(self):
        left = self.parse_unary()
        while True:
            tok = self.accept_sym("*", "/", "%")
            if not tok:
                return left
            left = Binary(tok.value, left, self.parse_unary(), pos=tok.pos)

    def parse_unary(self):
        tok = self.accept_sym("-")
        if tok:
            return Unary("-", self.parse_unary(), pos=tok.pos)
        return self.parse_primary()

    def parse_primary(self):
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return Literal(float(tok.value), pos=tok.pos)
        if tok.kind == "string":
            self.advance()
            return Literal(tok.value, pos=tok.pos)
        if tok.is_kw("NULL"):
            self.advance()
            return Literal(None, pos=tok.pos)
        if tok.is_sym("("):
            self.advance()
            if self.peek().is_kw("SELECT"):
                q = self.parse_query()
                self.expect_sym(")")
                return ScalarSubquery(q, pos=tok.pos)
            inner = self.parse_expr()
            self.expect_sym(")")
            return inner
        if tok.kind == "ident":
            upper = tok.value.upper()
            if tok.value in CALL_NAMES and self.peek(1).is_sym("("):
                return self.parse_api_call()
            if upper in AGGREGATES and self.peek(1).is_sym("("):
                return self.parse_aggregate()
            self.advance()
            return ColumnRef(tok.value, pos=tok.pos)
        raise self.error(f"got {tok.value or 'end of input'!r}", ["expression"])

    def parse_aggregate(self) -> Aggregate:
        name = self.advance()
        func = name.value.upper()
        self.expect_sym("(")
        if self.accept_sym("*"):
            if func != "COUNT":
                raise ParseError(f"{func}(*) is not supported", name.pos)
            self.expect_sym(")")
            return Aggregate(func, Star(), pos=name.pos)
        distinct = bool(self.accept_kw("DISTINCT"))
        arg = self.parse_expr()
        self.expect_sym(")")
        return Aggregate(func, arg, distinct, pos=name.pos)

    def parse_api_call(self) -> ApiCall:
        name = self.advance()
        if not self.allow_api_calls:
            raise ParseError("model calls are not allowed in plain SQL mode", name.pos)
        self.expect_sym("(")
        qtok = self.peek()
        if qtok.kind != "string":
            raise self.error("model call needs a quoted question", ["string"])
        self.advance()
        if not qtok.value.strip():
            raise ParseError("model-call question must be non-empty", qtok.pos)
        self.expect_sym(";")
        args = [self.parse_call_arg()]
        while self.accept_sym(","):
            args.append(self.parse_call_arg())
        self.expect_sym(")")
        forced_role = CALL_NAMES[name.value]
        return ApiCall(qtok.value, tuple(args), role=forced_role,
                       forced=forced_role is not None, pos=name.pos)

    def parse_call_arg(self):
        tok = self.peek()
        if tok.kind == "ident" and tok.value in CALL_NAMES and self.peek(1).is_sym("("):
            return self.parse_api_call()
        if tok.kind == "ident":
            self.advance()
            return ColumnRef(tok.value, pos=tok.pos)
        raise self.error("model-call arguments must be columns or nested calls",
                         ["column", "f(...)"])


def _contains_aggregate(expr) -> bool:
    """Aggregate at this query level (does not look inside subqueries)."""
    if isinstance(expr, Aggregate):
        return True
    if isinstance(expr, Unary):
        return _contains_aggregate(expr.operand)
    if isinstance(expr, Binary):
        return _contains_aggregate(expr.left) or _contains_aggregate(expr.right)
    if isinstance(expr, InList):
        return _contains_aggregate(expr.subject) or any(_contains_aggregate(x) for x in expr.items)
    if isinstance(expr, IsNull):
        return _contains_aggregate(expr.subject)
    if isinstance(expr, ApiCall):
        return any(_contains_aggregate(a) for a in expr.args)
    return False


def _check_aggregate_placement(q: Query) -> None:
    if q.where is not None and _contains_aggregate(q.where):
        raise ParseError("aggregates are not allowed in WHERE", q.where.pos)
    for g in q.group_by:
        if _contains_aggregate(g):
            raise ParseError("aggregates are not allowed in GROUP BY", g.pos)


def parse(text: str, allow_api_calls: bool = True) -> Program:
    """Parse source text into a Program; ParseError carries the offset."""
    return _Parser(text, allow_api_calls).parse_program()


# ---- canonical printer ----

_PREC = {
    "OR": 1, "AND": 2,
    "=": 4, "!=": 4, "<": 4, "<=": 4, ">": 4, ">=": 4,
    "LIKE": 4, "NOT LIKE": 4,
    "+": 5, "-": 5, "*": 6, "/": 6, "%": 6,
}
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*$")


def _print_ident(name: str) -> str:
    if _IDENT_RE.fullmatch(name) and name.upper() not in KEYWORDS:
        return name
    return f"`{name}`"


def _prec(expr) -> int:
    if isinstance(expr, Binary):
        return _PREC[expr.op]
    if isinstance(expr, (InList, IsNull)):
        return 4
    if isinstance(expr, Unary):
        return 3 if expr.op == "NOT" else 7
    return 9


def _print_child(expr, parent_prec: int, allow_equal: bool) -> str:
    text = print_expr(expr)
    child = _prec(expr)
    if child < parent_prec or (child == parent_prec and not allow_equal):
        return f"({text})"
    return text


def print_expr(expr) -> str:
    if isinstance(expr, Literal):
        if expr.value is None:
            return "NULL"
        if isinstance(expr.value, float):
            return format_number(expr.value)
        return "'" + str(expr.value).replace("'", "''") + "'"
    if isinstance(expr, ColumnRef):
        return _print_ident(expr.name)
    if isinstance(expr, Star):
        return "*"
    if isinstance(expr, Unary):
        if expr.op == "NOT":
            return "NOT " + _print_child(expr.operand, 3, allow_equal=True)
        return "-" + _print_child(expr.operand, 7, allow_equal=False)
    if isinstance(expr, Binary):
        left = _print_child(expr.left, _PREC[expr.op], allow_equal=expr.op not in ("=", "!=", "<", "<=", ">", ">=", "LIKE", "NOT LIKE"))
        right = _print_child(expr.right, _PREC[expr.op], allow_equal=False)
        return f"{left} {expr.op} {right}"
    if isinstance(expr, InList):
        subject = _print_child(expr.subject, 4, allow_equal=False)
        items = ", ".join(print_expr(x) for x in expr.items)
        return f"{subject} {'NOT IN' if expr.negated else 'IN'} ({items})"
    if isinstance(expr, IsNull):
        subject = _print_child(expr.subject, 4, allow_equal=False)
        return f"{subject} IS {'NOT ' if expr.negated else ''}NULL"
    if isinstance(expr, Aggregate):
        if isinstance(expr.arg, Star):
            return f"{expr.func}(*)"
        inner = print_expr(expr.arg)
        return f"{expr.func}({'DISTINCT ' if expr.distinct else ''}{inner})"
    if isinstance(expr, ScalarSubquery):
        return f"({print_query(expr.query)})"
    if isinstance(expr, ApiCall):
        name = {None: "f", "map": "f_col", "val": "f_val"}[expr.role] if expr.forced else "f"
        question = '"' + expr.question.replace('"', '""') + '"'
        args = ", ".join(print_expr(a) for a in expr.args)
        return f"{name}({question}; {args})"
    raise TypeError(f"cannot print {type(expr).__name__}")


def print_query(q: Query) -> str:
    parts = ["SELECT"]
    if q.distinct:
        parts.append("DISTINCT")
    parts.append(", ".join(print_expr(item) for item in q.select_items))
    if q.from_table is not None:
        parts.append(f"FROM {_print_ident(q.from_table)}")
    if q.where is not None:
        parts.append(f"WHERE {print_expr(q.where)}")
    if q.group_by:
        parts.append("GROUP BY " + ", ".join(print_expr(g) for g in q.group_by))
    if q.having is not None:
        parts.append(f"HAVING {print_expr(q.having)}")
    if q.order_by:
        keys = ", ".join(print_expr(o.expr) + (" DESC" if o.desc else "") for o in q.order_by)
        parts.append(f"ORDER BY {keys}")
    if q.limit is not None:
        parts.append(f"LIMIT {print_expr(q.limit)}")
    return " ".join(parts)


def print_program(p: Program) -> str:
    """Canonical single-line rendering; parse(print_program(p)) equals p
    structurally."""
    return print_query(p.root)


# ---- traversal ----

def _walk_exprs_of_query(q: Query):
    """Expression roots of a query in document order."""
    for item in q.select_items:
        yield item
    if q.where is not None:
        yield q.where
    for g in q.group_by:
        yield g
    if q.having is not None:
        yield q.having
    for o in q.order_by:
        yield o.expr
    if q.limit is not None:
        yield q.limit


def _collect_calls(expr, out: list) -> None:
    if isinstance(expr, ApiCall):
        for a in expr.args:
            _collect_calls(a, out)
        out.append(expr)
    elif isinstance(expr, Unary):
        _collect_calls(expr.operand, out)
    elif isinstance(expr, Binary):
        _collect_calls(expr.left, out)
        _collect_calls(expr.right, out)
    elif isinstance(expr, InList):
        _collect_calls(expr.subject, out)
        for x in expr.items:
            _collect_calls(x, out)
    elif isinstance(expr, IsNull):
        _collect_calls(expr.subject, out)
    elif isinstance(expr, Aggregate):
        _collect_calls(expr.arg, out)
    elif isinstance(expr, ScalarSubquery):
        for root in _walk_exprs_of_query(expr.query):
            _collect_calls(root, out)


def api_calls_bottom_up(p: Program) -> list:
    """All ApiCall nodes, arguments before the calls that use them, siblings
    in document order."""
    out: list = []
    for root in _walk_exprs_of_query(p.root):
        _collect_calls(root, out)
    return out


def has_api_calls(p: Program) -> bool:
    return bool(api_calls_bottom_up(p))


# ---- role assignment ----

def _assign_expr(expr, scalar_ctx: bool):
    if isinstance(expr, ApiCall):
        if expr.forced:
            if scalar_ctx and expr.role == "map":
                raise RoleAmbiguity(
                    f'f_col("{expr.question}"; ...) sits where a single value is required')
            role = expr.role
        else:
            role = "val" if scalar_ctx else "map"
        args = tuple(_assign_expr(a, False) for a in expr.args)
        for a in args:
            if isinstance(a, ApiCall) and a.role == "val":
                raise RoleAmbiguity(
                    f'f_val("{a.question}"; ...) cannot supply a context column')
        return replace(expr, role=role, args=args)
    if isinstance(expr, Unary):
        return replace(expr, operand=_assign_expr(expr.operand, False))
    if isinstance(expr, Binary):
        left_scalar = isinstance(expr.right, ScalarSubquery)
        right_scalar = isinstance(expr.left, ScalarSubquery)
        comparison = expr.op in ("=", "!=", "<", "<=", ">", ">=")
        return replace(
            expr,
            left=_assign_expr(expr.left, comparison and left_scalar),
            right=_assign_expr(expr.right, comparison and right_scalar),
        )
    if isinstance(expr, InList):
        return replace(expr, subject=_assign_expr(expr.subject, False),
                       items=tuple(_assign_expr(x, False) for x in expr.items))
    if isinstance(expr, IsNull):
        return replace(expr, subject=_assign_expr(expr.subject, False))
    if isinstance(expr, Aggregate):
        if isinstance(expr.arg, Star):
            return expr
        return replace(expr, arg=_assign_expr(expr.arg, False))
    if isinstance(expr, ScalarSubquery):
        return replace(expr, query=_assign_query(expr.query))
    return expr


def _assign_query(q: Query) -> Query:
    return replace(
        q,
        select_items=tuple(_assign_expr(e, False) for e in q.select_items),
        where=None if q.where is None else _assign_expr(q.where, False),
        group_by=tuple(_assign_expr(g, False) for g in q.group_by),
        having=None if q.having is None else _assign_expr(q.having, False),
        order_by=tuple(replace(o, expr=_assign_expr(o.expr, False)) for o in q.order_by),
        limit=None if q.limit is None else _assign_expr(q.limit, True),
    )


def assign_roles(p: Program) -> Program:
    """Tag every model call as a per-row column (map) or single value (val)
    based on its position; f_col/f_val surface forms win."""
    return Program(_assign_query(p.root), p.source_text)
