"""Concrete text syntax for schemas (`.schema`) and transactional programs
(`.txn`), with a recursive-descent parser and a canonical pretty-printer.

Schema files carry one table per line:

    TABLE emp (id, sal, age) PK (id)

Program files hold parameterised transactions:

    incSal(k) {
      SELECT sal AS v WHERE this.id = k;
      UPDATE SET sal = proj(sal, v, 1) + 1 WHERE this.id = k;
    }

Keywords are case-insensitive, identifiers are not.  Queries name their table
with an `@table` prefix (`@emp UPDATE SET ...`) or by qualifying a field
(`SELECT emp.sal AS v WHERE emp.age < 35`); with a single-table schema the
table may be omitted.  Expressions follow the abstract grammar: integer
constants, transaction arguments, `+ - * /`, `any{phi}` (inside the braces
`abs` names the chosen value), `iter`, `size(v)`, `proj(f, v, e)` and
`this.f`.  `#` starts a line comment.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional

from . import model as m


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int  # 1-based
    column: int  # 1-based
    length: int = 1

    def __str__(self):
        return f"{self.file}:{self.line}:{self.column}"


class ParseError(Exception):
    def __init__(self, message: str, span: Optional[SourceSpan] = None):
        self.span = span
        super().__init__(f"{span}: {message}" if span else message)


KEYWORDS = {
    "table", "pk", "select", "update", "insert", "delete", "if", "iterate",
    "skip", "as", "where", "set", "values", "and", "or", "not", "true",
    "false", "any", "iter", "size", "proj", "this", "min", "max", "abs",
}

_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<num>\d+)
  | (?P<id>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|!=|[-+*/(){},;=<>.@])
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str  # num | id | kw | op | eof
    text: str
    span: SourceSpan


def tokenize(text: str, filename: str = "<str>") -> list[Token]:
    toks: list[Token] = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        mo = _TOKEN_RE.match(text, pos)
        if not mo:
            raise ParseError(f"unexpected character {text[pos]!r}",
                             SourceSpan(filename, line, col))
        lexeme = mo.group(0)
        span = SourceSpan(filename, line, col, len(lexeme))
        if mo.lastgroup == "num":
            toks.append(Token("num", lexeme, span))
        elif mo.lastgroup == "id":
            low = lexeme.lower()
            if low in KEYWORDS:
                toks.append(Token("kw", low, span))
            else:
                toks.append(Token("id", lexeme, span))
        elif mo.lastgroup == "op":
            toks.append(Token("op", lexeme, span))
        nl = lexeme.count("\n")
        if nl:
            line += nl
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        pos = mo.end()
    toks.append(Token("eof", "", SourceSpan(filename, line, col, 0)))
    return toks


# ---------------------------------------------------------------------------
# Schema parsing
# ---------------------------------------------------------------------------

def parse_schema(text: str, filename: str = "<schema>") -> m.Schema:
    p = _Parser(tokenize(text, filename), schema=None)
    tables = []
    while not p.at("eof"):
        p.expect_kw("table")
        name = p.expect("id").text
        p.expect_op("(")
        fields = [p.expect("id").text]
        while p.try_op(","):
            fields.append(p.expect("id").text)
        p.expect_op(")")
        p.expect_kw("pk")
        p.expect_op("(")
        pk = [p.expect("id").text]
        while p.try_op(","):
            pk.append(p.expect("id").text)
        p.expect_op(")")
        try:
            tables.append(m.TableDef(name, tuple(fields), tuple(pk)))
        except m.ModelError as e:
            raise ParseError(str(e), p.prev.span) from None
    try:
        return m.Schema(tuple(tables))
    except m.ModelError as e:
        raise ParseError(str(e)) from None


# ---------------------------------------------------------------------------
# Program parsing
# ---------------------------------------------------------------------------

def parse_program(text: str, schema: m.Schema, filename: str = "<txn>") -> m.Program:
    """Parse and validate a program against an already-parsed schema."""
    p = _Parser(tokenize(text, filename), schema)
    txns = []
    while not p.at("eof"):
        txns.append(p.transaction())
    prog = m.Program(tuple(txns))
    diags = m.validate_program(schema, prog)
    if diags:
        raise ParseError("; ".join(str(d) for d in diags),
                         diags[0].span if isinstance(diags[0].span, SourceSpan) else None)
    return prog


class _Parser:
    def __init__(self, tokens: list[Token], schema: Optional[m.Schema]):
        self.toks = tokens
        self.i = 0
        self.schema = schema
        self.abs_counter = 0
        self._abs_name: Optional[str] = None

    @property
    def cur(self) -> Token:
        return self.toks[self.i]

    @property
    def prev(self) -> Token:
        return self.toks[max(0, self.i - 1)]

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        t = self.cur
        return t.kind == kind and (text is None or t.text == text)

    def advance(self) -> Token:
        t = self.cur
        self.i += 1
        return t

    def expect(self, kind: str) -> Token:
        if self.cur.kind != kind:
            raise ParseError(f"expected {kind}, found {self.cur.text!r}", self.cur.span)
        return self.advance()

    def expect_kw(self, kw: str) -> Token:
        if not self.at("kw", kw):
            raise ParseError(f"expected {kw.upper()}, found {self.cur.text!r}", self.cur.span)
        return self.advance()

    def expect_op(self, op: str) -> Token:
        if not self.at("op", op):
            raise ParseError(f"expected {op!r}, found {self.cur.text!r}", self.cur.span)
        return self.advance()

    def try_op(self, op: str) -> bool:
        if self.at("op", op):
            self.advance()
            return True
        return False

    def try_kw(self, kw: str) -> bool:
        if self.at("kw", kw):
            self.advance()
            return True
        return False

    # -- tables -------------------------------------------------------------

    def resolve_table(self, explicit: Optional[str], span: SourceSpan) -> str:
        if explicit is not None:
            if self.schema and not self.schema.has_table(explicit):
                raise ParseError(f"unknown table {explicit!r}", span)
            return explicit
        if self.schema and len(self.schema.tables) == 1:
            return self.schema.tables[0].name
        raise ParseError("query does not name a table and the schema has several", span)

    def qualified_field(self) -> tuple[Optional[str], str]:
        """`table.field` or bare `field`."""
        first = self.expect("id").text
        if self.try_op("."):
            return first, self.expect("id").text
        return None, first

    # -- transactions and commands ------------------------------------------

    def transaction(self) -> m.Transaction:
        self.abs_counter = 0
        name_tok = self.expect("id")
        self.expect_op("(")
        params = []
        if not self.at("op", ")"):
            params.append(self.expect("id").text)
            while self.try_op(","):
                params.append(self.expect("id").text)
        self.expect_op(")")
        self.expect_op("{")
        body = self.command_seq()
        self.expect_op("}")
        return m.Transaction(name_tok.text, tuple(params), body, span=name_tok.span)

    def command_seq(self) -> m.Command:
        cmds = []
        while not self.at("op", "}") and not self.at("eof"):
            cmds.append(self.command())
        if not cmds:
            return m.Skip()
        out = cmds[-1]
        for c in reversed(cmds[:-1]):
            out = m.Seq(c, out, span=getattr(c, "span", None))
        return out

    def command(self) -> m.Command:
        t = self.cur
        if self.try_kw("skip"):
            self.try_op(";")
            return m.Skip(span=t.span)
        if self.try_kw("if"):
            self.expect_op("(")
            cond = self.bool_expr()
            self.expect_op(")")
            self.expect_op("{")
            body = self.command_seq()
            self.expect_op("}")
            return m.If(cond, body, span=t.span)
        if self.try_kw("iterate"):
            self.expect_op("(")
            count = self.expr()
            self.expect_op(")")
            self.expect_op("{")
            body = self.command_seq()
            self.expect_op("}")
            return m.Iterate(count, body, span=t.span)
        q = self.query()
        self.try_op(";")
        return m.QueryCmd(q, span=t.span)

    def query(self) -> m.Query:
        t = self.cur
        explicit: Optional[str] = None
        if self.try_op("@"):
            explicit = self.expect("id").text
        if self.try_kw("select"):
            agg = None
            if self.at("kw", "min") or self.at("kw", "max"):
                agg = self.advance().text
                self.expect_op("(")
                tbl, fld = self.qualified_field()
                self.expect_op(")")
            else:
                tbl, fld = self.qualified_field()
            table = self.resolve_table(explicit or tbl, t.span)
            self.expect_kw("as")
            var = self.expect("id").text
            self.expect_kw("where")
            where = self.bool_expr(this_table=table)
            if agg:
                return m.SelectAgg(table, agg, fld, var, where, span=t.span)
            return m.Select(table, fld, var, where, span=t.span)
        if self.try_kw("update"):
            if explicit is None and self.at("id"):
                explicit = self.advance().text
            self.expect_kw("set")
            _, fld = self.qualified_field()
            self.expect_op("=")
            table_guess = explicit
            value = self.expr()
            self.expect_kw("where")
            table = self.resolve_table(table_guess, t.span)
            where = self.bool_expr(this_table=table)
            return m.Update(table, fld, value, where, span=t.span)
        if self.try_kw("insert"):
            if explicit is None and self.at("id"):
                explicit = self.advance().text
            table = self.resolve_table(explicit, t.span)
            self.expect_kw("values")
            self.expect_op("(")
            assigns = [self.insert_assign()]
            while self.try_op(","):
                assigns.append(self.insert_assign())
            self.expect_op(")")
            return m.Insert(table, tuple(assigns), span=t.span)
        if self.try_kw("delete"):
            if explicit is None and self.at("id"):
                explicit = self.advance().text
            table = self.resolve_table(explicit, t.span)
            self.expect_kw("where")
            where = self.bool_expr(this_table=table)
            return m.Delete(table, where, span=t.span)
        raise ParseError(f"expected a query, found {self.cur.text!r}", self.cur.span)

    def insert_assign(self) -> tuple[str, m.Expr]:
        fld = self.expect("id").text
        self.expect_op("=")
        return fld, self.expr()

    # -- boolean expressions --------------------------------------------------

    def bool_expr(self, this_table: Optional[str] = None) -> m.BoolExpr:
        left = self.bool_and(this_table)
        while self.try_kw("or"):
            right = self.bool_and(this_table)
            left = m.Or(left, right)
        return left

    def bool_and(self, this_table) -> m.BoolExpr:
        left = self.bool_atom(this_table)
        while self.try_kw("and"):
            right = self.bool_atom(this_table)
            left = m.And(left, right)
        return left

    def bool_atom(self, this_table) -> m.BoolExpr:
        t = self.cur
        if self.try_kw("not"):
            return m.Not(self.bool_atom(this_table), span=t.span)
        if self.try_kw("true"):
            return m.BoolConst(True, span=t.span)
        if self.try_kw("false"):
            return m.BoolConst(False, span=t.span)
        if self.at("op", "("):
            save = self.i
            try:
                self.advance()
                inner = self.bool_expr(this_table)
                self.expect_op(")")
                if self.at("op") and self.cur.text in ("<", "<=", "=", ">", ">=", "!=", "+", "-", "*", "/"):
                    # it was a parenthesised arithmetic operand after all
                    raise ParseError("parenthesised expression", self.cur.span)
                return inner
            except ParseError:
                self.i = save
        left = self.expr(this_table)
        op_tok = self.expect("op")
        if op_tok.text == "!=":
            right = self.expr(this_table)
            return m.Not(m.Cmp(left, "=", right, span=op_tok.span), span=op_tok.span)
        if op_tok.text not in ("<", "<=", "=", ">", ">="):
            raise ParseError(f"expected a comparison, found {op_tok.text!r}", op_tok.span)
        right = self.expr(this_table)
        return m.Cmp(left, op_tok.text, right, span=op_tok.span)

    # -- arithmetic expressions -----------------------------------------------

    def expr(self, this_table: Optional[str] = None) -> m.Expr:
        left = self.term(this_table)
        while self.at("op", "+") or self.at("op", "-"):
            op = self.advance().text
            right = self.term(this_table)
            left = m.BinOp(op, left, right)
        return left

    def term(self, this_table) -> m.Expr:
        left = self.factor(this_table)
        while self.at("op", "*") or self.at("op", "/"):
            op = self.advance().text
            right = self.factor(this_table)
            left = m.BinOp(op, left, right)
        return left

    def factor(self, this_table) -> m.Expr:
        t = self.cur
        if self.at("num"):
            return m.IntConst(int(self.advance().text), span=t.span)
        if self.try_op("("):
            inner = self.expr(this_table)
            self.expect_op(")")
            return inner
        if self.try_op("-"):
            inner = self.factor(this_table)
            return m.BinOp("-", m.IntConst(0), inner, span=t.span)
        if self.try_kw("iter"):
            return m.Iter(span=t.span)
        if self.try_kw("any"):
            self.expect_op("{")
            name = f"abs_{self.abs_counter}"
            self.abs_counter += 1
            saved = self._abs_name
            self._abs_name = name
            phi = self.bool_expr(this_table=None)
            self._abs_name = saved
            self.expect_op("}")
            return m.AnyValue(phi, name, span=t.span)
        if self.try_kw("abs"):
            name = self._abs_name
            if not name:
                raise ParseError("'abs' is only meaningful inside any{...}", t.span)
            return m.Arg(name, span=t.span)
        if self.try_kw("size"):
            self.expect_op("(")
            var = self.expect("id").text
            self.expect_op(")")
            return m.Size(var, span=t.span)
        if self.try_kw("proj"):
            self.expect_op("(")
            fld = self.expect("id").text
            self.expect_op(",")
            var = self.expect("id").text
            self.expect_op(",")
            idx = self.expr(this_table)
            self.expect_op(")")
            return m.Proj(fld, var, idx, span=t.span)
        if self.try_kw("this"):
            self.expect_op(".")
            fld = self.expect("id").text
            return m.ThisField(fld, span=t.span)
        if self.at("id"):
            name = self.advance().text
            if self.try_op("."):
                # table-qualified field reference inside a WHERE clause
                fld = self.expect("id").text
                if this_table is not None and name != this_table:
                    raise ParseError(
                        f"field of table {name!r} referenced in a WHERE over {this_table!r}",
                        t.span)
                return m.ThisField(fld, span=t.span)
            return m.Arg(name, span=t.span)
        raise ParseError(f"expected an expression, found {self.cur.text!r}", self.cur.span)


# ---------------------------------------------------------------------------
# Pretty-printing (canonical form; parse(pretty(p)) == p)
# ---------------------------------------------------------------------------

def pretty_schema(schema: m.Schema) -> str:
    lines = []
    for t in schema.tables:
        lines.append(f"TABLE {t.name} ({', '.join(t.fields)}) PK ({', '.join(t.primary_key)})")
    return "\n".join(lines) + ("\n" if lines else "")


def _pp_expr(e: m.Expr, prec: int = 0) -> str:
    if isinstance(e, m.IntConst):
        return str(e.value) if e.value >= 0 else f"(0 - {-e.value})"
    if isinstance(e, m.Arg):
        return e.name
    if isinstance(e, m.BinOp):
        mine = 1 if e.op in "+-" else 2
        s = f"{_pp_expr(e.left, mine)} {e.op} {_pp_expr(e.right, mine + 1)}"
        return f"({s})" if mine < prec else s
    if isinstance(e, m.AnyValue):
        return "any{" + _pp_bool_with_abs(e.constraint, e.name) + "}"
    if isinstance(e, m.Iter):
        return "iter"
    if isinstance(e, m.Size):
        return f"size({e.var})"
    if isinstance(e, m.Proj):
        return f"proj({e.field_name}, {e.var}, {_pp_expr(e.index)})"
    if isinstance(e, m.ThisField):
        return f"this.{e.field_name}"
    raise m.ModelError(f"cannot print {e!r}")


def _pp_bool_with_abs(b: m.BoolExpr, abs_name: str) -> str:
    return _pp_bool(b, 0, abs_name)


def _pp_bool(b: m.BoolExpr, prec: int = 0, abs_name: Optional[str] = None) -> str:
    def pe(e: m.Expr) -> str:
        s = _pp_expr(e)
        return "abs" if abs_name is not None and s == abs_name else s

    if isinstance(b, m.BoolConst):
        return "TRUE" if b.value else "FALSE"
    if isinstance(b, m.Cmp):
        if abs_name is not None:
            return f"{_sub_abs(_pp_expr(b.left), abs_name)} {b.op} {_sub_abs(_pp_expr(b.right), abs_name)}"
        return f"{_pp_expr(b.left)} {b.op} {_pp_expr(b.right)}"
    if isinstance(b, m.Not):
        return f"NOT {_pp_bool(b.operand, 3, abs_name)}"
    if isinstance(b, m.And):
        s = f"{_pp_bool(b.left, 2, abs_name)} AND {_pp_bool(b.right, 3, abs_name)}"
        return f"({s})" if prec > 2 else s
    if isinstance(b, m.Or):
        s = f"{_pp_bool(b.left, 1, abs_name)} OR {_pp_bool(b.right, 2, abs_name)}"
        return f"({s})" if prec > 1 else s
    raise m.ModelError(f"cannot print {b!r}")


def _sub_abs(s: str, abs_name: str) -> str:
    return re.sub(rf"\b{re.escape(abs_name)}\b", "abs", s)


def _pp_query(q: m.Query) -> str:
    at = f"@{q.table} "
    if isinstance(q, m.Select):
        return f"{at}SELECT {q.field_name} AS {q.as_var} WHERE {_pp_bool(q.where)};"
    if isinstance(q, m.SelectAgg):
        return f"{at}SELECT {q.agg}({q.field_name}) AS {q.as_var} WHERE {_pp_bool(q.where)};"
    if isinstance(q, m.Update):
        return f"{at}UPDATE SET {q.field_name} = {_pp_expr(q.value)} WHERE {_pp_bool(q.where)};"
    if isinstance(q, m.Insert):
        inner = ", ".join(f"{f} = {_pp_expr(e)}" for f, e in q.assignments)
        return f"{at}INSERT VALUES ({inner});"
    if isinstance(q, m.Delete):
        return f"{at}DELETE WHERE {_pp_bool(q.where)};"
    raise m.ModelError(f"cannot print {q!r}")


def _pp_command(c: m.Command, indent: int) -> list[str]:
    pad = "  " * indent
    if isinstance(c, m.Skip):
        return [pad + "SKIP;"]
    if isinstance(c, m.Seq):
        return _pp_command(c.first, indent) + _pp_command(c.second, indent)
    if isinstance(c, m.If):
        return ([pad + f"IF ({_pp_bool(c.cond)}) {{"]
                + _pp_command(c.body, indent + 1) + [pad + "}"])
    if isinstance(c, m.Iterate):
        return ([pad + f"ITERATE ({_pp_expr(c.count)}) {{"]
                + _pp_command(c.body, indent + 1) + [pad + "}"])
    if isinstance(c, m.QueryCmd):
        return [pad + _pp_query(c.query)]
    raise m.ModelError(f"cannot print {c!r}")


def pretty_print(prog: m.Program) -> str:
    chunks = []
    for t in prog.transactions:
        lines = [f"{t.name}({', '.join(t.params)}) {{"]
        lines += _pp_command(t.body, 1)
        lines.append("}")
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks) + ("\n" if chunks else "")
