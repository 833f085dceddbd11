"""Core data model: schemas, the transactional program AST, effects, and
replicated-store system states.

Everything here is an immutable value; later modules (interpreter, dependency
analysis, constraint encoding) share these types freely across threads.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Union

ALIVE = "alive"

#: Default value of a field that has never been written.
DEFAULT_VALUE = 0


class ModelError(Exception):
    """Malformed schema or program construction."""


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TableDef:
    name: str
    fields: tuple[str, ...]
    primary_key: tuple[str, ...]

    def __post_init__(self):
        if not self.primary_key:
            raise ModelError(f"table {self.name}: empty primary key")
        if len(set(self.fields)) != len(self.fields):
            raise ModelError(f"table {self.name}: duplicate field")
        missing = [k for k in self.primary_key if k not in self.fields]
        if missing:
            raise ModelError(f"table {self.name}: PK fields {missing} not declared")
        if ALIVE in self.fields:
            raise ModelError(f"table {self.name}: '{ALIVE}' is reserved")

    @property
    def value_fields(self) -> tuple[str, ...]:
        """Declared non-key fields (mutable by UPDATE)."""
        return tuple(f for f in self.fields if f not in self.primary_key)

    @property
    def all_fields(self) -> tuple[str, ...]:
        """Declared fields plus the implicit liveness field."""
        return self.fields + (ALIVE,)


@dataclass(frozen=True)
class Schema:
    tables: tuple[TableDef, ...]

    def __post_init__(self):
        names = [t.name for t in self.tables]
        if len(set(names)) != len(names):
            raise ModelError("duplicate table name")

    def table(self, name: str) -> TableDef:
        for t in self.tables:
            if t.name == name:
                return t
        raise ModelError(f"unknown table {name!r}")

    def has_table(self, name: str) -> bool:
        return any(t.name == name for t in self.tables)


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class IntConst(Expr):
    value: int
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Arg(Expr):
    """A transaction parameter, or an abstract `any{}` variable after naming."""
    name: str
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # + - * /
    left: Expr
    right: Expr
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class AnyValue(Expr):
    """Nondeterministic integer constrained by `constraint`; inside the
    constraint the token `abs` refers to the chosen value (rewritten to
    Arg(name) during parsing)."""
    constraint: "BoolExpr"
    name: str  # abs_<k>, unique per transaction
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Iter(Expr):
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Size(Expr):
    var: str
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Proj(Expr):
    field_name: str
    var: str
    index: Expr  # 1-based at evaluation time
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class ThisField(Expr):
    field_name: str
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class BoolExpr:
    pass


@dataclass(frozen=True)
class Cmp(BoolExpr):
    left: Expr
    op: str  # < <= = > >=
    right: Expr
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Not(BoolExpr):
    operand: BoolExpr
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class And(BoolExpr):
    left: BoolExpr
    right: BoolExpr
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Or(BoolExpr):
    left: BoolExpr
    right: BoolExpr
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class BoolConst(BoolExpr):
    value: bool
    span: object = field(default=None, compare=False, repr=False)


TRUE = BoolConst(True)
FALSE = BoolConst(False)


# ---------------------------------------------------------------------------
# Queries and commands
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Query:
    pass


@dataclass(frozen=True)
class Select(Query):
    table: str
    field_name: str
    as_var: str
    where: BoolExpr
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class SelectAgg(Query):
    table: str
    agg: str  # min | max
    field_name: str
    as_var: str
    where: BoolExpr
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Update(Query):
    table: str
    field_name: str
    value: Expr
    where: BoolExpr
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Insert(Query):
    table: str
    assignments: tuple[tuple[str, Expr], ...]
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Delete(Query):
    table: str
    where: BoolExpr
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Command:
    pass


@dataclass(frozen=True)
class QueryCmd(Command):
    query: Query
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class If(Command):
    cond: BoolExpr
    body: Command
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Iterate(Command):
    count: Expr
    body: Command
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Seq(Command):
    first: Command
    second: Command
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Skip(Command):
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Transaction:
    name: str
    params: tuple[str, ...]
    body: Command
    span: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Program:
    transactions: tuple[Transaction, ...]

    def transaction(self, name: str) -> Transaction:
        for t in self.transactions:
            if t.name == name:
                return t
        raise ModelError(f"unknown transaction {name!r}")


# ---------------------------------------------------------------------------
# AST traversal helpers
# ---------------------------------------------------------------------------

def sub_exprs(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, BinOp):
        yield from sub_exprs(e.left)
        yield from sub_exprs(e.right)
    elif isinstance(e, Proj):
        yield from sub_exprs(e.index)
    elif isinstance(e, AnyValue):
        for c in bool_exprs(e.constraint):
            yield from sub_exprs_of_bool(c)


def bool_exprs(b: BoolExpr) -> Iterator[BoolExpr]:
    yield b
    if isinstance(b, Not):
        yield from bool_exprs(b.operand)
    elif isinstance(b, (And, Or)):
        yield from bool_exprs(b.left)
        yield from bool_exprs(b.right)


def sub_exprs_of_bool(b: BoolExpr) -> Iterator[Expr]:
    if isinstance(b, Cmp):
        yield from sub_exprs(b.left)
        yield from sub_exprs(b.right)


def exprs_of_bool(b: BoolExpr) -> Iterator[Expr]:
    for c in bool_exprs(b):
        yield from sub_exprs_of_bool(c)


def query_where(q: Query) -> Optional[BoolExpr]:
    if isinstance(q, (Select, SelectAgg, Update, Delete)):
        return q.where
    return None


def query_exprs(q: Query) -> Iterator[Expr]:
    """All expressions evaluated by a query outside its WHERE clause."""
    if isinstance(q, Update):
        yield q.value
    elif isinstance(q, Insert):
        for _, e in q.assignments:
            yield e


def vars_read_by_expr(e: Expr) -> set[str]:
    out: set[str] = set()
    for s in sub_exprs(e):
        if isinstance(s, (Size, Proj)):
            out.add(s.var)
    return out


def vars_read_by_bool(b: BoolExpr) -> set[str]:
    out: set[str] = set()
    for e in exprs_of_bool(b):
        out |= vars_read_by_expr(e)
    return out


def subst_iter_expr(e: Expr, k: int) -> Expr:
    """Instantiate the loop counter with the concrete copy index `k`."""
    if isinstance(e, Iter):
        return IntConst(k, span=e.span)
    if isinstance(e, BinOp):
        return BinOp(e.op, subst_iter_expr(e.left, k), subst_iter_expr(e.right, k), span=e.span)
    if isinstance(e, Proj):
        return Proj(e.field_name, e.var, subst_iter_expr(e.index, k), span=e.span)
    if isinstance(e, AnyValue):
        return AnyValue(subst_iter_bool(e.constraint, k), e.name, span=e.span)
    return e


def subst_iter_bool(b: BoolExpr, k: int) -> BoolExpr:
    if isinstance(b, Cmp):
        return Cmp(subst_iter_expr(b.left, k), b.op, subst_iter_expr(b.right, k), span=b.span)
    if isinstance(b, Not):
        return Not(subst_iter_bool(b.operand, k), span=b.span)
    if isinstance(b, And):
        return And(subst_iter_bool(b.left, k), subst_iter_bool(b.right, k), span=b.span)
    if isinstance(b, Or):
        return Or(subst_iter_bool(b.left, k), subst_iter_bool(b.right, k), span=b.span)
    return b


def subst_iter_query(q: Query, k: int) -> Query:
    if isinstance(q, Select):
        return Select(q.table, q.field_name, q.as_var, subst_iter_bool(q.where, k), span=q.span)
    if isinstance(q, SelectAgg):
        return SelectAgg(q.table, q.agg, q.field_name, q.as_var, subst_iter_bool(q.where, k), span=q.span)
    if isinstance(q, Update):
        return Update(q.table, q.field_name, subst_iter_expr(q.value, k), subst_iter_bool(q.where, k), span=q.span)
    if isinstance(q, Insert):
        return Insert(q.table, tuple((f, subst_iter_expr(e, k)) for f, e in q.assignments), span=q.span)
    if isinstance(q, Delete):
        return Delete(q.table, subst_iter_bool(q.where, k), span=q.span)
    raise ModelError(f"unknown query {q!r}")


# ---------------------------------------------------------------------------
# Loop unrolling
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuerySite:
    """One query occurrence after unrolling every loop to the global bound.

    `guards` are the IF conditions on the path to the site (loop counters
    already instantiated).  `loop_conditions` hold one (loop_id, count_expr,
    copy_index) triple per enclosing loop; the site executes only while
    copy_index <= count.
    """
    ordinal: int
    query: Query
    guards: tuple[BoolExpr, ...]
    loop_conditions: tuple[tuple[int, Expr, int], ...]

    @property
    def is_write(self) -> bool:
        return isinstance(self.query, (Update, Insert, Delete))


@dataclass(frozen=True)
class UnrolledTransaction:
    name: str
    params: tuple[str, ...]
    sites: tuple[QuerySite, ...]
    loop_sites: tuple[int, ...]  # site ordinals that start a loop copy group


def unroll(txn: Transaction, bound: int) -> UnrolledTransaction:
    """Expand every ITERATE body into `bound` guarded copies, in program order."""
    sites: list[QuerySite] = []
    loop_counter = [0]

    def walk(c: Command, guards: tuple[BoolExpr, ...]) -> None:
        if isinstance(c, Skip):
            return
        if isinstance(c, Seq):
            walk(c.first, guards)
            walk(c.second, guards)
        elif isinstance(c, If):
            walk(c.body, guards + (c.cond,))
        elif isinstance(c, Iterate):
            loop_id = loop_counter[0]
            loop_counter[0] += 1
            for k in range(1, bound + 1):
                walk_subst(c.body, guards, ((loop_id, c.count, k),), k)
        elif isinstance(c, QueryCmd):
            sites.append(QuerySite(len(sites), c.query, guards, ()))
        else:
            raise ModelError(f"unknown command {c!r}")

    def walk_subst(c: Command, guards: tuple[BoolExpr, ...],
                   loops: tuple[tuple[int, Expr, int], ...], k: int) -> None:
        if isinstance(c, Skip):
            return
        if isinstance(c, Seq):
            walk_subst(c.first, guards, loops, k)
            walk_subst(c.second, guards, loops, k)
        elif isinstance(c, If):
            walk_subst(c.body, guards + (subst_iter_bool(c.cond, k),), loops, k)
        elif isinstance(c, Iterate):
            raise ModelError("nested ITERATE is not supported")
        elif isinstance(c, QueryCmd):
            sites.append(QuerySite(len(sites), subst_iter_query(c.query, k), guards, loops))
        else:
            raise ModelError(f"unknown command {c!r}")

    walk(txn.body, ())
    loop_starts = tuple(sorted({s.ordinal for s in sites if s.loop_conditions}))
    return UnrolledTransaction(txn.name, txn.params, tuple(sites), loop_starts)


# ---------------------------------------------------------------------------
# Effects and system states
# ---------------------------------------------------------------------------

EffectId = tuple[int, int]  # (step index, ordinal within step)
RecordKey = tuple[int, ...]

INIT_INSTANCE = -1  # txn instance id of database-initialisation writes
INIT_PARTITION = "__init__"

READ = "rd"
WRITE = "wr"


@dataclass(frozen=True)
class Effect:
    id: EffectId
    kind: str  # READ | WRITE
    table: str
    record_key: RecordKey
    field_name: str
    value: Optional[int]  # always set for writes; observed value for reads
    used: bool  # False on a read marks it rd+ (never influences later behaviour)
    query_instance: tuple[int, int]  # (txn instance, site ordinal)
    txn_instance: int
    partition: str

    def __post_init__(self):
        if self.kind == WRITE and self.value is None:
            raise ModelError("write effect without a value")
        if self.kind == WRITE and self.field_name == ALIVE and self.value not in (0, 1):
            raise ModelError("alive writes carry 0 or 1 only")


@dataclass(frozen=True)
class SystemState:
    """(store, ar, vis) triple over effect ids.

    `store` maps each partition to the effects created there (cells are
    disjoint); `ar` is a strict total order given as an integer timestamp per
    effect; `vis` is the causal visibility relation, a subset of ar.
    """
    store: dict[str, frozenset[EffectId]]
    ar: dict[EffectId, int]
    vis: frozenset[tuple[EffectId, EffectId]]

    def all_effect_ids(self) -> frozenset[EffectId]:
        out: set[EffectId] = set()
        for cell in self.store.values():
            out |= cell
        return frozenset(out)

    def check_well_formed(self) -> None:
        seen: set[EffectId] = set()
        for cell in self.store.values():
            if cell & seen:
                raise ModelError("store cells are not disjoint")
            seen |= cell
        if seen != set(self.ar):
            raise ModelError("ar does not cover the effect universe")
        ts = sorted(self.ar.values())
        if len(set(ts)) != len(ts):
            raise ModelError("ar timestamps are not injective")
        for a, b in self.vis:
            if a == b:
                raise ModelError("vis is not irreflexive")
            if self.ar[a] >= self.ar[b]:
                raise ModelError("vis is not a subset of ar")


LocalView = dict[RecordKey, dict[str, int]]


# ---------------------------------------------------------------------------
# Diagnostics and validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Diagnostic:
    message: str
    span: object = field(default=None, compare=False)

    def __str__(self):
        loc = f"{self.span}: " if self.span is not None else ""
        return f"{loc}{self.message}"


def _check_expr(e: Expr, table: Optional[TableDef], bound_vars: set[str],
                params: set[str], in_where: bool, in_iter: bool,
                select_fields: dict[str, set[str]], out: list[Diagnostic]) -> None:
    if isinstance(e, IntConst):
        return
    if isinstance(e, Arg):
        if e.name not in params and not e.name.startswith("abs_"):
            out.append(Diagnostic(f"unknown name {e.name!r}", e.span))
    elif isinstance(e, BinOp):
        _check_expr(e.left, table, bound_vars, params, in_where, in_iter, select_fields, out)
        _check_expr(e.right, table, bound_vars, params, in_where, in_iter, select_fields, out)
    elif isinstance(e, AnyValue):
        _check_bool(e.constraint, None, bound_vars, params | {e.name}, False, in_iter, select_fields, out)
    elif isinstance(e, Iter):
        if not in_iter:
            out.append(Diagnostic("'iter' outside of ITERATE", e.span))
    elif isinstance(e, Size):
        if e.var not in bound_vars:
            out.append(Diagnostic(f"variable {e.var!r} not bound by an earlier SELECT", e.span))
    elif isinstance(e, Proj):
        if e.var not in bound_vars:
            out.append(Diagnostic(f"variable {e.var!r} not bound by an earlier SELECT", e.span))
        elif e.field_name not in select_fields.get(e.var, set()):
            out.append(Diagnostic(
                f"field {e.field_name!r} is not observed by the SELECT that binds {e.var!r}",
                e.span))
        _check_expr(e.index, table, bound_vars, params, in_where, in_iter, select_fields, out)
    elif isinstance(e, ThisField):
        if not in_where:
            out.append(Diagnostic("'this.' field access outside a WHERE clause", e.span))
        elif table is not None and e.field_name not in table.all_fields:
            out.append(Diagnostic(f"unknown field {e.field_name!r} in table {table.name!r}", e.span))
    else:
        out.append(Diagnostic(f"unknown expression {e!r}", None))


def _check_bool(b: BoolExpr, table: Optional[TableDef], bound_vars: set[str],
                params: set[str], in_where: bool, in_iter: bool,
                select_fields: dict[str, set[str]], out: list[Diagnostic]) -> None:
    if isinstance(b, Cmp):
        _check_expr(b.left, table, bound_vars, params, in_where, in_iter, select_fields, out)
        _check_expr(b.right, table, bound_vars, params, in_where, in_iter, select_fields, out)
    elif isinstance(b, Not):
        _check_bool(b.operand, table, bound_vars, params, in_where, in_iter, select_fields, out)
    elif isinstance(b, (And, Or)):
        _check_bool(b.left, table, bound_vars, params, in_where, in_iter, select_fields, out)
        _check_bool(b.right, table, bound_vars, params, in_where, in_iter, select_fields, out)


def observed_fields(schema: Schema, q: Select) -> set[str]:
    """Fields whose values a SELECT result variable can later project:
    the selected field, the key fields, and everything its WHERE reads."""
    t = schema.table(q.table)
    return {q.field_name} | set(t.primary_key) | where_fields(q.where)


def validate_program(schema: Schema, prog: Program) -> list[Diagnostic]:
    """Return one diagnostic per violated well-formedness rule (empty if valid)."""
    out: list[Diagnostic] = []
    names = [t.name for t in prog.transactions]
    for n in sorted(set(names)):
        if names.count(n) > 1:
            out.append(Diagnostic(f"duplicate transaction name {n!r}"))

    for txn in prog.transactions:
        params = set(txn.params)
        bound: set[str] = set()
        select_fields: dict[str, set[str]] = {}

        def walk(c: Command, in_iter: bool) -> None:
            if isinstance(c, Skip):
                return
            if isinstance(c, Seq):
                walk(c.first, in_iter)
                walk(c.second, in_iter)
            elif isinstance(c, If):
                _check_bool(c.cond, None, bound, params, False, in_iter, select_fields, out)
                walk(c.body, in_iter)
            elif isinstance(c, Iterate):
                if in_iter:
                    out.append(Diagnostic("nested ITERATE is not supported", c.span))
                    return
                _check_expr(c.count, None, bound, params, False, in_iter, select_fields, out)
                walk(c.body, True)
            elif isinstance(c, QueryCmd):
                check_query(c.query, in_iter)

        def check_query(q: Query, in_iter: bool) -> None:
            if not schema.has_table(getattr(q, "table", "")):
                out.append(Diagnostic(f"unknown table {getattr(q, 'table', None)!r}", q.span))
                return
            t = schema.table(q.table)
            if isinstance(q, (Select, SelectAgg)):
                if q.field_name not in t.all_fields:
                    out.append(Diagnostic(f"unknown field {q.field_name!r} in table {t.name!r}", q.span))
                _check_bool(q.where, t, bound, params, True, in_iter, select_fields, out)
                if isinstance(q, Select):
                    bound.add(q.as_var)
                    select_fields[q.as_var] = observed_fields(schema, q) if q.field_name in t.all_fields else set(t.all_fields)
                else:
                    bound.add(q.as_var)
                    select_fields[q.as_var] = {q.field_name}
            elif isinstance(q, Update):
                if q.field_name not in t.fields:
                    out.append(Diagnostic(f"unknown field {q.field_name!r} in table {t.name!r}", q.span))
                elif q.field_name in t.primary_key:
                    out.append(Diagnostic(f"UPDATE may not modify key field {q.field_name!r}", q.span))
                _check_expr(q.value, t, bound, params, False, in_iter, select_fields, out)
                _check_bool(q.where, t, bound, params, True, in_iter, select_fields, out)
            elif isinstance(q, Insert):
                assigned = [f for f, _ in q.assignments]
                if len(set(assigned)) != len(assigned):
                    out.append(Diagnostic("INSERT assigns a field twice", q.span))
                for f, e in q.assignments:
                    if f not in t.fields:
                        out.append(Diagnostic(f"unknown field {f!r} in table {t.name!r}", q.span))
                    _check_expr(e, t, bound, params, False, in_iter, select_fields, out)
                for f in t.fields:
                    if f not in assigned:
                        kind = "primary-key " if f in t.primary_key else ""
                        out.append(Diagnostic(f"INSERT misses {kind}field {f!r}", q.span))
            elif isinstance(q, Delete):
                _check_bool(q.where, t, bound, params, True, in_iter, select_fields, out)

        walk(txn.body, False)
    return out


# ---------------------------------------------------------------------------
# Reachability and WHERE-clause field extraction
# ---------------------------------------------------------------------------

def reachability_condition(prog_or_txn: Union[Program, Transaction], txn_name: str,
                           site_ordinal: int, bound: int = 2) -> BoolExpr:
    """Conjunction of the IF guards enclosing the given unrolled query site
    (loop counters instantiated); TRUE for a top-level site."""
    txn = prog_or_txn.transaction(txn_name) if isinstance(prog_or_txn, Program) else prog_or_txn
    unrolled = unroll(txn, bound)
    if site_ordinal < 0 or site_ordinal >= len(unrolled.sites):
        raise ModelError(f"unknown query site {txn_name}[{site_ordinal}]")
    guards = unrolled.sites[site_ordinal].guards
    cond: BoolExpr = TRUE
    for g in guards:
        cond = g if cond == TRUE else And(cond, g)
    return cond


def where_fields(phi: BoolExpr) -> set[str]:
    """Fields a WHERE clause predicates over; the liveness field is always
    scanned alongside them."""
    out = {ALIVE}
    for e in exprs_of_bool(phi):
        for s in sub_exprs(e):
            if isinstance(s, ThisField):
                out.add(s.field_name)
    return out


def is_key_lookup(table: TableDef, phi: BoolExpr) -> bool:
    """True when the WHERE is a conjunction of key-field equalities against
    record-independent expressions: the store can address the record directly
    and no table-wide scan reads are produced."""
    eqs: dict[str, bool] = {}

    def conj(b: BoolExpr) -> bool:
        if isinstance(b, And):
            return conj(b.left) and conj(b.right)
        if isinstance(b, Cmp) and b.op == "=":
            for this_side, other in ((b.left, b.right), (b.right, b.left)):
                if isinstance(this_side, ThisField) and this_side.field_name in table.primary_key:
                    if not any(isinstance(s, ThisField) for s in sub_exprs(other)):
                        eqs[this_side.field_name] = True
                        return True
            return False
        return False

    return conj(phi) and all(k in eqs for k in table.primary_key)


def key_lookup_exprs(table: TableDef, phi: BoolExpr) -> dict[str, Expr]:
    """The key-field -> expression map of a key-lookup WHERE clause."""
    out: dict[str, Expr] = {}

    def conj(b: BoolExpr) -> None:
        if isinstance(b, And):
            conj(b.left)
            conj(b.right)
        elif isinstance(b, Cmp) and b.op == "=":
            for this_side, other in ((b.left, b.right), (b.right, b.left)):
                if isinstance(this_side, ThisField) and this_side.field_name in table.primary_key:
                    out.setdefault(this_side.field_name, other)
                    return

    conj(phi)
    return out
