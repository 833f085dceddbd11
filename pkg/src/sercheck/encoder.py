"""Constraint encoding of bounded anomaly search problems.

For a fixed assignment of transaction types to instance slots (a *grounding*)
the encoder emits a self-contained, quantifier-free SMT-LIB 2 problem over
finite enumerated sorts: transaction instances, query instances, partitions,
records (a per-table budget), fields and edge kinds.  Satisfying models decode
into complete executions: timestamps (the arbitration order), partition
placement, visibility, argument and initial-state values, and the dependency
cycle the model manifests.

Clause families:

* context: program order, vis within ar, per-partition causal visibility,
  deterministic views (every query reads the arbitration-latest visible write,
  or the initial state when none is visible), select-result discipline, value
  constraints along dependency edges, reachability definitions.
* db: the consistency guarantee under test plus user constraints on the
  initial state.
* dep_necessary: every dependency edge implies its rule body (shared record,
  liveness, value binding, reachability, no interposing visible writer).
* dep_sufficient: visible writers force read dependencies on selects; ordered
  co-writers force write dependencies.
* anomaly: cycle-position selectors with the edge pattern
  D, (ST|D)*, D closed by an ST edge, optional serial-prefix transactions
  constrained to behave serializably and run before the cycle.

The solver is an external subprocess speaking SMT-LIB 2 text on stdin and
`sat`/`unsat`/`unknown` plus `get-value` bindings on stdout; the bundled
`sercheck-solve` interpreter is the default.
"""
from __future__ import annotations

import os
import re
import shlex
import subprocess
import sys
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import model as m
from .model import ALIVE
from .smtsolver import read_sexps, format_sexp

KIND_CONSTS = {"WR": "k_WR", "WW": "k_WW", "RW": "k_RW", "ST": "k_ST"}
KIND_OF_CONST = {v: k for k, v in KIND_CONSTS.items()}


class EncodingError(Exception):
    pass


class SolverFailure(Exception):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    unroll_bound: int = 2
    record_budget: int = 4
    partition_count: int = 2
    value_bound: int = 100000
    internal_only: bool = False


@dataclass(frozen=True)
class DbConstraint:
    """`empty(table)` or `table.field <op> int` on the initial state."""
    table: str
    field_name: Optional[str]  # None for emptiness
    op: str = "="
    value: int = 0

    @staticmethod
    def parse(text: str) -> "DbConstraint":
        text = text.strip()
        mo = re.fullmatch(r"empty\(\s*(\w+)\s*\)", text)
        if mo:
            return DbConstraint(mo.group(1), None)
        mo = re.fullmatch(r"(\w+)\.(\w+)\s*(<=|>=|=|<|>)\s*(-?\d+)", text)
        if mo:
            return DbConstraint(mo.group(1), mo.group(2), mo.group(3), int(mo.group(4)))
        raise EncodingError(f"cannot parse db constraint {text!r}")


# ---------------------------------------------------------------------------
# Grounding: slots and query instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Slot:
    index: int
    txn_name: str
    role: str  # "cycle" | "serial"


@dataclass
class QInst:
    qid: str
    slot: Slot
    site: m.QuerySite

    @property
    def query(self) -> m.Query:
        return self.site.query

    @property
    def qtype(self) -> tuple[str, int]:
        return (self.slot.txn_name, self.site.ordinal)


class Grounding:
    """All enumerated objects of one solver problem."""

    def __init__(self, program: m.Program, schema: m.Schema, cfg: EncoderConfig,
                 cycle_types: tuple[str, ...], serial_types: tuple[str, ...] = ()):
        self.program = program
        self.schema = schema
        self.cfg = cfg
        self.unrolled = {t.name: m.unroll(t, cfg.unroll_bound) for t in program.transactions}
        for t in program.transactions:
            for site in self.unrolled[t.name].sites:
                if isinstance(site.query, m.SelectAgg):
                    raise EncodingError(
                        f"{t.name}: aggregate SELECT sites are not encodable")
                self._check_exprs(t.name, site)
        self.slots: list[Slot] = []
        for name in serial_types:
            self.slots.append(Slot(len(self.slots), name, "serial"))
        for name in cycle_types:
            self.slots.append(Slot(len(self.slots), name, "cycle"))
        self.insts: list[QInst] = []
        for slot in self.slots:
            for site in self.unrolled[slot.txn_name].sites:
                self.insts.append(QInst(f"q{len(self.insts)}", slot, site))
        self.by_slot: dict[int, list[QInst]] = {}
        for qi in self.insts:
            self.by_slot.setdefault(qi.slot.index, []).append(qi)
        self.tables = sorted({qi.query.table for qi in self.insts})
        self.records: dict[str, list[str]] = {
            t: [f"r_{t}_{i}" for i in range(cfg.record_budget)] for t in self.tables}
        self.partitions = [f"p{i}" for i in range(cfg.partition_count)]
        self.fields: dict[str, list[str]] = {
            t: list(schema.table(t).all_fields) for t in self.tables}

    def _check_exprs(self, txn: str, site: m.QuerySite) -> None:
        exprs = list(m.query_exprs(site.query))
        w = m.query_where(site.query)
        bools = list(site.guards) + ([w] if w is not None else [])
        for _lid, count, _k in site.loop_conditions:
            exprs.append(count)
        for b in bools:
            exprs.extend(m.exprs_of_bool(b))
        for e in exprs:
            for s in m.sub_exprs(e):
                if isinstance(s, m.BinOp):
                    if s.op == "/":
                        raise EncodingError(f"{txn}: division is not encodable")
                    if s.op == "*" and not (_const_expr(s.left) or _const_expr(s.right)):
                        raise EncodingError(f"{txn}: nonlinear multiplication is not encodable")
                if isinstance(s, m.Proj):
                    for t in m.sub_exprs(s.index):
                        if isinstance(t, m.ThisField):
                            raise EncodingError(f"{txn}: record field inside proj index")

    # -- naming ---------------------------------------------------------------

    def tslot(self, slot: Slot) -> str:
        return f"t{slot.index}"

    def rec(self, table: str, i: int) -> str:
        return self.records[table][i]

    def fld(self, table: str, name: str) -> str:
        return f"fld_{table}_{name}"

    def table_of_rec(self, rec: str) -> str:
        return rec.split("_")[1]

    def cycle_insts(self) -> list[QInst]:
        return [qi for qi in self.insts if qi.slot.role == "cycle"]

    def serial_slots(self) -> list[Slot]:
        return [s for s in self.slots if s.role == "serial"]

    # -- effect-real field sets -------------------------------------------------

    def read_fields(self, qi: QInst) -> set[str]:
        q = qi.query
        table = self.schema.table(q.table)
        w = m.query_where(q)
        if w is None:
            return set()
        lookup = m.is_key_lookup(table, w)
        if isinstance(q, m.Select):
            return {q.field_name} if lookup else (m.where_fields(w) | {q.field_name})
        return set() if lookup else m.where_fields(w)

    def write_fields(self, qi: QInst) -> set[str]:
        q = qi.query
        if isinstance(q, m.Update):
            return {q.field_name}
        if isinstance(q, m.Insert):
            return set(self.schema.table(q.table).value_fields) | {ALIVE}
        if isinstance(q, m.Delete):
            return {ALIVE}
        return set()

    def view_fields(self, qi: QInst) -> set[str]:
        """Fields of a query's own view the encoding refers to."""
        q = qi.query
        w = m.query_where(q)
        out = {ALIVE}
        if w is not None:
            out |= m.where_fields(w)
        if isinstance(q, m.Select):
            out |= {q.field_name}
        pk = set(self.schema.table(q.table).primary_key)
        return out - pk

    def writers_on(self, table: str, fld: str) -> list[QInst]:
        return [qi for qi in self.insts
                if qi.query.table == table and fld in self.write_fields(qi)]

    def compatible(self, kind: str) -> list[tuple[str, str, QInst, QInst]]:
        """(record, field, q1, q2) tuples a dependency atom exists for."""
        out = []
        for a in self.insts:
            for b in self.insts:
                if a is b or a.slot.index == b.slot.index:
                    continue
                if a.query.table != b.query.table:
                    continue
                table = a.query.table
                if kind == "WR":
                    flds = self.write_fields(a) & self.read_fields(b)
                elif kind == "RW":
                    flds = self.read_fields(a) & self.write_fields(b)
                else:
                    flds = self.write_fields(a) & self.write_fields(b)
                for f in sorted(flds):
                    for r in self.records[table]:
                        out.append((r, f, a, b))
        return out

    # -- static same-transaction relations ----------------------------------------

    def st_static(self, a: QInst, b: QInst) -> bool:
        return a is not b and a.slot.index == b.slot.index

    def stp_static(self, a: QInst, b: QInst) -> bool:
        """ST+ holds when the pair additionally carries read-to-write dataflow:
        one side's SELECT variable feeds the other side's expressions or the
        guards on its path (these are the cycles whose reads matter)."""
        if not self.st_static(a, b):
            return False
        first, second = (a, b) if a.site.ordinal < b.site.ordinal else (b, a)
        if not isinstance(first.query, m.Select):
            return False
        var = first.query.as_var
        consumed: set[str] = set()
        w = m.query_where(second.query)
        if w is not None:
            consumed |= m.vars_read_by_bool(w)
        for e in m.query_exprs(second.query):
            consumed |= m.vars_read_by_expr(e)
        for g in second.site.guards:
            consumed |= m.vars_read_by_bool(g)
        for _lid, count, _k in second.site.loop_conditions:
            consumed |= m.vars_read_by_expr(count)
        return var in consumed


def _const_expr(e: m.Expr) -> bool:
    return all(isinstance(s, (m.IntConst, m.BinOp)) for s in m.sub_exprs(e))


# ---------------------------------------------------------------------------
# Term compilation
# ---------------------------------------------------------------------------

class Compiler:
    """Compiles program expressions of one query instance into solver terms."""

    def __init__(self, g: Grounding, out: "Emitter"):
        self.g = g
        self.out = out
        self._proj_cache: dict[tuple[str, int], str] = {}
        self._proj_counter = 0
        self.site_conds: dict[str, list[str]] = {}  # qid -> well-formedness conditions

    def binder(self, qi: QInst, var: str) -> QInst:
        for other in reversed(self.g.by_slot[qi.slot.index]):
            if other.site.ordinal < qi.site.ordinal \
                    and isinstance(other.query, m.Select) and other.query.as_var == var:
                return other
        raise EncodingError(f"variable {var!r} has no binding SELECT before "
                            f"{qi.slot.txn_name}[{qi.site.ordinal}]")

    def arg(self, qi: QInst, name: str) -> str:
        return f"arg_t{qi.slot.index}_{name}"

    def expr(self, qi: QInst, e: m.Expr, rec: Optional[str]) -> str:
        if isinstance(e, m.IntConst):
            return str(e.value) if e.value >= 0 else f"(- {-e.value})"
        if isinstance(e, m.Arg):
            return self.arg(qi, e.name)
        if isinstance(e, m.AnyValue):
            return self.arg(qi, e.name)
        if isinstance(e, m.BinOp):
            a = self.expr(qi, e.left, rec)
            b = self.expr(qi, e.right, rec)
            op = {"+": "+", "-": "-", "*": "*"}.get(e.op)
            if op is None:
                raise EncodingError("division is not encodable")
            return f"({op} {a} {b})"
        if isinstance(e, m.Size):
            return f"(res_size {self.binder(qi, e.var).qid})"
        if isinstance(e, m.Proj):
            return self.proj(qi, e)
        if isinstance(e, m.ThisField):
            if rec is None:
                raise EncodingError("'this.' outside a WHERE compilation")
            table = qi.query.table
            tdef = self.g.schema.table(table)
            if e.field_name in tdef.primary_key:
                return f"(key_{table}_{e.field_name} {rec})"
            return f"(val_rd_{table}_{e.field_name} {qi.qid} {rec})"
        if isinstance(e, m.Iter):
            raise EncodingError("loop counter survived unrolling")
        raise EncodingError(f"cannot compile {e!r}")

    def proj(self, qi: QInst, e: m.Proj) -> str:
        key = (qi.qid, id(e))
        if key in self._proj_cache:
            return self._proj_cache[key]
        sel = self.binder(qi, e.var)
        table = sel.query.table
        tdef = self.g.schema.table(table)
        idx = self.expr(qi, e.index, None)
        name = f"proj_{qi.qid}_{self._proj_counter}"
        self._proj_counter += 1
        self.out.int_const(name)
        conds = self.site_conds.setdefault(qi.qid, [])
        conds.append(f"(<= 1 {idx})")
        conds.append(f"(<= {idx} (res_size {sel.qid}))")
        for rec in self.g.records[table]:
            if e.field_name in tdef.primary_key:
                val = f"(key_{table}_{e.field_name} {rec})"
            else:
                val = f"(val_rd_{table}_{e.field_name} {sel.qid} {rec})"
            self.out.add(f"(assert (=> (and (sel {sel.qid} {rec}) "
                         f"(= (pos_in {sel.qid} {rec}) {idx})) (= {name} {val})))")
        self._proj_cache[key] = name
        return name

    def boolean(self, qi: QInst, b: m.BoolExpr, rec: Optional[str]) -> str:
        if isinstance(b, m.BoolConst):
            return "true" if b.value else "false"
        if isinstance(b, m.Cmp):
            a = self.expr(qi, b.left, rec)
            c = self.expr(qi, b.right, rec)
            op = {"<": "<", "<=": "<=", "=": "=", ">": ">", ">=": ">="}[b.op]
            return f"({op} {a} {c})"
        if isinstance(b, m.Not):
            return f"(not {self.boolean(qi, b.operand, rec)})"
        if isinstance(b, m.And):
            return f"(and {self.boolean(qi, b.left, rec)} {self.boolean(qi, b.right, rec)})"
        if isinstance(b, m.Or):
            return f"(or {self.boolean(qi, b.left, rec)} {self.boolean(qi, b.right, rec)})"
        raise EncodingError(f"cannot compile {b!r}")


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------

def conj(parts: Iterable[str]) -> str:
    parts = [p for p in parts if p != "true"]
    if not parts:
        return "true"
    if len(parts) == 1:
        return parts[0]
    return "(and " + " ".join(parts) + ")"


def disj(parts: Iterable[str]) -> str:
    parts = list(parts)
    if not parts:
        return "false"
    if len(parts) == 1:
        return parts[0]
    return "(or " + " ".join(parts) + ")"


class Emitter:
    def __init__(self, cfg: EncoderConfig):
        self.cfg = cfg
        self.lines: list[str] = []
        self._int_consts: set[str] = set()
        self.value_terms: list[str] = []  # canonicalised (second objective)

    def add(self, line: str) -> None:
        self.lines.append(line)

    def comment(self, text: str) -> None:
        self.lines.append(f"; {text}")

    def int_const(self, name: str, lo: Optional[int] = None, hi: Optional[int] = None,
                  canonical: bool = True) -> str:
        if name in self._int_consts:
            return name
        self._int_consts.add(name)
        self.add(f"(declare-const {name} Int)")
        b = self.cfg.value_bound
        lo = -b if lo is None else lo
        hi = b if hi is None else hi
        self.add(f"(assert (and (<= {_i(lo)} {name}) (<= {name} {_i(hi)})))")
        if canonical:
            aux = f"mag_{name}"
            self._int_consts.add(aux)
            self.add(f"(declare-const {aux} Int)")
            self.add(f"(assert (and (<= 0 {aux}) (<= {aux} {_i(hi if hi > -lo else -lo)})))")
            self.add(f"(assert (and (<= {name} {aux}) (<= (- 0 {name}) {aux})))")
            self.value_terms.append(aux)
        return name

    def int_fun_app(self, fun: str, args: tuple[str, ...], lo: int, hi: int,
                    canonical: bool = False) -> str:
        """Bound one ground application of an Int-valued declared function."""
        app = f"({fun} {' '.join(args)})"
        self.add(f"(assert (and (<= {_i(lo)} {app}) (<= {app} {_i(hi)})))")
        return app

    def text(self) -> str:
        return "\n".join(self.lines) + "\n"


def _i(v: int) -> str:
    return str(v) if v >= 0 else f"(- {-v})"


# ---------------------------------------------------------------------------
# The problem builder
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CycleShape:
    """Structure of one anomaly cycle: per edge (source type, target type,
    kind, witness field or None), the closing edge last."""
    entries: tuple[tuple[tuple[str, int], tuple[str, int], str, Optional[str]], ...]

    def length(self) -> int:
        return len(self.entries)

    def fingerprint(self) -> tuple:
        seq = list(self.entries)
        return min(tuple(seq[i:] + seq[:i]) for i in range(len(seq)))

    def txn_types(self) -> tuple[str, ...]:
        return tuple(sorted({t[0] for e in self.entries for t in (e[0], e[1])}))


class ProblemBuilder:
    """Builds one solver problem for a fixed grounding."""

    def __init__(self, g: Grounding, spec_parts: frozenset[str],
                 db_constraints: tuple[DbConstraint, ...] = ()):
        self.g = g
        self.cfg = g.cfg
        self.spec_parts = spec_parts
        self.db_constraints = db_constraints
        self.out = Emitter(g.cfg)
        self.comp = Compiler(g, self.out)
        self._match_cache: dict[tuple[str, str], str] = {}
        self._where_cache: dict[tuple[str, str], str] = {}

    # -- formula helpers ------------------------------------------------------

    def where_of(self, qi: QInst, rec: str) -> str:
        key = (qi.qid, rec)
        if key not in self._where_cache:
            w = m.query_where(qi.query)
            self._where_cache[key] = ("true" if w is None
                                      else self.comp.boolean(qi, w, rec))
        return self._where_cache[key]

    def alive(self, rec: str, qi: QInst) -> str:
        return f"(Alive {rec} {qi.qid})"

    def matches(self, qi: QInst, rec: str) -> str:
        """The query acts on the record: WHERE holds and the record is alive
        in the query's view (key equality for INSERT)."""
        key = (qi.qid, rec)
        if key in self._match_cache:
            return self._match_cache[key]
        q = qi.query
        if isinstance(q, m.Insert):
            table = self.g.schema.table(q.table)
            assigns = dict(q.assignments)
            parts = []
            for k in table.primary_key:
                kexpr = self.comp.expr(qi, assigns[k], None)
                parts.append(f"(= (key_{q.table}_{k} {rec}) {kexpr})")
            formula = conj(parts)
        else:
            formula = conj([self.where_of(qi, rec), self.alive(rec, qi)])
        self._match_cache[key] = formula
        return formula

    def reach(self, qi: QInst) -> str:
        return f"(Lambda {qi.qid})"

    def vis(self, a: QInst, b: QInst) -> str:
        return f"(vis {a.qid} {b.qid})"

    def ar(self, a: QInst, b: QInst) -> str:
        return f"(< (ts {a.qid}) (ts {b.qid}))"

    def atom(self, kind: str, rec: str, fld: str, a: QInst, b: QInst) -> str:
        return f"({kind} {rec} {self.g.fld(a.query.table, fld)} {a.qid} {b.qid})"

    def val_wr(self, qi: QInst, rec: str, fld: str) -> str:
        return f"(val_wr_{qi.query.table}_{fld} {qi.qid} {rec})"

    def val_rd(self, qi: QInst, rec: str, fld: str) -> str:
        return f"(val_rd_{qi.query.table}_{fld} {qi.qid} {rec})"

    def written_value(self, qi: QInst, fld: str) -> Optional[str]:
        """Solver term for the value the query writes to fld, if static."""
        q = qi.query
        if isinstance(q, m.Update) and fld == q.field_name:
            return self.comp.expr(qi, q.value, None)
        if isinstance(q, m.Insert):
            if fld == ALIVE:
                return "1"
            assigns = dict(q.assignments)
            if fld in assigns:
                return self.comp.expr(qi, assigns[fld], None)
        if isinstance(q, m.Delete) and fld == ALIVE:
            return "0"
        return None

    def no_visible_writer_after(self, w: QInst, reader: QInst, rec: str, fld: str) -> str:
        """No other writer of (rec, fld) both visible to the reader and
        arbitration-later than w."""
        parts = []
        for w2 in self.g.writers_on(w.query.table, fld):
            if w2 is w or w2 is reader:
                continue
            parts.append(f"(not (and {self.reach(w2)} {self.matches(w2, rec)} "
                         f"{self.vis(w2, reader)} {self.ar(w, w2)}))")
        return conj(parts)

    def visible_writers_before(self, reader: QInst, w: QInst, rec: str, fld: str) -> str:
        """Every writer of (rec, fld) visible to the reader precedes w."""
        parts = []
        for w2 in self.g.writers_on(w.query.table, fld):
            if w2 is reader:
                continue
            parts.append(f"(=> (and {self.reach(w2)} {self.matches(w2, rec)} "
                         f"{self.vis(w2, reader)}) {self.ar(w2, w)})")
        return conj(parts)

    # -- declarations -----------------------------------------------------------

    def emit_declarations(self) -> None:
        g, out = self.g, self.out
        out.comment("sorts and domains")
        for sort in ("TSort", "QSort", "PSort", "RSort", "FSort", "KSort"):
            out.add(f"(declare-sort {sort} 0)")

        def domain(sort: str, elems: list[str]) -> None:
            for e in elems:
                out.add(f"(declare-const {e} {sort})")
            if elems:
                out.add(f"(assert (distinct {' '.join(elems)}))")

        domain("TSort", [g.tslot(s) for s in g.slots])
        domain("QSort", [qi.qid for qi in g.insts])
        domain("PSort", g.partitions)
        recs = [r for t in g.tables for r in g.records[t]]
        domain("RSort", recs)
        flds = [g.fld(t, f) for t in g.tables for f in g.fields[t]] + ["fld_none"]
        domain("FSort", flds)
        domain("KSort", [KIND_CONSTS[k] for k in ("ST", "WR", "WW", "RW")])

        out.comment("uninterpreted functions")
        out.add("(declare-fun txn (QSort) TSort)")
        out.add("(declare-fun tau (QSort) PSort)")
        out.add("(declare-fun ts (QSort) Int)")
        out.add("(declare-fun ar (QSort QSort) Bool)")
        out.add("(declare-fun vis (QSort QSort) Bool)")
        out.add("(declare-fun ST (QSort QSort) Bool)")
        out.add("(declare-fun STP (QSort QSort) Bool)")
        out.add("(declare-fun Lambda (QSort) Bool)")
        out.add("(declare-fun Alive (RSort QSort) Bool)")
        for kind in ("WR", "WW", "RW"):
            out.add(f"(declare-fun {kind} (RSort FSort QSort QSort) Bool)")
            out.add(f"(declare-fun mu_nec_{kind.lower()} (RSort FSort QSort QSort) Bool)")
        out.add("(declare-fun mu_suf_wr (RSort FSort QSort QSort) Bool)")
        out.add("(declare-fun mu_suf_ww (RSort FSort QSort QSort) Bool)")
        for kind in ("WR", "WW", "RW"):
            out.add(f"(declare-fun {kind}q (QSort QSort) Bool)")
        out.add("(declare-fun D (QSort QSort) Bool)")
        out.add("(declare-fun sel (QSort RSort) Bool)")
        out.add("(declare-fun pos_in (QSort RSort) Int)")
        out.add("(declare-fun res_size (QSort) Int)")
        for t in g.tables:
            tdef = g.schema.table(t)
            for f in tdef.primary_key:
                out.add(f"(declare-fun key_{t}_{f} (RSort) Int)")
            for f in tdef.all_fields:
                if f not in tdef.primary_key:
                    out.add(f"(declare-fun init_{t}_{f} (RSort) Int)")
                out.add(f"(declare-fun val_rd_{t}_{f} (QSort RSort) Int)")
                out.add(f"(declare-fun val_wr_{t}_{f} (QSort RSort) Int)")

        out.comment("instance metadata and bounds")
        nq = len(g.insts)
        for qi in g.insts:
            out.add(f"(assert (= (txn {qi.qid}) {g.tslot(qi.slot)}))")
            out.add(f"(assert (and (<= 0 (ts {qi.qid})) (<= (ts {qi.qid}) {nq - 1})))")
        if nq > 1:
            out.add("(assert (distinct " + " ".join(f"(ts {qi.qid})" for qi in g.insts) + "))")
        for a in g.insts:
            for b in g.insts:
                if a is not b:
                    out.add(f"(assert (= (ar {a.qid} {b.qid}) {self.ar(a, b)}))")
                    st = "true" if g.st_static(a, b) else "false"
                    stp = "true" if g.stp_static(a, b) else "false"
                    out.add(f"(assert (= (ST {a.qid} {b.qid}) {st}))")
                    out.add(f"(assert (= (STP {a.qid} {b.qid}) {stp}))")
        b = self.cfg.value_bound
        for t in g.tables:
            tdef = g.schema.table(t)
            for rec in g.records[t]:
                for f in tdef.primary_key:
                    out.int_fun_app(f"key_{t}_{f}", (rec,), -b, b)
                for f in tdef.all_fields:
                    hi = 1 if f == ALIVE else b
                    lo = 0 if f == ALIVE else -b
                    if f not in tdef.primary_key:
                        out.int_fun_app(f"init_{t}_{f}", (rec,), lo, hi)
                    for qi in g.insts:
                        if qi.query.table != t:
                            continue
                        out.int_fun_app(f"val_rd_{t}_{f}", (qi.qid, rec), lo, hi)
                        out.int_fun_app(f"val_wr_{t}_{f}", (qi.qid, rec), lo, hi)
            # canonical record order and key distinctness
            for i in range(len(g.records[t]) - 1):
                r1, r2 = g.rec(t, i), g.rec(t, i + 1)
                pk = tdef.primary_key
                lex = f"(< (key_{t}_{pk[0]} {r1}) (key_{t}_{pk[0]} {r2}))"
                for j in range(1, len(pk)):
                    eqs = conj([f"(= (key_{t}_{pk[k]} {r1}) (key_{t}_{pk[k]} {r2}))"
                                for k in range(j)])
                    lex = disj([lex, conj([eqs, f"(< (key_{t}_{pk[j]} {r1}) (key_{t}_{pk[j]} {r2}))"])])
                out.add(f"(assert {lex})")
        # transaction arguments and abstract values
        for slot in g.slots:
            txn = g.program.transaction(slot.txn_name)
            for p in txn.params:
                out.int_const(f"arg_t{slot.index}_{p}")
            for qi in g.by_slot[slot.index]:
                for e in self._site_exprs(qi):
                    for s in m.sub_exprs(e):
                        if isinstance(s, m.AnyValue):
                            name = out.int_const(f"arg_t{slot.index}_{s.name}")
                            cond = self.comp.boolean(qi, s.constraint, None)
                            out.add(f"(assert {cond})")

    def _site_exprs(self, qi: QInst) -> list[m.Expr]:
        exprs = list(m.query_exprs(qi.query))
        w = m.query_where(qi.query)
        bools = list(qi.site.guards) + ([w] if w is not None else [])
        for _lid, count, _k in qi.site.loop_conditions:
            exprs.append(count)
        for bexp in bools:
            exprs.extend(m.exprs_of_bool(bexp))
        return exprs

    # -- context clauses -----------------------------------------------------------

    def emit_context(self) -> None:
        g, out = self.g, self.out
        out.comment("context: execution well-formedness")
        # program order within each slot
        for slot in g.slots:
            insts = g.by_slot[slot.index]
            for a, b in zip(insts, insts[1:]):
                out.add(f"(assert {self.ar(a, b)})")
        for a in g.insts:
            for b in g.insts:
                if a is b:
                    continue
                out.add(f"(assert (=> {self.vis(a, b)} {self.ar(a, b)}))")
                out.add(f"(assert (=> (and {self.ar(a, b)} (= (tau {a.qid}) (tau {b.qid})))"
                        f" {self.vis(a, b)}))")
        out.comment("context: reachability")
        for qi in g.insts:
            parts = [self.comp.boolean(qi, gd, None) for gd in qi.site.guards]
            for _lid, count, k in qi.site.loop_conditions:
                parts.append(f"(<= {k} {self.comp.expr(qi, count, None)})")
            # compile value/assignment expressions so their well-formedness
            # conditions (projection bounds) register for this site
            for e in m.query_exprs(qi.query):
                self.comp.expr(qi, e, None)
            for rec in g.records[qi.query.table]:
                self.where_of(qi, rec)
            parts += self.comp.site_conds.get(qi.qid, [])
            out.add(f"(assert (= {self.reach(qi)} {conj(parts)}))")

        out.comment("context: liveness views and select results")
        for qi in g.insts:
            table = qi.query.table
            for rec in g.records[table]:
                out.add(f"(assert (= {self.alive(rec, qi)} "
                        f"(= (val_rd_{table}_{ALIVE} {qi.qid} {rec}) 1)))")
            if isinstance(qi.query, m.Select):
                recs = g.records[table]
                for i, rec in enumerate(recs):
                    out.add(f"(assert (= (sel {qi.qid} {rec}) {self.matches(qi, rec)}))")
                    before = [f"(ite (sel {qi.qid} {r2}) 1 0)" for r2 in recs[:i]]
                    total = "(+ " + " ".join(["1"] + before) + ")" if before else "1"
                    out.add(f"(assert (= (pos_in {qi.qid} {rec}) {total}))")
                size = "(+ " + " ".join(f"(ite (sel {qi.qid} {r}) 1 0)" for r in recs) + ")" \
                    if recs else "0"
                out.add(f"(assert (= (res_size {qi.qid}) {size}))")

        out.comment("context: written-value bindings")
        for qi in g.insts:
            for fld in sorted(self.g.write_fields(qi)):
                term = self.written_value(qi, fld)
                if term is None:
                    continue
                for rec in g.records[qi.query.table]:
                    out.add(f"(assert (=> (and {self.reach(qi)} {self.matches(qi, rec)}) "
                            f"(= {self.val_wr(qi, rec, fld)} {term})))")
            if isinstance(qi.query, m.Insert):
                out.add(f"(assert (=> {self.reach(qi)} "
                        f"{disj(self.matches(qi, rec) for rec in g.records[qi.query.table])}))")

        out.comment("context: deterministic views (latest visible write or initial state)")
        for qi in g.insts:
            table = qi.query.table
            tdef = g.schema.table(table)
            for fld in sorted(self.g.view_fields(qi)):
                writers = [w for w in g.writers_on(table, fld) if w is not qi]
                for rec in g.records[table]:
                    def ws(w: QInst) -> str:
                        return conj([self.reach(w), self.matches(w, rec), self.vis(w, qi)])
                    for w in writers:
                        others = conj([f"(=> {ws(w2)} {self.ar(w2, w)})"
                                       for w2 in writers if w2 is not w])
                        out.add(f"(assert (=> (and {ws(w)} {others}) "
                                f"(= {self.val_rd(qi, rec, fld)} {self.val_wr(w, rec, fld)})))")
                    none_vis = conj([f"(not {ws(w)})" for w in writers])
                    out.add(f"(assert (=> {none_vis} "
                            f"(= {self.val_rd(qi, rec, fld)} (init_{table}_{fld} {rec}))))")

        out.comment("context: dependency atoms imply visibility/arbitration and value relations")
        for kind in ("WR", "WW", "RW"):
            compat = set()
            for rec, fld, a, b in g.compatible(kind):
                compat.add((rec, fld, a.qid, b.qid))
                atom = self.atom(kind, rec, fld, a, b)
                if kind == "WR":
                    out.add(f"(assert (=> {atom} (and {self.vis(a, b)} "
                            f"(= {self.val_wr(a, rec, fld)} {self.val_rd(b, rec, fld)}))))")
                elif kind == "WW":
                    out.add(f"(assert (=> {atom} {self.ar(a, b)}))")
                else:
                    out.add(f"(assert (=> {atom} (and (not {self.vis(b, a)}) "
                            f"(not (= {self.val_rd(a, rec, fld)} {self.val_wr(b, rec, fld)})))))")
            # freeze incompatible atoms to false and define query-level projections
            for a in g.insts:
                for b in g.insts:
                    if a is b:
                        continue
                    present = []
                    for t in g.tables:
                        for fld in g.fields[t]:
                            for rec in g.records[t]:
                                if (rec, fld, a.qid, b.qid) in compat:
                                    present.append(
                                        self.atom(kind, rec, fld, a, b))
                                else:
                                    out.add(f"(assert (not ({kind} {rec} "
                                            f"{g.fld(t, fld)} {a.qid} {b.qid})))")
                    out.add(f"(assert (= ({kind}q {a.qid} {b.qid}) {disj(present)}))")
        for a in g.insts:
            for b in g.insts:
                if a is not b:
                    out.add(f"(assert (= (D {a.qid} {b.qid}) "
                            f"(or (WRq {a.qid} {b.qid}) (WWq {a.qid} {b.qid}) "
                            f"(RWq {a.qid} {b.qid}))))")

    # -- db clauses -------------------------------------------------------------

    def emit_db(self) -> None:
        g, out = self.g, self.out
        out.comment("db: guarantee under test and user init constraints")
        parts = self.spec_parts
        insts = g.insts

        def rc_of(c: QInst) -> None:
            for s in g.slots:
                if s.index == c.slot.index:
                    continue
                group = g.by_slot[s.index]
                for x in group:
                    for y in group:
                        if x is not y:
                            out.add(f"(assert (=> {self.vis(x, c)} {self.vis(y, c)}))")

        def rr_of(c: QInst) -> None:
            for cp in g.by_slot[c.slot.index]:
                if cp is c:
                    continue
                for w in insts:
                    if w.slot.index == c.slot.index:
                        continue
                    out.add(f"(assert (=> {self.vis(w, c)} {self.vis(w, cp)}))")

        def lin_of(c: QInst) -> None:
            for w in insts:
                if w is not c:
                    out.add(f"(assert (=> {self.ar(w, c)} {self.vis(w, c)}))")

        if "cv" in parts or "cc" in parts:
            for a in insts:
                for b in insts:
                    for c in insts:
                        if a is not b and b is not c and a is not c:
                            out.add(f"(assert (=> (and {self.vis(a, b)} {self.vis(b, c)}) "
                                    f"{self.vis(a, c)}))")
        if "cc" in parts:
            for s in g.slots:
                group = g.by_slot[s.index]
                for x, y in zip(group, group[1:]):
                    out.add(f"(assert (or {self.vis(x, y)} {self.vis(y, x)}))")
        for c in insts:
            if "rc" in parts:
                rc_of(c)
            if "rr" in parts:
                rr_of(c)
            if "lin" in parts:
                lin_of(c)
        self._ser_helpers = (rc_of, rr_of, lin_of)

        for dc in self.db_constraints:
            if dc.table not in g.tables:
                if not g.schema.has_table(dc.table):
                    raise EncodingError(f"db constraint on unknown table {dc.table!r}")
                continue
            tdef = g.schema.table(dc.table)
            for rec in g.records[dc.table]:
                if dc.field_name is None:
                    out.add(f"(assert (= (init_{dc.table}_{ALIVE} {rec}) 0))")
                elif dc.field_name in tdef.primary_key:
                    out.add(f"(assert ({dc.op} (key_{dc.table}_{dc.field_name} {rec}) "
                            f"{_i(dc.value)}))")
                else:
                    out.add(f"(assert ({dc.op} (init_{dc.table}_{dc.field_name} {rec}) "
                            f"{_i(dc.value)}))")

    # -- dependency rules ----------------------------------------------------------

    def emit_dep_necessary(self) -> None:
        g, out = self.g, self.out
        out.comment("dep-necessary: every dependency edge implies its rule body")
        for rec, fld, w, r in g.compatible("WR"):
            body = conj([
                self.reach(w), self.reach(r),
                self.matches(w, rec),
                self.where_of(r, rec),
                self.alive(rec, r) if fld != ALIVE else "true",
                self.vis(w, r),
                self.no_visible_writer_after(w, r, rec, fld),
            ])
            out.add(f"(assert (= (mu_nec_wr {rec} {g.fld(w.query.table, fld)} "
                    f"{w.qid} {r.qid}) {body}))")
            out.add(f"(assert (=> {self.atom('WR', rec, fld, w, r)} "
                    f"(mu_nec_wr {rec} {g.fld(w.query.table, fld)} {w.qid} {r.qid})))")
        for rec, fld, r, w in g.compatible("RW"):
            body = conj([
                self.reach(r), self.reach(w),
                self.where_of(r, rec),
                self.alive(rec, r) if fld != ALIVE else "true",
                self.matches(w, rec),
                self.visible_writers_before(r, w, rec, fld),
            ])
            out.add(f"(assert (= (mu_nec_rw {rec} {g.fld(r.query.table, fld)} "
                    f"{r.qid} {w.qid}) {body}))")
            out.add(f"(assert (=> {self.atom('RW', rec, fld, r, w)} "
                    f"(mu_nec_rw {rec} {g.fld(r.query.table, fld)} {r.qid} {w.qid})))")
        for rec, fld, w1, w2 in g.compatible("WW"):
            body = conj([
                self.reach(w1), self.reach(w2),
                self.matches(w1, rec), self.matches(w2, rec),
            ])
            out.add(f"(assert (= (mu_nec_ww {rec} {g.fld(w1.query.table, fld)} "
                    f"{w1.qid} {w2.qid}) {body}))")
            out.add(f"(assert (=> {self.atom('WW', rec, fld, w1, w2)} "
                    f"(mu_nec_ww {rec} {g.fld(w1.query.table, fld)} {w1.qid} {w2.qid})))")

    def emit_dep_sufficient(self) -> None:
        g, out = self.g, self.out
        out.comment("dep-sufficient: visible writers force WR on selects; "
                    "ordered co-writers force WW")
        for rec, fld, w, r in g.compatible("WR"):
            if not isinstance(r.query, m.Select):
                continue
            body = conj([
                self.reach(w), self.reach(r),
                self.vis(w, r),
                self.matches(w, rec),
                self.where_of(r, rec),
                self.alive(rec, r) if fld != ALIVE else "true",
                self.no_visible_writer_after(w, r, rec, fld),
            ])
            fldc = g.fld(w.query.table, fld)
            out.add(f"(assert (= (mu_suf_wr {rec} {fldc} {w.qid} {r.qid}) {body}))")
            out.add(f"(assert (=> (mu_suf_wr {rec} {fldc} {w.qid} {r.qid}) "
                    f"{self.atom('WR', rec, fld, w, r)}))")
        for rec, fld, w1, w2 in g.compatible("WW"):
            body = conj([
                self.reach(w1), self.reach(w2),
                self.matches(w1, rec), self.matches(w2, rec),
                self.ar(w1, w2),
            ])
            fldc = g.fld(w1.query.table, fld)
            out.add(f"(assert (= (mu_suf_ww {rec} {fldc} {w1.qid} {w2.qid}) {body}))")
            out.add(f"(assert (=> (mu_suf_ww {rec} {fldc} {w1.qid} {w2.qid}) "
                    f"{self.atom('WW', rec, fld, w1, w2)}))")

    # -- anomaly clause ---------------------------------------------------------

    def emit_cycle(self, length: int) -> None:
        """Cycle selectors pos_1..pos_length over the cycle-slot instances."""
        g, out = self.g, self.out
        if length < 3:
            raise EncodingError("cycle length is at least 3")
        cyc = g.cycle_insts()
        out.comment(f"anomaly: dependency cycle of length {length}")
        internal = self.cfg.internal_only
        for i in range(1, length + 1):
            out.add(f"(declare-const pos_{i} QSort)")
            out.add(f"(assert {disj(f'(= pos_{i} {qi.qid})' for qi in cyc)})")
            out.add(f"(assert {disj(f'(and (= pos_{i} {qi.qid}) (Lambda {qi.qid}))' for qi in cyc)})")
        out.add(f"(assert (distinct {' '.join(f'pos_{i}' for i in range(1, length + 1))}))")
        for i in range(1, length):
            out.add(f"(declare-const ekind_{i} KSort)")
            out.add(f"(declare-const efld_{i} FSort)")
            if i == 1 or i == length - 1:
                out.add(f"(assert (not (= ekind_{i} k_ST)))")
            out.add(f"(assert (= (= ekind_{i} k_ST) (= efld_{i} fld_none)))")
        out.add(f"(declare-const efld_{length} FSort)")
        out.add(f"(assert (= efld_{length} fld_none))")

        st_rel = "STP" if internal else "ST"
        for i in range(1, length):
            a_var, b_var = f"pos_{i}", f"pos_{i + 1}"
            for a in cyc:
                for b in cyc:
                    if a is b:
                        continue
                    guard = f"(and (= {a_var} {a.qid}) (= {b_var} {b.qid}))"
                    # ST hop
                    st_ok = "true" if (g.stp_static(a, b) if internal else g.st_static(a, b)) \
                        else "false"
                    out.add(f"(assert (=> (and {guard} (= ekind_{i} k_ST)) {st_ok}))")
                    # dependency hops, with the witness field recorded
                    for kind in ("WR", "WW", "RW"):
                        options = []
                        for rec, fld, x, y in g.compatible(kind):
                            if x is a and y is b:
                                options.append(conj([
                                    self.atom(kind, rec, fld, a, b),
                                    f"(= efld_{i} {g.fld(a.query.table, fld)})"]))
                        out.add(f"(assert (=> (and {guard} (= ekind_{i} {KIND_CONSTS[kind]})) "
                                f"{disj(options)}))")
            # forbid st-only position pairs from being chosen with a dep kind
        # closing edge: same transaction (ST, or ST+ in internal mode)
        closing = []
        for a in cyc:
            for b in cyc:
                if a is b:
                    continue
                ok = g.stp_static(a, b) if internal else g.st_static(a, b)
                if ok:
                    closing.append(f"(and (= pos_{length} {a.qid}) (= pos_1 {b.qid}))")
        out.add(f"(assert {disj(closing)})")

    def emit_serial_prefix(self) -> None:
        """Serial slots behave serializably and run before every cycle query."""
        g, out = self.g, self.out
        rc_of, rr_of, lin_of = getattr(self, "_ser_helpers")
        out.comment("anomaly: serial prefix")
        for slot in g.serial_slots():
            for c in g.by_slot[slot.index]:
                rc_of(c)
                rr_of(c)
                lin_of(c)
                for qc in g.cycle_insts():
                    out.add(f"(assert {self.ar(c, qc)})")

    def emit_shape_pin(self, shape: "CycleShape", exact_fields: bool) -> None:
        """EncStruct / EncPath: constrain the cycle selectors to the shape."""
        g, out = self.g, self.out
        length = shape.length()
        insts_of_type: dict[tuple[str, int], list[QInst]] = {}
        insts_of_txn: dict[str, list[QInst]] = {}
        for qi in g.cycle_insts():
            insts_of_type.setdefault(qi.qtype, []).append(qi)
            insts_of_txn.setdefault(qi.slot.txn_name, []).append(qi)
        options = []
        for entry_rot in _shape_rotations(shape):
            conds = []
            ok = True
            for i, (src_t, dst_t, kind, fld) in enumerate(entry_rot, start=1):
                src_pool = insts_of_type.get(src_t) if exact_fields \
                    else insts_of_txn.get(src_t[0])
                if not src_pool:
                    ok = False
                    break
                conds.append(disj(f"(= pos_{i} {qi.qid})" for qi in src_pool))
                if i < length:
                    conds.append(f"(= ekind_{i} {KIND_CONSTS[kind]})")
                    if exact_fields and fld is not None and kind != "ST":
                        table = src_pool[0].query.table
                        conds.append(f"(= efld_{i} {g.fld(table, fld)})")
            if ok:
                options.append(conj(conds))
        out.comment("structure pin")
        out.add(f"(assert {disj(options)})")

    def emit_neg(self, blocked: Iterable["CycleShape"]) -> None:
        """EncNeg: no previously found cycle may recur (type pair, edge kind
        and witness field per edge, any rotation, any instance assignment)."""
        g, out = self.g, self.out
        out.comment("negated prior cycles")
        insts_of_type: dict[tuple[str, int], list[QInst]] = {}
        for qi in g.cycle_insts():
            insts_of_type.setdefault(qi.qtype, []).append(qi)
        for shape in blocked:
            length = shape.length()
            for entry_rot in _shape_rotations(shape):
                assignments: list[list[str]] = [[]]
                ok = True
                for i, (src_t, _dst_t, kind, fld) in enumerate(entry_rot, start=1):
                    pool = insts_of_type.get(src_t, [])
                    if not pool:
                        ok = False
                        break
                    new_assignments = []
                    for partial in assignments:
                        for qi in pool:
                            conds = partial + [f"(= pos_{i} {qi.qid})"]
                            if i < length:
                                conds = conds + [f"(= ekind_{i} {KIND_CONSTS[kind]})"]
                                if fld is not None and kind != "ST":
                                    conds = conds + [
                                        f"(= efld_{i} {g.fld(qi.query.table, fld)})"]
                            new_assignments.append(conds)
                    assignments = new_assignments
                if not ok:
                    continue
                for conds in assignments:
                    out.add(f"(assert (not {conj(conds)}))")

    # -- objectives and queries ------------------------------------------------------

    def emit_objectives(self) -> None:
        g, out = self.g, self.out
        weights = []
        n = len(g.insts)
        for idx, qi in enumerate(g.insts):
            weights.append(f"(* {2 ** (n - idx)} (ts {qi.qid}))")
        out.add(f"(minimize (+ {' '.join(weights)}))")
        tau_terms = [f"(ite (= (tau {qi.qid}) {g.partitions[0]}) 0 1)" for qi in g.insts]
        mag_terms = out.value_terms
        second = tau_terms + mag_terms
        if second:
            out.add(f"(minimize (+ {' '.join(second)}))")

    def emit_queries(self, length: int) -> list[str]:
        """get-value terms decode needs (also returned for bookkeeping)."""
        g, out = self.g, self.out
        terms: list[str] = []
        for qi in g.insts:
            terms += [f"(ts {qi.qid})", f"(tau {qi.qid})", f"(Lambda {qi.qid})"]
        for a in g.insts:
            for b in g.insts:
                if a is not b:
                    terms.append(f"(vis {a.qid} {b.qid})")
        for slot in g.slots:
            txn = g.program.transaction(slot.txn_name)
            for p in txn.params:
                terms.append(f"arg_t{slot.index}_{p}")
            for qi in g.by_slot[slot.index]:
                for e in self._site_exprs(qi):
                    for s in m.sub_exprs(e):
                        if isinstance(s, m.AnyValue):
                            terms.append(f"arg_t{slot.index}_{s.name}")
        for t in g.tables:
            tdef = g.schema.table(t)
            for rec in g.records[t]:
                for f in tdef.primary_key:
                    terms.append(f"(key_{t}_{f} {rec})")
                for f in tdef.all_fields:
                    if f not in tdef.primary_key:
                        terms.append(f"(init_{t}_{f} {rec})")
        for i in range(1, length + 1):
            terms.append(f"pos_{i}")
            if i < length:
                terms += [f"ekind_{i}", f"efld_{i}"]
        for kind in ("WR", "WW", "RW"):
            for rec, fld, a, b in g.compatible(kind):
                terms.append(self.atom(kind, rec, fld, a, b))
        seen = set()
        unique = []
        for t in terms:
            if t not in seen:
                seen.add(t)
                unique.append(t)
        out.add("(check-sat)")
        out.add("(get-value (" + "\n  ".join(unique) + "))")
        return unique


def _shape_rotations(shape: CycleShape) -> list[tuple]:
    """Rotations of the shape that keep a valid pattern: the last entry must
    be an ST edge and the entries around it dependency edges."""
    entries = list(shape.entries)
    n = len(entries)
    out = []
    for r in range(n):
        rot = entries[r:] + entries[:r]
        if rot[-1][2] in ("ST", "ST+") and rot[0][2] not in ("ST", "ST+") \
                and rot[-2][2] not in ("ST", "ST+"):
            out.append(tuple(rot))
    return out or [tuple(entries)]
