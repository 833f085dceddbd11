"""Deterministic interpreter for transactional programs over a simulated
replicated store.

Execution is driven by an ExecutionOracle that fixes every source of
nondeterminism up front: the step schedule, the partition each query runs on,
the network topology at each step, transaction arguments, `any{}` values and
loop iteration counts.  Each step builds the executing partition's local view,
evaluates the scheduled query and extends (store, ar, vis) monotonically.

Replication model: partitions named in a step's topology groups exchange all
effects they have seen before the step's query runs, so an effect becomes
visible at another partition once the two are in a common group.  Effects of
the initial database rows live in a reserved pseudo-partition every local
view includes.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

from . import model as m
from .model import (ALIVE, DEFAULT_VALUE, READ, WRITE, Effect, EffectId,
                    INIT_INSTANCE, INIT_PARTITION, LocalView, RecordKey,
                    SystemState)


class SemanticsError(Exception):
    pass


class EvalFault(SemanticsError):
    """Typed runtime fault (projection bounds, unbound name, division)."""


class ProjIndexError(EvalFault):
    pass


class UnboundVariable(EvalFault):
    pass


class DivisionByZero(EvalFault):
    pass


class ScheduleMismatch(SemanticsError):
    """A scheduled query site is unreachable under the oracle's valuation."""


class LoopBoundExceeded(SemanticsError):
    """A loop iterates beyond the configured unroll bound."""


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScheduleStep:
    txn_instance: int
    site_ordinal: int  # index into the instance's unrolled site list
    partition: str
    groups: tuple[frozenset[str], ...]  # network topology during this step


@dataclass(frozen=True)
class InitRow:
    table: str
    values: dict[str, int]  # full field map; `alive` defaults to 1


@dataclass(frozen=True)
class ExecutionOracle:
    """All nondeterminism of one execution, packaged."""
    program: m.Program
    schema: m.Schema
    instances: tuple[str, ...]  # transaction name per instance
    args: dict[tuple[int, str], int]
    abstract_values: dict[tuple[int, str], int] = field(default_factory=dict)
    iteration_counts: dict[tuple[int, int], int] = field(default_factory=dict)
    initial_db: tuple[InitRow, ...] = ()
    schedule: tuple[ScheduleStep, ...] = ()
    partitions: tuple[str, ...] = ("A",)
    unroll_bound: int = 2


@dataclass(frozen=True)
class HistoryStep:
    txn_instance: int
    site_ordinal: int
    query: m.Query
    partition: str
    effects: tuple[EffectId, ...]


@dataclass
class History:
    oracle: ExecutionOracle
    states: list[SystemState]
    steps: list[HistoryStep]
    effects: dict[EffectId, Effect]

    @property
    def final(self) -> SystemState:
        return self.states[-1]

    def effect_list(self) -> list[Effect]:
        return [self.effects[e] for e in sorted(self.effects, key=lambda e: self.final.ar[e])]

    def export_trace(self) -> str:
        """One effect per line: step id kind key field value partition."""
        lines = []
        for e in self.effect_list():
            key = ",".join(str(k) for k in e.record_key)
            lines.append(f"{e.id[0]} {e.id[0]}.{e.id[1]} {e.kind} {e.table}({key}) "
                         f"{e.field_name} {e.value if e.value is not None else '-'} {e.partition}")
        return "\n".join(lines) + ("\n" if lines else "")


# ---------------------------------------------------------------------------
# Local views and expression evaluation
# ---------------------------------------------------------------------------

def local_view(ar: dict[EffectId, int], effects: list[Effect],
               universe: set[tuple[str, RecordKey]],
               key_fields: dict[str, tuple[str, ...]]) -> dict[str, LocalView]:
    """Apply a set of effects in arbitration order: per (table, key, field)
    the view holds the value of the ar-greatest write; untouched keys are dead
    and default to 0 everywhere.  Key fields always equal the key itself."""
    view: dict[str, LocalView] = {}
    for table, key in universe:
        row = view.setdefault(table, {}).setdefault(key, {})
        row[ALIVE] = 0
        for i, kf in enumerate(key_fields[table]):
            row[kf] = key[i]
    best: dict[tuple[str, RecordKey, str], int] = {}
    for e in effects:
        if e.kind != WRITE:
            continue
        slot = (e.table, e.record_key, e.field_name)
        if slot not in best or ar[e.id] > best[slot]:
            best[slot] = ar[e.id]
            view.setdefault(e.table, {}).setdefault(e.record_key, {})[e.field_name] = e.value
    return view


def view_value(view: dict[str, LocalView], table: str, key: RecordKey, fld: str,
               key_fields: tuple[str, ...]) -> int:
    if fld in key_fields:
        return key[key_fields.index(fld)]
    return view.get(table, {}).get(key, {}).get(fld, DEFAULT_VALUE)


@dataclass
class Env:
    """Per-instance bindings during interpretation."""
    args: dict[str, int]
    results: dict[str, list[tuple[RecordKey, dict[str, int]]]] = field(default_factory=dict)

    def lookup(self, name: str) -> int:
        if name not in self.args:
            raise UnboundVariable(f"unbound name {name!r}")
        return self.args[name]


def eval_expr(e: m.Expr, env: Env, record: Optional[dict[str, int]] = None) -> int:
    if isinstance(e, m.IntConst):
        return e.value
    if isinstance(e, m.Arg):
        return env.lookup(e.name)
    if isinstance(e, m.AnyValue):
        value = env.lookup(e.name)
        inner = Env(dict(env.args), env.results)
        inner.args[e.name] = value
        if not eval_bool(e.constraint, inner):
            raise EvalFault(f"value {value} for {e.name} violates its any{{}} constraint")
        return value
    if isinstance(e, m.BinOp):
        lv = eval_expr(e.left, env, record)
        rv = eval_expr(e.right, env, record)
        if e.op == "+":
            return lv + rv
        if e.op == "-":
            return lv - rv
        if e.op == "*":
            return lv * rv
        if rv == 0:
            raise DivisionByZero("division by zero")
        return int(lv / rv)  # truncating division
    if isinstance(e, m.Iter):
        raise UnboundVariable("'iter' outside an unrolled loop copy")
    if isinstance(e, m.Size):
        if e.var not in env.results:
            raise UnboundVariable(f"unbound variable {e.var!r}")
        return len(env.results[e.var])
    if isinstance(e, m.Proj):
        if e.var not in env.results:
            raise UnboundVariable(f"unbound variable {e.var!r}")
        rows = env.results[e.var]
        idx = eval_expr(e.index, env, record)
        if idx < 1 or idx > len(rows):
            raise ProjIndexError(f"proj index {idx} outside 1..{len(rows)}")
        _, row = rows[idx - 1]
        if e.field_name not in row:
            raise EvalFault(f"field {e.field_name!r} not observed by {e.var!r}")
        return row[e.field_name]
    if isinstance(e, m.ThisField):
        if record is None:
            raise EvalFault("'this.' outside a WHERE evaluation")
        return record.get(e.field_name, DEFAULT_VALUE)
    raise SemanticsError(f"cannot evaluate {e!r}")


def eval_bool(b: m.BoolExpr, env: Env, record: Optional[dict[str, int]] = None) -> bool:
    if isinstance(b, m.BoolConst):
        return b.value
    if isinstance(b, m.Cmp):
        lv = eval_expr(b.left, env, record)
        rv = eval_expr(b.right, env, record)
        return {"<": lv < rv, "<=": lv <= rv, "=": lv == rv,
                ">": lv > rv, ">=": lv >= rv}[b.op]
    if isinstance(b, m.Not):
        return not eval_bool(b.operand, env, record)
    if isinstance(b, m.And):
        return eval_bool(b.left, env, record) and eval_bool(b.right, env, record)
    if isinstance(b, m.Or):
        return eval_bool(b.left, env, record) or eval_bool(b.right, env, record)
    raise SemanticsError(f"cannot evaluate {b!r}")


# ---------------------------------------------------------------------------
# The interpreter
# ---------------------------------------------------------------------------

class _Run:
    def __init__(self, oracle: ExecutionOracle):
        self.oracle = oracle
        self.schema = oracle.schema
        self.program = oracle.program
        self.unrolled = {t.name: m.unroll(t, oracle.unroll_bound)
                         for t in oracle.program.transactions}
        self.effects: dict[EffectId, Effect] = {}
        self.store: dict[str, set[EffectId]] = {p: set() for p in oracle.partitions}
        self.store[INIT_PARTITION] = set()
        self.seen: dict[str, set[EffectId]] = {p: set() for p in oracle.partitions}
        self.ar: dict[EffectId, int] = {}
        self.vis: set[tuple[EffectId, EffectId]] = set()
        self.next_ts = 0
        self.envs: list[Env] = []
        self.universe: set[tuple[str, RecordKey]] = set()
        self.key_fields = {t.name: t.primary_key for t in self.schema.tables}
        self.var_reads: list[list[tuple[int, set[str]]]] = []  # per instance: (ar mark, vars consumed)
        self.select_marks: dict[tuple[int, int], int] = {}  # query instance -> ar size after it ran

    # -- record universe ---------------------------------------------------

    def seed_universe(self) -> None:
        for row in self.oracle.initial_db:
            t = self.schema.table(row.table)
            key = tuple(row.values[k] for k in t.primary_key)
            self.universe.add((row.table, key))
        for inst, name in enumerate(self.oracle.instances):
            env = self.envs[inst]
            for site in self.unrolled[name].sites:
                q = site.query
                if isinstance(q, m.Insert):
                    t = self.schema.table(q.table)
                    try:
                        key = tuple(eval_expr(dict(q.assignments)[k], env)
                                    for k in t.primary_key)
                    except EvalFault:
                        continue  # key depends on runtime data; added on execution
                    self.universe.add((q.table, key))

    # -- state plumbing -----------------------------------------------------

    def snapshot(self) -> SystemState:
        return SystemState(
            store={p: frozenset(s) for p, s in self.store.items()},
            ar=dict(self.ar),
            vis=frozenset(self.vis),
        )

    def add_effect(self, e: Effect, partition: str) -> None:
        self.effects[e.id] = e
        self.store[partition].add(e.id)
        self.ar[e.id] = self.next_ts
        self.next_ts += 1
        if partition != INIT_PARTITION:
            self.seen[partition].add(e.id)

    def propagate(self, groups: tuple[frozenset[str], ...]) -> None:
        for g in groups:
            members = [p for p in g if p in self.seen]
            merged: set[EffectId] = set()
            for p in members:
                merged |= self.seen[p]
            for p in members:
                self.seen[p] = set(merged)

    def visible_effects(self, partition: str) -> list[Effect]:
        ids = self.seen[partition] | self.store[INIT_PARTITION]
        return [self.effects[i] for i in ids]

    # -- initial database ----------------------------------------------------

    def load_initial_db(self) -> None:
        step = 0
        ordinal = 0
        loaded: list[EffectId] = []
        for row in self.oracle.initial_db:
            t = self.schema.table(row.table)
            key = tuple(row.values[k] for k in t.primary_key)
            fields = [f for f in t.value_fields] + [ALIVE]
            for f in fields:
                value = row.values.get(f, 1 if f == ALIVE else DEFAULT_VALUE)
                e = Effect(id=(step, ordinal), kind=WRITE, table=row.table,
                           record_key=key, field_name=f, value=value, used=True,
                           query_instance=(INIT_INSTANCE, ordinal),
                           txn_instance=INIT_INSTANCE, partition=INIT_PARTITION)
                # initialisation acts as a strictly serial prefix: its writes
                # see each other in load order
                self.vis |= {(old, e.id) for old in loaded}
                self.add_effect(e, INIT_PARTITION)
                loaded.append(e.id)
                ordinal += 1

    # -- per-step execution ---------------------------------------------------

    def guards_hold(self, inst: int, site: m.QuerySite) -> bool:
        env = self.envs[inst]
        for _loop_id, count_expr, copy_index in site.loop_conditions:
            n = eval_expr(count_expr, env)
            if n > self.oracle.unroll_bound:
                raise LoopBoundExceeded(
                    f"instance {inst}: loop iterates {n} times, beyond the unroll bound "
                    f"{self.oracle.unroll_bound}")
            if copy_index > n:
                return False
        self.note_guard_reads(inst, site)
        for g in site.guards:
            if not eval_bool(g, env):
                return False
        return True

    def note_guard_reads(self, inst: int, site: m.QuerySite) -> None:
        consumed: set[str] = set()
        for g in site.guards:
            consumed |= m.vars_read_by_bool(g)
        for _loop_id, count_expr, _ in site.loop_conditions:
            consumed |= m.vars_read_by_expr(count_expr)
        if consumed:
            self.var_reads[inst].append((len(self.ar), consumed))

    def query_consumes(self, q: m.Query) -> set[str]:
        consumed: set[str] = set()
        w = m.query_where(q)
        if w is not None:
            consumed |= m.vars_read_by_bool(w)
        for e in m.query_exprs(q):
            consumed |= m.vars_read_by_expr(e)
        return consumed

    def step_query(self, step_index: int, inst: int, site: m.QuerySite,
                   partition: str) -> tuple[m.Query, tuple[EffectId, ...]]:
        env = self.envs[inst]
        q = site.query
        table = self.schema.table(q.table)
        view = local_view(self.ar, self.visible_effects(partition),
                          self.universe, self.key_fields)

        consumed = self.query_consumes(q)
        if consumed:
            self.var_reads[inst].append((len(self.ar), consumed))

        qi = (inst, site.ordinal)

        def rows_of(tbl: str) -> list[tuple[RecordKey, dict[str, int]]]:
            keys = sorted(k for (tn, k) in self.universe if tn == tbl)
            out = []
            for k in keys:
                row = {f: view_value(view, tbl, k, f, table.primary_key)
                       for f in table.all_fields}
                out.append((k, row))
            return out

        created: list[Effect] = []
        ordinal = 0

        def emit(kind: str, key: RecordKey, fld: str, value: Optional[int]) -> None:
            nonlocal ordinal
            e = Effect(id=(step_index, ordinal), kind=kind, table=q.table,
                       record_key=key, field_name=fld, value=value, used=True,
                       query_instance=qi, txn_instance=inst, partition=partition)
            created.append(e)
            ordinal += 1

        where = m.query_where(q)
        lookup = where is not None and m.is_key_lookup(table, where)

        if isinstance(q, m.Insert):
            assigns = dict(q.assignments)
            key = tuple(eval_expr(assigns[k], env) for k in table.primary_key)
            self.universe.add((q.table, key))
            for f in table.value_fields:
                emit(WRITE, key, f, eval_expr(assigns[f], env))
            emit(WRITE, key, ALIVE, 1)
        else:
            assert where is not None
            scan_fields = sorted(m.where_fields(where))
            all_rows = rows_of(q.table)
            if lookup:
                key_exprs = m.key_lookup_exprs(table, where)
                target = tuple(eval_expr(key_exprs[k], env) for k in table.primary_key)
                candidates = [(k, r) for k, r in all_rows if k == target]
            else:
                # table-wide scan: witness every record's predicated fields
                for k, row in all_rows:
                    for f in scan_fields:
                        emit(READ, k, f, row[f])
                candidates = all_rows
            matching = [(k, row) for k, row in candidates
                        if row[ALIVE] == 1 and eval_bool(where, env, row)]

            if isinstance(q, m.Select):
                observed = sorted(m.observed_fields(self.schema, q))
                for k, row in matching:
                    emit(READ, k, q.field_name, row[q.field_name])
                env.results[q.as_var] = [(k, {f: row[f] for f in observed if f in row})
                                         for k, row in matching]
                self.select_marks[qi] = len(self.ar) + len(created)
            elif isinstance(q, m.SelectAgg):
                for k, row in matching:
                    emit(READ, k, q.field_name, row[q.field_name])
                vals = [row[q.field_name] for _, row in matching]
                agg = (min if q.agg == "min" else max)(vals) if vals else DEFAULT_VALUE
                env.results[q.as_var] = [((agg,), {q.field_name: agg})]
                self.select_marks[qi] = len(self.ar) + len(created)
            elif isinstance(q, m.Update):
                value = eval_expr(q.value, env)
                for k, _ in matching:
                    emit(WRITE, k, q.field_name, value)
            elif isinstance(q, m.Delete):
                for k, _ in matching:
                    emit(WRITE, k, ALIVE, 0)
            else:
                raise SemanticsError(f"cannot execute {q!r}")

        pre_partition = set(self.seen[partition]) | self.store[INIT_PARTITION]
        for e in created:
            self.vis |= {(old, e.id) for old in pre_partition}
            self.add_effect(e, partition)
        return q, tuple(e.id for e in created)


def run(oracle: ExecutionOracle) -> History:
    """Execute the oracle's schedule and return the resulting history."""
    r = _Run(oracle)
    for inst, name in enumerate(oracle.instances):
        txn = oracle.program.transaction(name)
        args = {p: oracle.args.get((inst, p), 0) for p in txn.params}
        for (i, a), v in oracle.abstract_values.items():
            if i == inst:
                args[a] = v
        r.envs.append(Env(args))
        r.var_reads.append([])
    r.load_initial_db()
    r.seed_universe()

    history = History(oracle=oracle, states=[r.snapshot()], steps=[], effects=r.effects)

    executed: dict[int, set[int]] = {i: set() for i in range(len(oracle.instances))}
    for n, step in enumerate(oracle.schedule, start=1):
        if step.txn_instance >= len(oracle.instances):
            raise ScheduleMismatch(f"step {n}: unknown instance {step.txn_instance}")
        if step.partition not in oracle.partitions:
            raise SemanticsError(f"step {n}: unknown partition {step.partition!r}")
        name = oracle.instances[step.txn_instance]
        sites = r.unrolled[name].sites
        if step.site_ordinal >= len(sites):
            raise ScheduleMismatch(f"step {n}: {name} has no site {step.site_ordinal}")
        site = sites[step.site_ordinal]
        prior = executed[step.txn_instance]
        if any(o >= step.site_ordinal for o in prior) or step.site_ordinal in prior:
            raise ScheduleMismatch(f"step {n}: internal order of {name} violated")
        r.propagate(step.groups)
        if not r.guards_hold(step.txn_instance, site):
            raise ScheduleMismatch(
                f"step {n}: site {name}[{step.site_ordinal}] is unreachable under the oracle")
        q, eids = r.step_query(n, step.txn_instance, site, step.partition)
        executed[step.txn_instance].add(step.site_ordinal)
        history.steps.append(HistoryStep(step.txn_instance, step.site_ordinal, q,
                                         step.partition, eids))
        history.states.append(r.snapshot())

    _mark_unused_reads(r, history)
    return history


def _mark_unused_reads(r: _Run, history: History) -> None:
    """Flag reads of SELECTs whose bound variable no later executed query,
    guard or loop bound consumed (the rd+ effects)."""
    for qi, sel_mark in r.select_marks.items():
        inst, ordinal = qi
        name = r.oracle.instances[inst]
        var = r.unrolled[name].sites[ordinal].query.as_var
        used = any(var in consumed and mark >= sel_mark
                   for mark, consumed in r.var_reads[inst])
        if not used:
            for eid, eff in list(history.effects.items()):
                if eff.query_instance == qi and eff.kind == READ:
                    history.effects[eid] = replace(eff, used=False)


# ---------------------------------------------------------------------------
# Dynamic (schedule-free) execution of whole transactions, used by the
# serializability oracle to build strictly serial reference executions.
# ---------------------------------------------------------------------------

def run_serial(oracle: ExecutionOracle, order: tuple[int, ...],
               partition: Optional[str] = None) -> History:
    """Execute whole transaction instances one at a time in `order`, making
    control-flow decisions dynamically from the evolving store state."""
    p = partition if partition is not None else oracle.partitions[0]
    r = _Run(oracle)
    for inst, name in enumerate(oracle.instances):
        txn = oracle.program.transaction(name)
        args = {pr: oracle.args.get((inst, pr), 0) for pr in txn.params}
        for (i, a), v in oracle.abstract_values.items():
            if i == inst:
                args[a] = v
        r.envs.append(Env(args))
        r.var_reads.append([])
    r.load_initial_db()
    r.seed_universe()

    history = History(oracle=oracle, states=[r.snapshot()], steps=[], effects=r.effects)
    step_no = 0
    all_groups = (frozenset(oracle.partitions),)
    for inst in order:
        name = oracle.instances[inst]
        for site in r.unrolled[name].sites:
            r.propagate(all_groups)
            if not r.guards_hold(inst, site):
                continue
            step_no += 1
            q, eids = r.step_query(step_no, inst, site, p)
            history.steps.append(HistoryStep(inst, site.ordinal, q, p, eids))
            history.states.append(r.snapshot())
    _mark_unused_reads(r, history)
    return history
