"""Dependency relations over effects, their lift to query instances, valid
cycle detection, and a brute-force serializability oracle for small histories.

Dependency kinds between effects on the same (table, key, field):

* WR: the reader witnesses exactly the value the writer installed, and the
  writer is the arbitration-latest visible write carrying that value.
* WW: the second write overwrites the first (arbitration order).
* RW: the reader's witnessed version is arbitration-older than the write.

A valid cycle is a 2-regular subgraph of the lifted graph shaped as
q1 -D-> q2 (-ST/D-> ...) -D-> qk -ST- q1: at least two dependency edges joined
by a same-transaction edge.  Dependency edges never link queries of one
transaction (those pairs are same-transaction edges by construction).
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import model as m
from .model import ALIVE, Effect, EffectId, INIT_INSTANCE, READ, WRITE
from .semantics import History, run_serial

WR, WW, RW, ST, STP = "WR", "WW", "RW", "ST", "ST+"
DEP_KINDS = (WR, WW, RW)

QueryNode = tuple[int, int]  # (txn instance, site ordinal)


class DepGraphError(Exception):
    pass


class SizeGuardExceeded(DepGraphError):
    pass


@dataclass(frozen=True)
class Edge:
    src: QueryNode
    dst: QueryNode
    kind: str
    witness: Optional[tuple[str, tuple[int, ...], str]] = None  # (table, key, field)

    def canonical(self) -> "Edge":
        if self.kind in (ST, STP) and self.dst < self.src:
            return Edge(self.dst, self.src, self.kind, self.witness)
        return self


@dataclass
class DependencyGraph:
    nodes: set[QueryNode]
    edges: set[Edge]
    node_types: dict[QueryNode, tuple[str, int]]  # node -> (txn name, site ordinal)

    def dep_edges(self) -> list[Edge]:
        return [e for e in self.edges if e.kind in DEP_KINDS]

    def st_pairs(self) -> set[tuple[QueryNode, QueryNode]]:
        out = set()
        for e in self.edges:
            if e.kind in (ST, STP):
                out.add((e.src, e.dst))
                out.add((e.dst, e.src))
        return out

    def stp_pairs(self) -> set[tuple[QueryNode, QueryNode]]:
        out = set()
        for e in self.edges:
            if e.kind == STP:
                out.add((e.src, e.dst))
                out.add((e.dst, e.src))
        return out

    def to_dot(self) -> str:
        lines = ["digraph deps {"]
        for n in sorted(self.nodes):
            name, ordinal = self.node_types[n]
            lines.append(f'  "{n[0]}.{n[1]}" [label="{name}[{n[0]}] q{ordinal}"];')
        for e in sorted(self.edges, key=lambda e: (e.src, e.dst, e.kind)):
            style = ' style=dashed dir=none' if e.kind in (ST, STP) else ""
            wit = f" {e.witness[0]}.{e.witness[2]}" if e.witness else ""
            lines.append(f'  "{e.src[0]}.{e.src[1]}" -> "{e.dst[0]}.{e.dst[1]}"'
                         f' [label="{e.kind}{wit}"{style}];')
        lines.append("}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Effect-level dependencies
# ---------------------------------------------------------------------------

def effect_dependencies(history: History) -> set[tuple[EffectId, EffectId, str,
                                                       tuple[str, tuple[int, ...], str]]]:
    """All WR/WW/RW pairs over the final state's effects."""
    state = history.final
    effects = history.effects
    by_slot: dict[tuple[str, tuple[int, ...], str], list[Effect]] = {}
    for e in effects.values():
        by_slot.setdefault((e.table, e.record_key, e.field_name), []).append(e)

    deps: set[tuple[EffectId, EffectId, str, tuple]] = set()
    vis = state.vis
    ar = state.ar
    for slot, slot_effects in by_slot.items():
        writes = sorted((e for e in slot_effects if e.kind == WRITE), key=lambda e: ar[e.id])
        reads = [e for e in slot_effects if e.kind == READ]
        for w1, w2 in itertools.combinations(writes, 2):
            deps.add((w1.id, w2.id, WW, slot))
        for r in reads:
            visible = [w for w in writes if (w.id, r.id) in vis]
            src: Optional[Effect] = None
            same_value = [w for w in visible if w.value == r.value]
            if same_value:
                src = max(same_value, key=lambda w: ar[w.id])
                deps.add((src.id, r.id, WR, slot))
            # anti-dependency: any write newer than what the read witnessed
            src_ts = ar[src.id] if src is not None else -1
            for w in writes:
                if ar[w.id] > src_ts and w.id != (src.id if src else None):
                    deps.add((r.id, w.id, RW, slot))
    return deps


# ---------------------------------------------------------------------------
# Lift to query instances
# ---------------------------------------------------------------------------

def _dataflow_pairs(history: History) -> set[tuple[QueryNode, QueryNode]]:
    """Same-transaction query pairs with read-to-write dataflow: the earlier
    query's bound variable feeds the later query's WHERE, value expression or
    an intervening guard."""
    oracle = history.oracle
    unrolled = {t.name: m.unroll(t, oracle.unroll_bound) for t in oracle.program.transactions}
    flows: set[tuple[QueryNode, QueryNode]] = set()
    steps_by_inst: dict[int, list] = {}
    for s in history.steps:
        steps_by_inst.setdefault(s.txn_instance, []).append(s)
    for inst, steps in steps_by_inst.items():
        name = oracle.instances[inst]
        sites = unrolled[name].sites
        binder: dict[str, int] = {}
        for s in steps:
            site = sites[s.site_ordinal]
            consumed: set[str] = set()
            w = m.query_where(s.query)
            if w is not None:
                consumed |= m.vars_read_by_bool(w)
            for e in m.query_exprs(s.query):
                consumed |= m.vars_read_by_expr(e)
            for g in site.guards:
                consumed |= m.vars_read_by_bool(g)
            for _lid, count, _k in site.loop_conditions:
                consumed |= m.vars_read_by_expr(count)
            for v in consumed:
                if v in binder:
                    flows.add(((inst, binder[v]), (inst, s.site_ordinal)))
            if isinstance(s.query, (m.Select, m.SelectAgg)):
                binder[s.query.as_var] = s.site_ordinal
    return flows


def lift_to_queries(history: History,
                    effect_deps: Optional[set] = None) -> DependencyGraph:
    """Lift effect dependencies to query instances; same-transaction pairs
    become ST edges (ST+ when read-to-write dataflow links them)."""
    if effect_deps is None:
        effect_deps = effect_dependencies(history)
    effects = history.effects
    oracle = history.oracle

    nodes: set[QueryNode] = set()
    node_types: dict[QueryNode, tuple[str, int]] = {}
    for s in history.steps:
        n = (s.txn_instance, s.site_ordinal)
        nodes.add(n)
        node_types[n] = (oracle.instances[s.txn_instance], s.site_ordinal)
    init_nodes = {e.query_instance for e in effects.values()
                  if e.txn_instance == INIT_INSTANCE}
    for n in init_nodes:
        nodes.add(n)
        node_types[n] = ("__init__", n[1])

    edges: set[Edge] = set()
    flows = _dataflow_pairs(history)
    by_inst: dict[int, set[QueryNode]] = {}
    for n in nodes:
        by_inst.setdefault(n[0], set()).add(n)
    for inst, group in by_inst.items():
        if inst == INIT_INSTANCE:
            continue
        for a, b in itertools.combinations(sorted(group), 2):
            kind = STP if ((a, b) in flows or (b, a) in flows) else ST
            edges.add(Edge(a, b, kind).canonical())

    for e1, e2, kind, slot in effect_deps:
        q1 = effects[e1].query_instance
        q2 = effects[e2].query_instance
        if q1 == q2:
            continue
        if effects[e1].txn_instance == effects[e2].txn_instance:
            continue  # intra-transaction dependencies are subsumed by ST
        edges.add(Edge(q1, q2, kind, slot))
    return DependencyGraph(nodes, edges, node_types)


# ---------------------------------------------------------------------------
# Valid cycles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cycle:
    """A closed walk q1 -D-> q2 ... -D-> qk -ST- q1 over distinct queries."""
    nodes: tuple[QueryNode, ...]
    edges: tuple[Edge, ...]  # edges[i] joins nodes[i] and nodes[i+1]; last is the closing ST
    internal: bool

    def edge_set(self) -> frozenset[Edge]:
        return frozenset(e.canonical() for e in self.edges)


def fingerprint(cycle_edges: Iterable[tuple[tuple[str, int], tuple[str, int], str, Optional[str]]]
                ) -> tuple:
    """Canonical cycle identity: the sequence of (source type, target type,
    edge kind, witness field) minimised over rotations."""
    seq = list(cycle_edges)
    if not seq:
        return ()
    rotations = [tuple(seq[i:] + seq[:i]) for i in range(len(seq))]
    return min(rotations)


def cycle_fingerprint(c: Cycle, node_types: dict[QueryNode, tuple[str, int]]) -> tuple:
    entries = []
    for i, e in enumerate(c.edges):
        a = c.nodes[i]
        b = c.nodes[(i + 1) % len(c.nodes)]
        fld = e.witness[2] if e.witness else None
        entries.append((node_types[a], node_types[b], e.kind, fld))
    return fingerprint(entries)


def find_cycles(g: DependencyGraph, max_len: int, internal_only: bool = False) -> list[Cycle]:
    """Enumerate valid cycles up to max_len, deduplicated by edge set.

    The walk pattern mirrors the anomaly encoding: first and second-to-last
    hops are dependency edges, the closing hop is ST (ST+ in internal mode,
    where every ST hop on the cycle must carry dataflow)."""
    if max_len < 3:
        raise DepGraphError("cycles have at least 3 edges")
    dep_out: dict[QueryNode, list[Edge]] = {}
    for e in sorted(g.dep_edges(), key=lambda e: (e.src, e.dst, e.kind, str(e.witness))):
        dep_out.setdefault(e.src, []).append(e)
    stp = g.stp_pairs()
    st = stp if internal_only else g.st_pairs()
    st_next: dict[QueryNode, list[QueryNode]] = {}
    for (a, b) in sorted(st):
        st_next.setdefault(a, []).append(b)

    found: dict[frozenset, Cycle] = {}

    def close_kind(pair: tuple[QueryNode, QueryNode]) -> str:
        return STP if pair in stp else ST

    def record(path: list[QueryNode], edges: list[Edge]) -> None:
        closing = Edge(path[-1], path[0], close_kind((path[-1], path[0]))).canonical()
        cyc = Cycle(tuple(path), tuple(edges + [closing]), internal=internal_only)
        deps = sum(1 for e in cyc.edges if e.kind in DEP_KINDS)
        if deps < 2:
            return
        found.setdefault(cyc.edge_set(), cyc)

    def extend(path: list[QueryNode], edges: list[Edge]) -> None:
        cur = path[-1]
        if len(path) >= 3 and edges[-1].kind in DEP_KINDS and (cur, path[0]) in st:
            record(path, edges)
        if len(path) >= max_len:
            return
        for e in dep_out.get(cur, ()):
            if e.dst not in path:
                extend(path + [e.dst], edges + [e])
        for nxt in st_next.get(cur, ()):
            if nxt not in path:
                extend(path + [nxt],
                       edges + [Edge(cur, nxt, close_kind((cur, nxt))).canonical()])

    for start in sorted(g.nodes):
        for e in dep_out.get(start, ()):
            if e.dst != start:
                extend([start, e.dst], [e])
    out = list(found.values())
    out.sort(key=lambda c: cycle_fingerprint(c, g.node_types))
    return out


# ---------------------------------------------------------------------------
# Brute-force serializability oracle
# ---------------------------------------------------------------------------

ORACLE_MAX_STEPS = 8


def _query_outcomes(h: History) -> dict[QueryNode, tuple]:
    """Per query instance, the multiset of produced effects with write-chain
    positions: (kind, table, key, field, value, version index)."""
    ar = h.final.ar
    chain_pos: dict[EffectId, int] = {}
    by_slot: dict[tuple, list[Effect]] = {}
    for e in h.effects.values():
        by_slot.setdefault((e.table, e.record_key, e.field_name), []).append(e)
    for slot, slot_effects in by_slot.items():
        writes = sorted((e for e in slot_effects if e.kind == WRITE), key=lambda e: ar[e.id])
        for i, w in enumerate(writes):
            chain_pos[w.id] = i
        for r in (e for e in slot_effects if e.kind == READ):
            visible = [w for w in writes if (w.id, r.id) in h.final.vis and w.value == r.value]
            chain_pos[r.id] = max((chain_pos[w.id] for w in visible), default=-1)
    out: dict[QueryNode, list] = {}
    for e in h.effects.values():
        if e.txn_instance == INIT_INSTANCE:
            continue
        out.setdefault(e.query_instance, []).append(
            (e.kind, e.table, e.record_key, e.field_name, e.value, chain_pos[e.id]))
    return {q: tuple(sorted(v)) for q, v in out.items()}


def serializability_oracle(h: History, max_steps: int = ORACLE_MAX_STEPS
                           ) -> tuple[bool, Optional[tuple[int, ...]]]:
    """True iff some strictly serial re-execution of the history's transaction
    instances produces, query instance by query instance, the same effects (up
    to effect-id renaming).  Exponential; guarded to small histories."""
    if len(h.steps) > max_steps:
        raise SizeGuardExceeded(f"history has {len(h.steps)} steps (> {max_steps})")
    from .semantics import SemanticsError
    reference = _query_outcomes(h)
    instances = tuple(range(len(h.oracle.instances)))
    for order in itertools.permutations(instances):
        try:
            serial = run_serial(h.oracle, order)
        except SemanticsError:
            continue  # diverging control flow cannot be the witness
        if _query_outcomes(serial) == reference:
            return True, order
    return False, None
