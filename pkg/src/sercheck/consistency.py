"""Consistency and isolation guarantees as checkable predicates over system
states, by finite enumeration over effects.

The lattice: CV (visibility is transitive), CC (CV plus same-transaction
effects ordered by visibility one way or the other), RC (if one effect of a
transaction is visible, all are), RR (a witness of one effect of a transaction
witnesses all of it), LIN (arbitration implies visibility) and SER = RC
and RR and LIN.  EC places no constraint beyond what the store semantics
already guarantees.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

from .model import Effect, EffectId, SystemState
from .semantics import History

PRIMITIVE = ("ec", "cv", "cc", "rc", "rr", "lin")


class ConsistencyError(Exception):
    pass


@dataclass(frozen=True)
class GuaranteeSpec:
    """A conjunction of primitive guarantees."""
    parts: frozenset[str]

    def __post_init__(self):
        bad = self.parts - set(PRIMITIVE)
        if bad:
            raise ConsistencyError(f"unknown guarantee {sorted(bad)}")

    @staticmethod
    def parse(text: str) -> "GuaranteeSpec":
        """Accepts `ec`, `cv`, ..., `ser`, and conjunctions such as `rc+rr`."""
        names = [p.strip().lower() for p in text.split("+") if p.strip()]
        parts: set[str] = set()
        for n in names:
            if n == "ser":
                parts |= {"rc", "rr", "lin"}
            elif n in PRIMITIVE:
                parts.add(n)
            else:
                raise ConsistencyError(f"unknown guarantee {n!r}")
        return GuaranteeSpec(frozenset(parts or {"ec"}))

    @property
    def is_ser(self) -> bool:
        return {"rc", "rr", "lin"} <= self.parts

    def __str__(self):
        if self.parts == {"rc", "rr", "lin"}:
            return "ser"
        return "+".join(sorted(self.parts)) or "ec"


EC = GuaranteeSpec(frozenset({"ec"}))
SER = GuaranteeSpec(frozenset({"rc", "rr", "lin"}))


@dataclass(frozen=True)
class CheckResult:
    ok: bool
    violated: Optional[str] = None
    witness: tuple[EffectId, ...] = ()

    def __bool__(self):
        return self.ok


def _st(effects: dict[EffectId, Effect], a: EffectId, b: EffectId) -> bool:
    """Same-transaction relation over effects of different queries (effects of
    one query are created atomically and act as a unit)."""
    return (effects[a].txn_instance == effects[b].txn_instance
            and effects[a].query_instance != effects[b].query_instance)


def check_state(state: SystemState, effects: dict[EffectId, Effect],
                spec: GuaranteeSpec) -> CheckResult:
    """Evaluate the spec's quantified formulas over the state's effect set;
    on failure report the first violating effect triple.  Arbitration orders
    effects of different execution steps, so requirements on ar-ordered pairs
    skip effects created together by one query."""
    ids = sorted(state.all_effect_ids(), key=lambda e: state.ar[e])
    vis = state.vis
    visible_from: dict[EffectId, set[EffectId]] = {e: set() for e in ids}
    visible_to: dict[EffectId, set[EffectId]] = {e: set() for e in ids}
    for a, b in vis:
        visible_to[a].add(b)   # a is visible to b
        visible_from[b].add(a)

    st_pairs = [(a, b) for a in ids for b in ids if _st(effects, a, b)]

    def check_cv() -> CheckResult:
        for a in ids:
            for b in visible_to[a]:
                for c in visible_to[b]:
                    if c != a and c not in visible_to[a]:
                        return CheckResult(False, "cv", (a, b, c))
        return CheckResult(True)

    def check_cc() -> CheckResult:
        r = check_cv()
        if not r:
            return CheckResult(False, "cc", r.witness)
        for a, b in st_pairs:
            if b not in visible_to[a] and a not in visible_to[b]:
                return CheckResult(False, "cc", (a, b))
        return CheckResult(True)

    def check_rc() -> CheckResult:
        # the witnessing effect ranges over *other* transactions: a query
        # inside a transaction legitimately sees its own prefix
        for a, b in st_pairs:
            for c in visible_to[a]:
                if effects[c].txn_instance == effects[a].txn_instance:
                    continue
                if c != b and c not in visible_to[b]:
                    return CheckResult(False, "rc", (a, b, c))
        return CheckResult(True)

    def check_rr() -> CheckResult:
        for a, b in st_pairs:
            for c in visible_from[a]:
                if effects[c].txn_instance == effects[a].txn_instance:
                    continue
                if c != b and b not in visible_to[c]:
                    return CheckResult(False, "rr", (a, b, c))
        return CheckResult(True)

    def check_lin() -> CheckResult:
        for a, b in itertools.combinations(ids, 2):
            if effects[a].query_instance == effects[b].query_instance \
                    and effects[a].txn_instance == effects[b].txn_instance:
                continue
            if b not in visible_to[a]:
                return CheckResult(False, "lin", (a, b))
        return CheckResult(True)

    checkers = {"ec": lambda: CheckResult(True), "cv": check_cv, "cc": check_cc,
                "rc": check_rc, "rr": check_rr, "lin": check_lin}
    for name in sorted(spec.parts):
        r = checkers[name]()
        if not r:
            return r
    return CheckResult(True)


def check_history(history: History, spec: GuaranteeSpec) -> CheckResult:
    """A history conforms to a guarantee iff its final state does (vis and ar
    only grow, so the final state subsumes the earlier ones)."""
    if not history.states:
        raise ConsistencyError("empty history")
    return check_state(history.final, history.effects, spec)
