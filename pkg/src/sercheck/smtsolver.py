"""Finite-model QF_LIA solver speaking an SMT-LIB 2 subset on stdin/stdout.

Handles the ground problem class the anomaly encoder emits (and any file in
the same fragment): finite uninterpreted sorts whose domain is fixed by a
top-level `distinct` assertion over declared constants, uninterpreted
functions applied to those domain constants, Booleans, and linear integer
arithmetic.  An optional `(minimize t)` objective selects a canonical model.

Pipeline: parse -> ground every function application to a variable ->
Tseitin-transform the assertion conjunction to CNF over Boolean variables and
inequality atoms -> translate clauses plus atom/variable links into a mixed
integer program -> solve with HiGHS (scipy.optimize.milp).  Answers `sat`,
`unsat` or `unknown` followed by `(get-value ...)`/`(get-model)` responses.

Usable as a library (`SmtSolver.run_text`) or as the `sercheck-solve`
executable, which is the default solver subprocess of the analyzer; any
SMT-LIB 2 solver (e.g. z3) accepts the same problems.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

import numpy as np

DEFAULT_INT_BOUND = 1_000_000

Sexp = Union[str, list]


class SmtError(Exception):
    pass


# ---------------------------------------------------------------------------
# S-expression reader
# ---------------------------------------------------------------------------

def tokenize_sexp(text: str) -> list[str]:
    out: list[str] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c in "();" or c.isspace():
            if c == ";":
                j = text.find("\n", i)
                i = n if j < 0 else j + 1
                continue
            if c in "()":
                out.append(c)
            i += 1
            continue
        if c == "|":
            j = text.find("|", i + 1)
            if j < 0:
                raise SmtError("unterminated quoted symbol")
            out.append(text[i + 1:j])
            i = j + 1
            continue
        j = i
        while j < n and not text[j].isspace() and text[j] not in "();":
            j += 1
        out.append(text[i:j])
        i = j
    return out


def read_sexps(text: str) -> list[Sexp]:
    toks = tokenize_sexp(text)
    pos = 0

    def read() -> Sexp:
        nonlocal pos
        t = toks[pos]
        pos += 1
        if t == "(":
            items = []
            while pos < len(toks) and toks[pos] != ")":
                items.append(read())
            if pos >= len(toks):
                raise SmtError("unbalanced parenthesis")
            pos += 1
            return items
        if t == ")":
            raise SmtError("unexpected ')'")
        return t

    out = []
    while pos < len(toks):
        out.append(read())
    return out


def format_sexp(s: Sexp) -> str:
    if isinstance(s, str):
        return s
    return "(" + " ".join(format_sexp(x) for x in s) + ")"


def format_int(v: int) -> str:
    return str(v) if v >= 0 else f"(- {-v})"


# ---------------------------------------------------------------------------
# Terms after grounding
# ---------------------------------------------------------------------------

@dataclass
class Lin:
    """Linear integer term: sum(coefs[v] * v) + const."""
    coefs: dict[str, int] = field(default_factory=dict)
    const: int = 0

    def __add__(self, other: "Lin") -> "Lin":
        out = Lin(dict(self.coefs), self.const + other.const)
        for v, c in other.coefs.items():
            out.coefs[v] = out.coefs.get(v, 0) + c
            if out.coefs[v] == 0:
                del out.coefs[v]
        return out

    def __sub__(self, other: "Lin") -> "Lin":
        return self + other.scale(-1)

    def scale(self, k: int) -> "Lin":
        if k == 0:
            return Lin()
        return Lin({v: c * k for v, c in self.coefs.items()}, self.const * k)

    def key(self) -> tuple:
        return (tuple(sorted(self.coefs.items())), self.const)


# Formula nodes: ("var", name) | ("atom", atom_id) | ("not", f) | ("and", [..]) | ("or", [..]) | True | False
Formula = Union[bool, tuple]


class SmtSolver:
    def __init__(self, int_bound: int = DEFAULT_INT_BOUND,
                 time_limit: Optional[float] = None):
        self.int_bound = int_bound
        self.time_limit = time_limit
        self.sorts: dict[str, list[str]] = {}  # sort -> domain element names
        self.element_sort: dict[str, str] = {}  # element const -> sort
        self.element_index: dict[str, int] = {}
        self.funs: dict[str, tuple[list[str], str]] = {}  # name -> (arg sorts, range)
        self.bool_vars: dict[str, int] = {}
        self.int_vars: dict[str, int] = {}
        self.int_bounds: dict[str, tuple[int, int]] = {}
        self.enum_vars: dict[str, str] = {}  # grounded sort-valued variable -> sort
        self.atoms: dict[tuple, int] = {}  # Lin.key -> atom id  (meaning lin <= 0)
        self.atom_lin: list[Lin] = []
        self.assertions: list[Formula] = []
        self.objectives: list[Lin] = []
        self.model: Optional[dict[str, int]] = None
        self.status: Optional[str] = None
        self._ite_counter = 0
        self._declared_consts: dict[str, str] = {}  # 0-ary const -> sort name

    # -- declarations ---------------------------------------------------------

    def declare_sort(self, name: str) -> None:
        self.sorts.setdefault(name, [])

    def declare_fun(self, name: str, arg_sorts: list[str], range_sort: str) -> None:
        if arg_sorts:
            self.funs[name] = (arg_sorts, range_sort)
        else:
            self._declared_consts[name] = range_sort

    def _note_domain(self, sort: str, elements: list[str]) -> None:
        if self.sorts.get(sort):
            return  # first distinct assertion fixes the domain
        self.sorts[sort] = list(elements)
        for i, el in enumerate(elements):
            self.element_sort[el] = sort
            self.element_index[el] = i

    # -- variable registry ------------------------------------------------------

    def bool_var(self, name: str) -> Formula:
        self.bool_vars.setdefault(name, len(self.bool_vars))
        return ("var", name)

    def int_var(self, name: str, lo: Optional[int] = None, hi: Optional[int] = None) -> Lin:
        if name not in self.int_vars:
            self.int_vars[name] = len(self.int_vars)
            self.int_bounds[name] = (-self.int_bound, self.int_bound)
        if lo is not None or hi is not None:
            clo, chi = self.int_bounds[name]
            self.int_bounds[name] = (clo if lo is None else max(clo, lo),
                                     chi if hi is None else min(chi, hi))
        return Lin({name: 1})

    def enum_var(self, name: str, sort: str) -> Lin:
        n = len(self.sorts.get(sort, []))
        if n == 0:
            raise SmtError(f"sort {sort} has no distinct-asserted domain; "
                           f"cannot solve for {name}")
        self.enum_vars[name] = sort
        return self.int_var(name, 0, n - 1)

    # -- term translation -------------------------------------------------------

    def ground_name(self, fn: str, args: list[str]) -> str:
        return fn + "!" + "!".join(args) if args else fn

    def term_sort(self, t: Sexp) -> str:
        """Sort of a non-arithmetic term: Bool, Int, or a declared sort."""
        if isinstance(t, str):
            if t in ("true", "false"):
                return "Bool"
            if t.lstrip("-").isdigit():
                return "Int"
            if t in self.element_sort:
                return self.element_sort[t]
            if t in self._declared_consts:
                return self._declared_consts[t]
            raise SmtError(f"unknown constant {t!r}")
        head = t[0]
        if head in ("and", "or", "not", "=>", "=", "distinct", "<", "<=", ">", ">="):
            return "Bool"
        if head in ("+", "-", "*", "div"):
            return "Int"
        if head == "ite":
            return self.term_sort(t[2])
        if head in self.funs:
            return self.funs[head][1]
        raise SmtError(f"unknown function {head!r}")

    def to_int(self, t: Sexp) -> Lin:
        if isinstance(t, str):
            if t.lstrip("-").isdigit():
                return Lin(const=int(t))
            if t in self.element_sort:
                return Lin(const=self.element_index[t])
            if t in self._declared_consts:
                s = self._declared_consts[t]
                if s == "Int":
                    return self.int_var(t)
                if s in self.sorts:
                    return self.enum_var(t, s)
                raise SmtError(f"constant {t!r} of sort {s} in arithmetic position")
            raise SmtError(f"unknown constant {t!r}")
        head = t[0]
        if head == "+":
            out = Lin()
            for a in t[1:]:
                out = out + self.to_int(a)
            return out
        if head == "-":
            if len(t) == 2:
                return self.to_int(t[1]).scale(-1)
            out = self.to_int(t[1])
            for a in t[2:]:
                out = out - self.to_int(a)
            return out
        if head == "*":
            parts = [self.to_int(a) for a in t[1:]]
            out = Lin(const=1)
            for p in parts:
                if not out.coefs:
                    out = p.scale(out.const)
                elif not p.coefs:
                    out = out.scale(p.const)
                else:
                    raise SmtError("nonlinear multiplication is not supported")
            return out
        if head == "ite":
            cond = self.to_formula(t[1])
            a = self.to_int(t[2])
            b = self.to_int(t[3])
            name = f"ite!{self._ite_counter}"
            self._ite_counter += 1
            v = self.int_var(name)
            # cond -> v = a ; not cond -> v = b
            self.assertions.append(("or", [("not", cond), self.eq_formula(v, a)]))
            self.assertions.append(("or", [cond, self.eq_formula(v, b)]))
            return v
        if head in self.funs:
            arg_sorts, rng = self.funs[head]
            name = self.ground_name(head, self._app_args(t))
            if rng == "Int":
                return self.int_var(name)
            if rng in self.sorts:
                return self.enum_var(name, rng)
            raise SmtError(f"function {head} is not integer-valued")
        raise SmtError(f"cannot interpret {format_sexp(t)} as an integer")

    def _app_args(self, t: Sexp) -> list[str]:
        """Applications are ground: every argument must be a domain element
        (a constant enumerated by a distinct assertion over its sort)."""
        args = t[1:]
        for a in args:
            if not isinstance(a, str) or a not in self.element_sort:
                raise SmtError(
                    f"application {format_sexp(t)}: argument {format_sexp(a)} is not a "
                    f"domain element; expand over the domain when emitting")
        return list(args)

    def atom_le0(self, lin: Lin) -> Formula:
        """Atom lin <= 0 (constant-folded)."""
        if not lin.coefs:
            return lin.const <= 0
        key = lin.key()
        if key not in self.atoms:
            self.atoms[key] = len(self.atom_lin)
            self.atom_lin.append(lin)
        return ("atom", self.atoms[key])

    def le_formula(self, a: Lin, b: Lin) -> Formula:
        return self.atom_le0(a - b)

    def eq_formula(self, a: Lin, b: Lin) -> Formula:
        return ("and", [self.le_formula(a, b), self.le_formula(b, a)])

    def to_formula(self, t: Sexp) -> Formula:
        if isinstance(t, str):
            if t == "true":
                return True
            if t == "false":
                return False
            if t in self._declared_consts and self._declared_consts[t] == "Bool":
                return self.bool_var(t)
            raise SmtError(f"unknown Boolean constant {t!r}")
        head = t[0]
        if head == "and":
            return ("and", [self.to_formula(a) for a in t[1:]])
        if head == "or":
            return ("or", [self.to_formula(a) for a in t[1:]])
        if head == "not":
            return ("not", self.to_formula(t[1]))
        if head == "=>":
            parts = [self.to_formula(a) for a in t[1:]]
            out = parts[-1]
            for p in reversed(parts[:-1]):
                out = ("or", [("not", p), out])
            return out
        if head in ("<", "<=", ">", ">="):
            a, b = self.to_int(t[1]), self.to_int(t[2])
            if head == "<":
                return self.le_formula(a + Lin(const=1), b)
            if head == "<=":
                return self.le_formula(a, b)
            if head == ">":
                return self.le_formula(b + Lin(const=1), a)
            return self.le_formula(b, a)
        if head in ("=", "distinct"):
            sorts = {self.term_sort(a) for a in t[1:]}
            if sorts == {"Bool"}:
                parts = [self.to_formula(a) for a in t[1:]]
                pairs = [(x, y) for i, x in enumerate(parts) for y in parts[i + 1:]]
                if head == "=":
                    return ("and", [self._iff(x, y) for x, y in pairs])
                return ("and", [("not", self._iff(x, y)) for x, y in pairs])
            terms = [self.to_int(a) for a in t[1:]]
            pairs = [(x, y) for i, x in enumerate(terms) for y in terms[i + 1:]]
            if head == "=":
                return ("and", [self.eq_formula(x, y) for x, y in pairs])
            return ("and", [("not", self.eq_formula(x, y)) for x, y in pairs])
        if head == "ite":
            c = self.to_formula(t[1])
            a = self.to_formula(t[2])
            b = self.to_formula(t[3])
            return ("or", [("and", [c, a]), ("and", [("not", c), b])])
        if head in self.funs:
            arg_sorts, rng = self.funs[head]
            if rng != "Bool":
                raise SmtError(f"function {head} used as a predicate")
            return self.bool_var(self.ground_name(head, self._app_args(t)))
        raise SmtError(f"cannot interpret {format_sexp(t)} as a formula")

    @staticmethod
    def _iff(a: Formula, b: Formula) -> Formula:
        return ("or", [("and", [a, b]), ("and", [("not", a), ("not", b)])])

    # -- command processing ------------------------------------------------------

    def run_text(self, text: str) -> str:
        out: list[str] = []
        for cmd in read_sexps(text):
            r = self.command(cmd)
            if r is not None:
                out.append(r)
        return "\n".join(out) + ("\n" if out else "")

    def command(self, cmd: Sexp) -> Optional[str]:
        if not isinstance(cmd, list) or not cmd:
            raise SmtError(f"bad command {format_sexp(cmd)}")
        head = cmd[0]
        if head in ("set-logic", "set-option", "set-info", "push", "pop", "echo"):
            return None
        if head == "declare-sort":
            self.declare_sort(cmd[1])
            return None
        if head == "declare-const":
            self.declare_fun(cmd[1], [], cmd[2] if isinstance(cmd[2], str) else cmd[2][0])
            return None
        if head == "declare-fun":
            args = [a if isinstance(a, str) else a[0] for a in cmd[2]]
            rng = cmd[3] if isinstance(cmd[3], str) else cmd[3][0]
            self.declare_fun(cmd[1], args, rng)
            return None
        if head == "assert":
            self._pre_scan(cmd[1])
            self.assertions.append(self.to_formula(cmd[1]))
            return None
        if head == "minimize":
            self.objectives.append(self.to_int(cmd[1]))
            return None
        if head == "check-sat":
            self.status = self.solve()
            return self.status
        if head == "get-value":
            if self.model is None:
                return "(error \"no model\")"
            pairs = []
            for t in cmd[1]:
                pairs.append(f"({format_sexp(t)} {self.eval_term(t)})")
            return "(" + "\n ".join(pairs) + ")"
        if head == "get-model":
            if self.model is None:
                return "(error \"no model\")"
            lines = ["(model"]
            for name, sort in sorted(self._declared_consts.items()):
                if sort == "Bool" and name in self.bool_vars:
                    lines.append(f"  (define-fun {name} () Bool "
                                 f"{'true' if self.model.get(name) else 'false'})")
                elif sort == "Int" and name in self.int_vars:
                    lines.append(f"  (define-fun {name} () {sort} "
                                 f"{format_int(self.model.get(name, 0))})")
                elif sort in self.sorts and name in self.enum_vars:
                    el = self.sorts[sort][self.model.get(name, 0)]
                    lines.append(f"  (define-fun {name} () {sort} {el})")
            lines.append(")")
            return "\n".join(lines)
        if head == "exit":
            return None
        raise SmtError(f"unsupported command {head!r}")

    def _pre_scan(self, t: Sexp) -> None:
        """Fix sort domains from `distinct` over declared constants and tighten
        integer bounds from top-level single-variable comparisons."""
        if not isinstance(t, list) or not t:
            return
        if t[0] == "distinct" and all(isinstance(a, str) for a in t[1:]):
            sorts = {self._declared_consts.get(a) for a in t[1:]}
            if len(sorts) == 1:
                s = sorts.pop()
                if s in self.sorts:
                    self._note_domain(s, list(t[1:]))
            return
        if t[0] == "and":
            for a in t[1:]:
                self._pre_scan(a)
            return
        if t[0] in ("<=", "<", ">=", ">") and len(t) == 3:
            a, b = t[1], t[2]

            def as_const(x):
                if isinstance(x, str) and x.lstrip("-").isdigit():
                    return int(x)
                if isinstance(x, list) and len(x) == 2 and x[0] == "-" \
                        and isinstance(x[1], str) and x[1].isdigit():
                    return -int(x[1])
                return None

            def var_name(x):
                if isinstance(x, str) and x in self._declared_consts \
                        and self._declared_consts[x] == "Int":
                    return x
                if isinstance(x, list) and x[0] in self.funs \
                        and all(isinstance(y, str) for y in x[1:]) \
                        and self.funs[x[0]][1] == "Int":
                    return self.ground_name(x[0], list(x[1:]))
                return None

            ca, cb = as_const(a), as_const(b)
            va, vb = var_name(a), var_name(b)
            strict = 1 if t[0] in ("<", ">") else 0
            if ca is not None and vb is not None:
                if t[0] in ("<=", "<"):
                    self.int_var(vb, lo=ca + strict)
                else:
                    self.int_var(vb, hi=ca - strict)
            elif va is not None and cb is not None:
                if t[0] in ("<=", "<"):
                    self.int_var(va, hi=cb - strict)
                else:
                    self.int_var(va, lo=cb + strict)

    # -- CNF ---------------------------------------------------------------------

    def tseitin(self) -> tuple[list[list[int]], int]:
        """CNF over DIMACS-style literals.  Variable numbering: 1..B for
        Boolean vars, B+1..B+A for atoms, then auxiliary definitions."""
        nbool = len(self.bool_vars)
        natom = len(self.atom_lin)
        next_var = [nbool + natom]
        clauses: list[list[int]] = []
        cache: dict[tuple, int] = {}

        def lit_of(f: Formula) -> int:
            if f is True or f is False:
                # map constants through a dedicated always-true variable
                key = ("const",)
                if key not in cache:
                    next_var[0] += 1
                    cache[key] = next_var[0]
                    clauses.append([cache[key]])
                return cache[key] if f else -cache[key]
            op = f[0]
            if op == "var":
                return self.bool_vars[f[1]] + 1
            if op == "atom":
                return nbool + f[1] + 1
            if op == "not":
                return -lit_of(f[1])
            kids = tuple(sorted(lit_of(k) for k in f[1]))
            key = (op, kids)
            if key in cache:
                return cache[key]
            next_var[0] += 1
            v = next_var[0]
            cache[key] = v
            if op == "and":
                for k in kids:
                    clauses.append([-v, k])
                clauses.append([v] + [-k for k in kids])
            elif op == "or":
                for k in kids:
                    clauses.append([v, -k])
                clauses.append([-v] + list(kids))
            else:
                raise SmtError(f"unknown op {op}")
            return v

        for f in self.assertions:
            # assert at the top level: flatten conjunctions, emit clause per disjunction
            stack = [f]
            while stack:
                g = stack.pop()
                if g is True:
                    continue
                if g is False:
                    clauses.append([])
                    continue
                if isinstance(g, tuple) and g[0] == "and":
                    stack.extend(g[1])
                elif isinstance(g, tuple) and g[0] == "or":
                    clauses.append([lit_of(k) for k in g[1]])
                else:
                    clauses.append([lit_of(g)])
        return clauses, next_var[0]

    # -- MILP --------------------------------------------------------------------

    def solve(self) -> str:
        from scipy import sparse
        from scipy.optimize import Bounds, LinearConstraint, milp

        clauses, nvars = self.tseitin()
        if any(len(c) == 0 for c in clauses):
            self.model = None
            return "unsat"

        nbool = len(self.bool_vars)
        natom = len(self.atom_lin)
        nint = len(self.int_vars)
        ncols = nvars + nint
        int_col = {name: nvars + i for name, i in
                   sorted(self.int_vars.items(), key=lambda kv: kv[1])}

        lb = np.zeros(ncols)
        ub = np.ones(ncols)
        for name, i in self.int_vars.items():
            lo, hi = self.int_bounds[name]
            if lo > hi:
                self.model = None
                return "unsat"
            lb[nvars + i] = lo
            ub[nvars + i] = hi

        rows_a, cols_a, vals_a, lo_r, hi_r = [], [], [], [], []
        row = 0

        def add_row(entries: list[tuple[int, float]], lo: float, hi: float) -> None:
            nonlocal row
            for c, v in entries:
                rows_a.append(row)
                cols_a.append(c)
                vals_a.append(v)
            lo_r.append(lo)
            hi_r.append(hi)
            row += 1

        for cl in clauses:
            entries = []
            base = 0
            seen: dict[int, float] = {}
            for lit in cl:
                col = abs(lit) - 1
                seen[col] = seen.get(col, 0.0) + (1.0 if lit > 0 else -1.0)
                if lit < 0:
                    base += 1
            entries = [(c, v) for c, v in seen.items() if v != 0.0]
            add_row(entries, 1 - base, np.inf)

        # atom links: b_a = 1  <->  lin <= 0   (over integers, not(atom) is lin >= 1)
        for a_idx, lin in enumerate(self.atom_lin):
            acol = nbool + a_idx
            lo_e = lin.const
            hi_e = lin.const
            for name, coef in lin.coefs.items():
                vlo, vhi = self.int_bounds[name]
                lo_e += coef * (vlo if coef > 0 else vhi)
                hi_e += coef * (vhi if coef > 0 else vlo)
            entries = [(int_col[n], float(c)) for n, c in lin.coefs.items()]
            if hi_e <= 0:
                add_row([(acol, 1.0)], 1, 1)  # expression cannot exceed 0
                continue
            if lo_e >= 1:
                add_row([(acol, 1.0)], 0, 0)  # expression cannot reach 0
                continue
            # b=1 -> E <= 0:   A.x + hi_e * b <= hi_e - const
            add_row(entries + [(acol, float(hi_e))], -np.inf, float(hi_e - lin.const))
            # b=0 -> E >= 1:   A.x + (1 - lo_e) * b >= 1 - const
            add_row(entries + [(acol, float(1 - lo_e))], float(1 - lin.const), np.inf)

        c_obj = np.zeros(ncols)
        for lin in self.objectives:
            for name, coef in lin.coefs.items():
                c_obj[int_col[name]] += coef

        a = sparse.csc_matrix((vals_a, (rows_a, cols_a)), shape=(row, ncols))
        constraints = LinearConstraint(a, np.array(lo_r), np.array(hi_r))
        integrality = np.ones(ncols)
        options = {"presolve": True}
        if self.time_limit is not None:
            options["time_limit"] = self.time_limit
        res = milp(c=c_obj, constraints=constraints,
                   bounds=Bounds(lb, ub), integrality=integrality, options=options)

        if res.status == 0:
            x = np.round(res.x).astype(int)
            model: dict[str, int] = {}
            for name, i in self.bool_vars.items():
                model[name] = int(x[i])
            for name, i in self.int_vars.items():
                model[name] = int(x[nvars + i])
            self.model = model
            return "sat"
        if res.status == 2:
            self.model = None
            return "unsat"
        self.model = None
        return "unknown"

    # -- model evaluation ----------------------------------------------------------

    def eval_term(self, t: Sexp) -> str:
        sort = self.term_sort(t)
        if sort == "Bool":
            return "true" if self._eval_bool(t) else "false"
        if sort == "Int":
            return format_int(self._eval_int(t))
        idx = self._eval_int(t)
        return self.sorts[sort][idx]

    def _eval_int(self, t: Sexp) -> int:
        lin = self.to_int(t)
        assert self.model is not None
        return lin.const + sum(c * self.model.get(v, 0) for v, c in lin.coefs.items())

    def _eval_bool(self, t: Sexp) -> bool:
        f = self.to_formula(t)

        def ev(g: Formula) -> bool:
            if g is True or g is False:
                return bool(g)
            op = g[0]
            if op == "var":
                return bool(self.model.get(g[1], 0))
            if op == "atom":
                lin = self.atom_lin[g[1]]
                val = lin.const + sum(c * self.model.get(v, 0)
                                      for v, c in lin.coefs.items())
                return val <= 0
            if op == "not":
                return not ev(g[1])
            if op == "and":
                return all(ev(k) for k in g[1])
            if op == "or":
                return any(ev(k) for k in g[1])
            raise SmtError(f"cannot evaluate {g!r}")

        return ev(f)


def main(argv: Optional[list[str]] = None) -> int:
    ap = argparse.ArgumentParser(prog="sercheck-solve",
                                 description="finite-model QF_LIA solver (SMT-LIB 2 subset)")
    ap.add_argument("file", nargs="?", help="problem file (default: stdin)")
    ap.add_argument("--int-bound", type=int, default=DEFAULT_INT_BOUND,
                    help="default bound on |integer| variables")
    ap.add_argument("--time-limit", type=float, default=None,
                    help="solve time limit in seconds (exceeding answers 'unknown')")
    ns = ap.parse_args(argv)
    text = open(ns.file).read() if ns.file else sys.stdin.read()
    solver = SmtSolver(int_bound=ns.int_bound, time_limit=ns.time_limit)
    try:
        sys.stdout.write(solver.run_text(text))
    except SmtError as e:
        sys.stdout.write(f"(error \"{e}\")\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
