"""Existential Horn Clauses.

The constraint language of inference:

    c ::= exists x:s. c  |  c /\\ c  |  forall x:s. p => c  |  p
    p ::= kappa(e...)    |  r

with two classes of predicate variables: kappas standing for unknown
refinements and pi variables introduced by skolemization.  Also home to the
substitutions, the dependency/cycle analysis, separability, the fixed
simplification normal form, and the textual fixture format.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Iterator, Mapping

from . import sexp
from .logic import (
    BOOL,
    FALSE,
    INT,
    SORTS_BY_NAME,
    TRUE,
    UNIT,
    UNIT_VALUE,
    App,
    Expr,
    Lit,
    Sort,
    Var,
    free_vars as expr_free_vars,
    subst as expr_subst,
)
from .names import NameSupply

KAPPA = "kappa"
PI = "pi"


@dataclass(frozen=True)
class PredVarId:
    name: str
    kind: str  # KAPPA | PI
    params: tuple[tuple[str, Sort], ...]
    skolem_binder: str | None = None  # the existential binder a pi replaced

    @property
    def arity(self) -> int:
        return len(self.params)


class Registry(dict):
    """Predicate-variable registry: name -> PredVarId."""

    def declare(self, pv: PredVarId) -> PredVarId:
        if pv.name in self and self[pv.name] != pv:
            raise ArityMismatch(f"conflicting declarations for {pv.name}")
        self[pv.name] = pv
        return pv

    def kappas(self) -> list[PredVarId]:
        return [pv for pv in self.values() if pv.kind == KAPPA]

    def pis(self) -> list[PredVarId]:
        return [pv for pv in self.values() if pv.kind == PI]


class ArityMismatch(Exception):
    pass


class NotSeparable(Exception):
    def __init__(self, kappas: frozenset[str]):
        super().__init__(f"cyclic predicate variables under existentials: {sorted(kappas)}")
        self.kappas = kappas


@dataclass(frozen=True)
class KApp:
    var: str
    args: tuple[Expr, ...]


Prop = Expr | KApp


@dataclass(frozen=True)
class CHead:
    prop: Prop


@dataclass(frozen=True)
class CAnd:
    parts: tuple["Constraint", ...]


@dataclass(frozen=True)
class CExists:
    var: str
    sort: Sort
    body: "Constraint"


@dataclass(frozen=True)
class CForall:
    var: str
    sort: Sort
    guard: Prop
    body: "Constraint"


Constraint = CHead | CAnd | CExists | CForall

CTRUE = CHead(TRUE)
CFALSE = CHead(FALSE)


def cand(parts: list[Constraint]) -> Constraint:
    """Conjunction, flattened; [] is the vacuous constraint."""
    flat: list[Constraint] = []
    for p in parts:
        if isinstance(p, CAnd):
            flat.extend(p.parts)
        else:
            flat.append(p)
    if not flat:
        return CTRUE
    if len(flat) == 1:
        return flat[0]
    return CAnd(tuple(flat))


# ---------------------------------------------------------------------------
# Traversals


def prop_free_vars(p: Prop) -> set[str]:
    if isinstance(p, KApp):
        out: set[str] = set()
        for a in p.args:
            out |= expr_free_vars(a)
        return out
    return expr_free_vars(p)


def free_vars(c: Constraint) -> set[str]:
    match c:
        case CHead(p):
            return prop_free_vars(p)
        case CAnd(parts):
            out: set[str] = set()
            for p in parts:
                out |= free_vars(p)
            return out
        case CExists(x, _, body):
            return free_vars(body) - {x}
        case CForall(x, _, guard, body):
            return (prop_free_vars(guard) | free_vars(body)) - {x}
    raise TypeError(c)


def bound_vars(c: Constraint) -> list[str]:
    match c:
        case CHead(_):
            return []
        case CAnd(parts):
            out: list[str] = []
            for p in parts:
                out.extend(bound_vars(p))
            return out
        case CExists(x, _, body):
            return [x] + bound_vars(body)
        case CForall(x, _, _, body):
            return [x] + bound_vars(body)
    raise TypeError(c)


def pred_vars(c: Constraint) -> set[str]:
    out: set[str] = set()

    def walk_prop(p: Prop):
        if isinstance(p, KApp):
            out.add(p.var)

    def walk(c: Constraint):
        match c:
            case CHead(p):
                walk_prop(p)
            case CAnd(parts):
                for x in parts:
                    walk(x)
            case CExists(_, _, body):
                walk(body)
            case CForall(_, _, guard, body):
                walk_prop(guard)
                walk(body)

    walk(c)
    return out


def head_vars(c: Constraint) -> set[str]:
    """Predicate variables with at least one head occurrence."""
    out: set[str] = set()

    def walk(c: Constraint):
        match c:
            case CHead(KApp(var, _)):
                out.add(var)
            case CAnd(parts):
                for x in parts:
                    walk(x)
            case CExists(_, _, body):
                walk(body)
            case CForall(_, _, _, body):
                walk(body)
            case _:
                pass

    walk(c)
    return out


def guard_vars(c: Constraint) -> set[str]:
    out: set[str] = set()

    def walk(c: Constraint):
        match c:
            case CAnd(parts):
                for x in parts:
                    walk(x)
            case CExists(_, _, body):
                walk(body)
            case CForall(_, _, guard, body):
                if isinstance(guard, KApp):
                    out.add(guard.var)
                walk(body)
            case _:
                pass

    walk(c)
    return out


# ---------------------------------------------------------------------------
# Substitution and renaming


def map_props(c: Constraint, f: Callable[[Prop], Prop]) -> Constraint:
    match c:
        case CHead(p):
            return CHead(f(p))
        case CAnd(parts):
            return CAnd(tuple(map_props(x, f) for x in parts))
        case CExists(x, s, body):
            return CExists(x, s, map_props(body, f))
        case CForall(x, s, guard, body):
            return CForall(x, s, f(guard), map_props(body, f))
    raise TypeError(c)


def subst_all(c: Constraint, env: Mapping[str, Expr]) -> Constraint:
    """Plain substitution into every prop.  Binders are assumed unique, so
    capture cannot occur; shadowed names are still respected."""

    def go(c: Constraint, env: Mapping[str, Expr]) -> Constraint:
        if not env:
            return c
        match c:
            case CHead(p):
                return CHead(_subst_prop(p, env))
            case CAnd(parts):
                return CAnd(tuple(go(x, env) for x in parts))
            case CExists(x, s, body):
                inner = {k: v for k, v in env.items() if k != x}
                return CExists(x, s, go(body, inner))
            case CForall(x, s, guard, body):
                inner = {k: v for k, v in env.items() if k != x}
                return CForall(x, s, _subst_prop(guard, env), go(body, inner))
        raise TypeError(c)

    return go(c, dict(env))


def _subst_prop(p: Prop, env: Mapping[str, Expr]) -> Prop:
    if isinstance(p, KApp):
        return KApp(p.var, tuple(expr_subst(a, env) for a in p.args))
    return expr_subst(p, env)


def subst_fo(c: Constraint, x: str, r: Expr) -> Constraint:
    """Existential substitution: remove the binding exists x and replace x by
    r underneath.  Everything outside that subtree is untouched."""
    match c:
        case CExists(y, _, body) if y == x:
            return subst_all(body, {x: r})
        case CExists(y, s, body):
            return CExists(y, s, subst_fo(body, x, r))
        case CForall(y, s, guard, body):
            return CForall(y, s, guard, subst_fo(body, x, r))
        case CAnd(parts):
            return CAnd(tuple(subst_fo(p, x, r) for p in parts))
        case CHead(_):
            return c
    raise TypeError(c)


def subst_so(c: Constraint, var: str, params: tuple[str, ...], body: Expr) -> Constraint:
    """Second-order substitution of a predicate body for every application
    of `var`, in guards and heads alike."""

    def hit(p: Prop) -> Prop:
        if isinstance(p, KApp) and p.var == var:
            if len(p.args) != len(params):
                raise ArityMismatch(
                    f"{var} applied to {len(p.args)} args, declared {len(params)}"
                )
            return expr_subst(body, dict(zip(params, p.args)))
        return p

    return map_props(c, hit)


def freshen(c: Constraint, supply: NameSupply) -> Constraint:
    """Rename every binder to a fresh name (free variables untouched)."""

    def go(c: Constraint, ren: dict[str, str]) -> Constraint:
        match c:
            case CHead(p):
                return CHead(_rename_prop(p, ren))
            case CAnd(parts):
                return CAnd(tuple(go(x, ren) for x in parts))
            case CExists(x, s, body):
                x2 = supply.fresh(x)
                return CExists(x2, s, go(body, {**ren, x: x2}))
            case CForall(x, s, guard, body):
                x2 = supply.fresh(x)
                return CForall(x2, s, _rename_prop(guard, ren), go(body, {**ren, x: x2}))
        raise TypeError(c)

    return go(c, {})


def _rename_prop(p: Prop, ren: Mapping[str, str]) -> Prop:
    env = {k: Var(v) for k, v in ren.items()}
    return _subst_prop(p, env)


# ---------------------------------------------------------------------------
# Dependencies, cycles, separability


def deps(c: Constraint) -> set[tuple[str, str]]:
    """Edges (k, k') where k guards a subtree containing a head k'."""
    edges: set[tuple[str, str]] = set()

    def walk(c: Constraint, guards: tuple[str, ...]):
        match c:
            case CHead(KApp(var, _)):
                for g in guards:
                    edges.add((g, var))
            case CHead(_):
                pass
            case CAnd(parts):
                for x in parts:
                    walk(x, guards)
            case CExists(_, _, body):
                walk(body, guards)
            case CForall(_, _, guard, body):
                if isinstance(guard, KApp):
                    walk(body, guards + (guard.var,))
                else:
                    walk(body, guards)

    walk(c, ())
    return edges


def cycles(c: Constraint) -> frozenset[str]:
    """The union of all cycles: predicate variables from which the dependency
    relation admits an infinite walk."""
    edges = deps(c)
    succ: dict[str, set[str]] = {}
    for a, b in edges:
        succ.setdefault(a, set()).add(b)
    live = set(succ) | {b for _, b in edges}
    changed = True
    while changed:
        changed = False
        for v in list(live):
            if not (succ.get(v, set()) & live):
                live.discard(v)
                changed = True
    return frozenset(live)


def is_acyclic(c: Constraint) -> bool:
    return not cycles(c)


def exists_scoped_vars(c: Constraint) -> set[str]:
    """Predicate variables occurring anywhere under an existential binder."""
    out: set[str] = set()

    def walk(c: Constraint, under: bool):
        match c:
            case CHead(p):
                if under and isinstance(p, KApp):
                    out.add(p.var)
            case CAnd(parts):
                for x in parts:
                    walk(x, under)
            case CExists(_, _, body):
                walk(body, True)
            case CForall(_, _, guard, body):
                if under and isinstance(guard, KApp):
                    out.add(guard.var)
                walk(body, under)

    walk(c, False)
    return out


def noside(c: Constraint) -> Constraint:
    """Drop existential subtrees, leaving the NNF Horn clause part."""
    match c:
        case CExists(_, _, _):
            return CTRUE
        case CForall(x, s, guard, body):
            return CForall(x, s, guard, noside(body))
        case CAnd(parts):
            return CAnd(tuple(noside(p) for p in parts))
        case CHead(_):
            return c
    raise TypeError(c)


def sides(c: Constraint) -> Constraint:
    """Keep only the existential subtrees (under their guard prefixes)."""
    match c:
        case CExists(_, _, _):
            return c
        case CForall(x, s, guard, body):
            return CForall(x, s, guard, sides(body))
        case CAnd(parts):
            return CAnd(tuple(sides(p) for p in parts))
        case CHead(_):
            return CTRUE
    raise TypeError(c)


def separate(c: Constraint) -> tuple[Constraint, Constraint]:
    """Split into (nnf Horn part holding the cycles, acyclic EHC remainder).

    Possible exactly when no cyclic kappa occurs under an existential binder;
    otherwise NotSeparable lists the offending variables.
    """
    cyc = cycles(c)
    offending = cyc & exists_scoped_vars(c)
    if offending:
        raise NotSeparable(frozenset(offending))
    return simplify(noside(c)), simplify(sides(c))


# ---------------------------------------------------------------------------
# Simplification: the fixed normal form used for golden tests


def simplify_prop(p: Prop) -> Prop:
    if isinstance(p, KApp):
        return p
    return _fold(p)


def _fold(e: Expr) -> Expr:
    match e:
        case App("and", args):
            parts = []
            for a in (_fold(x) for x in args):
                if a == FALSE:
                    return FALSE
                if a == TRUE:
                    continue
                if isinstance(a, App) and a.op == "and":
                    parts.extend(a.args)
                else:
                    parts.append(a)
            if not parts:
                return TRUE
            if len(parts) == 1:
                return parts[0]
            return App("and", tuple(parts))
        case App("or", args):
            parts = []
            for a in (_fold(x) for x in args):
                if a == TRUE:
                    return TRUE
                if a == FALSE:
                    continue
                parts.append(a)
            if not parts:
                return FALSE
            if len(parts) == 1:
                return parts[0]
            return App("or", tuple(parts))
        case App("not", (a,)):
            a = _fold(a)
            if a == TRUE:
                return FALSE
            if a == FALSE:
                return TRUE
            return App("not", (a,))
        case App(op, args):
            return App(op, tuple(_fold(a) for a in args))
        case _:
            return e


def simplify(c: Constraint) -> Constraint:
    """Flatten true guards, drop true conjuncts, prune vacuous binders."""
    match c:
        case CHead(p):
            return CHead(simplify_prop(p))
        case CAnd(parts):
            out: list[Constraint] = []
            for p in parts:
                p = simplify(p)
                if p == CTRUE:
                    continue
                if isinstance(p, CAnd):
                    out.extend(p.parts)
                else:
                    out.append(p)
            if not out:
                return CTRUE
            if len(out) == 1:
                return out[0]
            return CAnd(tuple(out))
        case CExists(x, s, body):
            body = simplify(body)
            if body in (CTRUE, CFALSE):
                return body  # base sorts are inhabited
            return CExists(x, s, body)
        case CForall(x, s, guard, body):
            guard = simplify_prop(guard)
            body = simplify(body)
            if body == CTRUE or guard == FALSE:
                return CTRUE
            if guard == TRUE and x not in free_vars(body):
                return body
            return CForall(x, s, guard, body)
    raise TypeError(c)


# ---------------------------------------------------------------------------
# Canonical form and alpha-equivalence


def canon(c: Constraint) -> sexp.Sexp:
    """A canonical rendering: binders numbered in traversal order, equalities
    orientation-normalized.  Two constraints are alpha-equivalent (modulo
    equality orientation) iff their canonical forms are equal."""

    def expr(e: Expr, ren: Mapping[str, str]) -> sexp.Sexp:
        match e:
            case Var(n):
                return ren.get(n, n)
            case Lit(v):
                if v is UNIT_VALUE:
                    return "unit"
                if isinstance(v, bool):
                    return "true" if v else "false"
                return v
            case App("=", (a, b)):
                ra, rb = expr(a, ren), expr(b, ren)
                if sexp.render(ra) > sexp.render(rb):
                    ra, rb = rb, ra
                return ["=", ra, rb]
            case App(op, args):
                return [op, *(expr(a, ren) for a in args)]
        raise TypeError(e)

    def prop(p: Prop, ren: Mapping[str, str]) -> sexp.Sexp:
        if isinstance(p, KApp):
            return ["kapp", p.var, *(expr(a, ren) for a in p.args)]
        return expr(p, ren)

    counter = [0]

    def go(c: Constraint, ren: dict[str, str]) -> sexp.Sexp:
        match c:
            case CHead(p):
                return prop(p, ren)
            case CAnd(parts):
                return ["and", *(go(x, ren) for x in parts)]
            case CExists(x, s, body):
                counter[0] += 1
                nx = f"?b{counter[0]}"
                return ["exists", [nx, s.name], go(body, {**ren, x: nx})]
            case CForall(x, s, guard, body):
                g = prop(guard, ren)
                counter[0] += 1
                nx = f"?b{counter[0]}"
                return ["forall", [nx, s.name], g, go(body, {**ren, x: nx})]
        raise TypeError(c)

    return go(c, {})


def alpha_equiv(c1: Constraint, c2: Constraint) -> bool:
    return sexp.render(canon(c1)) == sexp.render(canon(c2))


# ---------------------------------------------------------------------------
# Solution maps


@dataclass
class SolutionMap:
    """Second-order assignment (predicate var -> lambda params. pred) plus
    first-order assignment (existential var -> term)."""

    second_order: dict[str, tuple[tuple[str, ...], Expr]] = field(default_factory=dict)
    first_order: dict[str, Expr] = field(default_factory=dict)

    def apply(self, c: Constraint) -> Constraint:
        for x, r in self.first_order.items():
            c = subst_fo(c, x, r)
        for name, (params, body) in self.second_order.items():
            c = subst_so(c, name, params, body)
        return c


# ---------------------------------------------------------------------------
# Textual format: (and ...), (forall (x Sort) p c), (exists (x Sort) c),
# (kapp k e...), predicates in SMT-LIB-like prefix syntax.


class FormatError(Exception):
    pass


def _expr_to_sexp(e: Expr) -> sexp.Sexp:
    match e:
        case Var(n):
            return n
        case Lit(v):
            if v is UNIT_VALUE:
                return "unit"
            if isinstance(v, bool):
                return "true" if v else "false"
            return v
        case App(op, args):
            return [op, *(_expr_to_sexp(a) for a in args)]
    raise TypeError(e)


def _prop_to_sexp(p: Prop) -> sexp.Sexp:
    if isinstance(p, KApp):
        return ["kapp", p.var, *(_expr_to_sexp(a) for a in p.args)]
    return _expr_to_sexp(p)


def to_sexp(c: Constraint) -> sexp.Sexp:
    match c:
        case CHead(p):
            return _prop_to_sexp(p)
        case CAnd(parts):
            return ["and", *(to_sexp(x) for x in parts)]
        case CExists(x, s, body):
            return ["exists", [x, s.name], to_sexp(body)]
        case CForall(x, s, guard, body):
            return ["forall", [x, s.name], _prop_to_sexp(guard), to_sexp(body)]
    raise TypeError(c)


def emit(c: Constraint) -> str:
    return sexp.render_pretty(to_sexp(c)) + "\n"


def _expr_from_sexp(s: sexp.Sexp) -> Expr:
    if isinstance(s, int):
        return Lit(s)
    if isinstance(s, str):
        if s == "true":
            return TRUE
        if s == "false":
            return FALSE
        if s == "unit":
            return Lit(UNIT_VALUE)
        return Var(s)
    if isinstance(s, list) and s and isinstance(s[0], str):
        return App(s[0], tuple(_expr_from_sexp(a) for a in s[1:]))
    raise FormatError(f"bad expression: {sexp.render(s)}")


def _prop_from_sexp(s: sexp.Sexp) -> Prop:
    if isinstance(s, list) and s and s[0] == "kapp":
        if len(s) < 2 or not isinstance(s[1], str):
            raise FormatError(f"bad kapp: {sexp.render(s)}")
        return KApp(s[1], tuple(_expr_from_sexp(a) for a in s[2:]))
    return _expr_from_sexp(s)


def _sort_from_name(name: str) -> Sort:
    if name in SORTS_BY_NAME:
        return SORTS_BY_NAME[name]
    return Sort(name)


def from_sexp(s: sexp.Sexp) -> Constraint:
    if isinstance(s, list) and s:
        head = s[0]
        if head == "and":
            return cand([from_sexp(x) for x in s[1:]])
        if head == "forall":
            if len(s) != 4 or not (isinstance(s[1], list) and len(s[1]) == 2):
                raise FormatError(f"bad forall: {sexp.render(s)}")
            x, sort_name = s[1]
            return CForall(str(x), _sort_from_name(str(sort_name)),
                           _prop_from_sexp(s[2]), from_sexp(s[3]))
        if head == "exists":
            if len(s) != 3 or not (isinstance(s[1], list) and len(s[1]) == 2):
                raise FormatError(f"bad exists: {sexp.render(s)}")
            x, sort_name = s[1]
            return CExists(str(x), _sort_from_name(str(sort_name)), from_sexp(s[2]))
    return CHead(_prop_from_sexp(s))


def parse(text: str) -> tuple[Constraint, Registry]:
    """Parse the textual format; the registry is reconstructed from use
    sites, with parameter sorts inferred from the binders in scope."""
    forms = sexp.parse_all(text)
    if not forms:
        raise FormatError("empty constraint file")
    c = cand([from_sexp(f) for f in forms]) if len(forms) > 1 else from_sexp(forms[0])
    registry = infer_registry(c)
    _check_scoping(c)
    return c, registry


def infer_registry(c: Constraint, kind_of: Callable[[str], str] | None = None) -> Registry:
    registry = Registry()

    def sort_of_arg(a: Expr, env: Mapping[str, Sort]) -> Sort:
        match a:
            case Var(n):
                return env.get(n, INT)
            case Lit(v):
                if isinstance(v, bool):
                    return BOOL
                if v is UNIT_VALUE:
                    return UNIT
                return INT
            case _:
                return INT

    def note(p: Prop, env: Mapping[str, Sort]):
        if isinstance(p, KApp):
            params = tuple(
                (f"p{i}", sort_of_arg(a, env)) for i, a in enumerate(p.args)
            )
            kind = kind_of(p.var) if kind_of else KAPPA
            pv = PredVarId(p.var, kind, params)
            if p.var in registry:
                if registry[p.var].arity != pv.arity:
                    raise ArityMismatch(f"{p.var} used at different arities")
            else:
                registry.declare(pv)

    def walk(c: Constraint, env: dict[str, Sort]):
        match c:
            case CHead(p):
                note(p, env)
            case CAnd(parts):
                for x in parts:
                    walk(x, env)
            case CExists(x, s, body):
                walk(body, {**env, x: s})
            case CForall(x, s, guard, body):
                env2 = {**env, x: s}
                note(guard, env2)
                walk(body, env2)

    walk(c, {})
    return registry


def _check_scoping(c: Constraint):
    free = free_vars(c)
    if free:
        raise FormatError(f"unbound variables: {sorted(free)}")
    seen: set[str] = set()
    for b in bound_vars(c):
        if b in seen:
            raise FormatError(f"duplicate binder {b}")
        seen.add(b)
