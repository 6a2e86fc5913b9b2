"""Core language: types, terms, contexts, erasure, and well-formedness.

Types are refined bases, dependent functions, implicit functions, implicit
pairs, type variables, and universal types.  Every binder is alpha-freshened
at elaboration time, so substitution never needs to dodge capture.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping

from . import logic
from .logic import BOOL, INT, UNIT, Expr as LExpr, Lit, Sort, SortError, Var, sort_of
from .names import NameSupply


# ---------------------------------------------------------------------------
# Types and shapes


@dataclass(frozen=True)
class RBase:
    """{v:b | r}"""

    binder: str
    sort: Sort
    refinement: LExpr


@dataclass(frozen=True)
class DFun:
    """x:dom -> cod"""

    param: str
    dom: "Type"
    cod: "Type"


@dataclass(frozen=True)
class IFun:
    """[x:dom] -> cod, ghost parameter chosen by the caller"""

    param: str
    dom: "Type"
    cod: "Type"


@dataclass(frozen=True)
class IPair:
    """[x:fst]. snd, ghost component chosen by the implementation"""

    param: str
    fst: "Type"
    snd: "Type"


@dataclass(frozen=True)
class TVar:
    name: str


@dataclass(frozen=True)
class TAll:
    var: str
    body: "Type"


Type = RBase | DFun | IFun | IPair | TVar | TAll


def tbase(sort: Sort, refinement: LExpr = logic.TRUE, binder: str = "v") -> RBase:
    return RBase(binder, sort, refinement)


@dataclass(frozen=True)
class SBase:
    sort: Sort


@dataclass(frozen=True)
class SArrow:
    dom: "Shape"
    cod: "Shape"


@dataclass(frozen=True)
class SVar:
    name: str


@dataclass(frozen=True)
class SAll:
    var: str
    body: "Shape"


Shape = SBase | SArrow | SVar | SAll


def shape(t: Type) -> Shape:
    """Erase refinements and drop implicit components entirely."""
    match t:
        case RBase(_, s, _):
            return SBase(s)
        case DFun(_, dom, cod):
            return SArrow(shape(dom), shape(cod))
        case IFun(_, _, cod):
            return shape(cod)
        case IPair(_, _, snd):
            return shape(snd)
        case TVar(a):
            return SVar(a)
        case TAll(a, body):
            return SAll(a, shape(body))
    raise TypeError(t)


def shape_equal(s1: Shape, s2: Shape, ren: Mapping[str, str] | None = None) -> bool:
    ren = ren or {}
    match (s1, s2):
        case (SBase(a), SBase(b)):
            return a == b
        case (SArrow(d1, c1), SArrow(d2, c2)):
            return shape_equal(d1, d2, ren) and shape_equal(c1, c2, ren)
        case (SVar(a), SVar(b)):
            return ren.get(a, a) == b
        case (SAll(a, b1), SAll(b, b2)):
            return shape_equal(b1, b2, {**ren, a: b})
        case _:
            return False


# ---------------------------------------------------------------------------
# Terms


@dataclass(frozen=True)
class Const:
    value: object  # int | bool | UnitValue


@dataclass(frozen=True)
class Prim:
    op: str  # one of PRIM_TYPES


@dataclass(frozen=True)
class EVar:
    name: str


@dataclass(frozen=True)
class Lam:
    param: str
    annot: object  # Shape | Type | None
    body: "CoreExpr"


@dataclass(frozen=True)
class EApp:
    fn: "CoreExpr"
    arg: "CoreExpr"


@dataclass(frozen=True)
class Let:
    binder: str
    annot: object  # Shape | Type
    bound: "CoreExpr"
    body: "CoreExpr"


@dataclass(frozen=True)
class ILam:
    param: str
    annot: Type
    body: "CoreExpr"


@dataclass(frozen=True)
class Unpack:
    ghost: str
    corp: str
    scrutinee: "CoreExpr"
    body: "CoreExpr"


@dataclass(frozen=True)
class TLam:
    var: str
    body: "CoreExpr"


@dataclass(frozen=True)
class TApp:
    fn: "CoreExpr"
    shape_arg: Shape


@dataclass(frozen=True)
class If:
    cond: "CoreExpr"
    then: "CoreExpr"
    els: "CoreExpr"


CoreExpr = Const | Prim | EVar | Lam | EApp | Let | ILam | Unpack | TLam | TApp | If


def app_spine(e: CoreExpr) -> tuple[CoreExpr, list[CoreExpr]]:
    args: list[CoreExpr] = []
    while isinstance(e, EApp):
        args.append(e.arg)
        e = e.fn
    return e, list(reversed(args))


# ---------------------------------------------------------------------------
# Contexts


@dataclass(frozen=True)
class Corporeal:
    name: str
    type: Type


@dataclass(frozen=True)
class Ghost:
    name: str
    type: Type


@dataclass(frozen=True)
class TyVarEntry:
    name: str


CtxEntry = Corporeal | Ghost | TyVarEntry


@dataclass(frozen=True)
class Ctx:
    entries: tuple[CtxEntry, ...] = ()

    def push(self, entry: CtxEntry) -> "Ctx":
        return Ctx(self.entries + (entry,))

    def corporeal(self, name: str, t: Type) -> "Ctx":
        return self.push(Corporeal(name, t))

    def ghost(self, name: str, t: Type) -> "Ctx":
        return self.push(Ghost(name, t))

    def tyvar(self, name: str) -> "Ctx":
        return self.push(TyVarEntry(name))

    def lookup(self, name: str) -> CtxEntry | None:
        for e in reversed(self.entries):
            if isinstance(e, (Corporeal, Ghost)) and e.name == name:
                return e
        return None

    def lookup_corporeal(self, name: str) -> Type | None:
        e = self.lookup(name)
        return e.type if isinstance(e, Corporeal) else None

    def has_tyvar(self, name: str) -> bool:
        return any(isinstance(e, TyVarEntry) and e.name == name for e in self.entries)

    def names(self) -> set[str]:
        return {e.name for e in self.entries if isinstance(e, (Corporeal, Ghost))}

    def base_bindings(self) -> list[tuple[str, Sort, LExpr]]:
        """Base-sorted binders (corporeal and ghost) in context order, with
        the refinement instantiated at the binder's own name."""
        out = []
        for e in self.entries:
            if isinstance(e, (Corporeal, Ghost)) and isinstance(e.type, RBase):
                t = e.type
                out.append((e.name, t.sort, logic.subst1(t.refinement, t.binder, Var(e.name))))
        return out

    def __iter__(self) -> Iterator[CtxEntry]:
        return iter(self.entries)


EMPTY_CTX = Ctx()


def forget_implicits(ctx: Ctx) -> Ctx:
    """Every ghost binder becomes corporeal; order preserved."""
    out = []
    for e in ctx:
        out.append(Corporeal(e.name, e.type) if isinstance(e, Ghost) else e)
    return Ctx(tuple(out))


# ---------------------------------------------------------------------------
# Substitution


def subst_type(t: Type, x: str, e: LExpr) -> Type:
    """Capture-avoiding substitution of a refinement-level expression into
    refinements.  Freshened binders make shadowing impossible, but binders
    equal to x still stop the descent."""
    match t:
        case RBase(v, s, r):
            if v == x:
                return t
            return RBase(v, s, logic.subst1(r, x, e))
        case DFun(p, dom, cod):
            dom2 = subst_type(dom, x, e)
            cod2 = cod if p == x else subst_type(cod, x, e)
            return DFun(p, dom2, cod2)
        case IFun(p, dom, cod):
            dom2 = subst_type(dom, x, e)
            cod2 = cod if p == x else subst_type(cod, x, e)
            return IFun(p, dom2, cod2)
        case IPair(p, fst, snd):
            fst2 = subst_type(fst, x, e)
            snd2 = snd if p == x else subst_type(snd, x, e)
            return IPair(p, fst2, snd2)
        case TVar(_):
            return t
        case TAll(a, body):
            return TAll(a, subst_type(body, x, e))
    raise TypeError(t)


def subst_tvar(t: Type, a: str, replacement: Type) -> Type:
    match t:
        case RBase(_, _, _):
            return t
        case DFun(p, dom, cod):
            return DFun(p, subst_tvar(dom, a, replacement), subst_tvar(cod, a, replacement))
        case IFun(p, dom, cod):
            return IFun(p, subst_tvar(dom, a, replacement), subst_tvar(cod, a, replacement))
        case IPair(p, fst, snd):
            return IPair(p, subst_tvar(fst, a, replacement), subst_tvar(snd, a, replacement))
        case TVar(b):
            return replacement if b == a else t
        case TAll(b, body):
            if b == a:
                return t
            return TAll(b, subst_tvar(body, a, replacement))
    raise TypeError(t)


def type_free_vars(t: Type) -> set[str]:
    """Free refinement-level variables of a type."""
    match t:
        case RBase(v, _, r):
            return logic.free_vars(r) - {v}
        case DFun(p, dom, cod) | IFun(p, dom, cod):
            return type_free_vars(dom) | (type_free_vars(cod) - {p})
        case IPair(p, fst, snd):
            return type_free_vars(fst) | (type_free_vars(snd) - {p})
        case TVar(_):
            return set()
        case TAll(_, body):
            return type_free_vars(body)
    raise TypeError(t)


def freshen_type(t: Type, supply: NameSupply) -> Type:
    """Alpha-freshen every binder so they are unique within the value."""
    def go(t: Type, ren: dict[str, str]) -> Type:
        match t:
            case RBase(v, s, r):
                v2 = supply.fresh(v)
                return RBase(v2, s, logic.rename(r, {**ren, v: v2}))
            case DFun(p, dom, cod):
                p2 = supply.fresh(p)
                return DFun(p2, go(dom, ren), go(cod, {**ren, p: p2}))
            case IFun(p, dom, cod):
                p2 = supply.fresh(p)
                return IFun(p2, go(dom, ren), go(cod, {**ren, p: p2}))
            case IPair(p, fst, snd):
                p2 = supply.fresh(p)
                return IPair(p2, go(fst, ren), go(snd, {**ren, p: p2}))
            case TVar(a):
                return TVar(ren.get(a, a))
            case TAll(a, body):
                return TAll(a, go(body, ren))
        raise TypeError(t)

    return go(t, {})


# ---------------------------------------------------------------------------
# Well-formedness


@dataclass(frozen=True)
class Diagnostic:
    kind: str  # UnboundVariable | SortMismatch | NonBaseImplicit
    message: str

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


def wf(ctx: Ctx, t: Type) -> list[Diagnostic]:
    """Well-formedness: refinements sort-check to Bool against the doubly
    erased context, implicit parameters are refined bases, type variables
    are in scope."""
    diags: list[Diagnostic] = []

    def sort_env(ctx: Ctx) -> dict[str, Sort]:
        env: dict[str, Sort] = {}
        for e in ctx:
            if isinstance(e, (Corporeal, Ghost)) and isinstance(e.type, RBase):
                env[e.name] = e.type.sort
        return env

    def go(ctx: Ctx, t: Type):
        match t:
            case RBase(v, s, r):
                env = sort_env(ctx)
                env[v] = s
                try:
                    rs = sort_of(r, env)
                    if rs != BOOL:
                        diags.append(Diagnostic("SortMismatch", f"refinement has sort {rs}, expected Bool"))
                except SortError as exc:
                    kind = "UnboundVariable" if "unbound" in str(exc) else "SortMismatch"
                    diags.append(Diagnostic(kind, str(exc)))
            case DFun(p, dom, cod):
                go(ctx, dom)
                go(ctx.corporeal(p, dom), cod)
            case IFun(p, dom, cod) | IPair(p, dom, cod):
                if not isinstance(dom, RBase):
                    diags.append(Diagnostic("NonBaseImplicit", "implicit parameter must have refined base type"))
                    go(ctx, dom)
                else:
                    go(ctx, dom)
                go(ctx.corporeal(p, dom), cod)
            case TVar(a):
                if not ctx.has_tyvar(a):
                    diags.append(Diagnostic("UnboundVariable", f"type variable {a} not in scope"))
            case TAll(a, body):
                go(ctx.tyvar(a), body)
            case _:
                raise TypeError(t)

    go(ctx, t)
    return diags


# ---------------------------------------------------------------------------
# Constants and primitive operators


def tc(value: object) -> Type:
    """Singleton types for literal constants."""
    if isinstance(value, bool):
        return RBase("v", BOOL, logic.eq(Var("v"), Lit(value)))
    if isinstance(value, int):
        return RBase("v", INT, logic.eq(Var("v"), Lit(value)))
    if value is logic.UNIT_VALUE:
        return RBase("v", UNIT, logic.TRUE)
    raise TypeError(f"no constant type for {value!r}")


def _binop(sort_in: Sort, sort_out: Sort, mk) -> Type:
    x, y, v = Var("x"), Var("y"), Var("v")
    return DFun("x", tbase(sort_in), DFun("y", tbase(sort_in), RBase("v", sort_out, mk(v, x, y))))


# Trusted signatures; the paper-style constants table.
PRIM_TYPES: dict[str, Type] = {
    "+": _binop(INT, INT, lambda v, x, y: logic.eq(v, logic.App("+", (x, y)))),
    "-": _binop(INT, INT, lambda v, x, y: logic.eq(v, logic.App("-", (x, y)))),
    "=": _binop(INT, BOOL, lambda v, x, y: logic.eq(v, logic.eq(x, y))),
    "<=": _binop(INT, BOOL, lambda v, x, y: logic.eq(v, logic.App("<=", (x, y)))),
    "<": _binop(INT, BOOL, lambda v, x, y: logic.eq(v, logic.App("<", (x, y)))),
    "&&": _binop(BOOL, BOOL, lambda v, x, y: logic.eq(v, logic.App("and", (x, y)))),
    "||": _binop(BOOL, BOOL, lambda v, x, y: logic.eq(v, logic.App("or", (x, y)))),
    "not": DFun("x", tbase(BOOL), RBase("v", BOOL, logic.eq(Var("v"), logic.neg(Var("x"))))),
    "assert": DFun("x", RBase("v", BOOL, Var("v")), tbase(UNIT)),
}


def prim_type(op: str, supply: NameSupply) -> Type:
    t = PRIM_TYPES.get(op)
    if t is None:
        raise KeyError(f"unknown primitive {op}")
    return freshen_type(t, supply)


# Refinement-level reflection: which terms may appear inside refinements.
REFLECTABLE_OPS = {"+": "+", "-": "-", "=": "=", "<=": "<=", "<": "<",
                   "&&": "and", "||": "or", "not": "not"}


def reflect(e: CoreExpr) -> LExpr | None:
    """Map a term to a refinement-level expression, when it is one."""
    match e:
        case Const(v):
            return Lit(v)
        case EVar(x):
            return Var(x)
        case EApp(_, _):
            head, args = app_spine(e)
            if isinstance(head, Prim) and head.op in REFLECTABLE_OPS:
                want = 1 if head.op == "not" else 2
                if len(args) != want:
                    return None
                parts = [reflect(a) for a in args]
                if any(p is None for p in parts):
                    return None
                return logic.App(REFLECTABLE_OPS[head.op], tuple(parts))  # type: ignore[arg-type]
            return None
        case _:
            return None
