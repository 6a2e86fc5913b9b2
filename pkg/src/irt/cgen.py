"""Bidirectional constraint generation.

Checking and synthesis walk elaborated terms and emit an existential Horn
clause per definition.  Unknown refinements become fresh kappa templates
applied to the base-sorted variables in scope; implicit applications guess
their instantiation with an existential binder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import core, logic
from .core import (
    Const,
    Corporeal,
    CoreExpr,
    Ctx,
    DFun,
    EApp,
    EVar,
    Ghost,
    IFun,
    ILam,
    IPair,
    If,
    Lam,
    Let,
    Prim,
    RBase,
    SAll,
    SArrow,
    SBase,
    SVar,
    Shape,
    TAll,
    TApp,
    TLam,
    TVar,
    Type,
    Unpack,
    reflect,
    subst_type,
    subst_tvar,
)
from .ehc import (
    CAnd,
    CExists,
    CForall,
    CHead,
    CTRUE,
    Constraint,
    KApp,
    KAPPA,
    PredVarId,
    Prop,
    Registry,
    cand,
    head_vars,
    pred_vars,
    simplify,
    subst_so,
)
from .logic import BOOL, INT, UNIT, App, Expr, Lit, Sort, Var
from .names import NameSupply


class CgenError(Exception):
    pass


class UnboundVariable(CgenError):
    pass


class ShapeMismatch(CgenError):
    pass


class NotAFunction(CgenError):
    pass


class MissingAnnotation(CgenError):
    pass


KAPP_PREFIX = "kapp$"


def kapp_expr(name: str, args: tuple[Expr, ...]) -> Expr:
    """A kappa application embedded in a refinement."""
    return App(KAPP_PREFIX + name, args)


def prop_parts(r: Expr) -> list[Prop]:
    """Split a refinement into EHC propositions; kappa applications may only
    occur as positive conjuncts."""
    parts: list[Prop] = []
    for p in logic.conjuncts(r):
        if isinstance(p, App) and p.op.startswith(KAPP_PREFIX):
            parts.append(KApp(p.op[len(KAPP_PREFIX):], p.args))
        else:
            if any(
                isinstance(q, App) and q.op.startswith(KAPP_PREFIX)
                for q in logic.subterms(p)
            ):
                raise CgenError("kappa application under a non-conjunctive connective")
            parts.append(p)
    return [p for p in parts if p != logic.TRUE] or [logic.TRUE]


def head_of(r: Expr) -> Constraint:
    return cand([CHead(p) for p in prop_parts(r)])


def forall_imp(x: str, sort: Sort, guard: Expr, body: Constraint, supply: NameSupply) -> Constraint:
    """forall x:sort. guard => body, chaining conjunctive guards through
    trivially bound inner quantifiers (the grammar allows one prop each)."""
    parts = prop_parts(guard)
    first, rest = parts[0], parts[1:]
    for p in reversed(rest):
        body = CForall(supply.fresh("u"), UNIT, p, body)
    return CForall(x, sort, first, body)


@dataclass
class CgenOutput:
    constraint: Constraint
    type: Type
    registry: Registry


@dataclass
class Cgen:
    supply: NameSupply
    registry: Registry = field(default_factory=Registry)

    # -- templates ----------------------------------------------------------

    def _kappa_args(self, ctx: Ctx) -> list[tuple[str, Sort]]:
        return [(name, sort) for name, sort, _ in ctx.base_bindings()]

    def fresh(self, ctx: Ctx, skel: Shape | Type) -> Type:
        """Refine every base position with a fresh kappa over the in-scope
        base variables plus the value binder."""
        match skel:
            case SBase(sort) | RBase(_, sort, _):
                v = self.supply.fresh("v")
                args = self._kappa_args(ctx) + [(v, sort)]
                k = self.supply.fresh("k")
                self.registry.declare(PredVarId(k, KAPPA, tuple(args)))
                return RBase(v, sort, kapp_expr(k, tuple(Var(n) for n, _ in args)))
            case SArrow(dom, cod):
                x = self.supply.fresh("x")
                dom2 = self.fresh(ctx, dom)
                cod2 = self.fresh(ctx.corporeal(x, dom2), cod)
                return DFun(x, dom2, cod2)
            case DFun(x, dom, cod) | IFun(x, dom, cod) | IPair(x, dom, cod):
                x2 = self.supply.fresh(x)
                dom2 = self.fresh(ctx, dom)
                cod2 = self.fresh(ctx.corporeal(x2, dom2), subst_type(cod, x, Var(x2)))
                ctor = type(skel)
                return ctor(x2, dom2, cod2)
            case SVar(a) | TVar(a):
                return TVar(a)
            case SAll(a, body) | TAll(a, body):
                return TAll(a, self.fresh(ctx, body))
        raise TypeError(skel)

    # -- generalized implication / existential -------------------------------

    def genimp(self, x: str, t: Type, c: Constraint) -> Constraint:
        if isinstance(t, RBase):
            guard = logic.subst1(t.refinement, t.binder, Var(x))
            return forall_imp(x, t.sort, guard, c, self.supply)
        return c

    def genexists(self, x: str, t: Type, c: Constraint) -> Constraint:
        if isinstance(t, RBase):
            r = logic.subst1(t.refinement, t.binder, Var(x))
            return CExists(x, t.sort, cand([head_of(r), c]))
        return c

    # -- subtyping ------------------------------------------------------------

    def sub(self, ctx: Ctx, t1: Type, t2: Type) -> Constraint:
        match (t1, t2):
            case (RBase(v1, s1, r1), RBase(v2, s2, r2)):
                if s1 != s2:
                    raise ShapeMismatch(f"base sorts differ: {s1} vs {s2}")
                x = self.supply.fresh(v1)
                guard = logic.subst1(r1, v1, Var(x))
                head = head_of(logic.subst1(r2, v2, Var(x)))
                return forall_imp(x, s1, guard, head, self.supply)
            case (TVar(a), TVar(b)):
                if a != b:
                    raise ShapeMismatch(f"type variables differ: {a} vs {b}")
                return CTRUE
            case (TAll(a1, b1), TAll(a2, b2)):
                return self.sub(ctx.tyvar(a1), b1, subst_tvar(b2, a2, TVar(a1)))
            case (DFun(x1, d1, c1), DFun(x2, d2, c2)):
                c_dom = self.sub(ctx, d2, d1)
                x = self.supply.fresh(x2)
                body = self.sub(
                    ctx.corporeal(x, d2),
                    subst_type(c1, x1, Var(x)),
                    subst_type(c2, x2, Var(x)),
                )
                return cand([c_dom, self.genimp(x, d2, body)])
        if isinstance(t2, IFun):
            x = self.supply.fresh(t2.param)
            body = self.sub(ctx.corporeal(x, t2.dom), t1, subst_type(t2.cod, t2.param, Var(x)))
            return self.genimp(x, t2.dom, body)
        if isinstance(t1, IPair):
            x = self.supply.fresh(t1.param)
            body = self.sub(ctx.corporeal(x, t1.fst), subst_type(t1.snd, t1.param, Var(x)), t2)
            return self.genimp(x, t1.fst, body)
        if isinstance(t2, IPair):
            z = self.supply.fresh(t2.param)
            body = self.sub(ctx.corporeal(z, t2.fst), t1, subst_type(t2.snd, t2.param, Var(z)))
            return self.genexists(z, t2.fst, body)
        if isinstance(t1, IFun):
            z = self.supply.fresh(t1.param)
            body = self.sub(ctx.corporeal(z, t1.dom), subst_type(t1.cod, t1.param, Var(z)), t2)
            return self.genexists(z, t1.dom, body)
        raise ShapeMismatch(f"cannot relate {type(t1).__name__} and {type(t2).__name__}")

    # -- checking ---------------------------------------------------------------

    def check(self, ctx: Ctx, e: CoreExpr, t: Type) -> Constraint:
        match e:
            case Let(x, annot, e1, e2) if isinstance(annot, (SBase, SArrow, SVar, SAll)):
                that = self.fresh(ctx, annot)
                c1 = self.check(ctx, e1, that)
                c2 = self.check(ctx.corporeal(x, that), e2, t)
                return cand([c1, self.genimp(x, that, c2)])
            case Let(x, annot, e1, e2):
                ctx2 = ctx.corporeal(x, annot)
                c1 = self.check(ctx2, e1, annot)
                c2 = self.check(ctx2, e2, t)
                return self.genimp(x, annot, cand([c1, c2]))
            case EApp(e1, e2):
                t1, c1 = self.synth(ctx, e1)
                c2 = self.app_check(ctx, t1, e2, t)
                return cand([c1, c2])
            case TLam(a, body) if isinstance(t, TAll):
                return self.check(ctx.tyvar(a), body, subst_tvar(t.body, t.var, TVar(a)))
            case Unpack(x, y, e1, e2):
                t1, c1 = self.synth(ctx, e1)
                if not isinstance(t1, IPair):
                    raise ShapeMismatch("unpack scrutinee is not an implicit pair")
                snd = subst_type(t1.snd, t1.param, Var(x))
                ctx2 = ctx.ghost(x, t1.fst).corporeal(y, snd)
                c2 = self.check(ctx2, e2, t)
                return cand([c1, self.genimp(x, t1.fst, self.genimp(y, snd, c2))])
            case If(cond, then, els):
                return self._check_if(ctx, cond, then, els, t)
            case _:
                t2, c = self.synth(ctx, e)
                c2 = self.sub(ctx, t2, t)
                return cand([c, c2])

    def _branch_fact(self, ctx: Ctx, fact: Expr, c: Constraint) -> Constraint:
        b = self.supply.fresh("b")
        return self.genimp(b, RBase("v", BOOL, fact), c)

    def _check_if(self, ctx: Ctx, cond, then, els, t: Type) -> Constraint:
        t_cond, c0 = self.synth(ctx, cond)
        if not (isinstance(t_cond, RBase) and t_cond.sort == BOOL):
            raise ShapeMismatch("if condition is not Bool")
        fact = reflect(cond) or logic.TRUE
        c_then = self._branch_fact(ctx, fact, self.check(ctx, then, t))
        c_else = self._branch_fact(ctx, logic.neg(fact), self.check(ctx, els, t))
        return cand([c0, c_then, c_else])

    # -- synthesis ----------------------------------------------------------------

    def synth(self, ctx: Ctx, e: CoreExpr) -> tuple[Type, Constraint]:
        match e:
            case Const(v):
                return core.freshen_type(core.tc(v), self.supply), CTRUE
            case Prim(op):
                return core.prim_type(op, self.supply), CTRUE
            case EVar(x):
                t = ctx.lookup_corporeal(x)
                if t is None:
                    entry = ctx.lookup(x)
                    if entry is not None:
                        raise UnboundVariable(f"ghost variable {x} used in term position")
                    raise UnboundVariable(f"unbound variable {x}")
                if isinstance(t, RBase):
                    v = self.supply.fresh("v")
                    r = logic.conj([logic.subst1(t.refinement, t.binder, Var(v)),
                                    logic.eq(Var(v), Var(x))])
                    return RBase(v, t.sort, r), CTRUE
                return t, CTRUE
            case Lam(p, annot, body) if isinstance(annot, (SBase, SArrow, SVar, SAll)):
                that = self.fresh(ctx, annot)
                t, c = self.synth(ctx.corporeal(p, that), body)
                return DFun(p, that, t), self.genimp(p, that, c)
            case Lam(p, annot, body):
                t, c = self.synth(ctx.corporeal(p, annot), body)
                return DFun(p, annot, t), self.genimp(p, annot, c)
            case ILam(x, tx, body):
                t, c = self.synth(ctx.ghost(x, tx), body)
                return IFun(x, tx, t), self.genimp(x, tx, c)
            case EApp(e1, e2):
                t1, c1 = self.synth(ctx, e1)
                t2, c2 = self.app_synth(ctx, t1, e2)
                return t2, cand([c1, c2])
            case TLam(a, body):
                t, c = self.synth(ctx.tyvar(a), body)
                return TAll(a, t), c
            case TApp(e1, tau):
                t1, c1 = self.synth(ctx, e1)
                if not isinstance(t1, TAll):
                    raise ShapeMismatch("type application of a non-polymorphic term")
                that = self.fresh(ctx, tau)
                return subst_tvar(t1.body, t1.var, that), c1
            case Let(x, annot, e1, e2) if isinstance(annot, (SBase, SArrow, SVar, SAll)):
                that = self.fresh(ctx, annot)
                c1 = self.check(ctx, e1, that)
                ctx2 = ctx.corporeal(x, that)
                t2, c2 = self.synth(ctx2, e2)
                that2 = self.fresh(ctx, t2)
                c3 = self.sub(ctx2, t2, that2)
                return that2, cand([c1, self.genimp(x, that, cand([c2, c3]))])
            case Let(x, annot, e1, e2):
                ctx2 = ctx.corporeal(x, annot)
                c1 = self.check(ctx2, e1, annot)
                t2, c2 = self.synth(ctx2, e2)
                that = self.fresh(ctx, t2)
                c3 = self.sub(ctx2, t2, that)
                return that, self.genimp(x, annot, cand([c1, c2, c3]))
            case Unpack(x, y, e1, e2):
                t1, c1 = self.synth(ctx, e1)
                if not isinstance(t1, IPair):
                    raise ShapeMismatch("unpack scrutinee is not an implicit pair")
                snd = subst_type(t1.snd, t1.param, Var(x))
                ctx2 = ctx.ghost(x, t1.fst).corporeal(y, snd)
                t2, c2 = self.synth(ctx2, e2)
                that = self.fresh(ctx, t2)
                c3 = self.sub(ctx2, t2, that)
                wrapped = self.genimp(x, t1.fst, self.genimp(y, snd, cand([c2, c3])))
                return that, cand([c1, wrapped])
            case If(cond, then, els):
                return self._synth_if(ctx, cond, then, els)
        raise CgenError(f"cannot synthesize a type for {type(e).__name__}")

    def _synth_if(self, ctx: Ctx, cond, then, els) -> tuple[Type, Constraint]:
        t_cond, c0 = self.synth(ctx, cond)
        if not (isinstance(t_cond, RBase) and t_cond.sort == BOOL):
            raise ShapeMismatch("if condition is not Bool")
        fact = reflect(cond) or logic.TRUE
        t_then, c_t = self.synth(ctx, then)
        that = self.fresh(ctx, t_then)
        c_then = self._branch_fact(ctx, fact, cand([c_t, self.sub(ctx, t_then, that)]))
        c_els_inner = self.check(ctx, els, that)
        c_else = self._branch_fact(ctx, logic.neg(fact), c_els_inner)
        return that, cand([c0, c_then, c_else])

    # -- application spines ------------------------------------------------------

    def app_check(self, ctx: Ctx, t: Type, e: CoreExpr, t_out: Type) -> Constraint:
        match t:
            case IFun(x, tx, cod):
                z = self.supply.fresh(x)
                c = self.app_check(ctx.ghost(z, tx), subst_type(cod, x, Var(z)), e, t_out)
                return self.genexists(z, tx, c)
            case DFun(x, tx, cod):
                refl = reflect(e)
                if refl is not None:
                    c1 = self.check(ctx, e, tx)
                    c2 = self.sub(ctx, subst_type(cod, x, refl), t_out)
                    return cand([c1, c2])
                te, c1 = self.synth(ctx, e)
                c2 = self.sub(ctx, te, tx)
                y = self.supply.fresh("y")
                c3 = self.sub(ctx.ghost(y, te), subst_type(cod, x, Var(y)), t_out)
                return cand([c1, c2, self.genimp(y, te, c3)])
        raise NotAFunction(f"applied a term of {type(t).__name__} type")

    def app_synth(self, ctx: Ctx, t: Type, e: CoreExpr) -> tuple[Type, Constraint]:
        match t:
            case IFun(x, tx, cod):
                z = self.supply.fresh(x)
                ctx2 = ctx.ghost(z, tx)
                t_out, c1 = self.app_synth(ctx2, subst_type(cod, x, Var(z)), e)
                that = self.fresh(ctx, t_out)
                c2 = self.sub(ctx2, t_out, that)
                return that, self.genexists(z, tx, cand([c1, c2]))
            case DFun(x, tx, cod):
                refl = reflect(e)
                if refl is not None:
                    c = self.check(ctx, e, tx)
                    return subst_type(cod, x, refl), c
                te, c1 = self.synth(ctx, e)
                c2 = self.sub(ctx, te, tx)
                y = self.supply.fresh("y")
                that = self.fresh(ctx, cod)
                c3 = self.sub(ctx.ghost(y, te), subst_type(cod, x, Var(y)), that)
                return that, cand([c1, c2, self.genimp(y, te, c3)])
        raise NotAFunction(f"applied a term of {type(t).__name__} type")


# ---------------------------------------------------------------------------
# Context embedding


def embed_ctx(ctx: Ctx, c: Constraint, supply: NameSupply) -> Constraint:
    """Wrap the constraint in universal guards for every base-sorted binder,
    corporeal and ghost alike, outermost binder first."""
    for name, sort, refinement in reversed(ctx.base_bindings()):
        c = forall_imp(name, sort, refinement, c, supply)
    return c


# ---------------------------------------------------------------------------
# Pre-solving trivially unconstrained kappas


def presolve_unconstrained(c: Constraint, registry: Registry) -> Constraint:
    """Kappas with no head occurrence are solved to true up front: they are
    caller-supplied facts, and true is the strongest sound choice."""
    heads = head_vars(c)
    for name in sorted(pred_vars(c)):
        pv = registry.get(name)
        if pv is not None and pv.kind == KAPPA and name not in heads:
            params = tuple(p for p, _ in pv.params)
            c = subst_so(c, name, params, logic.TRUE)
    return simplify(c)


def constrain_definition(
    ctx: Ctx, body: CoreExpr, sig: Type | None, supply: NameSupply
) -> CgenOutput:
    """One EHC per checked definition: check against the signature (the
    definition's own name already bound for recursion), then close over the
    declaration context."""
    gen = Cgen(supply)
    if sig is not None:
        c = gen.check(ctx, body, sig)
        t: Type = sig
    else:
        t, c = gen.synth(ctx, body)
    c = embed_ctx(ctx, c, supply)
    return CgenOutput(constraint=c, type=t, registry=gen.registry)
