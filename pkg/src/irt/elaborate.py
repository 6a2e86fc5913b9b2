"""Elaboration: surface programs to fully explicit core terms.

Three jobs, all driven by declared signatures and base shapes only (no
refinement reasoning):

  * infer unrefined shapes for unannotated lambda and let binders, by
    unification against signatures and primitive types;
  * insert an implicit lambda wherever a term is checked against an
    implicit function type;
  * unpack every term of implicit pair type before it is used, a
    restricted A-normalization.
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
    SArrow,
    SBase,
    SVar as ShVar,
    SAll,
    Shape,
    TAll,
    TApp,
    TLam,
    TVar,
    Type,
    TyVarEntry,
    Unpack,
    freshen_type,
    shape,
    wf,
)
from .logic import BOOL, INT, UNIT, Sort
from .names import NameSupply
from .surface import (
    AssumeSig,
    CheckedSig,
    Def,
    SApp,
    SConst,
    SExpr,
    SIf,
    SLam,
    SLet,
    SVar,
    SurfaceProgram,
)


class ElabError(Exception):
    pass


class ShapeMismatch(ElabError):
    pass


class MissingAnnotation(ElabError):
    pass


class UnboundVariable(ElabError):
    pass


# ---------------------------------------------------------------------------
# Implicit-aware shapes with unification variables.  Implicit functions are
# dropped (they are instantiated silently); implicit pairs are kept, marked,
# so the unpack pass can see them.


class UV:
    _next = 0

    def __init__(self):
        UV._next += 1
        self.id = UV._next
        self.ref: "IShape | None" = None

    def __repr__(self):
        return f"?u{self.id}" if self.ref is None else repr(self.ref)


@dataclass
class IBase:
    sort: Sort


@dataclass
class IArrow:
    dom: "IShape"
    cod: "IShape"


@dataclass
class IPairS:
    ghost_sort: Sort
    snd: "IShape"


@dataclass
class ITyVar:
    name: str


@dataclass
class IAll:
    var: str
    body: "IShape"


IShape = UV | IBase | IArrow | IPairS | ITyVar | IAll


def resolve(s: IShape) -> IShape:
    while isinstance(s, UV) and s.ref is not None:
        s = s.ref
    return s


def ishape_of_type(t: Type) -> IShape:
    match t:
        case RBase(_, s, _):
            return IBase(s)
        case DFun(_, dom, cod):
            return IArrow(ishape_of_type(dom), ishape_of_type(cod))
        case IFun(_, _, cod):
            return ishape_of_type(cod)
        case IPair(_, fst, snd):
            gs = fst.sort if isinstance(fst, RBase) else INT
            return IPairS(gs, ishape_of_type(snd))
        case TVar(a):
            return ITyVar(a)
        case TAll(a, body):
            return IAll(a, ishape_of_type(body))
    raise TypeError(t)


def _occurs(u: UV, s: IShape) -> bool:
    s = resolve(s)
    match s:
        case UV():
            return s is u
        case IArrow(d, c):
            return _occurs(u, d) or _occurs(u, c)
        case IPairS(_, snd):
            return _occurs(u, snd)
        case IAll(_, b):
            return _occurs(u, b)
        case _:
            return False


def unify(a: IShape, b: IShape, what: str = "") -> None:
    a, b = resolve(a), resolve(b)
    if a is b:
        return
    if isinstance(a, UV):
        if _occurs(a, b):
            raise ShapeMismatch(f"infinite shape {what}")
        a.ref = b
        return
    if isinstance(b, UV):
        unify(b, a, what)
        return
    match (a, b):
        case (IBase(s1), IBase(s2)) if s1 == s2:
            return
        case (IArrow(d1, c1), IArrow(d2, c2)):
            unify(d1, d2, what)
            unify(c1, c2, what)
            return
        case (IPairS(g1, s1), IPairS(g2, s2)) if g1 == g2:
            unify(s1, s2, what)
            return
        case (ITyVar(x), ITyVar(y)) if x == y:
            return
        case (IAll(x, b1), IAll(_, b2)):
            unify(b1, b2, what)
            return
    raise ShapeMismatch(f"shape mismatch{': ' + what if what else ''}: {a!r} vs {b!r}")


def ishape_to_shape(s: IShape) -> Shape:
    s = resolve(s)
    match s:
        case UV():
            raise MissingAnnotation(
                "could not infer an unrefined shape; add a let annotation"
            )
        case IBase(sort):
            return SBase(sort)
        case IArrow(d, c):
            return SArrow(ishape_to_shape(d), ishape_to_shape(c))
        case IPairS(_, snd):
            return ishape_to_shape(snd)  # erasure drops the ghost component
        case ITyVar(a):
            return ShVar(a)
        case IAll(a, b):
            return SAll(a, ishape_to_shape(b))
    raise TypeError(s)


def ishape_of_shape(s: Shape) -> IShape:
    match s:
        case SBase(sort):
            return IBase(sort)
        case SArrow(d, c):
            return IArrow(ishape_of_shape(d), ishape_of_shape(c))
        case ShVar(a):
            return ITyVar(a)
        case SAll(a, b):
            return IAll(a, ishape_of_shape(b))
    raise TypeError(s)


PRIM_ISHAPES = {op: ishape_of_type(t) for op, t in core.PRIM_TYPES.items()}


# ---------------------------------------------------------------------------
# Signature loading


def load_signatures(prog: SurfaceProgram, supply: NameSupply) -> Ctx:
    """Bind assumed and checked signatures corporeally, in declaration
    order, well-formedness-checking each against the context so far."""
    ctx = core.EMPTY_CTX
    for d in prog.decls:
        if not isinstance(d, (AssumeSig, CheckedSig)):
            continue
        t = freshen_type(d.type, supply)
        diags = wf(ctx, t)
        if diags:
            raise ElabError(
                f"{d.span.line}:{d.span.col}: ill-formed signature for {d.name}: "
                + "; ".join(map(str, diags))
            )
        ctx = ctx.corporeal(d.name, t)
    return ctx


# ---------------------------------------------------------------------------
# The annotation / implicit-lambda pass


@dataclass
class Elaborator:
    supply: NameSupply
    sig_types: dict[str, Type] = field(default_factory=dict)

    def elaborate_def(self, d: Def, sig: Type | None) -> CoreExpr:
        env: dict[str, IShape] = {n: ishape_of_type(t) for n, t in self.sig_types.items()}
        e = self._elab(d.expr, sig, env)
        e = _materialize(e)
        e = insert_unpacks(e, self.sig_types, self.supply)
        return e

    # -- pass A: shapes, implicit lambdas, type abstractions ---------------

    def _elab(self, e: SExpr, expected: Type | None, env: dict[str, IShape]) -> CoreExpr:
        # leading implicit layers of the expected type wrap the whole term
        if isinstance(expected, IFun):
            body = self._elab(e, expected.cod, env)
            return ILam(expected.param, expected.dom, body)
        if isinstance(expected, TAll):
            inner = self._elab(e, expected.body, env)
            return TLam(expected.var, inner)
        if isinstance(expected, IPair):
            # pair introduction is refinement-level; annotate against the snd
            return self._elab(e, expected.snd, env)

        match e:
            case SConst(v, _):
                return Const(v)
            case SVar(name, span):
                if name in core.PRIM_TYPES:
                    return self._instantiate(Prim(name), PRIM_ISHAPES[name])[0]
                if name not in env:
                    raise UnboundVariable(f"{span.line}:{span.col}: unbound variable {name}")
                return self._instantiate(EVar(name), env[name])[0]
            case SLam(param, body, span):
                if isinstance(expected, DFun):
                    dom_sh = ishape_of_type(expected.dom)
                    cod = core.subst_type(expected.cod, expected.param, logic.Var(param))
                    body_c = self._elab(body, cod, {**env, param: dom_sh})
                    return Lam(param, dom_sh, body_c)
                if expected is not None and not isinstance(expected, (TVar,)):
                    raise ShapeMismatch(
                        f"{span.line}:{span.col}: lambda checked against non-function type"
                    )
                dom_sh = UV()
                body_c = self._elab(body, None, {**env, param: dom_sh})
                return Lam(param, dom_sh, body_c)
            case SApp(_, _, _):
                return self._elab_app(e, expected, env)
            case SLet(x, annot, bound, body, span):
                if annot is not None:
                    annot_t = freshen_type(annot, self.supply)
                    bound_c = self._elab(bound, annot_t, env)
                    body_c = self._elab(body, expected, {**env, x: ishape_of_type(annot_t)})
                    return Let(x, annot_t, bound_c, body_c)
                bound_c = self._elab(bound, None, env)
                bound_sh = self._ishape_of(bound_c, env)
                body_c = self._elab(body, expected, {**env, x: bound_sh})
                return Let(x, bound_sh, bound_c, body_c)
            case SIf(cond, then, els, _):
                cond_c = self._elab(cond, None, env)
                unify(self._ishape_of(cond_c, env), IBase(BOOL), "if condition")
                then_c = self._elab(then, expected, env)
                els_c = self._elab(els, expected, env)
                if expected is None:
                    unify(self._ishape_of(then_c, env), self._ishape_of(els_c, env), "if branches")
                return If(cond_c, then_c, els_c)
        raise TypeError(e)

    def _elab_app(self, e: SApp, expected: Type | None, env: dict[str, IShape]) -> CoreExpr:
        fn_c = self._elab(e.fn, None, env)
        arg_c = self._elab(e.arg, None, env)
        fn_sh = resolve(self._ishape_of(fn_c, env))
        while isinstance(fn_sh, IPairS):  # the unpack pass will name the snd
            fn_sh = resolve(fn_sh.snd)
        arg_sh = self._ishape_of(arg_c, env)
        arg_sh = resolve(arg_sh)
        if isinstance(arg_sh, IPairS):
            arg_sh = self._unwrap_if_needed(fn_sh, arg_sh)
        cod = UV()
        unify(fn_sh, IArrow(arg_sh, cod), "application")
        out = EApp(fn_c, arg_c)
        if expected is not None:
            unify(cod, ishape_of_type(expected), "application result")
        return out

    def _unwrap_if_needed(self, fn_sh: IShape, arg_sh: IPairS) -> IShape:
        # a pair argument flowing into a pair-typed parameter stays packed
        fn_sh = resolve(fn_sh)
        if isinstance(fn_sh, IArrow) and isinstance(resolve(fn_sh.dom), IPairS):
            return arg_sh
        return arg_sh.snd

    def _instantiate(self, head: CoreExpr, sh: IShape) -> tuple[CoreExpr, IShape]:
        """Insert type applications for leading foralls, instantiating each
        variable with a fresh shape unknown resolved by unification."""
        sh = resolve(sh)
        while isinstance(sh, IAll):
            u = UV()
            sh = _subst_ityvar(sh.body, sh.var, u)
            head = TApp(head, u)  # materialized to a Shape later
            sh = resolve(sh)
        return head, sh

    # shape synthesis over already-elaborated subterms
    def _ishape_of(self, e: CoreExpr, env: dict[str, IShape]) -> IShape:
        match e:
            case Const(v):
                if isinstance(v, bool):
                    return IBase(BOOL)
                if isinstance(v, int):
                    return IBase(INT)
                return IBase(UNIT)
            case Prim(op):
                return PRIM_ISHAPES[op]
            case EVar(x):
                if x not in env:
                    raise UnboundVariable(f"unbound variable {x}")
                return env[x]
            case Lam(p, annot, body):
                return IArrow(annot, self._ishape_of(body, {**env, p: annot}))
            case EApp(f, a):
                fsh = resolve(self._ishape_of(f, env))
                while isinstance(fsh, IPairS):
                    fsh = resolve(fsh.snd)
                ash = resolve(self._ishape_of(a, env))
                if isinstance(ash, IPairS):
                    ash = self._unwrap_if_needed(fsh, ash)
                cod = UV()
                unify(fsh, IArrow(ash, cod), "application")
                return cod
            case Let(x, annot, _, body):
                xs = ishape_of_type(annot) if isinstance(annot, (DFun, RBase, IFun, IPair, TVar, TAll)) else annot
                return self._ishape_of(body, {**env, x: xs})
            case ILam(_, _, body):
                return self._ishape_of(body, env)
            case If(_, t, _):
                return self._ishape_of(t, env)
            case TLam(a, body):
                return IAll(a, self._ishape_of(body, env))
            case TApp(f, u):
                fsh = resolve(self._ishape_of(f, env))
                if isinstance(fsh, IAll):
                    return _subst_ityvar(fsh.body, fsh.var, u if isinstance(u, (UV,)) else ishape_of_shape(u))
                raise ShapeMismatch("type application of a non-polymorphic term")
            case Unpack(_, x, scrut, body):
                ssh = resolve(self._ishape_of(scrut, env))
                inner = ssh.snd if isinstance(ssh, IPairS) else ssh
                return self._ishape_of(body, {**env, x: inner})
        raise TypeError(e)


def _subst_ityvar(s: IShape, a: str, repl: IShape) -> IShape:
    s = resolve(s)
    match s:
        case ITyVar(x):
            return repl if x == a else s
        case IArrow(d, c):
            return IArrow(_subst_ityvar(d, a, repl), _subst_ityvar(c, a, repl))
        case IPairS(g, snd):
            return IPairS(g, _subst_ityvar(snd, a, repl))
        case IAll(x, b):
            return s if x == a else IAll(x, _subst_ityvar(b, a, repl))
        case _:
            return s


def _materialize(e: CoreExpr) -> CoreExpr:
    """Resolve unification cells into concrete shapes."""
    match e:
        case Lam(p, annot, body):
            sh = annot if isinstance(annot, (SBase, SArrow, ShVar, SAll)) else ishape_to_shape(annot)
            return Lam(p, sh, _materialize(body))
        case Let(x, annot, bound, body):
            if isinstance(annot, (RBase, DFun, IFun, IPair, TVar, TAll)):
                a = annot
            elif isinstance(annot, (SBase, SArrow, ShVar, SAll)):
                a = annot
            else:
                a = ishape_to_shape(annot)
            return Let(x, a, _materialize(bound), _materialize(body))
        case EApp(f, a):
            return EApp(_materialize(f), _materialize(a))
        case ILam(x, t, body):
            return ILam(x, t, _materialize(body))
        case Unpack(g, x, s, b):
            return Unpack(g, x, _materialize(s), _materialize(b))
        case TLam(a, body):
            return TLam(a, _materialize(body))
        case TApp(f, u):
            sh = u if isinstance(u, (SBase, SArrow, ShVar, SAll)) else ishape_to_shape(u)
            return TApp(_materialize(f), sh)
        case If(c, t, f):
            return If(_materialize(c), _materialize(t), _materialize(f))
        case _:
            return e


# ---------------------------------------------------------------------------
# Unpack insertion: restricted A-normalization over core terms


def insert_unpacks(e: CoreExpr, sig_types: dict[str, Type], supply: NameSupply) -> CoreExpr:
    """Unpack every implicit-pair-typed term at its use sites.  Driven by a
    shape oracle over declared signatures only; idempotent."""
    itypes = {n: ishape_of_type(t) for n, t in sig_types.items()}

    def ishape(e: CoreExpr, env: dict[str, IShape]) -> IShape:
        match e:
            case Const(v):
                return IBase(BOOL if isinstance(v, bool) else INT if isinstance(v, int) else UNIT)
            case Prim(op):
                return PRIM_ISHAPES[op]
            case EVar(x):
                return env.get(x, UV())
            case Lam(p, annot, body):
                psh = ishape_of_shape(annot) if isinstance(annot, (SBase, SArrow, ShVar, SAll)) else annot
                return IArrow(psh, ishape(body, {**env, p: psh}))
            case EApp(f, _):
                fsh = resolve(ishape(f, env))
                while isinstance(fsh, IPairS):
                    fsh = resolve(fsh.snd)
                if isinstance(fsh, IArrow):
                    return fsh.cod
                return UV()
            case Let(x, annot, bound, body):
                if isinstance(annot, (RBase, DFun, IFun, IPair, TVar, TAll)):
                    xs = ishape_of_type(annot)
                else:
                    xs = resolve(ishape(bound, env))
                    if isinstance(xs, IPairS):
                        xs = xs.snd
                return ishape(body, {**env, x: xs})
            case ILam(_, _, body):
                return ishape(body, env)
            case Unpack(_, x, scrut, body):
                ssh = resolve(ishape(scrut, env))
                inner = ssh.snd if isinstance(ssh, IPairS) else UV()
                return ishape(body, {**env, x: inner})
            case TLam(a, body):
                return IAll(a, ishape(body, env))
            case TApp(f, sh):
                fsh = resolve(ishape(f, env))
                if isinstance(fsh, IAll):
                    return _subst_ityvar(fsh.body, fsh.var, ishape_of_shape(sh))
                return UV()
            case If(_, t, _):
                return ishape(t, env)
        raise TypeError(e)

    def unpack_wrap(scrut: CoreExpr, env, use) -> CoreExpr:
        """unpack (g, y) = scrut in use(y), applied while scrut is a pair."""
        ssh = resolve(ishape(scrut, env))
        if not isinstance(ssh, IPairS):
            return use(scrut)
        ghost = supply.fresh("g")
        y = supply.fresh("y")
        inner_env = {**env, y: ssh.snd}
        return Unpack(ghost, y, scrut, unpack_wrap(EVar(y), inner_env, use))

    def go(e: CoreExpr, env: dict[str, IShape]) -> CoreExpr:
        match e:
            case EApp(f, a):
                f2 = go(f, env)
                a2 = go(a, env)
                fsh = resolve(ishape(f2, env))
                expects_pair = isinstance(fsh, IArrow) and isinstance(resolve(fsh.dom), IPairS)
                if isinstance(resolve(ishape(f2, env)), IPairS):
                    return unpack_wrap(f2, env, lambda fv: go(EApp(fv, a2), env))
                if not expects_pair and isinstance(resolve(ishape(a2, env)), IPairS):
                    return unpack_wrap(a2, env, lambda av: EApp(f2, av))
                return EApp(f2, a2)
            case Let(x, annot, bound, body):
                bound2 = go(bound, env)
                bsh = resolve(ishape(bound2, env))
                annot_is_pair = isinstance(annot, IPair)
                if isinstance(bsh, IPairS) and not annot_is_pair:
                    ghost = supply.fresh("g")
                    body2 = go(body, {**env, x: bsh.snd})
                    return Unpack(ghost, x, bound2, body2)
                xs = ishape_of_type(annot) if isinstance(annot, (RBase, DFun, IFun, IPair, TVar, TAll)) else bsh
                return Let(x, annot, bound2, go(body, {**env, x: xs}))
            case Lam(p, annot, body):
                psh = ishape_of_shape(annot) if isinstance(annot, (SBase, SArrow, ShVar, SAll)) else annot
                return Lam(p, annot, go(body, {**env, p: psh}))
            case ILam(x, t, body):
                return ILam(x, t, go(body, env))
            case Unpack(g, x, scrut, body):
                scrut2 = go(scrut, env)
                ssh = resolve(ishape(scrut2, env))
                inner = ssh.snd if isinstance(ssh, IPairS) else UV()
                return Unpack(g, x, scrut2, go(body, {**env, x: inner}))
            case TLam(a, body):
                return TLam(a, go(body, env))
            case TApp(f, sh):
                return TApp(go(f, env), sh)
            case If(c, t, f):
                c2 = go(c, env)
                if isinstance(resolve(ishape(c2, env)), IPairS):
                    return unpack_wrap(c2, env, lambda cv: If(cv, go(t, env), go(f, env)))
                return If(c2, go(t, env), go(f, env))
            case _:
                return e

    return go(e, dict(itypes))


# ---------------------------------------------------------------------------
# Standalone implicit-lambda insertion (the elaborator applies the same
# logic through expected types; this is the syntactic wrapper form)


def insert_implicit_lambdas(e: CoreExpr, t: Type) -> CoreExpr:
    match t:
        case IFun(x, dom, cod):
            return ILam(x, dom, insert_implicit_lambdas(e, cod))
        case DFun(x, _, cod) if isinstance(e, Lam):
            cod2 = core.subst_type(cod, x, logic.Var(e.param))
            return Lam(e.param, e.annot, insert_implicit_lambdas(e.body, cod2))
        case TAll(a, body) if isinstance(e, TLam):
            return TLam(e.var, insert_implicit_lambdas(e.body, body))
        case _:
            return e


# ---------------------------------------------------------------------------
# Whole-program elaboration


@dataclass
class ElaboratedDef:
    name: str
    sig: Type | None
    body: CoreExpr
    span: object


def elaborate_program(prog: SurfaceProgram, supply: NameSupply) -> tuple[Ctx, list[ElaboratedDef]]:
    ctx = load_signatures(prog, supply)
    sig_types = {
        e.name: e.type for e in ctx.entries if isinstance(e, (Corporeal, Ghost))
    }
    for op, t in core.PRIM_TYPES.items():
        sig_types.setdefault(op, t)
    out = []
    for d in prog.decls:
        if not isinstance(d, Def):
            continue
        sig = sig_types.get(d.name)
        if sig is None and _mentions(d.expr, d.name):
            raise ElabError(
                f"{d.span.line}:{d.span.col}: recursive definition {d.name} "
                "requires a type signature"
            )
        elab = Elaborator(supply, dict(sig_types))
        body = elab.elaborate_def(d, sig)
        _check_ghost_discipline(body)
        out.append(ElaboratedDef(d.name, sig, body, d.span))
    return ctx, out


def _mentions(e: SExpr, name: str) -> bool:
    match e:
        case SVar(n, _):
            return n == name
        case SConst(_, _):
            return False
        case SLam(p, b, _):
            return p != name and _mentions(b, name)
        case SApp(f, a, _):
            return _mentions(f, name) or _mentions(a, name)
        case SLet(x, _, bound, body, _):
            return _mentions(bound, name) or (x != name and _mentions(body, name))
        case SIf(c, t, f, _):
            return any(_mentions(x, name) for x in (c, t, f))
    raise TypeError(e)


def _check_ghost_discipline(e: CoreExpr, ghosts: frozenset[str] = frozenset()):
    """Ghost binders introduced by elaboration never occur in term position."""
    match e:
        case EVar(x):
            if x in ghosts:
                raise ElabError(f"ghost variable {x} used in term position")
        case Lam(p, _, body):
            _check_ghost_discipline(body, ghosts - {p})
        case EApp(f, a):
            _check_ghost_discipline(f, ghosts)
            _check_ghost_discipline(a, ghosts)
        case Let(x, _, bound, body):
            _check_ghost_discipline(bound, ghosts)
            _check_ghost_discipline(body, ghosts - {x})
        case ILam(x, _, body):
            _check_ghost_discipline(body, ghosts | {x})
        case Unpack(g, x, scrut, body):
            _check_ghost_discipline(scrut, ghosts)
            _check_ghost_discipline(body, (ghosts | {g}) - {x})
        case TLam(_, body):
            _check_ghost_discipline(body, ghosts)
        case TApp(f, _):
            _check_ghost_discipline(f, ghosts)
        case If(c, t, f):
            for x in (c, t, f):
                _check_ghost_discipline(x, ghosts)
        case _:
            pass
