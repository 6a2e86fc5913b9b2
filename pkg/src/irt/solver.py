"""The four-step solving pipeline.

Step 1 skolemizes existentials into guard-only Skolem predicates plus
inhabitation side conditions; step 2 eliminates refinement kappas one by one
via their strongest solutions; step 3 solves the Skolem predicates through
their greatest-fixed-point defining constraints, flattened by a pluggable
quantifier elimination; step 4 discharges the side conditions and hands the
residual VC to the validity oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter

from . import logic
from .ehc import (
    CAnd,
    CExists,
    CForall,
    CHead,
    CFALSE,
    CTRUE,
    Constraint,
    KApp,
    KAPPA,
    PI,
    PredVarId,
    Registry,
    cand,
    cycles,
    deps,
    freshen,
    noside,
    pred_vars,
    sides,
    simplify,
    subst_so,
)
from .logic import FALSE, TRUE, Expr, Sort, Var, conj, eq, subst as expr_subst
from .names import NameSupply
from .qe import QeProcedure

# re-exported here because they are part of this stage's contract
__all__ = [
    "poke",
    "noside",
    "sides",
    "scoped",
    "sol_k",
    "elim_k",
    "elims",
    "kappa_elimination_order",
    "demorgan",
    "def_constr",
    "sol_p",
    "elim_qe",
    "elim_e",
    "safe",
    "SolBody",
    "SEx",
    "SOr",
    "SLeaf",
    "PiRegistry",
    "CyclicKappa",
    "SafeResult",
]


class CyclicKappa(Exception):
    def __init__(self, kappas):
        super().__init__(
            "cyclic predicate variables (add a type signature to break the cycle): "
            + ", ".join(sorted(kappas))
        )
        self.kappas = frozenset(kappas)


@dataclass
class PiRegistry:
    """Skolem predicates introduced by poke: name -> id and side condition."""

    vars: dict[str, PredVarId] = field(default_factory=dict)
    side_conditions: dict[str, Constraint] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Step 1: skolemization


def poke(scope: tuple[tuple[str, Sort], ...], c: Constraint,
         supply: NameSupply | None = None,
         registry: PiRegistry | None = None) -> tuple[Constraint, PiRegistry]:
    supply = supply or NameSupply()
    registry = registry if registry is not None else PiRegistry()

    def go(scope: tuple[tuple[str, Sort], ...], c: Constraint) -> Constraint:
        match c:
            case CExists(n, s, body):
                pi_name = supply.fresh(f"pi.{logic.stemmed(n)}")
                params = ((n, s),) + scope
                pv = PredVarId(pi_name, PI, params, skolem_binder=n)
                registry.vars[pi_name] = pv
                args = tuple(Var(x) for x, _ in params)
                side = CExists(n, s, CHead(KApp(pi_name, args)))
                registry.side_conditions[pi_name] = side
                clause = CForall(n, s, KApp(pi_name, args), go(scope + ((n, s),), body))
                return cand([clause, side])
            case CForall(x, s, guard, body):
                return CForall(x, s, guard, go(((x, s),) + scope, body))
            case CAnd(parts):
                return CAnd(tuple(go(scope, p) for p in parts))
            case CHead(_):
                return c
        raise TypeError(c)

    return go(scope, c), registry


# ---------------------------------------------------------------------------
# Step 2: kappa elimination


@dataclass(frozen=True)
class SEx:
    var: str
    sort: Sort
    guard: object  # Prop
    body: "SolBody"


@dataclass(frozen=True)
class SOr:
    parts: tuple["SolBody", ...]


@dataclass(frozen=True)
class SLeaf:
    pred: Expr


SolBody = SEx | SOr | SLeaf

SOL_FALSE = SLeaf(FALSE)


def _sor(parts: list[SolBody]) -> SolBody:
    flat: list[SolBody] = []
    for p in parts:
        if isinstance(p, SOr):
            flat.extend(p.parts)
        elif p == SOL_FALSE:
            continue
        else:
            flat.append(p)
    if not flat:
        return SOL_FALSE
    if len(flat) == 1:
        return flat[0]
    return SOr(tuple(flat))


def scoped(kappa: str, c: Constraint) -> Constraint:
    """The smallest guard-prefixed subtree containing all kappa occurrences."""
    match c:
        case CAnd(parts):
            hits = [p for p in parts if kappa in pred_vars(p)]
            if len(hits) == 1:
                return scoped(kappa, hits[0])
            return c
        case CForall(x, s, guard, body):
            in_guard = isinstance(guard, KApp) and guard.var == kappa
            if not in_guard:
                return CForall(x, s, guard, scoped(kappa, body))
            return c
        case _:
            return c


def _scoped_body(kappa: str, c: Constraint) -> Constraint:
    """scoped() with the collected universal prefix stripped: the subtree the
    strongest solution is computed from."""
    match c:
        case CAnd(parts):
            hits = [p for p in parts if kappa in pred_vars(p)]
            if len(hits) == 1:
                return _scoped_body(kappa, hits[0])
            return c
        case CForall(_, _, guard, body):
            in_guard = isinstance(guard, KApp) and guard.var == kappa
            if not in_guard:
                return _scoped_body(kappa, body)
            return c
        case _:
            return c


def sol_k(kappa: str, c: Constraint, registry: Registry) -> SolBody:
    """Strongest solution: universals flip to existentials, conjunctions to
    disjunctions, matching heads to parameter equalities, other heads to
    false."""
    params = [p for p, _ in registry[kappa].params]

    def go(c: Constraint) -> SolBody:
        match c:
            case CForall(x, s, guard, body):
                inner = go(body)
                if inner == SOL_FALSE or (not isinstance(guard, KApp) and guard == FALSE):
                    return SOL_FALSE
                return SEx(x, s, guard, inner)
            case CAnd(parts):
                return _sor([go(p) for p in parts])
            case CHead(KApp(var, args)) if var == kappa:
                return SLeaf(conj([eq(Var(p), a) for p, a in zip(params, args)]))
            case CHead(_):
                return SOL_FALSE
            case CExists(_, _, _):
                raise ValueError("sol_k expects a noside constraint")
        raise TypeError(c)

    return go(c)


def _apply_sol(sol: SolBody, params: tuple[str, ...], args: tuple[Expr, ...],
               supply: NameSupply) -> SolBody:
    """Instantiate a solution body at an application site, freshening its
    binders to keep the uniqueness invariant."""
    env = dict(zip(params, args))

    def go(b: SolBody, ren: dict[str, Expr]) -> SolBody:
        match b:
            case SLeaf(p):
                return SLeaf(expr_subst(p, ren))
            case SOr(parts):
                return SOr(tuple(go(x, ren) for x in parts))
            case SEx(x, s, guard, body):
                x2 = supply.fresh(x)
                ren2 = {**ren, x: Var(x2)}
                if isinstance(guard, KApp):
                    g2 = KApp(guard.var, tuple(expr_subst(a, ren2) for a in guard.args))
                else:
                    g2 = expr_subst(guard, ren2)
                return SEx(x2, s, g2, go(body, ren2))
        raise TypeError(b)

    return go(sol, dict(env))


def demorgan(x: str, sort: Sort, body: SolBody, cont: Constraint,
             supply: NameSupply) -> Constraint:
    """Rewrite a universally guarded solution body into Horn form: guard
    existentials hoist to universals, disjunctions split the clause."""
    match body:
        case SEx(y, s, guard, inner):
            return CForall(y, s, guard, demorgan(x, sort, inner, cont, supply))
        case SOr(parts):
            out = [demorgan(x, sort, parts[0], cont, supply)]
            for p in parts[1:]:
                out.append(demorgan(x, sort, p, freshen(cont, supply), supply))
            return cand(out)
        case SLeaf(p):
            return CForall(x, sort, p, cont)
    raise TypeError(body)


def _elim_sol(rho: dict[str, tuple[tuple[str, ...], SolBody]], c: Constraint,
              supply: NameSupply) -> Constraint:
    match c:
        case CForall(x, s, KApp(var, args), body) if var in rho:
            params, sol = rho[var]
            inst = _apply_sol(sol, params, args, supply)
            return demorgan(x, s, inst, _elim_sol(rho, body, supply), supply)
        case CForall(x, s, guard, body):
            return CForall(x, s, guard, _elim_sol(rho, body, supply))
        case CAnd(parts):
            return CAnd(tuple(_elim_sol(rho, p, supply) for p in parts))
        case CHead(KApp(var, _)) if var in rho:
            return CTRUE
        case CHead(_):
            return c
        case CExists(_, _, _):
            return c  # side conditions carry no kappas
    raise TypeError(c)


def elim_k(kappa: str, c: Constraint, registry: Registry,
           supply: NameSupply) -> Constraint:
    body = _scoped_body(kappa, c)
    sol = sol_k(kappa, noside(body), registry)
    params = tuple(p for p, _ in registry[kappa].params)
    return _elim_sol({kappa: (params, sol)}, c, supply)


def kappa_elimination_order(c: Constraint, registry: Registry) -> list[str]:
    """Reverse topological order of the dependency graph: a kappa appearing
    under another's guard is eliminated first."""
    present = {
        v for v in pred_vars(c) if v in registry and registry[v].kind == KAPPA
    }
    edges = [(a, b) for a, b in deps(c) if a in present and b in present]
    ts = TopologicalSorter({v: set() for v in present})
    for a, b in edges:
        ts.add(a, b)  # b (the dependency) before a
    try:
        return list(ts.static_order())
    except CycleError as exc:
        raise CyclicKappa(present) from exc


def elims(kappas: list[str], c: Constraint, registry: Registry,
          supply: NameSupply) -> Constraint:
    for k in kappas:
        c = elim_k(k, c, registry, supply)
    return c


# ---------------------------------------------------------------------------
# Step 3: Skolem variables


def def_constr(pi: str, c: Constraint) -> Constraint:
    """The defining constraint: conjunction of every body guarded by pi,
    outer binders dropped (they are the Skolem predicate's parameters)."""
    out: list[Constraint] = []

    def go(c: Constraint):
        match c:
            case CForall(_, _, KApp(var, _), body) if var == pi:
                out.append(body)
            case CForall(_, _, _, body):
                go(body)
            case CAnd(parts):
                for p in parts:
                    go(p)
            case CExists(_, _, body):
                go(body)
            case CHead(_):
                pass

    go(c)
    return cand(out)


def sol_p(qe: QeProcedure, seen: frozenset[str], sigma: dict[str, Constraint],
          c: Constraint, registry: Registry, supply: NameSupply) -> Constraint:
    """Eliminate nested Skolem guards from a defining constraint, treating
    already-seen Skolems as true (recursive Skolems are redundant)."""

    def is_pi(name: str) -> bool:
        return name in sigma

    match c:
        case CForall(n, s, KApp(var, args), body) if is_pi(var):
            if var in seen:
                return CForall(n, s, TRUE, sol_p(qe, seen, sigma, body, registry, supply))
            p = _pi_solution(qe, seen | {var}, sigma, var, registry, supply)
            params = tuple(x for x, _ in registry[var].params)
            p_site = expr_subst(p, dict(zip(params, args)))
            return CForall(n, s, p_site, sol_p(qe, seen, sigma, body, registry, supply))
        case CForall(x, s, guard, body):
            return CForall(x, s, guard, sol_p(qe, seen, sigma, body, registry, supply))
        case CAnd(parts):
            return CAnd(tuple(sol_p(qe, seen, sigma, p, registry, supply) for p in parts))
        case CExists(x, s, body):
            return CExists(x, s, sol_p(qe, seen, sigma, body, registry, supply))
        case CHead(_):
            return c
    raise TypeError(c)


def _pi_solution(qe: QeProcedure, seen: frozenset[str], sigma: dict[str, Constraint],
                 pi: str, registry: Registry, supply: NameSupply) -> Expr:
    scope = frozenset(x for x, _ in registry[pi].params)
    solved = sol_p(qe, seen, sigma, sigma[pi], registry, supply)
    return qe.eliminate(solved, scope)


def elim_qe(qe: QeProcedure, pis: list[str], sigma: dict[str, Constraint],
            c: Constraint, registry: Registry, supply: NameSupply
            ) -> tuple[Constraint, dict[str, Expr]]:
    """Substitute flattened solutions for every Skolem guard.  Side-condition
    heads keep their applications so the witness check downstream can still
    tell which relation it is inspecting; the solutions map travels along."""
    solutions: dict[str, Expr] = {}
    for pi in pis:
        solutions[pi] = _pi_solution(qe, frozenset({pi}), sigma, pi, registry, supply)

    def go(c: Constraint) -> Constraint:
        match c:
            case CForall(n, s, KApp(var, args), body) if var in solutions:
                params = tuple(x for x, _ in registry[var].params)
                p_site = expr_subst(solutions[var], dict(zip(params, args)))
                return CForall(n, s, p_site, go(body))
            case CForall(x, s, guard, body):
                return CForall(x, s, guard, go(body))
            case CAnd(parts):
                return CAnd(tuple(go(p) for p in parts))
            case CExists(_, _, _):
                return c
            case CHead(_):
                return c
        raise TypeError(c)

    return go(c), solutions


@dataclass
class SideFailure:
    pi: str
    binder: str
    reason: str


def elim_e(qe: QeProcedure, c: Constraint, solutions: dict[str, Expr],
           sigma: dict[str, Constraint], registry: Registry
           ) -> tuple[Constraint, list[SideFailure]]:
    """Replace each inhabitation side condition by its witness-checked
    predicate; record the ones that come out false."""
    failures: list[SideFailure] = []

    def go(c: Constraint, scope: frozenset[str]) -> Constraint:
        match c:
            case CForall(x, s, guard, body):
                return CForall(x, s, guard, go(body, scope | {x}))
            case CAnd(parts):
                return CAnd(tuple(go(p, scope) for p in parts))
            case CExists(n, _, CHead(KApp(var, args))) if var in solutions:
                params = tuple(x for x, _ in registry[var].params)
                p_site = expr_subst(solutions[var], dict(zip(params, args)))
                constrained = sigma.get(var, CTRUE) != CTRUE
                out = qe.witness(n, p_site, scope, constrained)
                if out == FALSE:
                    failures.append(SideFailure(var, n, "no witness in the equality solution"))
                return CHead(out)
            case CExists(n, _, CHead(p)) if not isinstance(p, KApp):
                out = qe.witness(n, p, scope, p != TRUE)
                if out == FALSE:
                    failures.append(SideFailure("-", n, "no witness in the equality solution"))
                return CHead(out)
            case CExists(_, _, _):
                raise ValueError("unexpected existential shape after elimination")
            case CHead(_):
                return c
        raise TypeError(c)

    return go(c, frozenset()), failures


# ---------------------------------------------------------------------------
# Step 4: putting it all together


@dataclass
class SafeStages:
    ehc: Constraint
    poked: Constraint
    nnf: Constraint
    sides: Constraint
    after_elims: Constraint
    sigma: dict[str, Constraint]
    pi_solutions: dict[str, Expr]
    vc: Constraint


@dataclass
class SafeResult:
    verdict: str  # Valid | Invalid | Unknown | Timeout
    reason: str | None
    side_failures: list[SideFailure]
    stages: SafeStages
    smt_output: str = ""


def safe(qe: QeProcedure, c: Constraint, registry: Registry,
         check_valid, supply: NameSupply | None = None) -> SafeResult:
    """poke, eliminate kappas, solve Skolems, discharge side conditions,
    then ask the validity oracle.  Soundness needs only a strengthening qe."""
    supply = supply or NameSupply()
    cyc = cycles(c)
    if cyc:
        raise CyclicKappa(cyc)

    poked, pireg = poke((), c, supply)
    for pv in pireg.vars.values():
        registry.declare(pv)
    nnf = noside(poked)
    side_part = sides(poked)

    order = kappa_elimination_order(poked, registry)
    c2 = simplify(elims(order, poked, registry, supply))

    pis = sorted(v for v in pred_vars(c2) if v in registry and registry[v].kind == PI)
    sigma = {pi: def_constr(pi, c2) for pi in pis}
    c3, solutions = elim_qe(qe, pis, sigma, c2, registry, supply)
    vc_raw, side_failures = elim_e(qe, c3, solutions, sigma, registry)
    vc = simplify(vc_raw)

    stages = SafeStages(
        ehc=c,
        poked=poked,
        nnf=nnf,
        sides=side_part,
        after_elims=c2,
        sigma=sigma,
        pi_solutions=solutions,
        vc=vc,
    )

    verdict, reason, smt_output = check_valid(vc)
    if verdict == "Invalid" and side_failures:
        reason = "FailedSideCondition"
    elif verdict == "Invalid":
        reason = "FailedVC"
    return SafeResult(verdict, reason, side_failures, stages, smt_output)
